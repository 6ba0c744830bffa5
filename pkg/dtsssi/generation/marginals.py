"""Distribution specs for the latent variables of the constructions.

A spec is either a finite support with probabilities,
    {"values": [0, 1], "probs": [0.5, 0.5]}
or a named family with positional parameters,
    {"family": "normal", "params": [0.0, 1.0]}
Draws always go through the quantile function so that they can be fed from counter based uniforms."""
import numpy as np
from scipy import stats

from dtsssi.core.errors import ConfigError

CONTINUOUS_FAMILIES = {
    # name: (number of params, frozen scipy distribution from params)
    'normal': (2, lambda mu, sigma: stats.norm(loc=mu, scale=sigma)),
    'uniform': (2, lambda a, b: stats.uniform(loc=a, scale=b - a)),
    'cauchy': (2, lambda x0, gamma: stats.cauchy(loc=x0, scale=gamma)),
    'student_t': (1, lambda nu: stats.t(df=nu)),
}
FINITE_FAMILIES = {
    'rademacher': (0, lambda: ([-1.0, 1.0], [0.5, 0.5])),
    'point': (1, lambda c: ([float(c)], [1.0])),
}
PROB_TOL = 1e-9


class Marginal(object):
    def __init__(self, values=None, probs=None, family=None, params=()):
        self.family = family
        self.params = tuple(float(x) for x in params)
        self.dist = None
        if family is not None:
            if values is not None or probs is not None:
                raise ConfigError('a marginal is either a named family or a finite support, not both')
            if family in FINITE_FAMILIES:
                n_params, make = FINITE_FAMILIES[family]
                self._check_n_params(n_params)
                values, probs = make(*self.params)
            elif family in CONTINUOUS_FAMILIES:
                n_params, make = CONTINUOUS_FAMILIES[family]
                self._check_n_params(n_params)
                self._check_family_params()
                self.dist = make(*self.params)
            else:
                known = sorted(CONTINUOUS_FAMILIES) + sorted(FINITE_FAMILIES)
                raise ConfigError(f'unknown marginal family "{family}", known families: {known}')
        if self.dist is None:
            self._init_finite(values, probs)

    def _check_n_params(self, n):
        if len(self.params) != n:
            raise ConfigError(f'family "{self.family}" takes {n} parameter(s), got {len(self.params)}')

    def _check_family_params(self):
        fam, par = self.family, self.params
        if fam in ('normal', 'cauchy') and par[1] <= 0:
            raise ConfigError(f'scale of "{fam}" must be positive')
        if fam == 'uniform' and not par[0] < par[1]:
            raise ConfigError('uniform(a, b) needs a < b')
        if fam == 'student_t' and par[0] <= 0:
            raise ConfigError('student_t needs positive degrees of freedom')

    def _init_finite(self, values, probs):
        if values is None:
            raise ConfigError('a marginal needs either "family" or "values"')
        values = np.asarray(values, dtype=np.float64)
        if probs is None:
            probs = np.full(len(values), 1.0 / len(values)) if len(values) else np.zeros(0)
        probs = np.asarray(probs, dtype=np.float64)
        if len(values) == 0 or values.shape != probs.shape:
            raise ConfigError('finite marginal needs equally long, nonempty "values" and "probs"')
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f'marginal probabilities must be nonnegative and sum to 1, got sum {probs.sum()}')
        # merge duplicates, drop null atoms, sort
        support, inverse = np.unique(values, return_inverse=True)
        merged = np.zeros(len(support))
        np.add.at(merged, inverse, probs)
        keep = merged > 0
        self.values = support[keep]
        self.probs = merged[keep] / merged[keep].sum()
        self.cum = np.cumsum(self.probs)
        self.cum[-1] = 1.0

    @property
    def finite(self):
        return self.dist is None

    def ppf(self, u):
        """Left continuous quantile function Q(u) = inf{x: F(x) >= u}."""
        u = np.asarray(u, dtype=np.float64)
        if not self.finite:
            return self.dist.ppf(u)
        idx = np.searchsorted(self.cum, u, side='left')
        return self.values[np.minimum(idx, len(self.values) - 1)]

    def mean(self):
        if self.finite:
            return float(self.values @ self.probs)
        return float(self.dist.mean())

    def var(self):
        if self.finite:
            return float(((self.values - self.mean()) ** 2) @ self.probs)
        return float(self.dist.var())

    def to_json(self):
        if self.family is not None:
            return {'family': self.family, 'params': list(self.params)}
        return {'values': self.values.tolist(), 'probs': self.probs.tolist()}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, Marginal):
            return data
        if not isinstance(data, dict):
            raise ConfigError(f'marginal spec must be a mapping, got {type(data).__name__}')
        unknown = set(data) - {'values', 'probs', 'family', 'params'}
        if unknown:
            raise ConfigError(f'unknown marginal field(s): {sorted(unknown)}')
        return cls(values=data.get('values'), probs=data.get('probs'),
                   family=data.get('family'), params=data.get('params', ()))

    def __repr__(self):
        if self.family is not None:
            return f'Marginal({self.family}{self.params})'
        return f'Marginal(values={self.values.tolist()}, probs={self.probs.tolist()})'
