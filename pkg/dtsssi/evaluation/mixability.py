"""Quantile functions, average quantile functionals and non-mixability certificates.

If Y_1 + Y_2 + Y_3 = 0 with Y_i / a_i ~ G_i, the average quantile functionals of the G_i over suitable
level windows satisfy a linear inequality in the a_i. Turning that inequality around gives constants
k_2, k_3 such that a_1 > k_2 a_2 + k_3 a_3 rules out any such coupling. The constants feed
finite range checks of the growth and minimum bounds every scaling function must obey."""
import logging
import math
from abc import ABC, abstractmethod
from collections import namedtuple
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize, stats

from dtsssi.core.padic import require_conforming
from dtsssi.generation.marginals import Marginal

QUAD_TOL = 1e-10
QUAD_MAX_EVALS = 2 ** 20
DYADIC_RESOLUTION = 1024
ZERO_SUM_TOL = 1e-12


def _check_level(t):
    if not 0 < t < 1:
        raise ValueError(f'quantile level must lie in (0, 1), got {t}')


def _check_window(c, d):
    _check_level(c)
    _check_level(d)
    if not c < d:
        raise ValueError(f'window needs c < d, got [{c}, {d}]')


def _step_average(values, cum, c, d):
    """Mean over [c, d] of the step function equal to values[i] on (cum[i-1], cum[i]]."""
    lower = np.concatenate([[0.0], cum[:-1]])
    width = np.clip(np.minimum(cum, d) - np.maximum(lower, c), 0.0, None)
    return float(values @ width) / (d - c)


class QuantileModel(ABC):
    """Left continuous generalized inverse Q(t) = inf{x: G(x) >= t} on t in (0, 1)."""

    def quantile(self, t):
        _check_level(t)
        return self._quantile(t)

    def average(self, c, d):
        """Average quantile functional (1 / (d - c)) * integral_c^d Q(t) dt."""
        _check_window(c, d)
        return self._average(c, d)

    @abstractmethod
    def _quantile(self, t):
        pass

    @abstractmethod
    def _average(self, c, d):
        pass

    @abstractmethod
    def negated(self):
        """Model of -Y for Y with this quantile function."""
        pass

    def concentrated_at_zero(self):
        """Q vanishes on every level j / 1024; mass off 0 below that resolution goes unseen."""
        levels = np.arange(1, DYADIC_RESOLUTION) / DYADIC_RESOLUTION
        return all(self.quantile(t) == 0 for t in levels)

    @staticmethod
    def from_json(data):
        if isinstance(data, QuantileModel):
            return data
        if set(data) == {'empirical'}:
            return EmpiricalQuantile(data['empirical'])
        if set(data) == {'analytic'}:
            spec = data['analytic']
            return AnalyticQuantile(spec['family'], spec.get('params', ()))
        # a marginal spec of a named family, as in the generator configs
        if 'family' in data and set(data) <= {'family', 'params'}:
            return AnalyticQuantile(data['family'], data.get('params', ()))
        raise ValueError(f'quantile model needs exactly one of "analytic" or "empirical" (or a named "family"), '
                         f'got {sorted(data)}')


class EmpiricalQuantile(QuantileModel):
    def __init__(self, sample):
        self.sample = np.sort(np.asarray(sample, dtype=np.float64))
        if len(self.sample) == 0:
            raise ValueError('empirical quantile model needs a nonempty sample')
        n = len(self.sample)
        self._cum = np.arange(1, n + 1) / n

    def _quantile(self, t):
        n = len(self.sample)
        # x_(ceil(n t)); rounding keeps t = i / n on the left step
        i = math.ceil(round(n * t, 9))
        return float(self.sample[min(max(i, 1), n) - 1])

    def _average(self, c, d):
        return _step_average(self.sample, self._cum, c, d)

    def negated(self):
        return EmpiricalQuantile(-self.sample)

    def to_json(self):
        return {'empirical': self.sample.tolist()}


class AnalyticQuantile(QuantileModel):
    """Named family, see `dtsssi.generation.marginals` for the families and their parameters."""

    def __init__(self, family, params=(), sign=1):
        self.family = family
        self.params = tuple(params)
        self.sign = sign
        self.marginal = Marginal(family=family, params=params)

    def _quantile(self, t):
        if self.sign < 0:
            # Q_{-Y}(t) = -Q_Y((1 - t)+), the right limit matters at atoms only
            return -self._right_quantile(1 - t)
        return float(self.marginal.ppf(t))

    def _right_quantile(self, t):
        if self.marginal.finite:
            idx = np.searchsorted(self.marginal.cum, t, side='right')
            return float(self.marginal.values[min(idx, len(self.marginal.values) - 1)])
        return float(self.marginal.ppf(t))

    def _average(self, c, d):
        if self.sign < 0:
            return -self.negated()._average(1 - d, 1 - c)
        m = self.marginal
        if m.finite:
            return _step_average(m.values, m.cum, c, d)
        if self.family == 'uniform':
            a, b = self.params
            return a + (b - a) * (c + d) / 2
        if self.family == 'normal':
            mu, sigma = self.params
            zc, zd = stats.norm.ppf([c, d])
            return mu + sigma * (stats.norm.pdf(zc) - stats.norm.pdf(zd)) / (d - c)
        return midpoint_average(m.ppf, c, d)

    def negated(self):
        return AnalyticQuantile(self.family, self.params, -self.sign)

    def to_json(self):
        assert self.sign > 0, 'negated analytic models have no JSON form'
        return {'analytic': {'family': self.family, 'params': list(self.params)}}


def midpoint_average(f, c, d, tol=QUAD_TOL, max_evals=QUAD_MAX_EVALS):
    """Mean of f over [c, d] by composite midpoint rules, tripling the panels until two estimates agree.

    Midpoints never touch the window ends, where quantile functions may jump or diverge."""
    panels, evals, previous = 1, 0, None
    while True:
        h = (d - c) / panels
        estimate = float(np.mean(f(c + h * (np.arange(panels) + 0.5))))
        evals += panels
        if previous is not None and abs(estimate - previous) * (d - c) < tol:
            return estimate
        if evals + 3 * panels > max_evals:
            logging.warning(f'midpoint quadrature on [{c}, {d}] stopped at {evals} evaluations before '
                            f'reaching tolerance {tol}')
            return estimate
        previous = estimate
        panels *= 3


def quantile(model, t):
    return model.quantile(t)


def average_quantile(model, c, d):
    return model.average(c, d)


class Side(Enum):
    POSITIVE_TAIL = 'positive_tail'
    NEGATIVE_TAIL = 'negative_tail'


@dataclass(frozen=True)
class FeasibilityReport:
    k2: float
    k3: float
    beta: tuple
    s: float
    side: Side

    def __post_init__(self):
        assert sum(self.beta) < 1, f'beta {self.beta} must sum to less than 1'
        assert math.isfinite(self.k2) and math.isfinite(self.k3), 'constants must be finite'

    def certifies(self, a1, a2, a3):
        """True when a_1 > k_2 a_2 + k_3 a_3, i.e. no zero sum coupling with these scales exists."""
        return a1 > self.k2 * a2 + self.k3 * a3

    def to_json(self):
        return {'k2': self.k2, 'k3': self.k3, 'beta': list(self.beta), 's': self.s, 'side': self.side.value}


def _dyadic_levels():
    return np.arange(1, DYADIC_RESOLUTION) / DYADIC_RESOLUTION


def anchor_level(G1, side=None):
    """Smallest dyadic s with Q_1(s) > 0, or failing that the largest with Q_1(s) < 0."""
    levels = _dyadic_levels()
    if side in (None, Side.POSITIVE_TAIL):
        for s in levels:
            if G1.quantile(s) > 0:
                return float(s), Side.POSITIVE_TAIL
    if side in (None, Side.NEGATIVE_TAIL):
        for s in levels[::-1]:
            if G1.quantile(s) < 0:
                return float(s), Side.NEGATIVE_TAIL
    raise ValueError(f'G1 is concentrated at 0 on the levels j/{DYADIC_RESOLUTION}, no anchor level s exists; '
                     f'mass away from 0 below 1/{DYADIC_RESOLUTION} is not resolved')


def windows(beta, side):
    total = sum(beta)
    if side is Side.POSITIVE_TAIL:
        return [(b, b + 1 - total) for b in beta]
    return [(total - b, 1 - b) for b in beta]


def feasibility_constants(G1, G2, G3, beta=None, side=None):
    """Constants (k_2, k_3) of the non-mixability certificate a_1 > k_2 a_2 + k_3 a_3.

    Without `beta`, s is picked on a 1/1024 dyadic grid and beta = (s, (1-s)/4, (1-s)/4) on the positive
    tail, or beta = (1-s, s/4, s/4) on the negative tail. A given beta fixes s = beta_1 (positive tail)
    or s = 1 - beta_1 (negative tail)."""
    models = [QuantileModel.from_json(G) for G in (G1, G2, G3)]
    if models[0].concentrated_at_zero():
        raise ValueError(f'G1 is concentrated at 0 on the levels j/{DYADIC_RESOLUTION}, no certificate exists; '
                         f'mass away from 0 below 1/{DYADIC_RESOLUTION} is not resolved')
    if beta is None:
        s, side = anchor_level(models[0], side)
        beta = (s, (1 - s) / 4, (1 - s) / 4) if side is Side.POSITIVE_TAIL else (1 - s, s / 4, s / 4)
    beta = tuple(float(b) for b in beta)
    if len(beta) != 3 or min(beta) <= 0:
        raise ValueError(f'beta must be three positive levels, got {beta}')
    if sum(beta) >= 1:
        raise ValueError(f'windows collapse, beta sums to {sum(beta)} >= 1')
    if side is None:
        side = Side.POSITIVE_TAIL if models[0].quantile(beta[0]) > 0 else Side.NEGATIVE_TAIL
    averages = [G.average(c, d) for G, (c, d) in zip(models, windows(beta, side))]
    anchor = averages[0]
    if (side is Side.POSITIVE_TAIL and not anchor > 0) or (side is Side.NEGATIVE_TAIL and not anchor < 0):
        raise ValueError(f'average quantile of G1 over its {side.value} window is {anchor}, the wrong sign '
                         f'for beta_1 = {beta[0]}')
    s = beta[0] if side is Side.POSITIVE_TAIL else 1 - beta[0]
    return FeasibilityReport(-averages[1] / anchor, -averages[2] / anchor, beta, s, side)


def symmetric_pair_constants(G1, G3, k2):
    """Certificate for G2 = law of -Y_1 with a prescribed k_2 > 1.

    Finds s and eps with Q1bar([s - eps, s]) > Q1bar([s, s + eps]) / k_2 > 0 and uses
    beta = (s - eps, 1 - s - eps, eps); the certified k_2 of the report is at most the requested one."""
    if not k2 > 1:
        raise ValueError(f'k2 must exceed 1, got {k2}')
    G1, G3 = QuantileModel.from_json(G1), QuantileModel.from_json(G3)
    if G1.concentrated_at_zero():
        raise ValueError(f'G1 is concentrated at 0 on the levels j/{DYADIC_RESOLUTION}, no certificate exists; '
                         f'mass away from 0 below 1/{DYADIC_RESOLUTION} is not resolved')
    if not any(G1.quantile(s) > 0 for s in _dyadic_levels()):
        # all signs flipped leaves the zero sum relation intact
        return symmetric_pair_constants(G1.negated(), G3.negated(), k2)
    for s in _dyadic_levels():
        if not G1.quantile(s) > 0:
            continue
        eps = min(s, 1 - s) / 2
        while eps >= DYADIC_RESOLUTION ** -2:
            upper = G1.average(s, s + eps)
            if G1.average(s - eps, s) > upper / k2 > 0:
                return feasibility_constants(G1, G1.negated(), G3, (s - eps, 1 - s - eps, eps),
                                             Side.POSITIVE_TAIL)
            eps /= 2
    raise ValueError(f'no level window found for k2 = {k2} at resolution 1/{DYADIC_RESOLUTION}')


def zero_sum_coupling(G1, G2, G3, a1, a2, a3):
    """Whether finite support Y_i with Y_i / a_i ~ G_i and Y_1 + Y_2 + Y_3 = 0 exist (exact LP feasibility).

    The G_i are finite support `Marginal`s; only support triples with zero weighted sum may carry mass."""
    G = [Marginal.from_json(g) for g in (G1, G2, G3)]
    assert all(g.finite for g in G), 'zero sum coupling search needs finite supports'
    x, y, z = np.meshgrid(a1 * G[0].values, a2 * G[1].values, a3 * G[2].values, indexing='ij')
    ok = np.abs(x + y + z) <= ZERO_SUM_TOL * max(1.0, float(np.max(np.abs(x) + np.abs(y) + np.abs(z))))
    triples = np.argwhere(ok)
    if len(triples) == 0:
        return False
    rows, rhs = [], []
    for axis, g in enumerate(G):
        for value_index, prob in enumerate(g.probs):
            rows.append((triples[:, axis] == value_index).astype(float))
            rhs.append(prob)
    result = optimize.linprog(np.zeros(len(triples)), A_eq=np.array(rows), b_eq=np.array(rhs),
                              bounds=(0, None), method='highs')
    return result.status == 0


GrowthDiagnostic = namedtuple('GrowthDiagnostic', ['c_m', 'argmax_n', 'boundary', 'n_max'])


def growth_bound_diagnostic(sf, k, m, n_max):
    """max over 1 <= n <= n_max of b(n + m) - k b(n) with its first maximizer.

    b(0) is undefined, the n = 0 boundary value b(m) is reported separately as `boundary`.
    A finite range check, not a bound over all n."""
    require_conforming(sf)
    if not k > 1:
        raise ValueError(f'k must exceed 1, got {k}')
    if m < 1 or n_max < 1:
        raise ValueError('m and n_max must be positive')
    ns = np.arange(1, n_max + 1, dtype=np.int64)
    gaps = sf.values(ns + m) - k * sf.values(ns)
    i = int(np.argmax(gaps))
    return GrowthDiagnostic(float(gaps[i]), int(ns[i]), sf(m), n_max)


def min_bound_diagnostic(sf, m, tau, n_max):
    """min over 1 <= n <= n_max of max(b(n tau), b(n tau + m)); a finite range check."""
    require_conforming(sf)
    if m < 1 or tau < 1 or n_max < 1:
        raise ValueError('m, tau and n_max must be positive')
    ns = np.arange(1, n_max + 1, dtype=np.int64) * tau
    return float(np.min(np.maximum(sf.values(ns), sf.values(ns + m))))
