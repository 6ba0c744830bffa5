"""Two-sample tests and ensemble estimators shared by every verification check."""
import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

from dtsssi.core.paths import PathEnsemble
from dtsssi.generation.oracle import DistributionTable

DEFAULT_ALPHA = 0.01
EXACT_KS_LIMIT = 10 ** 4
MIN_SYMMETRY_PATHS = 100
GAP_TOL = 1e-12


@dataclass
class TestReport:
    statistic: float
    p_value: float
    alpha: float
    n: int
    m: int
    name: str = 'ks'

    # keeps pytest from collecting the class
    __test__ = False

    def __post_init__(self):
        self.statistic = float(self.statistic)
        self.p_value = float(min(max(self.p_value, 0.0), 1.0))
        assert self.statistic >= 0, 'test statistics are nonnegative'

    @property
    def rejected(self):
        return self.p_value < self.alpha

    @property
    def decision(self):
        return 'reject' if self.rejected else 'accept'

    def to_json(self):
        out = asdict(self)
        out['decision'] = self.decision
        return out


def ks_two_sample(x, y, alpha=DEFAULT_ALPHA, name='ks'):
    """Kolmogorov-Smirnov two sample test; exact p-value when n * m <= 10**4, asymptotic otherwise."""
    x, y = np.asarray(x, dtype=np.float64).ravel(), np.asarray(y, dtype=np.float64).ravel()
    if len(x) == 0 or len(y) == 0:
        raise ValueError('two sample test needs nonempty samples')
    method = 'exact' if len(x) * len(y) <= EXACT_KS_LIMIT else 'asymp'
    result = stats.ks_2samp(x, y, method=method)
    return TestReport(result.statistic, result.pvalue, alpha, len(x), len(y), name)


def paired_ks(x, y, alpha=DEFAULT_ALPHA, name='ks'):
    """KS between two statistics computed on the same paths.

    Identical vectors give statistic 0 and p-value 1. Otherwise x is taken from the even paths and y from
    the odd ones so that the two samples are independent."""
    x, y = np.asarray(x), np.asarray(y)
    if x.shape == y.shape and np.array_equal(x, y):
        return TestReport(0.0, 1.0, alpha, len(x), len(y), name)
    return ks_two_sample(x[0::2], y[1::2], alpha, name)


def holm(p_values, alpha=DEFAULT_ALPHA):
    """Holm step-down rejections (True = rejected) in the order of `p_values`."""
    p_values = np.asarray(p_values, dtype=np.float64)
    rejected = np.zeros(len(p_values), dtype=bool)
    for rank, i in enumerate(np.argsort(p_values, kind='stable')):
        if p_values[i] >= alpha / (len(p_values) - rank):
            break
        rejected[i] = True
    return rejected


def holm_summary(reports, alpha=DEFAULT_ALPHA):
    """Holm corrected decision over a list of TestReports."""
    rejected = holm([r.p_value for r in reports], alpha)
    return {'alpha': alpha, 'n_tests': len(reports), 'n_rejected': int(rejected.sum()),
            'rejected': [r.name for r, rej in zip(reports, rejected) if rej], 'passed': bool(not rejected.any())}


def test_marginal_scaling(ens, sf, n, factor, alpha=DEFAULT_ALPHA):
    """KS between X_{factor n} and b(factor) X_n, one value per path."""
    if factor < 1 or n < 0 or factor * n > ens.N:
        raise IndexError(f'X_{factor * n} is outside of paths of length {ens.N + 1}')
    return paired_ks(ens.column(factor * n), sf(factor) * ens.column(n), alpha,
                     f'marginal_scaling(n={n},factor={factor})')


def test_stationary_increments(ens, m, k, tau=1, alpha=DEFAULT_ALPHA):
    """KS between X_{m+1} - X_m and X_{m+k tau+1} - X_{m+k tau}."""
    if m < 0 or k < 0 or tau < 1 or m + k * tau + 1 > ens.N:
        raise IndexError(f'increment at {m + k * tau} is outside of paths of length {ens.N + 1}')
    return paired_ks(ens.increments(m), ens.increments(m + k * tau), alpha,
                     f'stationary_increments(m={m},k={k},tau={tau})')


def empirical_covariance(ens, n, m):
    """Sample covariance of X_n and X_m across paths with its jackknife standard error."""
    x, y = ens.column(n), ens.column(m)
    M = len(x)
    if M < 2:
        raise ValueError('covariance needs at least two paths')
    xc, yc = x - x.mean(), y - y.mean()
    s_xy = float(xc @ yc)
    estimate = s_xy / (M - 1)
    if M < 3:
        return estimate, float('nan')
    # leave one out covariances of the centered data
    loo = (s_xy - xc * yc * M / (M - 1)) / (M - 2)
    stderr = np.sqrt((M - 1) / M * np.sum((loo - loo.mean()) ** 2))
    return estimate, float(stderr)


@dataclass(frozen=True)
class SupportEstimate:
    """Estimates of a = sup{x >= 0: P(|X_1| < x) = 0} and b = inf{x > 0: P(|X_1| > x) = 0}."""
    a_hat: float
    b_hat: float
    exact: bool

    def __post_init__(self):
        assert 0 <= self.a_hat <= self.b_hat, 'support estimates need 0 <= a <= b'

    def to_json(self):
        return asdict(self)


def _abs_support(dist, target):
    if isinstance(dist, DistributionTable):
        masses = dist.marginal(target)
        return np.abs(np.array([v for v, pr in masses.items() if pr > 0])), True
    if isinstance(dist, PathEnsemble):
        return np.abs(dist.column(target)), False
    return np.abs(np.asarray(dist, dtype=np.float64).ravel()), False


def support_gap_check(dist, p, H, target=1):
    """Checks b >= (1 + 2 p^-H) a for the support of |X_1|.

    Only exact tables certify the inequality; sample extremes undershoot the essential range."""
    values, exact = _abs_support(dist, target)
    if len(values) == 0:
        raise ValueError('support gap check needs a nonempty support')
    if not exact:
        logging.warning('support gap estimated from samples, the result does not certify the inequality')
    estimate = SupportEstimate(float(values.min()), float(values.max()), exact)
    holds = estimate.b_hat >= (1 + 2 * float(p) ** -H) * estimate.a_hat - GAP_TOL
    return estimate, bool(holds)


def _exact_symmetry(table, target, alpha):
    masses = table.marginal(target)
    values = np.array(sorted(masses))
    probs = np.array([masses[v] for v in values])
    points = np.union1d(values, -values)
    cdf = np.array([probs[values <= x].sum() for x in points])
    cdf_negated = np.array([probs[-values <= x].sum() for x in points])
    statistic = float(np.max(np.abs(cdf - cdf_negated)))
    return TestReport(statistic, 1.0 if statistic <= GAP_TOL else 0.0, alpha, len(values), len(values),
                      'symmetry(exact)')


def symmetry_check(ens, alpha=DEFAULT_ALPHA, target=1):
    """X_1 against -X_1; exact supremum distance of the two CDFs for exact tables."""
    if isinstance(ens, DistributionTable):
        return _exact_symmetry(ens, target, alpha)
    if ens.M < MIN_SYMMETRY_PATHS:
        raise ValueError(f'symmetry check needs at least {MIN_SYMMETRY_PATHS} paths, got {ens.M}')
    return paired_ks(ens.column(target), -ens.column(target), alpha, 'symmetry')
