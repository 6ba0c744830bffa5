"""Named verification checks run by `Dtsssi.py verify`.

A check takes the ensemble, the significance level and its own parameters from the config and returns
a CheckResult: statistical tests (TestReports, Holm corrected together with every other check) and
deterministic certificates (support gap, exact marginal bands) that pass or fail on their own."""
import inspect
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from dtsssi.core import helpers
from dtsssi.core.errors import ConfigError, SizeError
from dtsssi.core.padic import ScalingFunction, Kind
from dtsssi.evaluation import stats as dstats
from dtsssi.generation.generators import GENERATORS, Ex41Config, Ex42Config
from dtsssi.generation.oracle import exact_distribution
from dtsssi.generation.rational_time import rational_time_sample

MC_BAND_SIGMAS = 3
SUPPORT_ATOL = 1e-9


@dataclass
class CheckResult:
    name: str
    reports: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def certified(self):
        return all(self.certificates.values())

    def to_json(self):
        return {'name': self.name, 'reports': [r.to_json() for r in self.reports],
                'certificates': self.certificates, 'details': self.details}


def generator_config(ens):
    """The generator configuration an ensemble was drawn with, rebuilt from its meta data."""
    meta = ens.meta or {}
    if meta.get('generator') not in GENERATORS:
        raise ConfigError('the ensemble meta data names no known generator')
    return GENERATORS[meta['generator']](dict(meta['config'])).config


def scaling_of(ens, scaling=None):
    """Scaling function from an explicit spec ({kind, p, H}) or else from the ensemble meta."""
    if scaling is not None:
        return ScalingFunction.from_json(scaling)
    meta = (ens.meta or {}).get('scaling')
    if meta is None:
        raise ConfigError('no scaling function given and none in the ensemble meta data')
    return ScalingFunction.from_json(meta)


def _within(ens, index, name):
    if index > ens.N:
        raise SizeError(f'{name} needs X_{index}, the paths end at X_{ens.N}')


def z_report(estimate, target, stderr, alpha, name):
    """Two sided z-test of estimate = target."""
    if not stderr > 0:
        p_value = 1.0 if abs(estimate - target) <= 1e-12 else 0.0
        return dstats.TestReport(0.0 if p_value else math.inf, p_value, alpha, 1, 1, name)
    z = abs(estimate - target) / stderr
    return dstats.TestReport(z, 2 * stats.norm.sf(z), alpha, 1, 1, name)


### statistical checks ###
def check_marginal_scaling(ens, alpha, ns=(1, 2, 3), factors=(2, 3), scaling=None):
    """X_{f n} against b(f) X_n for every n and factor f; a prime f != p tests the invariance b(f) = 1."""
    sf = scaling_of(ens, scaling)
    reports = []
    for n in ns:
        for factor in factors:
            _within(ens, factor * n, 'marginal_scaling')
            reports.append(dstats.test_marginal_scaling(ens, sf, n, factor, alpha))
    return CheckResult('marginal_scaling', reports, details={'scaling': sf.to_json()})


def check_stationary_increments(ens, alpha, ms=(0, 1, 2), ks=(0, 1, 2), tau=1):
    reports = []
    for m in ms:
        for k in ks:
            _within(ens, m + k * tau + 1, 'stationary_increments')
            reports.append(dstats.test_stationary_increments(ens, m, k, tau, alpha))
    return CheckResult('stationary_increments', reports)


def check_symmetry(ens, alpha, target=1, exact=False):
    if exact:
        table = exact_distribution(generator_config(ens), [target])
        return CheckResult('symmetry', [dstats.symmetry_check(table, alpha, target)])
    return CheckResult('symmetry', [dstats.symmetry_check(ens, alpha, target)])


def covariance_formula(sf, n, m, var):
    """var (b(n)^2 + b(m)^2 - b(|n - m|)^2) / 2 with b(0) = 0."""
    b = lambda k: sf(k) if k > 0 else 0.0
    return 0.5 * (b(n) ** 2 + b(m) ** 2 - b(abs(n - m)) ** 2) * var


def check_covariance(ens, alpha, pairs=((2, 4), (1, 2), (3, 3)), var=None, scaling=None):
    """Empirical Cov(X_n, X_m) against the closed form of type II and type III processes.

    Without `var` the generator's variance is used, or else the sample variance of X_1."""
    sf = scaling_of(ens, scaling)
    if sf.kind not in (Kind.TYPE2, Kind.TYPE3):
        raise ConfigError(f'the covariance check needs a type2 or type3 scaling, got {sf.kind.value}')
    if var is None:
        var = ens.meta.get('config', {}).get('var')
    if var is None:
        var = float(np.var(ens.column(1), ddof=1))
        logging.warning('covariance check uses the sample variance of X_1 as the variance scale')
    reports, expected = [], {}
    for n, m in pairs:
        _within(ens, max(n, m), 'covariance')
        estimate, stderr = dstats.empirical_covariance(ens, n, m)
        target = covariance_formula(sf, n, m, var)
        expected[f'{n},{m}'] = {'expected': target, 'estimate': estimate, 'stderr': stderr}
        reports.append(z_report(estimate, target, stderr, alpha, f'covariance(n={n},m={m})'))
    return CheckResult('covariance', reports, details=expected)


def check_rational_covariance(ens, alpha, times=('1/2', '1/3', '2/3', '1'), M=None, denominator='product'):
    """Type III processes at rational times against var (s^2H + t^2H - |s - t|^2H) / 2."""
    cfg = generator_config(ens)
    if ens.meta.get('generator') != 'type3_gaussian':
        raise ConfigError('the rational time covariance check needs a type3_gaussian ensemble')
    times = [Fraction(t) for t in times]
    M = M or ens.M
    # a stream of its own, apart from the path seeds of the ensemble
    seed = helpers.splitmix64(ens.master_seed ^ helpers.GOLDEN)
    draws = rational_time_sample(cfg, times, M, seed, denominator)
    reports, expected = [], {}
    for i in range(len(times)):
        for j in range(i, len(times)):
            s, t = float(times[i]), float(times[j])
            target = 0.5 * (s ** (2 * cfg.H) + t ** (2 * cfg.H) - abs(s - t) ** (2 * cfg.H)) * cfg.var
            x, y = draws[:, i] - draws[:, i].mean(), draws[:, j] - draws[:, j].mean()
            products = x * y
            estimate = float(products.sum() / (M - 1))
            stderr = float(products.std(ddof=1) / np.sqrt(M))
            name = f'rational_covariance(s={times[i]},t={times[j]})'
            expected[name] = {'expected': target, 'estimate': estimate, 'stderr': stderr}
            reports.append(z_report(estimate, target, stderr, alpha, name))
    return CheckResult('rational_covariance', reports, details=expected)


### certificates ###
def _exact_config(ens):
    """The generator configuration when its law can be enumerated (finite supports), else None."""
    cfg = generator_config(ens)
    if isinstance(cfg, Ex41Config) and cfg.y_marginal.finite:
        return cfg
    if isinstance(cfg, Ex42Config) and (cfg.u is not None or cfg.u_marginal.finite):
        return cfg
    return None


def check_support_gap(ens, alpha, target=1, exact=True):
    """b >= (1 + 2 p^-H) a for the support of |X_1|, from the exact table when the generator allows it."""
    sf = scaling_of(ens)
    if sf.kind is not Kind.TYPE2:
        raise ConfigError('the support gap check needs a type2 ensemble')
    cfg = _exact_config(ens) if exact else None
    source = ens
    if cfg is not None:
        try:
            source = exact_distribution(cfg, [target])
        except SizeError as e:
            logging.warning(f'exact support not enumerable ({e}), falling back to the sample')
    estimate, holds = dstats.support_gap_check(source, sf.p, sf.H, target)
    return CheckResult('support_gap', certificates={'support_gap': holds},
                       details={**estimate.to_json(), 'holds': holds})


def check_exact_marginal(ens, alpha, targets=(1,), sigmas=MC_BAND_SIGMAS):
    """Monte Carlo frequencies of every atom of X_n within a multinomial band of the exact law.

    Every sampled value must also be an atom of the exact table."""
    cfg = _exact_config(ens)
    if cfg is None:
        raise ConfigError('the exact marginal check needs a type2_iid or type2_shift ensemble')
    table = exact_distribution(cfg, targets)
    certificates, details = {}, {}
    for target in targets:
        masses = table.marginal(target)
        atoms = np.array(sorted(masses))
        probs = np.array([masses[a] for a in atoms])
        sample = ens.column(target)
        nearest = np.abs(sample[:, None] - atoms[None, :])
        in_support = bool(np.all(nearest.min(axis=1) <= SUPPORT_ATOL))
        frequencies = np.bincount(nearest.argmin(axis=1), minlength=len(atoms)) / len(sample)
        band = sigmas * np.sqrt(probs * (1 - probs) / len(sample))
        # atoms whose band is below one sample resolve to exact agreement up to 1 / M
        within = np.abs(frequencies - probs) <= np.maximum(band, 1.0 / len(sample))
        certificates[f'support(X_{target})'] = in_support
        certificates[f'frequencies(X_{target})'] = bool(within.all())
        details[f'X_{target}'] = [{'value': float(a), 'exact': float(pr), 'frequency': float(fr), 'band': float(bd)}
                                  for a, pr, fr, bd in zip(atoms, probs, frequencies, band)]
    details['n_configurations'] = table.n_configurations
    return CheckResult('exact_marginal', certificates=certificates, details=details)


CHECKS = {
    'marginal_scaling': check_marginal_scaling,
    'stationary_increments': check_stationary_increments,
    'symmetry': check_symmetry,
    'covariance': check_covariance,
    'rational_covariance': check_rational_covariance,
    'support_gap': check_support_gap,
    'exact_marginal': check_exact_marginal,
}


def _name_and_params(check):
    if isinstance(check, str):
        return check, {}
    params = dict(check)
    return params.pop('name'), params


def run_check(ens, check, alpha):
    name, params = _name_and_params(check)
    if name not in CHECKS:
        raise ConfigError(f'check "{name}" is unknown, known checks: {sorted(CHECKS)}')
    try:
        inspect.signature(CHECKS[name]).bind(ens, alpha, **params)
    except TypeError as e:
        raise ConfigError(f'check "{name}" got invalid parameters {sorted(params)}: {e}')
    return CHECKS[name](ens, alpha, **params)


def run_checks(ens, checks, alpha=dstats.DEFAULT_ALPHA):
    """Every check, then one Holm correction over all test p-values; an empty list passes."""
    results = [run_check(ens, check, alpha) for check in checks]
    reports = [r for result in results for r in result.reports]
    overall = dstats.holm_summary(reports, alpha)
    failed_certificates = [f'{result.name}:{key}' for result in results
                           for key, ok in result.certificates.items() if not ok]
    overall['failed_certificates'] = failed_certificates
    overall['passed'] = overall['passed'] and not failed_certificates
    return {'checks': [result.to_json() for result in results], 'overall': overall}
