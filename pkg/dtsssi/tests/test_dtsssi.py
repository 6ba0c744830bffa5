import itertools
import json
import math
import os
from fractions import Fraction

import numpy as np
import pytest
import yaml

from dtsssi.cli import main
from dtsssi.core import helpers
from dtsssi.core.config import ExperimentConfig, parse_override, resolve
from dtsssi.core.errors import ConfigError, FactorizationError, SizeError
from dtsssi.core.padic import (FIRST_PRIMES, Kind, ScalingFunction, classify_scaling, is_prime, p_adic_norm,
                               p_adic_valuation, p_adic_valuations, reduced_residue, scaling_eval)
from dtsssi.core.paths import PathEnsemble
from dtsssi.evaluation import mixability
from dtsssi.evaluation import stats as dstats
from dtsssi.evaluation.checks import (check_covariance, check_exact_marginal, check_support_gap, run_check,
                                      run_checks)
from dtsssi.export.exporter import EnsembleExportController, ENSEMBLE_CSV, META_JSON
from dtsssi.generation.generators import (Ex41Config, Ex42Config, GaussianType2Config, GaussianType2Generator,
                                          GaussianType3Config, GaussianType3Generator, gen_type1_iid,
                                          gen_type2_gaussian, gen_type2_iid, gen_type2_shift, gen_wave,
                                          make_generator)
from dtsssi.generation.marginals import Marginal
from dtsssi.generation.oracle import DistributionTable, exact_distribution
from dtsssi.generation.rational_time import rational_time_sample
from dtsssi.spectral import coefficients, conditions
from dtsssi.spectral.coefficients import CoefficientTable

BINARY_Y = {'values': [0, 1], 'probs': [0.5, 0.5]}
STANDARD_NORMAL = {'family': 'normal', 'params': [0.0, 1.0]}
RADEMACHER = {'family': 'rademacher', 'params': []}


### preparation and breakdown ###
@pytest.fixture(scope='module')
def gaussian_ensemble():
    # b(n) = |n|_2^(1/2), long enough for M_max = 3 at R = 8 and the off grid sums at m = 4
    return gen_type2_gaussian(2, 0.5, 1.0, 128, 400, seed=11)


@pytest.fixture(scope='module')
def gaussian_tables(gaussian_ensemble):
    return coefficients.coefficient_tables(gaussian_ensemble, 2, 3, R=8)


@pytest.fixture(scope='module')
def iid_normal_ensemble():
    return gen_type1_iid(STANDARD_NORMAL, 128, 400, seed=12)


def write_config(tmp_path, generator, name='config.yaml', **sections):
    config = {'master_seed': 7, 'generator': generator,
              'output': {'directory': str(tmp_path / 'out')}}
    config.update(sections)
    path = str(tmp_path / name)
    with open(path, 'w') as f:
        yaml.safe_dump(config, f)
    return path


def gaussian_generator(M=200, N=16):
    return {'kind': 'type2_gaussian', 'p': 2, 'H': 0.5, 'N': N, 'M': M}


def type1_control_generator(M=2000):
    return {'kind': 'type1_iid', 'marginal': STANDARD_NORMAL, 'N': 16, 'M': M}


def read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


### p-adic arithmetic ###
def test_valuations():
    assert p_adic_valuation(12, 2) == 2
    assert p_adic_valuation(1, 3) == 0
    assert p_adic_valuation(250, 5) == 3
    assert p_adic_valuations([12, 1, 8, 7], 2).tolist() == [2, 0, 3, 0]


def test_norms():
    assert p_adic_norm(12, 2) == Fraction(1, 4)
    assert p_adic_norm(7, 7) == Fraction(1, 7)
    assert p_adic_norm(5, 2) == 1


def test_norm_rejects_zero_and_composite_p():
    with pytest.raises(ValueError):
        p_adic_valuation(0, 2)
    with pytest.raises(ValueError):
        p_adic_norm(5, 4)
    assert not is_prime(1)
    assert is_prime(29)


def test_norm_is_multiplicative_and_ultrametric():
    for p in (2, 3, 5):
        for n in range(1, 40):
            for m in range(1, 40):
                assert p_adic_norm(n * m, p) == p_adic_norm(n, p) * p_adic_norm(m, p)
                assert p_adic_norm(n + m, p) <= max(p_adic_norm(n, p), p_adic_norm(m, p))


def test_scaling_eval():
    assert scaling_eval(ScalingFunction.type2(2, 1.0), 4) == pytest.approx(0.25)
    assert scaling_eval(ScalingFunction.type3(0.5), 4) == pytest.approx(2.0)
    assert scaling_eval(ScalingFunction.type1(), 12) == 1.0
    with pytest.raises(ValueError):
        scaling_eval(ScalingFunction.type1(), 0)


def test_scaling_values_match_pointwise():
    sf = ScalingFunction.type2(3, 0.7)
    ns = np.arange(1, 100)
    assert np.allclose(sf.values(ns), [sf(int(n)) for n in ns])


def test_classify_scaling_examples():
    sf = classify_scaling([(2, 0.5), (3, 1.0), (5, 1.0)])
    assert sf.kind is Kind.TYPE2 and sf.p == 2 and sf.H == pytest.approx(1.0)
    sf = classify_scaling([(2, 2 ** 0.5), (3, 3 ** 0.5)])
    assert sf.kind is Kind.TYPE3 and sf.H == pytest.approx(0.5)
    assert classify_scaling([(2, 1.0), (3, 1.0)]).kind is Kind.TYPE1
    # two primes below 1 fit no kind
    assert classify_scaling([(2, 0.5), (3, 0.5)]).kind is Kind.NON_CONFORMING


def test_classify_scaling_round_trip():
    for sf in (ScalingFunction.type1(), ScalingFunction.type2(3, 0.7), ScalingFunction.type2(7, 0.2),
               ScalingFunction.type3(0.3)):
        found = classify_scaling([(q, sf(q)) for q in FIRST_PRIMES])
        assert found.kind is sf.kind
        assert found.p == sf.p
        if sf.H is not None:
            assert found.H == pytest.approx(sf.H)


def test_classify_scaling_rejects_bad_input():
    with pytest.raises(ValueError):
        classify_scaling([])
    with pytest.raises(ValueError):
        classify_scaling([(2, 0.5), (4, 1.0)])
    with pytest.raises(ValueError):
        classify_scaling([(2, 0.0), (3, 1.0)])


def test_non_conforming_operations_fail():
    sf = classify_scaling([(2, 0.5), (3, 0.5)])
    with pytest.raises(ValueError):
        sf(2)
    with pytest.raises(ValueError):
        mixability.growth_bound_diagnostic(sf, 2.0, 1, 10)


def test_reduced_residue():
    assert reduced_residue(Fraction(3, 8), 2) == (3, 3)
    assert reduced_residue(Fraction(1, 3), 2) is None
    assert reduced_residue(0, 5) == (0, 0)


def test_scaling_json_round_trip():
    sf = ScalingFunction.type2(5, 0.25)
    assert ScalingFunction.from_json(sf.to_json()) == sf


### seeds and streams ###
def test_path_seeds_distinct():
    seeds = helpers.path_seeds(42, 0, 1000)
    assert len(set(seeds.tolist())) == 1000
    assert helpers.path_seed(42, 3) == int(seeds[3])


def test_uniforms_in_open_interval():
    u = helpers.uniforms(helpers.path_seeds(0, 0, 50), helpers.SALT_Y, 0, np.arange(100))
    assert u.shape == (50, 100)
    assert np.all((u > 0) & (u < 1))


def test_chunk_ranges_cover():
    ranges = helpers.chunk_ranges(10, 3)
    assert ranges[0][0] == 0 and ranges[-1][1] == 10
    assert all(a[1] == b[0] for a, b in zip(ranges[:-1], ranges[1:]))


### marginals ###
def test_marginal_merges_atoms():
    m = Marginal(values=[1, 0, 1], probs=[0.25, 0.5, 0.25])
    assert m.values.tolist() == [0.0, 1.0]
    assert m.probs.tolist() == [0.5, 0.5]
    assert m.mean() == pytest.approx(0.5)


def test_marginal_rejects_bad_specs():
    with pytest.raises(ConfigError):
        Marginal(values=[0, 1], probs=[0.5, 0.6])
    with pytest.raises(ConfigError):
        Marginal(family='gamma', params=[1.0])
    with pytest.raises(ConfigError):
        Marginal.from_json({'values': [0], 'shape': 1})


### quantiles and mixability ###
def test_quantiles():
    assert mixability.quantile(mixability.AnalyticQuantile('uniform', (0, 1)), 0.3) == pytest.approx(0.3)
    assert mixability.quantile(mixability.EmpiricalQuantile([1, 2, 3]), 0.5) == 2
    rademacher = mixability.AnalyticQuantile('rademacher')
    assert rademacher.quantile(0.75) == 1
    # left continuous at the atom boundary
    assert rademacher.quantile(0.5) == -1
    with pytest.raises(ValueError):
        rademacher.quantile(0.0)


def test_negated_quantile():
    rademacher = mixability.AnalyticQuantile('rademacher').negated()
    assert rademacher.quantile(0.25) == -1
    assert rademacher.quantile(0.75) == 1
    assert mixability.EmpiricalQuantile([1, 2, 3]).negated().quantile(0.9) == -1


def test_average_quantiles():
    assert mixability.average_quantile(mixability.AnalyticQuantile('uniform', (0, 1)), 0.2, 0.6) == pytest.approx(0.4)
    assert mixability.average_quantile(mixability.AnalyticQuantile('rademacher'), 0.5, 0.9) == pytest.approx(1.0)
    assert mixability.average_quantile(mixability.AnalyticQuantile('uniform', (0, 10)), 0.4, 0.6) == pytest.approx(5.0)
    assert mixability.average_quantile(mixability.EmpiricalQuantile([1, 2, 3]), 1 / 3, 2 / 3) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        mixability.average_quantile(mixability.EmpiricalQuantile([1, 2, 3]), 0.6, 0.6)


def test_average_normal_matches_quadrature():
    model = mixability.AnalyticQuantile('normal', (0.0, 1.0))
    quadrature = mixability.midpoint_average(model.marginal.ppf, 0.1, 0.7)
    assert model.average(0.1, 0.7) == pytest.approx(quadrature, abs=1e-6)


def test_rademacher_feasibility():
    report = mixability.feasibility_constants(RADEMACHER, RADEMACHER, RADEMACHER)
    assert report.side is mixability.Side.POSITIVE_TAIL
    assert report.k2 == pytest.approx(1.0)
    assert report.k3 == pytest.approx(1.0)
    assert report.certifies(3, 1, 1)
    assert not report.certifies(2, 1, 1)


def test_point_mass_feasibility():
    point = {'family': 'point', 'params': [1]}
    report = mixability.feasibility_constants(point, point, point)
    assert report.k2 == pytest.approx(-1.0)
    assert report.k3 == pytest.approx(-1.0)


def test_feasibility_rejects_zero_and_bad_beta():
    zero = {'family': 'point', 'params': [0]}
    with pytest.raises(ValueError):
        mixability.feasibility_constants(zero, RADEMACHER, RADEMACHER)
    with pytest.raises(ValueError):
        mixability.feasibility_constants(RADEMACHER, RADEMACHER, RADEMACHER, beta=(0.6, 0.3, 0.2))


def test_mass_below_level_resolution_is_not_resolved():
    # positive mass 1/2048 lies between the scanned levels j/1024
    G = mixability.EmpiricalQuantile([0.0] * 2047 + [1.0])
    assert G.concentrated_at_zero()
    with pytest.raises(ValueError, match='below 1/1024'):
        mixability.feasibility_constants(G, RADEMACHER, RADEMACHER)
    with pytest.raises(ValueError, match='below 1/1024'):
        mixability.anchor_level(G)


def test_symmetric_pair_constants():
    sample = np.random.default_rng(0).normal(size=10 ** 4)
    G = {'empirical': sample.tolist()}
    report = mixability.symmetric_pair_constants(G, G, 1.5)
    assert math.isfinite(report.k3)
    assert 0 < report.k2 < 1.5
    with pytest.raises(ValueError):
        mixability.symmetric_pair_constants(G, G, 1.0)


def test_zero_sum_coupling_agrees_with_certificate():
    report = mixability.feasibility_constants(RADEMACHER, RADEMACHER, RADEMACHER)
    for a in [(2, 1, 1), (3, 1, 1), (1, 1, 1), (2.5, 1, 2)]:
        # clear of the boundary a_1 = k_2 a_2 + k_3 a_3, where rounding decides
        if a[0] > report.k2 * a[1] + report.k3 * a[2] + 1e-9:
            assert not mixability.zero_sum_coupling(RADEMACHER, RADEMACHER, RADEMACHER, *a)
    assert mixability.zero_sum_coupling(RADEMACHER, RADEMACHER, RADEMACHER, 2, 1, 1)
    assert not mixability.zero_sum_coupling(RADEMACHER, RADEMACHER, RADEMACHER, 3, 1, 1)


def random_quantile_models(rng):
    return [mixability.EmpiricalQuantile(rng.normal(size=257)),
            # ties put flat steps into the quantile function
            mixability.EmpiricalQuantile(rng.integers(-3, 4, size=40)),
            mixability.AnalyticQuantile('normal', (rng.normal(), rng.uniform(0.5, 2.0))),
            mixability.AnalyticQuantile('uniform', (-1.0, rng.uniform(0.0, 3.0))),
            mixability.AnalyticQuantile('student_t', (rng.uniform(1.5, 5.0),)),
            mixability.AnalyticQuantile('rademacher')]


def test_quantiles_are_monotone():
    rng = np.random.default_rng(39)
    levels = np.linspace(0.001, 0.999, 199)
    for _ in range(3):
        for model in random_quantile_models(rng):
            for m in (model, model.negated()):
                values = [m.quantile(t) for t in levels]
                assert np.all(np.diff(values) >= 0)


def test_average_quantile_within_window_quantiles():
    rng = np.random.default_rng(40)
    for model in random_quantile_models(rng):
        for _ in range(10):
            c, d = np.sort(rng.uniform(0.02, 0.98, size=2))
            average = mixability.average_quantile(model, c, d)
            # Q is left continuous, so Q(d-) = Q(d)
            assert model.quantile(c) - 1e-9 <= average <= model.quantile(d) + 1e-9


def test_symmetric_pair_identity():
    rng = np.random.default_rng(41)
    G1 = mixability.EmpiricalQuantile(np.concatenate([rng.exponential(size=300), rng.integers(-2, 2, size=50)]))
    G2 = G1.negated()
    for _ in range(20):
        c, d = np.sort(rng.uniform(0.01, 0.99, size=2))
        assert G1.average(c, d) == pytest.approx(-G2.average(1 - d, 1 - c), abs=1e-9)


def test_rademacher_feasibility_at_fixed_levels():
    report = mixability.feasibility_constants(RADEMACHER, RADEMACHER, RADEMACHER, beta=(0.75, 0.1, 0.1))
    assert report.side is mixability.Side.POSITIVE_TAIL
    assert report.s == 0.75
    assert report.k2 == pytest.approx(1.0)
    assert report.k3 == pytest.approx(1.0)


def two_point(values, probs):
    """Empirical quantile model and finite marginal of the same two point law, probs in quarters."""
    sample = [values[0]] * round(4 * probs[0]) + [values[1]] * round(4 * probs[1])
    return mixability.EmpiricalQuantile(sample), {'values': list(values), 'probs': list(probs)}


@pytest.mark.parametrize('laws', [
    (((-1.0, 3.0), (0.75, 0.25)), ((-1.0, 1.0), (0.5, 0.5)), ((-2.0, 1.0), (0.25, 0.75))),
    (((-2.0, 1.0), (0.25, 0.75)), ((-1.0, 3.0), (0.75, 0.25)), ((0.5, 2.0), (0.5, 0.5))),
    (((0.5, 2.0), (0.5, 0.5)), ((-2.0, 1.0), (0.25, 0.75)), ((-1.0, 1.0), (0.5, 0.5))),
    (((-3.0, -1.0), (0.5, 0.5)), ((1.0, 2.0), (0.75, 0.25)), ((-1.0, 3.0), (0.75, 0.25))),
])
def test_certificates_exclude_zero_sum_couplings(laws):
    models, marginals = zip(*[two_point(*law) for law in laws])
    report = mixability.feasibility_constants(*models)
    scales = (0.5, 1.0, 2.0, 3.0, 8.0)
    certified = 0
    for a in itertools.product(scales, repeat=3):
        # clear of the boundary a_1 = k_2 a_2 + k_3 a_3, where rounding decides
        if a[0] > report.k2 * a[1] + report.k3 * a[2] + 1e-9:
            assert report.certifies(*a)
            certified += 1
            assert not mixability.zero_sum_coupling(*marginals, *a)
    assert certified > 0


def test_growth_bound_diagnostic():
    diag = mixability.growth_bound_diagnostic(ScalingFunction.type2(2, 1.0), 1.5, 1, 1024)
    assert diag.c_m == pytest.approx(1 - 1.5 * 2 ** -10)
    assert diag.argmax_n == 1024
    assert diag.boundary == 1.0
    assert mixability.growth_bound_diagnostic(ScalingFunction.type1(), 2.0, 3, 50).c_m == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        mixability.growth_bound_diagnostic(ScalingFunction.type1(), 1.0, 1, 10)


def test_min_bound_diagnostic():
    assert mixability.min_bound_diagnostic(ScalingFunction.type2(2, 1.0), 1, 1, 100) == 1.0
    assert mixability.min_bound_diagnostic(ScalingFunction.type2(3, 1.0), 1, 1, 100) == 1.0
    assert mixability.min_bound_diagnostic(ScalingFunction.type3(0.5), 2, 1, 100) == pytest.approx(math.sqrt(3))


### generators ###
def test_point_mass_type1():
    ens = gen_type1_iid({'family': 'point', 'params': [5]}, 10, 3, seed=1)
    assert ens.values.shape == (3, 11)
    assert np.all(ens.values == 5)


def test_generation_deterministic_and_chunk_free():
    cfg = Ex41Config(p=2, H=0.5, y_marginal=STANDARD_NORMAL, N=12, K=4)
    a = gen_type2_iid(cfg, 9, seed=123)
    b = gen_type2_iid(cfg, 9, seed=123)
    c = gen_type2_iid(cfg, 9, seed=123, workers=3)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, c.values)
    assert a.seeds == c.seeds
    assert not np.array_equal(a.values, gen_type2_iid(cfg, 9, seed=124).values)


def test_uniform_type1_mean():
    ens = gen_type1_iid({'family': 'uniform', 'params': [0, 1]}, 10, 20000, seed=2)
    assert np.mean(ens.column(7)) == pytest.approx(0.5, abs=0.01)


def test_paths_start_at_zero():
    ensembles = [gen_type2_iid(Ex41Config(2, 0.5, STANDARD_NORMAL, 8, K=3), 20, seed=3),
                 gen_type2_shift(Ex42Config(3, 0.5, 8, u=(1, 0, -1), K=2), 20, seed=3),
                 gen_type2_gaussian(2, 0.5, 1.0, 8, 20, seed=3)]
    for ens in ensembles:
        assert np.all(ens.column(0) == 0)


def test_type2_iid_variance_ratio():
    cfg = Ex41Config(p=2, H=0.5, y_marginal=STANDARD_NORMAL, N=4, K=20)
    ens = gen_type2_iid(cfg, 20000, seed=4)
    # X_2 has the law of 2^(-1/2) X_1
    assert np.var(ens.column(2)) / np.var(ens.column(1)) == pytest.approx(0.5, abs=0.05)


def test_type2_iid_default_depth():
    cfg = Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4)
    assert cfg.b ** cfg.K <= 1e-12


def test_shift_construction_bounded_and_symmetric():
    cfg = Ex42Config(p=2, b=0.5, N=16, u=(1, -1), K=2)
    ens = gen_type2_shift(cfg, 4000, seed=5)
    assert np.max(np.abs(ens.values)) <= 2
    assert np.mean(ens.column(1)) == pytest.approx(0.0, abs=0.05)
    assert ens.meta['u_mode'] == 'deterministic'


def test_shift_construction_rejects_nonzero_sum():
    with pytest.raises(ConfigError):
        Ex42Config(p=2, b=0.5, N=4, u=(1, 1))
    with pytest.raises(ConfigError):
        Ex42Config(p=2, b=0.5, N=4)


def test_gaussian_type2_covariances():
    gen = GaussianType2Generator(GaussianType2Config(p=2, H=0.5, N=16))
    C = gen.covariance_matrix([1, 2, 3, 4])
    assert C[1, 3] == pytest.approx(0.125)
    assert C[0, 1] == pytest.approx(0.25)
    assert C[2, 2] == pytest.approx(1.0)
    ens = gen.generate(20000, seed=6)
    assert np.cov(ens.column(2), ens.column(4))[0, 1] == pytest.approx(0.125, abs=0.03)
    assert np.cov(ens.column(1), ens.column(2))[0, 1] == pytest.approx(0.25, abs=0.03)
    assert np.var(ens.column(3)) == pytest.approx(1.0, abs=0.05)


def test_gaussian_type3_covariance():
    gen = GaussianType3Generator(GaussianType3Config(H=1.0, N=4))
    assert gen.covariance_matrix([1, 2])[0, 1] == pytest.approx(2.0)


@pytest.mark.parametrize('gen', [
    GaussianType2Generator(GaussianType2Config(p=2, H=0.3, N=64)),
    GaussianType2Generator(GaussianType2Config(p=2, H=1.0, N=64)),
    GaussianType2Generator(GaussianType2Config(p=3, H=0.5, N=64, var=2.0)),
    GaussianType2Generator(GaussianType2Config(p=5, H=0.8, N=64)),
    GaussianType3Generator(GaussianType3Config(H=0.3, N=64)),
    GaussianType3Generator(GaussianType3Config(H=1.0, N=64)),
])
def test_covariance_eigenvalues(gen):
    C = gen.covariance_matrix()
    assert np.linalg.eigvalsh(C)[0] >= -1e-10 * np.trace(C)
    L = gen.factor(C)
    assert np.allclose(L @ L.T, C, atol=1e-8 * np.trace(C))


def test_factorization_jitter_ladder():
    gen = GaussianType2Generator(GaussianType2Config(p=2, H=0.5, N=4))
    # rescued by the smallest jitter
    L = gen.factor(np.diag([1.0, 1.0, 1.0, -1e-13]))
    assert L.shape == (4, 4)
    # passes the eigenvalue gate, but even the largest jitter leaves a negative pivot
    with pytest.raises(FactorizationError) as e:
        gen.factor(np.diag([1.0, 1.0, 1.0, -1e-10]))
    assert 'jitter' in str(e.value)
    assert e.value.exit_code == 3
    with pytest.raises(FactorizationError, match='eigenvalue'):
        gen.factor(np.diag([1.0, -1.0]))


def test_make_generator_unknown_kind_and_field():
    with pytest.raises(ConfigError):
        make_generator('type4', {})
    with pytest.raises(ConfigError):
        make_generator('type2_gaussian', {'p': 2, 'H': 0.5, 'N': 8, 'bogus': 1})
    with pytest.raises(ConfigError):
        make_generator('type2_gaussian', {'p': 2, 'H': 0.5})


def test_depth_beyond_index_range():
    with pytest.raises(SizeError):
        Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=62)


def test_wave_path():
    ens = gen_wave(2, 2, 1, 8)
    expected = np.cos(np.pi * np.arange(9) / 2) - 1
    assert np.allclose(ens.values[0], expected)


### exact oracle ###
def test_oracle_periodic_depth_zero():
    table = exact_distribution(Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=0), [1])
    masses = table.marginal(1)
    assert masses == pytest.approx({-1.0: 0.25, 0.0: 0.5, 1.0: 0.25})


def test_oracle_periodic_depth_one():
    table = exact_distribution(Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=1), [1])
    assert table.prob(0.0) == pytest.approx(0.25)
    assert table.n_configurations == 16
    assert sum(table.marginal(1).values()) == pytest.approx(1.0)


def test_oracle_shift_depth_zero():
    table = exact_distribution(Ex42Config(p=2, b=0.5, N=4, u=(1, -1), K=0), [1])
    assert table.marginal(1) == pytest.approx({-1.0: 0.25, 0.0: 0.5, 1.0: 0.25})


def test_oracle_shift_random_u():
    table = exact_distribution(Ex42Config(p=2, b=0.5, N=4, u_marginal=BINARY_Y, K=1), [1, 2])
    assert table.probs.sum() == pytest.approx(1.0)
    assert table.support.shape[1] == 2


def test_oracle_too_large():
    cfg = Ex41Config(p=2, H=1.0, y_marginal={'values': list(range(10))}, N=8, K=3)
    with pytest.raises(SizeError):
        exact_distribution(cfg, range(1, 9))


def test_oracle_matches_sample():
    cfg = Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=1)
    table = exact_distribution(cfg, [1])
    ens = gen_type2_iid(cfg, 20000, seed=8)
    for value, prob in table.marginal(1).items():
        assert np.mean(np.isclose(ens.column(1), value)) == pytest.approx(prob, abs=0.02)


### rational time ###
def test_rational_time_covariance():
    draws = rational_time_sample({'H': 0.5, 'var': 1.0}, ['1/2', '1'], 20000, seed=9)
    assert draws.shape == (20000, 2)
    assert np.var(draws[:, 0]) == pytest.approx(0.5, abs=0.03)
    assert np.cov(draws[:, 0], draws[:, 1])[0, 1] == pytest.approx(0.5, abs=0.03)


def test_rational_time_denominators_agree():
    a = rational_time_sample({'H': 0.7}, ['1/2', '1/4'], 5000, seed=10, denominator='product')
    b = rational_time_sample({'H': 0.7}, ['1/2', '1/4'], 5000, seed=10, denominator='lcm')
    assert np.var(a[:, 1]) == pytest.approx(np.var(b[:, 1]), rel=0.1)
    with pytest.raises(ValueError):
        rational_time_sample({'H': 0.7}, ['-1/2'], 10, seed=0)


def test_rational_time_base_is_strict():
    with pytest.raises(ConfigError, match='base.Hurst'):
        rational_time_sample({'Hurst': 0.7}, ['1/2'], 10, seed=0)
    with pytest.raises(ConfigError):
        rational_time_sample({'var': 1.0}, ['1/2'], 10, seed=0)


### spectral coefficients ###
def test_fourier_coefficient():
    ones = np.array([0, 1, 1, 1, 1], dtype=float)
    assert coefficients.fourier_coefficient(ones, 0, 4) == pytest.approx(1.0)
    assert abs(coefficients.fourier_coefficient(ones, Fraction(1, 4), 4)) < 1e-12
    alternating = np.array([0, 1, 0, 1, 0], dtype=float)
    assert coefficients.fourier_coefficient(alternating, Fraction(1, 2), 4) == pytest.approx(-0.5)
    with pytest.raises(SizeError):
        coefficients.fourier_coefficient(ones, Fraction(1, 4), 8)


def test_character_reduces_exactly():
    assert coefficients.e(Fraction(5, 4)) == pytest.approx(1j)
    assert coefficients.e(Fraction(-1, 2)) == pytest.approx(-1)
    assert coefficients.e(3) == 1
    big = Fraction(2 ** 70 + 1, 2 ** 3)
    assert coefficients.e(big) == pytest.approx(coefficients.e(Fraction(1, 8)))


@pytest.mark.parametrize('R', [1, 3])
def test_fft_table_matches_direct_sum(R):
    path = np.concatenate([[0.0], np.random.default_rng(36).normal(size=R * 27)])
    table = coefficients.coefficient_table(path, 3, 3, R=R)
    assert table.N_used == R * 27
    for m, l in table.keys:
        direct = coefficients.fourier_coefficient(path, Fraction(l, 3 ** m), R * 27)
        assert table[m, l] == pytest.approx(direct, abs=1e-12)
    assert table.constant_term == pytest.approx(coefficients.fourier_coefficient(path, 0, R * 27), abs=1e-12)


def test_wave_table():
    ens = gen_wave(2, 2, 1, 32)
    table = coefficients.coefficient_table(ens.path(0), 2, 2, R=8)
    nonzero = dict(table.nonzero())
    assert set(nonzero) == {(2, 1), (2, 3)}
    assert nonzero[2, 1] == pytest.approx(0.5)
    assert table.constant_term == pytest.approx(-1.0)
    assert np.allclose(coefficients.reconstruct_path(table, 32), ens.values[0])


def test_zero_path_table():
    table = coefficients.coefficient_table(np.zeros(9), 2, 3, R=1)
    assert table.nonzero() == []
    assert len(table.keys) == 7


def test_table_too_short():
    with pytest.raises(SizeError):
        coefficients.coefficient_table(np.zeros(9), 2, 4, R=1)


def test_increment_table():
    table = CoefficientTable(2, 0.5, 2, [1, 1, 1], 4)
    inc = coefficients.increment_table(table)
    assert inc.kind == 'increment'
    assert inc[1, 1] == pytest.approx(-2)
    assert inc[2, 1] == pytest.approx(-1 + 1j)
    assert inc[2, 3] == pytest.approx(-1 - 1j)


def test_reconstruct_at_zero():
    table = CoefficientTable(3, 0.5, 2, np.arange(8) + 1j, 9)
    assert coefficients.reconstruct(table, 0) == pytest.approx(0.0)


def test_table_index_matches_keys():
    table = CoefficientTable(3, 0.5, 3, np.arange(26), 27)
    for i, (m, l) in enumerate(table.keys):
        assert table.index(m, l) == i
    assert len(table.layer(2)) == 6


@pytest.mark.parametrize('generate', [
    lambda: gen_type2_iid(Ex41Config(2, 0.5, STANDARD_NORMAL, 8, K=1), 5, seed=13),
    lambda: gen_type2_shift(Ex42Config(2, 0.5, 8, u_marginal=STANDARD_NORMAL, u_per_layer=True, K=1), 5, seed=13),
])
def test_exact_reconstruction_of_periodic_paths(generate):
    ens = generate()
    # both constructions at depth K = 1 have period p^(K + 1) = 4
    tables = coefficients.coefficient_tables(ens, 2, 2, R=1)
    for table, row in zip(tables, ens.values):
        assert np.allclose(coefficients.reconstruct_path(table, 8), row)
        reconstructed, imag = coefficients.reconstruct(table, 3, return_imag=True)
        assert abs(imag) < 1e-9
        energy = np.sum(np.abs(table.values) ** 2) + abs(table.constant_term) ** 2
        assert energy == pytest.approx(np.mean(row[1:5] ** 2))
        inc = coefficients.increment_table(table)
        for n in range(7):
            assert coefficients.reconstruct(inc, n) == pytest.approx(row[n + 1] - row[n], abs=1e-9)


def test_conjugate_symmetry(gaussian_tables):
    assert all(t.conjugate_symmetric() for t in gaussian_tables[:20])


def test_layer_energy_ratio():
    ens = gen_type2_gaussian(2, 0.5, 1.0, 256, 5000, seed=14)
    tables = coefficients.coefficient_tables(ens, 2, 5, R=8)
    rows = conditions.layer_energies(tables)
    assert math.isnan(rows[0][3])
    for m, energy, stderr, ratio in rows[1:]:
        assert 0.45 <= ratio <= 0.55


def test_table_json_round_trip(gaussian_tables):
    table = gaussian_tables[0]
    restored = CoefficientTable.from_json(json.loads(json.dumps(table.to_json())))
    assert np.allclose(restored.values, table.values)
    assert restored.N_used == table.N_used


### spectral conditions ###
def test_rotation_accepts_type2(gaussian_tables):
    report = conditions.check_rotation(gaussian_tables)
    assert report.passed
    assert report.note == conditions.APPROXIMATION_NOTE


def test_scaling_relation_accepts_type2(gaussian_tables):
    assert conditions.check_scaling_relation(gaussian_tables).passed


def test_scaling_relation_rejects_iid(iid_normal_ensemble):
    tables = coefficients.coefficient_tables(iid_normal_ensemble, 2, 3, R=8, H=0.5)
    report = conditions.check_scaling_relation(tables)
    assert not report.passed
    assert report.rejected_keys


def test_q_permutation_accepts_type2(gaussian_tables):
    assert conditions.check_q_permutation(gaussian_tables, 3).passed


def constant_tables(p, M_max, values, n_tables=200):
    return [CoefficientTable(p, 0.5, M_max, values, p ** M_max) for _ in range(n_tables)]


def test_rotation_rejects_fixed_coefficients():
    tables = constant_tables(2, 2, [1.0, 1.0, 1.0])
    report = conditions.check_rotation(tables)
    assert not report.passed
    assert set(report.rejected_keys) == set(tables[0].keys)


def test_orthogonality_rejects_shared_coefficients():
    rng = np.random.default_rng(37)
    # one circular gaussian shared by every key: rotation invariant marginals, correlated keys
    z = rng.normal(size=400) + 1j * rng.normal(size=400)
    tables = [CoefficientTable(2, 0.5, 2, [v, v, v], 4) for v in z]
    orthogonality = conditions.orthogonality_check(coefficients.stack(tables), tables[0].keys)
    assert orthogonality['n_pairs'] == 3
    assert not orthogonality['passed']
    report = conditions.check_rotation(tables, alpha=0.001)
    assert report.rejected_keys == []
    assert not report.orthogonality['passed']
    assert not report.passed


def test_q_permutation_accepts_periodic_construction():
    ens = gen_type2_iid(Ex41Config(p=3, H=0.5, y_marginal=STANDARD_NORMAL, N=72, K=4), 400, seed=38)
    tables = coefficients.coefficient_tables(ens, 3, 2, R=8)
    assert conditions.check_q_permutation(tables, 2, alpha=0.001).passed


def test_q_permutation_rejects_unequal_coefficients():
    # q = 2 swaps l = 1 and l = 2 on the first layer
    report = conditions.check_q_permutation(constant_tables(3, 1, [1.0, 2.0]), 2)
    assert not report.passed
    assert set(report.rejected_keys) == {(1, 1), (1, 2)}


def test_condition_argument_errors(gaussian_tables):
    with pytest.raises(ValueError):
        conditions.check_q_permutation(gaussian_tables, 2)
    with pytest.raises(ValueError):
        conditions.check_rotation(gaussian_tables[:50])


def test_offgrid_energy(gaussian_ensemble):
    report = conditions.offgrid_energy(gaussian_ensemble, '1/3', 4, R=8)
    assert report.N == 128
    assert report.holds
    with pytest.raises(ValueError):
        conditions.offgrid_energy(gaussian_ensemble, '1/4', 2, p=2, H=0.5)
    with pytest.raises(SizeError):
        conditions.offgrid_energy(gaussian_ensemble, '1/3', 6, R=8)


def test_almost_period():
    assert conditions.almost_period(1.0, 2, 0.5, 1.0) == 1
    assert conditions.almost_period(0.25, 2, 0.5, 1.0) == 4
    for k in range(1, 6):
        assert conditions.almost_period(2.0 ** -k, 2, 0.5, 1.0) == 2 ** k
    assert conditions.almost_period(0.1, 2, 0.5, 0.0) == 1
    with pytest.raises(ValueError):
        conditions.almost_period(0.0, 2, 0.5, 1.0)


def test_increment_energy_at_almost_period(gaussian_ensemble):
    tau = conditions.almost_period(0.25, 2, 0.5, 1.0)
    assert conditions.increment_energy(gaussian_ensemble, tau) <= 0.25 * 1.5


def test_tail_bound():
    assert conditions.tail_bound(2, 0.5, 2, 3, 1.0) == pytest.approx(0.75)
    assert conditions.tail_bound(2, 0.5, 3, 3, 1.0) == pytest.approx(0.25)


def test_tail_energy_within_bound(gaussian_tables):
    energy1, _ = coefficients.layer_energy(gaussian_tables, 1)
    for M_start in (2, 3):
        estimate, stderr = conditions.tail_energy(gaussian_tables, M_start)
        assert estimate <= conditions.tail_bound(2, 0.5, M_start, 3, energy1) + 4 * stderr


### two-sample tests and estimators ###
def test_ks_statistics():
    assert dstats.ks_two_sample([1, 2, 3], [1, 2, 3]).statistic == 0
    assert dstats.ks_two_sample([1, 2], [3, 4]).statistic == 1
    assert dstats.ks_two_sample([1, 2, 3, 4], [2, 3, 4, 5]).statistic == pytest.approx(0.25)
    x, y = [0.1, 0.5, 0.7], [0.2, 0.3, 0.9, 1.1]
    assert dstats.ks_two_sample(x, y).statistic == dstats.ks_two_sample(y, x).statistic
    with pytest.raises(ValueError):
        dstats.ks_two_sample([], [1])


def test_ks_null_uniformity():
    rng = np.random.default_rng(15)
    p_values = [dstats.ks_two_sample(rng.normal(size=50), rng.normal(size=50)).p_value for _ in range(400)]
    assert 0.015 <= np.mean(np.array(p_values) < 0.05) <= 0.09


def test_holm():
    assert dstats.holm([0.001, 0.02, 0.04], 0.05).tolist() == [True, True, True]
    assert dstats.holm([0.001, 0.03, 0.04], 0.05).tolist() == [True, False, False]
    assert dstats.holm([], 0.05).tolist() == []


def test_identical_statistics_accept(gaussian_ensemble):
    sf = ScalingFunction.type2(2, 0.5)
    assert dstats.test_marginal_scaling(gaussian_ensemble, sf, 2, 1).statistic == 0
    assert dstats.test_stationary_increments(gaussian_ensemble, 1, 0).statistic == 0
    with pytest.raises(IndexError):
        dstats.test_marginal_scaling(gaussian_ensemble, sf, 100, 2)


def test_marginal_scaling_accepts_type2(gaussian_ensemble):
    sf = ScalingFunction.type2(2, 0.5)
    reports = [dstats.test_marginal_scaling(gaussian_ensemble, sf, n, f) for n in (1, 3) for f in (2, 3)]
    assert dstats.holm_summary(reports)['passed']


@pytest.fixture(scope='module', params=['periodic', 'shift'])
def construction_ensemble(request):
    if request.param == 'periodic':
        return gen_type2_iid(Ex41Config(p=2, H=0.5, y_marginal=STANDARD_NORMAL, N=12, K=20), 20000, seed=31)
    # default depth, every layer digit is a difference of two fair coins
    return gen_type2_shift(Ex42Config(p=2, b=0.5, N=12, u=(1, -1)), 20000, seed=32)


def test_marginal_scaling_accepts_constructions(construction_ensemble):
    sf = ScalingFunction.type2(2, construction_ensemble.meta['scaling']['H'])
    # factor 3 is a unit for p = 2, so X_3n has the law of X_n
    reports = [dstats.test_marginal_scaling(construction_ensemble, sf, n, f) for n in (1, 2, 3) for f in (2, 3)]
    assert sf(3) == 1
    assert dstats.holm_summary(reports)['passed']


def test_stationary_increments_accept_constructions(construction_ensemble):
    reports = [dstats.test_stationary_increments(construction_ensemble, m, k) for m in range(3) for k in range(3)]
    assert dstats.holm_summary(reports)['passed']


def test_symmetry_accepts_shift_construction():
    ens = gen_type2_shift(Ex42Config(p=2, b=0.5, N=4, u=(1, -1)), 20000, seed=33)
    assert not dstats.symmetry_check(ens).rejected


def test_nonstationary_increments_reject():
    z = np.random.default_rng(16).normal(size=200)
    # ramp up to n = 3, flat afterwards
    values = np.minimum(np.arange(8), 3)[None, :] * z[:, None]
    ens = PathEnsemble(values, {}, 0)
    assert dstats.test_stationary_increments(ens, 0, 4).rejected


def test_empirical_covariance():
    values = np.ones((50, 4))
    values[:, 0] = 0
    ens = PathEnsemble(values, {}, 0)
    estimate, stderr = dstats.empirical_covariance(ens, 1, 2)
    assert estimate == 0 and stderr == 0

    gaussian = gen_type2_gaussian(2, 0.5, 1.0, 4, 300, seed=17)
    permuted = PathEnsemble(gaussian.values[::-1].copy(), gaussian.meta, 0)
    assert dstats.empirical_covariance(gaussian, 2, 4)[0] == pytest.approx(
        dstats.empirical_covariance(permuted, 2, 4)[0])


def test_support_gap():
    estimate, holds = dstats.support_gap_check(np.array([0.9, 1.0, -0.9]), 2, 1.0)
    assert not holds and not estimate.exact
    table = exact_distribution(Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=2), [1])
    estimate, holds = dstats.support_gap_check(table, 2, 1.0)
    assert holds and estimate.exact


def test_symmetry_of_exact_tables():
    table = exact_distribution(Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=1), [1])
    assert dstats.symmetry_check(table).statistic == 0
    shifted = DistributionTable.from_dict({0.0: 0.5, 1.0: 0.5})
    assert dstats.symmetry_check(shifted).rejected


def test_symmetry_needs_paths():
    with pytest.raises(ValueError):
        dstats.symmetry_check(gen_type2_gaussian(2, 0.5, 1.0, 4, 20, seed=0))


### verification checks ###
def test_run_checks_empty_passes(gaussian_ensemble):
    report = run_checks(gaussian_ensemble, [])
    assert report['overall']['passed']
    assert report['overall']['n_tests'] == 0


def test_run_check_errors(gaussian_ensemble):
    with pytest.raises(ConfigError):
        run_check(gaussian_ensemble, 'no_such_check', 0.01)
    with pytest.raises(ConfigError):
        run_check(gaussian_ensemble, {'name': 'covariance', 'bogus': 1}, 0.01)
    with pytest.raises(SizeError):
        run_check(gaussian_ensemble, {'name': 'covariance', 'pairs': [[1, 500]]}, 0.01)


def test_covariance_check_accepts_type2():
    ens = gen_type2_gaussian(2, 0.5, 1.0, 8, 4000, seed=18)
    result = check_covariance(ens, 0.01)
    assert dstats.holm_summary(result.reports)['passed']
    assert result.details['2,4']['expected'] == pytest.approx(0.125)


def test_exact_marginal_check():
    cfg = Ex41Config(p=2, H=1.0, y_marginal=BINARY_Y, N=4, K=1)
    ens = gen_type2_iid(cfg, 20000, seed=19)
    result = check_exact_marginal(ens, 0.01, targets=(1, 2), sigmas=4)
    assert result.certified
    assert result.details['n_configurations'] > 0


def test_exact_marginal_check_shift_construction():
    cfg = Ex42Config(p=2, b=0.5, N=4, u=(1, -1), K=2)
    ens = gen_type2_shift(cfg, 20000, seed=34)
    result = check_exact_marginal(ens, 0.01, targets=(1, 2), sigmas=4)
    assert result.certified
    atoms = [entry['value'] for entry in result.details['X_1']]
    assert atoms == pytest.approx(sorted(-a for a in atoms))


def test_support_gap_check_uses_exact_table():
    ens = gen_type2_shift(Ex42Config(p=2, b=0.5, N=4, u=(1, -1), K=0), 200, seed=20)
    result = check_support_gap(ens, 0.01)
    assert result.certified
    assert result.details['exact']


def test_check_requires_type2(gaussian_ensemble, iid_normal_ensemble):
    with pytest.raises(ConfigError):
        check_covariance(iid_normal_ensemble, 0.01)
    with pytest.raises(ConfigError):
        check_exact_marginal(gaussian_ensemble, 0.01)


### configuration ###
def test_parse_override():
    assert parse_override('spectral.M_max=4') == (['spectral', 'M_max'], 4)
    assert parse_override('output.formats=[csv, h5]') == (['output', 'formats'], ['csv', 'h5'])
    with pytest.raises(ConfigError):
        parse_override('spectral.M_max')


def test_resolve_defaults_and_precedence():
    config = resolve({'generator': gaussian_generator(), 'master_seed': 3}, ['master_seed=5'], seed=9, out='x')
    assert config['master_seed'] == 9
    assert config['output']['directory'] == 'x'
    assert config['spectral']['R'] == 8


def test_resolve_strictness():
    with pytest.raises(ConfigError, match='spectral.bogus'):
        resolve({'generator': gaussian_generator(), 'master_seed': 1, 'spectral': {'bogus': 1}})
    with pytest.raises(ConfigError, match='verification.alpha'):
        resolve({'generator': gaussian_generator(), 'master_seed': 1, 'verification': {'alpha': 'high'}})
    with pytest.raises(ConfigError):
        resolve({'generator': gaussian_generator(), 'master_seed': 1, 'verification': {'checks': ['no_such_check']}})
    with pytest.raises(ConfigError):
        resolve({'generator': gaussian_generator(), 'master_seed': -1})
    with pytest.raises(ConfigError, match='spectral.p'):
        resolve({'generator': gaussian_generator(), 'master_seed': 1, 'spectral': {'p': 4}})
    # integers are fine where floats are expected
    config = resolve({'generator': gaussian_generator(), 'master_seed': 1, 'spectral': {'epsilon': 1}})
    assert config['spectral']['epsilon'] == 1


def test_master_seed_is_required():
    with pytest.raises(ConfigError, match='master_seed'):
        resolve({'generator': gaussian_generator()})
    assert resolve({'generator': gaussian_generator()}, seed=4)['master_seed'] == 4


def test_manifest_is_a_config():
    experiment = ExperimentConfig.resolve({'generator': gaussian_generator(), 'master_seed': 2})
    assert ExperimentConfig(experiment.to_json()).to_json() == experiment.to_json()


CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', '..', 'config')


@pytest.mark.skipif(not os.path.isdir(CONFIG_DIR), reason='example configs live in the source tree only')
def test_example_configs_resolve():
    names = sorted(n for n in os.listdir(CONFIG_DIR) if n.endswith('.yaml'))
    assert 'type1_control.yaml' in names
    for name in names:
        experiment = ExperimentConfig.resolve(os.path.join(CONFIG_DIR, name))
        assert experiment.master_seed is not None
    control = ExperimentConfig.resolve(os.path.join(CONFIG_DIR, 'type1_control.yaml'))
    assert control.spectral['p'] == 2


### command line ###
def test_generate_writes_ensemble(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20, N=16))
    assert main(['generate', '--config', config]) == 0
    with open(tmp_path / 'out' / ENSEMBLE_CSV) as f:
        lines = f.read().splitlines()
    assert lines[0] == 'path,n,value'
    assert len(lines) == 1 + 20 * 17
    meta = json.loads(read_bytes(str(tmp_path / 'out' / META_JSON)))
    assert meta['master_seed'] == 7 and meta['M'] == 20
    assert os.path.isfile(tmp_path / 'out' / 'manifest.json')


def test_generate_byte_identical(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20, N=16))
    assert main(['generate', '--config', config, '--out', str(tmp_path / 'a')]) == 0
    assert main(['generate', '--config', config, '--out', str(tmp_path / 'b')]) == 0
    for name in (ENSEMBLE_CSV, META_JSON):
        assert read_bytes(str(tmp_path / 'a' / name)) == read_bytes(str(tmp_path / 'b' / name))


def test_manifest_reproduces_output(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=10, N=8))
    assert main(['generate', '--config', config, '--seed', '99']) == 0
    manifest = str(tmp_path / 'out' / 'manifest.json')
    assert main(['generate', '--config', manifest, '--out', str(tmp_path / 'again')]) == 0
    assert read_bytes(str(tmp_path / 'out' / ENSEMBLE_CSV)) == read_bytes(str(tmp_path / 'again' / ENSEMBLE_CSV))


def test_set_override(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20, N=16))
    assert main(['generate', '--config', config, '--set', 'generator.M=5']) == 0
    with open(tmp_path / 'out' / ENSEMBLE_CSV) as f:
        assert len(f.read().splitlines()) == 1 + 5 * 17


def test_unknown_field_exit_code(tmp_path, capsys):
    generator = {**gaussian_generator(), 'bogus': 1}
    config = write_config(tmp_path, generator)
    assert main(['generate', '--config', config]) == 2
    assert 'generator.bogus' in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(['generate', '--config', str(tmp_path / 'missing.yaml')]) == 2


def test_verify_gaussian_passes(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=2000, N=16),
                          verification={'checks': ['marginal_scaling', 'stationary_increments', 'covariance']})
    assert main(['generate', '--config', config]) == 0
    assert main(['verify', '--config', config, '--strict']) == 0
    report = json.loads(read_bytes(str(tmp_path / 'out' / 'verify_report.json')))
    assert report['overall']['passed']
    assert report['overall']['n_tests'] == 18


def test_verify_type1_control_fails(tmp_path):
    checks = [{'name': 'marginal_scaling', 'scaling': {'kind': 'type2', 'p': 2, 'H': 0.5}}]
    config = write_config(tmp_path, type1_control_generator(), verification={'checks': checks})
    assert main(['verify', '--config', config]) == 0
    report = json.loads(read_bytes(str(tmp_path / 'out' / 'verify_report.json')))
    assert not report['overall']['passed']
    assert main(['verify', '--config', config, '--strict']) == 4


def test_verify_empty_checks(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20))
    assert main(['verify', '--config', config, '--strict']) == 0


def test_verify_missing_ensemble(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20))
    assert main(['verify', '--config', config, '--set', 'output.generate_missing=false']) == 3


def test_stored_ensemble_is_reused(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20), output={'directory': str(tmp_path / 'out'),
                                                                     'formats': ['csv', 'h5']})
    assert main(['generate', '--config', config]) == 0
    experiment = ExperimentConfig.resolve(config)
    stored = EnsembleExportController(str(tmp_path / 'out')).load()
    assert stored.master_seed == experiment.master_seed
    assert stored.M == 20


def test_spectral_wave(tmp_path):
    generator = {'kind': 'wave', 'p': 2, 'm': 3, 'l': 3, 'N': 64, 'M': 1}
    config = write_config(tmp_path, generator, spectral={'M_max': 3, 'R': 8, 'checks': []})
    assert main(['spectral', '--config', config]) == 0
    tables = json.loads(read_bytes(str(tmp_path / 'out' / 'tables.json')))
    entries = {(e['m'], e['l']): complex(e['re'], e['im']) for e in tables['tables'][0]['entries']}
    assert entries[3, 3] == pytest.approx(0.5)
    assert entries[3, 5] == pytest.approx(0.5)
    assert abs(entries[1, 1]) < 1e-12
    with open(tmp_path / 'out' / 'layer_energy.csv') as f:
        assert f.readline().strip() == 'layer,m,energy,stderr,ratio'


def test_spectral_too_short(tmp_path, capsys):
    generator = {'kind': 'wave', 'p': 2, 'm': 3, 'l': 3, 'N': 64, 'M': 1}
    config = write_config(tmp_path, generator)
    assert main(['spectral', '--config', config, '--set', 'spectral.M_max=5']) == 3
    assert 'required length' in capsys.readouterr().err


def test_spectral_conditions_on_type2(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=300, N=64),
                          spectral={'M_max': 3, 'R': 8, 'checks': ['rotation', 'tail', 'almost_period']})
    assert main(['spectral', '--config', config, '--strict']) == 0
    report = json.loads(read_bytes(str(tmp_path / 'out' / 'spectral_report.json')))
    assert set(report['conditions']) == {'rotation', 'tail', 'almost_period'}
    assert len(report['layer_energies']) == 3


def test_spectral_type1_control_rejects(tmp_path):
    spectral = {'M_max': 3, 'R': 2, 'p': 2, 'H': 0.5, 'checks': ['scaling_relation']}
    config = write_config(tmp_path, type1_control_generator(), spectral=spectral)
    assert main(['spectral', '--config', config]) == 0
    report = json.loads(read_bytes(str(tmp_path / 'out' / 'spectral_report.json')))
    assert report['p'] == 2
    assert not report['conditions']['scaling_relation']['passed']
    assert main(['spectral', '--config', config, '--strict']) == 4


def test_spectral_needs_a_prime(tmp_path, capsys):
    config = write_config(tmp_path, type1_control_generator(M=200), spectral={'M_max': 3, 'R': 2})
    assert main(['spectral', '--config', config]) == 2
    assert 'spectral.p' in capsys.readouterr().err


def test_report(tmp_path):
    config = write_config(tmp_path, gaussian_generator(M=20))
    assert main(['report', '--config', config]) == 3
    assert main(['verify', '--config', config]) == 0
    assert main(['report', '--config', config]) == 0


### export ###
def test_export_and_load(tmp_path):
    ens = gen_type2_gaussian(2, 0.5, 1.0, 8, 6, seed=21)
    for formats in (('csv',), ('csv', 'h5')):
        directory = str(tmp_path / '_'.join(formats))
        controller = EnsembleExportController(directory, formats)
        controller.export(ens)
        loaded = controller.load()
        assert np.array_equal(loaded.values, ens.values)
        assert loaded.meta == ens.meta
        assert loaded.master_seed == 21
        assert loaded.seeds == ens.seeds


def test_load_empty_directory(tmp_path):
    with pytest.raises(SizeError):
        EnsembleExportController(str(tmp_path)).load()
