"""Finite dimensional laws of a type III process at rational times.

(Y(s_1/t_1), ..., Y(s_n/t_n)) is sampled as T^-H (X_{s_1 T/t_1}, ..., X_{s_n T/t_n}) with T the
product of the denominators (or their lcm); by self-similarity the law does not depend on the choice
of common denominator."""
import math
from fractions import Fraction

import numpy as np

from dtsssi.core import helpers
from dtsssi.core.errors import ConfigError, SizeError
from dtsssi.generation.generators import GaussianType3Config, GaussianType3Generator, MAX_PERIOD, strict_fields


def common_denominator(times, denominator='product'):
    dens = [t.denominator for t in times]
    if denominator == 'product':
        return math.prod(dens)
    if denominator == 'lcm':
        return math.lcm(*dens)
    raise ValueError(f'denominator must be "product" or "lcm", got {denominator!r}')


def rational_time_sample(base, times, M, seed, denominator='product'):
    """(M, len(times)) matrix of joint draws of the process at the given nonnegative rational times.

    `base` is a GaussianType3Config (or its dict form); only the integer indices the times map to are
    drawn, jointly, from the base covariance, which is the law of those entries of one long path."""
    if isinstance(base, dict):
        strict_fields(GaussianType3Config, base, 'base')
        try:
            base = GaussianType3Config(**{'N': 1, **base})
        except TypeError as e:
            raise ConfigError(f'rational time base: {e}')
    if not isinstance(base, GaussianType3Config):
        raise ConfigError('rational time sampling needs a type III base configuration')
    times = [Fraction(t) for t in times]
    if not times:
        raise ValueError('times must be nonempty')
    if any(t < 0 for t in times):
        raise ValueError('times must be nonnegative')
    T = common_denominator(times, denominator)
    indices = [t.numerator * (T // t.denominator) for t in times]
    if max(indices) > MAX_PERIOD:
        raise SizeError(f'rational times need integer index {max(indices)}, beyond the index range 2**62')
    generator = GaussianType3Generator(GaussianType3Config(base.H, max(max(indices), 1), base.var))
    seeds = helpers.path_seeds(seed, 0, M)
    return float(T) ** -base.H * generator.sample_at(np.asarray(indices, dtype=np.int64), seeds)
