"""Sample path generators for discrete time self-similar processes with stationary increments.

Type I:   i.i.d. sequences, b(n) = 1.
Type II:  b(n) = |n|_p^H, from the periodic i.i.d. construction, the random shift construction
          and the Gaussian process with the matching covariance.
Type III: b(n) = n^H, the discrete fractional Brownian motion.

Every generator produces the paths of an ensemble chunk by chunk from per path seeds, so a chunk can
be handed to a worker process and the result does not depend on the chunking."""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, asdict, fields

import multiprocess
import numpy as np
from scipy import linalg, stats

from dtsssi.core import helpers
from dtsssi.core.errors import ConfigError, SizeError, FactorizationError
from dtsssi.core.padic import ScalingFunction, is_prime
from dtsssi.core.paths import PathEnsemble
from dtsssi.generation.marginals import Marginal

MAX_PERIOD = 2 ** 62
TRUNCATION_TOL = 1e-12
JITTER_LADDER = (0.0, 1e-12, 1e-10)
ZERO_SUM_TOL = 1e-12


def default_depth(p, b):
    """Truncation depth K with b**K <= 1e-12, clamped so that p**(K + 1) stays an index."""
    K = max(0, math.ceil(math.log(TRUNCATION_TOL) / math.log(b)))
    K_max = max_depth(p)
    if K > K_max:
        logging.warning(f'truncation depth {K} needs periods beyond 2**62 for p={p}, clamping to {K_max}')
        K = K_max
    return K


def max_depth(p):
    K = 0
    while p ** (K + 2) <= MAX_PERIOD:
        K += 1
    return K


def check_depth(p, K):
    if K < 0:
        raise ConfigError(f'truncation depth K must be nonnegative, got {K}')
    if p ** (K + 1) > MAX_PERIOD:
        raise SizeError(f'p**(K + 1) = {p}**{K + 1} exceeds the index range 2**62 (largest K for p={p} is '
                        f'{max_depth(p)})')


def strict_fields(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f'{section} must be a mapping')
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f'Parameter "{section}.{key}" is unknown')


def _check_prime(p, section):
    if not is_prime(p):
        raise ConfigError(f'{section}.p must be a prime, got {p!r}')


def _check_N(N, section):
    if not isinstance(N, int) or N < 1:
        raise ConfigError(f'{section}.N must be a positive integer, got {N!r}')


### configs ###
@dataclass
class Type1Config:
    marginal: Marginal
    N: int

    def __post_init__(self):
        self.marginal = Marginal.from_json(self.marginal)
        _check_N(self.N, 'generator')

    def to_json(self):
        return {'marginal': self.marginal.to_json(), 'N': self.N}


@dataclass
class Ex41Config:
    """Periodic i.i.d. construction X_n = sum_k b^k (Y_n^k - Y_0^k) with b = p^-H."""
    p: int
    H: float
    y_marginal: Marginal
    N: int
    K: int = None

    def __post_init__(self):
        _check_prime(self.p, 'generator')
        if not self.H > 0:
            raise ConfigError(f'generator.H must be positive, got {self.H}')
        self.y_marginal = Marginal.from_json(self.y_marginal)
        _check_N(self.N, 'generator')
        if self.K is None:
            self.K = default_depth(self.p, self.b)
        check_depth(self.p, self.K)

    @property
    def b(self):
        return float(self.p) ** -self.H

    @property
    def scaling(self):
        return ScalingFunction.type2(self.p, self.H)

    def to_json(self):
        return {'p': self.p, 'H': self.H, 'y_marginal': self.y_marginal.to_json(), 'N': self.N, 'K': self.K}


@dataclass
class Ex42Config:
    """Random shift construction.

    `u` is either a fixed zero sum vector of length p, or None together with `u_marginal`, in which case
    the p entries are drawn i.i.d. from `u_marginal` and centered. `u_per_layer` draws an independent copy
    of u for every layer instead of one shared vector per path."""
    p: int
    b: float
    N: int
    u: tuple = None
    u_marginal: Marginal = None
    u_per_layer: bool = False
    K: int = None

    def __post_init__(self):
        _check_prime(self.p, 'generator')
        if not 0 < self.b < 1:
            raise ConfigError(f'generator.b must lie in (0, 1), got {self.b}')
        _check_N(self.N, 'generator')
        if (self.u is None) == (self.u_marginal is None):
            raise ConfigError('generator needs exactly one of "u" (fixed vector) and "u_marginal" (random u)')
        if self.u is not None:
            self.u = tuple(float(x) for x in self.u)
            if len(self.u) != self.p:
                raise ConfigError(f'generator.u must have p = {self.p} entries, got {len(self.u)}')
            if abs(sum(self.u)) > ZERO_SUM_TOL * max(1.0, max(abs(x) for x in self.u)):
                raise ConfigError(f'generator.u must sum to zero, sums to {sum(self.u)}')
            if self.u_per_layer:
                raise ConfigError('generator.u_per_layer needs a random u ("u_marginal")')
        else:
            self.u_marginal = Marginal.from_json(self.u_marginal)
        if self.K is None:
            self.K = default_depth(self.p, self.b)
        check_depth(self.p, self.K)

    @property
    def H(self):
        return -math.log(self.b) / math.log(self.p)

    @property
    def scaling(self):
        return ScalingFunction.type2(self.p, self.H)

    @property
    def u_mode(self):
        if self.u is not None:
            return 'deterministic'
        return 'per_layer' if self.u_per_layer else 'shared'

    def to_json(self):
        out = {'p': self.p, 'b': self.b, 'N': self.N, 'K': self.K, 'u_per_layer': self.u_per_layer}
        if self.u is not None:
            out['u'] = list(self.u)
        else:
            out['u_marginal'] = self.u_marginal.to_json()
        return out


@dataclass
class GaussianType2Config:
    p: int
    H: float
    N: int
    var: float = 1.0

    def __post_init__(self):
        _check_prime(self.p, 'generator')
        if not self.H > 0:
            raise ConfigError(f'generator.H must be positive, got {self.H}')
        if not self.var > 0:
            raise ConfigError(f'generator.var must be positive, got {self.var}')
        _check_N(self.N, 'generator')

    @property
    def scaling(self):
        return ScalingFunction.type2(self.p, self.H)

    def to_json(self):
        return asdict(self)


@dataclass
class GaussianType3Config:
    H: float
    N: int
    var: float = 1.0

    def __post_init__(self):
        if not 0 < self.H <= 1:
            raise ConfigError(f'generator.H must lie in (0, 1], got {self.H}')
        if not self.var > 0:
            raise ConfigError(f'generator.var must be positive, got {self.var}')
        _check_N(self.N, 'generator')

    @property
    def scaling(self):
        return ScalingFunction.type3(self.H)

    def to_json(self):
        return asdict(self)


@dataclass
class WaveConfig:
    """Deterministic wave X_n = Re(A e(n l / p^m)) - Re(A), A = amp_re + i amp_im; a synthetic spectral input."""
    p: int
    m: int
    l: int
    N: int
    amp_re: float = 1.0
    amp_im: float = 0.0

    def __post_init__(self):
        _check_prime(self.p, 'generator')
        _check_N(self.N, 'generator')
        if self.m < 1 or not 0 < self.l < self.p ** self.m or self.l % self.p == 0:
            raise ConfigError(f'wave frequency l / p^m = {self.l}/{self.p}^{self.m} is not a reduced p-adic fraction')

    def to_json(self):
        return asdict(self)


### generators ###
class ProcessGenerator(ABC):
    kind = None
    config_class = None

    def __init__(self, config):
        if isinstance(config, dict):
            strict_fields(self.config_class, config, 'generator')
            try:
                config = self.config_class(**config)
            except TypeError as e:
                raise ConfigError(f'generator "{self.kind}": {e}')
        self.config = config

    @property
    def N(self):
        return self.config.N

    @property
    def scaling(self):
        return getattr(self.config, 'scaling', None)

    @abstractmethod
    def _generate_chunk(self, seeds):
        """Returns the (len(seeds), N + 1) value matrix for the given per path seeds."""
        pass

    def meta(self):
        out = {'generator': self.kind, 'config': self.config.to_json()}
        if self.scaling is not None:
            out['scaling'] = self.scaling.to_json()
        return out

    def generate(self, M, seed, workers=1):
        if M < 1:
            raise ConfigError(f'number of paths M must be positive, got {M}')
        seeds = helpers.path_seeds(seed, 0, M)
        ranges = helpers.chunk_ranges(M, max(workers, 1) * 4 if workers > 1 else 1)
        if workers > 1 and len(ranges) > 1:
            with multiprocess.Pool(workers) as pool:
                parts = pool.map(self._generate_chunk, [seeds[s:e] for s, e in ranges])
        else:
            parts = [self._generate_chunk(seeds[s:e]) for s, e in ranges]
        values = np.concatenate(parts, axis=0)
        return PathEnsemble(values, self.meta(), seed, tuple(int(s) for s in seeds))


class Type1Generator(ProcessGenerator):
    kind = 'type1_iid'
    config_class = Type1Config

    @property
    def scaling(self):
        return ScalingFunction.type1()

    def _generate_chunk(self, seeds):
        u = helpers.uniforms(seeds, helpers.SALT_IID, 0, np.arange(self.N + 1))
        return self.config.marginal.ppf(u)


class Ex41Generator(ProcessGenerator):
    kind = 'type2_iid'
    config_class = Ex41Config

    def meta(self):
        out = super().meta()
        cfg = self.config
        var = cfg.y_marginal.var()
        # L2 norm of the omitted layers, each term b^k (Y_n^k - Y_0^k) has norm at most sqrt(2 Var Y)
        out['truncation_l2_bound'] = (math.sqrt(2 * var) * cfg.b ** (cfg.K + 1) / (1 - cfg.b)
                                      if np.isfinite(var) else None)
        return out

    def _generate_chunk(self, seeds):
        cfg = self.config
        n = np.arange(cfg.N + 1, dtype=np.int64)
        X = np.zeros((len(seeds), cfg.N + 1))
        for k in range(cfg.K + 1):
            period = cfg.p ** (k + 1)
            # only the residues n mod p^(k+1) that occur up to N are ever looked at
            residues, position = np.unique(n % period, return_inverse=True)
            Y = cfg.y_marginal.ppf(helpers.uniforms(seeds, helpers.SALT_Y, k, residues))
            X += cfg.b ** k * (Y[:, position] - Y[:, :1])
        X[:, 0] = 0.0
        return X


def u_prefix_sums(u):
    """prefix[..., r] = u_1 + ... + u_r for r < p; prefix[..., 0] = 0."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros(u.shape)
    out[..., 1:] = np.cumsum(u[..., 1:], axis=-1)
    return out


def shift_positions(U, J, n, p, k):
    """((U + J n) // p^k) mod p for every path and n, without forming U + J n.

    The digit only depends on U + J n modulo p^(k+1), which is accumulated step by step when J n could
    overflow 64 bit integers."""
    period = p ** (k + 1)
    U = np.asarray(U, dtype=np.int64)[:, None]
    J = np.asarray(J, dtype=np.int64)[:, None]
    n_max = int(n[-1]) if len(n) else 0
    if period * (n_max + 2) < 2 ** 63:
        t = (U + J * n[None, :]) % period
    else:
        t = np.empty((len(U), len(n)), dtype=np.int64)
        current = U[:, 0] % period
        previous = 0
        for i, n_i in enumerate(n):
            for _ in range(int(n_i) - previous):
                current = (current + J[:, 0]) % period
            previous = int(n_i)
            t[:, i] = current
    return (t // p ** k) % p


class Ex42Generator(ProcessGenerator):
    kind = 'type2_shift'
    config_class = Ex42Config

    def meta(self):
        out = super().meta()
        cfg = self.config
        out['u_mode'] = cfg.u_mode
        if cfg.u is not None:
            # every layer partial sum is bounded by p max|u|
            out['truncation_sup_bound'] = cfg.p * max(abs(x) for x in cfg.u) * cfg.b ** (cfg.K + 1) / (1 - cfg.b)
        return out

    def draw_u(self, seeds, k):
        """The realized zero sum vectors u for layer k, shape (paths, p)."""
        cfg = self.config
        if cfg.u is not None:
            return np.broadcast_to(np.asarray(cfg.u), (len(seeds), cfg.p))
        layer = k if cfg.u_per_layer else 0
        u = cfg.u_marginal.ppf(helpers.uniforms(seeds, helpers.SALT_U, layer, np.arange(cfg.p)))
        return u - u.mean(axis=1, keepdims=True)

    def _generate_chunk(self, seeds):
        cfg = self.config
        n = np.arange(cfg.N + 1, dtype=np.int64)
        X = np.zeros((len(seeds), cfg.N + 1))
        rows = np.arange(len(seeds))[:, None]
        for k in range(cfg.K + 1):
            period = cfg.p ** (k + 1)
            J = helpers.integers(seeds, helpers.SALT_SELECT, k, [0], period)[:, 0]
            # only the shift U_k^j of the selected j = J_k enters the path
            U = helpers.integers(seeds, helpers.SALT_SHIFT, k, J[:, None], period)[:, 0]
            prefix = u_prefix_sums(self.draw_u(seeds, k))
            # sum_{m=1}^{Jn} V_k(m + U) = G(U + Jn) - G(U) with G(x) = prefix[(x // p^k) mod p]
            layer = prefix[rows, shift_positions(U, J, n, cfg.p, k)] - prefix[rows[:, 0], (U // cfg.p ** k) % cfg.p][:, None]
            layer[J == 0] = 0.0
            X += cfg.b ** k * layer
        X[:, 0] = 0.0
        return X


class GaussianGenerator(ProcessGenerator):
    """Zero mean Gaussian paths from a closed form covariance of X_1..X_N; X_0 = 0."""

    @abstractmethod
    def covariance(self, ns, ms):
        pass

    def covariance_matrix(self, indices=None):
        ns = np.arange(1, self.N + 1) if indices is None else np.asarray(indices, dtype=np.int64)
        C = self.covariance(ns[:, None], ns[None, :])
        assert np.allclose(C, C.T, rtol=0, atol=1e-12), 'covariance matrix is not symmetric'
        return C

    def factor(self, C):
        trace = float(np.trace(C))
        min_eig = float(np.linalg.eigvalsh(C)[0]) if len(C) else 0.0
        if min_eig < -1e-10 * max(trace, 1e-300):
            raise FactorizationError(f'covariance has eigenvalue {min_eig:.3e} below -1e-10 * trace; assembly is broken')
        scale = trace / max(len(C), 1)
        for jitter in JITTER_LADDER:
            try:
                L = linalg.cholesky(C + jitter * scale * np.eye(len(C)), lower=True)
            except linalg.LinAlgError:
                continue
            if jitter > 0:
                logging.warning(f'covariance factorization needed jitter {jitter:g} * trace/dim')
            return L
        raise FactorizationError('covariance factorization failed after jitter escalation')

    def sample_at(self, indices, seeds, L=None):
        """Joint samples of (X_i for i in indices) for every seed; index 0 is the constant 0."""
        indices = np.asarray(indices, dtype=np.int64)
        out = np.zeros((len(seeds), len(indices)))
        positive = indices > 0
        if np.any(positive):
            if L is None:
                L = self.factor(self.covariance_matrix(indices[positive]))
            z = stats.norm.ppf(helpers.uniforms(seeds, helpers.SALT_GAUSS, 0, np.arange(int(positive.sum()))))
            out[:, positive] = z @ L.T
        return out

    def generate(self, M, seed, workers=1):
        # factor once before any fan out
        if getattr(self, '_L', None) is None:
            self._L = self.factor(self.covariance_matrix())
        return super().generate(M, seed, workers)

    def _generate_chunk(self, seeds):
        if getattr(self, '_L', None) is None:
            self._L = self.factor(self.covariance_matrix())
        return self.sample_at(np.arange(self.N + 1), seeds, self._L)


class GaussianType2Generator(GaussianGenerator):
    kind = 'type2_gaussian'
    config_class = GaussianType2Config

    def covariance(self, ns, ms):
        cfg = self.config
        sf = cfg.scaling
        ns, ms = np.broadcast_arrays(ns, ms)
        diff = np.abs(ns - ms)
        # |0|_p := 0
        bd = np.where(diff > 0, sf.values(np.maximum(diff, 1)), 0.0)
        return 0.5 * (sf.values(ns) ** 2 + sf.values(ms) ** 2 - bd ** 2) * cfg.var


class GaussianType3Generator(GaussianGenerator):
    kind = 'type3_gaussian'
    config_class = GaussianType3Config

    def covariance(self, ns, ms):
        cfg = self.config
        ns, ms = np.broadcast_arrays(np.asarray(ns, dtype=np.float64), np.asarray(ms, dtype=np.float64))
        two_h = 2 * cfg.H
        return 0.5 * (ns ** two_h + ms ** two_h - np.abs(ns - ms) ** two_h) * cfg.var


class WaveGenerator(ProcessGenerator):
    kind = 'wave'
    config_class = WaveConfig

    def _generate_chunk(self, seeds):
        cfg = self.config
        n = np.arange(cfg.N + 1, dtype=np.int64)
        amp = complex(cfg.amp_re, cfg.amp_im)
        period = cfg.p ** cfg.m
        wave = (amp * np.exp(2j * np.pi * ((n * cfg.l) % period) / period)).real - amp.real
        return np.broadcast_to(wave, (len(seeds), cfg.N + 1)).copy()


GENERATORS = {g.kind: g for g in (Type1Generator, Ex41Generator, Ex42Generator, GaussianType2Generator,
                                  GaussianType3Generator, WaveGenerator)}


def make_generator(kind, config):
    if kind not in GENERATORS:
        raise ConfigError(f'generator.kind "{kind}" is unknown, known kinds: {sorted(GENERATORS)}')
    return GENERATORS[kind](config)


### functional front ###
def gen_type1_iid(marginal, N, M, seed, workers=1):
    return Type1Generator(Type1Config(marginal, N)).generate(M, seed, workers)


def gen_type2_iid(cfg, M, seed, workers=1):
    return Ex41Generator(cfg).generate(M, seed, workers)


def gen_type2_shift(cfg, M, seed, workers=1):
    return Ex42Generator(cfg).generate(M, seed, workers)


def gen_type2_gaussian(p, H, var, N, M, seed, workers=1):
    return GaussianType2Generator(GaussianType2Config(p, H, N, var)).generate(M, seed, workers)


def gen_type3_gaussian(H, var, N, M, seed, workers=1):
    return GaussianType3Generator(GaussianType3Config(H, N, var)).generate(M, seed, workers)


def gen_wave(p, m, l, N, amplitude=1.0, M=1, seed=0):
    amplitude = complex(amplitude)
    return WaveGenerator(WaveConfig(p, m, l, N, amplitude.real, amplitude.imag)).generate(M, seed)
