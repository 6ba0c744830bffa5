"""Fourier coefficients of paths at p-adic rational frequencies.

A coefficient is the average A(lambda) = (1/N) sum_{n=1}^N X_n e(-n lambda) over whole periods
N = R p^M_max, with e(x) = exp(2 pi i x). Tables hold every reduced frequency l / p^m, 1 <= m <= M_max,
together with the constant term at lambda = 0."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from dtsssi.core.errors import SizeError
from dtsssi.core.padic import is_prime
from dtsssi.core.paths import PathEnsemble, SamplePath

DEFAULT_R_PERIODIC = 1
DEFAULT_R = 8
MAX_HORIZON = 2 ** 26


def e(x):
    """exp(2 pi i x) for a rational x, reduced exactly modulo 1 before the float phase is formed."""
    x = Fraction(x)
    reduced = Fraction(x.numerator % x.denominator, x.denominator)
    return complex(np.exp(2j * np.pi * float(reduced)))


def layer_keys(p, M_max):
    """All (m, l) with 1 <= m <= M_max, 0 < l < p^m and p not dividing l, by layer then residue."""
    return [(m, l) for m in range(1, M_max + 1) for l in range(1, p ** m) if l % p]


def _values_of(path):
    if isinstance(path, SamplePath):
        return path.values
    values = np.asarray(path)
    assert values.ndim == 1, 'a path is one dimensional'
    return values


def _matrix_of(paths):
    if isinstance(paths, PathEnsemble):
        return paths.values
    if isinstance(paths, SamplePath):
        return paths.values[None, :]
    values = np.asarray(paths)
    return values[None, :] if values.ndim == 1 else values


def fourier_coefficient(path, lam, N):
    """(1/N) sum_{n=1}^N X_n e(-n lambda) for a rational lambda."""
    values = _values_of(path)
    if N < 1 or N > len(values) - 1:
        raise SizeError(f'horizon N = {N} needs a path of length {N + 1}, got {len(values)}')
    lam = Fraction(lam)
    n = np.arange(1, N + 1, dtype=object if N * lam.numerator >= 2 ** 62 else np.int64)
    # phases from the exact residue of n * numerator modulo the denominator
    phases = ((n * lam.numerator) % lam.denominator).astype(np.float64) / lam.denominator
    return complex(np.mean(values[1:N + 1] * np.exp(-2j * np.pi * phases)))


@dataclass
class CoefficientTable:
    p: int
    H: float
    M_max: int
    values: np.ndarray
    N_used: int
    constant_term: complex = 0j
    kind: str = 'level'

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        assert len(self.values) == len(self.keys), 'one value per (m, l) key'
        assert self.kind in ('level', 'increment'), f'unknown table kind {self.kind}'

    @property
    def keys(self):
        return layer_keys(self.p, self.M_max)

    def index(self, m, l):
        # keys of layers below m come first: p^(m-1) - 1 of them
        assert 1 <= m <= self.M_max and 0 < l < self.p ** m and l % self.p, f'({m}, {l}) is not a table key'
        return self.p ** (m - 1) - 1 + (l - 1) - (l - 1) // self.p

    def __getitem__(self, key):
        return self.values[self.index(*key)]

    def layer(self, m):
        start = self.p ** (m - 1) - 1
        return self.values[start:start + self.p ** m - self.p ** (m - 1)]

    def conjugate_symmetric(self, tol=1e-9):
        """A_{p^m - l} = conj(A_l) for every key, which holds for tables of real paths."""
        mirrored = np.array([self[m, self.p ** m - l] for m, l in self.keys])
        return bool(np.allclose(mirrored, np.conj(self.values), rtol=0, atol=tol))

    def nonzero(self, tol=1e-10):
        return [(key, complex(v)) for key, v in zip(self.keys, self.values) if abs(v) > tol]

    def to_json(self):
        return {'p': self.p, 'H': self.H, 'M_max': self.M_max, 'N_used': self.N_used, 'kind': self.kind,
                'constant': {'re': self.constant_term.real, 'im': self.constant_term.imag},
                'entries': [{'m': m, 'l': l, 're': v.real, 'im': v.imag}
                            for (m, l), v in zip(self.keys, self.values.tolist())]}

    @classmethod
    def from_json(cls, data):
        entries = {(d['m'], d['l']): complex(d['re'], d['im']) for d in data['entries']}
        keys = layer_keys(data['p'], data['M_max'])
        return cls(data['p'], data['H'], data['M_max'], [entries.get(k, 0j) for k in keys], data['N_used'],
                   complex(data['constant']['re'], data['constant']['im']), data.get('kind', 'level'))


def _frequency_bins(p, M_max, R):
    """FFT bin k = l R p^(M_max - m) of every key at horizon N = R p^M_max."""
    return np.array([l * R * p ** (M_max - m) for m, l in layer_keys(p, M_max)], dtype=np.int64)


def _twiddles(p, M_max):
    """e(-l / p^m) per key; shifts the FFT over n = 1..N to the coefficient definition."""
    return np.array([e(Fraction(-l, p ** m)) for m, l in layer_keys(p, M_max)])


def coefficient_tables(paths, p, M_max, R=DEFAULT_R, H=None):
    """Tables of every path of an ensemble (or a value matrix), one FFT per path."""
    if not is_prime(p):
        raise ValueError(f'p must be a prime, got {p}')
    if M_max < 1 or R < 1:
        raise ValueError('M_max and R must be positive')
    N = R * p ** M_max
    if N > MAX_HORIZON:
        raise SizeError(f'horizon R * p^M_max = {N} exceeds the budget {MAX_HORIZON}')
    values = _matrix_of(paths)
    if values.shape[1] < N + 1:
        raise SizeError(f'required length {N + 1} (R * p^M_max + 1) for M_max={M_max}, R={R}, got paths of '
                        f'length {values.shape[1]}')
    if H is None:
        H = _exponent_from_meta(paths)
    spectrum = np.fft.fft(values[:, 1:N + 1], axis=1) / N
    entries = spectrum[:, _frequency_bins(p, M_max, R)] * _twiddles(p, M_max)[None, :]
    # lambda = 0 needs no twiddle
    constants = spectrum[:, 0]
    return [CoefficientTable(p, H, M_max, row, N, complex(c)) for row, c in zip(entries, constants)]


def _exponent_from_meta(paths):
    meta = getattr(paths, 'meta', None) or {}
    return float(meta.get('scaling', {}).get('H') or 0.0)


def coefficient_table(path, p, M_max, R=DEFAULT_R, H=None):
    """Table of one path at horizon N = R p^M_max."""
    return coefficient_tables(path if isinstance(path, SamplePath) else _values_of(path), p, M_max, R, H)[0]


def increment_table(table):
    """Coefficients of the increment sequence X_{n+1} - X_n: A (e(l / p^m) - 1), no constant term."""
    factors = _characters(table, 1) - 1
    return CoefficientTable(table.p, table.H, table.M_max, table.values * factors, table.N_used, 0j, 'increment')


def _characters(table, n):
    n = int(n)
    return np.array([e(Fraction(n * l, table.p ** m)) for m, l in table.keys])


def reconstruct(table, n, return_imag=False):
    """Fourier sum at index n.

    Level tables use the zero anchored representation sum A (e(n lambda) - 1), which vanishes at n = 0;
    increment tables sum A e(n lambda). The imaginary part is a diagnostic, it vanishes for real paths."""
    chars = _characters(table, n)
    if table.kind == 'level':
        chars = chars - 1
    total = complex(table.values @ chars)
    return (total.real, total.imag) if return_imag else total.real


def reconstruct_path(table, N):
    return np.array([reconstruct(table, n) for n in range(N + 1)])


def layer_energy(tables, m):
    """Mean over tables of sum_l |A^(m)_l|^2 with its standard error."""
    if not tables:
        raise ValueError('layer energy needs at least one table')
    if not 1 <= m <= tables[0].M_max:
        raise ValueError(f'layer {m} outside of 1..{tables[0].M_max}')
    energies = np.array([np.sum(np.abs(t.layer(m)) ** 2) for t in tables])
    stderr = energies.std(ddof=1) / np.sqrt(len(energies)) if len(energies) > 1 else 0.0
    return float(energies.mean()), float(stderr)


def stack(tables):
    """(tables, keys) matrix of coefficient values; all tables must share p and M_max."""
    assert len({(t.p, t.M_max) for t in tables}) == 1, 'tables differ in p or M_max'
    return np.stack([t.values for t in tables])
