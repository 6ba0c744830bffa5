"""p-adic valuations and norms of positive integers, and the scaling functions b(n) built on them"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

FIRST_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


def is_prime(p):
    if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or p < 2:
        return False
    if p < 4:
        return True
    if p % 2 == 0:
        return False
    return all(p % d for d in range(3, math.isqrt(int(p)) + 1, 2))


def _check_args(n, p):
    if not is_prime(p):
        raise ValueError(f'p must be a prime, got {p!r}')
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValueError(f'n must be an integer, got {n!r}')
    if n < 1:
        # b is only ever applied to the natural numbers, |0|_p stays undefined
        raise ValueError(f'n must be a positive integer, got {n}')


def p_adic_valuation(n, p):
    """Largest v with p**v dividing n."""
    _check_args(n, p)
    n, v = int(n), 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def p_adic_norm(n, p):
    """|n|_p = p**-v as an exact Fraction."""
    return Fraction(1, p ** p_adic_valuation(n, p))


def p_adic_valuations(ns, p):
    """Vectorized valuation of an integer array; entries must be >= 1."""
    ns = np.asarray(ns, dtype=np.int64).copy()
    assert np.all(ns >= 1), 'valuations are only defined for positive integers'
    v = np.zeros(ns.shape, dtype=np.int64)
    divisible = ns % p == 0
    while np.any(divisible):
        v[divisible] += 1
        ns[divisible] //= p
        divisible = ns % p == 0
    return v


def reduced_residue(value, p):
    """Splits a rational in [0, 1) into (m, l) with value = l / p**m and p not dividing l.

    Returns None when the denominator is not a power of p, i.e. value is not a p-adic rational."""
    value = Fraction(value)
    den, m = value.denominator, 0
    while den % p == 0:
        den //= p
        m += 1
    if den != 1:
        return None
    return m, value.numerator


class Kind(Enum):
    TYPE1 = 'type1'
    TYPE2 = 'type2'
    TYPE3 = 'type3'
    NON_CONFORMING = 'nonconforming'


@dataclass(frozen=True)
class ScalingFunction:
    kind: Kind
    p: int | None = None
    H: float | None = None
    prime_values: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind is Kind.TYPE2:
            assert is_prime(self.p), f'type2 scaling needs a prime p, got {self.p}'
        else:
            assert self.p is None, f'{self.kind.value} scaling has no prime'
        if self.kind in (Kind.TYPE2, Kind.TYPE3):
            assert self.H is not None and self.H > 0, f'{self.kind.value} scaling needs H > 0, got {self.H}'
        elif self.kind is Kind.TYPE1:
            assert self.H is None, 'type1 scaling has no exponent'

    @classmethod
    def type1(cls):
        return cls(Kind.TYPE1)

    @classmethod
    def type2(cls, p, H):
        return cls(Kind.TYPE2, p=int(p), H=float(H))

    @classmethod
    def type3(cls, H):
        return cls(Kind.TYPE3, H=float(H))

    @property
    def conforming(self):
        return self.kind is not Kind.NON_CONFORMING

    def __call__(self, n):
        return scaling_eval(self, n)

    def values(self, ns):
        """Vectorized b(n) over an integer array with entries >= 1."""
        require_conforming(self)
        ns = np.asarray(ns, dtype=np.int64)
        if self.kind is Kind.TYPE1:
            return np.ones(ns.shape)
        if self.kind is Kind.TYPE3:
            return ns.astype(np.float64) ** self.H
        return float(self.p) ** (-self.H * p_adic_valuations(ns, self.p))

    def to_json(self):
        out = {'kind': self.kind.value}
        if self.p is not None:
            out['p'] = self.p
        if self.H is not None:
            out['H'] = self.H
        if self.kind is Kind.NON_CONFORMING:
            out['prime_values'] = [[q, v] for q, v in self.prime_values]
        return out

    @classmethod
    def from_json(cls, data):
        kind = Kind(data['kind'])
        unknown = set(data) - {'kind', 'p', 'H', 'prime_values'}
        if unknown:
            raise ValueError(f'unknown scaling function field(s): {sorted(unknown)}')
        if kind is Kind.NON_CONFORMING:
            return cls(kind, prime_values=tuple((q, v) for q, v in data.get('prime_values', [])))
        return cls(kind, p=data.get('p'), H=data.get('H'))


def require_conforming(sf):
    if not sf.conforming:
        raise ValueError('operation is undefined for a non-conforming scaling function')


def scaling_eval(sf, n):
    require_conforming(sf)
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ValueError(f'n must be a positive integer, got {n!r}')
    if sf.kind is Kind.TYPE1:
        return 1.0
    if sf.kind is Kind.TYPE2:
        return float(p_adic_norm(n, sf.p)) ** sf.H
    return float(n) ** sf.H


def _close(value, target, tol):
    return abs(value - target) <= tol * abs(target)


def classify_scaling(prime_values, tol=1e-9):
    """Classifies a completely multiplicative b from its values on a few primes.

    Type I when every value is 1, type II when exactly one prime maps below 1 and every other to 1,
    type III when all values lie on q**H for one common H > 0. Anything else is non-conforming."""
    prime_values = tuple((int(q), float(v)) for q, v in prime_values)
    if not prime_values:
        raise ValueError('classify_scaling needs at least one (prime, value) pair')
    if len(prime_values) < 2:
        raise ValueError('classify_scaling needs values on at least two primes')
    primes = [q for q, _ in prime_values]
    for q, v in prime_values:
        if not is_prime(q):
            raise ValueError(f'{q} is not a prime')
        if not v > 0:
            raise ValueError(f'b({q}) must be strictly positive, got {v}')
    if len(set(primes)) != len(primes):
        raise ValueError('primes must be distinct')

    at_one = [_close(v, 1.0, tol) for _, v in prime_values]
    if all(at_one):
        return ScalingFunction(Kind.TYPE1, prime_values=prime_values)

    below = [(q, v) for (q, v), one in zip(prime_values, at_one) if not one and v < 1]
    if len(below) == 1 and sum(not one for one in at_one) == 1:
        p, v = below[0]
        return ScalingFunction(Kind.TYPE2, p=p, H=-math.log(v) / math.log(p), prime_values=prime_values)

    exponents = [math.log(v) / math.log(q) for q, v in prime_values]
    H = float(np.mean(exponents))
    if H > 0 and all(_close(q ** H, v, tol) for q, v in prime_values):
        return ScalingFunction(Kind.TYPE3, H=H, prime_values=prime_values)

    return ScalingFunction(Kind.NON_CONFORMING, prime_values=prime_values)
