"""Exact joint distributions of the truncated type II constructions by enumeration.

Layers of both constructions are independent (given u, when one random u is shared by all layers).
Each layer enumerates only the latent variables that can move the targets, that is the residues
n mod p^(k+1) of the periodic construction or the selector J_k with its shift U_k^(J_k) of the random
shift construction, and the layer tables are convolved. The result is the same law as an enumeration
of every latent variable up to depth K."""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from dtsssi.core.errors import SizeError
from dtsssi.generation.generators import Ex41Config, Ex42Config, u_prefix_sums

MAX_CONFIGURATIONS = 10 ** 7
DECIMALS = 12


@dataclass
class DistributionTable:
    """Joint law of (X_n for n in targets): row i of `support` has probability `probs[i]`."""
    targets: tuple
    support: np.ndarray
    probs: np.ndarray
    n_configurations: int = 0

    @classmethod
    def from_dict(cls, masses, target=1):
        """Univariate table from {value: probability}."""
        values = np.array(sorted(masses), dtype=np.float64)
        return cls((target,), values[:, None], np.array([masses[v] for v in sorted(masses)], dtype=np.float64))

    def marginal(self, target):
        """{value: probability} of one target."""
        col = self.targets.index(target)
        values, inverse = np.unique(self.support[:, col], return_inverse=True)
        return dict(zip(values.tolist(), np.bincount(inverse, weights=self.probs).tolist()))

    def prob(self, *values):
        hit = np.all(np.isclose(self.support, np.asarray(values)[None, :], rtol=0, atol=10 ** -DECIMALS), axis=1)
        return float(self.probs[hit].sum())

    def to_json(self):
        return {'targets': list(self.targets), 'n_configurations': self.n_configurations,
                'table': [{'values': row.tolist(), 'prob': float(pr)} for row, pr in zip(self.support, self.probs)]}


def _collapse(keys, probs):
    keys = np.round(keys, DECIMALS) + 0.0
    support, inverse = np.unique(keys, axis=0, return_inverse=True)
    return support, np.bincount(inverse.ravel(), weights=probs, minlength=len(support))


def _convolve(table, layer):
    (keys_a, probs_a), (keys_b, probs_b) = table, layer
    size = len(keys_a) * len(keys_b)
    if size > MAX_CONFIGURATIONS:
        raise SizeError(f'joint table would need {size} rows, more than {MAX_CONFIGURATIONS}')
    keys = (keys_a[:, None, :] + keys_b[None, :, :]).reshape(size, -1)
    probs = (probs_a[:, None] * probs_b[None, :]).ravel()
    return _collapse(keys, probs)


def _grid(n_values, n_vars):
    count = n_values ** n_vars
    if count > MAX_CONFIGURATIONS:
        raise SizeError(f'{count} latent configurations in one layer, more than {MAX_CONFIGURATIONS}')
    return np.array(list(itertools.product(range(n_values), repeat=n_vars)), dtype=np.int64).reshape(count, n_vars)


def _ex41_layer(cfg, k, targets):
    period = cfg.p ** (k + 1)
    residues = sorted({n % period for n in targets} | {0})
    position = [residues.index(n % period) for n in targets]
    grid = _grid(len(cfg.y_marginal.values), len(residues))
    values = cfg.y_marginal.values[grid]
    probs = np.prod(cfg.y_marginal.probs[grid], axis=1)
    contrib = cfg.b ** k * (values[:, position] - values[:, [residues.index(0)]])
    return _collapse(contrib, probs), len(grid)


def _u_grid(cfg):
    """All realizations of the centered random u with their probabilities."""
    grid = _grid(len(cfg.u_marginal.values), cfg.p)
    u = cfg.u_marginal.values[grid]
    return u - u.mean(axis=1, keepdims=True), np.prod(cfg.u_marginal.probs[grid], axis=1)


def _ex42_layer(cfg, k, targets, u_vectors, u_probs):
    period = cfg.p ** (k + 1)
    if period ** 2 * len(u_vectors) > MAX_CONFIGURATIONS:
        raise SizeError(f'layer {k} has {period ** 2 * len(u_vectors)} latent configurations, '
                        f'more than {MAX_CONFIGURATIONS}')
    J, U = np.divmod(np.arange(period * period, dtype=np.int64), period)
    n = np.asarray(targets, dtype=np.int64)
    digit = (((U[:, None] + J[:, None] * n[None, :]) % period) // cfg.p ** k) % cfg.p
    digit0 = (U // cfg.p ** k) % cfg.p
    keys, probs = [], []
    for u, pu in zip(u_vectors, u_probs):
        prefix = u_prefix_sums(u)
        contrib = prefix[digit] - prefix[digit0][:, None]
        contrib[J == 0] = 0.0
        keys.append(cfg.b ** k * contrib)
        probs.append(np.full(len(J), pu / period ** 2))
    return _collapse(np.concatenate(keys), np.concatenate(probs)), period ** 2 * len(u_vectors)


def _combine(layers, n_targets):
    table = (np.zeros((1, n_targets)), np.ones(1))
    for layer in layers:
        table = _convolve(table, layer)
    return table


def _ex42_table(cfg, targets):
    if cfg.u is not None:
        u_vectors, u_probs = np.asarray([cfg.u]), np.ones(1)
    elif not cfg.u_marginal.finite:
        raise ValueError('exact_distribution needs a finite support marginal for u')
    else:
        u_vectors, u_probs = _u_grid(cfg)
    if cfg.u is not None or cfg.u_per_layer:
        layers, counts = zip(*(_ex42_layer(cfg, k, targets, u_vectors, u_probs) for k in range(cfg.K + 1)))
        return _combine(layers, len(targets)), list(counts)
    # one random u shared by every layer: mix the conditional tables over u
    keys, probs = [], []
    for u, pu in zip(u_vectors, u_probs):
        layers, layer_counts = zip(*(_ex42_layer(cfg, k, targets, u[None, :], np.ones(1))
                                     for k in range(cfg.K + 1)))
        layer_keys, layer_probs = _combine(layers, len(targets))
        keys.append(layer_keys)
        probs.append(layer_probs * pu)
    return _collapse(np.concatenate(keys), np.concatenate(probs)), [len(u_vectors)] + list(layer_counts)


def exact_distribution(cfg, targets):
    """Exact joint table of (X_n for n in targets) for a finite support configuration."""
    targets = tuple(int(n) for n in targets)
    if not targets or min(targets) < 0:
        raise ValueError(f'targets must be a nonempty list of nonnegative indices, got {targets}')
    if isinstance(cfg, Ex41Config):
        if not cfg.y_marginal.finite:
            raise ValueError('exact_distribution needs a finite support marginal for Y')
        layers, counts = zip(*(_ex41_layer(cfg, k, targets) for k in range(cfg.K + 1)))
        support, probs = _combine(layers, len(targets))
    elif isinstance(cfg, Ex42Config):
        (support, probs), counts = _ex42_table(cfg, targets)
    else:
        raise TypeError(f'exact_distribution needs an Ex41Config or Ex42Config, got {type(cfg).__name__}')
    keep = probs > 0
    return DistributionTable(targets, support[keep], probs[keep], math.prod(counts))
