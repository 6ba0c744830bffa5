from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .helpers import path_seed


@dataclass(frozen=True)
class SamplePath:
    """One realization X_0..X_N together with the generator configuration and its seed."""
    values: np.ndarray
    meta: dict
    seed: int

    def __post_init__(self):
        assert self.values.ndim == 1, 'a sample path is one dimensional'
        assert np.all(np.isfinite(self.values)), 'sample path contains non-finite values'

    @property
    def N(self):
        return len(self.values) - 1

    def __len__(self):
        return len(self.values)

    def __getitem__(self, n):
        return self.values[n]


@dataclass(frozen=True)
class PathEnsemble:
    """M independent paths of equal length sharing one configuration.

    Paths are stored as rows of one (M, N + 1) matrix; `seeds[i]` is the seed of row i."""
    values: np.ndarray
    meta: dict
    master_seed: int
    seeds: tuple = field(default=())

    def __post_init__(self):
        assert self.values.ndim == 2, 'ensemble values must be a (paths, N + 1) matrix'
        if not self.seeds:
            object.__setattr__(self, 'seeds', tuple(path_seed(self.master_seed, i) for i in range(len(self.values))))
        assert len(self.seeds) == len(self.values), 'one seed per path required'
        assert len(set(self.seeds)) == len(self.seeds), 'per path seeds must be pairwise distinct'

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1] - 1

    def __len__(self):
        return self.M

    def __iter__(self):
        for i in range(self.M):
            yield self.path(i)

    def path(self, i):
        return SamplePath(self.values[i], self.meta, self.seeds[i])

    @property
    def paths(self):
        return list(self)

    def column(self, n):
        """Samples of X_n, one value per path."""
        if not 0 <= n <= self.N:
            raise IndexError(f'index {n} outside of the paths 0..{self.N}')
        return self.values[:, n]

    def increments(self, n):
        """Samples of X_{n+1} - X_n."""
        return self.column(n + 1) - self.column(n)
