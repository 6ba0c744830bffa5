"""Seed derivation and counter based random streams.

Every latent variable of a construction is addressed by (path seed, family salt, layer, index) and
drawn by hashing that address. A path therefore never depends on how many other paths or variables
were drawn before it, and chunks of an ensemble can be produced in any order or process."""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# one salt per family of latent variables
SALT_Y = 1
SALT_SHIFT = 2
SALT_SELECT = 3
SALT_U = 4
SALT_GAUSS = 5
SALT_IID = 6


def splitmix64(z):
    """SplitMix64 finalizer of a python int, a bijection of [0, 2**64)."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _splitmix64_array(z):
    with np.errstate(over='ignore'):
        z = z + np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def path_seed(master_seed, index):
    """Seed of path `index`; distinct indices always give distinct seeds."""
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f'master seed {master_seed} is not a 64 bit unsigned integer')
    return splitmix64((master_seed + GOLDEN * (index + 1)) & MASK64)


def path_seeds(master_seed, start, end):
    return np.array([path_seed(master_seed, i) for i in range(start, end)], dtype=np.uint64)


def _stream_keys(seeds, salt, layer):
    seeds = np.asarray(seeds, dtype=np.uint64)
    with np.errstate(over='ignore'):
        keys = _splitmix64_array(seeds + np.uint64((GOLDEN * salt) & MASK64))
        return _splitmix64_array(keys + np.uint64((GOLDEN * (layer + 1)) & MASK64))


def _hashes(seeds, salt, layer, indices):
    keys = _stream_keys(seeds, salt, layer)
    idx = np.asarray(indices, dtype=np.int64).astype(np.uint64)
    with np.errstate(over='ignore'):
        return _splitmix64_array(keys[..., None] + (idx + np.uint64(1)) * np.uint64(GOLDEN))


def uniforms(seeds, salt, layer, indices):
    """Uniform(0, 1) draws that are never exactly 0 or 1.

    `seeds` is a scalar or a 1d array of path seeds, `indices` a 1d array shared by all paths or a
    (paths, r) matrix of per path indices. The result has shape seeds.shape + (r,)."""
    h = _hashes(seeds, salt, layer, indices)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def integers(seeds, salt, layer, indices, high):
    """Uniform integers on {0, ..., high - 1}, shaped like `uniforms`."""
    if high <= 2 ** 53:
        u = uniforms(seeds, salt, layer, indices)
        return np.minimum((u * high).astype(np.int64), high - 1)
    # doubles drop the low bits of large ranges, use the high word of h * high instead
    h = _hashes(seeds, salt, layer, indices)
    return np.array([(int(x) * high) >> 64 for x in h.ravel()], dtype=np.int64).reshape(h.shape)


def chunk_ranges(n, n_chunks):
    """Splits range(n) into at most n_chunks contiguous (start, end) pairs."""
    n_chunks = max(1, min(n_chunks, n))
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    return [(int(s), int(e)) for s, e in zip(bounds[:-1], bounds[1:])]
