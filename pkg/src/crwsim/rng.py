"""Counter-based random streams.

Every replicate ``i`` of an experiment with master seed ``s`` owns the key

    key(s, i) = mix64(mix64(s) + (i + 1) * GAMMA)   (mod 2**64)

which is the ``i``-th output of a SplitMix64 sequence started at ``mix64(s)``.
Keys are a pure function of ``(s, i)``, so replicate results never depend on
execution order. Python-level steppers get a :class:`numpy.random.Generator`
on a Philox bit generator keyed by ``key(s, i)``; the compiled kernels seed a
xoshiro256** state from the same key.

Lazily generated trees use the same mixer to derive a key per vertex from its
parent's key and its child index, so a sampled tree is a pure function of the
tree seed regardless of the order in which vertices are exposed.
"""
import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
# salts keep derived streams (tree shape vs dynamics, offspring uniforms) apart
TREE_SALT = 0x5851F42D4C957F2D
UNIFORM_SALT = 0x2545F4914F6CDD1D


def mix64(x):
    """SplitMix64 finalizer on a Python int."""
    z = (x + GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def replicate_key(master_seed, index):
    """Key of replicate ``index`` under ``master_seed``."""
    base = mix64(int(master_seed) & MASK64)
    return mix64((base + (int(index) + 1) * GAMMA) & MASK64)


def child_key(parent_key, child_index):
    return mix64(parent_key ^ mix64((child_index + 1) * GAMMA & MASK64))


def root_key(tree_seed):
    return mix64((int(tree_seed) ^ TREE_SALT) & MASK64)


def key_uniform(key):
    """A uniform in the open interval (0, 1) determined by ``key``."""
    return ((mix64(key ^ UNIFORM_SALT) >> 11) + 0.5) * 2.0**-53


def rng_stream(master_seed, replicate_index):
    """Independent generator for one replicate.

    The same ``(master_seed, replicate_index)`` always yields the same draws.
    """
    return np.random.Generator(np.random.Philox(key=replicate_key(master_seed, replicate_index)))


def replicate_keys(master_seed, n, start=0):
    """Vector of replicate keys ``start .. start+n-1`` as uint64."""
    return _replicate_keys(np.uint64(mix64(int(master_seed) & MASK64)), start, n)


# ---------------------------------------------------------------- compiled side

_G = np.uint64(GAMMA)
_U1 = np.uint64(_M1)
_U2 = np.uint64(_M2)
_TS = np.uint64(TREE_SALT)
_US = np.uint64(UNIFORM_SALT)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True, nogil=True)
def nb_mix64(x):
    z = x + _G
    z = (z ^ (z >> _S30)) * _U1
    z = (z ^ (z >> _S27)) * _U2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _replicate_keys(base, start, n):
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = nb_mix64(base + np.uint64(start + i + 1) * _G)
    return out


@njit(cache=True, nogil=True)
def nb_child_key(parent_key, child_index):
    return nb_mix64(parent_key ^ nb_mix64(np.uint64(child_index + 1) * _G))


@njit(cache=True, nogil=True)
def nb_root_key(tree_seed):
    return nb_mix64(tree_seed ^ _TS)


@njit(cache=True, nogil=True)
def nb_key_uniform(key):
    return (np.float64(nb_mix64(key ^ _US) >> _S11) + 0.5) * (2.0**-53)


@njit(cache=True, nogil=True)
def seed_state(key):
    """xoshiro256** state (4 x uint64) expanded from a key by SplitMix64."""
    s = np.empty(4, dtype=np.uint64)
    for j in range(4):
        s[j] = nb_mix64(key + np.uint64(j) * _G)
    return s


@njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, nogil=True, inline="always")
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, nogil=True, inline="always")
def uniform(s):
    """Uniform on the open interval (0, 1)."""
    return (np.float64(next_u64(s) >> _S11) + 0.5) * (2.0**-53)


@njit(cache=True, nogil=True, inline="always")
def exponential(s, rate):
    return -np.log(uniform(s)) / rate


@njit(cache=True, nogil=True, inline="always")
def randint(s, n):
    """Uniform integer in ``[0, n)``."""
    k = np.int64(uniform(s) * n)
    if k >= n:
        k = n - 1
    return k
