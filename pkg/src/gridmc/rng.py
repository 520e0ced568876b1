"""Deterministic random streams for reproducible parallel sampling.

Implements the 64-bit Mersenne Twister 19937 (bit-compatible with C++
std::mt19937_64).  Every Monte Carlo sample draws from its own stream,
derived from (study seed, sample index) by a fixed mixing function, which
makes results independent of worker count and submission order.  State for
many streams can be held in one array so that initialization and twisting
vectorize across a whole batch of samples.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_N = 312
_M = 156
_MATRIX_A = np.uint64(0xB5026F5AA96619E9)
_UPPER = np.uint64(0xFFFFFFFF80000000)   # most significant 33 bits
_LOWER = np.uint64(0x7FFFFFFF)           # least significant 31 bits
_INIT_F = np.uint64(6364136223846793005)
_ONE = np.uint64(1)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

_T_U, _T_D = np.uint64(29), np.uint64(0x5555555555555555)
_T_S, _T_B = np.uint64(17), np.uint64(0x71D67FFFEDA60000)
_T_T, _T_C = np.uint64(37), np.uint64(0xFFF7EEE000000000)
_T_L = np.uint64(43)

_MASK = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: np.uint64 | int) -> np.uint64:
    """One SplitMix64 output step; a bijective 64-bit mixer."""
    # 64-bit wraparound is the point here; numpy's overflow warning is noise
    with np.errstate(over="ignore"):
        z = np.uint64(int(x) & _MASK) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def stream_seed(seed: int, index: int) -> int:
    """Fixed mixing of (study seed, sample index) into one generator seed."""
    with np.errstate(over="ignore"):
        mixed = (np.uint64(seed & _MASK)
                 + np.uint64((index + 1) & _MASK) * _GOLDEN)
    return int(splitmix64(mixed))


def derive_seed(seed: int, ordinal: int) -> int:
    """Child study seed for e.g. the ordinal-th contingency; uses a mixing
    constant distinct from the per-sample scheme so streams never collide."""
    with np.errstate(over="ignore"):
        salted = np.uint64(seed & _MASK) ^ np.uint64(0xA3C59AC2B7F10E5D)
        mixed = salted + np.uint64(ordinal & _MASK)
    return int(splitmix64(mixed))


def _stream_seeds(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized stream_seed over an index array."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + (indices + _ONE) * _GOLDEN + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _seed_states(seeds: np.ndarray) -> np.ndarray:
    """(B,) uint64 seeds -> (312, B) initialized states, word index first so
    the sequential recurrence walks contiguous rows."""
    st = np.empty((_N, len(seeds)), dtype=np.uint64)
    st[0] = seeds
    with np.errstate(over="ignore"):
        for i in range(1, _N):
            prev = st[i - 1]
            st[i] = _INIT_F * (prev ^ (prev >> np.uint64(62))) + np.uint64(i)
    return st


def _mag(x: np.ndarray) -> np.ndarray:
    return (x & _ONE) * _MATRIX_A


def _twist(st: np.ndarray) -> None:
    """Advance a (312, B) state block in place."""
    x = (st[: _N - _M] & _UPPER) | (st[1: _N - _M + 1] & _LOWER)
    st[: _N - _M] = st[_M:] ^ (x >> _ONE) ^ _mag(x)
    x = (st[_N - _M: _N - 1] & _UPPER) | (st[_N - _M + 1:] & _LOWER)
    st[_N - _M: _N - 1] = st[: _M - 1] ^ (x >> _ONE) ^ _mag(x)
    x = (st[_N - 1] & _UPPER) | (st[0] & _LOWER)
    st[_N - 1] = st[_M - 1] ^ (x >> _ONE) ^ _mag(x)


def _temper(y: np.ndarray) -> np.ndarray:
    y = y.copy()
    y ^= (y >> _T_U) & _T_D
    y ^= (y << _T_S) & _T_B
    y ^= (y << _T_T) & _T_C
    y ^= y >> _T_L
    return y


def _to_open_unit(raw: np.ndarray) -> np.ndarray:
    """uint64 -> double on the open interval (0, 1), 52-bit resolution."""
    return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * (2.0 ** -52)


class Mt64Stream:
    """Single Mersenne Twister 19937-64 output stream."""

    __slots__ = ("_state", "_buf", "_ptr")

    def __init__(self, seed: int = 5489, *, _state: np.ndarray | None = None):
        if _state is None:
            _state = _seed_states(
                np.array([seed & _MASK], dtype=np.uint64))[:, 0].copy()
        self._state = _state.reshape(_N, 1)
        self._buf = np.empty(0, dtype=np.uint64)
        self._ptr = 0

    def raw(self, count: int) -> np.ndarray:
        """Next `count` raw 64-bit outputs."""
        chunks = []
        need = count
        while need > 0:
            avail = len(self._buf) - self._ptr
            if avail == 0:
                _twist(self._state)
                self._buf = _temper(self._state[:, 0])
                self._ptr = 0
                avail = _N
            take = min(avail, need)
            chunks.append(self._buf[self._ptr:self._ptr + take])
            self._ptr += take
            need -= take
        return np.concatenate(chunks) if len(chunks) != 1 else chunks[0].copy()

    def skip(self, count: int) -> None:
        """Discard the next `count` raw outputs."""
        self.raw(count)

    def uniforms(self, count: int) -> np.ndarray:
        """Doubles on the open interval (0, 1)."""
        return _to_open_unit(self.raw(count))

    def normals(self, count: int) -> np.ndarray:
        """Standard normal draws via the inverse CDF of uniforms()."""
        return ndtri(self.uniforms(count))


def rng_for_sample(seed: int, index: int) -> Mt64Stream:
    """The Monte Carlo stream for one sample ordinal: a Mersenne Twister
    19937-64 seeded by the fixed (seed, index) mixing function."""
    return Mt64Stream(stream_seed(seed, index))


def substreams(seed: int, indices) -> list[Mt64Stream]:
    """Streams for many sample ordinals with the state setup vectorized
    across the batch; each is bit-identical to rng_for_sample(seed, i)."""
    idx = np.asarray(list(indices), dtype=np.uint64)
    if len(idx) == 0:
        return []
    states = _seed_states(_stream_seeds(seed, idx))
    return [Mt64Stream(_state=np.ascontiguousarray(states[:, i]))
            for i in range(len(idx))]


def bulk_raw(seed: int, indices, count: int) -> np.ndarray:
    """(len(indices), count) matrix whose row i holds the first `count` raw
    outputs of rng_for_sample(seed, indices[i]).

    The whole computation is vectorized across the batch; for count < 156
    only the needed words of the first twist are produced.
    """
    idx = np.asarray(list(indices), dtype=np.uint64)
    b = len(idx)
    if b == 0:
        return np.empty((0, count), dtype=np.uint64)
    st = _seed_states(_stream_seeds(seed, idx))
    if count < _N - _M:
        x = (st[:count] & _UPPER) | (st[1:count + 1] & _LOWER)
        out = _temper(st[_M:_M + count] ^ (x >> _ONE) ^ _mag(x))
        return np.ascontiguousarray(out.T)
    out = np.empty((b, count), dtype=np.uint64)
    filled = 0
    while filled < count:
        _twist(st)
        take = min(_N, count - filled)
        out[:, filled:filled + take] = _temper(st[:take]).T
        filled += take
    return out


def bulk_uniforms(seed: int, indices, count: int) -> np.ndarray:
    """Row i: the first `count` open-interval uniforms of the stream for
    sample indices[i]."""
    return _to_open_unit(bulk_raw(seed, indices, count))
