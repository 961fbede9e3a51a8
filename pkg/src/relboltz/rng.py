"""Counter-based random numbers (Philox4x32-10).

Every value is a pure function of ``(seed, stream, block, sub, lane)``:

* ``lane``   -- the path (or sample) index, so work can be split across
  workers in any way without changing results;
* ``block``  -- a logical draw slot, reserved in order by the caller;
* ``sub``    -- position inside a block (rejection attempts live here, so a
  rejection loop always consumes exactly one block regardless of how many
  attempts the slowest lane needed).

Two doubles come out of each Philox call.
"""
from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

__all__ = [
    "CounterRNG",
    "philox4x32",
    "philox4x32_numpy",
    "exponential",
    "standard_normal",
    "unit_sphere",
]

_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = 0xFFFFFFFF
_ROUNDS = 10


def philox4x32_numpy(ctr, key):
    """Reference Philox4x32-10 on uint64-held 32-bit words.

    ``ctr`` has shape (..., 4), ``key`` shape (2,). Returns uint32 (..., 4).
    """
    c = np.asarray(ctr, dtype=np.uint64) & np.uint64(_MASK)
    c0, c1, c2, c3 = (c[..., i].copy() for i in range(4))
    k0 = np.uint64(int(key[0]) & _MASK)
    k1 = np.uint64(int(key[1]) & _MASK)
    m0, m1, mask, sh = np.uint64(_M0), np.uint64(_M1), np.uint64(_MASK), np.uint64(32)
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + np.uint64(_W0)) & mask
            k1 = (k1 + np.uint64(_W1)) & mask
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (
            ((p1 >> sh) ^ c1 ^ k0) & mask,
            p1 & mask,
            ((p0 >> sh) ^ c3 ^ k1) & mask,
            p0 & mask,
        )
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def _philox_uniforms(k0, k1, block, sub0, lanes, k, out):
        m0 = np.uint64(_M0)
        m1 = np.uint64(_M1)
        mask = np.uint64(_MASK)
        sh = np.uint64(32)
        sh5 = np.uint64(5)
        sh6 = np.uint64(6)
        scale = 1.0 / 9007199254740992.0
        ncalls = (k + 1) // 2
        for i in range(lanes.shape[0]):
            lane = np.uint64(lanes[i])
            for j in range(ncalls):
                c0 = np.uint64(block) & mask
                c1 = np.uint64(sub0 + j) & mask
                c2 = lane & mask
                c3 = (lane >> sh) & mask
                kk0 = np.uint64(k0)
                kk1 = np.uint64(k1)
                for r in range(10):
                    if r > 0:
                        kk0 = (kk0 + np.uint64(_W0)) & mask
                        kk1 = (kk1 + np.uint64(_W1)) & mask
                    p0 = m0 * c0
                    p1 = m1 * c2
                    n0 = ((p1 >> sh) ^ c1 ^ kk0) & mask
                    n1 = p1 & mask
                    n2 = ((p0 >> sh) ^ c3 ^ kk1) & mask
                    n3 = p0 & mask
                    c0, c1, c2, c3 = n0, n1, n2, n3
                a = float((c0 >> sh5) * np.uint64(67108864) + (c1 >> sh6))
                out[i, 2 * j] = (a + 0.5) * scale
                if 2 * j + 1 < k:
                    b = float((c2 >> sh5) * np.uint64(67108864) + (c3 >> sh6))
                    out[i, 2 * j + 1] = (b + 0.5) * scale

    @numba.njit(cache=True, nogil=True)
    def _philox_words(k0, k1, ctr, out):
        m0 = np.uint64(_M0)
        m1 = np.uint64(_M1)
        mask = np.uint64(_MASK)
        sh = np.uint64(32)
        for i in range(ctr.shape[0]):
            c0 = np.uint64(ctr[i, 0]) & mask
            c1 = np.uint64(ctr[i, 1]) & mask
            c2 = np.uint64(ctr[i, 2]) & mask
            c3 = np.uint64(ctr[i, 3]) & mask
            kk0 = np.uint64(k0)
            kk1 = np.uint64(k1)
            for r in range(10):
                if r > 0:
                    kk0 = (kk0 + np.uint64(_W0)) & mask
                    kk1 = (kk1 + np.uint64(_W1)) & mask
                p0 = m0 * c0
                p1 = m1 * c2
                n0 = ((p1 >> sh) ^ c1 ^ kk0) & mask
                n1 = p1 & mask
                n2 = ((p0 >> sh) ^ c3 ^ kk1) & mask
                n3 = p0 & mask
                c0, c1, c2, c3 = n0, n1, n2, n3
            out[i, 0] = c0
            out[i, 1] = c1
            out[i, 2] = c2
            out[i, 3] = c3


def philox4x32(ctr, key):
    """Philox4x32-10 block function; compiled when numba is available."""
    ctr = np.ascontiguousarray(np.asarray(ctr, dtype=np.uint64).reshape(-1, 4))
    if numba is None:
        return philox4x32_numpy(ctr, key)
    out = np.empty(ctr.shape, dtype=np.uint64)
    _philox_words(np.uint64(int(key[0]) & _MASK), np.uint64(int(key[1]) & _MASK), ctr, out)
    return out.astype(np.uint32)


def _uniforms_numpy(k0, k1, block, sub0, lanes, k):
    ncalls = (k + 1) // 2
    lanes = lanes.astype(np.uint64)
    ctr = np.empty((lanes.size, ncalls, 4), dtype=np.uint64)
    ctr[..., 0] = block & _MASK
    ctr[..., 1] = (np.arange(ncalls, dtype=np.uint64) + np.uint64(sub0))[None, :] & np.uint64(_MASK)
    ctr[..., 2] = (lanes & np.uint64(_MASK))[:, None]
    ctr[..., 3] = (lanes >> np.uint64(32))[:, None]
    w = philox4x32_numpy(ctr, (k0, k1)).astype(np.uint64)
    hi = (w[..., [0, 2]] >> np.uint64(5)).astype(np.float64) * 67108864.0
    lo = (w[..., [1, 3]] >> np.uint64(6)).astype(np.float64)
    u = (hi + lo + 0.5) / 9007199254740992.0
    return u.reshape(lanes.size, 2 * ncalls)[:, :k]


class CounterRNG:
    """Explicit RNG handle; the only mutable state is the block cursor.

    >>> rng = CounterRNG(7)
    >>> u = rng.uniform(np.arange(3), 2)   # 3 lanes x 2 draws, one block
    >>> u.shape
    (3, 2)
    """

    def __init__(self, seed: int, stream: int = 0, *, block: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        self._k0 = (self.seed ^ (self.seed >> 32)) & _MASK
        self._k1 = (self.stream + 0x5BD1E995 * (self.seed >> 32)) & _MASK
        self.block = int(block)

    def __repr__(self):
        return f"CounterRNG(seed={self.seed}, stream={self.stream}, block={self.block})"

    def spawn(self, stream: int) -> "CounterRNG":
        """Independent handle on a different stream of the same seed."""
        return CounterRNG(self.seed, stream)

    def reserve(self, n: int = 1) -> int:
        b = self.block
        self.block += n
        return b

    def uniform_at(self, lanes, block: int, k: int, sub: int = 0) -> np.ndarray:
        """Uniforms in (0, 1), shape (len(lanes), k), at a fixed block."""
        lanes = np.ascontiguousarray(np.asarray(lanes, dtype=np.int64).ravel())
        if lanes.size == 0 or k == 0:
            return np.empty((lanes.size, k))
        if numba is None:
            return _uniforms_numpy(self._k0, self._k1, block, sub, lanes, k)
        out = np.empty((lanes.size, k))
        _philox_uniforms(np.uint64(self._k0), np.uint64(self._k1), np.int64(block),
                         np.int64(sub), lanes, k, out)
        return out

    def uniform(self, lanes, k: int) -> np.ndarray:
        return self.uniform_at(lanes, self.reserve(), k)

    def random(self, n: int) -> np.ndarray:
        """``n`` sequential-looking uniforms (lanes 0..n-1 of a fresh block)."""
        return self.uniform(np.arange(n), 1)[:, 0]


def exponential(u):
    return -np.log(u)


def standard_normal(u1, u2):
    """Box-Muller, cosine branch."""
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def unit_sphere(u1, u2):
    """Uniform directions on S^2 from two uniforms; shape (..., 3)."""
    cos_t = 2.0 * u1 - 1.0
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    ph = 2.0 * np.pi * u2
    return np.stack([sin_t * np.cos(ph), sin_t * np.sin(ph), cos_t], axis=-1)
