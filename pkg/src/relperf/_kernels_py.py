"""Pure numpy fallback for the compiled Philox kernels.

Same API and the same integer stream as ``_kernels.pyx``. The float results can
differ from the compiled path in the last bit, because numpy's ``log``/``cos``
are not guaranteed to match libm.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_POW_M53 = 2.0 ** -53
_TWO_PI = 6.283185307179586


def _philox_arrays(c0, c1, c2, c3, k0, k1):
    # all inputs are uint64 arrays holding 32-bit values
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def philox4x32(counter, key):
    """Raw Philox4x32-10 block for a 4-word counter and 2-word key."""
    words = [np.array([int(c)], dtype=np.uint64) for c in counter]
    keys = [np.array([int(k)], dtype=np.uint64) for k in key]
    out = _philox_arrays(*words, *keys)
    return tuple(int(w[0]) for w in out)


def _blocks(k0, k1, paths, draw):
    k0 = np.asarray(k0, dtype=np.uint64)[None, :]
    k1 = np.asarray(k1, dtype=np.uint64)[None, :]
    paths = np.asarray(paths, dtype=np.uint64)[:, None]
    shape = (paths.shape[0], k0.shape[1])
    c0 = np.broadcast_to(paths & _MASK, shape)
    c1 = np.broadcast_to(paths >> _S32, shape)
    c2 = np.full(shape, draw, dtype=np.uint64)
    c3 = np.zeros(shape, dtype=np.uint64)
    return _philox_arrays(c0, c1, c2, c3, np.broadcast_to(k0, shape), np.broadcast_to(k1, shape))


def _unit(lo, hi):
    w = (hi << _S32) | lo
    return ((w >> _S11).astype(np.float64) + 0.5) * _TWO_POW_M53


def fill_normals(k0, k1, paths, draw, out, nthreads=1):
    with np.errstate(over="ignore"):
        b0, b1, b2, b3 = _blocks(k0, k1, paths, draw)
    u1 = _unit(b0, b1)
    u2 = _unit(b2, b3)
    out[...] = np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def fill_uniforms(k0, k1, paths, draw, out, nthreads=1):
    with np.errstate(over="ignore"):
        b0, b1, _, _ = _blocks(k0, k1, paths, draw)
    out[...] = _unit(b0, b1)
