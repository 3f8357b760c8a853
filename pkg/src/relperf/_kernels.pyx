# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Philox4x32-10 stream kernels.

Every output cell is a pure function of (key, path, draw), so the result does
not depend on the thread count or on how the path range is chunked.
"""

from cython.parallel cimport prange
from libc.math cimport cos, log, sqrt
from libc.stdint cimport uint32_t, uint64_t

cdef extern from *:
    """
    #define RP_M0 0xD2511F53u
    #define RP_M1 0xCD9E8D57u
    #define RP_W0 0x9E3779B9u
    #define RP_W1 0xBB67AE85u
    #define RP_TWO_POW_M53 1.1102230246251565e-16
    #define RP_TWO_PI 6.283185307179586
    """
    const uint32_t RP_M0
    const uint32_t RP_M1
    const uint32_t RP_W0
    const uint32_t RP_W1
    const double RP_TWO_POW_M53
    const double RP_TWO_PI


ctypedef struct block4:
    uint32_t w0
    uint32_t w1
    uint32_t w2
    uint32_t w3


cdef inline block4 _philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                           uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t h0, l0, h1, l1
    cdef int r
    cdef block4 out
    for r in range(10):
        p0 = <uint64_t>RP_M0 * <uint64_t>c0
        p1 = <uint64_t>RP_M1 * <uint64_t>c2
        h0 = <uint32_t>(p0 >> 32)
        l0 = <uint32_t>p0
        h1 = <uint32_t>(p1 >> 32)
        l1 = <uint32_t>p1
        c0 = h1 ^ c1 ^ k0
        c1 = l1
        c2 = h0 ^ c3 ^ k1
        c3 = l0
        k0 = k0 + RP_W0
        k1 = k1 + RP_W1
    out.w0 = c0
    out.w1 = c1
    out.w2 = c2
    out.w3 = c3
    return out


cdef inline double _unit(uint32_t lo, uint32_t hi) noexcept nogil:
    cdef uint64_t w = (<uint64_t>hi << 32) | <uint64_t>lo
    return (<double>(w >> 11) + 0.5) * RP_TWO_POW_M53


def philox4x32(counter, key):
    """Raw Philox4x32-10 block for a 4-word counter and 2-word key."""
    cdef block4 out = _philox(counter[0], counter[1], counter[2], counter[3], key[0], key[1])
    return (out.w0, out.w1, out.w2, out.w3)


def fill_normals(const uint32_t[:] k0, const uint32_t[:] k1, const uint64_t[:] paths,
                 uint32_t draw, double[:, ::1] out, int nthreads=1):
    cdef Py_ssize_t n_paths = paths.shape[0]
    cdef Py_ssize_t n_streams = k0.shape[0]
    cdef Py_ssize_t i, j
    cdef block4 block
    cdef uint64_t path
    cdef double u1, u2
    if nthreads < 1:
        nthreads = 1
    for i in prange(n_paths, nogil=True, schedule="static", num_threads=nthreads):
        path = paths[i]
        for j in range(n_streams):
            block = _philox(<uint32_t>path, <uint32_t>(path >> 32), draw, 0, k0[j], k1[j])
            u1 = _unit(block.w0, block.w1)
            u2 = _unit(block.w2, block.w3)
            out[i, j] = sqrt(-2.0 * log(u1)) * cos(RP_TWO_PI * u2)


def fill_uniforms(const uint32_t[:] k0, const uint32_t[:] k1, const uint64_t[:] paths,
                  uint32_t draw, double[:, ::1] out, int nthreads=1):
    cdef Py_ssize_t n_paths = paths.shape[0]
    cdef Py_ssize_t n_streams = k0.shape[0]
    cdef Py_ssize_t i, j
    cdef block4 block
    cdef uint64_t path
    if nthreads < 1:
        nthreads = 1
    for i in prange(n_paths, nogil=True, schedule="static", num_threads=nthreads):
        path = paths[i]
        for j in range(n_streams):
            block = _philox(<uint32_t>path, <uint32_t>(path >> 32), draw, 0, k0[j], k1[j])
            out[i, j] = _unit(block.w0, block.w1)
