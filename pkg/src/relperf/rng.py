"""Counter-based random streams.

Draws are keyed by ``(seed, role, stream index)`` and addressed by
``(path, draw)``, so any sub-block of a simulation can be regenerated on its
own and results do not depend on chunking or thread count.
"""

from __future__ import annotations

import enum
import os

import numpy as np

if os.environ.get("RELPERF_BACKEND", "").lower() == "python":
    from relperf import _kernels_py as _backend

    BACKEND = "python"
else:
    try:
        from relperf import _kernels as _backend

        BACKEND = "cython"
    except ImportError:
        from relperf import _kernels_py as _backend

        BACKEND = "python"

_MASK64 = (1 << 64) - 1


class Role(enum.IntEnum):
    """Which noise a stream feeds; distinct roles never share a key."""

    COMMON = 0
    IDIOSYNCRATIC = 1
    TYPE = 2
    COMMON_PER_AGENT = 3


def thread_count() -> int:
    """Parallelism cap from ``RELPERF_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("RELPERF_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _splitmix64(x):
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *tags: int) -> int:
    """Hash ``seed`` with integer tags into a new 64-bit seed."""
    h = _splitmix64(np.uint64(int(seed) & _MASK64))
    for tag in tags:
        h = _splitmix64(h ^ np.uint64(int(tag) & _MASK64))
    return int(h)


def stream_keys(seed: int, role: Role, streams) -> tuple[np.ndarray, np.ndarray]:
    """Philox keys (low word, high word) for each stream index."""
    streams = np.asarray(streams, dtype=np.uint64)
    base = _splitmix64(np.uint64(int(seed) & _MASK64))
    tag = np.uint64(int(role) << 56)
    h = _splitmix64(base ^ tag ^ streams)
    lo = (h & np.uint64(0xFFFFFFFF)).astype(np.uint32)
    hi = (h >> np.uint64(32)).astype(np.uint32)
    return lo, hi


def _grid(fill, seed, role, streams, paths, draw):
    k0, k1 = stream_keys(seed, role, np.atleast_1d(streams))
    paths = np.ascontiguousarray(np.atleast_1d(paths), dtype=np.uint64)
    out = np.empty((paths.shape[0], k0.shape[0]), dtype=np.float64)
    fill(k0, k1, paths, int(draw), out, thread_count())
    return out


def normals(seed: int, role: Role, streams, paths, draw: int = 0) -> np.ndarray:
    """Standard normal draws, shape ``(len(paths), len(streams))``."""
    return _grid(_backend.fill_normals, seed, role, streams, paths, draw)


def uniforms(seed: int, role: Role, streams, paths, draw: int = 0) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), same layout as :func:`normals`."""
    return _grid(_backend.fill_uniforms, seed, role, streams, paths, draw)


def philox4x32(counter, key):
    return _backend.philox4x32(counter, key)
