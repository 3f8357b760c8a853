import os
import subprocess
import sys

import numpy as np
import pytest

from relperf import _kernels_py, rng

try:
    from relperf import _kernels
except ImportError:  # pure-Python install
    _kernels = None

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    (
        (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
        (0xA4093822, 0x299F31D0),
        (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
    ),
]

backends = [_kernels_py] + ([_kernels] if _kernels is not None else [])


@pytest.mark.parametrize("backend", backends, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("counter,key,expected", KAT)
def test_philox_known_answers(backend, counter, key, expected):
    assert backend.philox4x32(counter, key) == expected


@pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")
def test_compiled_and_fallback_agree():
    k0, k1 = rng.stream_keys(123, rng.Role.IDIOSYNCRATIC, np.arange(7))
    paths = np.arange(5000, dtype=np.uint64) + np.uint64(2**40)
    for draw in (0, 3):
        a = np.empty((5000, 7))
        b = np.empty((5000, 7))
        _kernels.fill_normals(k0, k1, paths, draw, a, 2)
        _kernels_py.fill_normals(k0, k1, paths, draw, b, 1)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
        _kernels.fill_uniforms(k0, k1, paths, draw, a, 2)
        _kernels_py.fill_uniforms(k0, k1, paths, draw, b, 1)
        np.testing.assert_array_equal(a, b)


def test_streams_are_addressable():
    full = rng.normals(9, rng.Role.COMMON, [0, 1, 2], np.arange(100))
    part = rng.normals(9, rng.Role.COMMON, [2], np.arange(40, 60))
    np.testing.assert_array_equal(full[40:60, 2:3], part)


def test_roles_and_seeds_give_distinct_streams():
    a = rng.normals(1, rng.Role.COMMON, [0], np.arange(64))
    b = rng.normals(1, rng.Role.IDIOSYNCRATIC, [0], np.arange(64))
    c = rng.normals(2, rng.Role.COMMON, [0], np.arange(64))
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_normal_and_uniform_moments():
    z = rng.normals(5, rng.Role.COMMON, [0, 1], np.arange(200_000))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    u = rng.uniforms(5, rng.Role.TYPE, [0], np.arange(200_000))
    assert 0.0 < u.min() and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005


def test_derive_seed_is_stable_and_spreads():
    assert rng.derive_seed(0, 1) == rng.derive_seed(0, 1)
    assert len({rng.derive_seed(7, n) for n in range(1000)}) == 1000


def test_thread_count_does_not_change_draws():
    code = (
        "import numpy as np; from relperf import rng;"
        "print(rng.normals(3, rng.Role.IDIOSYNCRATIC, np.arange(4), np.arange(20000)).tobytes().hex()[:4000])"
    )
    outs = set()
    for threads in ("1", "4", "8"):
        env = dict(os.environ, RELPERF_THREADS=threads)
        outs.add(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout)
    assert len(outs) == 1


def test_fallback_selected_by_environment():
    env = dict(os.environ, RELPERF_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", "from relperf import rng; print(rng.BACKEND)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"
