"""Backend parity: the compiled kernels must agree with the numpy path."""
import numpy as np
import pytest

from polyshare import kernels
from polyshare.kernels import get_backend

MOD = 1 << 64


def _both():
    npy = get_backend("numpy")
    try:
        cy = get_backend("cython")
    except (ImportError, ValueError):
        pytest.skip("compiled backend unavailable")
    return npy, cy


def test_active_backend_is_known():
    assert kernels.BACKEND in ("cython", "numpy")


def test_mul_mod_wraps():
    npy = get_backend("numpy")
    x = np.array([(1 << 32) + 1], dtype=np.uint64)
    out = npy.mul_mod(x, x)
    assert int(out[0]) == ((1 << 33) + 1)   # ((2^32+1)^2) mod 2^64


def test_mul_mod_backend_parity():
    npy, cy = _both()
    rng = np.random.default_rng(11)
    x = rng.integers(0, MOD, size=5000, dtype=np.uint64)
    y = rng.integers(0, MOD, size=5000, dtype=np.uint64)
    assert np.array_equal(npy.mul_mod(x, y), cy.mul_mod(x, y))


def test_powers_mod_against_python_ints():
    npy = get_backend("numpy")
    rng = np.random.default_rng(12)
    x = rng.integers(0, MOD, size=40, dtype=np.uint64)
    stack = npy.powers_mod(x, 6)
    assert stack.shape == (7, 40)
    for j in range(7):
        ref = np.array([pow(int(v), j, MOD) for v in x], dtype=np.uint64)
        assert np.array_equal(stack[j], ref)


def test_powers_mod_backend_parity():
    npy, cy = _both()
    rng = np.random.default_rng(13)
    x = rng.integers(0, MOD, size=300, dtype=np.uint64)
    for kmax in (1, 2, 5, 8):
        assert np.array_equal(npy.powers_mod(x, kmax), cy.powers_mod(x, kmax))


def test_matmul_mod_against_python_ints():
    npy = get_backend("numpy")
    rng = np.random.default_rng(14)
    a = rng.integers(0, MOD, size=(3, 4), dtype=np.uint64)
    b = rng.integers(0, MOD, size=(4, 5), dtype=np.uint64)
    out = npy.matmul_mod(a, b)
    for i in range(3):
        for j in range(5):
            ref = sum(int(a[i, k]) * int(b[k, j]) for k in range(4)) % MOD
            assert int(out[i, j]) == ref


def test_matmul_mod_backend_parity():
    npy, cy = _both()
    rng = np.random.default_rng(15)
    a = rng.integers(0, MOD, size=(17, 23), dtype=np.uint64)
    b = rng.integers(0, MOD, size=(23, 9), dtype=np.uint64)
    assert np.array_equal(npy.matmul_mod(a, b), cy.matmul_mod(a, b))


def test_trunc_shift_matches_reference():
    npy = get_backend("numpy")
    rng = np.random.default_rng(16)
    x = rng.integers(0, MOD, size=500, dtype=np.uint64)
    out = npy.trunc_shift(x, 16, False)
    ref = (x.view(np.int64) >> 16).view(np.uint64)
    assert np.array_equal(out, ref)
    mirrored = npy.trunc_shift(x, 16, True)
    ref_m = np.negative((np.negative(x).view(np.int64) >> 16)
                        .view(np.uint64))
    assert np.array_equal(mirrored, ref_m)


def test_trunc_shift_zero_bits_copies():
    npy = get_backend("numpy")
    x = np.array([5, 6], dtype=np.uint64)
    out = npy.trunc_shift(x, 0, False)
    assert np.array_equal(out, x)
    assert out is not x


def test_trunc_shift_backend_parity():
    npy, cy = _both()
    rng = np.random.default_rng(17)
    x = rng.integers(0, MOD, size=2000, dtype=np.uint64)
    for bits in (0, 1, 16, 40, 63):
        for mirror in (False, True):
            assert np.array_equal(npy.trunc_shift(x, bits, mirror),
                                  cy.trunc_shift(x, bits, mirror))


def test_get_backend_rejects_unknown():
    with pytest.raises((ValueError, ImportError)):
        get_backend("fortran")
