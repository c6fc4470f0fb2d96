"""Pure numpy kernel backend.

All kernels operate on C-contiguous uint64 arrays and rely on numpy's
wrapping unsigned arithmetic, which is exact mod 2^64.
"""
import numpy as np

BACKEND_NAME = "numpy"

_U64 = np.uint64


def mul_mod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product mod 2^64."""
    return np.multiply(a, b, dtype=_U64)


def powers_mod(x: np.ndarray, kmax: int) -> np.ndarray:
    """Stack of elementwise powers x^0 .. x^kmax mod 2^64, shape (kmax+1, n)."""
    x = np.ascontiguousarray(x, dtype=_U64)
    out = np.empty((kmax + 1, x.shape[0]), dtype=_U64)
    out[0] = 1
    for k in range(1, kmax + 1):
        np.multiply(out[k - 1], x, out=out[k])
    return out


def matmul_mod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product mod 2^64 for 2-D uint64 operands."""
    return (a @ b).astype(_U64, copy=False)


def trunc_shift(x: np.ndarray, bits: int, mirror: bool) -> np.ndarray:
    """Per-party local truncation of raw shares by `bits`.

    mirror=False: arithmetic right shift of the two's-complement value
    (party 0's rule).  mirror=True: negate, shift, negate (party 1's rule),
    so the two results still sum to the truncation of the secret.
    """
    if bits == 0:
        return x.copy()
    shift = np.int64(bits)
    if mirror:
        neg = np.negative(x).view(np.int64)
        return np.negative((neg >> shift).view(_U64))
    return (x.view(np.int64) >> shift).view(_U64)
