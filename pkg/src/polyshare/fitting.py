"""ReLU approximation polynomials: least-squares fitting, integer
quantization of the coefficients, and exact error reporting.

The coefficients that ship to the secure evaluator are integers at a
power-of-two scale.  Rounding the real least-squares fit coefficient by
coefficient can be badly suboptimal (a small high-order coefficient
rounds to zero and the error blows up), so quantization is posed as
integer least squares: minimize the sum of squared grid residuals over
integer coefficient vectors.  On the symmetric fitting grid the problem
decouples exactly into even and odd coefficient blocks, each small
enough to solve to proven optimality by depth-first enumeration with
incumbent pruning.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class FittingError(ValueError):
    """Invalid fitting request or degenerate quantization outcome."""


@dataclass(frozen=True)
class PolynomialSpec:
    """A quantized polynomial: integer coefficients at scale 2^-precision,
    fitted over [-input_range, input_range], ascending degree order."""
    coefficients: tuple[int, ...]
    precision: int
    input_range: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           tuple(int(c) for c in self.coefficients))
        if len(self.coefficients) == 0:
            raise FittingError("a polynomial needs at least one coefficient")
        if self.precision < 1:
            raise FittingError("coefficient precision must be >= 1")
        if not (self.input_range > 0):
            raise FittingError("input range must be positive")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def real_coefficients(self) -> list[float]:
        s = float(2 ** self.precision)
        return [c / s for c in self.coefficients]

    def evaluate(self, x):
        """Float evaluation; accepts scalars or arrays."""
        return np.polynomial.polynomial.polyval(
            x, np.array(self.real_coefficients()))

    def evaluate_exact(self, x: Fraction) -> Fraction:
        s = 2 ** self.precision
        acc = Fraction(0)
        for c in reversed(self.coefficients):
            acc = acc * x + Fraction(c, s)
        return acc

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps({"degree": self.degree,
                           "precision": self.precision,
                           "coefficients": list(self.coefficients),
                           "input_range": self.input_range}, indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "PolynomialSpec":
        try:
            doc = json.loads(text)
            spec = cls(tuple(doc["coefficients"]), int(doc["precision"]),
                       float(doc["input_range"]))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise FittingError(f"malformed polynomial document: {e}") from e
        if "degree" in doc and int(doc["degree"]) != spec.degree:
            raise FittingError(
                f"declared degree {doc['degree']} does not match "
                f"{len(spec.coefficients)} coefficients")
        return spec


def fitting_grid(input_range: float, grid_step: float) -> np.ndarray:
    """All multiples of grid_step inside [-input_range, input_range]."""
    if not (input_range > 0):
        raise FittingError("input range must be positive")
    if not (grid_step > 0):
        raise FittingError("grid step must be positive")
    k = int(math.floor(input_range / grid_step + 1e-12))
    return np.arange(-k, k + 1, dtype=np.float64) * grid_step


def fit_lsq(degree: int, input_range: float, grid_step: float) -> np.ndarray:
    """Real least-squares fit of ReLU on the grid, ascending coefficients.

    Solved by orthogonal decomposition (never the normal equations), so
    near-degenerate grids give the minimum-norm solution instead of
    garbage; a single-point grid interpolates exactly.
    """
    if degree < 1:
        raise FittingError("fit degree must be >= 1")
    x = fitting_grid(input_range, grid_step)
    y = np.maximum(x, 0.0)
    vand = np.vander(x, degree + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(vand, y, rcond=None)
    return coeffs


def _half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _clamp(v: int, bound: int) -> int:
    return max(-bound, min(bound, v))


def _naive_ints(cols: np.ndarray, y: np.ndarray, scale: int,
                bound: int) -> np.ndarray:
    sol, *_ = np.linalg.lstsq(cols, y, rcond=None)
    return np.array([_clamp(_half_up(v * scale), bound) for v in sol],
                    dtype=np.int64)


def _refit_ints(cols: np.ndarray, y: np.ndarray, scale: int,
                bound: int) -> np.ndarray:
    """Round the highest-degree free coefficient, subtract its exact
    contribution, refit the rest; repeat down to the constant."""
    residual = y.astype(np.float64).copy()
    free = list(range(cols.shape[1]))
    out = np.zeros(cols.shape[1], dtype=np.int64)
    while free:
        sol, *_ = np.linalg.lstsq(cols[:, free], residual, rcond=None)
        hi = max(free)
        q = _clamp(_half_up(sol[free.index(hi)] * scale), bound)
        out[hi] = q
        residual = residual - cols[:, hi] * (q / scale)
        free.remove(hi)
    return out


def _enumerate_block(r_mat: np.ndarray, z: np.ndarray, bound: int,
                     incumbent: np.ndarray, incumbent_obj: float
                     ) -> np.ndarray:
    """Exact integer minimizer of ||R a - z||^2 with |a_i| <= bound.

    Depth-first search from the last coordinate; candidates at each level
    are visited in increasing distance from the continuous center, so the
    first pruned candidate proves the whole level exhausted.
    """
    d = len(z)
    best = incumbent.astype(np.int64).copy()
    best_obj = incumbent_obj
    a = np.zeros(d, dtype=np.int64)

    def dfs(k: int, partial: float) -> None:
        nonlocal best, best_obj
        if k < 0:
            if partial < best_obj:
                best_obj = partial
                best = a.copy()
            return
        rest = float(z[k] - r_mat[k, k + 1:] @ a[k + 1:])
        center = rest / r_mat[k, k]
        hi = _half_up(center)
        lo = hi - 1
        while hi <= bound or lo >= -bound:
            if hi <= bound and (lo < -bound
                                or hi - center <= center - lo):
                v, hi = hi, hi + 1
            else:
                v, lo = lo, lo - 1
            diff = rest - r_mat[k, k] * v
            contrib = diff * diff
            if partial + contrib >= best_obj:
                break   # later candidates sit farther from the center
            a[k] = v
            dfs(k - 1, partial + contrib)
        a[k] = 0

    dfs(d - 1, 0.0)
    return best


def _exact_ints(x: np.ndarray, y_part: np.ndarray, block_cols: np.ndarray,
                scale: int, bound: int) -> np.ndarray:
    """Provably optimal integer coefficients for one parity block."""
    cols = block_cols
    naive = _naive_ints(cols, y_part, scale, bound)
    refit = _refit_ints(cols, y_part, scale, bound)
    scaled = cols / scale

    def sse(a: np.ndarray) -> float:
        r = scaled @ a.astype(np.float64) - y_part
        return float(r @ r)

    incumbent, incumbent_sse = min(
        ((naive, sse(naive)), (refit, sse(refit))), key=lambda t: t[1])
    q_mat, r_mat = np.linalg.qr(scaled)
    signs = np.sign(np.diag(r_mat))
    signs[signs == 0] = 1.0
    r_mat = r_mat * signs[:, None]
    z = (q_mat.T @ y_part) * signs
    # ||scaled a - y||^2 = ||R a - z||^2 + (||y||^2 - ||z||^2)
    const = float(y_part @ y_part - z @ z)
    return _enumerate_block(r_mat, z, bound, incumbent,
                            incumbent_sse - const)


def fit_quantized(degree: int, input_range: float, fit_precision: int = 10,
                  *, strategy: str = "exact") -> PolynomialSpec:
    """Integer-coefficient fit of ReLU over the fit_precision-bit grid.

    Minimizes the sum of squared residuals over integer coefficient
    vectors with |A_i| <= 2^fit_precision.  The default "exact" strategy
    solves this to optimality: ReLU splits as x/2 + |x|/2, and on the
    symmetric grid odd and even coefficients fit those parts
    independently, leaving two small integer least-squares blocks that a
    pruned enumeration settles exactly.  "refit" is the sequential
    round-then-refit heuristic; "naive" rounds the real fit directly
    (kept mainly to demonstrate how badly that can go).
    """
    if degree < 1:
        raise FittingError("fit degree must be >= 1")
    if fit_precision < 4:
        raise FittingError("coefficient precision below 4 bits is not useful")
    scale = 2 ** fit_precision
    bound = scale
    x = fitting_grid(input_range, 2.0 ** -fit_precision)
    if x.size < degree + 1:
        raise FittingError(
            f"grid over [-{input_range}, {input_range}] at step "
            f"2^-{fit_precision} has {x.size} points, too few to determine "
            f"{degree + 1} coefficients")
    y = np.maximum(x, 0.0)
    vand = np.vander(x, degree + 1, increasing=True)
    if strategy == "naive":
        ints = _naive_ints(vand, y, scale, bound)
    elif strategy == "refit":
        ints = _refit_ints(vand, y, scale, bound)
    elif strategy == "exact":
        ints = np.zeros(degree + 1, dtype=np.int64)
        for parity in (0, 1):
            idx = [i for i in range(degree + 1) if i % 2 == parity]
            if not idx:
                continue
            y_part = np.abs(x) / 2.0 if parity == 0 else x / 2.0
            block = _exact_ints(x, y_part, vand[:, idx], scale, bound)
            for j, i in enumerate(idx):
                ints[i] = block[j]
    else:
        raise FittingError(f"unknown quantization strategy {strategy!r}")
    if not np.any(ints):
        raise FittingError(
            "quantization produced the zero polynomial: the coefficient "
            "bound or grid is degenerate for this configuration")
    return PolynomialSpec(tuple(int(v) for v in ints), fit_precision,
                          float(input_range))


def _max_error_dyadic(spec: PolynomialSpec, lam: Fraction, num: int,
                      bits: int) -> tuple[Fraction, Fraction]:
    """Integer-arithmetic grid scan for steps of the form num/2^bits."""
    n = spec.degree
    m = max(n, 1)
    s = 2 ** spec.precision
    step = Fraction(num, 2 ** bits)
    k = int(lam / step)
    denom_x = 2 ** bits
    # common denominator s * denom_x^m; Horner in the integer numerator
    pows = [denom_x ** (m - j) for j in range(n + 1)]
    best_num = -1
    best_i = 0
    denom = s * denom_x ** m
    for i in range(-k, k + 1):
        xi = i * num
        acc = 0
        for j in range(n, -1, -1):
            acc = acc * xi + spec.coefficients[j] * pows[j]
        relu_num = xi * s * denom_x ** (m - 1) if xi > 0 else 0
        e = abs(acc - relu_num)
        if e > best_num:
            best_num = e
            best_i = i
    return Fraction(best_num, denom), Fraction(best_i * num, denom_x)


def max_error(spec: PolynomialSpec, input_range: float | None = None,
              grid_step: float | None = None) -> tuple[float, float]:
    """Worst |poly - ReLU| over the grid, and where it happens.

    Evaluation is exact rational arithmetic; the returned floats are the
    rounded exact values.  Defaults: the spec's own fitted range and its
    2^-precision grid step.
    """
    lam = Fraction(input_range if input_range is not None
                   else spec.input_range)
    step = Fraction(grid_step if grid_step is not None
                    else Fraction(1, 2 ** spec.precision))
    if lam <= 0 or step <= 0:
        raise FittingError("range and grid step must be positive")
    if step.denominator & (step.denominator - 1) == 0:
        err, arg = _max_error_dyadic(spec, lam, step.numerator,
                                     step.denominator.bit_length() - 1)
        return float(err), float(arg)
    k = int(lam / step)
    best = Fraction(-1)
    arg = Fraction(0)
    for i in range(-k, k + 1):
        xf = i * step
        relu = xf if xf > 0 else Fraction(0)
        e = abs(spec.evaluate_exact(xf) - relu)
        if e > best:
            best, arg = e, xf
    return float(best), float(arg)
