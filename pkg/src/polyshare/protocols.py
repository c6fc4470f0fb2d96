"""Secure evaluation of activation polynomials over additive shares.

Three interchangeable evaluation strategies with very different
communication shapes, plus a bit-exact ReLU for reference:

* exponent-by-binomial expansion: every power of the secret is a single
  batched product of locally computed operand vectors, so an entire
  polynomial costs one communication round;
* blind-power tuples: the dealer ships shares of r, r^2, ..., and one
  opened difference x - r drives a local recurrence that reconstructs
  shares of every power, again one round for the whole polynomial;
* iterated square-and-multiply: the log-depth baseline, one round per
  doubling level;
* a boolean comparison ReLU built from a carry-lookahead adder over
  XOR-shared words.

Fixed-point bookkeeping follows one rule: the power for degree i is fed
an input pre-truncated by ceil((i-2)*p / i) bits, and the raw product is
post-truncated back so every term lands at exactly the working scale p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import mul_mod, powers_mod
from .sharing import (ProtocolError, Role, Session, Share, linear_combine,
                      local_truncate)

_U64 = np.uint64
_MASK = (1 << 64) - 1


def scale_down_factor(i: int, precision: int) -> int:
    """Fractional bits dropped from the input of the degree-i power.

    ceil((i - 2) * precision / i): chosen so the raw degree-i product
    stays clear of the ring's sign boundary while keeping as much of the
    fraction as the budget allows.  Zero for i = 2.
    """
    if i < 2:
        raise ValueError("power scaling is defined for exponents >= 2")
    return -((-(i - 2) * precision) // i)


@dataclass(frozen=True)
class ScaleStep:
    """Truncation schedule for one exponent."""
    exponent: int
    pre_bits: int
    post_bits: int


@dataclass(frozen=True)
class ScalePlan:
    """Full truncation schedule for a polynomial of a given degree."""
    precision: int
    degree: int
    steps: tuple[ScaleStep, ...]

    @classmethod
    def build(cls, degree: int, precision: int) -> "ScalePlan":
        steps = []
        for i in range(2, degree + 1):
            pre = scale_down_factor(i, precision)
            post = precision * (i - 1) - pre * i
            steps.append(ScaleStep(i, pre, post))
        plan = cls(precision, degree, tuple(steps))
        plan.check()
        return plan

    def check(self) -> None:
        """Every term must land at exactly the working scale."""
        for s in self.steps:
            landed = s.exponent * (self.precision - s.pre_bits) - s.post_bits
            if landed != self.precision or s.pre_bits < 0 or s.post_bits < 0:
                raise ProtocolError(
                    f"scale plan broken at exponent {s.exponent}: "
                    f"lands at {landed}, want {self.precision}")


def _espn_operands(role: Role, x_raw: np.ndarray, k: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Local operand vectors whose batched cross product sums to x^k.

    (x_A + x_B)^k expands into k+1 binomial terms; one party contributes
    its share's powers, the other its powers weighted by the binomial
    coefficients.  Each side enters the batched product as a trivial
    sharing (actual values on one side, zeros on the other).
    """
    n = x_raw.size
    pw = powers_mod(x_raw, k)                    # rows x^0 .. x^k
    zeros = np.zeros((k + 1) * n, dtype=_U64)
    if role is Role.A:
        mine = np.ascontiguousarray(pw[::-1]).reshape(-1)     # x_A^(k-i)
        return mine, zeros
    binoms = np.array([math.comb(k, i) & _MASK for i in range(k + 1)],
                      dtype=_U64)
    mine = np.multiply(binoms[:, None], pw, dtype=_U64).reshape(-1)
    return zeros, mine


def _sum_segments(flat: np.ndarray, k: int, n: int) -> np.ndarray:
    """Collapse the k+1 binomial term products back to one value per slot."""
    return flat.reshape(k + 1, n).sum(axis=0, dtype=_U64)


def espn_exp(session: Session, x: Share, k: int) -> Share:
    """Secure k-th power by binomial expansion: one round, any batch.

    The result is a raw ring power, scale k * x.scale; the caller owns
    any truncation.  k = 0 yields the public constant one (no traffic),
    k = 1 is the input itself.
    """
    if k < 0:
        raise ValueError("exponent must be non-negative")
    if x.role != session.role:
        raise ProtocolError("share does not belong to this session's party")
    if k == 0:
        one = np.ones(x.shape, dtype=_U64) if session.role is Role.A \
            else np.zeros(x.shape, dtype=_U64)
        return Share(one, session.role, 0)
    if k == 1:
        return x
    flat = x.values.reshape(-1)
    xv, yv = _espn_operands(session.role, flat, k)
    prod = session.beaver_mul_raw(xv, yv)
    out = _sum_segments(prod, k, flat.size)
    return Share(out.reshape(x.shape), session.role, k * x.scale)


def _combine_terms(session: Session, terms: dict[int, np.ndarray],
                   coeffs, precision: int, fit_precision: int,
                   shape: tuple) -> Share:
    """Public-coefficient combination plus the single final truncation.

    terms[i] holds raw shares of x^i at scale `precision` for i >= 1;
    coefficient i multiplies it into scale precision + fit_precision,
    the constant enters pre-scaled, and one truncation lands the result
    back at `precision`.
    """
    consts = []
    shares = []
    for i in range(1, len(coeffs)):
        consts.append(int(coeffs[i]))
        shares.append(Share(terms[i], session.role, precision))
    offset = (int(coeffs[0]) << precision) & _MASK
    if shares:
        acc = linear_combine(consts, shares, offset=offset)
    else:
        base = np.zeros(shape, dtype=_U64)
        if session.role is Role.A:
            base += _U64(offset)
        acc = Share(base, session.role, precision)
    acc = Share(acc.values, session.role, precision + fit_precision)
    return local_truncate(acc, fit_precision)


def _check_poly_args(session: Session, x: Share, coeffs) -> int:
    if len(coeffs) == 0:
        raise ProtocolError("polynomial needs at least a constant term")
    if x.role != session.role:
        raise ProtocolError("share does not belong to this session's party")
    if x.scale <= 0:
        raise ProtocolError("polynomial input must carry a positive scale")
    return len(coeffs) - 1


def espn_poly(session: Session, x: Share, coeffs, fit_precision: int
              ) -> Share:
    """Evaluate a quantized polynomial in ONE round via fused expansion.

    coeffs[i] is the integer coefficient at scale 2^-fit_precision.  All
    powers for every exponent and every batch element share a single
    paired exchange; pre/post truncations and the coefficient combination
    are local.  Result scale equals x.scale.
    """
    degree = _check_poly_args(session, x, coeffs)
    p = x.scale
    flat = x.values.reshape(-1)
    n = flat.size
    terms: dict[int, np.ndarray] = {1: flat}
    if degree >= 2:
        plan = ScalePlan.build(degree, p)
        xs_parts, ys_parts = [], []
        for step in plan.steps:
            xt = local_truncate(x, step.pre_bits).values.reshape(-1)
            xv, yv = _espn_operands(session.role, xt, step.exponent)
            xs_parts.append(xv)
            ys_parts.append(yv)
        prod = session.beaver_mul_raw(np.concatenate(xs_parts),
                                      np.concatenate(ys_parts))
        offset = 0
        for step in plan.steps:
            seg = (step.exponent + 1) * n
            raw = _sum_segments(prod[offset:offset + seg], step.exponent, n)
            offset += seg
            lifted = Share(raw, session.role,
                           step.exponent * (p - step.pre_bits))
            terms[step.exponent] = local_truncate(lifted,
                                                  step.post_bits).values
    out = _combine_terms(session, terms, coeffs, p, fit_precision, (n,))
    return out.reshape(x.shape)


def _hb_table(role: Role, opened: np.ndarray, tuple_rows: np.ndarray,
              k: int) -> dict[tuple[int, int], np.ndarray]:
    """Local recurrence turning [r^j] shares and the public x - r into
    shares of the mixed powers x^m r^j (exact in the ring).

    T[0][j] = [r^j] with T[0][0] the public one; for m >= 1,
    T[m][j] = T[0][m+j] + (x-r) * sum over t of T[m-1-t][t+j].
    Column 0 of row m is the share of x^m.
    """
    n = opened.size
    table: dict[tuple[int, int], np.ndarray] = {}
    for j in range(k + 1):
        if j == 0:
            table[(0, 0)] = (np.ones(n, dtype=_U64) if role is Role.A
                             else np.zeros(n, dtype=_U64))
        else:
            table[(0, j)] = tuple_rows[j - 1]
    for m in range(1, k + 1):
        for j in range(k - m + 1):
            acc = np.zeros(n, dtype=_U64)
            for t in range(m):
                acc += table[(m - 1 - t, t + j)]
            table[(m, j)] = table[(0, m + j)] + mul_mod(opened, acc)
    return table


def hb_powers(session: Session, x: Share, k: int) -> list[Share]:
    """Shares of x^1 .. x^k from one blind-power tuple; one round.

    Raw ring powers: the returned share for exponent j carries scale
    j * x.scale and is exact mod 2^64, so callers choose their own
    truncation points.
    """
    if k < 1:
        raise ValueError("power count must be >= 1")
    if x.role != session.role:
        raise ProtocolError("share does not belong to this session's party")
    flat = x.values.reshape(-1)
    rows = session.dealer.power_tuples(session.role, flat.size, k)
    opened = session.open_raw(flat - rows[0])
    table = _hb_table(session.role, opened, rows, k)
    return [Share(table[(m, 0)].reshape(x.shape), session.role, m * x.scale)
            for m in range(1, k + 1)]


def hb_poly(session: Session, x: Share, coeffs, fit_precision: int) -> Share:
    """Polynomial evaluation from blind-power tuples; one round total.

    Each exponent gets an independently drawn tuple: the pre-truncated
    inputs differ per exponent, and reusing one blind across them would
    open their exact differences.  All masked differences ride a single
    exchange.
    """
    degree = _check_poly_args(session, x, coeffs)
    p = x.scale
    flat = x.values.reshape(-1)
    n = flat.size
    terms: dict[int, np.ndarray] = {1: flat}
    if degree >= 2:
        plan = ScalePlan.build(degree, p)
        tuples = {}
        masked_parts = []
        for step in plan.steps:
            xt = local_truncate(x, step.pre_bits).values.reshape(-1)
            rows = session.dealer.power_tuples(session.role, n, step.exponent)
            tuples[step.exponent] = rows
            masked_parts.append(xt - rows[0])
        opened_all = session.open_raw(np.concatenate(masked_parts))
        for idx, step in enumerate(plan.steps):
            opened = opened_all[idx * n:(idx + 1) * n]
            raw = _hb_table(session.role, opened, tuples[step.exponent],
                            step.exponent)[(step.exponent, 0)]
            lifted = Share(raw, session.role,
                           step.exponent * (p - step.pre_bits))
            terms[step.exponent] = local_truncate(lifted,
                                                  step.post_bits).values
    out = _combine_terms(session, terms, coeffs, p, fit_precision, (n,))
    return out.reshape(x.shape)


def sqmul_poly(session: Session, x: Share, coeffs, fit_precision: int
               ) -> Share:
    """Log-depth baseline: powers by repeated squaring and multiplying.

    Each doubling level batches its products into one exchange and
    truncates back to the working scale, so a degree-n polynomial costs
    ceil(log2 n) rounds.
    """
    degree = _check_poly_args(session, x, coeffs)
    p = x.scale
    flat = x.values.reshape(-1)
    n = flat.size
    terms: dict[int, np.ndarray] = {1: flat}
    top = 1
    while top < degree:
        targets = list(range(top + 1, min(2 * top, degree) + 1))
        lhs = np.concatenate([terms[top] for _ in targets])
        rhs = np.concatenate([terms[t - top] for t in targets])
        prod = session.beaver_mul_raw(lhs, rhs)
        for idx, t in enumerate(targets):
            raw = prod[idx * n:(idx + 1) * n]
            lifted = Share(raw, session.role, 2 * p)
            terms[t] = local_truncate(lifted, p).values
        top = targets[-1]
    out = _combine_terms(session, terms, coeffs, p, fit_precision, (n,))
    return out.reshape(x.shape)


_KS_SHIFTS = (1, 2, 4, 8, 16, 32)


def relu_binary(session: Session, x: Share) -> Share:
    """Bit-exact ReLU via a carry-lookahead sign extraction; 9 rounds.

    The parties' additive share words ARE an XOR sharing of each other's
    operands, so the sign bit of the secret is the top bit of a binary
    addition: one AND for the initial generate word, six batched
    carry-lookahead levels, one bit-to-arithmetic conversion, and one
    final product x * (1 - sign).
    """
    if x.role != session.role:
        raise ProtocolError("share does not belong to this session's party")
    flat = x.values.reshape(-1)
    n = flat.size
    zeros = np.zeros(n, dtype=_U64)
    if session.role is Role.A:
        g = session.bit_and(flat, zeros)
    else:
        g = session.bit_and(zeros, flat)
    p_init = flat.copy()
    p_run = flat.copy()
    for d in _KS_SHIFTS:
        shift = _U64(d)
        lhs = np.concatenate([p_run, p_run])
        rhs = np.concatenate([g << shift, p_run << shift])
        both = session.bit_and(lhs, rhs)
        g = g ^ both[:n]
        p_run = both[n:]
    carries = g << _U64(1)
    sign_word = p_init ^ carries
    sign_bit = (sign_word >> _U64(63)) & _U64(1)
    sign_arith = session.bits_to_arith(sign_bit)
    if session.role is Role.A:
        keep = _U64(1) - sign_arith
    else:
        keep = np.negative(sign_arith)
    out = session.beaver_mul_raw(flat, keep)
    return Share(out.reshape(x.shape), session.role, x.scale)


@dataclass(frozen=True)
class TruncationFailureBound:
    """Wrap-probability bounds for one polynomial evaluation."""
    per_truncation: float
    first_truncation: float
    total: float


def _ceil_log2(value) -> int:
    if value <= 0:
        raise ValueError("magnitude bound must be positive")
    if float(value).is_integer():
        return (int(value) - 1).bit_length()
    return math.ceil(math.log2(value))


def failure_bound(degree: int, magnitude_bound, precision: int,
                  total_bits: int = 64) -> TruncationFailureBound:
    """Analytic truncation-wrap bounds for a degree-n evaluation.

    With inputs bounded by `magnitude_bound` in absolute value, a signed
    value needs b = ceil(log2 bound) + 1 bits; the degree-n raw product
    sits below 2^(n*b + 2p), so its truncation wraps with probability at
    most 2^(n*b + 2p - L).  The input-side truncations see only 2^(b+p).
    The total is the union bound over every truncation in the schedule.
    """
    if degree < 2:
        raise ValueError("failure bounds apply to degree >= 2")
    b = _ceil_log2(magnitude_bound) + 1
    per = 2.0 ** (degree * b + 2 * precision - total_bits)
    first = 2.0 ** (b + precision - total_bits)
    total = 0.0
    for i in range(2, degree + 1):
        total += 2.0 ** (i * b + 2 * precision - total_bits) + first
    return TruncationFailureBound(per, first, total)


@dataclass(frozen=True)
class CostEstimate:
    """Predicted per-party traffic for one protocol invocation."""
    rounds: int
    bytes_sent: int

    @property
    def round_trips(self) -> int:
        return self.rounds


def _wire(elements: int) -> int:
    return 8 + 8 * elements


def predict_cost(protocol: str, count: int, degree: int = 4,
                 precision: int = 16) -> CostEstimate:
    """Exact per-party rounds and bytes for a batch of `count` elements.

    Predictions match the transcript accounting byte for byte: each
    exchange carries an 8-byte element count plus 8 bytes per element.
    """
    name = protocol.lower().replace("_", "-")
    exchanges: list[int] = []
    if name == "espn":
        if degree >= 2:
            exchanges.append(
                2 * count * sum(i + 1 for i in range(2, degree + 1)))
    elif name in ("hb", "honeybadger"):
        if degree >= 2:
            exchanges.append((degree - 1) * count)
    elif name == "sqmul":
        top = 1
        while top < degree:
            targets = list(range(top + 1, min(2 * top, degree) + 1))
            exchanges.append(2 * count * len(targets))
            top = targets[-1]
    elif name in ("binary", "binary-relu", "relu"):
        exchanges.append(2 * count)                 # generate-word AND
        exchanges.extend([4 * count] * len(_KS_SHIFTS))
        exchanges.append(count)                     # bit conversion opening
        exchanges.append(2 * count)                 # final keep product
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return CostEstimate(len(exchanges), sum(_wire(e) for e in exchanges))
