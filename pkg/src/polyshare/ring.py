"""Arithmetic in the ring of integers mod 2^L with fixed-point semantics.

Values live as unsigned residues; the signed interpretation is two's
complement (residues at or above 2^(L-1) are negative).  A FixedPoint value
carries the number of fractional bits ("scale") alongside its raw residue.
Multiplying two fixed-point values adds their scales; the local truncation
rule here removes fractional bits again without any communication, at the
cost of a small wrap-around failure probability proportional to the
magnitude of the value being truncated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import trunc_shift

DEFAULT_TOTAL_BITS = 64
DEFAULT_PRECISION = 16


@dataclass(frozen=True)
class RingConfig:
    """Ring and fixed-point parameters.

    total_bits: ring is Z mod 2^total_bits (64 for the default build).
    working_precision: fractional bits carried by encoded values.
    """
    total_bits: int = DEFAULT_TOTAL_BITS
    working_precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if self.total_bits <= 0:
            raise ValueError("total_bits must be positive")
        if not 0 < self.working_precision < self.total_bits / 2:
            raise ValueError("working_precision must satisfy 0 < p < L/2")

    @property
    def modulus(self) -> int:
        return 1 << self.total_bits

    @property
    def mask(self) -> int:
        return self.modulus - 1

    @property
    def half(self) -> int:
        return 1 << (self.total_bits - 1)


DEFAULT_CONFIG = RingConfig()


@dataclass(frozen=True)
class FixedPoint:
    """An unsigned residue mod 2^L tagged with its fractional-bit count."""
    raw: int
    scale: int


def to_signed(raw: int, cfg: RingConfig = DEFAULT_CONFIG) -> int:
    """Two's-complement interpretation of a residue."""
    raw &= cfg.mask
    return raw - cfg.modulus if raw >= cfg.half else raw


def to_unsigned(value: int, cfg: RingConfig = DEFAULT_CONFIG) -> int:
    """Residue of a (possibly negative) integer."""
    return value & cfg.mask


def encode(value: float, cfg: RingConfig = DEFAULT_CONFIG,
           scale: int | None = None) -> FixedPoint:
    """Encode a real number as a fixed-point residue.

    Rounding is half-away-from-zero so that encode(-v) == -encode(v).
    Raises ValueError when the value falls outside the representable
    range (-2^(L-1-p), 2^(L-1-p)).
    """
    p = cfg.working_precision if scale is None else scale
    if not math.isfinite(value):
        raise ValueError(f"cannot encode non-finite value {value!r}")
    limit = 2.0 ** (cfg.total_bits - 1 - p)
    if abs(value) >= limit:
        raise ValueError(
            f"value {value!r} outside representable range (+-{limit}) "
            f"at {p} fractional bits")
    magnitude = math.floor(abs(value) * (1 << p) + 0.5)
    raw = magnitude if value >= 0 else -magnitude
    return FixedPoint(raw & cfg.mask, p)


def decode(fp: FixedPoint, cfg: RingConfig = DEFAULT_CONFIG) -> float:
    """Real value of a fixed-point residue: signed(raw) / 2^scale."""
    return to_signed(fp.raw, cfg) / (1 << fp.scale) if fp.scale >= 0 \
        else to_signed(fp.raw, cfg) * float(1 << -fp.scale)


def encode_array(values: np.ndarray, scale: int,
                 cfg: RingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized encode: float array -> uint64 residues at `scale`."""
    v = np.asarray(values, dtype=np.float64)
    limit = 2.0 ** (cfg.total_bits - 1 - scale)
    if np.any(~np.isfinite(v)) or np.any(np.abs(v) >= limit):
        raise ValueError("value outside representable fixed-point range")
    magnitude = np.floor(np.abs(v) * float(1 << scale) + 0.5)
    signed = np.where(v >= 0, magnitude, -magnitude).astype(np.int64)
    return signed.view(np.uint64) if cfg.total_bits == 64 \
        else (signed.astype(object) % cfg.modulus).astype(np.uint64)


def decode_array(raw: np.ndarray, scale: int,
                 cfg: RingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized decode: uint64 residues at `scale` -> float array."""
    signed = np.asarray(raw, dtype=np.uint64).view(np.int64)
    return signed.astype(np.float64) / float(1 << scale) if scale >= 0 \
        else signed.astype(np.float64) * float(1 << -scale)


def truncate_raw(raw: np.ndarray | int, bits: int, mirror: bool) -> "np.ndarray | int":
    """Per-party truncation rule on raw residues (L=64).

    Party 0 (mirror=False) arithmetic-right-shifts its share's signed
    interpretation; party 1 (mirror=True) negates, shifts, and negates
    back.  The two results sum to the truncated secret up to 1 ulp per
    party, except when the uniform share split straddles the ring
    boundary (probability |signed(secret)| / 2^64).
    """
    if bits < 0:
        raise ValueError("truncation bit count must be >= 0")
    if isinstance(raw, np.ndarray):
        flat = np.ascontiguousarray(raw.reshape(-1), dtype=np.uint64)
        return trunc_shift(flat, bits, mirror).reshape(raw.shape)
    mask = (1 << 64) - 1
    if mirror:
        neg = (-raw) & mask
        signed = neg - (1 << 64) if neg >= (1 << 63) else neg
        return (-(signed >> bits)) & mask
    signed = raw - (1 << 64) if raw >= (1 << 63) else raw
    return (signed >> bits) & mask


def truncation_failure_bound(value_magnitude: float,
                             cfg: RingConfig = DEFAULT_CONFIG) -> float:
    """Wrap-around probability bound for truncating a value of the given
    raw-unit magnitude: min(1, magnitude / 2^L)."""
    if value_magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    return min(1.0, value_magnitude / float(cfg.modulus))
