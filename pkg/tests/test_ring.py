"""Fixed-point encoding and per-party truncation rules."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyshare import ring
from polyshare.ring import (DEFAULT_CONFIG, FixedPoint, RingConfig, decode,
                            decode_array, encode, encode_array, to_signed,
                            to_unsigned, truncate_raw,
                            truncation_failure_bound)


def test_config_defaults():
    assert DEFAULT_CONFIG.total_bits == 64
    assert DEFAULT_CONFIG.working_precision == 16
    assert DEFAULT_CONFIG.modulus == 1 << 64
    assert DEFAULT_CONFIG.half == 1 << 63


def test_config_validation():
    with pytest.raises(ValueError):
        RingConfig(total_bits=0)
    with pytest.raises(ValueError):
        RingConfig(working_precision=0)
    with pytest.raises(ValueError):
        RingConfig(working_precision=32)   # must stay below L/2


def test_encode_basic_values():
    assert encode(1.5).raw == 3 << 15
    assert encode(0.0).raw == 0
    assert encode(-1.0).raw == to_unsigned(-(1 << 16))
    assert encode(2.0, scale=0).raw == 2


def test_encode_half_away_from_zero():
    ulp = 2.0 ** -17   # exactly half an encoding step at p=16
    assert encode(ulp).raw == 1
    assert encode(-ulp).raw == to_unsigned(-1)
    # symmetry encode(-v) == -encode(v)
    for v in (0.3, 1.7, 5.25, 2.0 ** -17, 123.456):
        assert encode(-v).raw == to_unsigned(-to_signed(encode(v).raw))


def test_encode_range_check():
    limit = 2.0 ** 47   # 64 - 1 - 16
    encode(limit * (1 - 1e-10))
    with pytest.raises(ValueError):
        encode(limit)
    with pytest.raises(ValueError):
        encode(-limit * 2)
    with pytest.raises(ValueError):
        encode(math.inf)
    with pytest.raises(ValueError):
        encode(math.nan)


def test_decode_round_trip():
    for v in (0.0, 1.0, -1.0, 0.5, -3.25, 100.0, -2.0 ** 30):
        assert decode(encode(v)) == v
    assert decode(FixedPoint(raw=3 << 15, scale=16)) == 1.5


def test_signed_unsigned_involution():
    for raw in (0, 1, (1 << 63) - 1, 1 << 63, (1 << 64) - 1):
        assert to_unsigned(to_signed(raw)) == raw
    assert to_signed((1 << 64) - 1) == -1
    assert to_signed(1 << 63) == -(1 << 63)


def test_encode_array_matches_scalar():
    vals = np.array([0.0, 1.5, -1.5, 2.0 ** -17, -2.0 ** -17, 3.75])
    raw = encode_array(vals, 16, DEFAULT_CONFIG)
    expect = np.array([encode(float(v)).raw for v in vals], dtype=np.uint64)
    assert np.array_equal(raw, expect)
    back = decode_array(raw, 16, DEFAULT_CONFIG)
    assert np.array_equal(back, np.array([decode(encode(float(v)))
                                          for v in vals]))


def test_encode_array_range_check():
    with pytest.raises(ValueError):
        encode_array(np.array([0.0, 2.0 ** 47]), 16, DEFAULT_CONFIG)
    with pytest.raises(ValueError):
        encode_array(np.array([np.nan]), 16, DEFAULT_CONFIG)


@given(st.lists(st.floats(min_value=-1e9, max_value=1e9), min_size=1,
                max_size=50))
@settings(max_examples=60, deadline=None)
def test_array_round_trip_within_half_ulp(vals):
    arr = np.array(vals)
    back = decode_array(encode_array(arr, 16, DEFAULT_CONFIG), 16,
                        DEFAULT_CONFIG)
    assert np.all(np.abs(back - arr) <= 2.0 ** -17 * (1 + 1e-9))


def test_truncate_raw_scalar_floor():
    # party-0 rule is an arithmetic shift: floor division for both signs
    assert truncate_raw(100 << 16, 16, mirror=False) == 100
    assert truncate_raw(to_unsigned(-(100 << 16) - 1), 16, mirror=False) \
        == to_unsigned(-101)
    # mirror rule: -((-x) >> b), a ceiling-style division
    assert truncate_raw(to_unsigned(-(100 << 16)), 16, mirror=True) \
        == to_unsigned(-100)


def test_truncate_raw_mirror_identity():
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 1 << 64, size=200, dtype=np.uint64)
    mirrored = truncate_raw(raw, 13, mirror=True)
    direct = truncate_raw(np.negative(raw), 13, mirror=False)
    assert np.array_equal(mirrored, np.negative(direct))


def test_truncate_raw_array_matches_scalar():
    rng = np.random.default_rng(1)
    raw = rng.integers(0, 1 << 64, size=64, dtype=np.uint64)
    for mirror in (False, True):
        arr = truncate_raw(raw, 16, mirror)
        ref = np.array([truncate_raw(int(v), 16, mirror) for v in raw],
                       dtype=np.uint64)
        assert np.array_equal(arr, ref)
    with pytest.raises(ValueError):
        truncate_raw(raw, -1, mirror=False)


@given(st.integers(min_value=-(2 ** 30), max_value=2 ** 30),
       st.integers(min_value=0, max_value=2 ** 64 - 1))
@settings(max_examples=200, deadline=None)
def test_shared_truncation_within_one_ulp(secret, mask):
    """Random split, both party rules applied, reconstruction lands within
    1 ulp of the true shifted value (wraps are ~2^-34 here, never seen)."""
    bits = 16
    raw = to_unsigned(secret)
    a = mask
    b = (raw - mask) & ((1 << 64) - 1)
    rec = (truncate_raw(a, bits, mirror=False)
           + truncate_raw(b, bits, mirror=True)) & ((1 << 64) - 1)
    assert abs(to_signed(rec) - (secret >> bits)) <= 1


def test_failure_bound_values():
    assert truncation_failure_bound(2.0 ** 54) == 2.0 ** -10
    assert truncation_failure_bound(0.0) == 0.0
    assert truncation_failure_bound(2.0 ** 70) == 1.0
    with pytest.raises(ValueError):
        truncation_failure_bound(-1.0)


def test_wrap_probability_at_large_magnitude():
    """Brute sample: splits of a value near the ring edge wrap about half
    the time, matching |signed(v)| / 2^64."""
    v = to_unsigned(1 << 62)
    rng = np.random.default_rng(3)
    masks = rng.integers(0, 1 << 64, size=4000, dtype=np.uint64)
    ta = truncate_raw(masks, 16, mirror=False)
    tb = truncate_raw(v - masks, 16, mirror=True)
    truth = (1 << 62) >> 16
    diff = (ta + tb - np.uint64(truth)).view(np.int64)
    rate = np.mean(np.abs(diff) > 2)
    assert abs(rate - 0.25) < 0.03   # |v|/2^64 = 2^-2
