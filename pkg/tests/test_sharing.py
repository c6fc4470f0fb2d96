"""Additive sharing, the seeded dealer, and the session primitives."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyshare import ring
from polyshare.kernels import matmul_mod, mul_mod
from polyshare.ring import encode, to_signed, to_unsigned
from polyshare.sharing import (BeaverTriples, DealerExhaustedError,
                               PowerTuples, ProtocolError, Role, Session,
                               Share, TrustedDealer, beaver_multiply,
                               dealer_power_tuples, dealer_triples,
                               linear_combine, local_truncate, open_value,
                               reconstruct, reconstruct_raw,
                               run_session_pair, share, share_raw)
from tests.conftest import decoded, opened, run_symmetric, split_raw

MOD = 1 << 64


def test_role_peer():
    assert Role.A.peer is Role.B
    assert Role.B.peer is Role.A


def test_share_reconstruct_scalar():
    rng = np.random.default_rng(0)
    fp = encode(3.25)
    sa, sb = share(fp, rng)
    assert reconstruct(sa, sb).raw == fp.raw
    assert ring.decode(reconstruct(sa, sb)) == 3.25


def test_share_raw_arrays():
    rng = np.random.default_rng(1)
    raw = rng.integers(0, MOD, size=(3, 5), dtype=np.uint64)
    sa, sb = share_raw(raw, 16, rng)
    assert sa.role is Role.A and sb.role is Role.B
    assert np.array_equal(reconstruct_raw(sa, sb), raw)


def test_reconstruct_guards():
    rng = np.random.default_rng(2)
    sa, sb = share_raw(np.arange(4, dtype=np.uint64), 16, rng)
    with pytest.raises(ProtocolError):
        reconstruct_raw(sa, Share(sb.values, Role.B, 10))
    with pytest.raises(ProtocolError):
        reconstruct_raw(sa, Share(sb.values, Role.A, 16))
    with pytest.raises(ProtocolError):
        reconstruct(sa, sb)   # tensor share needs reconstruct_raw


def test_share_helpers():
    sh = Share(np.arange(6, dtype=np.uint64), Role.A, 16)
    assert sh.size == 6
    assert sh.reshape(2, 3).shape == (2, 3)
    assert sh.with_values(np.zeros(6, dtype=np.uint64)).scale == 16


@given(st.integers(min_value=0, max_value=MOD - 1), st.integers(0, 2 ** 32))
@settings(max_examples=100, deadline=None)
def test_share_reconstruct_identity(raw, seed):
    rng = np.random.default_rng(seed)
    sa, sb = share_raw(np.array([raw], dtype=np.uint64), 0, rng)
    assert int(reconstruct_raw(sa, sb)[0]) == raw


def test_linear_combine_hand_example():
    # 2*5 + (-4)*(-3) + 7 == 29 at scale 0
    x_raw = np.array([to_unsigned(5)], dtype=np.uint64)
    y_raw = np.array([to_unsigned(-3)], dtype=np.uint64)
    xa, xb = split_raw(x_raw, 3)
    ya, yb = split_raw(y_raw, 4)
    outs = []
    for role, xs, ys in ((Role.A, xa, ya), (Role.B, xb, yb)):
        sh = linear_combine([2, -4],
                            [Share(xs, role, 0), Share(ys, role, 0)],
                            offset=7)
        outs.append(sh)
    assert to_signed(int(reconstruct_raw(*outs)[0])) == 29


def test_linear_combine_guards():
    a = Share(np.zeros(2, dtype=np.uint64), Role.A, 16)
    with pytest.raises(ProtocolError):
        linear_combine([1, 2], [a])
    with pytest.raises(ProtocolError):
        linear_combine([], [])
    with pytest.raises(ProtocolError):
        linear_combine([1, 1], [a, Share(np.zeros(2, dtype=np.uint64),
                                         Role.B, 16)])
    with pytest.raises(ProtocolError):
        linear_combine([1, 1], [a, Share(np.zeros(2, dtype=np.uint64),
                                         Role.A, 8)])
    with pytest.raises(ProtocolError):
        linear_combine([1, 1], [a, Share(np.zeros(3, dtype=np.uint64),
                                         Role.A, 16)])


def test_local_truncate_pair_property():
    rng = np.random.default_rng(5)
    secrets = rng.integers(-(1 << 30), 1 << 30, size=256)
    raw = np.array([to_unsigned(int(s)) for s in secrets], dtype=np.uint64)
    sa, sb = share_raw(raw, 16, rng)
    ta = local_truncate(sa, 10)
    tb = local_truncate(sb, 10)
    assert ta.scale == 6
    rec = reconstruct_raw(ta, tb)
    truth = secrets >> 10
    diff = np.abs(rec.view(np.int64) - truth)
    assert diff.max() <= 1


def test_beaver_hand_example():
    """x=6, y=7 with triple a=2, b=3, c=6: the masked openings are x+a=8
    and y+b=10, and the assembled product is 42."""
    x = split_raw(np.array([6], dtype=np.uint64), 7)
    y = split_raw(np.array([7], dtype=np.uint64), 8)
    a = split_raw(np.array([2], dtype=np.uint64), 9)
    b = split_raw(np.array([3], dtype=np.uint64), 10)
    c = split_raw(np.array([6], dtype=np.uint64), 11)

    def party(session):
        role = int(session.role)
        # each party builds its own supply object: take() advances a cursor
        triples = BeaverTriples(np.stack([a[0], a[1]]),
                                np.stack([b[0], b[1]]),
                                np.stack([c[0], c[1]]))
        xs = Share(x[role], session.role, 0)
        ys = Share(y[role], session.role, 0)
        return beaver_multiply(session, xs, ys, triples)

    outcome = run_session_pair(party, party)
    assert int(reconstruct_raw(outcome.result_a, outcome.result_b)[0]) == 42
    # the openings themselves are x+a and y+b
    assert int((x[0] + x[1] + a[0] + a[1])[0]) == 8
    assert int((y[0] + y[1] + b[0] + b[1])[0]) == 10


def test_beaver_mul_raw_random_batch():
    rng = np.random.default_rng(12)
    x_raw = rng.integers(0, MOD, size=100, dtype=np.uint64)
    y_raw = rng.integers(0, MOD, size=100, dtype=np.uint64)
    y_halves = split_raw(y_raw, 77)

    def fn(session, xs):
        ys = Share(y_halves[int(session.role)], session.role, 0)
        z = session.beaver_mul_raw(xs.values, ys.values)
        return Share(z, session.role, 0)

    outcome = run_symmetric(fn, None, raw=x_raw, scale=0)
    assert np.array_equal(opened(outcome), mul_mod(x_raw, y_raw))
    assert outcome.transcript_a.rounds == 1


def test_matmul_raw_random():
    rng = np.random.default_rng(13)
    x_raw = rng.integers(0, MOD, size=(4, 6), dtype=np.uint64)
    w_raw = rng.integers(0, MOD, size=(6, 3), dtype=np.uint64)
    w_halves = split_raw(w_raw, 21)

    def fn(session, xs):
        w = w_halves[int(session.role)]
        z = session.matmul_raw(xs.values, w)
        return Share(z, session.role, 0)

    outcome = run_symmetric(fn, None, raw=x_raw, scale=0)
    assert np.array_equal(opened(outcome), matmul_mod(x_raw, w_raw))
    assert outcome.transcript_a.rounds == 1
    with pytest.raises(ProtocolError):
        run_symmetric(lambda s, xs: Share(
            s.matmul_raw(xs.values, np.zeros((5, 2), dtype=np.uint64)),
            s.role, 0), None, raw=x_raw, scale=0)


def test_bit_and_words():
    rng = np.random.default_rng(14)
    x = rng.integers(0, MOD, size=64, dtype=np.uint64)
    y = rng.integers(0, MOD, size=64, dtype=np.uint64)
    mx = rng.integers(0, MOD, size=64, dtype=np.uint64)
    my = rng.integers(0, MOD, size=64, dtype=np.uint64)
    x_sh = (mx, x ^ mx)
    y_sh = (my, y ^ my)

    def party(session):
        role = int(session.role)
        return session.bit_and(x_sh[role], y_sh[role])

    outcome = run_session_pair(party, party)
    assert np.array_equal(outcome.result_a ^ outcome.result_b, x & y)
    assert outcome.transcript_a.rounds == 1


def test_bits_to_arith():
    rng = np.random.default_rng(15)
    bits = rng.integers(0, 2, size=200, dtype=np.uint64)
    mask = rng.integers(0, 2, size=200, dtype=np.uint64)
    sh = (mask, bits ^ mask)

    def party(session):
        return session.bits_to_arith(sh[int(session.role)])

    outcome = run_session_pair(party, party)
    assert np.array_equal(outcome.result_a + outcome.result_b, bits)


def test_open_value_round_trip():
    vals = np.array([1.25, -2.5, 0.0, 17.0])
    outcome = run_symmetric(lambda s, x: x.with_values(open_value(s, x)),
                            vals)
    # both parties learn the same plaintext residues
    assert np.array_equal(outcome.result_a.values, outcome.result_b.values)
    got = ring.decode_array(outcome.result_a.values, 16, ring.DEFAULT_CONFIG)
    assert np.array_equal(got, vals)
    assert outcome.transcript_a.rounds == 1


def test_beaver_multiply_share_guards():
    def fn(session, xs):
        wrong = Share(xs.values, session.role.peer, xs.scale)
        with pytest.raises(ProtocolError):
            beaver_multiply(session, xs, wrong)
        with pytest.raises(ProtocolError):
            beaver_multiply(session, xs, xs.reshape(2, 2))
        return xs

    run_symmetric(fn, np.array([1.0, 2.0, 3.0, 4.0]))


def test_dealer_triples_are_consistent():
    rng = np.random.default_rng(30)
    trip = dealer_triples(50, rng)
    a = trip.a[0] + trip.a[1]
    b = trip.b[0] + trip.b[1]
    c = trip.c[0] + trip.c[1]
    assert np.array_equal(c, mul_mod(a, b))


def test_dealer_power_tuples_are_consistent():
    rng = np.random.default_rng(31)
    tup = dealer_power_tuples(20, 4, rng)
    assert tup.degree == 4
    r = tup.powers[0, 0] + tup.powers[1, 0]
    for j in range(4):
        rec = tup.powers[0, j] + tup.powers[1, j]
        ref = np.array([pow(int(v), j + 1, MOD) for v in r], dtype=np.uint64)
        assert np.array_equal(rec, ref)
    with pytest.raises(ValueError):
        dealer_power_tuples(5, 0, rng)


def test_triples_take_and_exhaustion():
    rng = np.random.default_rng(32)
    trip = dealer_triples(10, rng)
    first = trip.take(4)
    second = trip.take(4)
    assert trip.remaining == 2
    assert not np.array_equal(first.a, second.a)
    with pytest.raises(DealerExhaustedError):
        trip.take(3)
    tup = dealer_power_tuples(6, 3, rng)
    tup.take(5)
    assert tup.remaining == 1
    with pytest.raises(DealerExhaustedError):
        tup.take(2)


def test_dealer_replicas_agree_across_roles():
    """Two instances with one seed serve opposite parties: their halves
    must reassemble into valid correlations."""
    d1 = TrustedDealer(seed=5)
    d2 = TrustedDealer(seed=5)
    a0, b0, c0 = d1.beaver_triples(Role.A, 8)
    a1, b1, c1 = d2.beaver_triples(Role.B, 8)
    assert np.array_equal(c0 + c1, mul_mod(a0 + a1, b0 + b1))
    # second batch from each replica is fresh but still aligned
    a0b, _, _ = d1.beaver_triples(Role.A, 8)
    a1b, _, _ = d2.beaver_triples(Role.B, 8)
    assert not np.array_equal(a0, a0b)
    assert not np.array_equal(a0 + a1, a0b + a1b)

    pa = d1.power_tuples(Role.A, 4, 3)
    pb = d2.power_tuples(Role.B, 4, 3)
    r = pa[0] + pb[0]
    for j in range(3):
        ref = np.array([pow(int(v), j + 1, MOD) for v in r], dtype=np.uint64)
        assert np.array_equal(pa[j] + pb[j], ref)

    ma0, mb0, mc0 = d1.matmul_triples(Role.A, 2, 3, 4)
    ma1, mb1, mc1 = d2.matmul_triples(Role.B, 2, 3, 4)
    assert np.array_equal(mc0 + mc1, matmul_mod(ma0 + ma1, mb0 + mb1))

    u0, v0, w0 = d1.bit_triples(Role.A, 16)
    u1, v1, w1 = d2.bit_triples(Role.B, 16)
    assert np.array_equal(w0 ^ w1, (u0 ^ u1) & (v0 ^ v1))

    rb0, ra0 = d1.b2a_pairs(Role.A, 32)
    rb1, ra1 = d2.b2a_pairs(Role.B, 32)
    bit = rb0 ^ rb1
    assert np.array_equal(ra0 + ra1, bit)
    assert set(np.unique(bit)) <= {0, 1}


def test_dealer_seed_changes_output():
    a5, _, _ = TrustedDealer(seed=5).beaver_triples(Role.A, 8)
    a6, _, _ = TrustedDealer(seed=6).beaver_triples(Role.A, 8)
    assert not np.array_equal(a5, a6)


def test_dealer_in_process_alignment():
    """One shared instance: the second role collects the exact package the
    first role's request generated."""
    d = TrustedDealer(seed=9)
    a0, b0, c0 = d.beaver_triples(Role.A, 12)
    a1, b1, c1 = d.beaver_triples(Role.B, 12)
    assert np.array_equal(c0 + c1, mul_mod(a0 + a1, b0 + b1))


def test_dealer_misaligned_descriptor():
    d = TrustedDealer(seed=9)
    d.beaver_triples(Role.A, 5)
    with pytest.raises(ProtocolError, match="misaligned"):
        d.beaver_triples(Role.B, 6)
    d2 = TrustedDealer(seed=9)
    d2.power_tuples(Role.A, 4, 3)
    with pytest.raises(ProtocolError, match="misaligned"):
        d2.power_tuples(Role.B, 5, 3)


def test_dealer_budgets_per_role():
    d = TrustedDealer(seed=0, triple_budget=10)
    d.beaver_triples(Role.A, 8)
    with pytest.raises(DealerExhaustedError):
        d.beaver_triples(Role.A, 3)
    # the peer's budget is tracked separately
    d.beaver_triples(Role.B, 8)
    # matrix triples draw from the same budget: 2*3 + 3*4 = 18 > 10
    d3 = TrustedDealer(seed=0, triple_budget=10)
    with pytest.raises(DealerExhaustedError):
        d3.matmul_triples(Role.A, 2, 3, 4)
    d4 = TrustedDealer(seed=0, tuple_budget=4)
    with pytest.raises(DealerExhaustedError):
        d4.power_tuples(Role.A, 5, 3)


def test_session_transcript_via_outcome():
    outcome = run_symmetric(
        lambda s, x: x.with_values(s.open_raw(x.values)),
        np.array([1.0, 2.0]))
    assert outcome.transcript_a.rounds == 1
    assert outcome.transcript_b.rounds == 1
    assert outcome.transcript_a.bytes_sent == 8 + 8 * 2
