"""Two-party additive secret sharing, the trusted dealer, and the session
operations that define what costs a communication round.

A secret s is held as uniform residues s_A + s_B = s mod 2^64.  Linear
operations on shares are local; multiplication consumes one dealer triple
and exactly one paired exchange regardless of batch size; opening a value
is likewise one exchange for any batch.  The dealer is an in-process
oracle issuing correlated randomness from a seed; it never sees protocol
inputs, and both parties' request streams are aligned by construction
(same kind, same order), so each request index yields the same logical
randomness on both sides.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .kernels import matmul_mod, mul_mod
from .ring import (DEFAULT_CONFIG, FixedPoint, RingConfig, to_signed,
                   truncate_raw)
from .transport import PairedEndpoint, NetworkConfig, run_pair

_U64 = np.uint64


class ProtocolError(RuntimeError):
    """Protocol contract violation (mismatched scales, roles, shapes)."""


class DealerExhaustedError(RuntimeError):
    """The dealer's provisioned supply of correlated randomness ran out."""


class Role(IntEnum):
    A = 0
    B = 1

    @property
    def peer(self) -> "Role":
        return Role.B if self is Role.A else Role.A


@dataclass(frozen=True)
class Share:
    """One party's additive share: uint64 values, owner role, and the
    fixed-point scale of the underlying secret."""
    values: np.ndarray
    role: Role
    scale: int

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=_U64))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def reshape(self, *shape) -> "Share":
        return Share(self.values.reshape(*shape), self.role, self.scale)

    def with_values(self, values: np.ndarray) -> "Share":
        return Share(values, self.role, self.scale)


def share_raw(raw: np.ndarray | int, scale: int, rng: np.random.Generator
              ) -> tuple[Share, Share]:
    """Split raw residues into a uniform pair of shares."""
    raw_arr = np.asarray(raw, dtype=_U64)
    mask_a = rng.integers(0, 1 << 64, size=raw_arr.shape, dtype=_U64)
    return (Share(mask_a, Role.A, scale),
            Share(raw_arr - mask_a, Role.B, scale))


def share(value: FixedPoint, rng: np.random.Generator) -> tuple[Share, Share]:
    """Share one fixed-point value; the A share is uniform in the ring."""
    return share_raw(np.asarray(value.raw, dtype=_U64), value.scale, rng)


def reconstruct_raw(sa: Share, sb: Share) -> np.ndarray:
    """Combine both shares into plaintext residues."""
    if sa.scale != sb.scale:
        raise ProtocolError(
            f"scale mismatch in reconstruct: {sa.scale} vs {sb.scale}")
    if {sa.role, sb.role} != {Role.A, Role.B}:
        raise ProtocolError("reconstruct needs one share from each party")
    return sa.values + sb.values


def reconstruct(sa: Share, sb: Share,
                cfg: RingConfig = DEFAULT_CONFIG) -> FixedPoint:
    """Combine shares of a single value into a FixedPoint."""
    raw = reconstruct_raw(sa, sb)
    if raw.size != 1:
        raise ProtocolError("reconstruct expects a scalar share; "
                            "use reconstruct_raw for tensors")
    return FixedPoint(int(raw.reshape(())[()]), sa.scale)


def linear_combine(constants, shares, offset: int = 0) -> Share:
    """Public linear combination sum(c_i * [x_i]) + offset, zero rounds.

    Constants are public ring integers (negative values allowed, reduced
    mod 2^64); the offset is added by party A only so that it enters the
    reconstruction exactly once.
    """
    if len(constants) != len(shares):
        raise ProtocolError("constants and shares must pair up")
    if not shares:
        raise ProtocolError("linear_combine needs at least one share")
    role = shares[0].role
    scale = shares[0].scale
    for sh in shares:
        if sh.role != role:
            raise ProtocolError("linear_combine shares must belong to one party")
        if sh.scale != scale:
            raise ProtocolError("linear_combine shares must agree on scale")
    shape = shares[0].shape
    acc = np.zeros(shape, dtype=_U64).reshape(-1)
    for c, sh in zip(constants, shares):
        if sh.shape != shape:
            raise ProtocolError("linear_combine shares must agree on shape")
        c_ring = _U64(int(c) & ((1 << 64) - 1))
        acc += mul_mod(np.full(sh.size, c_ring, dtype=_U64),
                       sh.values.reshape(-1))
    acc = acc.reshape(shape)
    if role is Role.A and offset:
        acc += _U64(int(offset) & ((1 << 64) - 1))
    return Share(acc, role, scale)


def local_truncate(sh: Share, bits: int) -> Share:
    """Divide the secret by 2^bits with no communication.

    Party A arithmetic-shifts its share; party B mirrors through negation.
    The reconstruction is floor(secret / 2^bits) up to 1 ulp per party
    unless the uniform share split wraps (probability |secret| / 2^64).
    """
    out = truncate_raw(sh.values, bits, mirror=(sh.role is Role.B))
    return Share(out, sh.role, sh.scale - bits)


@dataclass
class BeaverTriples:
    """Both halves of a supply of multiplication triples; rows are roles."""
    a: np.ndarray  # shape (2, n)
    b: np.ndarray
    c: np.ndarray
    _cursor: int = 0

    @property
    def remaining(self) -> int:
        return self.a.shape[1] - self._cursor

    def take(self, count: int) -> "BeaverTriples":
        if count > self.remaining:
            raise DealerExhaustedError(
                f"requested {count} triples, {self.remaining} left")
        sl = slice(self._cursor, self._cursor + count)
        self._cursor += count
        return BeaverTriples(self.a[:, sl], self.b[:, sl], self.c[:, sl])

    def halves(self, role: Role) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.a[role], self.b[role], self.c[role]


@dataclass
class PowerTuples:
    """Both halves of blind-power tuples: powers[role][j-1][t] is that
    party's share of r_t^j for tuple t.  Raw ring correlations; the
    consuming protocol supplies scale bookkeeping."""
    powers: np.ndarray  # shape (2, degree, n)
    scale: int = 0
    _cursor: int = 0

    @property
    def degree(self) -> int:
        return self.powers.shape[1]

    @property
    def remaining(self) -> int:
        return self.powers.shape[2] - self._cursor

    def take(self, count: int) -> "PowerTuples":
        if count > self.remaining:
            raise DealerExhaustedError(
                f"requested {count} power tuples, {self.remaining} left")
        sl = slice(self._cursor, self._cursor + count)
        self._cursor += count
        return PowerTuples(self.powers[:, :, sl], self.scale)

    def halves(self, role: Role) -> np.ndarray:
        return self.powers[role]


def _split(raw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Stack of both shares of `raw`: out[0] + out[1] == raw."""
    out = np.empty((2,) + raw.shape, dtype=_U64)
    out[0] = rng.integers(0, 1 << 64, size=raw.shape, dtype=_U64)
    np.subtract(raw, out[0], out=out[1])
    return out


def dealer_triples(count: int, rng: np.random.Generator) -> BeaverTriples:
    """Generate `count` Beaver triples (both halves)."""
    a = rng.integers(0, 1 << 64, size=count, dtype=_U64)
    b = rng.integers(0, 1 << 64, size=count, dtype=_U64)
    c = mul_mod(a, b)
    return BeaverTriples(_split(a, rng), _split(b, rng), _split(c, rng))


def dealer_power_tuples(count: int, degree: int, rng: np.random.Generator,
                        range_scale: int = 0) -> PowerTuples:
    """Generate blind-power tuples r, r^2, ..., r^degree (both halves).

    r is uniform over the whole ring so the opened x - r is a perfect
    blind; powers are exact ring powers, so the consuming recursion is
    exact mod 2^64 and needs no truncation of its own.
    """
    if degree < 1:
        raise ValueError("power tuple degree must be >= 1")
    r = rng.integers(0, 1 << 64, size=count, dtype=_U64)
    powers = np.empty((degree, count), dtype=_U64)
    powers[0] = r
    for j in range(1, degree):
        powers[j] = mul_mod(powers[j - 1], r)
    both = np.empty((2, degree, count), dtype=_U64)
    for j in range(degree):
        both[:, j, :] = _split(powers[j], rng)
    return PowerTuples(both, range_scale)


class _DealSlot:
    """One pending correlated-randomness package, generated once."""
    __slots__ = ("event", "descriptor", "package", "error", "taken")

    def __init__(self, descriptor: tuple):
        self.event = threading.Event()
        self.descriptor = descriptor
        self.package = None
        self.error: BaseException | None = None
        self.taken = 0


_DEAL_TIMEOUT_S = 60.0


class TrustedDealer:
    """Seeded oracle for correlated randomness.

    Budgets are optional caps in units of issued items per kind (Beaver
    triples, power tuples, binary AND triples, bit-conversion pairs); a
    request beyond the cap raises DealerExhaustedError.

    Each request kind keeps a per-role counter, and the package for a
    given (kind, params, index) is a pure function of the seed, so two
    replicas with the same seed serve the two parties consistently over a
    real network.  When one instance serves both in-process parties, the
    first requester generates the package and the peer picks up the very
    same arrays, so returned halves must never be mutated in place.
    Aligned request streams are a protocol obligation: both parties must
    ask for the same shapes in the same order.
    """

    _KIND_BEAVER = 0
    _KIND_MATMUL = 1
    _KIND_BITS = 2
    _KIND_B2A = 3
    _KIND_POWER = 4

    def __init__(self, seed: int = 0, triple_budget: int | None = None,
                 tuple_budget: int | None = None,
                 bit_triple_budget: int | None = None,
                 b2a_budget: int | None = None):
        self.seed = int(seed)
        self._budgets = {self._KIND_BEAVER: triple_budget,
                         self._KIND_POWER: tuple_budget,
                         self._KIND_BITS: bit_triple_budget,
                         self._KIND_B2A: b2a_budget}
        self._issued: dict[tuple, int] = {}
        self._counters: dict[tuple, int] = {}
        self._slots: dict[tuple, _DealSlot] = {}
        self._lock = threading.Lock()

    def _aligned(self, role: Role, kind: int, params: tuple,
                 descriptor: tuple, make):
        """Return the package for this role's next (kind, params) request,
        generating it exactly once per in-process pair."""
        with self._lock:
            ckey = (kind, *params, int(role))
            index = self._counters.get(ckey, 0)
            self._counters[ckey] = index + 1
            skey = (kind, *params, index)
            slot = self._slots.get(skey)
            owner = slot is None
            if owner:
                slot = _DealSlot(descriptor)
                self._slots[skey] = slot
        if owner:
            try:
                rng = np.random.default_rng(np.random.SeedSequence(
                    entropy=[self.seed, kind, *params, index]))
                slot.package = make(rng)
            except BaseException as exc:
                slot.error = exc
                raise
            finally:
                slot.event.set()
        else:
            if not slot.event.wait(timeout=_DEAL_TIMEOUT_S):
                raise ProtocolError(
                    "timed out waiting for the peer's dealer request")
            if slot.error is not None:
                raise ProtocolError(
                    f"dealer generation failed in the peer: {slot.error}")
            if slot.descriptor != descriptor:
                raise ProtocolError(
                    f"misaligned dealer requests: peer asked for "
                    f"{slot.descriptor}, this party for {descriptor}")
        package = slot.package
        with self._lock:
            slot.taken += 1
            if slot.taken >= 2:
                self._slots.pop(skey, None)
        return package

    def _charge(self, role: Role, kind: int, amount: int) -> None:
        budget = self._budgets.get(kind)
        key = (kind, int(role))
        with self._lock:
            used = self._issued.get(key, 0)
            if budget is not None and used + amount > budget:
                raise DealerExhaustedError(
                    f"dealer budget exceeded for kind {kind}: "
                    f"{used}+{amount} > {budget}")
            self._issued[key] = used + amount

    def beaver_triples(self, role: Role, count: int
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """This party's halves (a, b, c) of `count` fresh triples."""
        self._charge(role, self._KIND_BEAVER, count)
        pkg = self._aligned(role, self._KIND_BEAVER, (), ("beaver", count),
                            lambda rng: dealer_triples(count, rng))
        return pkg.halves(role)

    def matmul_triples(self, role: Role, m: int, k: int, n: int
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """This party's halves (A, B, C=A@B) of one matrix triple."""
        self._charge(role, self._KIND_BEAVER, m * k + k * n)

        def make(rng):
            ma = rng.integers(0, 1 << 64, size=(m, k), dtype=_U64)
            mb = rng.integers(0, 1 << 64, size=(k, n), dtype=_U64)
            mc = matmul_mod(ma, mb)
            return (_split(ma, rng), _split(mb, rng), _split(mc, rng))

        pkg = self._aligned(role, self._KIND_MATMUL, (m, k, n),
                            ("matmul", m, k, n), make)
        return pkg[0][role], pkg[1][role], pkg[2][role]

    def bit_triples(self, role: Role, count: int
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """XOR-shared AND triples over 64-bit words: w = u & v bitwise."""
        self._charge(role, self._KIND_BITS, count)

        def make(rng):
            u = rng.integers(0, 1 << 64, size=count, dtype=_U64)
            v = rng.integers(0, 1 << 64, size=count, dtype=_U64)
            w = u & v
            mu = rng.integers(0, 1 << 64, size=count, dtype=_U64)
            mv = rng.integers(0, 1 << 64, size=count, dtype=_U64)
            mw = rng.integers(0, 1 << 64, size=count, dtype=_U64)
            return ((mu, mv, mw), (u ^ mu, v ^ mv, w ^ mw))

        pkg = self._aligned(role, self._KIND_BITS, (), ("bits", count), make)
        return pkg[role]

    def b2a_pairs(self, role: Role, count: int
                  ) -> tuple[np.ndarray, np.ndarray]:
        """Per element: a uniform bit r, XOR-shared (word 0/1), together
        with an additive sharing of the same bit in the ring."""
        self._charge(role, self._KIND_B2A, count)

        def make(rng):
            r = rng.integers(0, 2, size=count, dtype=_U64)
            bit_mask = rng.integers(0, 2, size=count, dtype=_U64)
            arith = _split(r, rng)
            return ((bit_mask, arith[0]), (r ^ bit_mask, arith[1]))

        pkg = self._aligned(role, self._KIND_B2A, (), ("b2a", count), make)
        return pkg[role]

    def power_tuples(self, role: Role, count: int, degree: int,
                     range_scale: int = 0) -> np.ndarray:
        """This party's halves of `count` power tuples, shape (degree, count)."""
        self._charge(role, self._KIND_POWER, count)
        pkg = self._aligned(
            role, self._KIND_POWER, (degree,), ("power", count, degree),
            lambda rng: dealer_power_tuples(count, degree, rng, range_scale))
        return pkg.halves(role)


@dataclass
class Session:
    """One party's protocol context: role, link endpoint, dealer handle."""
    role: Role
    endpoint: PairedEndpoint
    dealer: TrustedDealer
    cfg: RingConfig = field(default_factory=lambda: DEFAULT_CONFIG)

    @property
    def transcript(self):
        return self.endpoint.transcript

    def exchange(self, elements: np.ndarray) -> np.ndarray:
        return self.endpoint.exchange(elements)

    def open_raw(self, raw: np.ndarray) -> np.ndarray:
        """Open raw residues: one exchange, both parties get the plaintext."""
        raw = np.asarray(raw, dtype=_U64)
        peer = self.exchange(raw.reshape(-1))
        return (raw.reshape(-1) + peer).reshape(raw.shape)

    def beaver_mul_raw(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Batched share-by-share product; one round for any batch size."""
        x = np.asarray(x, dtype=_U64).reshape(-1)
        y = np.asarray(y, dtype=_U64).reshape(-1)
        if x.shape != y.shape:
            raise ProtocolError("beaver multiply needs equal-length batches")
        n = x.size
        ta, tb, tc = self.dealer.beaver_triples(self.role, n)
        d = x + ta
        e = y + tb
        peer = self.exchange(np.concatenate([d, e]))
        opened_a = d + peer[:n]   # public x + a
        opened_b = e + peer[n:]   # public y + b
        z = mul_mod(opened_a, y) - mul_mod(opened_b, ta) + tc
        return z

    def matmul_raw(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Shared matrix product via one matrix triple; one round."""
        x = np.asarray(x, dtype=_U64)
        w = np.asarray(w, dtype=_U64)
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ProtocolError(f"matmul shape mismatch: {x.shape} @ {w.shape}")
        m, k = x.shape
        n = w.shape[1]
        ma, mb, mc = self.dealer.matmul_triples(self.role, m, k, n)
        e = x - ma
        f = w - mb
        peer = self.exchange(np.concatenate([e.reshape(-1), f.reshape(-1)]))
        e_pub = e + peer[:m * k].reshape(m, k)
        f_pub = f + peer[m * k:].reshape(k, n)
        z = matmul_mod(e_pub, mb) + matmul_mod(ma, f_pub) + mc
        if self.role is Role.A:
            z += matmul_mod(e_pub, f_pub)
        return z

    def bit_and(self, x_words: np.ndarray, y_words: np.ndarray) -> np.ndarray:
        """Bitwise AND of XOR-shared 64-bit words; one round per call,
        any batch size."""
        x_words = np.asarray(x_words, dtype=_U64).reshape(-1)
        y_words = np.asarray(y_words, dtype=_U64).reshape(-1)
        if x_words.shape != y_words.shape:
            raise ProtocolError("bitwise AND needs equal-length batches")
        n = x_words.size
        u, v, w = self.dealer.bit_triples(self.role, n)
        d = x_words ^ u
        e = y_words ^ v
        peer = self.exchange(np.concatenate([d, e]))
        d_pub = d ^ peer[:n]
        e_pub = e ^ peer[n:]
        z = (d_pub & v) ^ (e_pub & u) ^ w
        if self.role is Role.A:
            z ^= d_pub & e_pub
        return z

    def bits_to_arith(self, bit_words: np.ndarray) -> np.ndarray:
        """Convert XOR-shared single bits (words holding 0/1) into additive
        shares of the same bits; one opening round."""
        s = np.asarray(bit_words, dtype=_U64).reshape(-1)
        r_bit, r_arith = self.dealer.b2a_pairs(self.role, s.size)
        masked = s ^ r_bit
        opened = masked ^ self.exchange(masked)   # public bit z = s xor r
        flip = opened & _U64(1)
        # z + r - 2 z r: when z=1 the share negates (A adds the public 1)
        out = np.where(flip == 1, np.negative(r_arith), r_arith)
        if self.role is Role.A:
            out = out + flip
        return out


def open_value(session: Session, sh: Share) -> np.ndarray:
    """Open a share batch to plaintext residues (one round)."""
    return session.open_raw(sh.values)


def beaver_multiply(session: Session, xs: Share, ys: Share,
                    triples: BeaverTriples | None = None) -> Share:
    """Element-wise secure product at scale scale_x + scale_y, one round.

    When `triples` is given they are consumed from that supply instead of
    the session dealer (both parties must do the same).
    """
    if xs.role != session.role or ys.role != session.role:
        raise ProtocolError("shares do not belong to this session's party")
    if xs.shape != ys.shape:
        raise ProtocolError("beaver_multiply needs matching shapes")
    if triples is not None:
        n = xs.size
        batch = triples.take(n)
        ta, tb, tc = batch.halves(session.role)
        x = xs.values.reshape(-1)
        y = ys.values.reshape(-1)
        d = x + ta
        e = y + tb
        peer = session.exchange(np.concatenate([d, e]))
        opened_a = d + peer[:n]
        opened_b = e + peer[n:]
        z = mul_mod(opened_a, y) - mul_mod(opened_b, ta) + tc
    else:
        z = session.beaver_mul_raw(xs.values, ys.values)
    return Share(z.reshape(xs.shape), session.role, xs.scale + ys.scale)


@dataclass
class PairOutcome:
    """Results and transcript snapshots of one two-party run."""
    result_a: object
    result_b: object
    transcript_a: object
    transcript_b: object


def run_session_pair(fn_a, fn_b, *, net: NetworkConfig = NetworkConfig(),
                     dealer: TrustedDealer | None = None, seed: int = 0,
                     cfg: RingConfig = DEFAULT_CONFIG) -> PairOutcome:
    """Run two party callables, each receiving a Session, over an
    in-process link.  The single dealer instance serves both parties."""
    the_dealer = dealer if dealer is not None else TrustedDealer(seed=seed)

    def wrap(fn, role):
        def runner(endpoint):
            return fn(Session(role=role, endpoint=endpoint,
                              dealer=the_dealer, cfg=cfg))
        return runner

    ep_holder = {}

    def wrap_capture(fn, role):
        base = wrap(fn, role)

        def runner(endpoint):
            ep_holder[role] = endpoint
            return base(endpoint)
        return runner

    res_a, res_b = run_pair(wrap_capture(fn_a, Role.A),
                            wrap_capture(fn_b, Role.B), net)
    return PairOutcome(res_a, res_b,
                       ep_holder[Role.A].transcript.snapshot(),
                       ep_holder[Role.B].transcript.snapshot())
