"""Two-party message transport with latency injection and accounting.

Every protocol round is one paired exchange: both parties submit a payload
of ring elements and receive the peer's payload.  The transcript records
rounds, bytes, and injected delay; it is the source of every benchmark
number this package reports.

Wire format: 8-byte little-endian element count followed by the elements
as little-endian 64-bit words.  The socket mode wraps each such message in
a frame (8-byte little-endian length + message); frame headers are
transport plumbing and are not counted as payload bytes, so in-process and
socket transcripts agree byte for byte.
"""
from __future__ import annotations

import queue
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

_COUNT_HEADER = struct.Struct("<Q")
_WIRE_DTYPE = np.dtype("<u8")
_EXCHANGE_TIMEOUT_S = 120.0


class TransportError(RuntimeError):
    """Raised when the peer is gone or a socket operation fails."""


def wire_size(n_elements: int) -> int:
    """Size in bytes of a wire message carrying n_elements ring elements."""
    return 8 + 8 * n_elements


def wire_pack(elements: np.ndarray) -> bytes:
    """Serialize a uint64 array to the wire format."""
    flat = np.ascontiguousarray(elements, dtype=np.uint64).reshape(-1)
    if flat.dtype != _WIRE_DTYPE:   # big-endian host
        flat = flat.astype(_WIRE_DTYPE)
    return _COUNT_HEADER.pack(flat.size) + flat.tobytes()


def wire_unpack(message: bytes) -> np.ndarray:
    """Parse a wire message back into a uint64 array."""
    if len(message) < 8:
        raise TransportError(f"short wire message: {len(message)} bytes")
    (count,) = _COUNT_HEADER.unpack_from(message)
    expected = wire_size(count)
    if len(message) != expected:
        raise TransportError(
            f"wire message length {len(message)} != {expected} "
            f"for {count} elements")
    out = np.frombuffer(message, dtype=_WIRE_DTYPE, offset=8)
    if out.dtype == np.dtype(np.uint64):
        return out   # read-only view; consumers derive fresh arrays
    return out.astype(np.uint64)


@dataclass(frozen=True)
class NetworkConfig:
    """Link model: roundtrip delay in milliseconds, optional bandwidth in
    bytes/second (None = unlimited), and transport mode."""
    roundtrip_delay_ms: float = 0.0
    bandwidth_bytes_per_s: float | None = None
    mode: str = "in-process"

    def __post_init__(self):
        if self.roundtrip_delay_ms < 0:
            raise ValueError("roundtrip delay must be >= 0")
        if self.bandwidth_bytes_per_s is not None \
                and self.bandwidth_bytes_per_s <= 0:
            raise ValueError("bandwidth must be positive when set")
        if self.mode not in ("in-process", "socket"):
            raise ValueError(f"unknown transport mode {self.mode!r}")


LAN = NetworkConfig(roundtrip_delay_ms=0.25)
WAN = NetworkConfig(roundtrip_delay_ms=100.0)


@dataclass(frozen=True)
class TranscriptSnapshot:
    rounds: int
    bytes_sent: int
    wall_time_s: float
    injected_delay_s: float


@dataclass
class Transcript:
    """Per-party counters; one endpoint owns and updates one transcript."""
    rounds: int = 0
    bytes_sent: int = 0
    injected_delay_s: float = 0.0
    _started_at: float = field(default_factory=time.perf_counter, repr=False)
    wall_time_s: float = 0.0

    def record_exchange(self, sent_bytes: int, delay_s: float) -> None:
        self.rounds += 1
        self.bytes_sent += sent_bytes
        self.injected_delay_s += delay_s

    def finish(self) -> None:
        self.wall_time_s = time.perf_counter() - self._started_at

    def snapshot(self) -> TranscriptSnapshot:
        wall = self.wall_time_s or (time.perf_counter() - self._started_at)
        return TranscriptSnapshot(self.rounds, self.bytes_sent,
                                  wall, self.injected_delay_s)


class PairedEndpoint:
    """Base class: one party's end of the link.  Not thread-shareable."""

    def __init__(self, net: NetworkConfig):
        self.net = net
        self.transcript = Transcript()

    def exchange(self, elements: np.ndarray) -> np.ndarray:
        """Send our payload, receive the peer's; one round."""
        message = wire_pack(elements)
        peer_message = self._swap(message)
        delay = self.net.roundtrip_delay_ms / 1000.0
        if self.net.bandwidth_bytes_per_s is not None:
            delay += len(message) / self.net.bandwidth_bytes_per_s
        if delay > 0:
            time.sleep(delay)
        self.transcript.record_exchange(len(message), delay)
        return wire_unpack(peer_message)

    def _swap(self, message: bytes) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


_ABORT = object()


class InProcessEndpoint(PairedEndpoint):
    """Queue-backed endpoint; create with make_inprocess_pair."""

    def __init__(self, net: NetworkConfig, outbox: queue.Queue,
                 inbox: queue.Queue):
        super().__init__(net)
        self._outbox = outbox
        self._inbox = inbox

    def _swap(self, message: bytes) -> bytes:
        self._outbox.put(message)
        try:
            received = self._inbox.get(timeout=_EXCHANGE_TIMEOUT_S)
        except queue.Empty:
            raise TransportError("timed out waiting for peer payload") from None
        if received is _ABORT:
            raise TransportError("peer aborted the protocol")
        return received

    def abort(self) -> None:
        self._outbox.put(_ABORT)


def make_inprocess_pair(net: NetworkConfig = NetworkConfig()
                        ) -> tuple[InProcessEndpoint, InProcessEndpoint]:
    """Two wired endpoints for two party threads in one process."""
    ab: queue.Queue = queue.Queue()
    ba: queue.Queue = queue.Queue()
    return (InProcessEndpoint(net, outbox=ab, inbox=ba),
            InProcessEndpoint(net, outbox=ba, inbox=ab))


class SocketEndpoint(PairedEndpoint):
    """Stream-socket endpoint with length-prefixed frames.

    Sends and receives are pumped together so that large simultaneous
    payloads cannot deadlock on full kernel buffers.
    """

    def __init__(self, net: NetworkConfig, sock: socket.socket):
        super().__init__(net)
        self._sock = sock
        # recv can pull bytes of frames the peer pumped ahead; they must
        # survive into the next exchange, never be dropped
        self._rxbuf = bytearray()
        sock.setblocking(False)

    def _swap(self, message: bytes) -> bytes:
        out = struct.pack("<Q", len(message)) + message
        out_view = memoryview(out)
        sent = 0
        expected: int | None = None
        while True:
            if expected is None and len(self._rxbuf) >= 8:
                (expected,) = struct.unpack_from("<Q", self._rxbuf)
            have_frame = (expected is not None
                          and len(self._rxbuf) >= expected + 8)
            want_write = sent < len(out_view)
            if have_frame and not want_write:
                break
            rlist, wlist, _ = select.select(
                [] if have_frame else [self._sock],
                [self._sock] if want_write else [],
                [], _EXCHANGE_TIMEOUT_S)
            if not rlist and not wlist:
                raise TransportError("socket exchange timed out")
            if wlist:
                try:
                    sent += self._sock.send(out_view[sent:])
                except (BrokenPipeError, ConnectionResetError) as exc:
                    raise TransportError(f"peer connection lost: {exc}") from exc
            if rlist:
                try:
                    chunk = self._sock.recv(1 << 20)
                except BlockingIOError:
                    continue
                except ConnectionResetError as exc:
                    raise TransportError(f"peer connection lost: {exc}") from exc
                if not chunk:
                    raise TransportError("peer closed the connection")
                self._rxbuf.extend(chunk)
        frame = bytes(self._rxbuf[8:8 + expected])
        del self._rxbuf[:8 + expected]
        return frame

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def serve_socket(host: str, port: int,
                 net: NetworkConfig = NetworkConfig(mode="socket"),
                 accept_timeout_s: float = 120.0) -> SocketEndpoint:
    """Listen for exactly one peer connection and return its endpoint."""
    listener = socket.create_server((host, port))
    listener.settimeout(accept_timeout_s)
    try:
        conn, _ = listener.accept()
    except socket.timeout:
        raise TransportError("no peer connected before timeout") from None
    finally:
        listener.close()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketEndpoint(net, conn)


def connect_socket(host: str, port: int,
                   net: NetworkConfig = NetworkConfig(mode="socket"),
                   retry_for_s: float = 10.0) -> SocketEndpoint:
    """Connect to a serving peer, retrying briefly while it starts up."""
    deadline = time.monotonic() + retry_for_s
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=10.0)
            break
        except OSError:
            if time.monotonic() >= deadline:
                raise TransportError(
                    f"could not connect to {host}:{port}") from None
            time.sleep(0.05)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketEndpoint(net, sock)


def run_pair(fn_a, fn_b, net: NetworkConfig = NetworkConfig()):
    """Run two party callables on in-process endpoints.

    Each callable receives its endpoint.  Returns (result_a, result_b).
    An exception in either party aborts the peer and is re-raised.
    """
    ep_a, ep_b = make_inprocess_pair(net)
    results: list = [None, None]
    errors: list = [None, None]

    def runner(idx, fn, endpoint):
        try:
            results[idx] = fn(endpoint)
        except BaseException as exc:  # noqa: BLE001 - propagated below
            errors[idx] = exc
            endpoint.abort()
        finally:
            endpoint.transcript.finish()

    threads = [threading.Thread(target=runner, args=(0, fn_a, ep_a),
                                name="party-a", daemon=True),
               threading.Thread(target=runner, args=(1, fn_b, ep_b),
                                name="party-b", daemon=True)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for err in errors:
        if err is not None and not isinstance(err, TransportError):
            raise err
    for err in errors:
        if err is not None:
            raise err
    return results[0], results[1]
