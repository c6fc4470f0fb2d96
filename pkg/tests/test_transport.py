"""Wire format, paired channels, and transcript accounting."""
import socket
import threading

import numpy as np
import pytest

from polyshare.transport import (LAN, WAN, NetworkConfig, TransportError,
                                 connect_socket, run_pair, serve_socket,
                                 wire_pack, wire_size, wire_unpack)


def test_wire_size():
    assert wire_size(0) == 8
    assert wire_size(1) == 16
    assert wire_size(1000) == 8008


def test_wire_pack_round_trip():
    arr = np.array([[1, 2, 3], [4, 5, (1 << 64) - 1]], dtype=np.uint64)
    blob = wire_pack(arr)
    assert len(blob) == wire_size(6)
    out = wire_unpack(blob)
    assert np.array_equal(out, arr.ravel())


def test_wire_pack_little_endian_layout():
    blob = wire_pack(np.array([1], dtype=np.uint64))
    # value words follow the 8-byte length header, least significant first
    assert blob[8:16] == b"\x01" + b"\x00" * 7
    assert int.from_bytes(blob[:8], "little") == 1


def test_wire_unpack_rejects_garbage():
    with pytest.raises(TransportError):
        wire_unpack(b"\x03")
    blob = wire_pack(np.array([1, 2], dtype=np.uint64))
    with pytest.raises(TransportError):
        wire_unpack(blob[:-4])


def test_network_config_presets():
    assert LAN.roundtrip_delay_ms == 0.25
    assert WAN.roundtrip_delay_ms == 100.0
    with pytest.raises(ValueError):
        NetworkConfig(roundtrip_delay_ms=-1.0)


def test_run_pair_exchanges_payloads():
    def party(channel, payload):
        got = channel.exchange(np.array([payload], dtype=np.uint64))
        return int(got[0])

    ra, rb = run_pair(lambda ch: party(ch, 10), lambda ch: party(ch, 20))
    assert (ra, rb) == (20, 10)


def test_transcript_counts_rounds_and_bytes():
    net = NetworkConfig(roundtrip_delay_ms=5.0)

    def party(channel):
        for _ in range(3):
            channel.exchange(np.arange(4, dtype=np.uint64))
        return channel.transcript.snapshot()

    snap_a, snap_b = run_pair(party, party, net=net)
    for snap in (snap_a, snap_b):
        assert snap.rounds == 3
        assert snap.bytes_sent == 3 * wire_size(4)
        assert snap.injected_delay_s == pytest.approx(0.015)
        assert snap.wall_time_s >= snap.injected_delay_s


def test_bandwidth_term_adds_serialization_delay():
    net = NetworkConfig(roundtrip_delay_ms=2.0, bandwidth_bytes_per_s=1e6)

    def party(channel):
        channel.exchange(np.zeros(1000, dtype=np.uint64))
        return channel.transcript.snapshot()

    snap, _ = run_pair(party, party, net=net)
    expect = 0.002 + wire_size(1000) / 1e6
    assert snap.injected_delay_s == pytest.approx(expect)


def test_run_pair_propagates_party_error():
    def bad(channel):
        raise RuntimeError("boom")

    def good(channel):
        channel.exchange(np.zeros(1, dtype=np.uint64))

    with pytest.raises(RuntimeError, match="boom"):
        run_pair(bad, good)


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_socket_pair_round_trip():
    port = _free_port()
    net = NetworkConfig(mode="socket")
    payload_a = np.arange(300, dtype=np.uint64)
    payload_b = np.arange(300, dtype=np.uint64)[::-1].copy()
    results = {}

    def server():
        ch = serve_socket("127.0.0.1", port, net)
        try:
            results["a"] = ch.exchange(payload_a)
            results["snap_a"] = ch.transcript.snapshot()
        finally:
            ch.close()

    def client():
        ch = connect_socket("127.0.0.1", port, net)
        try:
            results["b"] = ch.exchange(payload_b)
            results["snap_b"] = ch.transcript.snapshot()
        finally:
            ch.close()

    ts = threading.Thread(target=server)
    tc = threading.Thread(target=client)
    ts.start()
    tc.start()
    ts.join(timeout=30)
    tc.join(timeout=30)
    assert np.array_equal(results["a"], payload_b)
    assert np.array_equal(results["b"], payload_a)
    assert results["snap_a"].rounds == 1
    assert results["snap_a"].bytes_sent == wire_size(300)
    assert results["snap_b"].bytes_sent == wire_size(300)


def test_connect_refused_raises_transport_error():
    port = _free_port()
    with pytest.raises(TransportError):
        connect_socket("127.0.0.1", port, NetworkConfig(mode="socket"),
                       retry_for_s=0.3)
