"""Topology table, link behavior, determinism, and measurement invariants."""

import json
import math

import pytest

from pqoran import netsim
from pqoran.crypto.registry import ChannelMode
from pqoran.errors import DanglingEndpoint, TimeLimitExceeded, UnknownInterface
from pqoran.netsim import (
    ChannelOptions,
    DatagramLink,
    InterfaceName,
    LinkProfile,
    NodeId,
    Protocol,
    Role,
    StreamTransportConfig,
    World,
    build_topology,
    policy_check,
    run_channel,
    stream_rounds,
)

EXPECTED_PROTOCOL_SETS = {
    "F1AP": {"PQ_IPSEC", "PQ_DTLS"},
    "E1AP": {"PQ_IPSEC", "PQ_DTLS"},
    "NGAP": {"PQ_IPSEC", "PQ_DTLS"},
    "E2": {"PQ_IPSEC", "PQ_DTLS"},
    "Xn": {"PQ_IPSEC", "PQ_DTLS"},
    "N3": {"PQ_IPSEC"},
    "OFH_M_PLANE": {"PQ_MTLS"},
    "A1": {"PQ_MTLS"},
    "O1": {"PQ_MTLS"},
    "O2": {"PQ_MTLS"},
    "Y1": {"PQ_MTLS"},
    "R1": {"PQ_MTLS"},
}


def test_default_topology_covers_all_twelve_interfaces():
    topo = build_topology()
    assert len(topo.bindings) == 12
    for name, expected in EXPECTED_PROTOCOL_SETS.items():
        binding = topo.binding(name)
        assert {p.value for p in binding.allowed_protocols} == expected


def test_policy_check_rows():
    topo = build_topology()
    assert policy_check(topo, "E2", Protocol.PQ_DTLS)
    assert not policy_check(topo, "N3", Protocol.PQ_MTLS)
    assert policy_check(topo, "A1", Protocol.PQ_MTLS)
    with pytest.raises(UnknownInterface):
        policy_check(topo, "NOPE", Protocol.PQ_DTLS)


def test_dangling_endpoint_detected():
    interfaces = netsim.default_interfaces()
    with pytest.raises(DanglingEndpoint):
        build_topology(interfaces=interfaces, nodes=["SMO#0"])  # far too few nodes


def test_nodeid_parse_roundtrip():
    node = NodeId(Role.O_DU, 3)
    assert NodeId.parse(str(node)) == node
    assert NodeId.parse("SMO") == NodeId(Role.SMO, 0)


def test_link_profile_validation():
    with pytest.raises(ValueError):
        LinkProfile(loss_rate=1.5)
    with pytest.raises(ValueError):
        LinkProfile(mtu=100)


# --- stream rounds ---------------------------------------------------------------------

def brute_force_rounds(init_cwnd, mss, flight):
    delivered, cwnd, rounds = 0, init_cwnd, 0
    while delivered < flight:
        delivered += cwnd * mss
        cwnd *= 2
        rounds += 1
    return rounds


@pytest.mark.parametrize("flight", [0, 1, 14_600, 14_601, 30_000, 43_800, 43_801, 500_000])
def test_stream_rounds_matches_brute_force(flight):
    cfg = StreamTransportConfig(init_cwnd=10, mss=1460, rtt_ms=10)
    expected = 0 if flight == 0 else brute_force_rounds(10, 1460, flight)
    assert stream_rounds(cfg, flight) == expected


def test_stream_rounds_examples():
    cfg = StreamTransportConfig(init_cwnd=10, mss=1460, rtt_ms=10)
    assert stream_rounds(cfg, 0) == 0
    # 10*1460 = 14,600 in round one; cumulative 43,800 ≥ 30,000 in round two
    assert stream_rounds(cfg, 30_000) == 2
    big = StreamTransportConfig(init_cwnd=64, mss=1460, rtt_ms=10)
    assert stream_rounds(big, 30_000) == 1
    # cumulative law: init_cwnd * mss * (2^k - 1)
    for k in range(1, 6):
        boundary = 10 * 1460 * (2**k - 1)
        assert stream_rounds(cfg, boundary) == k
        assert stream_rounds(cfg, boundary + 1) == k + 1


# --- link dynamics ---------------------------------------------------------------------

def test_zero_loss_link_delivers_in_order():
    world = World(seed=5)
    link = DatagramLink(world, "t", LinkProfile(latency_ms=2.0))
    got = []
    link.attach(1, got.append)
    link.attach(0, lambda d: None)
    for i in range(10):
        world.schedule(i * 0.5, lambda i=i: link.send(0, bytes([i])))
    world.run()
    assert got == [bytes([i]) for i in range(10)]


def test_full_loss_means_no_delivery_and_timeout():
    topo = build_topology()
    measure = run_channel(topo.binding("F1AP"), Protocol.PQ_DTLS, ChannelMode.HYBRID,
                          seed=3, options=ChannelOptions(loss_override=1.0))
    assert not measure.established
    assert measure.failure == "HandshakeTimeout"


def test_oversized_datagrams_are_dropped():
    world = World(seed=1)
    link = DatagramLink(world, "mtu", LinkProfile(mtu=256))
    got = []
    link.attach(1, got.append)
    world.schedule(0, lambda: link.send(0, bytes(300)))
    world.schedule(0, lambda: link.send(0, bytes(200)))
    world.run()
    assert got == [bytes(200)]
    assert link.datagrams_dropped == 1


def test_world_time_limit():
    world = World(seed=1, time_limit_ms=10)
    world.schedule(20, lambda: None)
    with pytest.raises(TimeLimitExceeded):
        world.run()


def test_event_log_digest_is_deterministic():
    def digest(seed):
        world = World(seed=seed)
        link = DatagramLink(world, "d", LinkProfile(loss_rate=0.3, reorder_rate=0.2))
        link.attach(1, lambda d: None)
        link.attach(0, lambda d: None)
        for i in range(50):
            world.schedule(i, lambda i=i: link.send(0, bytes([i % 256]) * 100))
        world.run()
        return json.dumps(world.event_log, sort_keys=True)

    assert digest(9) == digest(9)
    assert digest(9) != digest(10)


# --- measurement invariants ---------------------------------------------------------------

def test_measurements_lossless_invariants():
    topo = build_topology()
    m = run_channel(topo.binding("E2"), Protocol.PQ_DTLS, ChannelMode.HYBRID, seed=11)
    assert m.established and m.retransmissions == 0
    mtu = topo.binding("E2").link.mtu
    assert m.datagrams_sent >= math.ceil(m.handshake_bytes / mtu)


def test_hybrid_strictly_exceeds_classical_on_same_link():
    topo = build_topology()
    hybrid = run_channel(topo.binding("F1AP"), Protocol.PQ_DTLS, ChannelMode.HYBRID, seed=2)
    classical = run_channel(topo.binding("F1AP"), Protocol.PQ_DTLS, ChannelMode.CLASSICAL,
                            seed=2)
    assert hybrid.handshake_bytes > classical.handshake_bytes


def test_run_channel_deterministic_under_loss():
    topo = build_topology()
    opts = ChannelOptions(loss_override=0.12, mtu_override=1200)
    a = run_channel(topo.binding("F1AP"), Protocol.PQ_DTLS, ChannelMode.HYBRID, 99,
                    options=opts)
    b = run_channel(topo.binding("F1AP"), Protocol.PQ_DTLS, ChannelMode.HYBRID, 99,
                    options=opts)
    assert a.as_dict() == b.as_dict()
