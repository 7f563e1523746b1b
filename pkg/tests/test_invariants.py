"""Cross-module invariants that do not belong to a single operation."""

import hashlib
import json

import pytest

from pqoran import entropy, harness, netsim
from pqoran.crypto import mlkem
from pqoran.crypto.registry import ChannelMode
from pqoran.errors import CertificateRejected
from pqoran.hybrid import (
    ED448_MLDSA65,
    ED25519_MLDSA65,
    composite_keygen,
    composite_sign,
    composite_verify,
)
from pqoran.netsim import ChannelOptions, Protocol

from helpers import handshake_pair, drive


def seed(tag, n):
    return hashlib.shake_256(tag.encode()).digest(n)


@pytest.mark.parametrize("name", ["ML-KEM-512", "ML-KEM-1024"])
def test_kem_roundtrip_100_seeds_other_parameter_sets(name):
    params = mlkem.PARAM_SETS[name]
    for i in range(100):
        ek, dk = mlkem.keygen(params, seed(f"inv:{name}:{i}", 64))
        ct, ss = mlkem.encaps(params, ek, seed(f"inve:{name}:{i}", 32))
        assert mlkem.decaps(params, dk, ct) == ss


@pytest.mark.parametrize("profile,seed_len", [(ED448_MLDSA65, 57), (ED25519_MLDSA65, 32)])
def test_composite_roundtrip_50_instances(profile, seed_len):
    for i in range(50):
        kp = composite_keygen(profile, seed(f"cinv:{profile.profile_name}:{i}", seed_len))
        msg = seed(f"cmsg:{i}", 33 + i % 7)
        sig = composite_sign(profile, kp, msg, b"inv")
        assert composite_verify(profile, kp.public_key, msg, b"inv", sig)


def test_handshake_succeeds_under_twenty_percent_loss():
    topo = netsim.build_topology()
    binding = topo.binding("F1AP")
    identities = netsim.make_identities(3, "inv20", "c", "s")
    ok = 0
    trials = 60
    for i in range(trials):
        measure = netsim.run_channel(
            binding, Protocol.PQ_DTLS, ChannelMode.HYBRID, seed=40_000 + i,
            channel_tag=f"inv20:{i}", identities=identities,
            options=ChannelOptions(mutual_auth=False, mtu_override=1200,
                                   loss_override=0.20))
        ok += int(measure.established)
    assert ok == trials


def test_link_conservation():
    topo = netsim.build_topology()
    world = netsim.World(seed=8)
    link = netsim.DatagramLink(world, "cons", netsim.LinkProfile(loss_rate=0.4))
    link.attach(0, lambda d: None)
    link.attach(1, lambda d: None)
    for i in range(200):
        world.schedule(i, lambda i=i: link.send(i % 2, bytes(100)))
    world.run()
    assert link.bytes_delivered <= link.bytes_sent
    assert link.bytes_sent == 200 * 100
    assert link.bytes_delivered == link.bytes_sent - 100 * link.datagrams_dropped


def test_event_log_jsonl_export():
    world = netsim.World(seed=8)
    link = netsim.DatagramLink(world, "jsonl", netsim.LinkProfile())
    link.attach(1, lambda d: None)
    world.schedule(0, lambda: link.send(0, b"x" * 10))
    world.run()
    lines = world.export_log_jsonl().splitlines()
    assert len(lines) == len(world.event_log)
    assert all(json.loads(line) for line in lines)


def test_fixed_source_hex_fixture(tmp_path):
    fixture = tmp_path / "pattern.hex"
    fixture.write_text("DEAD BEEF\n00ff\n")
    source = entropy.fixed_source_from_hex_file(fixture)
    assert source.draw(6) == bytes.fromhex("deadbeef00ff")
    assert source.draw(8) == bytes.fromhex("deadbeef00ffdead")


def test_transcript_json_export(identities):
    client, server = handshake_pair(identities, tag="jsonlog")
    drive(client, server)
    log = json.loads(client.transcript_json())
    sent = [e["msg"] for e in log if e["dir"] == "send"]
    assert sent[0] == "CLIENT_HELLO" and "FINISHED" in sent
    assert all(isinstance(e["len"], int) for e in log)


def test_corrupt_compressed_chain_aborts_with_certificate_rejected(identities):
    # a peer holding valid keys but sending a corrupt DEFLATE stream
    from pqoran.channel.handshake import _Abort

    client, _ = handshake_pair(identities, tag="corrupt-deflate")
    client._peer_chain = []
    with pytest.raises(_Abort):
        client._process_certificate(5, bytes([1]) + b"\x00not-deflate", now=0)
    assert isinstance(client.failure, CertificateRejected)


def test_exit_code_one_on_protocol_failure(tmp_path):
    from pqoran import cli

    scenario = tmp_path / "dead-link.json"
    scenario.write_text(json.dumps({
        "seed": 2,
        "channels": [{"interface": "F1AP", "protocol": "PQ_DTLS", "mode": "HYBRID"}],
        "links": {"F1AP": {"loss_rate": 1.0}},
    }))
    out = tmp_path / "r.json"
    assert cli.main(["run", "--scenario", str(scenario), "--out", str(out)]) == 1
    assert cli.main(["run", "--scenario", str(scenario), "--out", str(out),
                     "--expect-failure"]) == 0


def test_scenario_nodes_validation(tmp_path):
    from pqoran import cli

    scenario = tmp_path / "partial-nodes.json"
    scenario.write_text(json.dumps({
        "seed": 2,
        "nodes": ["SMO#0", "O_DU#0"],  # not enough for the default interfaces
        "channels": [{"interface": "O1", "protocol": "PQ_MTLS"}],
    }))
    assert cli.main(["run", "--scenario", str(scenario)]) == 3
