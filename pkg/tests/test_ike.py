"""IKE control-protocol tests: exchange order, PPK mixing, rekey, fragmentation."""

import hashlib

import pytest

from pqoran import entropy, ike, pki
from pqoran.errors import (
    FragmentationNotAllowed,
    MalformedEncoding,
    NoProposalChosen,
    SaClosed,
    UnknownPpkId,
)
from pqoran.hybrid import ED448_MLDSA65, composite_keygen
from pqoran.pki import KeyUsage, Spki


@pytest.fixture(scope="module")
def trust():
    source = entropy.QrngSimSource("ike-ca", b"ike-ca-seed")
    root = pki.ca_init(source, "Ed448-ML-DSA-65", "ike-root", now=0)

    def identity(name):
        keypair = composite_keygen(ED448_MLDSA65, source.draw(57))
        cert = pki.issue_cert(root, name, Spki("Ed448-ML-DSA-65", keypair.public_key),
                              KeyUsage.TLS_AUTH, validity_days=30, now=0)
        return keypair, [cert, root.certificate]

    return {"root": root, "initiator": identity("gw-i"), "responder": identity("gw-r")}


def make_pair(trust, *, use_ppk=False, ppk=None, ppk_store=None, support_i=True,
              support_r=True, tag="t", proposal=None, esp=None):
    ikp, ichain = trust["initiator"]
    rkp, rchain = trust["responder"]
    anchor = trust["root"].certificate
    icfg = ike.IkeConfig("gw-i", ichain, ikp, anchor,
                         support_intermediate=support_i, use_ppk=use_ppk, ppk=ppk)
    rcfg = ike.IkeConfig("gw-r", rchain, rkp, anchor,
                         support_intermediate=support_r, ppk_store=ppk_store or {})
    if proposal:
        icfg.proposal = rcfg.proposal = ike.parse_proposal_string(proposal)
    if esp:
        icfg.esp_proposal = ike.parse_proposal_string(esp)
    initiator = ike.IkeSa(icfg, entropy.QrngSimSource(f"{tag}:i", f"{tag}:i".encode()), True)
    responder = ike.IkeSa(rcfg, entropy.QrngSimSource(f"{tag}:r", f"{tag}:r".encode()), False)
    return initiator, responder


# --- proposal strings ---------------------------------------------------------------------

def test_proposal_parsing_roundtrip():
    p = ike.parse_proposal_string("aes256-sha384-ecp384-ke1_mlkem768!")
    assert p.encr == "AES-256-GCM"
    assert p.prf == "HMAC-SHA-384"
    assert p.classical_group == "ECP-384"
    assert p.intermediate_kem == "ML-KEM-768"
    assert p.strict
    assert ike.parse_proposal_string(p.to_string()) == p
    q = ike.parse_proposal_string("aes256gcm128-sha384-x25519")
    assert q.encr == "AES-256-GCM" and not q.strict and q.intermediate_kem is None
    assert ike.parse_proposal_string("aes256-sha256-dh14").classical_group == "MODP-2048"
    with pytest.raises(MalformedEncoding):
        ike.parse_proposal_string("aes256-nonsense-x25519")


def test_pq_policy_rejects_small_aead():
    with pytest.raises(NoProposalChosen):
        ike.check_pq_policy(ike.parse_proposal_string("aes128-sha384-x25519"))


# --- full flow -----------------------------------------------------------------------------

def test_five_exchange_order_matches_the_flow_table(trust):
    ppk = ike.PpkEntry("ppk-1", hashlib.shake_256(b"ppk1").digest(32))
    initiator, responder = make_pair(trust, use_ppk=True, ppk=ppk,
                                     ppk_store={"ppk-1": ppk}, tag="flow")
    ike.run_handshake(initiator, responder)
    reply = ike.rekey_respond(responder, ike.rekey_request(initiator, with_kem="ML-KEM-768"))
    ike.rekey_finish(initiator, reply)
    ike.delete_finish(initiator, ike.delete_respond(responder, ike.delete_request(initiator)))

    log = initiator.exchange_log
    order = [e["exchange"] for e in log]
    assert order == [
        "IKE_SA_INIT", "IKE_SA_INIT",
        "IKE_INTERMEDIATE", "IKE_INTERMEDIATE",
        "IKE_AUTH", "IKE_AUTH",
        "CREATE_CHILD_SA", "CREATE_CHILD_SA",
        "INFORMATIONAL", "INFORMATIONAL",
    ]
    # SA_INIT carries the intermediate-support notify in both directions
    for entry in log[:2]:
        assert "NOTIFY:INTERMEDIATE_EXCHANGE_SUPPORTED" in entry["payloads"]
        assert "SA" in entry["payloads"] and "KE" in entry["payloads"]
        assert "NONCE" in entry["payloads"]
    # AUTH carries identity, certificate, AUTH and the PPK identity notify
    assert "NOTIFY:PPK_IDENTITY" in log[4]["payloads"]
    assert {"IDENT", "CERT", "AUTH", "SA", "TS_I", "TS_R"} <= set(log[4]["payloads"])
    assert "NOTIFY:PPK_IDENTITY" in log[5]["payloads"]
    # INFORMATIONAL delete is acknowledged
    assert "DELETE" in log[8]["payloads"] and "DELETE" in log[9]["payloads"]


def test_intermediate_carries_mlkem_sized_payloads(trust):
    initiator, responder = make_pair(trust, tag="sizes")
    msgs = ike.sa_init(initiator)
    ike.sa_init_finish(initiator, ike.sa_init_respond(responder, msgs[0])[0])
    inter_req = ike.intermediate_request(initiator)
    # the initiator's encrypted payload wraps the 1184-byte public key
    total_req = sum(len(m) for m in inter_req)
    assert total_req >= 1184
    inter_resp = ike.intermediate_respond(responder, inter_req)
    total_resp = sum(len(m) for m in inter_resp)
    assert total_resp >= 1088
    ike.intermediate_finish(initiator, inter_resp)
    assert initiator.keys.sk_d == responder.keys.sk_d


def test_kem_folding_changes_sk_d(trust):
    with_kem_i, with_kem_r = make_pair(trust, tag="fold1")
    ike.run_handshake(with_kem_i, with_kem_r)
    without_i, without_r = make_pair(trust, support_r=False, tag="fold1")
    ike.run_handshake(without_i, without_r)
    # same entropy tags -> identical classical exchange; the KEM fold is the difference
    assert with_kem_i.keys.sk_d != without_i.keys.sk_d

    # direct property: sk_d is a function of the KEM shared secret
    base = hashlib.shake_256(b"skd").digest(48)
    ni, nr = b"\x01" * 32, b"\x02" * 32
    one = ike.fold_kem_secret(base, b"\xaa" * 32, ni, nr)
    two = ike.fold_kem_secret(base, b"\xab" * 32, ni, nr)
    assert one != two


def test_classical_only_when_responder_lacks_support(trust):
    initiator, responder = make_pair(trust, support_r=False, tag="noint")
    ike.run_handshake(initiator, responder)
    assert initiator.phase is ike.Phase.ESTABLISHED
    exchanges = [e["exchange"] for e in initiator.exchange_log]
    assert "IKE_INTERMEDIATE" not in exchanges
    assert not initiator.peer_supports_intermediate


def test_proposal_mismatch_fails_with_no_proposal_chosen(trust):
    initiator, responder = make_pair(trust, tag="nok")
    responder.config.proposal = ike.parse_proposal_string("aes256-sha256-x25519")
    reply = ike.sa_init_respond(responder, ike.sa_init(initiator)[0])
    assert isinstance(responder.failure, NoProposalChosen)
    with pytest.raises(NoProposalChosen):
        ike.sa_init_finish(initiator, reply[0])


# --- PPK properties ----------------------------------------------------------------------

def test_ppk_changes_child_keys_on_identical_transcripts(trust):
    ppk = ike.PpkEntry("ppk-x", hashlib.shake_256(b"ppkx").digest(32))
    with_i, with_r = make_pair(trust, use_ppk=True, ppk=ppk,
                               ppk_store={"ppk-x": ppk}, tag="samet")
    ike.run_handshake(with_i, with_r)
    no_i, no_r = make_pair(trust, tag="samet")  # identical entropy tags
    ike.run_handshake(no_i, no_r)
    assert with_i.sk_d_base == no_i.sk_d_base  # same asymmetric transcript
    assert with_i.child_sa.key_out != no_i.child_sa.key_out


def test_ppk_harvest_resistance_100_wrong_ppks(trust):
    ppk = ike.PpkEntry("ppk-h", hashlib.shake_256(b"ppkh").digest(32))
    initiator, responder = make_pair(trust, use_ppk=True, ppk=ppk,
                                     ppk_store={"ppk-h": ppk}, tag="harvest")
    ike.run_handshake(initiator, responder)
    ni, nr = initiator.nonce_local, initiator.nonce_peer
    honest = ike.derive_child_keymat(ike.mix_ppk(ppk.ppk, initiator.sk_d_base), ni, nr)
    assert honest == (initiator.child_sa.key_out, initiator.child_sa.key_in)
    for i in range(100):
        wrong = hashlib.shake_256(f"wrong-ppk-{i}".encode()).digest(32)
        assert wrong != ppk.ppk
        attempt = ike.derive_child_keymat(ike.mix_ppk(wrong, initiator.sk_d_base), ni, nr)
        assert attempt != honest


def test_unknown_ppk_id_tears_down(trust):
    ppk = ike.PpkEntry("not-provisioned", hashlib.shake_256(b"ppkz").digest(32))
    initiator, responder = make_pair(trust, use_ppk=True, ppk=ppk,
                                     ppk_store={}, tag="unknownppk")
    msgs = ike.sa_init(initiator)
    ike.sa_init_finish(initiator, ike.sa_init_respond(responder, msgs[0])[0])
    reply = ike.intermediate_respond(responder, ike.intermediate_request(initiator))
    ike.intermediate_finish(initiator, reply)
    err = ike.auth_respond(responder, ike.auth_request(initiator))
    assert isinstance(responder.failure, UnknownPpkId)
    assert responder.phase is ike.Phase.CLOSED
    with pytest.raises(UnknownPpkId):
        ike.auth_finish(initiator, err)
    assert initiator.phase is ike.Phase.CLOSED


# --- rekey ---------------------------------------------------------------------------------

def test_rekey_freshness_and_forward_secrecy(trust):
    initiator, responder = make_pair(trust, tag="rekey")
    ike.run_handshake(initiator, responder)
    old_i, old_r = initiator.child_sa, responder.child_sa
    reply = ike.rekey_respond(responder, ike.rekey_request(initiator))
    new = ike.rekey_finish(initiator, reply)
    assert new.key_out != old_i.key_out
    sealed = initiator.child_sa.seal(b"post-rekey traffic")
    assert responder.child_sa.open(sealed) == b"post-rekey traffic"
    from pqoran.errors import AuthenticationFailure
    with pytest.raises(AuthenticationFailure):
        old_r.open(sealed)  # old keys cannot read post-rekey traffic


def test_rekey_with_kem_adds_material_and_folds(trust):
    a_i, a_r = make_pair(trust, tag="rk2")
    ike.run_handshake(a_i, a_r)
    plain_req = ike.rekey_request(a_i)
    plain_bytes = sum(len(m) for m in plain_req)
    ike.rekey_finish(a_i, ike.rekey_respond(a_r, plain_req))
    plain_keys = a_i.child_sa.key_out

    b_i, b_r = make_pair(trust, tag="rk2")  # identical seeds
    ike.run_handshake(b_i, b_r)
    kem_req = ike.rekey_request(b_i, with_kem="ML-KEM-768")
    kem_bytes = sum(len(m) for m in kem_req)
    assert kem_bytes >= plain_bytes + 1184  # public key rides along
    reply = ike.rekey_respond(b_r, kem_req)
    assert sum(len(m) for m in reply) >= 1088
    ike.rekey_finish(b_i, reply)
    assert b_i.child_sa.key_out != plain_keys


def test_rekey_aes128_rejected_under_pq_policy(trust):
    initiator, responder = make_pair(trust, tag="rk128")
    ike.run_handshake(initiator, responder)
    initiator.config.esp_proposal = ike.parse_proposal_string("aes128gcm128-sha384-x25519")
    initiator.config.pq_policy = False  # let the initiator send it anyway
    reply = ike.rekey_respond(responder, ike.rekey_request(initiator))
    assert isinstance(responder.failure, NoProposalChosen)
    with pytest.raises(NoProposalChosen):
        ike.rekey_finish(initiator, reply)


# --- delete --------------------------------------------------------------------------------

def test_delete_zeroizes_and_is_idempotent(trust):
    initiator, responder = make_pair(trust, tag="del")
    ike.run_handshake(initiator, responder)
    ike.delete_finish(initiator, ike.delete_respond(responder, ike.delete_request(initiator)))
    assert initiator.phase is ike.Phase.CLOSED
    assert set(initiator.keys.sk_d) == {0}
    with pytest.raises(SaClosed):
        initiator.child_sa.seal(b"traffic")
    assert ike.delete_request(initiator) == []  # idempotent


# --- fragmentation --------------------------------------------------------------------------

def test_sa_init_cannot_be_fragmented(trust):
    initiator, _ = make_pair(trust, tag="nofrag")
    with pytest.raises(FragmentationNotAllowed):
        ike.fragment_encrypted(initiator, ike.Exchange.IKE_SA_INIT, [], 0, 1200)


def test_auth_message_fragments_to_the_analytic_count(trust):
    initiator, responder = make_pair(trust, tag="fragcount")
    msgs = ike.sa_init(initiator)
    ike.sa_init_finish(initiator, ike.sa_init_respond(responder, msgs[0])[0])
    reply = ike.intermediate_respond(responder, ike.intermediate_request(initiator))
    ike.intermediate_finish(initiator, reply)
    payload = [(ike.Ptype.IDENT, b"x" * 9216)]
    frags = ike.fragment_encrypted(initiator, ike.Exchange.IKE_AUTH, payload,
                                   initiator.message_id, 1200)
    assert len(frags) == 8  # ceil((9216 + header) / 1200)
    reassembled = ike.reassemble_encrypted(responder, frags)
    assert reassembled[0][1] == b"x" * 9216


def test_fragment_loss_recovery_via_driver(trust):
    # drop one AUTH fragment on first transmission; the driver's retransmit
    # resends the full request and reassembly completes
    import random
    rng = random.Random(5)
    initiator, responder = make_pair(trust, tag="fragloss")
    initiator.config.fragment_threshold = 900
    responder.config.fragment_threshold = 900
    idrv, rdrv = ike.IkeDriver(initiator), ike.IkeDriver(responder)
    now = 0.0
    inflight = [(rdrv, d) for d in idrv.start(now)]
    dropped = {"done": False}
    for _ in range(3000):
        if idrv.established and rdrv.established:
            break
        if inflight:
            target, data = inflight.pop(0)
            other = idrv if target is rdrv else rdrv
            if not dropped["done"] and len(data) > 800:
                dropped["done"] = True
                continue
            for out in target.receive(data, now):
                inflight.append((other, out))
        else:
            wake = [w for w in (idrv.next_wakeup(), rdrv.next_wakeup()) if w is not None]
            if not wake:
                break
            now = min(wake) + 1
            for drv, peer in ((idrv, rdrv), (rdrv, idrv)):
                for out in drv.poll(now):
                    inflight.append((peer, out))
    assert idrv.established and rdrv.established
    assert idrv.retransmit_count > 0


def test_message_ids_strictly_increase(trust):
    initiator, responder = make_pair(trust, tag="msgid")
    ids = []
    msgs = ike.sa_init(initiator)
    ids.append(0)
    ike.sa_init_finish(initiator, ike.sa_init_respond(responder, msgs[0])[0])
    ids.append(initiator.message_id)
    reply = ike.intermediate_respond(responder, ike.intermediate_request(initiator))
    ike.intermediate_finish(initiator, reply)
    ids.append(initiator.message_id)
    ike.auth_finish(initiator, ike.auth_respond(responder, ike.auth_request(initiator)))
    ids.append(initiator.message_id)
    assert ids == sorted(set(ids))
