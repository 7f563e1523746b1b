"""Certificate authority lifecycle and chain verification tests."""

import pytest

from pqoran import entropy, pki
from pqoran.errors import (
    RenewalTooEarly,
    UnknownSerial,
    ValidityOutOfRange,
)
from pqoran.hybrid import ED448_MLDSA65, composite_keygen
from pqoran.pki import (
    CertStatus,
    ChainReject,
    Certificate,
    KeyUsage,
    MS_PER_DAY,
    Spki,
    ca_init,
    current_crl,
    issue_cert,
    make_subordinate_ca,
    renew,
    revoke,
    status_query,
    verify_chain,
)

DAY = MS_PER_DAY


@pytest.fixture
def ca():
    source = entropy.QrngSimSource("pki-ca", b"pki-seed")
    return ca_init(source, "Ed448-ML-DSA-65", "root-ca", now=0)


def leaf_for(ca, name="leaf-node", days=7, now=0, usage=KeyUsage.TLS_AUTH):
    keypair = composite_keygen(ED448_MLDSA65, ca.entropy.draw(57))
    cert = issue_cert(ca, name, Spki("Ed448-ML-DSA-65", keypair.public_key),
                      usage, validity_days=days, now=now)
    return keypair, cert


def test_root_self_signature_and_profile(ca):
    assert ca.certificate.is_self_signed()
    assert ca.certificate.verify_signature(ca.certificate.spki)
    assert ca.certificate.spki.profile_name == "Ed448-ML-DSA-65"
    assert verify_chain([ca.certificate], ca.certificate, at_time=DAY).accepted


def test_two_cas_are_distinct():
    a = ca_init(entropy.QrngSimSource("a", b"a"), "Ed448-ML-DSA-65", "ca-a")
    b = ca_init(entropy.QrngSimSource("b", b"b"), "Ed448-ML-DSA-65", "ca-b")
    assert a.certificate.serial != b.certificate.serial
    assert a.keypair.public_key != b.keypair.public_key


def test_issue_and_validity_bounds(ca):
    _, cert = leaf_for(ca, days=7)
    assert cert.verify_signature(ca.spki)
    assert cert.serial in ca.issued_serials
    keypair = composite_keygen(ED448_MLDSA65, ca.entropy.draw(57))
    spki = Spki("Ed448-ML-DSA-65", keypair.public_key)
    for bad in (6, 91, 365):
        with pytest.raises(ValidityOutOfRange):
            issue_cert(ca, "x", spki, KeyUsage.TLS_AUTH, validity_days=bad, now=0)
    issue_cert(ca, "x", spki, KeyUsage.TLS_AUTH, validity_days=90, now=0)


def test_three_deep_chain(ca):
    inter = make_subordinate_ca(ca, "intermediate", now=0)
    _, leaf = leaf_for(inter, "deep-leaf")
    chain = [leaf, inter.certificate, ca.certificate]
    assert verify_chain(chain, ca.certificate, at_time=3 * DAY).accepted
    verdict = verify_chain(chain, ca.certificate, at_time=8 * DAY)
    assert not verdict.accepted and verdict.reason is ChainReject.EXPIRED


def test_chain_reject_reasons(ca):
    inter = make_subordinate_ca(ca, "intermediate", now=0)
    _, leaf = leaf_for(inter, "reasons-leaf", now=DAY)
    chain = [leaf, inter.certificate, ca.certificate]

    notyet = verify_chain(chain, ca.certificate, at_time=0)
    assert notyet.reason is ChainReject.NOT_YET_VALID

    other_root = ca_init(entropy.QrngSimSource("o", b"o"), "Ed448-ML-DSA-65", "other")
    anchor_fail = verify_chain(chain, other_root.certificate, at_time=2 * DAY)
    assert anchor_fail.reason is ChainReject.UNKNOWN_ANCHOR

    tampered = Certificate(**{**leaf.__dict__, "subject": "impostor"})
    bad = verify_chain([tampered, inter.certificate, ca.certificate],
                       ca.certificate, at_time=2 * DAY)
    assert bad.reason is ChainReject.BAD_SIGNATURE

    # a leaf (no CA_SIGN) may not appear at an intermediate position
    _, leaf2 = leaf_for(inter, "second-leaf", now=DAY)
    usage = verify_chain([leaf2, leaf, ca.certificate], ca.certificate, at_time=2 * DAY)
    assert usage.reason in (ChainReject.USAGE_VIOLATION, ChainReject.BAD_SIGNATURE)

    missing_usage = verify_chain(chain, ca.certificate, at_time=2 * DAY,
                                 leaf_usage=KeyUsage.TOKEN_SIGN)
    assert missing_usage.reason is ChainReject.USAGE_VIOLATION


def test_revocation_flow(ca):
    _, leaf = leaf_for(ca, "revoked-leaf")
    chain = [leaf, ca.certificate]
    crl = revoke(ca, leaf.serial, "keyCompromise", now=1000)
    assert leaf.serial in crl.serials()
    assert crl.verify_signature(ca.spki)
    verdict = verify_chain(chain, ca.certificate, at_time=DAY, revocation_view=crl)
    assert verdict.reason is ChainReject.REVOKED
    assert verify_chain(chain, ca.certificate, at_time=DAY).accepted  # without the CRL

    with pytest.raises(UnknownSerial):
        revoke(ca, b"\x00" * 16, "bogus")

    again = revoke(ca, leaf.serial, "keyCompromise", now=2000)  # idempotent
    assert again.serials() == crl.serials()


def test_revocation_is_monotone(ca):
    serials = []
    for i in range(4):
        _, cert = leaf_for(ca, f"leaf-{i}")
        serials.append(cert.serial)
    seen = frozenset()
    for serial in serials:
        crl = revoke(ca, serial, "superseded", now=0)
        assert seen <= crl.serials()
        seen = crl.serials()


def test_renewal_window_arithmetic(ca):
    # 7-day validity, window fraction 0.2 -> renewal opens at day 5.6
    _, leaf = leaf_for(ca, "renew-leaf", days=7, now=0)
    with pytest.raises(RenewalTooEarly):
        renew(ca, leaf, at_time=int(0.1 * 7 * DAY))
    with pytest.raises(RenewalTooEarly):
        renew(ca, leaf, at_time=int(5.5 * DAY))
    renewed = renew(ca, leaf, at_time=int(0.9 * 7 * DAY))
    assert renewed.serial != leaf.serial
    assert renewed.subject == leaf.subject
    assert renewed.spki == leaf.spki
    assert renewed.not_after - renewed.not_before == leaf.not_after - leaf.not_before
    # the renewed certificate verifies at a time when the old one has expired
    late = 8 * DAY
    assert verify_chain([renewed, ca.certificate], ca.certificate, at_time=late).accepted
    assert not verify_chain([leaf, ca.certificate], ca.certificate, at_time=late).accepted
    # renewal past expiry is allowed (recovery path)
    renew(ca, leaf, at_time=9 * DAY)


def test_status_query(ca):
    _, leaf = leaf_for(ca, "status-leaf")
    good = status_query(ca, leaf.serial, at_time=500)
    assert good.status is CertStatus.GOOD and good.verify_signature(ca.spki)
    revoke(ca, leaf.serial, "cessationOfOperation", now=600)
    assert status_query(ca, leaf.serial, at_time=700).status is CertStatus.REVOKED
    assert status_query(ca, b"\xff" * 16, at_time=700).status is CertStatus.UNKNOWN
    # tampered response fails signature verification
    resp = status_query(ca, leaf.serial, at_time=800)
    forged = pki.StatusResponse(resp.serial, CertStatus.GOOD, resp.produced_at,
                                resp.responder, resp.signature)
    assert not forged.verify_signature(ca.spki)


def test_tlv_encode_decode_stability(ca):
    _, leaf = leaf_for(ca, "tlv-leaf")
    cert = Certificate(**{**leaf.__dict__,
                          "extensions": (("1.2.3.4", b"\x01\x02"), ("5.6", b""))})
    blob = cert.encode()
    decoded = Certificate.decode(blob)
    assert decoded.encode() == blob
    assert Certificate.decode(decoded.encode()).encode() == blob
    assert decoded.extensions == cert.extensions


def test_issued_certs_verify_under_exactly_their_issuer(ca):
    other = ca_init(entropy.QrngSimSource("x", b"x"), "Ed448-ML-DSA-65", "other-root")
    _, leaf = leaf_for(ca, "pairwise-leaf")
    assert leaf.verify_signature(ca.spki)
    assert not leaf.verify_signature(other.spki)
    _, other_leaf = leaf_for(other, "other-leaf")
    assert not other_leaf.verify_signature(ca.spki)


def test_crl_next_update_after_this_update(ca):
    _, leaf = leaf_for(ca, "window-leaf")
    revoke(ca, leaf.serial, "superseded", now=5000)
    crl = current_crl(ca, now=5000)
    assert crl.next_update > crl.this_update
