"""Primitive-layer tests: registry, ML-KEM, ML-DSA, AEAD, HKDF, suite policy."""

import hashlib

import pytest
from cryptography.hazmat.primitives.asymmetric import mldsa as ossl_mldsa
from cryptography.hazmat.primitives.asymmetric import mlkem as ossl_mlkem

from pqoran import crypto
from pqoran.crypto import aead, kdf, mldsa, mlkem
from pqoran.crypto.registry import (
    AlgorithmKind,
    ChannelMode,
    SuiteProfile,
    default_suite,
    is_available,
    lookup,
)
from pqoran.errors import (
    AuthenticationFailure,
    BadCiphertextLength,
    BadKeyLength,
    BadSeedLength,
    ContextTooLong,
    LengthTooLarge,
    NonceBudgetExceeded,
    SuitePolicyError,
    UnknownAlgorithm,
)

from helpers import load_kat


def seed(tag, n):
    return hashlib.shake_256(tag.encode()).digest(n)


# --- registry ------------------------------------------------------------------------

def test_lookup_known_sizes():
    kem = lookup("ML-KEM-768").kem_sizes
    assert (kem.public_key_bytes, kem.secret_key_bytes, kem.ciphertext_bytes,
            kem.shared_secret_bytes) == (1184, 2400, 1088, 32)
    sig = lookup("ML-DSA-65").sig_sizes
    assert (sig.secret_key_bytes, sig.signature_bytes) == (4032, 3309)


def test_lookup_unknown_raises():
    with pytest.raises(UnknownAlgorithm):
        lookup("NO-SUCH-ALG")
    with pytest.raises(UnknownAlgorithm):
        lookup("ML-KEM-768", AlgorithmKind.SIG)  # wrong kind


def test_lookup_alias_and_availability():
    assert lookup("ed448-dilithium3").algorithm.name == "Ed448-ML-DSA-65"
    assert not lookup("p384mldsa65").available
    assert not lookup("HashML-DSA-65").available
    assert not lookup("MODP-2048").available
    assert is_available("X-Wing") and not is_available("p384mldsa65")


# --- ML-KEM --------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["ML-KEM-512", "ML-KEM-768", "ML-KEM-1024"])
def test_mlkem_artifact_sizes_and_roundtrip(name):
    params = mlkem.PARAM_SETS[name]
    sizes = lookup(name).kem_sizes
    ek, dk = mlkem.keygen(params, seed(f"kg:{name}", 64))
    assert len(ek) == sizes.public_key_bytes
    assert len(dk) == sizes.secret_key_bytes
    ct, ss = mlkem.encaps(params, ek, seed(f"en:{name}", 32))
    assert len(ct) == sizes.ciphertext_bytes
    assert len(ss) == sizes.shared_secret_bytes == 32
    assert mlkem.decaps(params, dk, ct) == ss


def test_mlkem_keygen_deterministic_and_seed_checked():
    params = mlkem.PARAM_SETS["ML-KEM-768"]
    s = seed("det", 64)
    assert mlkem.keygen(params, s) == mlkem.keygen(params, s)
    with pytest.raises(BadSeedLength):
        mlkem.keygen(params, s[:32])


def test_mlkem_encaps_distinct_seeds_distinct_ciphertexts():
    params = mlkem.PARAM_SETS["ML-KEM-768"]
    ek, _ = mlkem.keygen(params, seed("pair", 64))
    ct1, _ = mlkem.encaps(params, ek, seed("e1", 32))
    ct2, _ = mlkem.encaps(params, ek, seed("e2", 32))
    assert ct1 != ct2
    with pytest.raises(BadKeyLength):
        mlkem.encaps(params, ek[:-1], seed("e1", 32))
    with pytest.raises(BadSeedLength):
        mlkem.encaps(params, ek, seed("e1", 31))


def test_mlkem_roundtrip_many_seeds():
    params = mlkem.PARAM_SETS["ML-KEM-768"]
    for i in range(100):
        ek, dk = mlkem.keygen(params, seed(f"rt:{i}", 64))
        ct, ss = mlkem.encaps(params, ek, seed(f"rte:{i}", 32))
        assert mlkem.decaps(params, dk, ct) == ss


def test_mlkem_implicit_rejection_and_structural_errors():
    params = mlkem.PARAM_SETS["ML-KEM-768"]
    ek, dk = mlkem.keygen(params, seed("rej", 64))
    ct, ss = mlkem.encaps(params, ek, seed("reje", 32))
    bad = bytearray(ct)
    bad[5] ^= 0x10
    other = mlkem.decaps(params, dk, bytes(bad))  # returns a secret, never raises
    assert other != ss and len(other) == 32
    with pytest.raises(BadCiphertextLength):
        mlkem.decaps(params, dk, ct[:-1])
    with pytest.raises(BadKeyLength):
        mlkem.decaps(params, dk[:-1], ct)


def test_mlkem_kats_from_independent_oracle():
    params = mlkem.PARAM_SETS["ML-KEM-768"]
    vectors = load_kat("ml-kem-768.kat")
    assert len(vectors) >= 25
    for v in vectors:
        ek, dk = mlkem.keygen(params, v["seed"][:64])
        assert ek == v["pk"] and dk == v["sk"]
        ct, ss = mlkem.encaps(params, ek, v["seed"][64:])
        assert ct == v["ct"] and ss == v["ss"]
        assert mlkem.decaps(params, dk, ct) == ss


@pytest.mark.parametrize("name,cls", [
    ("ML-KEM-768", ossl_mlkem.MLKEM768PrivateKey),
    ("ML-KEM-1024", ossl_mlkem.MLKEM1024PrivateKey),
])
def test_mlkem_interop_with_openssl(name, cls):
    params = mlkem.PARAM_SETS[name]
    for i in range(3):
        s = seed(f"ossl:{name}:{i}", 64)
        theirs = cls.from_seed_bytes(s)
        ek, dk = mlkem.keygen(params, s)
        assert ek == theirs.public_key().public_bytes_raw()
        ss_t, ct_t = theirs.public_key().encapsulate()
        assert mlkem.decaps(params, dk, ct_t) == ss_t
        ct, ss = mlkem.encaps(params, ek, seed(f"osse:{name}:{i}", 32))
        assert theirs.decapsulate(ct) == ss


# --- ML-DSA --------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["ML-DSA-44", "ML-DSA-65", "ML-DSA-87"])
def test_mldsa_sizes_and_roundtrip(name):
    params = mldsa.PARAM_SETS[name]
    sizes = lookup(name).sig_sizes
    pk, sk = mldsa.keygen(params, seed(f"dsa:{name}", 32))
    assert len(pk) == sizes.public_key_bytes
    assert len(sk) == sizes.secret_key_bytes
    sig = mldsa.sign(params, sk, b"message", b"ctx")
    assert len(sig) == sizes.signature_bytes
    assert mldsa.verify(params, pk, b"message", sig, b"ctx")


def test_mldsa_empty_message_and_determinism():
    params = mldsa.PARAM_SETS["ML-DSA-65"]
    pk, sk = mldsa.keygen(params, seed("dsaempty", 32))
    sig = mldsa.sign(params, sk, b"")
    assert mldsa.verify(params, pk, b"", sig)
    assert sig == mldsa.sign(params, sk, b"")  # deterministic without a randomizer
    hedged = mldsa.sign(params, sk, b"", rnd=seed("hedge", 32))
    assert hedged != sig and mldsa.verify(params, pk, b"", hedged)


def test_mldsa_tamper_and_context_rejection():
    params = mldsa.PARAM_SETS["ML-DSA-65"]
    pk, sk = mldsa.keygen(params, seed("dsatamper", 32))
    for i in range(100):
        msg = seed(f"m:{i}", 40 + i % 20)
        sig = mldsa.sign(params, sk, msg, b"A")
        assert mldsa.verify(params, pk, msg, sig, b"A")
        flipped = bytearray(sig)
        flipped[i % len(sig)] ^= 1 << (i % 8)
        assert not mldsa.verify(params, pk, msg, bytes(flipped), b"A")
    msg = b"context separation"
    sig = mldsa.sign(params, sk, msg, b"A")
    assert not mldsa.verify(params, pk, msg, sig, b"B")
    bad_msg = bytearray(msg)
    bad_msg[0] ^= 1
    assert not mldsa.verify(params, pk, bytes(bad_msg), sig, b"A")


def test_mldsa_context_limit():
    params = mldsa.PARAM_SETS["ML-DSA-65"]
    pk, sk = mldsa.keygen(params, seed("dsactx", 32))
    with pytest.raises(ContextTooLong):
        mldsa.sign(params, sk, b"m", b"c" * 256)


def test_mldsa_kats_from_independent_oracle():
    params = mldsa.PARAM_SETS["ML-DSA-65"]
    vectors = load_kat("ml-dsa-65.kat")
    assert len(vectors) >= 25
    for v in vectors:
        pk, sk = mldsa.keygen(params, v["seed"])
        assert pk == v["pk"] and sk == v["sk"]
        assert mldsa.sign(params, sk, v["msg"], v["ctx"]) == v["sig"]
        assert mldsa.verify(params, pk, v["msg"], v["sig"], v["ctx"])


@pytest.mark.parametrize("name,cls", [
    ("ML-DSA-44", ossl_mldsa.MLDSA44PrivateKey),
    ("ML-DSA-87", ossl_mldsa.MLDSA87PrivateKey),
])
def test_mldsa_interop_with_openssl(name, cls):
    params = mldsa.PARAM_SETS[name]
    for i in range(2):
        s = seed(f"do:{name}:{i}", 32)
        theirs = cls.from_seed_bytes(s)
        pk, sk = mldsa.keygen(params, s)
        assert pk == theirs.public_key().public_bytes_raw()
        theirs.public_key().verify(mldsa.sign(params, sk, b"interop"), b"interop")
        assert mldsa.verify(params, pk, b"interop", theirs.sign(b"interop"))


# --- facade --------------------------------------------------------------------------

def test_facade_keypair_invariants_and_zeroize():
    kp = crypto.kem_keygen("ML-KEM-768", seed("fac", 64))
    sizes = lookup("ML-KEM-768").kem_sizes
    assert len(kp.public_key) == sizes.public_key_bytes
    assert len(kp.secret_key) == sizes.secret_key_bytes
    assert kp.origin_seed_len == 64
    kp.zeroize()
    assert set(kp.secret_key) == {0}

    sp = crypto.sig_keygen("Ed448", seed("fac448", 57))
    sig = crypto.sig_sign("Ed448", sp.secret_bytes(), b"m")
    assert crypto.sig_verify("Ed448", sp.public_key, b"m", b"", sig)
    assert not crypto.sig_verify("Ed448", sp.public_key, b"m", b"ctx", sig)


def test_facade_seed_validation():
    with pytest.raises(BadSeedLength):
        crypto.kem_keygen("ML-KEM-768", b"short")
    with pytest.raises(UnknownAlgorithm):
        crypto.kem_keygen("NO-SUCH", seed("x", 64))


def test_x25519_low_order_peer_key_rejected():
    from pqoran.crypto import classical
    # an all-zero peer point forces an all-zero shared secret; the wrapper
    # surfaces that as a structured error instead of a raw library exception
    with pytest.raises(BadKeyLength):
        classical.x25519_shared(seed("lo", 32), bytes(32))


# --- AEAD ----------------------------------------------------------------------------

def test_aead_roundtrip_and_tamper():
    key = aead.AeadKey(seed("gcm", 32))
    nonce = seed("nonce", 12)
    ct = key.seal(nonce, b"", b"plaintext payload")
    assert key.open(nonce, b"", ct) == b"plaintext payload"
    bad = bytearray(ct)
    bad[-1] ^= 1  # tag byte
    with pytest.raises(AuthenticationFailure):
        key.open(nonce, b"", bytes(bad))
    with pytest.raises(AuthenticationFailure):
        key.open(nonce, b"different aad", ct)


def test_aead_published_gcm_vectors():
    # AES-256-GCM test cases 13/14 from the original GCM specification
    key = aead.AeadKey(bytes(32))
    assert key.seal(bytes(12), b"", b"").hex() == "530f8afbc74536b9a963b4f1c4cb738b"
    key2 = aead.AeadKey(bytes(32))
    assert key2.seal(bytes(12), b"", bytes(16)).hex() == (
        "cea7403d4d606b6e074ec5d3baf39d18d0d1c8a799996bf0265b98b5d48ab919")


def test_aead_key_length_and_budget():
    with pytest.raises(BadKeyLength):
        aead.AeadKey(bytes(16))
    key = aead.AeadKey(seed("budget", 32), aead.AeadParams(max_records_per_key=2))
    key.seal(bytes(12), b"", b"a")
    key.seal(bytes(12), b"", b"b")
    with pytest.raises(NonceBudgetExceeded):
        key.seal(bytes(12), b"", b"c")


# --- HKDF ----------------------------------------------------------------------------

def test_hkdf_vector_against_direct_hmac_composition():
    salt, ikm, info = b"\x0b" * 13, b"\x0b" * 22, bytes(range(0xF0, 0xFA))
    prk = kdf.hkdf_extract(salt, ikm)
    assert prk.hex() == (
        "c3af6d72e324173355ef2bbfefb850430393e3e16894a5d6867906f76715b29a"
        "ae3261a923eeac59cf9abba27a1dc773")
    okm = kdf.hkdf_expand(prk, info, 42)
    assert okm.hex() == (
        "cd3a6342d1c0a896780dcb30ad91005c38823d7aa69a68e26aa6f979df258c75"
        "1dc635f0b11018b5fab9")


def test_hkdf_against_library_oracle():
    from cryptography.hazmat.primitives import hashes
    from cryptography.hazmat.primitives.kdf.hkdf import HKDF

    salt, ikm, info = b"salty", b"input key material", b"context info"
    theirs = HKDF(algorithm=hashes.SHA384(), length=96, salt=salt, info=info).derive(ikm)
    ours = kdf.hkdf_expand(kdf.hkdf_extract(salt, ikm), info, 96)
    assert ours == theirs


def test_hkdf_edges():
    prk = kdf.hkdf_extract(b"", b"ikm")
    assert kdf.hkdf_expand(prk, b"info", 0) == b""
    assert kdf.hkdf_expand(prk, b"a", 48) != kdf.hkdf_expand(prk, b"b", 48)
    with pytest.raises(LengthTooLarge):
        kdf.hkdf_expand(prk, b"", 255 * 48 + 1)


# --- suite policy ----------------------------------------------------------------------

def test_suite_policy_rejects_small_aead_for_pq_profiles():
    for mode in (ChannelMode.PURE_PQ, ChannelMode.HYBRID):
        with pytest.raises(SuitePolicyError):
            SuiteProfile("bad", mode, ("ML-KEM-768",), "ML-DSA-65", aead="AES-128-GCM")
    # classical profiles may still negotiate the small key
    SuiteProfile("legacy", ChannelMode.CLASSICAL, ("X25519",), "Ed448", aead="AES-128-GCM")


def test_default_suites_resolve():
    for mode in ChannelMode:
        suite = default_suite(mode)
        assert suite.aead == "AES-256-GCM"
        for group in suite.kem_groups:
            assert lookup(group).available
