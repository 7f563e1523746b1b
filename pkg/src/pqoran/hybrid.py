"""Hybrid key exchange and composite signatures.

X-Wing glues X25519 onto ML-KEM-768 under a SHA3-256 combiner.  The combiner
input is pinned as label || ss_pq || ss_classical || ct_classical ||
pk_classical; the ML-KEM ciphertext itself stays out of the hash (the
pq shared secret already binds it).

Composite signatures pair an Edwards scheme with ML-DSA-65.  The classical
branch signs a SHAKE256 pre-hash of the message, the pq branch signs the raw
message; both branches prepend the profile's domain prefix and the length-
framed context, so neither component signature verifies as a standalone
signature of the bare message.  A composite is valid only when both branches
verify.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .crypto import classical, mldsa, mlkem
from .crypto.registry import AlgorithmKind, lookup
from .errors import (
    BadCiphertextLength,
    BadKeyLength,
    BadSeedLength,
    ContextTooLong,
    MalformedEncoding,
    UnknownAlgorithm,
)

# --- X-Wing ---------------------------------------------------------------------

XWING_LABEL = b"\\.//^\\"  # 6-byte combiner label
XWING_SEED_LEN = 32
_MLKEM768 = mlkem.PARAM_SETS["ML-KEM-768"]


@dataclass(frozen=True)
class HybridKemProfile:
    pq_component: str = "ML-KEM-768"
    classical_component: str = "X25519"
    combiner_hash: str = "SHA3-256"
    combiner_label: bytes = XWING_LABEL

    @property
    def public_key_len(self) -> int:
        return _MLKEM768.ek_len + classical.X25519_KEY_LEN  # 1216

    @property
    def secret_key_len(self) -> int:
        return _MLKEM768.dk_len + 2 * classical.X25519_KEY_LEN  # 2464

    @property
    def ciphertext_len(self) -> int:
        return _MLKEM768.ct_len + classical.X25519_KEY_LEN  # 1120


class XWingKem:
    """X25519 + ML-KEM-768 hybrid KEM with 32-byte seeds throughout."""

    profile = HybridKemProfile()

    def _combine(self, ss_pq: bytes, ss_cl: bytes, ct_cl: bytes, pk_cl: bytes) -> bytes:
        return hashlib.sha3_256(XWING_LABEL + ss_pq + ss_cl + ct_cl + pk_cl).digest()

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        if len(seed) != XWING_SEED_LEN:
            raise BadSeedLength(f"X-Wing keygen needs {XWING_SEED_LEN} bytes, got {len(seed)}")
        expanded = hashlib.shake_256(seed).digest(96)
        pq_pk, pq_sk = mlkem.keygen(_MLKEM768, expanded[:64])
        cl_pk, cl_sk = classical.x25519_keygen(expanded[64:])
        # secret key keeps a copy of the classical public key for the combiner
        return pq_pk + cl_pk, pq_sk + cl_sk + cl_pk

    def encaps(self, public_key: bytes, seed: bytes) -> tuple[bytes, bytes]:
        if len(public_key) != self.profile.public_key_len:
            raise BadKeyLength(
                f"X-Wing public key is {self.profile.public_key_len} bytes, got {len(public_key)}")
        if len(seed) != XWING_SEED_LEN:
            raise BadSeedLength(f"X-Wing encaps needs {XWING_SEED_LEN} bytes, got {len(seed)}")
        pq_pk, cl_pk = public_key[: _MLKEM768.ek_len], public_key[_MLKEM768.ek_len :]
        expanded = hashlib.shake_256(b"xwing-encaps" + seed).digest(64)
        pq_ct, ss_pq = mlkem.encaps(_MLKEM768, pq_pk, expanded[:32])
        cl_ct, ss_cl = classical.x25519_encaps(cl_pk, expanded[32:])
        return pq_ct + cl_ct, self._combine(ss_pq, ss_cl, cl_ct, cl_pk)

    def decaps(self, secret_key: bytes, ciphertext: bytes) -> bytes:
        if len(secret_key) != self.profile.secret_key_len:
            raise BadKeyLength(
                f"X-Wing secret key is {self.profile.secret_key_len} bytes, got {len(secret_key)}")
        if len(ciphertext) != self.profile.ciphertext_len:
            raise BadCiphertextLength(
                f"X-Wing ciphertext is {self.profile.ciphertext_len} bytes, got {len(ciphertext)}")
        pq_sk = secret_key[: _MLKEM768.dk_len]
        cl_sk = secret_key[_MLKEM768.dk_len : _MLKEM768.dk_len + 32]
        cl_pk = secret_key[_MLKEM768.dk_len + 32 :]
        pq_ct, cl_ct = ciphertext[: _MLKEM768.ct_len], ciphertext[_MLKEM768.ct_len :]
        ss_pq = mlkem.decaps(_MLKEM768, pq_sk, pq_ct)  # implicit rejection inside
        ss_cl = classical.x25519_decaps(cl_sk, cl_ct)
        return self._combine(ss_pq, ss_cl, cl_ct, cl_pk)


XWING = XWingKem()


# --- composite signatures ---------------------------------------------------------

PREHASH_LEN = 64
_MLDSA65 = mldsa.PARAM_SETS["ML-DSA-65"]


@dataclass(frozen=True)
class CompositeSigProfile:
    profile_name: str
    classical_component: str  # "Ed448" or "Ed25519"
    pq_component: str = "ML-DSA-65"
    prehash: str = "SHAKE256"

    @property
    def domain_prefix(self) -> bytes:
        return b"composite-sig-v1:" + self.profile_name.encode()

    @property
    def _classical(self) -> classical._EdwardsScheme:
        return classical.ED448 if self.classical_component == "Ed448" else classical.ED25519

    @property
    def keygen_seed_len(self) -> int:
        return self._classical.seed_len

    @property
    def classical_sig_len(self) -> int:
        return self._classical.sig_len


ED448_MLDSA65 = CompositeSigProfile("Ed448-ML-DSA-65", "Ed448")
ED25519_MLDSA65 = CompositeSigProfile("Ed25519-ML-DSA-65", "Ed25519")

_PROFILES = {
    "ed448-ml-dsa-65": ED448_MLDSA65,
    "ed448-dilithium3": ED448_MLDSA65,
    "ed25519-ml-dsa-65": ED25519_MLDSA65,
}


def profile_for(name: str) -> CompositeSigProfile:
    profile = _PROFILES.get(name.lower())
    if profile is None:
        desc = lookup(name, AlgorithmKind.SIG)  # raises UnknownAlgorithm for bad names
        raise UnknownAlgorithm(
            f"composite profile {desc.algorithm.name} is registered but unavailable")
    return profile


@dataclass
class CompositeKeyPair:
    profile: CompositeSigProfile
    public_key: bytes  # classical_pk || pq_pk
    classical_secret: bytes
    pq_secret: bytes
    composite_only: bool = True

    @property
    def secret_key(self) -> bytes:
        return self.classical_secret + self.pq_secret


def composite_keygen(profile: CompositeSigProfile, seed: bytes) -> CompositeKeyPair:
    if len(seed) != profile.keygen_seed_len:
        raise BadSeedLength(
            f"{profile.profile_name} keygen needs {profile.keygen_seed_len} bytes, got {len(seed)}")
    expanded = hashlib.shake_256(
        b"composite-keygen:" + profile.profile_name.encode() + seed
    ).digest(profile.keygen_seed_len + mldsa.KEYGEN_SEED_LEN)
    cl_pk, cl_sk = profile._classical.keygen(expanded[: profile.keygen_seed_len])
    pq_pk, pq_sk = mldsa.keygen(_MLDSA65, expanded[profile.keygen_seed_len :])
    return CompositeKeyPair(profile, cl_pk + pq_pk, cl_sk, pq_sk)


def split_public_key(profile: CompositeSigProfile, public_key: bytes) -> tuple[bytes, bytes]:
    cl_len = profile._classical.seed_len
    if len(public_key) != cl_len + _MLDSA65.pk_len:
        raise BadKeyLength(
            f"{profile.profile_name} public key is {cl_len + _MLDSA65.pk_len} bytes, "
            f"got {len(public_key)}")
    return public_key[:cl_len], public_key[cl_len:]


def _framed(profile: CompositeSigProfile, context: bytes) -> bytes:
    if len(context) > 255:
        raise ContextTooLong(f"context is {len(context)} bytes, max 255")
    return profile.domain_prefix + bytes([len(context)]) + context


def classical_branch_message(profile: CompositeSigProfile, message: bytes,
                             context: bytes) -> bytes:
    return _framed(profile, context) + hashlib.shake_256(message).digest(PREHASH_LEN)


def pq_branch_message(profile: CompositeSigProfile, message: bytes, context: bytes) -> bytes:
    return _framed(profile, context) + message


def encode_composite_signature(classical_sig: bytes, pq_sig: bytes) -> bytes:
    return (len(classical_sig).to_bytes(2, "big") + classical_sig
            + len(pq_sig).to_bytes(3, "big") + pq_sig)


def decode_composite_signature(blob: bytes) -> tuple[bytes, bytes]:
    if len(blob) < 5:
        raise MalformedEncoding("composite signature too short")
    cl_len = int.from_bytes(blob[:2], "big")
    if len(blob) < 2 + cl_len + 3:
        raise MalformedEncoding("classical component truncated")
    cl_sig = blob[2 : 2 + cl_len]
    pq_len = int.from_bytes(blob[2 + cl_len : 5 + cl_len], "big")
    pq_sig = blob[5 + cl_len :]
    if len(pq_sig) != pq_len:
        raise MalformedEncoding("pq component length mismatch")
    return cl_sig, pq_sig


def composite_sign(profile: CompositeSigProfile, keypair: CompositeKeyPair,
                   message: bytes, context: bytes = b"",
                   pq_seed: bytes | None = None) -> bytes:
    cl_sig = profile._classical.sign(
        keypair.classical_secret, classical_branch_message(profile, message, context))
    pq_sig = mldsa.sign(
        _MLDSA65, keypair.pq_secret, pq_branch_message(profile, message, context),
        ctx=b"", rnd=pq_seed)
    return encode_composite_signature(cl_sig, pq_sig)


def composite_verify(profile: CompositeSigProfile, public_key: bytes, message: bytes,
                     context: bytes, signature: bytes) -> bool:
    cl_sig, pq_sig = decode_composite_signature(signature)
    if len(cl_sig) != profile.classical_sig_len or len(pq_sig) != _MLDSA65.sig_len:
        raise MalformedEncoding("component signature lengths do not match the profile")
    cl_pk, pq_pk = split_public_key(profile, public_key)
    if not profile._classical.verify(
            cl_pk, classical_branch_message(profile, message, context), cl_sig):
        return False
    return mldsa.verify(_MLDSA65, pq_pk, pq_branch_message(profile, message, context),
                        pq_sig, ctx=b"")
