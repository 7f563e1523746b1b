"""Uniform seeded interfaces over the registered KEM, signature, AEAD and KDF
implementations.  Every operation that consumes randomness takes it as an
explicit argument so the entropy module stays the single randomness authority.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import BadSeedLength, ContextTooLong, UnknownAlgorithm
from . import aead, classical, kdf, mldsa, mlkem
from .registry import (
    AlgorithmDescriptor,
    AlgorithmId,
    AlgorithmKind,
    ChannelMode,
    SuiteProfile,
    default_suite,
    is_available,
    lookup,
)

__all__ = [
    "AlgorithmDescriptor", "AlgorithmId", "AlgorithmKind", "ChannelMode",
    "SuiteProfile", "default_suite", "is_available", "lookup",
    "KemKeyPair", "SigKeyPair",
    "kem_keygen", "kem_encaps", "kem_decaps",
    "sig_sign", "sig_verify",
    "aead", "classical", "kdf", "mldsa", "mlkem",
]


def _zeroize(buf: bytearray) -> None:
    for i in range(len(buf)):
        buf[i] = 0


@dataclass
class KemKeyPair:
    algorithm: AlgorithmId
    public_key: bytes
    secret_key: bytearray
    origin_seed_len: int

    def zeroize(self) -> None:
        _zeroize(self.secret_key)

    def secret_bytes(self) -> bytes:
        return bytes(self.secret_key)


@dataclass
class SigKeyPair:
    algorithm: AlgorithmId
    public_key: bytes
    secret_key: bytearray
    origin_seed_len: int
    composite_only: bool = False

    def zeroize(self) -> None:
        _zeroize(self.secret_key)

    def secret_bytes(self) -> bytes:
        return bytes(self.secret_key)


def _require_seed(desc, seed: bytes, expected: int | None):
    if expected is None:
        raise UnknownAlgorithm(f"{desc.algorithm.name} has no seeded form of this operation")
    if len(seed) != expected:
        raise BadSeedLength(
            f"{desc.algorithm.name} expects a {expected}-byte seed, got {len(seed)}")


def kem_keygen(alg: str, seed: bytes) -> KemKeyPair:
    desc = lookup(alg, AlgorithmKind.KEM)
    _require_seed(desc, seed, desc.keygen_seed_bytes)
    name = desc.algorithm.name
    if name.startswith("ML-KEM"):
        pk, sk = mlkem.keygen(mlkem.PARAM_SETS[name], seed)
    elif name == "X25519":
        pk, sk = classical.x25519_keygen(seed)
    elif name == "X-Wing":
        from ..hybrid import XWING  # registered here, implemented in hybrid
        pk, sk = XWING.keygen(seed)
    else:
        raise UnknownAlgorithm(f"KEM {name} is registered but not instantiated")
    sizes = desc.kem_sizes
    assert len(pk) == sizes.public_key_bytes and len(sk) == sizes.secret_key_bytes
    return KemKeyPair(desc.algorithm, pk, bytearray(sk), len(seed))


def kem_encaps(alg: str, public_key: bytes, seed: bytes) -> tuple[bytes, bytes]:
    desc = lookup(alg, AlgorithmKind.KEM)
    _require_seed(desc, seed, desc.encaps_seed_bytes)
    name = desc.algorithm.name
    if name.startswith("ML-KEM"):
        return mlkem.encaps(mlkem.PARAM_SETS[name], public_key, seed)
    if name == "X25519":
        return classical.x25519_encaps(public_key, seed)
    if name == "X-Wing":
        from ..hybrid import XWING
        return XWING.encaps(public_key, seed)
    raise UnknownAlgorithm(f"KEM {name} is registered but not instantiated")


def kem_decaps(alg: str, secret_key: bytes, ciphertext: bytes) -> bytes:
    desc = lookup(alg, AlgorithmKind.KEM)
    name = desc.algorithm.name
    if name.startswith("ML-KEM"):
        return mlkem.decaps(mlkem.PARAM_SETS[name], secret_key, ciphertext)
    if name == "X25519":
        return classical.x25519_decaps(secret_key, ciphertext)
    if name == "X-Wing":
        from ..hybrid import XWING
        return XWING.decaps(secret_key, ciphertext)
    raise UnknownAlgorithm(f"KEM {name} is registered but not instantiated")


def sig_keygen(alg: str, seed: bytes) -> SigKeyPair:
    desc = lookup(alg, AlgorithmKind.SIG)
    _require_seed(desc, seed, desc.keygen_seed_bytes)
    name = desc.algorithm.name
    if name.startswith("ML-DSA"):
        pk, sk = mldsa.keygen(mldsa.PARAM_SETS[name], seed)
    elif name == "Ed448":
        pk, sk = classical.ED448.keygen(seed)
    elif name == "Ed25519":
        pk, sk = classical.ED25519.keygen(seed)
    else:
        raise UnknownAlgorithm(
            f"SIG {name} needs the composite interface in pqoran.hybrid" if desc.composite
            else f"SIG {name} is registered but not instantiated")
    sizes = desc.sig_sizes
    assert len(pk) == sizes.public_key_bytes and len(sk) == sizes.secret_key_bytes
    return SigKeyPair(desc.algorithm, pk, bytearray(sk), len(seed))


def sig_sign(alg: str, secret_key: bytes, message: bytes, context: bytes = b"",
             seed: bytes | None = None) -> bytes:
    desc = lookup(alg, AlgorithmKind.SIG)
    name = desc.algorithm.name
    if name.startswith("ML-DSA"):
        return mldsa.sign(mldsa.PARAM_SETS[name], secret_key, message, context, seed)
    if name in ("Ed448", "Ed25519"):
        if context:
            raise ContextTooLong(f"{name} takes no context through this interface")
        scheme = classical.ED448 if name == "Ed448" else classical.ED25519
        return scheme.sign(secret_key, message)
    raise UnknownAlgorithm(
        f"SIG {name} needs the composite interface in pqoran.hybrid" if desc.composite
        else f"SIG {name} is registered but not instantiated")


def sig_verify(alg: str, public_key: bytes, message: bytes, context: bytes,
               signature: bytes) -> bool:
    desc = lookup(alg, AlgorithmKind.SIG)
    name = desc.algorithm.name
    if name.startswith("ML-DSA"):
        return mldsa.verify(mldsa.PARAM_SETS[name], public_key, message, signature, context)
    if name in ("Ed448", "Ed25519"):
        if context:
            return False
        scheme = classical.ED448 if name == "Ed448" else classical.ED25519
        return scheme.verify(public_key, message, signature)
    raise UnknownAlgorithm(f"SIG {name} has no direct verifier")
