"""TEST-ONLY size-parameterized signature scheme for byte-cost studies.

Produces structurally valid keys and signatures whose combined size matches
the published per-family estimates (ECDSA 0.1 KB ... code-based 190 KB), so
handshake byte costs can be compared across families without implementing
nine cryptosystems.  The "signature" is a recomputable SHAKE tag plus
deterministic filler: IT PROVIDES NO SECURITY WHATSOEVER.  Channel and PKI
builders reject these profiles unless comparison mode is explicitly enabled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

PROFILE_PREFIX = "TEST-SIZE:"
_TAG_LEN = 32


@dataclass(frozen=True)
class SizeClass:
    name: str
    key_plus_signature_kb: float

    @property
    def total_bytes(self) -> int:
        return int(self.key_plus_signature_kb * 1024)

    @property
    def public_key_bytes(self) -> int:
        return max(_TAG_LEN, self.total_bytes // 2)

    @property
    def signature_bytes(self) -> int:
        return max(_TAG_LEN, self.total_bytes - self.public_key_bytes)

    @property
    def profile_name(self) -> str:
        return PROFILE_PREFIX + self.name


SIZE_CLASSES = (
    SizeClass("ECDSA", 0.1),
    SizeClass("RSA", 0.5),
    SizeClass("Lattice", 11),
    SizeClass("Stateful HBS", 15),
    SizeClass("Stateless HBS", 42),
    SizeClass("ZK (Picnic L1FS)", 66),
    SizeClass("Multivariate", 100),
    SizeClass("Isogeny", 122),
    SizeClass("Code", 190),
)


def by_name(name: str) -> SizeClass:
    key = name.removeprefix(PROFILE_PREFIX)
    for cls in SIZE_CLASSES:
        if cls.name == key:
            return cls
    raise KeyError(f"no size class named {name!r}")


def is_test_profile(profile_name: str) -> bool:
    return profile_name.startswith(PROFILE_PREFIX)


@dataclass(frozen=True)
class SizeSigKeyPair:
    size_class: SizeClass
    public_key: bytes
    secret_key: bytes
    composite_only: bool = False

    @property
    def profile_name(self) -> str:
        return self.size_class.profile_name


def keygen(size_class: SizeClass, seed: bytes) -> SizeSigKeyPair:
    pk = hashlib.shake_256(b"test-size-pk:" + size_class.name.encode() + seed).digest(
        size_class.public_key_bytes)
    return SizeSigKeyPair(size_class, pk, seed)


def sign(keypair: SizeSigKeyPair, message: bytes, context: bytes = b"") -> bytes:
    return _signature(keypair.size_class, keypair.public_key, message, context)


def verify(size_class: SizeClass, public_key: bytes, message: bytes, context: bytes,
           signature: bytes) -> bool:
    return signature == _signature(size_class, public_key, message, context)


def _signature(size_class: SizeClass, public_key: bytes, message: bytes, context: bytes) -> bytes:
    tag = hashlib.shake_256(
        b"test-size-sig:" + bytes([len(context)]) + context + public_key + message
    ).digest(_TAG_LEN)
    filler = hashlib.shake_256(tag).digest(size_class.signature_bytes - _TAG_LEN)
    return tag + filler
