"""Algorithm registry: identities, artifact sizes, seed requirements, suites.

Descriptors are frozen dataclasses registered once at import time; lookup is
read-only afterwards.  Registered-but-unavailable entries (p384 composite,
MODP-2048, HashML-DSA) keep their names resolvable so configuration layers
can report "unavailable" instead of "unknown".

Note: ML-DSA-65 is registered with its FIPS 204 public-key size (1952 B).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType

from ..errors import SuitePolicyError, UnknownAlgorithm


class AlgorithmKind(enum.Enum):
    KEM = "KEM"
    SIG = "SIG"
    AEAD = "AEAD"
    HASH = "HASH"
    XOF = "XOF"
    KDF = "KDF"


class ChannelMode(enum.Enum):
    PURE_PQ = "PURE_PQ"
    HYBRID = "HYBRID"
    CLASSICAL = "CLASSICAL"


@dataclass(frozen=True)
class AlgorithmId:
    kind: AlgorithmKind
    name: str
    security_level: int  # NIST level (1-5) for PQ schemes, classical bits otherwise


@dataclass(frozen=True)
class KemArtifactSizes:
    public_key_bytes: int
    secret_key_bytes: int
    ciphertext_bytes: int
    shared_secret_bytes: int


@dataclass(frozen=True)
class SigArtifactSizes:
    public_key_bytes: int
    secret_key_bytes: int
    signature_bytes: int


@dataclass(frozen=True)
class AeadSizes:
    key_bytes: int
    nonce_bytes: int
    tag_bytes: int


@dataclass(frozen=True)
class AlgorithmDescriptor:
    algorithm: AlgorithmId
    kem_sizes: KemArtifactSizes | None = None
    sig_sizes: SigArtifactSizes | None = None
    aead_sizes: AeadSizes | None = None
    digest_bytes: int | None = None
    keygen_seed_bytes: int | None = None
    encaps_seed_bytes: int | None = None
    sign_seed_bytes: int | None = None
    available: bool = True
    composite: bool = False
    aliases: tuple[str, ...] = ()


def _kem(name, level, sizes, keygen_seed, encaps_seed, available=True, composite=False):
    return AlgorithmDescriptor(
        algorithm=AlgorithmId(AlgorithmKind.KEM, name, level),
        kem_sizes=KemArtifactSizes(*sizes) if sizes else None,
        keygen_seed_bytes=keygen_seed,
        encaps_seed_bytes=encaps_seed,
        available=available,
        composite=composite,
    )


def _sig(name, level, sizes, keygen_seed, sign_seed=32, available=True,
         composite=False, aliases=()):
    return AlgorithmDescriptor(
        algorithm=AlgorithmId(AlgorithmKind.SIG, name, level),
        sig_sizes=SigArtifactSizes(*sizes) if sizes else None,
        keygen_seed_bytes=keygen_seed,
        sign_seed_bytes=sign_seed,
        available=available,
        composite=composite,
        aliases=tuple(aliases),
    )


_MLDSA65_SIZES = (1952, 4032, 3309)  # FIPS 204 operative sizes
_ED448_SIG = 114
_ED25519_SIG = 64
# composite encoding: 2-byte classical length || classical sig || 3-byte pq length || pq sig
COMPOSITE_SIG_OVERHEAD = 5

_DESCRIPTORS = [
    # KEMs
    _kem("ML-KEM-512", 1, (800, 1632, 768, 32), 64, 32),
    _kem("ML-KEM-768", 3, (1184, 2400, 1088, 32), 64, 32),
    _kem("ML-KEM-1024", 5, (1568, 3168, 1568, 32), 64, 32),
    _kem("X25519", 128, (32, 32, 32, 32), 32, 32),
    _kem("X-Wing", 3, (1216, 2464, 1120, 32), 32, 32, composite=True),
    _kem("MODP-2048", 112, None, None, None, available=False),
    # signatures
    _sig("ML-DSA-44", 2, (1312, 2560, 2420), 32),
    _sig("ML-DSA-65", 3, _MLDSA65_SIZES, 32),
    _sig("ML-DSA-87", 5, (2592, 4896, 4627), 32),
    _sig("Ed448", 224, (57, 57, _ED448_SIG), 57, sign_seed=None),
    _sig("Ed25519", 128, (32, 32, _ED25519_SIG), 32, sign_seed=None),
    _sig(
        "Ed448-ML-DSA-65", 3,
        (57 + 1952, 57 + 4032, COMPOSITE_SIG_OVERHEAD + _ED448_SIG + 3309),
        57, composite=True, aliases=("ed448-dilithium3",),
    ),
    _sig(
        "Ed25519-ML-DSA-65", 3,
        (32 + 1952, 32 + 4032, COMPOSITE_SIG_OVERHEAD + _ED25519_SIG + 3309),
        32, composite=True,
    ),
    _sig("p384mldsa65", 3, None, None, available=False, composite=True),
    _sig("HashML-DSA-65", 3, None, None, available=False),
    # AEAD
    AlgorithmDescriptor(
        algorithm=AlgorithmId(AlgorithmKind.AEAD, "AES-256-GCM", 256),
        aead_sizes=AeadSizes(32, 12, 16),
    ),
    AlgorithmDescriptor(
        algorithm=AlgorithmId(AlgorithmKind.AEAD, "AES-128-GCM", 128),
        aead_sizes=AeadSizes(16, 12, 16),
    ),
    # hashes / XOFs / KDF
    AlgorithmDescriptor(AlgorithmId(AlgorithmKind.HASH, "SHA3-256", 128), digest_bytes=32),
    AlgorithmDescriptor(AlgorithmId(AlgorithmKind.HASH, "SHA3-512", 256), digest_bytes=64),
    AlgorithmDescriptor(AlgorithmId(AlgorithmKind.HASH, "SHA-384", 192), digest_bytes=48),
    AlgorithmDescriptor(AlgorithmId(AlgorithmKind.XOF, "SHAKE128", 128)),
    AlgorithmDescriptor(AlgorithmId(AlgorithmKind.XOF, "SHAKE256", 256)),
    AlgorithmDescriptor(AlgorithmId(AlgorithmKind.KDF, "HKDF-SHA-384", 192)),
]


def _build_index():
    index = {}
    for desc in _DESCRIPTORS:
        for name in (desc.algorithm.name, *desc.aliases):
            key = name.lower()
            if key in index:
                raise ValueError(f"duplicate registry name {name}")
            index[key] = desc
    return MappingProxyType(index)


_INDEX = _build_index()


def lookup(name: str | AlgorithmId, kind: AlgorithmKind | None = None) -> AlgorithmDescriptor:
    """Resolve an algorithm name (or id) to its immutable descriptor."""
    if isinstance(name, AlgorithmId):
        kind = kind or name.kind
        name = name.name
    desc = _INDEX.get(name.lower())
    if desc is None:
        raise UnknownAlgorithm(f"no registered algorithm named {name!r}")
    if kind is not None and desc.algorithm.kind is not kind:
        raise UnknownAlgorithm(f"{name!r} is a {desc.algorithm.kind.value}, wanted {kind.value}")
    return desc


def is_available(name: str) -> bool:
    try:
        return lookup(name).available
    except UnknownAlgorithm:
        return False


def all_descriptors() -> tuple[AlgorithmDescriptor, ...]:
    return tuple(_DESCRIPTORS)


# --- negotiated suites ----------------------------------------------------------

@dataclass(frozen=True)
class SuiteProfile:
    """A negotiated protection profile: key-exchange groups + signature + record suite."""

    name: str
    mode: ChannelMode
    kem_groups: tuple[str, ...]
    signature: str
    aead: str = "AES-256-GCM"
    hash_name: str = "SHA-384"

    def __post_init__(self):
        aead_desc = lookup(self.aead, AlgorithmKind.AEAD)
        if self.mode in (ChannelMode.PURE_PQ, ChannelMode.HYBRID):
            if aead_desc.aead_sizes.key_bytes != 32:
                raise SuitePolicyError(
                    f"PQ profiles require a 256-bit AEAD key; {self.aead} has "
                    f"{aead_desc.aead_sizes.key_bytes * 8} bits")
        for group in self.kem_groups:
            if not lookup(group, AlgorithmKind.KEM).available:
                raise SuitePolicyError(f"KEM group {group} is registered but unavailable")
        lookup(self.hash_name, AlgorithmKind.HASH)


MODE_GROUP_PREFERENCES = {
    # client-order group preference per mode; HYBRID also offers the pure PQ
    # group so hybrid endpoints can meet PQ-only peers
    ChannelMode.PURE_PQ: ("ML-KEM-768",),
    ChannelMode.HYBRID: ("X-Wing", "ML-KEM-768", "X25519"),
    ChannelMode.CLASSICAL: ("X25519",),
}


def default_suite(mode: ChannelMode, aead: str = "AES-256-GCM") -> SuiteProfile:
    signature = "Ed448-ML-DSA-65" if mode is not ChannelMode.CLASSICAL else "Ed448"
    return SuiteProfile(
        name=f"{mode.value.lower()}-aes256gcm-sha384",
        mode=mode,
        kem_groups=MODE_GROUP_PREFERENCES[mode],
        signature=signature,
        aead=aead,
    )
