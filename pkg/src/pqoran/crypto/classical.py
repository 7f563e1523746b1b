"""Classical curve primitives behind seeded, KEM-shaped interfaces.

X25519 is exposed as a KEM (DHKEM-flattened: the ciphertext is the sender's
ephemeral public key) so the channel modules can negotiate classical and
post-quantum groups through one interface.  Ed448/Ed25519 wrap the
`cryptography` package; both are deterministic signers, keygen is a pure
function of the seed.
"""

from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed448, ed25519, x25519

from ..errors import BadKeyLength, BadSeedLength

X25519_KEY_LEN = 32
ED448_SEED_LEN = 57
ED448_SIG_LEN = 114
ED25519_SEED_LEN = 32
ED25519_SIG_LEN = 64


def x25519_keygen(seed: bytes) -> tuple[bytes, bytes]:
    if len(seed) != X25519_KEY_LEN:
        raise BadSeedLength(f"x25519 keygen needs {X25519_KEY_LEN} bytes, got {len(seed)}")
    priv = x25519.X25519PrivateKey.from_private_bytes(seed)
    return priv.public_key().public_bytes_raw(), seed


def x25519_shared(secret: bytes, peer_public: bytes) -> bytes:
    if len(peer_public) != X25519_KEY_LEN:
        raise BadKeyLength("x25519 public key must be 32 bytes")
    priv = x25519.X25519PrivateKey.from_private_bytes(secret)
    try:
        return priv.exchange(x25519.X25519PublicKey.from_public_bytes(peer_public))
    except ValueError as exc:  # low-order peer point yields an all-zero secret
        raise BadKeyLength(f"x25519 exchange rejected the peer key: {exc}") from exc


def x25519_encaps(public_key: bytes, seed: bytes) -> tuple[bytes, bytes]:
    """DHKEM-style encapsulation: ct is the ephemeral public key."""
    eph_pub, eph_sec = x25519_keygen(seed)
    return eph_pub, x25519_shared(eph_sec, public_key)


def x25519_decaps(secret: bytes, ct: bytes) -> bytes:
    return x25519_shared(secret, ct)


class _EdwardsScheme:
    def __init__(self, name, seed_len, sig_len, priv_cls, pub_cls):
        self.name = name
        self.seed_len = seed_len
        self.sig_len = sig_len
        self._priv_cls = priv_cls
        self._pub_cls = pub_cls

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        if len(seed) != self.seed_len:
            raise BadSeedLength(f"{self.name} keygen needs {self.seed_len} bytes, got {len(seed)}")
        priv = self._priv_cls.from_private_bytes(seed)
        return priv.public_key().public_bytes_raw(), seed

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return self._priv_cls.from_private_bytes(secret).sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if len(public_key) != self.seed_len:
            raise BadKeyLength(f"{self.name} public key must be {self.seed_len} bytes")
        try:
            self._pub_cls.from_public_bytes(public_key).verify(signature, message)
            return True
        except (InvalidSignature, ValueError):
            return False


ED448 = _EdwardsScheme("Ed448", ED448_SEED_LEN, ED448_SIG_LEN,
                       ed448.Ed448PrivateKey, ed448.Ed448PublicKey)
ED25519 = _EdwardsScheme("Ed25519", ED25519_SEED_LEN, ED25519_SIG_LEN,
                         ed25519.Ed25519PrivateKey, ed25519.Ed25519PublicKey)


def shake256(data: bytes, n: int) -> bytes:
    return hashlib.shake_256(data).digest(n)
