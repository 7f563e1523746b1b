"""AES-GCM authenticated encryption with an explicit per-key record budget."""

from __future__ import annotations

from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..errors import AuthenticationFailure, BadKeyLength, NonceBudgetExceeded

NONCE_LEN = 12
TAG_LEN = 16
DEFAULT_RECORD_BUDGET = 1_000_000


@dataclass
class AeadParams:
    key_bytes: int = 32
    nonce_bytes: int = NONCE_LEN
    tag_bytes: int = TAG_LEN
    max_records_per_key: int = DEFAULT_RECORD_BUDGET


@dataclass
class AeadKey:
    """A single AES-GCM key with seal/open and a decrementing nonce budget."""

    key: bytes
    params: AeadParams = field(default_factory=AeadParams)
    records_sealed: int = 0

    def __post_init__(self):
        if len(self.key) != self.params.key_bytes:
            raise BadKeyLength(f"AEAD key must be {self.params.key_bytes} bytes, got {len(self.key)}")
        self._impl = AESGCM(self.key)

    def seal(self, nonce: bytes, aad: bytes, plaintext: bytes) -> bytes:
        if len(nonce) != self.params.nonce_bytes:
            raise BadKeyLength(f"nonce must be {self.params.nonce_bytes} bytes")
        if self.records_sealed >= self.params.max_records_per_key:
            raise NonceBudgetExceeded(
                f"key exhausted after {self.records_sealed} records; rekey required")
        self.records_sealed += 1
        return self._impl.encrypt(nonce, plaintext, aad)

    def open(self, nonce: bytes, aad: bytes, ciphertext: bytes) -> bytes:
        if len(ciphertext) < self.params.tag_bytes:
            raise AuthenticationFailure("ciphertext shorter than the tag")
        try:
            return self._impl.decrypt(nonce, ciphertext, aad)
        except InvalidTag as exc:
            raise AuthenticationFailure("AEAD tag verification failed") from exc


def seal(key: bytes, nonce: bytes, aad: bytes, plaintext: bytes) -> bytes:
    return AeadKey(key).seal(nonce, aad, plaintext)


def open_(key: bytes, nonce: bytes, aad: bytes, ciphertext: bytes) -> bytes:
    return AeadKey(key).open(nonce, aad, ciphertext)
