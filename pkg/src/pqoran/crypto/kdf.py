"""HKDF extract/expand (RFC 5869 construction) over SHA-384 by default."""

from __future__ import annotations

import hashlib
import hmac

from ..errors import LengthTooLarge

DEFAULT_HASH = "sha384"


def hash_len(hash_name: str = DEFAULT_HASH) -> int:
    return hashlib.new(hash_name).digest_size


def hkdf_extract(salt: bytes, ikm: bytes, hash_name: str = DEFAULT_HASH) -> bytes:
    if not salt:
        salt = bytes(hash_len(hash_name))
    return hmac.new(salt, ikm, hash_name).digest()


def hkdf_expand(prk: bytes, info: bytes, length: int, hash_name: str = DEFAULT_HASH) -> bytes:
    hlen = hash_len(hash_name)
    if length > 255 * hlen:
        raise LengthTooLarge(f"HKDF expand limited to {255 * hlen} bytes for {hash_name}")
    blocks = []
    prev = b""
    counter = 1
    while sum(len(b) for b in blocks) < length:
        prev = hmac.new(prk, prev + info + bytes([counter]), hash_name).digest()
        blocks.append(prev)
        counter += 1
    return b"".join(blocks)[:length]


def hmac_digest(key: bytes, message: bytes, hash_name: str = DEFAULT_HASH) -> bytes:
    return hmac.new(key, message, hash_name).digest()
