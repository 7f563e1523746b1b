"""HKDF-SHA-384 key schedule for the secure channel.

One extract over the KEM shared secret, then labeled expands bound to the
running transcript hash.  48-byte traffic secrets carve into a 32-byte AEAD
key and a 12-byte static IV; key updates ratchet a secret forward with the
"update" label.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..crypto import kdf

SECRET_LEN = 48
KEY_LEN = 32
IV_LEN = 12

LABEL_HS_CLIENT = b"hs client"
LABEL_HS_SERVER = b"hs server"
LABEL_APP_CLIENT = b"app client"
LABEL_APP_SERVER = b"app server"
LABEL_FINISHED = b"finished"
LABEL_KEY = b"key"
LABEL_IV = b"iv"
LABEL_UPDATE = b"update"


class Transcript:
    """Running SHA-384 over canonical handshake message bytes."""

    def __init__(self):
        self._hash = hashlib.sha384()

    def add(self, data: bytes) -> None:
        self._hash.update(data)

    def hash(self) -> bytes:
        return self._hash.digest()


@dataclass(frozen=True)
class TrafficKeys:
    secret: bytes
    key: bytes
    iv: bytes


def _expand(secret: bytes, label: bytes, length: int, transcript_hash: bytes = b"") -> bytes:
    return kdf.hkdf_expand(secret, label + transcript_hash, length)


def traffic_keys(secret: bytes) -> TrafficKeys:
    return TrafficKeys(secret, _expand(secret, LABEL_KEY, KEY_LEN), _expand(secret, LABEL_IV, IV_LEN))


@dataclass(frozen=True)
class HandshakeSecrets:
    main: bytes
    client: TrafficKeys
    server: TrafficKeys
    client_finished_key: bytes
    server_finished_key: bytes


def derive_handshake_secrets(shared_secret: bytes, transcript_hash: bytes) -> HandshakeSecrets:
    main = kdf.hkdf_extract(b"", shared_secret)
    client = _expand(main, LABEL_HS_CLIENT, SECRET_LEN, transcript_hash)
    server = _expand(main, LABEL_HS_SERVER, SECRET_LEN, transcript_hash)
    return HandshakeSecrets(
        main=main,
        client=traffic_keys(client),
        server=traffic_keys(server),
        client_finished_key=_expand(client, LABEL_FINISHED, SECRET_LEN),
        server_finished_key=_expand(server, LABEL_FINISHED, SECRET_LEN),
    )


@dataclass(frozen=True)
class AppSecrets:
    client: TrafficKeys
    server: TrafficKeys


def derive_app_secrets(main_secret: bytes, transcript_hash: bytes) -> AppSecrets:
    return AppSecrets(
        client=traffic_keys(_expand(main_secret, LABEL_APP_CLIENT, SECRET_LEN, transcript_hash)),
        server=traffic_keys(_expand(main_secret, LABEL_APP_SERVER, SECRET_LEN, transcript_hash)),
    )


def updated_secret(secret: bytes) -> bytes:
    return _expand(secret, LABEL_UPDATE, SECRET_LEN)


def finished_mac(finished_key: bytes, transcript_hash: bytes) -> bytes:
    return kdf.hmac_digest(finished_key, transcript_hash)
