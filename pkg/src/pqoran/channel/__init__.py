"""Secure channel: handshake driver, fragmentation, key schedule, records."""

from .fragment import Fragment, Reassembler, fragment_message, reassemble
from .handshake import (
    Codec,
    HandshakeConfig,
    HandshakeDriver,
    MsgType,
    Role,
    State,
    compress_chain,
    decompress_chain,
)
from .keyschedule import (
    AppSecrets,
    HandshakeSecrets,
    Transcript,
    derive_app_secrets,
    derive_handshake_secrets,
    finished_mac,
    traffic_keys,
    updated_secret,
)
from .record import RecordEnvelope, SecureSession

__all__ = [
    "Codec", "Fragment", "Reassembler", "fragment_message", "reassemble",
    "HandshakeConfig", "HandshakeDriver", "MsgType", "Role", "State",
    "compress_chain", "decompress_chain",
    "AppSecrets", "HandshakeSecrets", "Transcript",
    "derive_app_secrets", "derive_handshake_secrets", "finished_mac",
    "traffic_keys", "updated_secret",
    "RecordEnvelope", "SecureSession",
]
