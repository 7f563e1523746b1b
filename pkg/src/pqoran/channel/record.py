"""Record protection: epoch/sequence envelopes over AES-256-GCM.

Envelope header (8 bytes): epoch(2) || sequence(6); the header is the AEAD
associated data and the nonce is the static IV XORed with the header padded
to 12 bytes.  Epoch 0 records travel in the clear (handshake hellos); higher
epochs require keys.  After a key update the receiver honors a small grace
window for in-flight records of the previous epoch, then rejects that epoch
outright.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..crypto.aead import AeadKey, AeadParams, TAG_LEN
from ..errors import AuthenticationFailure, EpochTooOld, MalformedEncoding, NonceBudgetExceeded
from .keyschedule import TrafficKeys, traffic_keys, updated_secret

HEADER_LEN = 8
EPOCH_GRACE_RECORDS = 2


@dataclass(frozen=True)
class RecordEnvelope:
    epoch: int
    sequence: int
    payload: bytes

    def encode(self) -> bytes:
        return self.epoch.to_bytes(2, "big") + self.sequence.to_bytes(6, "big") + self.payload

    @classmethod
    def decode(cls, blob: bytes) -> "RecordEnvelope":
        if len(blob) < HEADER_LEN:
            raise MalformedEncoding("record shorter than its header")
        return cls(int.from_bytes(blob[:2], "big"), int.from_bytes(blob[2:8], "big"), blob[8:])


def _nonce(iv: bytes, epoch: int, sequence: int) -> bytes:
    header = epoch.to_bytes(2, "big") + sequence.to_bytes(6, "big")
    padded = bytes(12 - len(header)) + header
    return bytes(a ^ b for a, b in zip(iv, padded))


class DirectionKeys:
    """Seal/open state for one direction within one epoch."""

    def __init__(self, keys: TrafficKeys, epoch: int, budget: int):
        self.keys = keys
        self.epoch = epoch
        self.sequence = 0
        self._aead = AeadKey(keys.key, AeadParams(max_records_per_key=budget))

    def seal(self, plaintext: bytes) -> RecordEnvelope:
        if self.sequence >= self._aead.params.max_records_per_key:
            raise NonceBudgetExceeded(
                f"epoch {self.epoch} exhausted its {self.sequence}-record budget")
        seq = self.sequence
        self.sequence += 1
        header = self.epoch.to_bytes(2, "big") + seq.to_bytes(6, "big")
        ct = self._aead.seal(_nonce(self.keys.iv, self.epoch, seq), header, plaintext)
        return RecordEnvelope(self.epoch, seq, ct)

    def open(self, env: RecordEnvelope) -> bytes:
        header = env.epoch.to_bytes(2, "big") + env.sequence.to_bytes(6, "big")
        return self._aead.open(_nonce(self.keys.iv, env.epoch, env.sequence), header, env.payload)

    def ratchet(self) -> "DirectionKeys":
        return DirectionKeys(traffic_keys(updated_secret(self.keys.secret)),
                             self.epoch + 1, self._aead.params.max_records_per_key)


class SecureSession:
    """Established-channel record protection for one endpoint."""

    def __init__(self, send: TrafficKeys, recv: TrafficKeys, epoch: int,
                 record_budget: int, peer_identity: str | None = None,
                 negotiated_group: str = ""):
        self._send = DirectionKeys(send, epoch, record_budget)
        self._recv = DirectionKeys(recv, epoch, record_budget)
        self._old_recv: DirectionKeys | None = None
        self._old_grace = 0
        self.peer_identity = peer_identity
        self.negotiated_group = negotiated_group

    @property
    def epoch(self) -> int:
        return self._send.epoch

    def seal_record(self, plaintext: bytes) -> bytes:
        return self._send.seal(plaintext).encode()

    def open_record(self, blob: bytes) -> bytes:
        env = RecordEnvelope.decode(blob)
        if env.epoch == self._recv.epoch:
            return self._recv.open(env)
        if self._old_recv is not None and env.epoch == self._old_recv.epoch:
            if self._old_grace <= 0:
                raise EpochTooOld(f"epoch {env.epoch} grace window exhausted")
            self._old_grace -= 1
            return self._old_recv.open(env)
        if env.epoch < self._recv.epoch:
            raise EpochTooOld(f"epoch {env.epoch} is no longer accepted")
        raise AuthenticationFailure(f"no keys for future epoch {env.epoch}")

    def key_update(self) -> int:
        """Ratchet both directions; returns the new epoch."""
        self._send = self._send.ratchet()
        self._old_recv = self._recv
        self._old_grace = EPOCH_GRACE_RECORDS
        self._recv = self._recv.ratchet()
        return self.epoch
