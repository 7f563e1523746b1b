"""Handshake message fragmentation and loss-tolerant reassembly.

Fragment header (12 bytes): msg_type(1) msg_seq(2) total_len(3) frag_offset(3)
frag_len(3).  Reassembly tolerates duplicates and arbitrary arrival order,
requires exact contiguous byte coverage, and rejects fragments that disagree
with previously seen bytes or metadata.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import MalformedFragment

HEADER_LEN = 12
MIN_FRAGMENT_BODY = 64

_HDR = struct.Struct("!BH")  # type, seq; 3-byte fields packed by hand


@dataclass(frozen=True)
class Fragment:
    msg_type: int
    msg_seq: int
    total_len: int
    frag_offset: int
    frag_len: int
    body: bytes

    def encode(self) -> bytes:
        return (
            _HDR.pack(self.msg_type, self.msg_seq)
            + self.total_len.to_bytes(3, "big")
            + self.frag_offset.to_bytes(3, "big")
            + self.frag_len.to_bytes(3, "big")
            + self.body
        )

    @classmethod
    def decode(cls, blob: bytes) -> "Fragment":
        if len(blob) < HEADER_LEN:
            raise MalformedFragment("fragment shorter than its header")
        msg_type, msg_seq = _HDR.unpack_from(blob)
        total_len = int.from_bytes(blob[3:6], "big")
        frag_offset = int.from_bytes(blob[6:9], "big")
        frag_len = int.from_bytes(blob[9:12], "big")
        body = blob[HEADER_LEN:]
        if len(body) != frag_len:
            raise MalformedFragment("fragment body length disagrees with header")
        if frag_offset + frag_len > total_len:
            raise MalformedFragment("fragment extends past total_len")
        return cls(msg_type, msg_seq, total_len, frag_offset, frag_len, body)


def fragment_message(msg_type: int, msg_seq: int, body: bytes,
                     max_fragment_body: int) -> list[Fragment]:
    """Split into ceil(len/max) fragments; a single empty fragment for empty bodies."""
    if max_fragment_body < MIN_FRAGMENT_BODY:
        raise MalformedFragment(
            f"max fragment body {max_fragment_body} below minimum {MIN_FRAGMENT_BODY}")
    total = len(body)
    if total == 0:
        return [Fragment(msg_type, msg_seq, 0, 0, 0, b"")]
    out = []
    for offset in range(0, total, max_fragment_body):
        piece = body[offset : offset + max_fragment_body]
        out.append(Fragment(msg_type, msg_seq, total, offset, len(piece), piece))
    return out


class _Assembly:
    __slots__ = ("msg_type", "total_len", "buf", "have")

    def __init__(self, frag: Fragment):
        self.msg_type = frag.msg_type
        self.total_len = frag.total_len
        self.buf = bytearray(frag.total_len)
        self.have = bytearray(frag.total_len)

    def add(self, frag: Fragment) -> None:
        if frag.msg_type != self.msg_type or frag.total_len != self.total_len:
            raise MalformedFragment(
                f"fragments disagree about message {frag.msg_seq} metadata")
        start, end = frag.frag_offset, frag.frag_offset + frag.frag_len
        for i in range(start, end):
            if self.have[i] and self.buf[i] != frag.body[i - start]:
                raise MalformedFragment(
                    f"overlapping fragments disagree at byte {i} of message {frag.msg_seq}")
        self.buf[start:end] = frag.body
        for i in range(start, end):
            self.have[i] = 1

    @property
    def complete(self) -> bool:
        return all(self.have)


class Reassembler:
    """Collects fragments per msg_seq and releases completed messages in order."""

    def __init__(self):
        self._pending: dict[int, _Assembly] = {}
        self._done: dict[int, tuple[int, bytes]] = {}
        self._next_seq = 0

    def add(self, frag: Fragment) -> None:
        if frag.msg_seq in self._done or frag.msg_seq < self._next_seq:
            return  # duplicate of an already-delivered message
        asm = self._pending.get(frag.msg_seq)
        if asm is None:
            asm = _Assembly(frag)
            self._pending[frag.msg_seq] = asm
        asm.add(frag)
        if asm.complete:
            del self._pending[frag.msg_seq]
            self._done[frag.msg_seq] = (asm.msg_type, bytes(asm.buf))

    def pop_ready(self) -> list[tuple[int, int, bytes]]:
        """In-order (msg_seq, msg_type, body) triples that are fully assembled."""
        out = []
        while self._next_seq in self._done:
            msg_type, body = self._done.pop(self._next_seq)
            out.append((self._next_seq, msg_type, body))
            self._next_seq += 1
        return out


def reassemble(fragments) -> bytes:
    """One-shot reassembly of a single message from an iterable of fragments."""
    asm = None
    for frag in fragments:
        if asm is None:
            asm = _Assembly(frag)
        asm.add(frag)
    if asm is None or not asm.complete:
        raise MalformedFragment("coverage incomplete")
    return bytes(asm.buf)
