"""Datagram (and stream) secure-channel handshake driver.

Flow: ClientHello (key shares for every offered group) -> ServerHello (group
selection + KEM ciphertext) -> Certificate -> CertificateVerify (composite
signature over the transcript hash, role-distinct context strings) ->
Finished (HKDF-derived MAC over the transcript), with an optional mirrored
client credential flight.  Handshake payloads after the hellos ride on
epoch-1 keys; application records start at epoch 2.

Datagram mode fragments every message, acknowledges each fragment, and
retransmits only unacknowledged fragments on an exponential timer (400 ms
doubling to 3 s, eight tries).  Stream mode reuses the same state machine
with fragmentation and timers disabled, which is how the mutually
authenticated stream profile is provided.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field

from .. import sizeclass
from ..crypto.registry import ChannelMode, MODE_GROUP_PREFERENCES
from .. import crypto
from ..entropy import EntropySource, SeedOp, seed_for
from ..errors import (
    CertificateRejected,
    CodecUnavailable,
    ConfigInconsistent,
    FinishedMismatch,
    HandshakeTimeout,
    MalformedEncoding,
    NegotiationFailure,
    PqoranError,
    SizeSchemeRejected,
)
from ..hybrid import CompositeKeyPair, composite_sign, composite_verify, profile_for
from ..pki import Certificate, ChainReject, ChainVerdict, KeyUsage, Spki, verify_chain
from . import keyschedule as ks
from .fragment import Fragment, Reassembler, fragment_message
from .record import HEADER_LEN as RECORD_HEADER_LEN, DirectionKeys, RecordEnvelope, SecureSession

RTO_INITIAL_MS = 400.0
RTO_MAX_MS = 3000.0
MAX_RETRIES = 8

FRAG_HEADER_LEN = 12
AEAD_TAG_LEN = 16
ENCRYPTED_OVERHEAD = RECORD_HEADER_LEN + AEAD_TAG_LEN + FRAG_HEADER_LEN

CTX_SERVER_CV = b"server-cert-verify"
CTX_CLIENT_CV = b"client-cert-verify"


class MsgType(enum.IntEnum):
    CLIENT_HELLO = 1
    SERVER_HELLO = 2
    CERTIFICATE = 11
    CERT_VERIFY = 15
    FINISHED = 20
    ALERT = 21
    ACK = 26


class Codec(enum.IntEnum):
    NONE = 0
    DEFLATE = 1


class Role(enum.Enum):
    CLIENT = "client"
    SERVER = "server"


class State(enum.Enum):
    START = "start"
    WAIT_FLIGHT2 = "wait-flight2"
    WAIT_FLIGHT3 = "wait-flight3"
    WAIT_FIN_ACK = "wait-fin-ack"
    ESTABLISHED = "established"
    FAILED = "failed"


_ALERT_ERRORS = {
    1: NegotiationFailure,
    2: lambda msg: CertificateRejected(ChainReject.BAD_SIGNATURE, msg),
    3: FinishedMismatch,
    4: PqoranError,
}


@dataclass
class HandshakeConfig:
    role: Role
    mode: ChannelMode
    chain: list = field(default_factory=list)  # leaf first
    private_key: object = None  # CompositeKeyPair or sizeclass.SizeSigKeyPair
    trust_anchor: Certificate | None = None
    require_client_cert: bool = False
    cert_compression: Codec = Codec.NONE
    key_update_record_budget: int = 1_000_000
    offered_groups: tuple[str, ...] = ()
    revocation_view: frozenset = frozenset()
    allow_test_scheme: bool = False

    def __post_init__(self):
        if not self.offered_groups:
            self.offered_groups = MODE_GROUP_PREFERENCES[self.mode]
        uses_test = (isinstance(self.private_key, sizeclass.SizeSigKeyPair)
                     or any(sizeclass.is_test_profile(c.spki.profile_name) for c in self.chain))
        if uses_test and not self.allow_test_scheme:
            raise SizeSchemeRejected(
                "size-class test signatures are only valid in comparison mode")
        if self.chain:
            leaf = self.chain[0]
            if self.private_key is None:
                raise ConfigInconsistent("chain supplied without its private key")
            if leaf.spki.public_key != self.private_key.public_key:
                raise ConfigInconsistent("leaf certificate does not match the private key")
        elif self.role is Role.SERVER:
            raise ConfigInconsistent("server configuration requires a certificate chain")


def compress_chain(chain_bytes: bytes, codec: Codec) -> bytes:
    if codec == Codec.NONE:
        return chain_bytes
    if codec == Codec.DEFLATE:
        return zlib.compress(chain_bytes, 6)
    raise CodecUnavailable(f"unknown certificate codec {codec}")


def decompress_chain(blob: bytes, codec: Codec) -> bytes:
    if codec == Codec.NONE:
        return blob
    if codec == Codec.DEFLATE:
        try:
            return zlib.decompress(blob)
        except zlib.error as exc:
            raise CertificateRejected(ChainReject.MALFORMED, f"bad DEFLATE stream: {exc}") from exc
    raise CodecUnavailable(f"unknown certificate codec {codec}")


def encode_chain(chain) -> bytes:
    out = b""
    for cert in chain:
        blob = cert.encode()
        out += len(blob).to_bytes(3, "big") + blob
    return out


def decode_chain(blob: bytes):
    chain = []
    pos = 0
    while pos < len(blob):
        if pos + 3 > len(blob):
            raise CertificateRejected(ChainReject.MALFORMED, "truncated chain framing")
        length = int.from_bytes(blob[pos : pos + 3], "big")
        pos += 3
        if pos + length > len(blob):
            raise CertificateRejected(ChainReject.MALFORMED, "truncated certificate")
        try:
            chain.append(Certificate.decode(blob[pos : pos + length]))
        except MalformedEncoding as exc:
            raise CertificateRejected(ChainReject.MALFORMED, str(exc)) from exc
        pos += length
    return chain


def _sign_transcript(private_key, transcript_hash: bytes, context: bytes) -> bytes:
    if isinstance(private_key, sizeclass.SizeSigKeyPair):
        return sizeclass.sign(private_key, transcript_hash, context)
    return composite_sign(private_key.profile, private_key, transcript_hash, context)


def _verify_transcript_sig(spki: Spki, transcript_hash: bytes, context: bytes,
                           signature: bytes, allow_test: bool) -> bool:
    if sizeclass.is_test_profile(spki.profile_name):
        if not allow_test:
            raise SizeSchemeRejected("peer offered a size-class test signature")
        return sizeclass.verify(sizeclass.by_name(spki.profile_name), spki.public_key,
                                transcript_hash, context, signature)
    return composite_verify(profile_for(spki.profile_name), spki.public_key,
                            transcript_hash, context, signature)


def _cert_sig_verifier(allow_test: bool):
    def check(cert: Certificate, issuer_spki: Spki) -> bool:
        if sizeclass.is_test_profile(issuer_spki.profile_name):
            if not allow_test:
                raise SizeSchemeRejected("peer chain uses a size-class test profile")
            return sizeclass.verify(sizeclass.by_name(issuer_spki.profile_name),
                                    issuer_spki.public_key, cert.tbs_bytes(),
                                    b"cert-tbs", cert.signature)
        return cert.verify_signature(issuer_spki)
    return check


@dataclass(frozen=True)
class _SentFragment:
    datagram: bytes
    flight: int


class _Abort(Exception):
    """Internal control flow: processing stopped, failure already recorded."""


class HandshakeDriver:
    """One endpoint of a handshake; single-owner, clocked by the caller."""

    def __init__(self, config: HandshakeConfig, entropy: EntropySource,
                 mtu: int = 1500, stream: bool = False):
        self.config = config
        self.entropy = entropy
        self.mtu = mtu
        self.stream = stream
        self.state = State.START
        self.failure: Exception | None = None
        self.session: SecureSession | None = None
        self.negotiated_group: str | None = None
        self.peer_identity: str | None = None
        self.flights_sent = 0
        self.retransmit_count = 0
        self.handshake_log: list[dict] = []

        self._transcript = ks.Transcript()
        self._reasm = Reassembler()
        self._next_msg_seq = 0
        self._plain_seq = 0
        self._hs_send: DirectionKeys | None = None
        self._hs_recv: DirectionKeys | None = None
        self._hs_secrets: ks.HandshakeSecrets | None = None
        self._pending_encrypted: list[RecordEnvelope] = []
        self._unacked: dict[tuple[int, int, int], _SentFragment] = {}
        self._retries = 0
        self._rto = RTO_INITIAL_MS
        self._deadline: float | None = None
        self._stream_buf = b""
        self._kem_shares: dict[str, object] = {}  # group -> keypair
        self._peer_chain: list = []
        self._client_cert_requested = False
        self._codec = config.cert_compression
        self._outbox: list[bytes] = []

        if stream:
            self._max_body = 1 << 22  # effectively unfragmented
        else:
            self._max_body = mtu - ENCRYPTED_OVERHEAD
            if self._max_body < 64:
                raise ConfigInconsistent(f"mtu {mtu} is too small for the record stack")

    # --- public API -------------------------------------------------------------

    @property
    def established(self) -> bool:
        return self.state is State.ESTABLISHED

    @property
    def failed(self) -> bool:
        return self.state is State.FAILED

    def start(self, now: float) -> list[bytes]:
        """Client entry point: emits the first flight."""
        if self.config.role is not Role.CLIENT or self.state is not State.START:
            return []
        out = self._send_client_hello(now)
        self.state = State.WAIT_FLIGHT2
        return out

    def receive(self, data: bytes, now: float) -> list[bytes]:
        """Feed one datagram (or stream chunk); returns outgoing wire chunks.

        Failures never raise from here: they are recorded on self.failure and
        any alert for the peer is part of the returned chunks.
        """
        if self.state is State.FAILED:
            return []
        out: list[bytes] = []
        try:
            if self.stream:
                self._stream_buf += data
                while len(self._stream_buf) >= 4:
                    need = int.from_bytes(self._stream_buf[:4], "big")
                    if len(self._stream_buf) < 4 + need:
                        break
                    record = self._stream_buf[4 : 4 + need]
                    self._stream_buf = self._stream_buf[4 + need :]
                    out.extend(self._handle_record(record, now))
            else:
                out.extend(self._handle_record(data, now))
        except _Abort:
            pass
        out.extend(self._outbox)
        self._outbox.clear()
        return out

    def poll(self, now: float) -> list[bytes]:
        """Retransmit unacknowledged fragments when the timer fires."""
        if self.stream or self.state in (State.FAILED, State.ESTABLISHED):
            return []
        if self._deadline is None or now < self._deadline or not self._unacked:
            return []
        self._retries += 1
        if self._retries > MAX_RETRIES:
            try:
                self._fail(HandshakeTimeout(
                    f"gave up after {MAX_RETRIES} retransmissions"), emit_alert=False)
            except _Abort:
                pass
            return []
        self._rto = min(self._rto * 2, RTO_MAX_MS)
        self._deadline = now + self._rto
        out = [sent.datagram for sent in self._unacked.values()]
        self.retransmit_count += len(out)
        return out

    def next_wakeup(self) -> float | None:
        if self.stream or not self._unacked or self.state in (State.FAILED, State.ESTABLISHED):
            return None
        return self._deadline

    def transcript_json(self) -> str:
        """Structured handshake log (message type, length, flight) as JSON."""
        import json
        return json.dumps(self.handshake_log, sort_keys=True)

    # --- outgoing machinery -------------------------------------------------------

    def _canonical(self, msg_type: int, msg_seq: int, body: bytes) -> bytes:
        return bytes([msg_type]) + msg_seq.to_bytes(2, "big") + len(body).to_bytes(3, "big") + body

    def _send_message(self, msg_type: MsgType, body: bytes, epoch: int, flight: int,
                      transcript: bool = True) -> list[bytes]:
        msg_seq = self._next_msg_seq
        self._next_msg_seq += 1
        if transcript:
            self._transcript.add(self._canonical(msg_type, msg_seq, body))
        self.handshake_log.append(
            {"dir": "send", "msg": msg_type.name, "len": len(body), "flight": flight})
        out = []
        for frag in fragment_message(msg_type, msg_seq, body, self._max_body):
            datagram = self._wrap_fragment(frag, epoch)
            key = (msg_seq, frag.frag_offset, frag.frag_len)
            if not self.stream:
                self._unacked[key] = _SentFragment(datagram, flight)
            out.append(datagram)
        return out

    def _wrap_fragment(self, frag: Fragment, epoch: int) -> bytes:
        payload = frag.encode()
        if epoch == 0:
            env = RecordEnvelope(0, self._plain_seq, payload)
            self._plain_seq += 1
            record = env.encode()
        else:
            record = self._hs_send.seal(payload).encode()
        if self.stream:
            return len(record).to_bytes(4, "big") + record
        return record

    def _start_flight(self, now: float) -> int:
        self.flights_sent += 1
        self._retries = 0
        self._rto = RTO_INITIAL_MS
        self._deadline = now + self._rto
        return self.flights_sent

    def _ack_datagram(self, entries: list[tuple[int, int, int]]) -> bytes:
        body = len(entries).to_bytes(2, "big")
        for msg_seq, offset, length in entries:
            body += msg_seq.to_bytes(2, "big") + offset.to_bytes(3, "big") + length.to_bytes(3, "big")
        frag = Fragment(MsgType.ACK, 0xFFFF, len(body), 0, len(body), body)
        env = RecordEnvelope(0, self._plain_seq, frag.encode())
        self._plain_seq += 1
        record = env.encode()
        if self.stream:
            return len(record).to_bytes(4, "big") + record
        return record

    def _alert(self, code: int, reason: str) -> bytes:
        body = bytes([code]) + len(reason.encode()).to_bytes(2, "big") + reason.encode()
        frag = Fragment(MsgType.ALERT, 0xFFFE, len(body), 0, len(body), body)
        env = RecordEnvelope(0, self._plain_seq, frag.encode())
        self._plain_seq += 1
        record = env.encode()
        if self.stream:
            return len(record).to_bytes(4, "big") + record
        return record

    def _fail(self, error: Exception, emit_alert: bool = True, alert_code: int = 4):
        self.state = State.FAILED
        self.failure = error
        if emit_alert:
            self._outbox.append(self._alert(alert_code, str(error)))
        raise _Abort

    # --- incoming machinery ---------------------------------------------------------

    def _handle_record(self, data: bytes, now: float) -> list[bytes]:
        try:
            env = RecordEnvelope.decode(data)
        except MalformedEncoding:
            return []  # garbage datagram, drop
        out: list[bytes] = []
        acks: list[tuple[int, int, int]] = []
        self._process_envelope(env, now, out, acks)
        # drain encrypted records that arrived before the handshake keys existed
        if self._hs_recv is not None and self._pending_encrypted:
            backlog, self._pending_encrypted = self._pending_encrypted, []
            for pending in backlog:
                self._process_envelope(pending, now, out, acks)
        if acks and not self.stream:
            out.append(self._ack_datagram(acks))
        return out

    def _process_envelope(self, env: RecordEnvelope, now: float,
                          out: list[bytes], acks: list) -> None:
        if env.epoch == 0:
            payload = env.payload
        elif env.epoch == 1:
            if self._hs_recv is None:
                if len(self._pending_encrypted) < 256:
                    self._pending_encrypted.append(env)
                return
            try:
                payload = self._hs_recv.open(env)
            except PqoranError:
                return  # forged or damaged record: ignore, timers recover
        else:
            return  # app-epoch records are not handshake traffic
        try:
            frag = Fragment.decode(payload)
        except PqoranError:
            return
        if frag.msg_type == MsgType.ACK:
            self._handle_ack(frag.body)
            return
        if frag.msg_type == MsgType.ALERT:
            self._handle_alert(frag.body)
            return
        acks.append((frag.msg_seq, frag.frag_offset, frag.frag_len))
        self._reasm.add(frag)
        for msg_seq, msg_type, body in self._reasm.pop_ready():
            self._dispatch(MsgType(msg_type), msg_seq, body, now, out)

    def _handle_ack(self, body: bytes) -> None:
        if len(body) < 2:
            return
        count = int.from_bytes(body[:2], "big")
        pos = 2
        for _ in range(count):
            if pos + 8 > len(body):
                return
            key = (int.from_bytes(body[pos : pos + 2], "big"),
                   int.from_bytes(body[pos + 2 : pos + 5], "big"),
                   int.from_bytes(body[pos + 5 : pos + 8], "big"))
            self._unacked.pop(key, None)
            pos += 8
        if not self._unacked:
            self._deadline = None
            if self.state is State.WAIT_FIN_ACK:
                self.state = State.ESTABLISHED

    def _handle_alert(self, body: bytes) -> None:
        code = body[0] if body else 4
        reason = body[3 : 3 + int.from_bytes(body[1:3], "big")].decode(errors="replace") \
            if len(body) >= 3 else ""
        factory = _ALERT_ERRORS.get(code, PqoranError)
        self.state = State.FAILED
        self.failure = factory(reason or "peer alert")
        raise _Abort

    def _implicit_ack_flight(self, upto_flight: int) -> None:
        for key, sent in list(self._unacked.items()):
            if sent.flight <= upto_flight:
                del self._unacked[key]
        if not self._unacked:
            self._deadline = None

    # --- message build/dispatch -------------------------------------------------------

    def _send_client_hello(self, now: float) -> list[bytes]:
        flight = self._start_flight(now)
        body = self.entropy.draw(32)
        body += bytes([len(self.config.offered_groups)])
        for group in self.config.offered_groups:
            keypair = crypto.kem_keygen(group, seed_for(self.entropy, group, SeedOp.KEYGEN))
            self._kem_shares[group] = keypair
            name = group.encode()
            body += bytes([len(name)]) + name
            body += len(keypair.public_key).to_bytes(3, "big") + keypair.public_key
        body += bytes([self.config.cert_compression])
        return self._send_message(MsgType.CLIENT_HELLO, body, epoch=0, flight=flight)

    def _dispatch(self, msg_type: MsgType, msg_seq: int, body: bytes,
                  now: float, out: list[bytes]) -> None:
        self.handshake_log.append(
            {"dir": "recv", "msg": msg_type.name, "len": len(body), "flight": None})
        role = self.config.role
        if msg_type == MsgType.CLIENT_HELLO and role is Role.SERVER and self.state is State.START:
            out.extend(self._respond_to_hello(msg_seq, body, now))
        elif msg_type == MsgType.SERVER_HELLO and role is Role.CLIENT:
            self._process_server_hello(msg_seq, body)
        elif msg_type == MsgType.CERTIFICATE:
            self._process_certificate(msg_seq, body, now)
        elif msg_type == MsgType.CERT_VERIFY:
            self._process_cert_verify(msg_seq, body)
        elif msg_type == MsgType.FINISHED:
            out.extend(self._process_finished(msg_seq, body, now))

    # server side -----------------------------------------------------------------

    def _respond_to_hello(self, msg_seq: int, body: bytes, now: float) -> list[bytes]:
        try:
            _client_random, groups, codec = self._parse_client_hello(body)
        except (IndexError, ValueError, UnicodeDecodeError):
            self._fail(MalformedEncoding("unparseable client hello"))
        self._transcript.add(self._canonical(MsgType.CLIENT_HELLO, msg_seq, body))
        supported = set(self.config.offered_groups)
        chosen = next((g for g, _ in groups if g in supported), None)
        if chosen is None:
            offered = ", ".join(g for g, _ in groups)
            self._fail(NegotiationFailure(
                f"no common group (client offered {offered})"), alert_code=1)
        share = dict(groups)[chosen]
        self.negotiated_group = chosen
        seed = seed_for(self.entropy, chosen, SeedOp.ENCAPS)
        try:
            ciphertext, shared_secret = crypto.kem_encaps(chosen, share, seed)
        except PqoranError as exc:
            self._fail(MalformedEncoding(f"bad key share: {exc}"))

        codec = codec if codec in (Codec.NONE, Codec.DEFLATE) else Codec.NONE
        self._codec = Codec(codec)
        flight = self._start_flight(now)
        sh = self.entropy.draw(32)
        name = chosen.encode()
        sh += bytes([len(name)]) + name
        sh += len(ciphertext).to_bytes(3, "big") + ciphertext
        sh += bytes([self._codec])
        sh += bytes([1 if self.config.require_client_cert else 0])
        out = self._send_message(MsgType.SERVER_HELLO, sh, epoch=0, flight=flight)

        secrets = ks.derive_handshake_secrets(shared_secret, self._transcript.hash())
        self._hs_secrets = secrets
        self._hs_send = DirectionKeys(secrets.server, 1, 1 << 20)
        self._hs_recv = DirectionKeys(secrets.client, 1, 1 << 20)

        cert_body = bytes([self._codec]) + compress_chain(encode_chain(self.config.chain),
                                                          self._codec)
        out.extend(self._send_message(MsgType.CERTIFICATE, cert_body, epoch=1, flight=flight))
        cv = _sign_transcript(self.config.private_key, self._transcript.hash(), CTX_SERVER_CV)
        out.extend(self._send_message(
            MsgType.CERT_VERIFY, len(cv).to_bytes(3, "big") + cv, epoch=1, flight=flight))
        fin = ks.finished_mac(secrets.server_finished_key, self._transcript.hash())
        out.extend(self._send_message(MsgType.FINISHED, fin, epoch=1, flight=flight))
        self.state = State.WAIT_FLIGHT3
        return out

    def _parse_client_hello(self, body: bytes):
        pos = 32
        client_random = body[:32]
        n_groups = body[pos]
        pos += 1
        groups = []
        for _ in range(n_groups):
            name_len = body[pos]
            name = body[pos + 1 : pos + 1 + name_len].decode()
            pos += 1 + name_len
            share_len = int.from_bytes(body[pos : pos + 3], "big")
            share = body[pos + 3 : pos + 3 + share_len]
            pos += 3 + share_len
            groups.append((name, share))
        codec = body[pos]
        return client_random, groups, codec

    # client side -----------------------------------------------------------------

    def _process_server_hello(self, msg_seq: int, body: bytes) -> None:
        if self.state is not State.WAIT_FLIGHT2 or self.negotiated_group is not None:
            return
        try:
            pos = 32
            name_len = body[pos]
            group = body[pos + 1 : pos + 1 + name_len].decode()
            pos += 1 + name_len
            ct_len = int.from_bytes(body[pos : pos + 3], "big")
            ciphertext = body[pos + 3 : pos + 3 + ct_len]
            pos += 3 + ct_len
            codec = Codec(body[pos])
            self._client_cert_requested = bool(body[pos + 1])
        except (IndexError, ValueError):
            self._fail(MalformedEncoding("unparseable server hello"))
        if group not in self._kem_shares:
            self._fail(NegotiationFailure(f"server chose unoffered group {group}"), alert_code=1)
        self._implicit_ack_flight(self.flights_sent)
        self.negotiated_group = group
        self._codec = codec
        keypair = self._kem_shares[group]
        try:
            shared_secret = crypto.kem_decaps(group, keypair.secret_bytes(), ciphertext)
        except PqoranError as exc:
            self._fail(MalformedEncoding(f"undecapsulatable server share: {exc}"))
        self._transcript.add(self._canonical(MsgType.SERVER_HELLO, msg_seq, body))
        secrets = ks.derive_handshake_secrets(shared_secret, self._transcript.hash())
        self._hs_secrets = secrets
        self._hs_send = DirectionKeys(secrets.client, 1, 1 << 20)
        self._hs_recv = DirectionKeys(secrets.server, 1, 1 << 20)

    # shared handshake body processing ----------------------------------------------

    def _process_certificate(self, msg_seq: int, body: bytes, now: float) -> None:
        if self._peer_chain:
            return  # one certificate message per peer per handshake
        if not body:
            self._fail(CertificateRejected(ChainReject.MALFORMED, "empty certificate message"),
                       alert_code=2)
        codec = Codec(body[0]) if body[0] in (0, 1) else None
        if codec is None:
            self._fail(CertificateRejected(ChainReject.MALFORMED, "unknown codec"), alert_code=2)
        try:
            chain = decode_chain(decompress_chain(body[1:], codec))
        except CertificateRejected as exc:
            self._fail(exc, alert_code=2)
        if not chain:
            self._fail(CertificateRejected(ChainReject.MALFORMED, "peer sent no certificates"),
                       alert_code=2)
        verdict: ChainVerdict = verify_chain(
            chain, self.config.trust_anchor, at_time=now,
            revocation_view=self.config.revocation_view,
            leaf_usage=KeyUsage.TLS_AUTH,
            sig_verifier=_cert_sig_verifier(self.config.allow_test_scheme))
        if not verdict.accepted:
            self._fail(CertificateRejected(verdict.reason, verdict.detail), alert_code=2)
        self._peer_chain = chain
        self._transcript.add(self._canonical(MsgType.CERTIFICATE, msg_seq, body))

    def _process_cert_verify(self, msg_seq: int, body: bytes) -> None:
        if not self._peer_chain:
            self._fail(CertificateRejected(ChainReject.MALFORMED, "verify before certificate"),
                       alert_code=2)
        sig_len = int.from_bytes(body[:3], "big")
        signature = body[3 : 3 + sig_len]
        context = CTX_SERVER_CV if self.config.role is Role.CLIENT else CTX_CLIENT_CV
        leaf = self._peer_chain[0]
        ok = False
        try:
            ok = _verify_transcript_sig(leaf.spki, self._transcript.hash(), context,
                                        signature, self.config.allow_test_scheme)
        except PqoranError:
            ok = False
        if not ok:
            self._fail(CertificateRejected(ChainReject.BAD_SIGNATURE,
                                           "certificate-verify failed"), alert_code=2)
        self.peer_identity = leaf.subject
        self._transcript.add(self._canonical(MsgType.CERT_VERIFY, msg_seq, body))

    def _process_finished(self, msg_seq: int, body: bytes, now: float) -> list[bytes]:
        if self._hs_secrets is None:
            return []
        role = self.config.role
        peer_fin_key = (self._hs_secrets.server_finished_key if role is Role.CLIENT
                        else self._hs_secrets.client_finished_key)
        expected = ks.finished_mac(peer_fin_key, self._transcript.hash())
        if body != expected:
            self._fail(FinishedMismatch("peer finished MAC does not match the transcript"),
                       alert_code=3)
        self._transcript.add(self._canonical(MsgType.FINISHED, msg_seq, body))
        if role is Role.CLIENT:
            return self._send_client_flight3(now)
        return self._server_complete(now)

    def _send_client_flight3(self, now: float) -> list[bytes]:
        self._implicit_ack_flight(self.flights_sent)
        flight = self._start_flight(now)
        out = []
        if self._client_cert_requested:
            if not self.config.chain:
                self._fail(CertificateRejected(ChainReject.MALFORMED,
                                               "server requires a client certificate"),
                           alert_code=2)
            cert_body = bytes([self._codec]) + compress_chain(
                encode_chain(self.config.chain), self._codec)
            out.extend(self._send_message(MsgType.CERTIFICATE, cert_body, epoch=1, flight=flight))
            cv = _sign_transcript(self.config.private_key, self._transcript.hash(), CTX_CLIENT_CV)
            out.extend(self._send_message(
                MsgType.CERT_VERIFY, len(cv).to_bytes(3, "big") + cv, epoch=1, flight=flight))
        fin = ks.finished_mac(self._hs_secrets.client_finished_key, self._transcript.hash())
        out.extend(self._send_message(MsgType.FINISHED, fin, epoch=1, flight=flight))
        app = ks.derive_app_secrets(self._hs_secrets.main, self._transcript.hash())
        self.session = SecureSession(app.client, app.server, epoch=2,
                                     record_budget=self.config.key_update_record_budget,
                                     peer_identity=self.peer_identity,
                                     negotiated_group=self.negotiated_group)
        if self.stream:
            self.state = State.ESTABLISHED
        else:
            self.state = State.WAIT_FIN_ACK
        return out

    def _server_complete(self, now: float) -> list[bytes]:
        if self.config.require_client_cert and self.peer_identity is None:
            self._fail(CertificateRejected(ChainReject.MALFORMED,
                                           "client sent no credentials"), alert_code=2)
        app = ks.derive_app_secrets(self._hs_secrets.main, self._transcript.hash())
        self.session = SecureSession(app.server, app.client, epoch=2,
                                     record_budget=self.config.key_update_record_budget,
                                     peer_identity=self.peer_identity,
                                     negotiated_group=self.negotiated_group)
        self._unacked.clear()
        self._deadline = None
        self.state = State.ESTABLISHED
        return []
