"""IKEv2-style control protocol with a PQ intermediate exchange and PPK mixing.

Exchange order: IKE_SA_INIT (classical X25519 key exchange, in the clear,
with INTERMEDIATE_EXCHANGE_SUPPORTED notifies) -> IKE_INTERMEDIATE (encrypted,
carries the ML-KEM-768 public key out / ciphertext back, shared secret folded
into a fresh SKEYSEED) -> IKE_AUTH (composite-certificate authentication,
optional PPK_IDENTITY notify; when a PPK is in play sk_d is recomputed as
prf(ppk, sk_d) before any child keys are cut) -> CREATE_CHILD_SA rekeys with
an optional extra KEM -> INFORMATIONAL delete.

Only encrypted exchanges may be fragmented; asking for SA_INIT fragmentation
raises FragmentationNotAllowed.  The PRF is HMAC-SHA-384 throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import crypto
from .channel.handshake import encode_chain, decode_chain
from .crypto import classical, kdf
from .crypto.aead import AeadKey, AeadParams
from .crypto.registry import lookup, AlgorithmKind
from .entropy import EntropySource, SeedOp, seed_for
from .errors import (
    AuthenticationFailed,
    AuthenticationFailure,
    FragmentationNotAllowed,
    MalformedEncoding,
    NoProposalChosen,
    PqoranError,
    SaClosed,
    UnknownPpkId,
)
from .hybrid import composite_sign, composite_verify, profile_for
from .pki import KeyUsage, verify_chain

PRF_HASH = "sha384"
NONCE_LEN = 32
SK_D_LEN = 48
SK_A_LEN = 48
SK_E_LEN = 32
ESP_KEY_LEN = 32
DEFAULT_FRAG_THRESHOLD = 1200

CTX_AUTH_INITIATOR = b"ike-auth-initiator"
CTX_AUTH_RESPONDER = b"ike-auth-responder"

N_INTERMEDIATE_SUPPORTED = "INTERMEDIATE_EXCHANGE_SUPPORTED"
N_PPK_IDENTITY = "PPK_IDENTITY"
N_NO_PROPOSAL_CHOSEN = "NO_PROPOSAL_CHOSEN"
N_AUTH_FAILED = "AUTHENTICATION_FAILED"
N_UNKNOWN_PPK = "PPK_ID_UNKNOWN"


class Exchange(enum.IntEnum):
    IKE_SA_INIT = 34
    IKE_AUTH = 35
    CREATE_CHILD_SA = 36
    INFORMATIONAL = 37
    IKE_INTERMEDIATE = 43


class Ptype(enum.IntEnum):
    SA = 0x01
    KE = 0x02
    NONCE = 0x03
    NOTIFY = 0x04
    IDENT = 0x05
    CERT = 0x06
    AUTH = 0x07
    TS_I = 0x08
    TS_R = 0x09
    KEM_CT = 0x0A
    DELETE = 0x0B
    SK = 0x30
    SKF = 0x31


class Phase(enum.Enum):
    INIT = "INIT"
    INTERMEDIATE = "INTERMEDIATE"
    AUTH = "AUTH"
    ESTABLISHED = "ESTABLISHED"
    CLOSED = "CLOSED"


# --- proposal strings -------------------------------------------------------------

_ENCR_TOKENS = {
    "aes256": "AES-256-GCM",
    "aes256gcm128": "AES-256-GCM",
    "aes256gcm16": "AES-256-GCM",
    "aes128": "AES-128-GCM",
    "aes128gcm128": "AES-128-GCM",
    "aes128gcm16": "AES-128-GCM",
}
_PRF_TOKENS = {"sha384": "HMAC-SHA-384", "sha256": "HMAC-SHA-256"}
_GROUP_TOKENS = {"x25519": "X25519", "curve25519": "X25519", "ecp384": "ECP-384",
                 "modp2048": "MODP-2048", "dh14": "MODP-2048"}
_KE_TOKENS = {"mlkem768": "ML-KEM-768", "mlkem512": "ML-KEM-512", "mlkem1024": "ML-KEM-1024"}


@dataclass(frozen=True)
class Proposal:
    encr: str
    prf: str
    classical_group: str
    intermediate_kem: str | None = None
    strict: bool = False

    def to_string(self) -> str:
        rev_encr = {v: k for k, v in _ENCR_TOKENS.items()}
        rev_prf = {v: k for k, v in _PRF_TOKENS.items()}
        rev_group = {v: k for k, v in _GROUP_TOKENS.items()}
        parts = [rev_encr[self.encr], rev_prf[self.prf], rev_group[self.classical_group]]
        if self.intermediate_kem:
            rev_ke = {v: k for k, v in _KE_TOKENS.items()}
            parts.append("ke1_" + rev_ke[self.intermediate_kem])
        return "-".join(parts) + ("!" if self.strict else "")


def parse_proposal_string(text: str) -> Proposal:
    """Parse strongSwan-style strings like aes256-sha384-x25519-ke1_mlkem768!"""
    text = text.strip()
    strict = text.endswith("!")
    if strict:
        text = text[:-1]
    encr = prf = group = None
    kem = None
    for token in text.split("-"):
        token = token.lower()
        if token in _ENCR_TOKENS and encr is None:
            encr = _ENCR_TOKENS[token]
        elif token in _PRF_TOKENS and prf is None:
            prf = _PRF_TOKENS[token]
        elif token in _GROUP_TOKENS and group is None:
            group = _GROUP_TOKENS[token]
        elif token.startswith("ke1_"):
            suffix = token[4:]
            if suffix not in _KE_TOKENS:
                raise MalformedEncoding(f"unknown additional key exchange {token!r}")
            kem = _KE_TOKENS[suffix]
        else:
            raise MalformedEncoding(f"unparseable proposal token {token!r}")
    if not (encr and prf and group):
        raise MalformedEncoding(f"incomplete proposal {text!r}")
    return Proposal(encr, prf, group, kem, strict)


def check_pq_policy(proposal: Proposal) -> None:
    desc = lookup(proposal.encr, AlgorithmKind.AEAD)
    if desc.aead_sizes.key_bytes != 32:
        raise NoProposalChosen(
            f"{proposal.encr} has a {desc.aead_sizes.key_bytes * 8}-bit key; "
            "the PQ suite policy requires 256-bit AEAD")


# --- payload plumbing ---------------------------------------------------------------

def _pl(tag: int, value: bytes) -> bytes:
    return bytes([tag]) + len(value).to_bytes(3, "big") + value


def _parse_payloads(blob: bytes) -> list[tuple[int, bytes]]:
    out = []
    pos = 0
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise MalformedEncoding("truncated payload header")
        tag = blob[pos]
        length = int.from_bytes(blob[pos + 1 : pos + 4], "big")
        if pos + 4 + length > len(blob):
            raise MalformedEncoding("truncated payload")
        out.append((tag, blob[pos + 4 : pos + 4 + length]))
        pos += 4 + length
    return out


def _notify(name: str, value: bytes = b"") -> bytes:
    data = bytes([len(name)]) + name.encode() + value
    return _pl(Ptype.NOTIFY, data)


def _parse_notify(value: bytes) -> tuple[str, bytes]:
    n = value[0]
    return value[1 : 1 + n].decode(), value[1 + n :]


HDR_LEN = 8 + 8 + 1 + 1 + 4


def _header(spi_i: bytes, spi_r: bytes, exchange: Exchange, initiator: bool,
            response: bool, message_id: int) -> bytes:
    flags = (1 if initiator else 0) | (2 if response else 0)
    return spi_i + spi_r + bytes([exchange, flags]) + message_id.to_bytes(4, "big")


@dataclass(frozen=True)
class IkeMessage:
    spi_i: bytes
    spi_r: bytes
    exchange: Exchange
    initiator: bool
    response: bool
    message_id: int
    payloads: list

    def encode(self) -> bytes:
        body = b"".join(_pl(tag, value) for tag, value in self.payloads)
        return _header(self.spi_i, self.spi_r, self.exchange, self.initiator,
                       self.response, self.message_id) + body

    @classmethod
    def decode(cls, blob: bytes) -> "IkeMessage":
        if len(blob) < HDR_LEN:
            raise MalformedEncoding("short IKE message")
        try:
            exchange = Exchange(blob[16])
        except ValueError as exc:
            raise MalformedEncoding(f"unknown exchange type {blob[16]}") from exc
        flags = blob[17]
        return cls(blob[:8], blob[8:16], exchange, bool(flags & 1), bool(flags & 2),
                   int.from_bytes(blob[18:22], "big"), _parse_payloads(blob[HDR_LEN:]))


# --- key material -------------------------------------------------------------------

def prf(key: bytes, data: bytes) -> bytes:
    return kdf.hmac_digest(key, data, PRF_HASH)


def prf_plus(key: bytes, data: bytes, length: int) -> bytes:
    out = b""
    block = b""
    counter = 1
    while len(out) < length:
        block = prf(key, block + data + bytes([counter]))
        out += block
        counter += 1
    return out[:length]


@dataclass
class Keyring:
    sk_d: bytes
    sk_a: bytes
    sk_e_i: bytes
    sk_e_r: bytes


def derive_keyring(skeyseed: bytes, ni: bytes, nr: bytes, spi_i: bytes, spi_r: bytes) -> Keyring:
    stream = prf_plus(skeyseed, ni + nr + spi_i + spi_r,
                      SK_D_LEN + SK_A_LEN + 2 * SK_E_LEN)
    return Keyring(
        sk_d=stream[:SK_D_LEN],
        sk_a=stream[SK_D_LEN : SK_D_LEN + SK_A_LEN],
        sk_e_i=stream[SK_D_LEN + SK_A_LEN : SK_D_LEN + SK_A_LEN + SK_E_LEN],
        sk_e_r=stream[SK_D_LEN + SK_A_LEN + SK_E_LEN :],
    )


def fold_kem_secret(old_sk_d: bytes, ss_kem: bytes, ni: bytes, nr: bytes) -> bytes:
    """SKEYSEED' after the intermediate exchange."""
    return prf(old_sk_d, ss_kem + ni + nr)


def mix_ppk(ppk: bytes, sk_d: bytes) -> bytes:
    return prf(ppk, sk_d)


def derive_child_keymat(sk_d: bytes, ni: bytes, nr: bytes,
                        ss_kem: bytes | None = None) -> tuple[bytes, bytes]:
    """(initiator->responder key, responder->initiator key) for ESP."""
    seed = (ss_kem or b"") + ni + nr
    stream = prf_plus(sk_d, seed, 2 * ESP_KEY_LEN)
    return stream[:ESP_KEY_LEN], stream[ESP_KEY_LEN:]


@dataclass(frozen=True)
class PpkEntry:
    ppk_id: str
    ppk: bytes

    def __post_init__(self):
        if len(self.ppk) != 32:
            raise MalformedEncoding("PPKs are 256-bit secrets")


@dataclass
class ChildSa:
    spi_in: bytes
    spi_out: bytes
    key_in: bytes   # peer -> us
    key_out: bytes  # us -> peer
    traffic_selector_i: str
    traffic_selector_r: str
    proposal: Proposal
    _seq: int = 0
    closed: bool = False

    def seal(self, plaintext: bytes) -> bytes:
        if self.closed:
            raise SaClosed("child SA has been deleted")
        seq = self._seq
        self._seq += 1
        header = self.spi_out + seq.to_bytes(4, "big")
        nonce = bytes(4) + header[4:8] + seq.to_bytes(4, "big")
        ct = AeadKey(self.key_out, AeadParams()).seal(nonce, header, plaintext)
        return header + ct

    def open(self, blob: bytes) -> bytes:
        if self.closed:
            raise SaClosed("child SA has been deleted")
        if len(blob) < 8:
            raise MalformedEncoding("short ESP datagram")
        header, ct = blob[:8], blob[8:]
        seq = header[4:8]
        nonce = bytes(4) + seq + seq
        return AeadKey(self.key_in, AeadParams()).open(nonce, header, ct)

    def zeroize(self) -> None:
        self.key_in = bytes(ESP_KEY_LEN)
        self.key_out = bytes(ESP_KEY_LEN)
        self.closed = True


# --- SA state ------------------------------------------------------------------------

@dataclass
class IkeConfig:
    name: str
    chain: list
    private_key: object
    trust_anchor: object
    proposal: Proposal = field(
        default_factory=lambda: parse_proposal_string("aes256-sha384-x25519-ke1_mlkem768!"))
    esp_proposal: Proposal = field(
        default_factory=lambda: parse_proposal_string("aes256gcm128-sha384-x25519"))
    support_intermediate: bool = True
    use_ppk: bool = False
    ppk: PpkEntry | None = None
    ppk_store: dict = field(default_factory=dict)  # ppk_id -> PpkEntry
    pq_policy: bool = True
    fragment_threshold: int = DEFAULT_FRAG_THRESHOLD
    traffic_selector: str = "0.0.0.0/0"


class IkeSa:
    """One side of an IKE SA; exchange-driven, caller supplies the clock."""

    def __init__(self, config: IkeConfig, entropy: EntropySource, initiator: bool):
        self.config = config
        self.entropy = entropy
        self.initiator = initiator
        self.phase = Phase.INIT
        self.message_id = 0
        self.peer_supports_intermediate = False
        self.keys: Keyring | None = None
        self.sk_d_base: bytes | None = None  # post-KEM, pre-PPK sk_d
        self.nonce_local = b""
        self.nonce_peer = b""
        self.spi_i = b""
        self.spi_r = b""
        self.child_sa: ChildSa | None = None
        self.peer_identity: str | None = None
        self.exchange_log: list[dict] = []
        self.failure: Exception | None = None
        self._classical_keypair = None
        self._kem_keypair = None
        self._first_message_octets = b""
        self._reassembly: dict[int, dict[int, bytes]] = {}

    # -- logging helper

    def _log(self, exchange: Exchange, direction: str, payloads: list, nbytes: int):
        names = []
        for tag, value in payloads:
            if tag == Ptype.NOTIFY:
                names.append(f"NOTIFY:{_parse_notify(value)[0]}")
            else:
                names.append(Ptype(tag).name)
        self.exchange_log.append(
            {"exchange": exchange.name, "dir": direction, "payloads": names, "bytes": nbytes})

    # -- encryption helpers

    def _send_key(self) -> bytes:
        return self.keys.sk_e_i if self.initiator else self.keys.sk_e_r

    def _recv_key(self) -> bytes:
        return self.keys.sk_e_r if self.initiator else self.keys.sk_e_i

    def _nonce_for(self, message_id: int, sender_is_initiator: bool, chunk: int = 0) -> bytes:
        return (message_id.to_bytes(6, "big") + bytes([1 if sender_is_initiator else 0])
                + chunk.to_bytes(5, "big"))

    def _encrypt_payloads(self, payloads: list, header: bytes, message_id: int) -> bytes:
        plain = b"".join(_pl(tag, value) for tag, value in payloads)
        nonce = self._nonce_for(message_id, self.initiator)
        return AeadKey(self._send_key(), AeadParams()).seal(nonce, header, plain)

    def _decrypt_sk(self, value: bytes, header: bytes, message_id: int,
                    sender_is_initiator: bool) -> list:
        nonce = self._nonce_for(message_id, sender_is_initiator)
        plain = AeadKey(self._recv_key(), AeadParams()).open(nonce, header, value)
        return _parse_payloads(plain)


def fragment_encrypted(sa: IkeSa, exchange: Exchange, payloads: list, message_id: int,
                       max_len: int, response: bool = False) -> list[bytes]:
    """Split an encrypted exchange into individually protected SKF messages."""
    if exchange == Exchange.IKE_SA_INIT:
        raise FragmentationNotAllowed(
            "the initial exchange is unencrypted and cannot be fragmented")
    plain = b"".join(_pl(tag, value) for tag, value in payloads)
    chunks = [plain[i : i + max_len] for i in range(0, len(plain), max_len)] or [b""]
    total = len(chunks)
    out = []
    for num, chunk in enumerate(chunks, start=1):
        header = _header(sa.spi_i, sa.spi_r, exchange, sa.initiator, response, message_id)
        nonce = sa._nonce_for(message_id, sa.initiator, chunk=num)
        ct = AeadKey(sa._send_key(), AeadParams()).seal(nonce, header + bytes([num, total]), chunk)
        body = num.to_bytes(2, "big") + total.to_bytes(2, "big") + ct
        out.append(header + _pl(Ptype.SKF, body))
    return out


def reassemble_encrypted(sa: IkeSa, messages: list[bytes]) -> list:
    """Decrypt and join SKF fragments back into the payload list."""
    chunks: dict[int, bytes] = {}
    total = None
    for blob in messages:
        msg = IkeMessage.decode(blob)
        for tag, value in msg.payloads:
            if tag != Ptype.SKF:
                continue
            num = int.from_bytes(value[:2], "big")
            tot = int.from_bytes(value[2:4], "big")
            total = tot if total is None else total
            header = blob[:HDR_LEN]
            nonce = sa._nonce_for(msg.message_id, msg.initiator, chunk=num)
            plain = AeadKey(sa._recv_key(), AeadParams()).open(
                nonce, header + bytes([num, tot]), value[4:])
            chunks[num] = plain
    if total is None or len(chunks) != total:
        raise MalformedEncoding("missing fragments")
    return _parse_payloads(b"".join(chunks[i] for i in range(1, total + 1)))


# --- exchange construction / handling --------------------------------------------------

def _send_encrypted(sa: IkeSa, exchange: Exchange, payloads: list, message_id: int,
                    response: bool = False) -> list[bytes]:
    """Encrypt an exchange, fragmenting when it outgrows the threshold."""
    plain_len = sum(4 + len(v) for _, v in payloads)
    direction = "i->r" if sa.initiator else "r->i"
    if plain_len > sa.config.fragment_threshold:
        msgs = fragment_encrypted(sa, exchange, payloads, message_id,
                                  sa.config.fragment_threshold, response)
    else:
        header = _header(sa.spi_i, sa.spi_r, exchange, sa.initiator, response, message_id)
        ct = sa._encrypt_payloads(payloads, header, message_id)
        msgs = [header + _pl(Ptype.SK, ct)]
    sa._log(exchange, direction, payloads, sum(len(m) for m in msgs))
    return msgs


def _recv_encrypted(sa: IkeSa, messages: list[bytes]) -> tuple[IkeMessage, list]:
    first = IkeMessage.decode(messages[0])
    if any(tag == Ptype.SKF for tag, _ in first.payloads):
        payloads = reassemble_encrypted(sa, messages)
    else:
        (tag, value), = [(t, v) for t, v in first.payloads if t == Ptype.SK]
        payloads = sa._decrypt_sk(value, messages[0][:HDR_LEN], first.message_id,
                                  first.initiator)
    sa._log(first.exchange, "i->r" if first.initiator else "r->i", payloads,
            sum(len(m) for m in messages))
    return first, payloads


def sa_init(sa: IkeSa, now: float = 0.0) -> list[bytes]:
    """Initiator: build the IKE_SA_INIT request."""
    assert sa.initiator
    sa.spi_i = sa.entropy.draw(8)
    sa.spi_r = bytes(8)
    sa._classical_keypair = crypto.kem_keygen(
        "X25519", seed_for(sa.entropy, "X25519", SeedOp.KEYGEN))
    sa.nonce_local = sa.entropy.draw(NONCE_LEN)
    payloads = [
        (Ptype.SA, sa.config.proposal.to_string().encode()),
        (Ptype.KE, bytes([len(b"X25519")]) + b"X25519" + sa._classical_keypair.public_key),
        (Ptype.NONCE, sa.nonce_local),
    ]
    if sa.config.support_intermediate:
        payloads.append((Ptype.NOTIFY, bytes([len(N_INTERMEDIATE_SUPPORTED)])
                         + N_INTERMEDIATE_SUPPORTED.encode()))
    msg = IkeMessage(sa.spi_i, sa.spi_r, Exchange.IKE_SA_INIT, True, False, 0, payloads)
    blob = msg.encode()
    sa._first_message_octets = blob
    sa._log(Exchange.IKE_SA_INIT, "i->r", payloads, len(blob))
    return [blob]


def sa_init_respond(sa: IkeSa, request: bytes, now: float = 0.0) -> list[bytes]:
    """Responder: consume SA_INIT, derive the classical keyring, reply."""
    assert not sa.initiator
    msg = IkeMessage.decode(request)
    sa._log(Exchange.IKE_SA_INIT, "i->r", msg.payloads, len(request))
    sa.spi_i = msg.spi_i
    sa.spi_r = sa.entropy.draw(8)
    sa._peer_first_octets = request
    fields = dict()
    for tag, value in msg.payloads:
        fields.setdefault(tag, []).append(value)
    peer_proposal = parse_proposal_string(fields[Ptype.SA][0].decode())
    mine = sa.config.proposal
    if (peer_proposal.encr, peer_proposal.prf, peer_proposal.classical_group) != \
            (mine.encr, mine.prf, mine.classical_group):
        reply = IkeMessage(sa.spi_i, sa.spi_r, Exchange.IKE_SA_INIT, False, True, 0,
                           [(Ptype.NOTIFY, bytes([len(N_NO_PROPOSAL_CHOSEN)])
                             + N_NO_PROPOSAL_CHOSEN.encode())])
        sa.failure = NoProposalChosen(f"peer offered {peer_proposal.to_string()}")
        sa.phase = Phase.CLOSED
        return [reply.encode()]
    sa.peer_supports_intermediate = any(
        tag == Ptype.NOTIFY and _parse_notify(v)[0] == N_INTERMEDIATE_SUPPORTED
        for tag, v in msg.payloads)
    ke = fields[Ptype.KE][0]
    peer_pub = ke[1 + ke[0] :]
    sa.nonce_peer = fields[Ptype.NONCE][0]
    sa._classical_keypair = crypto.kem_keygen(
        "X25519", seed_for(sa.entropy, "X25519", SeedOp.KEYGEN))
    shared = classical.x25519_shared(sa._classical_keypair.secret_bytes(), peer_pub)
    sa.nonce_local = sa.entropy.draw(NONCE_LEN)
    payloads = [
        (Ptype.SA, mine.to_string().encode()),
        (Ptype.KE, bytes([len(b"X25519")]) + b"X25519" + sa._classical_keypair.public_key),
        (Ptype.NONCE, sa.nonce_local),
    ]
    if sa.config.support_intermediate:
        payloads.append((Ptype.NOTIFY, bytes([len(N_INTERMEDIATE_SUPPORTED)])
                         + N_INTERMEDIATE_SUPPORTED.encode()))
    reply = IkeMessage(sa.spi_i, sa.spi_r, Exchange.IKE_SA_INIT, False, True, 0, payloads)
    blob = reply.encode()
    sa._first_message_octets = blob
    skeyseed = prf(sa.nonce_peer + sa.nonce_local, shared)
    sa.keys = derive_keyring(skeyseed, sa.nonce_peer, sa.nonce_local, sa.spi_i, sa.spi_r)
    both = sa.config.support_intermediate and sa.peer_supports_intermediate
    sa.phase = Phase.INTERMEDIATE if both else Phase.AUTH
    sa._log(Exchange.IKE_SA_INIT, "r->i", payloads, len(blob))
    return [blob]


def sa_init_finish(sa: IkeSa, response: bytes) -> None:
    """Initiator: consume the SA_INIT response."""
    assert sa.initiator
    msg = IkeMessage.decode(response)
    sa._log(Exchange.IKE_SA_INIT, "r->i", msg.payloads, len(response))
    for tag, value in msg.payloads:
        if tag == Ptype.NOTIFY and _parse_notify(value)[0] == N_NO_PROPOSAL_CHOSEN:
            sa.failure = NoProposalChosen("responder rejected every proposal")
            sa.phase = Phase.CLOSED
            raise sa.failure
    sa.spi_r = msg.spi_r
    sa._peer_first_octets = response
    fields = {}
    for tag, value in msg.payloads:
        fields.setdefault(tag, []).append(value)
    ke = fields[Ptype.KE][0]
    peer_pub = ke[1 + ke[0] :]
    sa.nonce_peer = fields[Ptype.NONCE][0]
    sa.peer_supports_intermediate = any(
        tag == Ptype.NOTIFY and _parse_notify(v)[0] == N_INTERMEDIATE_SUPPORTED
        for tag, v in msg.payloads)
    shared = classical.x25519_shared(sa._classical_keypair.secret_bytes(), peer_pub)
    skeyseed = prf(sa.nonce_local + sa.nonce_peer, shared)
    sa.keys = derive_keyring(skeyseed, sa.nonce_local, sa.nonce_peer, sa.spi_i, sa.spi_r)
    both = sa.config.support_intermediate and sa.peer_supports_intermediate
    sa.phase = Phase.INTERMEDIATE if both else Phase.AUTH
    sa.message_id = 1


def _ni_nr(sa: IkeSa) -> tuple[bytes, bytes]:
    return ((sa.nonce_local, sa.nonce_peer) if sa.initiator
            else (sa.nonce_peer, sa.nonce_local))


def intermediate_request(sa: IkeSa) -> list[bytes]:
    """Initiator: encrypted IKE_INTERMEDIATE carrying the ML-KEM-768 public key."""
    assert sa.initiator and sa.phase is Phase.INTERMEDIATE
    kem = sa.config.proposal.intermediate_kem or "ML-KEM-768"
    sa._kem_keypair = crypto.kem_keygen(kem, seed_for(sa.entropy, kem, SeedOp.KEYGEN))
    name = kem.encode()
    payloads = [(Ptype.KE, bytes([len(name)]) + name + sa._kem_keypair.public_key)]
    return _send_encrypted(sa, Exchange.IKE_INTERMEDIATE, payloads, sa.message_id)


def intermediate_respond(sa: IkeSa, messages: list[bytes]) -> list[bytes]:
    """Responder: encapsulate to the offered key and fold the secret in."""
    assert not sa.initiator and sa.phase is Phase.INTERMEDIATE
    msg, payloads = _recv_encrypted(sa, messages)
    (ke_value,) = [v for t, v in payloads if t == Ptype.KE]
    kem = ke_value[1 : 1 + ke_value[0]].decode()
    peer_pub = ke_value[1 + ke_value[0] :]
    ct, ss = crypto.kem_encaps(kem, peer_pub, seed_for(sa.entropy, kem, SeedOp.ENCAPS))
    name = kem.encode()
    reply = _send_encrypted(sa, Exchange.IKE_INTERMEDIATE,
                            [(Ptype.KEM_CT, bytes([len(name)]) + name + ct)],
                            msg.message_id, response=True)
    ni, nr = _ni_nr(sa)
    skeyseed = fold_kem_secret(sa.keys.sk_d, ss, ni, nr)
    sa.keys = derive_keyring(skeyseed, ni, nr, sa.spi_i, sa.spi_r)
    sa.phase = Phase.AUTH
    return reply


def intermediate_finish(sa: IkeSa, messages: list[bytes]) -> None:
    """Initiator: decapsulate and fold the KEM secret into the keyring."""
    assert sa.initiator
    _, payloads = _recv_encrypted(sa, messages)
    (ct_value,) = [v for t, v in payloads if t == Ptype.KEM_CT]
    kem = ct_value[1 : 1 + ct_value[0]].decode()
    ct = ct_value[1 + ct_value[0] :]
    ss = crypto.kem_decaps(kem, sa._kem_keypair.secret_bytes(), ct)
    ni, nr = _ni_nr(sa)
    skeyseed = fold_kem_secret(sa.keys.sk_d, ss, ni, nr)
    sa.keys = derive_keyring(skeyseed, ni, nr, sa.spi_i, sa.spi_r)
    sa.phase = Phase.AUTH
    sa.message_id += 1


def _child_spis(sa: IkeSa) -> tuple[bytes, bytes]:
    spi_i = prf(sa.keys.sk_d, b"child-spi-i")[:4]
    spi_r = prf(sa.keys.sk_d, b"child-spi-r")[:4]
    return spi_i, spi_r


def _build_child(sa: IkeSa, sk_d: bytes, ni: bytes, nr: bytes, proposal: Proposal,
                 ss_kem: bytes | None = None) -> ChildSa:
    key_i, key_r = derive_child_keymat(sk_d, ni, nr, ss_kem)
    spi_i, spi_r = _child_spis(sa)
    if sa.initiator:
        return ChildSa(spi_i, spi_r, key_r, key_i, sa.config.traffic_selector,
                       sa.config.traffic_selector, proposal)
    return ChildSa(spi_r, spi_i, key_i, key_r, sa.config.traffic_selector,
                   sa.config.traffic_selector, proposal)


def _verify_peer_auth(sa: IkeSa, payloads: list, now: float, initiator_side: bool) -> None:
    fields = {}
    for tag, value in payloads:
        fields.setdefault(tag, []).append(value)
    ident = fields[Ptype.IDENT][0].decode()
    chain = decode_chain(fields[Ptype.CERT][0])
    verdict = verify_chain(chain, sa.config.trust_anchor, at_time=now,
                           leaf_usage=KeyUsage.TLS_AUTH)
    if not verdict.accepted:
        raise AuthenticationFailed(f"peer chain rejected: {verdict.reason}")
    sa.peer_identity = ident
    octets = (sa._peer_first_octets + sa.nonce_local
              + prf(sa.keys.sk_a, ident.encode()))
    context = CTX_AUTH_INITIATOR if initiator_side else CTX_AUTH_RESPONDER
    leaf = chain[0]
    if not composite_verify(profile_for(leaf.spki.profile_name), leaf.spki.public_key,
                            octets, context, fields[Ptype.AUTH][0]):
        raise AuthenticationFailed("peer AUTH signature rejected")


def _own_auth(sa: IkeSa, context: bytes) -> bytes:
    octets = (sa._first_message_octets + sa.nonce_peer
              + prf(sa.keys.sk_a, sa.config.name.encode()))
    return composite_sign(sa.config.private_key.profile, sa.config.private_key,
                          octets, context)


def auth_request(sa: IkeSa, now: float = 0.0) -> list[bytes]:
    """Initiator: encrypted IKE_AUTH with identity, chain, AUTH, ESP proposal."""
    assert sa.initiator and sa.phase is Phase.AUTH
    if sa.config.pq_policy:
        check_pq_policy(sa.config.esp_proposal)
    payloads = [
        (Ptype.IDENT, sa.config.name.encode()),
        (Ptype.CERT, encode_chain(sa.config.chain)),
        (Ptype.AUTH, _own_auth(sa, CTX_AUTH_INITIATOR)),
        (Ptype.SA, sa.config.esp_proposal.to_string().encode()),
        (Ptype.TS_I, sa.config.traffic_selector.encode()),
        (Ptype.TS_R, sa.config.traffic_selector.encode()),
    ]
    if sa.config.use_ppk:
        if sa.config.ppk is None:
            raise UnknownPpkId("use_ppk set but no PPK provisioned")
        payloads.append((Ptype.NOTIFY, bytes([len(N_PPK_IDENTITY)]) + N_PPK_IDENTITY.encode()
                         + sa.config.ppk.ppk_id.encode()))
    return _send_encrypted(sa, Exchange.IKE_AUTH, payloads, sa.message_id)


def auth_respond(sa: IkeSa, messages: list[bytes], now: float = 0.0) -> list[bytes]:
    """Responder: authenticate the peer, mix the PPK, establish the first child SA."""
    assert not sa.initiator and sa.phase is Phase.AUTH
    msg, payloads = _recv_encrypted(sa, messages)
    _verify_peer_auth(sa, payloads, now, initiator_side=True)

    esp = parse_proposal_string(
        [v for t, v in payloads if t == Ptype.SA][0].decode())
    if sa.config.pq_policy:
        check_pq_policy(esp)

    ppk_id = None
    for tag, value in payloads:
        if tag == Ptype.NOTIFY:
            name, extra = _parse_notify(value)
            if name == N_PPK_IDENTITY:
                ppk_id = extra.decode()
    reply_payloads = [
        (Ptype.IDENT, sa.config.name.encode()),
        (Ptype.CERT, encode_chain(sa.config.chain)),
        (Ptype.AUTH, _own_auth(sa, CTX_AUTH_RESPONDER)),
        (Ptype.SA, esp.to_string().encode()),
        (Ptype.TS_I, [v for t, v in payloads if t == Ptype.TS_I][0]),
        (Ptype.TS_R, [v for t, v in payloads if t == Ptype.TS_R][0]),
    ]
    sa.sk_d_base = sa.keys.sk_d
    if ppk_id is not None:
        entry = sa.config.ppk_store.get(ppk_id)
        if entry is None:
            sa.failure = UnknownPpkId(f"no PPK provisioned for id {ppk_id!r}")
            sa.phase = Phase.CLOSED
            err = _send_encrypted(sa, Exchange.IKE_AUTH,
                                  [(Ptype.NOTIFY, bytes([len(N_UNKNOWN_PPK)])
                                    + N_UNKNOWN_PPK.encode())],
                                  msg.message_id, response=True)
            return err
        sa.keys.sk_d = mix_ppk(entry.ppk, sa.keys.sk_d)
        reply_payloads.append((Ptype.NOTIFY,
                               bytes([len(N_PPK_IDENTITY)]) + N_PPK_IDENTITY.encode()))
    reply = _send_encrypted(sa, Exchange.IKE_AUTH, reply_payloads, msg.message_id,
                            response=True)
    ni, nr = _ni_nr(sa)
    sa.child_sa = _build_child(sa, sa.keys.sk_d, ni, nr, esp)
    sa.phase = Phase.ESTABLISHED
    return reply


def auth_finish(sa: IkeSa, messages: list[bytes], now: float = 0.0) -> None:
    """Initiator: verify the responder and cut the first child SA."""
    assert sa.initiator
    _, payloads = _recv_encrypted(sa, messages)
    for tag, value in payloads:
        if tag == Ptype.NOTIFY:
            name, _ = _parse_notify(value)
            if name == N_UNKNOWN_PPK:
                sa.failure = UnknownPpkId("responder does not know our PPK id")
                sa.phase = Phase.CLOSED
                raise sa.failure
            if name == N_AUTH_FAILED:
                sa.failure = AuthenticationFailed("responder rejected our AUTH")
                sa.phase = Phase.CLOSED
                raise sa.failure
    _verify_peer_auth(sa, payloads, now, initiator_side=False)
    esp = parse_proposal_string([v for t, v in payloads if t == Ptype.SA][0].decode())
    sa.sk_d_base = sa.keys.sk_d
    if sa.config.use_ppk:
        sa.keys.sk_d = mix_ppk(sa.config.ppk.ppk, sa.keys.sk_d)
    ni, nr = _ni_nr(sa)
    sa.child_sa = _build_child(sa, sa.keys.sk_d, ni, nr, esp)
    sa.phase = Phase.ESTABLISHED
    sa.message_id += 1


def rekey_request(sa: IkeSa, with_kem: str | None = None) -> list[bytes]:
    """Initiator: CREATE_CHILD_SA with a fresh nonce and optional extra KEM."""
    assert sa.initiator and sa.phase is Phase.ESTABLISHED
    sa._rekey_nonce = sa.entropy.draw(NONCE_LEN)
    payloads = [
        (Ptype.SA, sa.config.esp_proposal.to_string().encode()),
        (Ptype.NONCE, sa._rekey_nonce),
        (Ptype.TS_I, sa.config.traffic_selector.encode()),
        (Ptype.TS_R, sa.config.traffic_selector.encode()),
    ]
    if with_kem:
        sa._kem_keypair = crypto.kem_keygen(
            with_kem, seed_for(sa.entropy, with_kem, SeedOp.KEYGEN))
        name = with_kem.encode()
        payloads.insert(2, (Ptype.KE, bytes([len(name)]) + name + sa._kem_keypair.public_key))
    return _send_encrypted(sa, Exchange.CREATE_CHILD_SA, payloads, sa.message_id)


def rekey_respond(sa: IkeSa, messages: list[bytes]) -> list[bytes]:
    assert not sa.initiator and sa.phase is Phase.ESTABLISHED
    msg, payloads = _recv_encrypted(sa, messages)
    esp = parse_proposal_string([v for t, v in payloads if t == Ptype.SA][0].decode())
    if sa.config.pq_policy:
        try:
            check_pq_policy(esp)
        except NoProposalChosen as exc:
            sa.failure = exc
            return _send_encrypted(sa, Exchange.CREATE_CHILD_SA,
                                   [(Ptype.NOTIFY, bytes([len(N_NO_PROPOSAL_CHOSEN)])
                                     + N_NO_PROPOSAL_CHOSEN.encode())],
                                   msg.message_id, response=True)
    peer_nonce = [v for t, v in payloads if t == Ptype.NONCE][0]
    ke = [v for t, v in payloads if t == Ptype.KE]
    local_nonce = sa.entropy.draw(NONCE_LEN)
    reply_payloads = [
        (Ptype.SA, esp.to_string().encode()),
        (Ptype.NONCE, local_nonce),
        (Ptype.TS_I, [v for t, v in payloads if t == Ptype.TS_I][0]),
        (Ptype.TS_R, [v for t, v in payloads if t == Ptype.TS_R][0]),
    ]
    ss = None
    if ke:
        kem = ke[0][1 : 1 + ke[0][0]].decode()
        peer_pub = ke[0][1 + ke[0][0] :]
        ct, ss = crypto.kem_encaps(kem, peer_pub, seed_for(sa.entropy, kem, SeedOp.ENCAPS))
        name = kem.encode()
        reply_payloads.insert(2, (Ptype.KEM_CT, bytes([len(name)]) + name + ct))
    reply = _send_encrypted(sa, Exchange.CREATE_CHILD_SA, reply_payloads,
                            msg.message_id, response=True)
    sa.child_sa = _build_child(sa, sa.keys.sk_d, peer_nonce, local_nonce, esp, ss)
    return reply


def rekey_finish(sa: IkeSa, messages: list[bytes]) -> ChildSa:
    assert sa.initiator
    _, payloads = _recv_encrypted(sa, messages)
    for tag, value in payloads:
        if tag == Ptype.NOTIFY and _parse_notify(value)[0] == N_NO_PROPOSAL_CHOSEN:
            sa.failure = NoProposalChosen("responder rejected the rekey proposal")
            raise sa.failure
    esp = parse_proposal_string([v for t, v in payloads if t == Ptype.SA][0].decode())
    peer_nonce = [v for t, v in payloads if t == Ptype.NONCE][0]
    ct_vals = [v for t, v in payloads if t == Ptype.KEM_CT]
    ss = None
    if ct_vals:
        kem = ct_vals[0][1 : 1 + ct_vals[0][0]].decode()
        ct = ct_vals[0][1 + ct_vals[0][0] :]
        ss = crypto.kem_decaps(kem, sa._kem_keypair.secret_bytes(), ct)
    sa.child_sa = _build_child(sa, sa.keys.sk_d, sa._rekey_nonce, peer_nonce, esp, ss)
    sa.message_id += 1
    return sa.child_sa


def delete_request(sa: IkeSa) -> list[bytes]:
    """Either side: INFORMATIONAL delete; idempotent once closed."""
    if sa.phase is Phase.CLOSED:
        return []
    msgs = _send_encrypted(sa, Exchange.INFORMATIONAL,
                           [(Ptype.DELETE, b"ike")], sa.message_id)
    return msgs


def delete_respond(sa: IkeSa, messages: list[bytes]) -> list[bytes]:
    if sa.phase is Phase.CLOSED:
        return []
    msg, _ = _recv_encrypted(sa, messages)
    reply = _send_encrypted(sa, Exchange.INFORMATIONAL,
                            [(Ptype.DELETE, b"ack")], msg.message_id, response=True)
    _teardown(sa)
    return reply


def delete_finish(sa: IkeSa, messages: list[bytes]) -> None:
    if sa.phase is Phase.CLOSED:
        return
    _recv_encrypted(sa, messages)
    _teardown(sa)


def _teardown(sa: IkeSa) -> None:
    if sa.child_sa is not None:
        sa.child_sa.zeroize()
    if sa.keys is not None:
        sa.keys = Keyring(bytes(SK_D_LEN), bytes(SK_A_LEN), bytes(SK_E_LEN), bytes(SK_E_LEN))
    sa.phase = Phase.CLOSED


def run_handshake(initiator: IkeSa, responder: IkeSa, now: float = 0.0) -> None:
    """Drive both SAs through the full exchange sequence in memory."""
    resp = sa_init_respond(responder, sa_init(initiator, now)[0], now)
    sa_init_finish(initiator, resp[0])
    if initiator.phase is Phase.INTERMEDIATE and responder.phase is Phase.INTERMEDIATE:
        reply = intermediate_respond(responder, intermediate_request(initiator))
        intermediate_finish(initiator, reply)
    reply = auth_respond(responder, auth_request(initiator, now), now)
    auth_finish(initiator, reply, now)


class IkeDriver:
    """Datagram adapter with retransmission for running an SA over netsim."""

    RTO_INITIAL = 400.0
    RTO_MAX = 3000.0
    MAX_RETRIES = 8

    def __init__(self, sa: IkeSa):
        self.sa = sa
        self._pending_request: list[bytes] = []
        self._response_cache: dict[int, list[bytes]] = {}
        self._rx: dict[int, list[bytes]] = {}
        self._rto = self.RTO_INITIAL
        self._deadline: float | None = None
        self._retries = 0
        self.retransmit_count = 0
        self.failure: Exception | None = None

    @property
    def established(self) -> bool:
        return self.sa.phase is Phase.ESTABLISHED

    @property
    def failed(self) -> bool:
        return self.failure is not None or self.sa.failure is not None

    def start(self, now: float) -> list[bytes]:
        if not self.sa.initiator:
            return []
        self._pending_request = sa_init(self.sa, now)
        self._arm(now)
        return list(self._pending_request)

    def _arm(self, now: float) -> None:
        self._rto = self.RTO_INITIAL
        self._retries = 0
        self._deadline = now + self._rto

    def poll(self, now: float) -> list[bytes]:
        if (self.failed or self.established or not self._pending_request
                or self._deadline is None or now < self._deadline):
            return []
        self._retries += 1
        if self._retries > self.MAX_RETRIES:
            self.failure = PqoranError("IKE exchange timed out")
            return []
        self._rto = min(self._rto * 2, self.RTO_MAX)
        self._deadline = now + self._rto
        self.retransmit_count += len(self._pending_request)
        return list(self._pending_request)

    def next_wakeup(self) -> float | None:
        if self.failed or self.established or not self._pending_request:
            return None
        return self._deadline

    def _expected_fragments(self, messages: list[bytes]) -> bool:
        first = IkeMessage.decode(messages[0])
        for tag, value in first.payloads:
            if tag == Ptype.SKF:
                total = int.from_bytes(value[2:4], "big")
                seen = set()
                for blob in messages:
                    for t2, v2 in IkeMessage.decode(blob).payloads:
                        if t2 == Ptype.SKF:
                            seen.add(int.from_bytes(v2[:2], "big"))
                return len(seen) == total
        return True

    def receive(self, data: bytes, now: float) -> list[bytes]:
        if self.failed:
            return []
        try:
            msg = IkeMessage.decode(data)
        except PqoranError:
            return []
        bucket = self._rx.setdefault((msg.message_id, msg.response), [])
        if data not in bucket:
            bucket.append(data)
        if not self._expected_fragments(bucket):
            return []
        messages = list(bucket)
        del self._rx[(msg.message_id, msg.response)]
        try:
            if self.sa.initiator:
                return self._advance_initiator(msg, messages, now)
            return self._advance_responder(msg, messages, now)
        except PqoranError as exc:
            self.failure = exc
            return []

    def _advance_initiator(self, msg: IkeMessage, messages: list[bytes],
                           now: float) -> list[bytes]:
        sa = self.sa
        if not msg.response:
            return []
        if msg.exchange == Exchange.IKE_SA_INIT and sa.phase is Phase.INIT:
            sa_init_finish(sa, messages[0])
            if sa.phase is Phase.INTERMEDIATE:
                self._pending_request = intermediate_request(sa)
            else:
                self._pending_request = auth_request(sa, now)
            self._arm(now)
            return list(self._pending_request)
        if msg.exchange == Exchange.IKE_INTERMEDIATE and sa.phase is Phase.INTERMEDIATE:
            intermediate_finish(sa, messages)
            self._pending_request = auth_request(sa, now)
            self._arm(now)
            return list(self._pending_request)
        if msg.exchange == Exchange.IKE_AUTH and sa.phase is Phase.AUTH:
            auth_finish(sa, messages, now)
            self._pending_request = []
            self._deadline = None
            return []
        return []

    def _advance_responder(self, msg: IkeMessage, messages: list[bytes],
                           now: float) -> list[bytes]:
        sa = self.sa
        if msg.response:
            return []
        cached = self._response_cache.get(msg.message_id)
        if cached is not None:
            return list(cached)
        if msg.exchange == Exchange.IKE_SA_INIT and sa.phase is Phase.INIT:
            reply = sa_init_respond(sa, messages[0], now)
        elif msg.exchange == Exchange.IKE_INTERMEDIATE and sa.phase is Phase.INTERMEDIATE:
            reply = intermediate_respond(sa, messages)
        elif msg.exchange == Exchange.IKE_AUTH and sa.phase is Phase.AUTH:
            reply = auth_respond(sa, messages, now)
        else:
            return []
        self._response_cache[msg.message_id] = reply
        if sa.failure is not None:
            self.failure = sa.failure
        return list(reply)
