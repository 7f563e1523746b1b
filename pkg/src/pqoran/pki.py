"""Composite-signed certificate authority: issuance, chains, revocation, renewal.

Certificates use a deterministic TLV encoding (type: 1 byte, length: 3 bytes
big-endian, value) rather than ASN.1; stability and testability matter here,
wire compatibility with X.509 stacks does not.  All validity decisions take
the simulation clock as an argument; nothing reads wall time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import entropy as entropy_mod
from .errors import (
    MalformedEncoding,
    RenewalTooEarly,
    UnknownSerial,
    UsageNotPermitted,
    ValidityOutOfRange,
)
from .hybrid import (
    CompositeKeyPair,
    CompositeSigProfile,
    composite_keygen,
    composite_sign,
    composite_verify,
    profile_for,
)

MS_PER_DAY = 86_400_000
SERIAL_LEN = 16
ROOT_VALIDITY_DAYS = 3650
MAX_CA_VALIDITY_DAYS = 3650
LEAF_MIN_DAYS = 7
LEAF_MAX_DAYS = 90

SIGN_CONTEXT_CERT = b"cert-tbs"
SIGN_CONTEXT_CRL = b"crl-tbs"
SIGN_CONTEXT_STATUS = b"status-response"


class KeyUsage(enum.IntFlag):
    CA_SIGN = 1
    CRL_SIGN = 2
    TLS_AUTH = 4
    TOKEN_SIGN = 8


class ChainReject(enum.Enum):
    BAD_SIGNATURE = "BadSignature"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"
    REVOKED = "Revoked"
    USAGE_VIOLATION = "UsageViolation"
    UNKNOWN_ANCHOR = "UnknownAnchor"
    MALFORMED = "Malformed"


# --- TLV ---------------------------------------------------------------------

def tlv(tag: int, value: bytes) -> bytes:
    if len(value) >= 1 << 24:
        raise MalformedEncoding("TLV value too large")
    return bytes([tag]) + len(value).to_bytes(3, "big") + value


def tlv_iter(blob: bytes):
    pos = 0
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise MalformedEncoding("truncated TLV header")
        tag = blob[pos]
        length = int.from_bytes(blob[pos + 1 : pos + 4], "big")
        end = pos + 4 + length
        if end > len(blob):
            raise MalformedEncoding("truncated TLV value")
        yield tag, blob[pos + 4 : end]
        pos = end


def tlv_dict(blob: bytes) -> dict[int, bytes]:
    out = {}
    for tag, value in tlv_iter(blob):
        if tag in out:
            raise MalformedEncoding(f"duplicate TLV tag {tag:#x}")
        out[tag] = value
    return out


_T_SERIAL, _T_ISSUER, _T_SUBJECT, _T_NOT_BEFORE, _T_NOT_AFTER = 0x01, 0x02, 0x03, 0x04, 0x05
_T_SPKI, _T_USAGE, _T_EXTENSIONS = 0x06, 0x07, 0x08
_T_PROFILE, _T_PUBKEY, _T_EXT_OID, _T_EXT_VAL = 0x61, 0x62, 0x63, 0x64
_T_CERT_TBS, _T_SIGNATURE, _T_CRL_TBS, _T_STATUS_TBS = 0x10, 0x11, 0x20, 0x30
_T_THIS_UPDATE, _T_NEXT_UPDATE, _T_REVOKED = 0x21, 0x22, 0x23


# --- certificate -----------------------------------------------------------------

@dataclass(frozen=True)
class Spki:
    profile_name: str
    public_key: bytes

    def encode(self) -> bytes:
        return tlv(_T_PROFILE, self.profile_name.encode()) + tlv(_T_PUBKEY, self.public_key)

    @classmethod
    def decode(cls, blob: bytes) -> "Spki":
        fields = tlv_dict(blob)
        return cls(fields[_T_PROFILE].decode(), fields[_T_PUBKEY])

    @property
    def profile(self) -> CompositeSigProfile:
        return profile_for(self.profile_name)


@dataclass(frozen=True)
class Certificate:
    serial: bytes
    issuer: str
    subject: str
    not_before: int  # simulation ms
    not_after: int
    spki: Spki
    key_usage: KeyUsage
    extensions: tuple[tuple[str, bytes], ...] = ()
    signature: bytes = b""

    def tbs_bytes(self) -> bytes:
        ext = b"".join(tlv(_T_EXT_OID, oid.encode()) + tlv(_T_EXT_VAL, val)
                       for oid, val in self.extensions)
        return (
            tlv(_T_SERIAL, self.serial)
            + tlv(_T_ISSUER, self.issuer.encode())
            + tlv(_T_SUBJECT, self.subject.encode())
            + tlv(_T_NOT_BEFORE, self.not_before.to_bytes(8, "big"))
            + tlv(_T_NOT_AFTER, self.not_after.to_bytes(8, "big"))
            + tlv(_T_SPKI, self.spki.encode())
            + tlv(_T_USAGE, bytes([int(self.key_usage)]))
            + tlv(_T_EXTENSIONS, ext)
        )

    def encode(self) -> bytes:
        return tlv(_T_CERT_TBS, self.tbs_bytes()) + tlv(_T_SIGNATURE, self.signature)

    @classmethod
    def decode(cls, blob: bytes) -> "Certificate":
        try:
            outer = tlv_dict(blob)
            if _T_CERT_TBS not in outer or _T_SIGNATURE not in outer:
                raise MalformedEncoding("not a certificate")
            fields = tlv_dict(outer[_T_CERT_TBS])
            exts = []
            pending_oid = None
            for tag, value in tlv_iter(fields.get(_T_EXTENSIONS, b"")):
                if tag == _T_EXT_OID:
                    pending_oid = value.decode()
                elif tag == _T_EXT_VAL and pending_oid is not None:
                    exts.append((pending_oid, value))
                    pending_oid = None
            return cls(
                serial=fields[_T_SERIAL],
                issuer=fields[_T_ISSUER].decode(),
                subject=fields[_T_SUBJECT].decode(),
                not_before=int.from_bytes(fields[_T_NOT_BEFORE], "big"),
                not_after=int.from_bytes(fields[_T_NOT_AFTER], "big"),
                spki=Spki.decode(fields[_T_SPKI]),
                key_usage=KeyUsage(fields[_T_USAGE][0]),
                extensions=tuple(exts),
                signature=outer[_T_SIGNATURE],
            )
        except (KeyError, IndexError, ValueError, UnicodeDecodeError) as exc:
            raise MalformedEncoding(f"certificate structure invalid: {exc}") from exc

    def is_self_signed(self) -> bool:
        return self.issuer == self.subject

    def verify_signature(self, issuer_spki: Spki) -> bool:
        return composite_verify(issuer_spki.profile, issuer_spki.public_key,
                                self.tbs_bytes(), SIGN_CONTEXT_CERT, self.signature)


CertChain = list  # leaf first, root last


@dataclass(frozen=True)
class RevocationList:
    issuer: str
    this_update: int
    next_update: int
    revoked: tuple[tuple[bytes, str, int], ...]  # (serial, reason, time)
    signature: bytes = b""

    def tbs_bytes(self) -> bytes:
        entries = b"".join(
            serial + len(reason.encode()).to_bytes(1, "big") + reason.encode()
            + when.to_bytes(8, "big")
            for serial, reason, when in self.revoked
        )
        return (
            tlv(_T_ISSUER, self.issuer.encode())
            + tlv(_T_THIS_UPDATE, self.this_update.to_bytes(8, "big"))
            + tlv(_T_NEXT_UPDATE, self.next_update.to_bytes(8, "big"))
            + tlv(_T_REVOKED, entries)
        )

    def encode(self) -> bytes:
        return tlv(_T_CRL_TBS, self.tbs_bytes()) + tlv(_T_SIGNATURE, self.signature)

    def serials(self) -> frozenset[bytes]:
        return frozenset(serial for serial, _, _ in self.revoked)

    def verify_signature(self, issuer_spki: Spki) -> bool:
        return composite_verify(issuer_spki.profile, issuer_spki.public_key,
                                self.tbs_bytes(), SIGN_CONTEXT_CRL, self.signature)


@dataclass(frozen=True)
class RenewalPolicy:
    default_leaf_days: int = 7
    renewal_window_fraction: float = 0.2


class CertStatus(enum.Enum):
    GOOD = "GOOD"
    REVOKED = "REVOKED"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class StatusResponse:
    serial: bytes
    status: CertStatus
    produced_at: int
    responder: str
    signature: bytes

    def tbs_bytes(self) -> bytes:
        return (tlv(_T_SERIAL, self.serial)
                + tlv(_T_STATUS_TBS, self.status.value.encode())
                + tlv(_T_THIS_UPDATE, self.produced_at.to_bytes(8, "big"))
                + tlv(_T_ISSUER, self.responder.encode()))

    def verify_signature(self, responder_spki: Spki) -> bool:
        return composite_verify(responder_spki.profile, responder_spki.public_key,
                                self.tbs_bytes(), SIGN_CONTEXT_STATUS, self.signature)


@dataclass
class CaState:
    name: str
    keypair: CompositeKeyPair
    certificate: Certificate
    entropy: entropy_mod.EntropySource
    policy: RenewalPolicy = field(default_factory=RenewalPolicy)
    issued_serials: set = field(default_factory=set)
    issued_certs: dict = field(default_factory=dict)
    revoked: dict = field(default_factory=dict)  # serial -> (reason, time)
    crl_counter: int = 0

    @property
    def spki(self) -> Spki:
        return self.certificate.spki


# --- operations -----------------------------------------------------------------

def _new_serial(source: entropy_mod.EntropySource) -> bytes:
    return source.draw(SERIAL_LEN)


def _sign_cert(keypair: CompositeKeyPair, cert: Certificate) -> Certificate:
    sig = composite_sign(keypair.profile, keypair, cert.tbs_bytes(), SIGN_CONTEXT_CERT)
    return Certificate(**{**cert.__dict__, "signature": sig})


def ca_init(source: entropy_mod.EntropySource, profile_name: str, name: str,
            now: int = 0, policy: RenewalPolicy | None = None) -> CaState:
    """Create a self-signed root CA whose key comes from the entropy source."""
    profile = profile_for(profile_name)
    seed = entropy_mod.seed_for(source, profile.profile_name, entropy_mod.SeedOp.KEYGEN)
    keypair = composite_keygen(profile, seed)
    cert = Certificate(
        serial=_new_serial(source),
        issuer=name,
        subject=name,
        not_before=now,
        not_after=now + ROOT_VALIDITY_DAYS * MS_PER_DAY,
        spki=Spki(profile.profile_name, keypair.public_key),
        key_usage=KeyUsage.CA_SIGN | KeyUsage.CRL_SIGN,
    )
    ca = CaState(name=name, keypair=keypair, certificate=_sign_cert(keypair, cert),
                 entropy=source, policy=policy or RenewalPolicy())
    ca.issued_serials.add(ca.certificate.serial)
    ca.issued_certs[ca.certificate.serial] = ca.certificate
    return ca


def issue_cert(ca: CaState, subject: str, spki: Spki, usage: KeyUsage,
               validity_days: int, now: int,
               extensions: tuple[tuple[str, bytes], ...] = ()) -> Certificate:
    if not ca.certificate.key_usage & KeyUsage.CA_SIGN:
        raise UsageNotPermitted(f"{ca.name} holds no CA_SIGN usage")
    if usage & KeyUsage.CA_SIGN:
        if not 1 <= validity_days <= MAX_CA_VALIDITY_DAYS:
            raise ValidityOutOfRange(
                f"CA validity {validity_days}d outside [1, {MAX_CA_VALIDITY_DAYS}]")
    elif not LEAF_MIN_DAYS <= validity_days <= LEAF_MAX_DAYS:
        raise ValidityOutOfRange(
            f"leaf validity {validity_days}d outside [{LEAF_MIN_DAYS}, {LEAF_MAX_DAYS}]")
    cert = Certificate(
        serial=_new_serial(ca.entropy),
        issuer=ca.name,
        subject=subject,
        not_before=now,
        not_after=now + validity_days * MS_PER_DAY,
        spki=spki,
        key_usage=usage,
        extensions=extensions,
    )
    cert = _sign_cert(ca.keypair, cert)
    ca.issued_serials.add(cert.serial)
    ca.issued_certs[cert.serial] = cert
    return cert


@dataclass(frozen=True)
class ChainVerdict:
    accepted: bool
    reason: ChainReject | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def verify_chain(chain, trust_anchor: Certificate, at_time: int,
                 revocation_view=frozenset(), leaf_usage: KeyUsage | None = None,
                 sig_verifier=None) -> ChainVerdict:
    """Walk leaf -> root: signatures, windows, usage discipline, revocation.

    `sig_verifier(cert, issuer_spki) -> bool` may override the composite
    check (the harness plugs its size-study scheme in here).
    """
    if sig_verifier is None:
        sig_verifier = lambda cert, issuer_spki: cert.verify_signature(issuer_spki)
    if not chain:
        return ChainVerdict(False, ChainReject.MALFORMED, "empty chain")
    if isinstance(revocation_view, RevocationList):
        revocation_view = revocation_view.serials()
    root = chain[-1]
    if root.encode() != trust_anchor.encode():
        return ChainVerdict(False, ChainReject.UNKNOWN_ANCHOR,
                            "chain root does not match the trust anchor")
    if not root.is_self_signed():
        return ChainVerdict(False, ChainReject.UNKNOWN_ANCHOR, "root is not self-signed")
    for idx, cert in enumerate(chain):
        issuer_cert = chain[idx + 1] if idx + 1 < len(chain) else root
        if cert.issuer != issuer_cert.subject:
            return ChainVerdict(False, ChainReject.BAD_SIGNATURE,
                                f"issuer mismatch at depth {idx}")
        if idx + 1 < len(chain) and not issuer_cert.key_usage & KeyUsage.CA_SIGN:
            return ChainVerdict(False, ChainReject.USAGE_VIOLATION,
                                f"non-CA certificate signed depth {idx}")
        if idx > 0 and not cert.key_usage & KeyUsage.CA_SIGN:
            return ChainVerdict(False, ChainReject.USAGE_VIOLATION,
                                f"non-CA certificate at intermediate depth {idx}")
        if at_time < cert.not_before:
            return ChainVerdict(False, ChainReject.NOT_YET_VALID, cert.subject)
        if at_time >= cert.not_after:
            return ChainVerdict(False, ChainReject.EXPIRED, cert.subject)
        if cert.serial in revocation_view:
            return ChainVerdict(False, ChainReject.REVOKED, cert.subject)
        if not sig_verifier(cert, issuer_cert.spki):
            return ChainVerdict(False, ChainReject.BAD_SIGNATURE, cert.subject)
    if leaf_usage is not None and not chain[0].key_usage & leaf_usage:
        return ChainVerdict(False, ChainReject.USAGE_VIOLATION,
                            f"leaf lacks {leaf_usage.name}")
    return ChainVerdict(True)


def make_subordinate_ca(parent: CaState, name: str, now: int,
                        validity_days: int = 365,
                        profile_name: str | None = None) -> CaState:
    """Key a new CA and have `parent` certify it; returns the child's state."""
    profile = profile_for(profile_name or parent.keypair.profile.profile_name)
    seed = entropy_mod.seed_for(parent.entropy, profile.profile_name, entropy_mod.SeedOp.KEYGEN)
    keypair = composite_keygen(profile, seed)
    cert = issue_cert(
        parent, name, Spki(profile.profile_name, keypair.public_key),
        KeyUsage.CA_SIGN | KeyUsage.CRL_SIGN, validity_days, now)
    return CaState(name=name, keypair=keypair, certificate=cert,
                   entropy=parent.entropy, policy=parent.policy)


def revoke(ca: CaState, serial: bytes, reason: str, now: int = 0) -> RevocationList:
    if serial not in ca.issued_serials:
        raise UnknownSerial(f"serial {serial.hex()} was not issued by {ca.name}")
    if serial not in ca.revoked:
        ca.revoked[serial] = (reason, now)
    return current_crl(ca, now)


def current_crl(ca: CaState, now: int, validity_ms: int = MS_PER_DAY) -> RevocationList:
    if not ca.certificate.key_usage & KeyUsage.CRL_SIGN:
        raise UsageNotPermitted(f"{ca.name} holds no CRL_SIGN usage")
    ca.crl_counter += 1
    entries = tuple(sorted(
        ((serial, reason, when) for serial, (reason, when) in ca.revoked.items()),
        key=lambda e: e[0]))
    crl = RevocationList(issuer=ca.name, this_update=now, next_update=now + validity_ms,
                         revoked=entries)
    sig = composite_sign(ca.keypair.profile, ca.keypair, crl.tbs_bytes(), SIGN_CONTEXT_CRL)
    return RevocationList(**{**crl.__dict__, "signature": sig})


def renew(ca: CaState, certificate: Certificate, at_time: int) -> Certificate:
    """Reissue with a fresh serial and window; only inside the renewal window."""
    if certificate.serial not in ca.issued_serials:
        raise UnknownSerial("certificate was not issued by this CA")
    lifetime = certificate.not_after - certificate.not_before
    window_start = certificate.not_before + int(
        lifetime * (1 - ca.policy.renewal_window_fraction))
    if at_time < window_start:
        raise RenewalTooEarly(
            f"renewal opens at {window_start}, asked at {at_time}")
    fresh = Certificate(
        serial=_new_serial(ca.entropy),
        issuer=ca.name,
        subject=certificate.subject,
        not_before=at_time,
        not_after=at_time + lifetime,
        spki=certificate.spki,
        key_usage=certificate.key_usage,
        extensions=certificate.extensions,
    )
    fresh = _sign_cert(ca.keypair, fresh)
    ca.issued_serials.add(fresh.serial)
    ca.issued_certs[fresh.serial] = fresh
    return fresh


def status_query(responder: CaState, serial: bytes, at_time: int) -> StatusResponse:
    if serial in responder.revoked:
        status = CertStatus.REVOKED
    elif serial in responder.issued_serials:
        status = CertStatus.GOOD
    else:
        status = CertStatus.UNKNOWN
    unsigned = StatusResponse(serial, status, at_time, responder.name, b"")
    sig = composite_sign(responder.keypair.profile, responder.keypair,
                         unsigned.tbs_bytes(), SIGN_CONTEXT_STATUS)
    return StatusResponse(serial, status, at_time, responder.name, sig)
