"""Composite-signed token service: issuance under scope policy, JWKS
publication with key rotation, and resource-side validation.

Tokens are compact JWTs (base64url JSON segments); the third segment is the
length-prefixed composite signature over ``b64(header) . b64(claims)``, so a
token validates only when both the classical and the post-quantum component
signatures check out.  Policy is deny-by-default.  All timestamps are
simulation milliseconds; validation allows 30 simulated seconds of skew.
"""

from __future__ import annotations

import base64
import enum
import json
from dataclasses import dataclass, field

from .entropy import EntropySource, SeedOp, seed_for
from .errors import ScopeDenied, TtlTooLong
from .hybrid import (
    CompositeKeyPair,
    composite_keygen,
    composite_sign,
    composite_verify,
    decode_composite_signature,
    profile_for,
)

MAX_TTL_MS = 3_600_000          # one simulated hour
KID_VALIDITY_MS = 30 * 86_400_000  # 30 simulated days
CLOCK_SKEW_MS = 30_000


class RejectReason(enum.Enum):
    UNKNOWN_KID = "UnknownKid"
    BAD_SIGNATURE = "BadSignature"
    EXPIRED = "Expired"
    AUDIENCE_MISMATCH = "AudienceMismatch"
    SCOPE_MISSING = "ScopeMissing"
    MALFORMED = "Malformed"


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode()


def _unb64(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + pad)


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class _SigningKey:
    kid: str
    keypair: CompositeKeyPair
    not_after: int


@dataclass
class AsState:
    """Authorization-server state: signing keys, policy table, issuer name."""

    issuer: str
    entropy: EntropySource
    profile_name: str = "Ed448-ML-DSA-65"
    policy: dict = field(default_factory=dict)  # client subject -> set of scopes
    keys: dict = field(default_factory=dict)    # kid -> _SigningKey
    active_kid: str = ""
    _kid_counter: int = 0


def as_init(entropy: EntropySource, issuer: str, policy: dict | None = None,
            profile_name: str = "Ed448-ML-DSA-65", now: int = 0) -> AsState:
    state = AsState(issuer=issuer, entropy=entropy, profile_name=profile_name,
                    policy={k: set(v) for k, v in (policy or {}).items()})
    rotate_as_key(state, now)
    return state


def rotate_as_key(state: AsState, now: int = 0) -> str:
    """Activate a fresh composite keypair; older kids stay valid for validation."""
    profile = profile_for(state.profile_name)
    seed = seed_for(state.entropy, profile.profile_name, SeedOp.KEYGEN)
    state._kid_counter += 1
    kid = f"{state.issuer}-k{state._kid_counter}"
    state.keys[kid] = _SigningKey(kid, composite_keygen(profile, seed),
                                  now + KID_VALIDITY_MS)
    state.active_kid = kid
    return kid


def jwks(state: AsState, now: int = 0) -> dict:
    """Published verification keys; expired kids are omitted."""
    return {
        "keys": [
            {
                "kid": key.kid,
                "profile_name": state.profile_name,
                "public_key": _b64(key.keypair.public_key),
                "not_after": key.not_after,
            }
            for key in state.keys.values()
            if key.not_after > now
        ]
    }


def issue_token(state: AsState, authenticated_client: str, requested_scopes: list[str],
                aud: str, ttl_ms: int, now: int = 0) -> str:
    if ttl_ms > MAX_TTL_MS:
        raise TtlTooLong(f"ttl {ttl_ms} ms exceeds the {MAX_TTL_MS} ms ceiling")
    allowed = state.policy.get(authenticated_client, set())
    denied = [s for s in requested_scopes if s not in allowed]
    if denied or not requested_scopes:
        raise ScopeDenied(
            f"client {authenticated_client!r} may not obtain scopes {denied or requested_scopes}")
    key = state.keys[state.active_kid]
    header = {"alg": state.profile_name, "kid": key.kid, "typ": "JWT"}
    claims = {
        "iss": state.issuer,
        "sub": authenticated_client,
        "aud": aud,
        "exp": now + ttl_ms,
        "iat": now,
        "scope": " ".join(requested_scopes),
    }
    signing_input = _b64(_json_bytes(header)) + "." + _b64(_json_bytes(claims))
    profile = profile_for(state.profile_name)
    signature = composite_sign(profile, key.keypair, signing_input.encode(), b"")
    return signing_input + "." + _b64(signature)


@dataclass(frozen=True)
class ResourceConfig:
    audience: str
    required_scope: str


@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    claims: dict | None = None
    reason: RejectReason | None = None

    def __bool__(self) -> bool:
        return self.accepted


def validate_token(resource: ResourceConfig, token: str, now: int,
                   jwks_doc: dict) -> ValidationResult:
    """Accept iff kid resolves, both signature components verify, the token is
    inside its validity window, the audience matches, and the scope covers the
    requested action."""
    try:
        header_b64, claims_b64, sig_b64 = token.split(".")
        header = json.loads(_unb64(header_b64))
        claims = json.loads(_unb64(claims_b64))
        signature = _unb64(sig_b64)
    except (ValueError, json.JSONDecodeError):
        return ValidationResult(False, None, RejectReason.MALFORMED)

    entry = next((k for k in jwks_doc.get("keys", []) if k.get("kid") == header.get("kid")),
                 None)
    if entry is None or entry.get("not_after", 0) <= now:
        return ValidationResult(False, None, RejectReason.UNKNOWN_KID)
    try:
        profile = profile_for(entry["profile_name"])
        public_key = _unb64(entry["public_key"])
        signing_input = (header_b64 + "." + claims_b64).encode()
        decode_composite_signature(signature)  # structural check first
        ok = composite_verify(profile, public_key, signing_input, b"", signature)
    except Exception:
        return ValidationResult(False, None, RejectReason.BAD_SIGNATURE)
    if not ok:
        return ValidationResult(False, None, RejectReason.BAD_SIGNATURE)
    if now >= claims.get("exp", 0) + CLOCK_SKEW_MS:
        return ValidationResult(False, None, RejectReason.EXPIRED)
    if claims.get("iat", 0) > now + CLOCK_SKEW_MS:
        return ValidationResult(False, None, RejectReason.EXPIRED)
    if claims.get("aud") != resource.audience:
        return ValidationResult(False, None, RejectReason.AUDIENCE_MISMATCH)
    scopes = set(claims.get("scope", "").split())
    if resource.required_scope not in scopes:
        return ValidationResult(False, None, RejectReason.SCOPE_MISSING)
    return ValidationResult(True, claims, None)
