"""Exception hierarchy shared across the toolkit."""


class PqoranError(Exception):
    """Base class for every error raised by this package."""


# --- crypto primitives ---

class UnknownAlgorithm(PqoranError):
    pass


class BadSeedLength(PqoranError):
    pass


class BadKeyLength(PqoranError):
    pass


class BadCiphertextLength(PqoranError):
    pass


class ContextTooLong(PqoranError):
    pass


class AuthenticationFailure(PqoranError):
    """AEAD open failed: tampered ciphertext, tag, or associated data."""


class NonceBudgetExceeded(PqoranError):
    pass


class LengthTooLarge(PqoranError):
    pass


class SuitePolicyError(PqoranError):
    """Suite construction violated the 256-bit AEAD policy."""


class MalformedEncoding(PqoranError):
    pass


class SizeSchemeRejected(PqoranError):
    """The size-parameterized test signature scheme was used outside comparison mode."""


# --- entropy ---

class SourcePoisoned(PqoranError):
    pass


class DrawTooLarge(PqoranError):
    pass


class NoSeedSpec(PqoranError):
    pass


class WindowTooSmall(PqoranError):
    pass


class FixedSourceForbidden(PqoranError):
    """FIXED_TEST sources require the test-build environment flag."""


# --- pki ---

class ValidityOutOfRange(PqoranError):
    pass


class UsageNotPermitted(PqoranError):
    pass


class UnknownSerial(PqoranError):
    pass


class RenewalTooEarly(PqoranError):
    pass


# --- secure channel ---

class ConfigInconsistent(PqoranError):
    pass


class NegotiationFailure(PqoranError):
    pass


class CertificateRejected(PqoranError):
    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else str(reason))
        self.reason = reason


class FinishedMismatch(PqoranError):
    pass


class HandshakeTimeout(PqoranError):
    pass


class MalformedFragment(PqoranError):
    pass


class EpochTooOld(PqoranError):
    pass


class CodecUnavailable(PqoranError):
    pass


# --- ike ---

class NoProposalChosen(PqoranError):
    pass


class FragmentationNotAllowed(PqoranError):
    pass


class AuthenticationFailed(PqoranError):
    """IKE AUTH payload or peer certificate rejected."""


class UnknownPpkId(PqoranError):
    pass


class SaClosed(PqoranError):
    pass


class DecapsulationStructureError(PqoranError):
    pass


# --- authz ---

class ScopeDenied(PqoranError):
    pass


class TtlTooLong(PqoranError):
    pass


# --- netsim / harness ---

class UnknownInterface(PqoranError):
    pass


class DanglingEndpoint(PqoranError):
    pass


class TimeLimitExceeded(PqoranError):
    pass


class ConfigInvalid(PqoranError):
    pass


class MissingSuite(PqoranError):
    pass
