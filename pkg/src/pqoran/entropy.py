"""Entropy sources, two-source mixing, seed dispensing, and online health tests.

Three source kinds are modeled: QRNG_SIM is a seeded deterministic stream
standing in for quantum hardware (so simulations stay reproducible), OS pulls
from os.urandom, and FIXED_TEST replays a fixed pattern.  FIXED_TEST can only
be constructed when PQORAN_TEST_SOURCES is set in the environment, keeping it
out of production configurations.

A failed health test poisons its source; draws then raise until reset().
"""

from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass

from .errors import (
    DrawTooLarge,
    NoSeedSpec,
    SourcePoisoned,
    FixedSourceForbidden,
    WindowTooSmall,
)

MAX_DRAW = 1 << 20  # 1 MiB per call
TEST_SOURCE_ENV = "PQORAN_TEST_SOURCES"
DEFAULT_SOURCE_ENV = "PQORAN_ENTROPY"

MIX_LABEL = b"entropy-mix-v1"

# repetition-count / adaptive-proportion parameters, fixed for reproducibility
REPETITION_CUTOFF = 41
PROPORTION_WINDOW = 512
PROPORTION_CUTOFF = 256  # > 50% of a window fails
MIN_HEALTH_WINDOW = 1024


class SourceKind(enum.Enum):
    QRNG_SIM = "QRNG_SIM"
    OS = "OS"
    FIXED_TEST = "FIXED_TEST"


class EntropySource:
    """Single-owner byte source with a monotone draw counter."""

    def __init__(self, source_id: str, kind: SourceKind):
        self.source_id = source_id
        self.kind = kind
        self.draw_count = 0
        self.poisoned = False

    def _generate(self, n: int) -> bytes:
        raise NotImplementedError

    def draw(self, n: int) -> bytes:
        if self.poisoned:
            raise SourcePoisoned(f"source {self.source_id} failed a health test")
        if n > MAX_DRAW:
            raise DrawTooLarge(f"draw of {n} bytes exceeds the {MAX_DRAW}-byte cap")
        out = self._generate(n)
        self.draw_count += 1
        return out

    def poison(self) -> None:
        self.poisoned = True

    def reset(self) -> None:
        self.poisoned = False


class QrngSimSource(EntropySource):
    """Deterministic SHAKE256 counter stream labeled as quantum-sourced."""

    def __init__(self, source_id: str, seed: bytes):
        super().__init__(source_id, SourceKind.QRNG_SIM)
        self._seed = seed
        self._counter = 0

    def _generate(self, n: int) -> bytes:
        block = hashlib.shake_256(
            MIX_LABEL + b":qrng-sim:" + self._seed + self._counter.to_bytes(8, "big")
        ).digest(max(n, 1))
        self._counter += 1
        return block[:n]


class OsSource(EntropySource):
    def __init__(self, source_id: str = "os"):
        super().__init__(source_id, SourceKind.OS)

    def _generate(self, n: int) -> bytes:
        return os.urandom(n)


class FixedTestSource(EntropySource):
    """Repeats a fixed pattern; only constructible in test builds."""

    def __init__(self, source_id: str, pattern: bytes):
        if not os.environ.get(TEST_SOURCE_ENV):
            raise FixedSourceForbidden(
                f"FIXED_TEST sources need {TEST_SOURCE_ENV}=1 in the environment")
        if not pattern:
            raise ValueError("pattern must be non-empty")
        super().__init__(source_id, SourceKind.FIXED_TEST)
        self._pattern = pattern

    def _generate(self, n: int) -> bytes:
        reps = -(-n // len(self._pattern))
        return (self._pattern * reps)[:n]


def default_source(seed: bytes = b"") -> EntropySource:
    """Source picked by the PQORAN_ENTROPY environment variable (qrng-sim | os)."""
    kind = os.environ.get(DEFAULT_SOURCE_ENV, "qrng-sim").lower()
    if kind == "os":
        return OsSource()
    return QrngSimSource("qrng-sim", seed or b"pqoran-default")


def fixed_source_from_hex_file(path, source_id: str = "") -> FixedTestSource:
    """Load a FIXED_TEST fixture pattern from a hex file (whitespace ignored)."""
    text = "".join(open(path).read().split())
    return FixedTestSource(source_id or str(path), bytes.fromhex(text))


def mix_sources(a: EntropySource, b: EntropySource, n: int) -> bytes:
    """SHAKE256(label || draw(a,n) || draw(b,n)) truncated to n bytes."""
    if n == 0:
        a.draw(0)
        b.draw(0)
        return b""
    return hashlib.shake_256(MIX_LABEL + a.draw(n) + b.draw(n)).digest(n)


# --- per-algorithm seed dispensing -------------------------------------------

class SeedOp(enum.Enum):
    KEYGEN = "KEYGEN"
    ENCAPS = "ENCAPS"
    SIGN = "SIGN"


@dataclass(frozen=True)
class SeedSpec:
    algorithm: str
    operation: SeedOp
    seed_bytes: int


_SEED_TABLE = {
    ("ML-KEM-768", SeedOp.KEYGEN): 64,
    ("ML-KEM-768", SeedOp.ENCAPS): 32,
    ("ML-DSA-65", SeedOp.KEYGEN): 32,
    ("ML-DSA-65", SeedOp.SIGN): 32,
    ("X-Wing", SeedOp.KEYGEN): 32,
    ("X-Wing", SeedOp.ENCAPS): 32,
    ("Ed448-ML-DSA-65", SeedOp.KEYGEN): 57,
    ("Ed448-ML-DSA-65", SeedOp.SIGN): 32,
    # companions outside the four table rows, same per-operation accounting
    ("ML-KEM-512", SeedOp.KEYGEN): 64,
    ("ML-KEM-512", SeedOp.ENCAPS): 32,
    ("ML-KEM-1024", SeedOp.KEYGEN): 64,
    ("ML-KEM-1024", SeedOp.ENCAPS): 32,
    ("ML-DSA-44", SeedOp.KEYGEN): 32,
    ("ML-DSA-44", SeedOp.SIGN): 32,
    ("ML-DSA-87", SeedOp.KEYGEN): 32,
    ("ML-DSA-87", SeedOp.SIGN): 32,
    ("Ed25519-ML-DSA-65", SeedOp.KEYGEN): 32,
    ("Ed25519-ML-DSA-65", SeedOp.SIGN): 32,
    ("X25519", SeedOp.KEYGEN): 32,
    ("X25519", SeedOp.ENCAPS): 32,
    ("Ed448", SeedOp.KEYGEN): 57,
    ("Ed25519", SeedOp.KEYGEN): 32,
    ("AES-256-GCM", SeedOp.KEYGEN): 32,
}


def seed_spec(algorithm: str, operation: SeedOp) -> SeedSpec:
    try:
        n = _SEED_TABLE[(algorithm, operation)]
    except KeyError:
        raise NoSeedSpec(f"no seed defined for ({algorithm}, {operation.value})") from None
    return SeedSpec(algorithm, operation, n)


def seed_for(source: EntropySource, algorithm: str, operation: SeedOp) -> bytes:
    return source.draw(seed_spec(algorithm, operation).seed_bytes)


# --- health tests --------------------------------------------------------------

@dataclass(frozen=True)
class HealthReport:
    repetition_count_ok: bool
    adaptive_proportion_ok: bool
    window_bytes: int

    @property
    def ok(self) -> bool:
        return self.repetition_count_ok and self.adaptive_proportion_ok


def health_check(source: EntropySource, window: int) -> HealthReport:
    """Draw `window` bytes and run repetition-count + adaptive-proportion tests.

    Failure poisons the source until reset().
    """
    if window < MIN_HEALTH_WINDOW:
        raise WindowTooSmall(f"health window must be >= {MIN_HEALTH_WINDOW} bytes")
    data = source.draw(window)

    rep_ok = True
    run_val, run_len = -1, 0
    for byte in data:
        if byte == run_val:
            run_len += 1
            if run_len >= REPETITION_CUTOFF:
                rep_ok = False
                break
        else:
            run_val, run_len = byte, 1

    prop_ok = True
    for start in range(0, len(data) - PROPORTION_WINDOW + 1, PROPORTION_WINDOW):
        chunk = data[start : start + PROPORTION_WINDOW]
        counts = [0] * 256
        for byte in chunk:
            counts[byte] += 1
        if max(counts) > PROPORTION_CUTOFF:
            prop_ok = False
            break

    report = HealthReport(rep_ok, prop_ok, window)
    if not report.ok:
        source.poison()
    return report
