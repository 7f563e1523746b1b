"""Entropy sources, mixing, seed dispensing, and health tests."""

import hashlib
import os

import pytest

from pqoran import entropy
from pqoran.entropy import (
    FixedTestSource,
    OsSource,
    QrngSimSource,
    SeedOp,
    health_check,
    mix_sources,
    seed_for,
    seed_spec,
)
from pqoran.errors import (
    DrawTooLarge,
    NoSeedSpec,
    SourcePoisoned,
    FixedSourceForbidden,
    WindowTooSmall,
)


def test_fixed_source_draw_and_counter():
    src = FixedTestSource("z", b"\x00")
    assert src.draw(4) == b"\x00\x00\x00\x00"
    assert src.draw_count == 1
    src.draw(0)
    assert src.draw_count == 2  # counter never decreases, counts every call


def test_fixed_source_requires_env(monkeypatch):
    monkeypatch.delenv(entropy.TEST_SOURCE_ENV, raising=False)
    with pytest.raises(FixedSourceForbidden):
        FixedTestSource("z", b"\x00")
    monkeypatch.setenv(entropy.TEST_SOURCE_ENV, "1")
    FixedTestSource("z", b"\x00")


def test_poisoned_source_rejects_until_reset():
    src = FixedTestSource("p", b"\x00")
    src.poison()
    with pytest.raises(SourcePoisoned):
        src.draw(1)
    src.reset()
    assert src.draw(1) == b"\x00"


def test_draw_cap():
    src = QrngSimSource("cap", b"s")
    with pytest.raises(DrawTooLarge):
        src.draw(entropy.MAX_DRAW + 1)


def test_os_source_draws_differ():
    src = OsSource()
    assert src.draw(32) != src.draw(32)


def test_qrng_sim_deterministic():
    a = QrngSimSource("q", b"seed")
    b = QrngSimSource("q", b"seed")
    assert [a.draw(16) for _ in range(3)] == [b.draw(16) for _ in range(3)]


# --- mixing ------------------------------------------------------------------------

def test_mix_fixed_zero_sources_matches_xof_oracle():
    a = FixedTestSource("a", b"\x00")
    b = FixedTestSource("b", b"\x00")
    out = mix_sources(a, b, 32)
    # independently recomputed: SHAKE256(label || 0^64) truncated to 32
    expected = hashlib.shake_256(entropy.MIX_LABEL + bytes(64)).digest(32)
    assert out == expected
    assert out.hex() == "ccef849357d39c316da8b16a3c0026398b4501acd8330be51af0362d01212af4"


def test_mix_is_order_sensitive_and_depends_on_both():
    a = FixedTestSource("a", b"\x01")
    b = FixedTestSource("b", b"\x02")
    ab = mix_sources(a, b, 32)
    ba = mix_sources(FixedTestSource("b", b"\x02"), FixedTestSource("a", b"\x01"), 32)
    assert ab != ba
    changed = mix_sources(FixedTestSource("a", b"\x01"), FixedTestSource("b", b"\x03"), 32)
    assert changed != ab


def test_mix_zero_length():
    a = FixedTestSource("a", b"\x01")
    b = FixedTestSource("b", b"\x02")
    assert mix_sources(a, b, 0) == b""


def test_mix_propagates_poison():
    a = FixedTestSource("a", b"\x01")
    b = FixedTestSource("b", b"\x02")
    a.poison()
    with pytest.raises(SourcePoisoned):
        mix_sources(a, b, 16)


# --- seed dispensing ------------------------------------------------------------------

@pytest.mark.parametrize("alg,op,expected", [
    ("ML-KEM-768", SeedOp.KEYGEN, 64),
    ("ML-KEM-768", SeedOp.ENCAPS, 32),
    ("ML-DSA-65", SeedOp.KEYGEN, 32),
    ("ML-DSA-65", SeedOp.SIGN, 32),
    ("X-Wing", SeedOp.KEYGEN, 32),
    ("X-Wing", SeedOp.ENCAPS, 32),
    ("Ed448-ML-DSA-65", SeedOp.KEYGEN, 57),
    ("Ed448-ML-DSA-65", SeedOp.SIGN, 32),
])
def test_seed_table(alg, op, expected):
    assert seed_spec(alg, op).seed_bytes == expected
    src = QrngSimSource("seeds", b"x")
    assert len(seed_for(src, alg, op)) == expected


def test_seed_table_undefined_pairs():
    with pytest.raises(NoSeedSpec):
        seed_spec("AES-256-GCM", SeedOp.SIGN)
    with pytest.raises(NoSeedSpec):
        seed_spec("ML-KEM-768", SeedOp.SIGN)


# --- health tests ----------------------------------------------------------------------

def test_health_all_zero_fails_everything_and_poisons():
    src = FixedTestSource("zero", b"\x00")
    report = health_check(src, 2048)
    assert not report.repetition_count_ok
    assert not report.adaptive_proportion_ok
    assert not report.ok
    with pytest.raises(SourcePoisoned):
        src.draw(1)
    src.reset()
    assert src.draw(1) == b"\x00"


def test_health_counter_pattern_passes_repetition():
    src = FixedTestSource("ctr", bytes(range(256)))
    report = health_check(src, 4096)
    assert report.repetition_count_ok
    assert report.adaptive_proportion_ok  # each value occurs twice per 512 window


def test_health_window_too_small():
    src = FixedTestSource("w", b"\x00")
    with pytest.raises(WindowTooSmall):
        health_check(src, 1023)


def test_health_os_window_passes():
    report = health_check(OsSource(), 65536)
    assert report.ok


def test_default_source_env(monkeypatch):
    monkeypatch.setenv(entropy.DEFAULT_SOURCE_ENV, "os")
    assert entropy.default_source().kind is entropy.SourceKind.OS
    monkeypatch.setenv(entropy.DEFAULT_SOURCE_ENV, "qrng-sim")
    assert entropy.default_source(b"s").kind is entropy.SourceKind.QRNG_SIM
