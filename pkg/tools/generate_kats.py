"""Generate known-answer vector files from the validated reference oracle.

Run once, after validate_oracle.py passes; the outputs in tests/kat/ are
frozen and replayed against the package implementation.

  ml-kem-768.kat : seed (keygen 64 B || encaps 32 B), pk, sk, ct, ss
  ml-dsa-65.kat  : seed (keygen 32 B), pk, sk, msg, ctx, sig   (deterministic signing)
"""

import hashlib
import pathlib
import sys

import reference_oracle as ref

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "kat"
COUNT = 30


def tagged(tag, n):
    return hashlib.shake_256(tag.encode()).digest(n)


def gen_mlkem():
    lines = ["# ML-KEM-768 known-answer vectors (reference oracle, OpenSSL cross-checked)"]
    for i in range(COUNT):
        kseed = tagged(f"kat-mlkem768-keygen-{i}", 64)
        eseed = tagged(f"kat-mlkem768-encaps-{i}", 32)
        ek, dk = ref.mlkem_keygen("ML-KEM-768", kseed)
        ct, ss = ref.mlkem_encaps("ML-KEM-768", ek, eseed)
        assert ref.mlkem_decaps("ML-KEM-768", dk, ct) == ss
        lines.append("")
        lines.append(f"seed={(kseed + eseed).hex()}")
        lines.append(f"pk={ek.hex()}")
        lines.append(f"sk={dk.hex()}")
        lines.append(f"ct={ct.hex()}")
        lines.append(f"ss={ss.hex()}")
    (OUT / "ml-kem-768.kat").write_text("\n".join(lines) + "\n")
    print(f"wrote ml-kem-768.kat ({COUNT} vectors)")


def gen_mldsa():
    lines = ["# ML-DSA-65 known-answer vectors (reference oracle, OpenSSL cross-checked; deterministic signing)"]
    for i in range(COUNT):
        seed = tagged(f"kat-mldsa65-keygen-{i}", 32)
        msg = tagged(f"kat-mldsa65-msg-{i}", 1 + (i * 53) % 300)
        ctx = b"" if i % 3 == 0 else tagged(f"kat-mldsa65-ctx-{i}", 1 + i % 24)
        pk, sk = ref.mldsa_keygen("ML-DSA-65", seed)
        sig = ref.mldsa_sign("ML-DSA-65", sk, msg, ctx)
        assert ref.mldsa_verify("ML-DSA-65", pk, msg, sig, ctx)
        lines.append("")
        lines.append(f"seed={seed.hex()}")
        lines.append(f"pk={pk.hex()}")
        lines.append(f"sk={sk.hex()}")
        lines.append(f"msg={msg.hex()}")
        lines.append(f"ctx={ctx.hex()}")
        lines.append(f"sig={sig.hex()}")
    (OUT / "ml-dsa-65.kat").write_text("\n".join(lines) + "\n")
    print(f"wrote ml-dsa-65.kat ({COUNT} vectors)")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    gen_mlkem()
    gen_mldsa()
    sys.exit(0)
