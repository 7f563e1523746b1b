"""Cross-check the reference oracle against the OpenSSL-backed implementation
shipped with `cryptography` before any vectors are frozen.

Checks, per seed:
  * ML-KEM-768: seed -> public key byte equality; OpenSSL-encapsulated
    ciphertexts decapsulate to the same secret under the oracle; oracle
    ciphertexts decapsulate identically under OpenSSL; implicit-rejection
    secrets for a corrupted ciphertext agree byte-for-byte.
  * ML-DSA-65: seed -> public key byte equality; oracle signatures (empty and
    non-empty context) verify under OpenSSL; OpenSSL signatures verify under
    the oracle.
"""

import hashlib
import sys

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import mldsa, mlkem

import reference_oracle as ref


def tagged_seed(tag, n):
    return hashlib.shake_256(tag.encode()).digest(n)


def check_mlkem(rounds=12):
    for i in range(rounds):
        seed = tagged_seed(f"validate-mlkem-{i}", 64)
        ossl = mlkem.MLKEM768PrivateKey.from_seed_bytes(seed)
        ek, dk = ref.mlkem_keygen("ML-KEM-768", seed)
        assert ek == ossl.public_key().public_bytes_raw(), f"pk mismatch @{i}"

        ss_o, ct_o = ossl.public_key().encapsulate()
        assert ref.mlkem_decaps("ML-KEM-768", dk, ct_o) == ss_o, f"decaps interop @{i}"

        m = tagged_seed(f"validate-mlkem-m-{i}", 32)
        ct_r, ss_r = ref.mlkem_encaps("ML-KEM-768", ek, m)
        assert ossl.decapsulate(ct_r) == ss_r, f"encaps interop @{i}"

        bad = bytearray(ct_o)
        bad[7] ^= 0x40
        assert ref.mlkem_decaps("ML-KEM-768", dk, bytes(bad)) == ossl.decapsulate(bytes(bad)), \
            f"implicit rejection mismatch @{i}"
    print(f"ML-KEM-768: {rounds} seeds OK (pk equality, bidirectional interop, implicit rejection)")


def check_mldsa(rounds=8):
    for i in range(rounds):
        seed = tagged_seed(f"validate-mldsa-{i}", 32)
        ossl = mldsa.MLDSA65PrivateKey.from_seed_bytes(seed)
        pk, sk = ref.mldsa_keygen("ML-DSA-65", seed)
        assert pk == ossl.public_key().public_bytes_raw(), f"pk mismatch @{i}"

        msg = tagged_seed(f"validate-mldsa-msg-{i}", 100 + 37 * i)
        for ctx in (b"", b"interop-context"):
            sig = ref.mldsa_sign("ML-DSA-65", sk, msg, ctx)
            ossl.public_key().verify(sig, msg, context=ctx or None)  # raises on failure
            sig_o = ossl.sign(msg, context=ctx or None)
            assert ref.mldsa_verify("ML-DSA-65", pk, msg, sig_o, ctx), f"verify interop @{i}"
            bad = bytearray(sig)
            bad[0] ^= 1
            try:
                ossl.public_key().verify(bytes(bad), msg, context=ctx or None)
                raise AssertionError(f"tampered sig accepted by openssl @{i}")
            except InvalidSignature:
                pass
            assert not ref.mldsa_verify("ML-DSA-65", pk, msg, bytes(bad), ctx), \
                f"tampered sig accepted by oracle @{i}"
    print(f"ML-DSA-65: {rounds} seeds OK (pk equality, bidirectional sign/verify interop)")


def main():
    check_mlkem()
    check_mldsa()
    print("oracle validated against OpenSSL")
    return 0


if __name__ == "__main__":
    sys.exit(main())
