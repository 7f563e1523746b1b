import os

os.environ.setdefault("PQORAN_TEST_SOURCES", "1")
os.environ.setdefault("PQORAN_ENTROPY", "qrng-sim")

import pytest

from pqoran import entropy, pki
from pqoran.hybrid import ED448_MLDSA65, composite_keygen
from pqoran.pki import KeyUsage, Spki


@pytest.fixture(scope="session")
def root_ca():
    source = entropy.QrngSimSource("fixture-ca", b"fixture-ca-seed")
    return pki.ca_init(source, "Ed448-ML-DSA-65", "test-root", now=0)


@pytest.fixture(scope="session")
def identities(root_ca):
    """Pre-issued client and server identities: (keypair, chain) pairs."""
    source = root_ca.entropy

    def make(name):
        keypair = composite_keygen(ED448_MLDSA65, source.draw(57))
        cert = pki.issue_cert(root_ca, name, Spki("Ed448-ML-DSA-65", keypair.public_key),
                              KeyUsage.TLS_AUTH, validity_days=30, now=0)
        return keypair, [cert, root_ca.certificate]

    return {"client": make("client-endpoint"), "server": make("server-endpoint")}
