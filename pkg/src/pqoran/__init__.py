"""pqoran: post-quantum secure-channel toolkit and deterministic network
simulator for O-RAN-style topologies.

Subpackages:
    crypto   -- seeded KEM/signature/AEAD/KDF primitives and the registry
    entropy  -- entropy sources, mixing, seed dispensing, health tests
    hybrid   -- X-Wing hybrid KEM and composite (classical+PQ) signatures
    pki      -- composite-signed certificate authority, chains, revocation
    channel  -- datagram/stream secure-channel handshake and record layer
    ike      -- IKEv2-style control protocol with PPK mixing
    authz    -- composite-signed token service and validators
    netsim   -- deterministic discrete-event topology simulator
    harness  -- scenario runner, KAT replay, reports, CLI backend
"""

__version__ = "0.1.0"
