"""Shared drive-the-protocol utilities for the test suite."""

import pathlib

from pqoran import entropy
from pqoran.channel import HandshakeConfig, HandshakeDriver, Role
from pqoran.crypto.registry import ChannelMode

KAT_DIR = pathlib.Path(__file__).parent / "kat"


def load_kat(name):
    vectors, current = [], {}
    for line in (KAT_DIR / name).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            if current:
                vectors.append(current)
                current = {}
            continue
        key, _, value = line.partition("=")
        current[key.strip()] = bytes.fromhex(value.strip())
    if current:
        vectors.append(current)
    return vectors


def drive(client, server, limit=2000, mangle=None):
    """Pass datagrams directly between two drivers until quiescent.

    mangle(sender, data) may return modified bytes, None to drop, or the
    original data.
    """
    now = 0.0
    inflight = [(server, d) for d in client.start(now)]
    steps = 0
    while inflight and steps < limit:
        steps += 1
        target, data = inflight.pop(0)
        other = client if target is server else server
        if mangle is not None:
            data = mangle(target, data)
            if data is None:
                continue
        for out in target.receive(data, now):
            inflight.append((other, out))
    return client, server


def make_driver(role, mode, keypair, chain, anchor, *, mutual=False, stream=False,
                mtu=1500, entropy_tag="t", compression=None, revocation=frozenset(),
                budget=1_000_000):
    from pqoran.channel import Codec

    config = HandshakeConfig(
        role=role,
        mode=mode,
        chain=chain if (role is Role.SERVER or mutual) else [],
        private_key=keypair if (role is Role.SERVER or mutual) else None,
        trust_anchor=anchor,
        require_client_cert=mutual,
        cert_compression=compression if compression is not None else Codec.NONE,
        revocation_view=revocation,
        key_update_record_budget=budget,
    )
    source = entropy.QrngSimSource(f"drv:{entropy_tag}:{role.value}",
                                   f"{entropy_tag}:{role.value}".encode())
    return HandshakeDriver(config, source, mtu=mtu, stream=stream)


def handshake_pair(identities, client_mode=ChannelMode.HYBRID,
                   server_mode=ChannelMode.HYBRID, *, mutual=False, stream=False,
                   mtu=1500, tag="pair", **kw):
    ckp, cchain = identities["client"]
    skp, schain = identities["server"]
    anchor = schain[-1]
    client = make_driver(Role.CLIENT, client_mode, ckp, cchain, anchor,
                         mutual=mutual, stream=stream, mtu=mtu,
                         entropy_tag=f"{tag}:c", **kw)
    server = make_driver(Role.SERVER, server_mode, skp, schain, anchor,
                         mutual=mutual, stream=stream, mtu=mtu,
                         entropy_tag=f"{tag}:s", **kw)
    return client, server
