"""Deterministic discrete-event simulation of the RAN topology and its links.

Virtual time only (milliseconds); all randomness comes from generators seeded
by (scenario seed, name), so a (scenario, seed) pair replays to an identical
event log.  Datagram links model MTU (oversized datagrams are dropped),
i.i.d. loss, fixed latency, and i.i.d. reordering; stream links are reliable
and ordered.  The interface table maps each named RAN interface to its
endpoints and the set of protection protocols it may legitimately carry.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import random
from dataclasses import dataclass, field, replace

from . import ike as ike_mod
from . import pki
from .channel import HandshakeConfig, HandshakeDriver, Role as ChanRole
from .crypto.registry import ChannelMode
from .entropy import QrngSimSource
from .errors import DanglingEndpoint, PqoranError, TimeLimitExceeded, UnknownInterface
from .hybrid import composite_keygen, profile_for
from .pki import KeyUsage, Spki

MS_PER_DAY = pki.MS_PER_DAY


class Role(enum.Enum):
    SMO = "SMO"
    NON_RT_RIC = "NON_RT_RIC"
    NEAR_RT_RIC = "NEAR_RT_RIC"
    O_CU_CP = "O_CU_CP"
    O_CU_UP = "O_CU_UP"
    O_DU = "O_DU"
    O_RU = "O_RU"
    AMF = "AMF"
    UPF = "UPF"
    # companions required by the management rows of the interface table
    O_CLOUD = "O_CLOUD"
    RAPP = "RAPP"
    Y1_CONSUMER = "Y1_CONSUMER"


@dataclass(frozen=True)
class NodeId:
    role: Role
    instance: int = 0

    def __str__(self) -> str:
        return f"{self.role.value}#{self.instance}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        name, _, idx = text.partition("#")
        return cls(Role(name), int(idx) if idx else 0)


@dataclass(frozen=True)
class LinkProfile:
    mtu: int = 1500
    loss_rate: float = 0.0
    latency_ms: float = 1.0
    reorder_rate: float = 0.0
    bandwidth: float | None = None  # bytes per ms; None = unlimited

    def __post_init__(self):
        if not 0.0 <= self.loss_rate <= 1.0 or not 0.0 <= self.reorder_rate <= 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if self.mtu < 256:
            raise ValueError("mtu must be >= 256")


class Protocol(enum.Enum):
    PQ_IPSEC = "PQ_IPSEC"
    PQ_DTLS = "PQ_DTLS"
    PQ_MTLS = "PQ_MTLS"


class InterfaceName(enum.Enum):
    F1AP = "F1AP"
    E1AP = "E1AP"
    NGAP = "NGAP"
    E2 = "E2"
    XN = "Xn"
    N3 = "N3"
    OFH_M_PLANE = "OFH_M_PLANE"
    A1 = "A1"
    O1 = "O1"
    O2 = "O2"
    Y1 = "Y1"
    R1 = "R1"


@dataclass(frozen=True)
class InterfaceBinding:
    name: InterfaceName
    endpoints: tuple[NodeId, NodeId]
    allowed_protocols: frozenset[Protocol]
    link: LinkProfile


_FRONTHAUL = LinkProfile(mtu=1500, latency_ms=0.1)
_MIDHAUL = LinkProfile(mtu=1500, latency_ms=1.0)
_BACKHAUL = LinkProfile(mtu=1500, latency_ms=5.0)
_MGMT = LinkProfile(mtu=1500, latency_ms=5.0)

_IPSEC_OR_DTLS = frozenset({Protocol.PQ_IPSEC, Protocol.PQ_DTLS})
_MTLS_ONLY = frozenset({Protocol.PQ_MTLS})


def _binding(name, a, b, protocols, link) -> InterfaceBinding:
    return InterfaceBinding(name, (a, b), protocols, link)


def default_interfaces() -> tuple[InterfaceBinding, ...]:
    n = lambda role, idx=0: NodeId(Role[role], idx)
    return (
        _binding(InterfaceName.F1AP, n("O_CU_CP"), n("O_DU"), _IPSEC_OR_DTLS, _MIDHAUL),
        _binding(InterfaceName.E1AP, n("O_CU_CP"), n("O_CU_UP"), _IPSEC_OR_DTLS, _MIDHAUL),
        _binding(InterfaceName.NGAP, n("O_CU_CP"), n("AMF"), _IPSEC_OR_DTLS, _BACKHAUL),
        _binding(InterfaceName.E2, n("NEAR_RT_RIC"), n("O_CU_CP"), _IPSEC_OR_DTLS, _MIDHAUL),
        _binding(InterfaceName.XN, n("O_CU_CP", 0), n("O_CU_CP", 1), _IPSEC_OR_DTLS, _BACKHAUL),
        _binding(InterfaceName.N3, n("O_CU_UP"), n("UPF"), frozenset({Protocol.PQ_IPSEC}),
                 _BACKHAUL),
        # M-Plane deployments also use secure shell; only the mutual TLS
        # profile is modeled, a declared reduction
        _binding(InterfaceName.OFH_M_PLANE, n("O_RU"), n("O_DU"), _MTLS_ONLY, _FRONTHAUL),
        _binding(InterfaceName.A1, n("NEAR_RT_RIC"), n("NON_RT_RIC"), _MTLS_ONLY, _MGMT),
        _binding(InterfaceName.O1, n("SMO"), n("O_DU"), _MTLS_ONLY, _MGMT),
        _binding(InterfaceName.O2, n("SMO"), n("O_CLOUD"), _MTLS_ONLY, _MGMT),
        _binding(InterfaceName.Y1, n("NEAR_RT_RIC"), n("Y1_CONSUMER"), _MTLS_ONLY, _MGMT),
        _binding(InterfaceName.R1, n("RAPP"), n("NON_RT_RIC"), _MTLS_ONLY, _MGMT),
    )


@dataclass
class Topology:
    nodes: set
    bindings: dict  # InterfaceName -> InterfaceBinding

    def binding(self, name) -> InterfaceBinding:
        try:
            key = name if isinstance(name, InterfaceName) else InterfaceName(name)
        except ValueError:
            raise UnknownInterface(f"no interface named {name!r}") from None
        if key not in self.bindings:
            raise UnknownInterface(f"interface {key.value} is not in this topology")
        return self.bindings[key]


def build_topology(interfaces=None, nodes=None) -> Topology:
    """Instantiate the interface map; defaults to the full 12-row table."""
    bindings = {}
    declared = {NodeId.parse(n) if isinstance(n, str) else n for n in (nodes or [])}
    for binding in (interfaces or default_interfaces()):
        if declared:
            for endpoint in binding.endpoints:
                if endpoint not in declared:
                    raise DanglingEndpoint(
                        f"{binding.name.value} references undeclared node {endpoint}")
        bindings[binding.name] = binding
    all_nodes = declared or {ep for b in bindings.values() for ep in b.endpoints}
    return Topology(all_nodes, bindings)


def policy_check(topology: Topology, interface, protocol: Protocol) -> bool:
    """True when the protocol is allowed on the interface."""
    return protocol in topology.binding(interface).allowed_protocols


# --- analytic stream model ------------------------------------------------------------

@dataclass(frozen=True)
class StreamTransportConfig:
    init_cwnd: int = 10
    mss: int = 1460
    rtt_ms: float = 10.0

    def __post_init__(self):
        if self.init_cwnd < 1:
            raise ValueError("init_cwnd must be >= 1")


def stream_rounds(config: StreamTransportConfig, flight_bytes: int) -> int:
    """Round trips to push flight_bytes under slow-start doubling."""
    if flight_bytes <= 0:
        return 0
    rounds = 0
    cwnd = config.init_cwnd
    delivered = 0
    while delivered < flight_bytes:
        delivered += cwnd * config.mss
        cwnd *= 2
        rounds += 1
    return rounds


# --- event loop -------------------------------------------------------------------------

class World:
    """Single-threaded virtual-time event loop with named, seeded generators."""

    def __init__(self, seed: int, time_limit_ms: float = 600_000.0):
        self.seed = seed
        self.now = 0.0
        self.time_limit_ms = time_limit_ms
        self._queue: list = []
        self._seq = 0
        self.event_log: list[dict] = []

    def rng_for(self, name: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def schedule(self, delay_ms: float, fn) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (self.now + delay_ms, self._seq, fn))

    def log(self, kind: str, **meta) -> None:
        self.event_log.append({"t": round(self.now, 6), "kind": kind, **meta})

    def export_log_jsonl(self) -> str:
        import json
        return "\n".join(json.dumps(event, sort_keys=True) for event in self.event_log)

    def run(self) -> None:
        while self._queue:
            when, _, fn = heapq.heappop(self._queue)
            if when > self.time_limit_ms:
                raise TimeLimitExceeded(
                    f"simulation exceeded its {self.time_limit_ms} ms budget")
            self.now = max(self.now, when)
            fn()


class DatagramLink:
    """Bidirectional lossy datagram pipe between two attached handlers."""

    def __init__(self, world: World, name: str, profile: LinkProfile):
        self.world = world
        self.name = name
        self.profile = profile
        self._rng = world.rng_for(f"link:{name}")
        self._handlers = [None, None]
        self.bytes_sent = 0
        self.bytes_delivered = 0
        self.datagrams_sent = 0
        self.datagrams_dropped = 0

    def attach(self, side: int, handler) -> None:
        self._handlers[side] = handler

    def send(self, from_side: int, data: bytes) -> None:
        self.datagrams_sent += 1
        self.bytes_sent += len(data)
        self.world.log("tx", link=self.name, side=from_side, bytes=len(data))
        if len(data) > self.profile.mtu:
            self.datagrams_dropped += 1
            self.world.log("drop-mtu", link=self.name, bytes=len(data))
            return
        if self._rng.random() < self.profile.loss_rate:
            self.datagrams_dropped += 1
            self.world.log("drop-loss", link=self.name, bytes=len(data))
            return
        delay = self.profile.latency_ms
        if self.profile.bandwidth:
            delay += len(data) / self.profile.bandwidth
        if self._rng.random() < self.profile.reorder_rate:
            delay += self._rng.uniform(0.0, 4.0 * self.profile.latency_ms)
        handler = self._handlers[1 - from_side]

        def deliver():
            self.bytes_delivered += len(data)
            self.world.log("rx", link=self.name, bytes=len(data))
            handler(data)

        self.world.schedule(delay, deliver)


class StreamLink:
    """Reliable ordered byte pipe (transport reliability assumed)."""

    def __init__(self, world: World, name: str, profile: LinkProfile):
        self.world = world
        self.name = name
        self.profile = profile
        self._handlers = [None, None]
        self.bytes_sent = 0
        self.bytes_delivered = 0
        self.datagrams_sent = 0  # counted as write() calls
        self.datagrams_dropped = 0

    def attach(self, side: int, handler) -> None:
        self._handlers[side] = handler

    def send(self, from_side: int, data: bytes) -> None:
        self.datagrams_sent += 1
        self.bytes_sent += len(data)
        self.world.log("tx", link=self.name, side=from_side, bytes=len(data))
        handler = self._handlers[1 - from_side]

        def deliver():
            self.bytes_delivered += len(data)
            handler(data)

        self.world.schedule(self.profile.latency_ms, deliver)


# --- channel execution --------------------------------------------------------------------

@dataclass
class ChannelMeasure:
    interface: str
    protocol: str
    mode: str
    established: bool = False
    failure: str = ""
    handshake_bytes: int = 0
    datagrams_sent: int = 0
    retransmissions: int = 0
    flights: int = 0
    sim_time_ms: float = 0.0
    app_round_trip_ok: bool = False
    policy_violation: bool = False
    negotiated_group: str = ""

    def as_dict(self) -> dict:
        return {
            "interface": self.interface,
            "protocol": self.protocol,
            "mode": self.mode,
            "established": self.established,
            "failure": self.failure,
            "handshake_bytes": self.handshake_bytes,
            "datagrams_sent": self.datagrams_sent,
            "retransmissions": self.retransmissions,
            "flights": self.flights,
            "sim_time_ms": round(self.sim_time_ms, 6),
            "app_round_trip_ok": self.app_round_trip_ok,
            "policy_violation": self.policy_violation,
            "negotiated_group": self.negotiated_group,
        }


@dataclass
class ChannelIdentities:
    """Per-channel trust material: a seeded root CA and two endpoint identities."""

    root: pki.CaState
    client_key: object
    client_chain: list
    server_key: object
    server_chain: list


def make_identities(seed: int, channel_tag: str, client_name: str, server_name: str,
                    profile_name: str = "Ed448-ML-DSA-65") -> ChannelIdentities:
    source = QrngSimSource(f"ca:{channel_tag}", f"{seed}:{channel_tag}".encode())
    root = pki.ca_init(source, profile_name, f"smo-root-ca-{channel_tag}", now=0)
    profile = profile_for(profile_name)

    def identity(name):
        keypair = composite_keygen(profile, source.draw(profile.keygen_seed_len))
        cert = pki.issue_cert(root, name, Spki(profile_name, keypair.public_key),
                              KeyUsage.TLS_AUTH, validity_days=30, now=0)
        return keypair, [cert, root.certificate]

    client_key, client_chain = identity(client_name)
    server_key, server_chain = identity(server_name)
    return ChannelIdentities(root, client_key, client_chain, server_key, server_chain)


class _DriverPump:
    """Couples a driver to a link side: forwards output, arms poll timers."""

    def __init__(self, world: World, link, side: int, driver, on_progress=None):
        self.world = world
        self.link = link
        self.side = side
        self.driver = driver
        self.on_progress = on_progress
        self._armed_for: float | None = None
        link.attach(side, self.on_data)

    def flush(self, chunks) -> None:
        for chunk in chunks:
            self.link.send(self.side, chunk)
        self.arm()
        if self.on_progress is not None:
            self.on_progress()

    def on_data(self, data: bytes) -> None:
        self.flush(self.driver.receive(data, self.world.now))

    def arm(self) -> None:
        wakeup = self.driver.next_wakeup()
        if wakeup is None or wakeup == self._armed_for:
            return
        self._armed_for = wakeup
        delay = max(0.0, wakeup - self.world.now)
        self.world.schedule(delay, self._fire)

    def _fire(self) -> None:
        self._armed_for = None
        self.flush(self.driver.poll(self.world.now))


@dataclass
class ChannelOptions:
    mutual_auth: bool = True
    compression: object = None  # channel Codec; None -> uncompressed
    app_probe: bytes = b"interface-probe"
    mtu_override: int | None = None
    loss_override: float | None = None
    chain_override: tuple | None = None  # (client tuple, server tuple)
    time_limit_ms: float = 600_000.0
    allow_test_scheme: bool = False


def run_channel(binding: InterfaceBinding, protocol: Protocol, mode: ChannelMode,
                seed: int, channel_tag: str = "", allowed_check: bool = True,
                topology: Topology | None = None,
                options: ChannelOptions | None = None,
                identities: ChannelIdentities | None = None) -> ChannelMeasure:
    """Execute one protected channel in its own world and measure it."""
    options = options or ChannelOptions()
    tag = channel_tag or f"{binding.name.value}:{protocol.value}:{mode.value}"
    measure = ChannelMeasure(binding.name.value, protocol.value, mode.value)
    if allowed_check:
        measure.policy_violation = protocol not in binding.allowed_protocols

    profile = binding.link
    if options.mtu_override or options.loss_override is not None:
        profile = replace(profile,
                          mtu=options.mtu_override or profile.mtu,
                          loss_rate=options.loss_override
                          if options.loss_override is not None else profile.loss_rate)

    world = World(seed, time_limit_ms=options.time_limit_ms)
    client_name, server_name = str(binding.endpoints[0]), str(binding.endpoints[1])
    idents = identities or make_identities(seed, tag, client_name, server_name)

    if protocol is Protocol.PQ_IPSEC:
        return _run_ipsec(world, profile, binding, mode, idents, measure, tag, options)
    return _run_tls_like(world, profile, binding, protocol, mode, idents, measure, tag,
                         options)


def _finish_measure(measure: ChannelMeasure, world: World, link,
                    established: bool, failure, done_at: list) -> ChannelMeasure:
    measure.established = established
    measure.failure = type(failure).__name__ if failure else ""
    measure.handshake_bytes = link.bytes_sent
    measure.datagrams_sent = link.datagrams_sent
    measure.sim_time_ms = done_at[0] if done_at[0] is not None else world.now
    return measure


def _completion_probe(world: World, drivers: tuple) -> tuple:
    """(done_at holder, callback) marking the instant both sides establish."""
    done_at = [None]

    def check():
        if done_at[0] is None and all(d.established for d in drivers):
            done_at[0] = world.now
    return done_at, check


def _run_tls_like(world, profile, binding, protocol, mode, idents, measure, tag, options):
    from .channel.handshake import Codec

    stream = protocol is Protocol.PQ_MTLS
    link_cls = StreamLink if stream else DatagramLink
    link = link_cls(world, tag, profile)
    codec = options.compression if options.compression is not None else Codec.NONE

    client_chain, client_key = idents.client_chain, idents.client_key
    server_chain, server_key = idents.server_chain, idents.server_key
    if options.chain_override:
        (client_chain, client_key), (server_chain, server_key) = options.chain_override

    anchor = client_chain[-1] if client_chain else server_chain[-1]
    ccfg = HandshakeConfig(
        role=ChanRole.CLIENT, mode=mode,
        chain=client_chain if options.mutual_auth else [],
        private_key=client_key if options.mutual_auth else None,
        trust_anchor=anchor, cert_compression=codec,
        allow_test_scheme=options.allow_test_scheme)
    scfg = HandshakeConfig(
        role=ChanRole.SERVER, mode=mode, chain=server_chain, private_key=server_key,
        trust_anchor=anchor, require_client_cert=options.mutual_auth,
        cert_compression=codec, allow_test_scheme=options.allow_test_scheme)

    client = HandshakeDriver(ccfg, QrngSimSource(f"ent:c:{tag}", f"{world.seed}:c:{tag}".encode()),
                             mtu=profile.mtu, stream=stream)
    server = HandshakeDriver(scfg, QrngSimSource(f"ent:s:{tag}", f"{world.seed}:s:{tag}".encode()),
                             mtu=profile.mtu, stream=stream)
    done_at, check = _completion_probe(world, (client, server))
    client_pump = _DriverPump(world, link, 0, client, check)
    server_pump = _DriverPump(world, link, 1, server, check)

    world.schedule(0.0, lambda: client_pump.flush(client.start(world.now)))
    world.run()

    established = client.established and server.established
    _finish_measure(measure, world, link,
                    established, client.failure or server.failure, done_at)
    measure.retransmissions = client.retransmit_count + server.retransmit_count
    measure.flights = client.flights_sent + server.flights_sent
    if established:
        echo = server.session.open_record(client.session.seal_record(options.app_probe))
        back = client.session.open_record(server.session.seal_record(echo))
        measure.app_round_trip_ok = back == options.app_probe
    measure.negotiated_group = client.negotiated_group or ""
    return measure


def _run_ipsec(world, profile, binding, mode, idents, measure, tag, options):
    with_kem = mode is not ChannelMode.CLASSICAL
    proposal = ike_mod.parse_proposal_string(
        "aes256-sha384-x25519-ke1_mlkem768!" if with_kem else "aes256-sha384-x25519!")
    icfg = ike_mod.IkeConfig(str(binding.endpoints[0]), idents.client_chain,
                             idents.client_key, idents.root.certificate,
                             proposal=proposal, support_intermediate=with_kem)
    rcfg = ike_mod.IkeConfig(str(binding.endpoints[1]), idents.server_chain,
                             idents.server_key, idents.root.certificate,
                             proposal=proposal, support_intermediate=with_kem)
    initiator = ike_mod.IkeSa(icfg, QrngSimSource(f"ent:i:{tag}", f"{world.seed}:i:{tag}".encode()),
                              initiator=True)
    responder = ike_mod.IkeSa(rcfg, QrngSimSource(f"ent:r:{tag}", f"{world.seed}:r:{tag}".encode()),
                              initiator=False)
    idrv = ike_mod.IkeDriver(initiator)
    rdrv = ike_mod.IkeDriver(responder)

    link = DatagramLink(world, tag, profile)
    done_at, check = _completion_probe(world, (idrv, rdrv))
    ipump = _DriverPump(world, link, 0, idrv, check)
    rpump = _DriverPump(world, link, 1, rdrv, check)
    world.schedule(0.0, lambda: ipump.flush(idrv.start(world.now)))
    world.run()

    established = idrv.established and rdrv.established
    _finish_measure(measure, world, link, established,
                    idrv.failure or rdrv.failure or initiator.failure or responder.failure,
                    done_at)
    measure.retransmissions = idrv.retransmit_count
    measure.flights = len(initiator.exchange_log)
    if established:
        esp = initiator.child_sa.seal(options.app_probe)
        echo = responder.child_sa.open(esp)
        back = initiator.child_sa.open(responder.child_sa.seal(echo))
        measure.app_round_trip_ok = back == options.app_probe
    return measure
