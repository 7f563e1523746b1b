"""Scenario harness: runs protected channels over the simulated topology,
replays KAT suites, compares signature size classes, and emits reports.

Every channel executes in its own world seeded by (scenario seed, channel
index, repetition), so scenarios parallelize across threads without sharing
state and a (scenario, seed) pair always produces a byte-identical report.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import pathlib
from dataclasses import dataclass, field

from . import __version__, netsim, pki, sizeclass
from .channel import Codec
from .crypto import mldsa, mlkem
from .crypto.registry import ChannelMode
from .errors import ConfigInvalid, MissingSuite, PqoranError
from .netsim import ChannelOptions, InterfaceName, Protocol, Topology

DEFAULT_PROTOCOL_PICK = {
    # one concrete protocol per interface for the default scenario; every
    # pick is inside the interface's allowed set
    "F1AP": "PQ_DTLS",
    "E1AP": "PQ_DTLS",
    "NGAP": "PQ_IPSEC",
    "E2": "PQ_DTLS",
    "Xn": "PQ_IPSEC",
    "N3": "PQ_IPSEC",
    "OFH_M_PLANE": "PQ_MTLS",
    "A1": "PQ_MTLS",
    "O1": "PQ_MTLS",
    "O2": "PQ_MTLS",
    "Y1": "PQ_MTLS",
    "R1": "PQ_MTLS",
}


@dataclass
class ChannelSpec:
    interface: str
    protocol: str
    mode: str = "HYBRID"
    repetitions: int = 1

    def __post_init__(self):
        try:
            InterfaceName(self.interface)
            Protocol(self.protocol)
            ChannelMode(self.mode)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        if self.repetitions < 1:
            raise ConfigInvalid("repetitions must be >= 1")


@dataclass
class ScenarioConfig:
    seed: int = 1
    channels: list = field(default_factory=list)
    link_overrides: dict = field(default_factory=dict)  # interface -> LinkProfile fields
    nodes: list = field(default_factory=list)  # optional explicit node declarations
    mutual_auth: bool = True
    compression: str = "NONE"
    time_limit_ms: float = 600_000.0
    name: str = "default"

    @classmethod
    def default(cls, seed: int = 1) -> "ScenarioConfig":
        channels = [ChannelSpec(iface, proto) for iface, proto in DEFAULT_PROTOCOL_PICK.items()]
        return cls(seed=seed, channels=channels)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigInvalid("scenario must be a JSON object")
        cfg = cls(
            seed=int(raw.get("seed", 1)),
            mutual_auth=bool(raw.get("mutual_auth", True)),
            compression=str(raw.get("compression", "NONE")).upper(),
            time_limit_ms=float(raw.get("time_limit_ms", 600_000.0)),
            name=str(raw.get("name", "custom")),
        )
        if cfg.compression not in ("NONE", "DEFLATE"):
            raise ConfigInvalid(f"unknown compression {cfg.compression}")
        for entry in raw.get("channels", []):
            cfg.channels.append(ChannelSpec(
                interface=entry["interface"],
                protocol=entry["protocol"],
                mode=entry.get("mode", "HYBRID"),
                repetitions=int(entry.get("repetitions", 1)),
            ))
        if not cfg.channels:
            cfg.channels = ScenarioConfig.default(cfg.seed).channels
        for iface, fields_ in raw.get("links", {}).items():
            try:
                InterfaceName(iface)
            except ValueError as exc:
                raise ConfigInvalid(str(exc)) from exc
            cfg.link_overrides[iface] = dict(fields_)
        cfg.nodes = list(raw.get("nodes", []))
        return cfg

    @classmethod
    def load(cls, path: str) -> "ScenarioConfig":
        try:
            raw = json.loads(pathlib.Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot load scenario {path}: {exc}") from exc
        cfg = cls.from_dict(raw)
        cfg.name = raw.get("name", pathlib.Path(path).stem)
        return cfg


def _channel_seed(seed: int, index: int, rep: int) -> int:
    digest = hashlib.sha256(f"{seed}:{index}:{rep}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class Report:
    toolkit_version: str
    scenario: str
    seed: int
    channels: list = field(default_factory=list)  # measure dicts
    violations: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    kat: dict | None = None
    comparison: dict | None = None

    @property
    def all_established(self) -> bool:
        return all(c["established"] and c["app_round_trip_ok"] for c in self.channels) \
            if self.channels else True

    def as_dict(self) -> dict:
        out = {
            "toolkit_version": self.toolkit_version,
            "scenario": self.scenario,
            "seed": self.seed,
            "channels": self.channels,
            "violations": self.violations,
            "aggregates": self.aggregates,
        }
        if self.kat is not None:
            out["kat"] = self.kat
        if self.comparison is not None:
            out["comparison"] = self.comparison
        return out


def _run_one(topology: Topology, spec: ChannelSpec, cfg: ScenarioConfig,
             index: int, rep: int) -> dict:
    binding = topology.binding(spec.interface)
    overrides = cfg.link_overrides.get(spec.interface, {})
    options = ChannelOptions(
        mutual_auth=cfg.mutual_auth,
        compression=Codec[cfg.compression],
        mtu_override=overrides.get("mtu"),
        loss_override=overrides.get("loss_rate"),
        time_limit_ms=cfg.time_limit_ms,
    )
    measure = netsim.run_channel(
        binding, Protocol(spec.protocol), ChannelMode(spec.mode),
        seed=_channel_seed(cfg.seed, index, rep),
        channel_tag=f"{spec.interface}:{index}:{rep}",
        options=options)
    entry = measure.as_dict()
    entry["channel_index"] = index
    entry["repetition"] = rep
    return entry


def run_scenario(cfg: ScenarioConfig, threads: int = 1) -> Report:
    """Execute every channel (in parallel worlds when threads > 1)."""
    try:
        topology = netsim.build_topology(nodes=cfg.nodes or None)
    except PqoranError as exc:
        raise ConfigInvalid(str(exc)) from exc
    jobs = [(index, rep, spec)
            for index, spec in enumerate(cfg.channels)
            for rep in range(spec.repetitions)]
    results: dict[tuple, dict] = {}
    if threads <= 1:
        for index, rep, spec in jobs:
            results[(index, rep)] = _run_one(topology, spec, cfg, index, rep)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_run_one, topology, spec, cfg, index, rep): (index, rep)
                for index, rep, spec in jobs
            }
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()

    report = Report(toolkit_version=__version__, scenario=cfg.name, seed=cfg.seed)
    for key in sorted(results):
        entry = results[key]
        report.channels.append(entry)
        if entry["policy_violation"]:
            report.violations.append({
                "interface": entry["interface"],
                "protocol": entry["protocol"],
                "reason": "protocol not allowed on this interface",
            })
    report.aggregates = _aggregate(report.channels)
    return report


def _aggregate(channels: list) -> dict:
    agg: dict[str, dict] = {}
    for entry in channels:
        key = f"{entry['protocol']}/{entry['mode']}"
        slot = agg.setdefault(key, {"channels": 0, "established": 0,
                                    "handshake_bytes": 0, "retransmissions": 0})
        slot["channels"] += 1
        slot["established"] += int(entry["established"])
        slot["handshake_bytes"] += entry["handshake_bytes"]
        slot["retransmissions"] += entry["retransmissions"]
    return agg


# --- size-class comparison -------------------------------------------------------------

def build_test_chain(size_class: sizeclass.SizeClass, seed: int):
    """Two-deep chain (leaf, root) signed with the TEST-ONLY size scheme."""
    tag = f"size:{size_class.name}:{seed}".encode()
    root_kp = sizeclass.keygen(size_class, hashlib.shake_256(tag + b":root").digest(32))
    leaf_kp = sizeclass.keygen(size_class, hashlib.shake_256(tag + b":leaf").digest(32))

    def make_cert(serial_tag, issuer, subject, keypair, signer, usage):
        cert = pki.Certificate(
            serial=hashlib.shake_256(tag + serial_tag).digest(16),
            issuer=issuer, subject=subject,
            not_before=0, not_after=30 * pki.MS_PER_DAY,
            spki=pki.Spki(size_class.profile_name, keypair.public_key),
            key_usage=usage,
        )
        sig = sizeclass.sign(signer, cert.tbs_bytes(), b"cert-tbs")
        return pki.Certificate(**{**cert.__dict__, "signature": sig})

    root_cert = make_cert(b":rootserial", "size-root", "size-root", root_kp, root_kp,
                          pki.KeyUsage.CA_SIGN | pki.KeyUsage.CRL_SIGN)
    leaf_cert = make_cert(b":leafserial", "size-root", "size-leaf", leaf_kp, root_kp,
                          pki.KeyUsage.TLS_AUTH)
    return leaf_kp, [leaf_cert, root_cert]


def compare_profiles(seed: int = 1) -> dict:
    """Rank size classes by handshake bytes; contrast classical vs hybrid."""
    topology = netsim.build_topology()
    binding = topology.binding("F1AP")

    size_rows = []
    for cls in sizeclass.SIZE_CLASSES:
        leaf_kp, chain = build_test_chain(cls, seed)
        options = ChannelOptions(
            mutual_auth=False,
            chain_override=(([], None), (chain, leaf_kp)),
            allow_test_scheme=True,
        )
        measure = netsim.run_channel(
            binding, Protocol.PQ_DTLS, ChannelMode.HYBRID,
            seed=_channel_seed(seed, 900, 0), channel_tag=f"size:{cls.name}",
            allowed_check=False, options=options)
        if not measure.established:
            raise PqoranError(f"size-class {cls.name} handshake failed: {measure.failure}")
        size_rows.append({
            "size_class": cls.name,
            "key_plus_signature_kb": cls.key_plus_signature_kb,
            "handshake_bytes": measure.handshake_bytes,
            "datagrams_sent": measure.datagrams_sent,
        })
    ranked = sorted(size_rows, key=lambda r: r["handshake_bytes"])
    expected = [c.name for c in sizeclass.SIZE_CLASSES]
    ranking_ok = [r["size_class"] for r in ranked] == expected

    mode_rows = []
    for name in DEFAULT_PROTOCOL_PICK:
        b = topology.binding(name)
        proto = Protocol(DEFAULT_PROTOCOL_PICK[name])
        per_mode = {}
        for mode in (ChannelMode.CLASSICAL, ChannelMode.HYBRID):
            measure = netsim.run_channel(
                b, proto, mode, seed=_channel_seed(seed, 901, 0),
                channel_tag=f"cmp:{name}:{mode.value}",
                options=ChannelOptions(mutual_auth=True))
            per_mode[mode.value] = measure.handshake_bytes
        mode_rows.append({
            "interface": name,
            "protocol": proto.value,
            "classical_bytes": per_mode["CLASSICAL"],
            "hybrid_bytes": per_mode["HYBRID"],
            "hybrid_exceeds_classical": per_mode["HYBRID"] > per_mode["CLASSICAL"],
        })

    return {
        "size_ranking": ranked,
        "size_ranking_matches_table": ranking_ok,
        "mode_comparison": mode_rows,
        "classical_below_hybrid_everywhere": all(r["hybrid_exceeds_classical"]
                                                 for r in mode_rows),
    }


# --- KAT replay -----------------------------------------------------------------------

def load_kat_file(path: pathlib.Path) -> list[dict]:
    vectors, current = [], {}
    for line in path.read_text().splitlines():
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


def _replay_mlkem(vector: dict) -> str | None:
    params = mlkem.PARAM_SETS["ML-KEM-768"]
    ek, dk = mlkem.keygen(params, vector["seed"][:64])
    if ek != vector["pk"]:
        return "pk"
    if dk != vector["sk"]:
        return "sk"
    ct, ss = mlkem.encaps(params, vector["pk"], vector["seed"][64:])
    if ct != vector["ct"]:
        return "ct"
    if ss != vector["ss"]:
        return "ss"
    if mlkem.decaps(params, vector["sk"], vector["ct"]) != vector["ss"]:
        return "ss"
    return None


def _replay_mldsa(vector: dict) -> str | None:
    params = mldsa.PARAM_SETS["ML-DSA-65"]
    pk, sk = mldsa.keygen(params, vector["seed"])
    if pk != vector["pk"]:
        return "pk"
    if sk != vector["sk"]:
        return "sk"
    if mldsa.sign(params, vector["sk"], vector["msg"], vector["ctx"]) != vector["sig"]:
        return "sig"
    if not mldsa.verify(params, vector["pk"], vector["msg"], vector["sig"], vector["ctx"]):
        return "verify"
    return None


_KAT_REPLAYERS = {
    "ml-kem-768": _replay_mlkem,
    "ml-dsa-65": _replay_mldsa,
}


def kat_run(suite_dir: str) -> dict:
    """Replay every .kat file in the directory against the implementation."""
    directory = pathlib.Path(suite_dir)
    files = sorted(directory.glob("*.kat")) if directory.is_dir() else []
    if not files:
        raise MissingSuite(f"no .kat files under {suite_dir!r}")
    results = {}
    for path in files:
        replayer = _KAT_REPLAYERS.get(path.stem)
        if replayer is None:
            results[path.stem] = {"vectors": 0, "passed": 0, "failed": 0,
                                  "error": "no replayer for this suite"}
            continue
        vectors = load_kat_file(path)
        passed = 0
        first_mismatch = None
        for idx, vector in enumerate(vectors):
            field_name = replayer(vector)
            if field_name is None:
                passed += 1
            elif first_mismatch is None:
                first_mismatch = {"vector": idx, "field": field_name}
        results[path.stem] = {
            "vectors": len(vectors),
            "passed": passed,
            "failed": len(vectors) - passed,
            "first_mismatch": first_mismatch,
        }
    results["ok"] = all(r.get("failed") == 0 for k, r in results.items() if k != "ok")
    return results


# --- emission -------------------------------------------------------------------------

def emit(report: Report, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.as_dict(), sort_keys=True, separators=(",", ":")) + "\n"
    if fmt != "markdown":
        raise ConfigInvalid(f"unknown report format {fmt!r}")
    return _emit_markdown(report)


def _emit_markdown(report: Report) -> str:
    lines = [
        f"# Channel protection report ({report.scenario})",
        "",
        f"- toolkit version: {report.toolkit_version}",
        f"- seed: {report.seed}",
        f"- channels: {len(report.channels)}",
        f"- violations: {len(report.violations)}",
        "- note: measurements come from simulated channels, not live equipment",
        "",
        "## Migration coverage",
        "",
        "| Interface | Allowed protections | Exercised | Established | Violation |",
        "|---|---|---|---|---|",
    ]
    topology = netsim.build_topology()
    by_iface: dict[str, list] = {}
    for entry in report.channels:
        by_iface.setdefault(entry["interface"], []).append(entry)
    for name, binding in topology.bindings.items():
        rows = by_iface.get(name.value, [])
        allowed = ", ".join(sorted(p.value for p in binding.allowed_protocols))
        exercised = ", ".join(sorted({r["protocol"] for r in rows})) or "-"
        established = ("yes" if rows and all(r["established"] for r in rows)
                       else ("no" if rows else "-"))
        violation = "yes" if any(r["policy_violation"] for r in rows) else "no"
        lines.append(f"| {name.value} | {allowed} | {exercised} | {established} | {violation} |")
    lines.append("")
    lines.append("## Channels")
    lines.append("")
    lines.append("| Interface | Protocol | Mode | Established | Handshake bytes | "
                 "Datagrams | Retransmissions | Sim time (ms) |")
    lines.append("|---|---|---|---|---|---|---|---|")
    for entry in report.channels:
        lines.append(
            f"| {entry['interface']} | {entry['protocol']} | {entry['mode']} "
            f"| {'yes' if entry['established'] else 'no'} | {entry['handshake_bytes']} "
            f"| {entry['datagrams_sent']} | {entry['retransmissions']} "
            f"| {entry['sim_time_ms']} |")
    if report.comparison:
        lines.append("")
        lines.append("## Signature size classes (key + signature)")
        lines.append("")
        lines.append("| Size class | KB | Handshake bytes |")
        lines.append("|---|---|---|")
        for row in report.comparison["size_ranking"]:
            lines.append(f"| {row['size_class']} | {row['key_plus_signature_kb']} "
                         f"| {row['handshake_bytes']} |")
    if report.kat:
        lines.append("")
        lines.append("## Known-answer suites")
        lines.append("")
        for name, row in report.kat.items():
            if name == "ok":
                continue
            lines.append(f"- {name}: {row['passed']}/{row['vectors']} passed")
    lines.append("")
    return "\n".join(lines)
