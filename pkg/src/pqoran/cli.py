"""Command-line harness.

Exit codes: 0 all pass, 1 protocol failure, 2 policy violation, 3 config
error.  --expect-failure inverts the run verdict for negative scenarios.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

from . import authz, entropy, harness, pki
from .errors import ConfigInvalid, MissingSuite, PqoranError
from .hybrid import CompositeKeyPair, composite_keygen, profile_for

EXIT_OK = 0
EXIT_PROTOCOL_FAILURE = 1
EXIT_POLICY_VIOLATION = 2
EXIT_CONFIG_ERROR = 3


def _entropy_source(seed_tag: str) -> entropy.EntropySource:
    return entropy.default_source(seed_tag.encode())


# --- persistent state helpers (simulation-grade, plaintext JSON) ---------------------

def _keypair_to_dict(keypair: CompositeKeyPair) -> dict:
    return {
        "profile": keypair.profile.profile_name,
        "classical_secret": keypair.classical_secret.hex(),
        "pq_secret": keypair.pq_secret.hex(),
        "public_key": keypair.public_key.hex(),
    }


def _keypair_from_dict(raw: dict) -> CompositeKeyPair:
    return CompositeKeyPair(
        profile=profile_for(raw["profile"]),
        public_key=bytes.fromhex(raw["public_key"]),
        classical_secret=bytes.fromhex(raw["classical_secret"]),
        pq_secret=bytes.fromhex(raw["pq_secret"]),
    )


def _save_ca(ca: pki.CaState, path: str) -> None:
    state = {
        "name": ca.name,
        "keypair": _keypair_to_dict(ca.keypair),
        "certificate": ca.certificate.encode().hex(),
        "issued": {s.hex(): cert.encode().hex() for s, cert in ca.issued_certs.items()},
        "revoked": {s.hex(): [reason, when] for s, (reason, when) in ca.revoked.items()},
    }
    pathlib.Path(path).write_text(json.dumps(state, indent=2, sort_keys=True))


def _load_ca(path: str) -> pki.CaState:
    raw = json.loads(pathlib.Path(path).read_text())
    ca = pki.CaState(
        name=raw["name"],
        keypair=_keypair_from_dict(raw["keypair"]),
        certificate=pki.Certificate.decode(bytes.fromhex(raw["certificate"])),
        entropy=_entropy_source(f"ca:{raw['name']}"),
    )
    for serial_hex, cert_hex in raw.get("issued", {}).items():
        serial = bytes.fromhex(serial_hex)
        ca.issued_serials.add(serial)
        ca.issued_certs[serial] = pki.Certificate.decode(bytes.fromhex(cert_hex))
    for serial_hex, (reason, when) in raw.get("revoked", {}).items():
        ca.revoked[bytes.fromhex(serial_hex)] = (reason, when)
    return ca


def _save_as(state: authz.AsState, path: str) -> None:
    raw = {
        "issuer": state.issuer,
        "profile_name": state.profile_name,
        "active_kid": state.active_kid,
        "kid_counter": state._kid_counter,
        "policy": {client: sorted(scopes) for client, scopes in state.policy.items()},
        "keys": {
            kid: {"keypair": _keypair_to_dict(key.keypair), "not_after": key.not_after}
            for kid, key in state.keys.items()
        },
    }
    pathlib.Path(path).write_text(json.dumps(raw, indent=2, sort_keys=True))


def _load_as(path: str) -> authz.AsState:
    raw = json.loads(pathlib.Path(path).read_text())
    state = authz.AsState(
        issuer=raw["issuer"],
        entropy=_entropy_source(f"as:{raw['issuer']}"),
        profile_name=raw["profile_name"],
        policy={client: set(scopes) for client, scopes in raw["policy"].items()},
        active_kid=raw["active_kid"],
    )
    state._kid_counter = raw["kid_counter"]
    for kid, entry in raw["keys"].items():
        state.keys[kid] = authz._SigningKey(
            kid, _keypair_from_dict(entry["keypair"]), entry["not_after"])
    return state


# --- subcommands -----------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = (harness.ScenarioConfig.load(args.scenario) if args.scenario
           else harness.ScenarioConfig.default(args.seed))
    if args.seed is not None:
        cfg.seed = args.seed
    report = harness.run_scenario(cfg, threads=args.threads)
    document = harness.emit(report, args.format)
    if args.out:
        pathlib.Path(args.out).write_text(document)
    else:
        sys.stdout.write(document)
    failed = not report.all_established
    violated = bool(report.violations)
    if args.expect_failure:
        return EXIT_OK if (failed or violated) else EXIT_PROTOCOL_FAILURE
    if violated:
        return EXIT_POLICY_VIOLATION
    if failed:
        return EXIT_PROTOCOL_FAILURE
    return EXIT_OK


def _cmd_kat(args) -> int:
    results = harness.kat_run(args.dir)
    sys.stdout.write(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if results["ok"] else EXIT_PROTOCOL_FAILURE


def _cmd_compare(args) -> int:
    comparison = harness.compare_profiles(seed=args.seed if args.seed is not None else 1)
    report = harness.Report(toolkit_version=harness.__version__,
                            scenario="profile-comparison",
                            seed=args.seed if args.seed is not None else 1,
                            comparison=comparison)
    if args.format == "json":
        sys.stdout.write(json.dumps(comparison, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(harness.emit(report, "markdown"))
    ok = comparison["size_ranking_matches_table"] and \
        comparison["classical_below_hybrid_everywhere"]
    return EXIT_OK if ok else EXIT_PROTOCOL_FAILURE


def _cmd_ca(args) -> int:
    if args.ca_cmd == "init":
        source = _entropy_source(f"ca:{args.name}")
        ca = pki.ca_init(source, args.profile, args.name, now=args.now)
        _save_ca(ca, args.state)
        print(f"initialized CA {args.name}; root serial {ca.certificate.serial.hex()}")
        return EXIT_OK
    if args.ca_cmd == "issue":
        ca = _load_ca(args.state)
        profile = profile_for(args.profile)
        subject_key = composite_keygen(
            profile, _entropy_source(f"subject:{args.subject}").draw(profile.keygen_seed_len))
        cert = pki.issue_cert(
            ca, args.subject, pki.Spki(profile.profile_name, subject_key.public_key),
            pki.KeyUsage.TLS_AUTH, validity_days=args.days, now=args.now)
        _save_ca(ca, args.state)
        pathlib.Path(args.out).write_text(cert.encode().hex() + "\n")
        if args.keyout:
            pathlib.Path(args.keyout).write_text(
                json.dumps(_keypair_to_dict(subject_key), indent=2, sort_keys=True))
        print(f"issued {cert.serial.hex()} to {args.subject} for {args.days} days")
        return EXIT_OK
    if args.ca_cmd == "verify":
        ca = _load_ca(args.state)
        chain = [pki.Certificate.decode(bytes.fromhex(pathlib.Path(p).read_text().strip()))
                 for p in args.chain]
        chain.append(ca.certificate)
        crl = pki.current_crl(ca, now=args.now)
        verdict = pki.verify_chain(chain, ca.certificate, at_time=args.now,
                                   revocation_view=crl)
        if verdict.accepted:
            print("chain: accept")
            return EXIT_OK
        print(f"chain: reject ({verdict.reason.value}: {verdict.detail})")
        return EXIT_PROTOCOL_FAILURE
    if args.ca_cmd == "revoke":
        ca = _load_ca(args.state)
        crl = pki.revoke(ca, bytes.fromhex(args.serial), args.reason, now=args.now)
        _save_ca(ca, args.state)
        print(f"revoked {args.serial}; CRL now lists {len(crl.revoked)} serials")
        return EXIT_OK
    raise ConfigInvalid(f"unknown ca subcommand {args.ca_cmd}")


def _cmd_token(args) -> int:
    if args.token_cmd == "init":
        policy = json.loads(pathlib.Path(args.policy).read_text()) if args.policy else {}
        state = authz.as_init(_entropy_source(f"as:{args.issuer}"), args.issuer,
                              policy=policy, now=args.now)
        _save_as(state, args.state)
        print(f"initialized authorization server {args.issuer}; kid {state.active_kid}")
        return EXIT_OK
    if args.token_cmd == "issue":
        state = _load_as(args.state)
        token = authz.issue_token(state, args.client, args.scopes.split(), args.aud,
                                  ttl_ms=args.ttl, now=args.now)
        _save_as(state, args.state)
        print(token)
        return EXIT_OK
    if args.token_cmd == "validate":
        jwks_doc = json.loads(pathlib.Path(args.jwks).read_text())
        resource = authz.ResourceConfig(audience=args.aud, required_scope=args.scope)
        result = authz.validate_token(resource, args.token, now=args.now, jwks_doc=jwks_doc)
        if result.accepted:
            print(json.dumps(result.claims, indent=2, sort_keys=True))
            return EXIT_OK
        print(f"reject: {result.reason.value}")
        return EXIT_PROTOCOL_FAILURE
    if args.token_cmd == "rotate":
        state = _load_as(args.state)
        kid = authz.rotate_as_key(state, now=args.now)
        _save_as(state, args.state)
        print(f"active kid is now {kid}")
        return EXIT_OK
    if args.token_cmd == "jwks":
        state = _load_as(args.state)
        print(json.dumps(authz.jwks(state, now=args.now), indent=2, sort_keys=True))
        return EXIT_OK
    raise ConfigInvalid(f"unknown token subcommand {args.token_cmd}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqoran",
        description="post-quantum secure-channel toolkit and topology simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and emit a report")
    p_run.add_argument("--scenario", help="scenario JSON file (default: built-in)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--format", choices=["json", "markdown"], default="json")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--out", help="write the report here instead of stdout")
    p_run.add_argument("--expect-failure", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_kat = sub.add_parser("kat", help="replay known-answer suites")
    p_kat.add_argument("--dir", required=True)
    p_kat.set_defaults(fn=_cmd_kat)

    p_cmp = sub.add_parser("compare", help="size-class and mode byte comparison")
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--format", choices=["json", "markdown"], default="json")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_ca = sub.add_parser("ca", help="certificate authority operations")
    ca_sub = p_ca.add_subparsers(dest="ca_cmd", required=True)
    ca_init = ca_sub.add_parser("init")
    ca_init.add_argument("--state", required=True)
    ca_init.add_argument("--name", required=True)
    ca_init.add_argument("--profile", default="Ed448-ML-DSA-65")
    ca_init.add_argument("--now", type=int, default=0)
    ca_issue = ca_sub.add_parser("issue")
    ca_issue.add_argument("--state", required=True)
    ca_issue.add_argument("--subject", required=True)
    ca_issue.add_argument("--days", type=int, default=7)
    ca_issue.add_argument("--profile", default="Ed448-ML-DSA-65")
    ca_issue.add_argument("--out", required=True)
    ca_issue.add_argument("--keyout")
    ca_issue.add_argument("--now", type=int, default=0)
    ca_verify = ca_sub.add_parser("verify")
    ca_verify.add_argument("--state", required=True)
    ca_verify.add_argument("--chain", nargs="+", required=True)
    ca_verify.add_argument("--now", type=int, default=0)
    ca_revoke = ca_sub.add_parser("revoke")
    ca_revoke.add_argument("--state", required=True)
    ca_revoke.add_argument("--serial", required=True)
    ca_revoke.add_argument("--reason", default="unspecified")
    ca_revoke.add_argument("--now", type=int, default=0)
    p_ca.set_defaults(fn=_cmd_ca)

    p_tok = sub.add_parser("token", help="authorization token operations")
    tok_sub = p_tok.add_subparsers(dest="token_cmd", required=True)
    tok_init = tok_sub.add_parser("init")
    tok_init.add_argument("--state", required=True)
    tok_init.add_argument("--issuer", required=True)
    tok_init.add_argument("--policy", help="JSON file: client -> scope list")
    tok_init.add_argument("--now", type=int, default=0)
    tok_issue = tok_sub.add_parser("issue")
    tok_issue.add_argument("--state", required=True)
    tok_issue.add_argument("--client", required=True)
    tok_issue.add_argument("--scopes", required=True)
    tok_issue.add_argument("--aud", required=True)
    tok_issue.add_argument("--ttl", type=int, default=3_600_000)
    tok_issue.add_argument("--now", type=int, default=0)
    tok_val = tok_sub.add_parser("validate")
    tok_val.add_argument("--jwks", required=True)
    tok_val.add_argument("--token", required=True)
    tok_val.add_argument("--aud", required=True)
    tok_val.add_argument("--scope", required=True)
    tok_val.add_argument("--now", type=int, default=0)
    tok_rot = tok_sub.add_parser("rotate")
    tok_rot.add_argument("--state", required=True)
    tok_rot.add_argument("--now", type=int, default=0)
    tok_jwks = tok_sub.add_parser("jwks")
    tok_jwks.add_argument("--state", required=True)
    tok_jwks.add_argument("--now", type=int, default=0)
    p_tok.set_defaults(fn=_cmd_token)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigInvalid, MissingSuite) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except PqoranError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
