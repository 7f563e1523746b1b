"""Scenario harness, report emission, KAT replay, and CLI behavior."""

import json
import pathlib

import pytest

from pqoran import cli, harness
from pqoran.errors import ConfigInvalid, MissingSuite

from helpers import KAT_DIR


# --- scenario parsing ----------------------------------------------------------------------

def test_default_scenario_has_all_interfaces():
    cfg = harness.ScenarioConfig.default(seed=4)
    assert len(cfg.channels) == 12
    assert {c.interface for c in cfg.channels} == set(harness.DEFAULT_PROTOCOL_PICK)


def test_scenario_from_dict_validation():
    with pytest.raises(ConfigInvalid):
        harness.ScenarioConfig.from_dict({"channels": [
            {"interface": "F1AP", "protocol": "SMOKE_SIGNALS"}]})
    with pytest.raises(ConfigInvalid):
        harness.ScenarioConfig.from_dict({"channels": [
            {"interface": "F1AP", "protocol": "PQ_DTLS", "repetitions": 0}]})
    with pytest.raises(ConfigInvalid):
        harness.ScenarioConfig.from_dict({"compression": "BROTLI"})
    cfg = harness.ScenarioConfig.from_dict({
        "seed": 9,
        "channels": [{"interface": "A1", "protocol": "PQ_MTLS", "mode": "PURE_PQ"}],
        "links": {"A1": {"loss_rate": 0.0}},
    })
    assert cfg.channels[0].mode == "PURE_PQ"


def test_scenario_load_missing_file(tmp_path):
    with pytest.raises(ConfigInvalid):
        harness.ScenarioConfig.load(str(tmp_path / "nope.json"))


# --- scenario execution ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_scenario():
    return harness.ScenarioConfig.from_dict({
        "seed": 21,
        "name": "small",
        "channels": [
            {"interface": "F1AP", "protocol": "PQ_DTLS", "mode": "HYBRID"},
            {"interface": "N3", "protocol": "PQ_IPSEC", "mode": "HYBRID"},
            {"interface": "A1", "protocol": "PQ_MTLS", "mode": "HYBRID"},
        ],
    })


def test_run_scenario_success(small_scenario):
    report = harness.run_scenario(small_scenario)
    assert len(report.channels) == 3
    assert report.all_established
    assert report.violations == []
    assert report.aggregates["PQ_DTLS/HYBRID"]["established"] == 1


def test_report_determinism_across_runs_and_threads(small_scenario):
    one = harness.emit(harness.run_scenario(small_scenario, threads=1), "json")
    two = harness.emit(harness.run_scenario(small_scenario, threads=1), "json")
    four = harness.emit(harness.run_scenario(small_scenario, threads=4), "json")
    assert one == two == four


def test_policy_violation_recorded():
    cfg = harness.ScenarioConfig.from_dict({
        "seed": 5,
        "channels": [{"interface": "N3", "protocol": "PQ_MTLS", "mode": "HYBRID"}],
    })
    report = harness.run_scenario(cfg)
    assert report.violations
    assert report.channels[0]["policy_violation"]


def test_markdown_has_twelve_interface_rows():
    report = harness.run_scenario(harness.ScenarioConfig.default(seed=2))
    doc = harness.emit(report, "markdown")
    table_rows = [line for line in doc.splitlines()
                  if line.startswith("| ") and "|---" not in line]
    coverage_rows = [r for r in table_rows
                     if r.split("|")[1].strip() in harness.DEFAULT_PROTOCOL_PICK]
    # 12 in the coverage table plus 12 channel rows
    assert len(coverage_rows) == 24
    assert "simulated channels" in doc


def test_emit_json_round_trips():
    report = harness.run_scenario(harness.ScenarioConfig.from_dict({
        "seed": 3, "channels": [{"interface": "A1", "protocol": "PQ_MTLS"}]}))
    doc = harness.emit(report, "json")
    parsed = json.loads(doc)
    assert parsed == report.as_dict()
    with pytest.raises(ConfigInvalid):
        harness.emit(report, "yaml")


# --- KAT replay ------------------------------------------------------------------------------

def test_kat_run_passes_on_frozen_suites():
    results = harness.kat_run(str(KAT_DIR))
    assert results["ok"]
    assert results["ml-kem-768"]["vectors"] >= 25
    assert results["ml-dsa-65"]["vectors"] >= 25
    assert results["ml-kem-768"]["failed"] == 0
    assert results["ml-dsa-65"]["failed"] == 0


def test_kat_run_names_first_diverging_field(tmp_path):
    source = (KAT_DIR / "ml-kem-768.kat").read_text().splitlines()
    corrupted = []
    flipped = False
    for line in source:
        if not flipped and line.startswith("ss="):
            value = line[3:]
            line = "ss=" + ("0" if value[0] != "0" else "1") + value[1:]
            flipped = True
        corrupted.append(line)
    (tmp_path / "ml-kem-768.kat").write_text("\n".join(corrupted) + "\n")
    results = harness.kat_run(str(tmp_path))
    assert not results["ok"]
    assert results["ml-kem-768"]["failed"] == 1
    assert results["ml-kem-768"]["first_mismatch"]["field"] == "ss"


def test_kat_run_empty_dir(tmp_path):
    with pytest.raises(MissingSuite):
        harness.kat_run(str(tmp_path))


# --- CLI -------------------------------------------------------------------------------------

def test_cli_run_exit_codes(tmp_path):
    scenario = tmp_path / "ok.json"
    scenario.write_text(json.dumps({
        "seed": 8,
        "channels": [{"interface": "A1", "protocol": "PQ_MTLS", "mode": "HYBRID"}],
    }))
    out = tmp_path / "report.json"
    assert cli.main(["run", "--scenario", str(scenario), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["channels"][0]["established"]

    violating = tmp_path / "bad.json"
    violating.write_text(json.dumps({
        "seed": 8,
        "channels": [{"interface": "N3", "protocol": "PQ_MTLS", "mode": "HYBRID"}],
    }))
    assert cli.main(["run", "--scenario", str(violating), "--out", str(out)]) == 2
    assert cli.main(["run", "--scenario", str(violating), "--out", str(out),
                     "--expect-failure"]) == 0

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert cli.main(["run", "--scenario", str(broken)]) == 3


def test_cli_kat(tmp_path, capsys):
    assert cli.main(["kat", "--dir", str(KAT_DIR)]) == 0
    assert cli.main(["kat", "--dir", str(tmp_path)]) == 3


def test_cli_ca_lifecycle(tmp_path, capsys):
    state = tmp_path / "ca.json"
    cert_path = tmp_path / "du.cert"
    assert cli.main(["ca", "init", "--state", str(state), "--name", "cli-root"]) == 0
    assert cli.main(["ca", "issue", "--state", str(state), "--subject", "o-du-9",
                     "--days", "7", "--out", str(cert_path)]) == 0
    assert cli.main(["ca", "verify", "--state", str(state), "--chain", str(cert_path),
                     "--now", "1000"]) == 0
    capsys.readouterr()
    from pqoran import pki as pki_mod
    cert = pki_mod.Certificate.decode(bytes.fromhex(cert_path.read_text().strip()))
    assert cli.main(["ca", "revoke", "--state", str(state),
                     "--serial", cert.serial.hex()]) == 0
    assert cli.main(["ca", "verify", "--state", str(state), "--chain", str(cert_path),
                     "--now", "1000"]) == 1


def test_cli_token_lifecycle(tmp_path, capsys):
    state = tmp_path / "as.json"
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({"rapp-1": ["o-ran-smo:performance-data:read"]}))
    assert cli.main(["token", "init", "--state", str(state), "--issuer", "cli-as",
                     "--policy", str(policy)]) == 0
    capsys.readouterr()
    assert cli.main(["token", "issue", "--state", str(state), "--client", "rapp-1",
                     "--scopes", "o-ran-smo:performance-data:read",
                     "--aud", "smo", "--ttl", "60000", "--now", "0"]) == 0
    token = capsys.readouterr().out.strip().splitlines()[-1]
    assert cli.main(["token", "jwks", "--state", str(state)]) == 0
    jwks_doc = capsys.readouterr().out
    jwks_path = tmp_path / "jwks.json"
    jwks_path.write_text(jwks_doc)
    assert cli.main(["token", "validate", "--jwks", str(jwks_path), "--token", token,
                     "--aud", "smo", "--scope", "o-ran-smo:performance-data:read",
                     "--now", "1000"]) == 0
    assert cli.main(["token", "validate", "--jwks", str(jwks_path), "--token", token,
                     "--aud", "other", "--scope", "o-ran-smo:performance-data:read",
                     "--now", "1000"]) == 1
    assert cli.main(["token", "rotate", "--state", str(state)]) == 0
