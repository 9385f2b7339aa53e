import json

import pytest

from curvlab import cli


def test_core_run_writes_certificates_and_summary(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--suite", "core-curvature", "--model", "round-S3", "--out", str(out)]) == 0
    summary = (out / "summary.txt").read_text()
    assert "PASS core-curvature round-S3" in summary and "max_bianchi_residual" in summary
    assert (out / "core-curvature__round-S3__0.json").exists()
    assert (out / "core-curvature__round-S3__0.csv").exists()


def test_equal_seeds_give_equal_bytes_and_replay(tmp_path):
    paths = []
    for name in ("a", "b"):
        cli.main(["run", "--suite", "core-curvature", "--model", "round-S2", "--out", str(tmp_path / name),
                  "--seed", "3"])
        paths.append(tmp_path / name / "core-curvature__round-S2__0.json")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert cli.main(["replay", str(paths[0])]) == 0


def test_replay_detects_edits(tmp_path, capsys):
    cli.main(["run", "--suite", "core-curvature", "--model", "round-S2", "--out", str(tmp_path)])
    p = tmp_path / "core-curvature__round-S2__0.json"
    d = json.loads(p.read_text())
    d["stages"][0]["quantities"][0]["value"] = "0.5"
    p.write_text(json.dumps(d, sort_keys=True, indent=1) + "\n")
    assert cli.main(["replay", str(p)]) == 1
    assert "replay mismatch" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--suite", "no-such-suite"],
    ["run", "--suite", "core-curvature", "--model", "klein-bottle"],
    ["run", "--suite", "core-curvature", "--tol-scale", "0"],
    ["describe-model", "klein-bottle"],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert cli.main(argv + (["--out", str(tmp_path)] if argv[0] == "run" else [])) == 2


def test_config_version_is_checked(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 99, "suites": {}}))
    assert cli.main(["run", "--suite", "core-curvature", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_overrides_reach_the_certificate(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1, "suites": {"core-curvature": {"samples": 3}}}))
    assert cli.main(["run", "--suite", "core-curvature", "--model", "flat-R3", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 0
    cert = json.loads((tmp_path / "core-curvature__flat-R3__0.json").read_text())
    assert cert["config"]["params"]["samples"] == 3


def test_hypothesis_violation_exits_1(tmp_path, capsys):
    code = cli.main(["run", "--suite", "ricci-lift", "--model", "torus-T2-on-S3", "--out", str(tmp_path)])
    assert code == 1
    assert "hypothesis_violation" in capsys.readouterr().err


def test_list_and_describe(capsys):
    assert cli.main(["list-models"]) == 0
    assert "davis-SO3-on-S7" in capsys.readouterr().out
    assert cli.main(["describe-model", "spin9xS8", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["id"] == "spin9xS8"
