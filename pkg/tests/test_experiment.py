"""Scenario runner artifacts, summaries, integrity checks, and the CLI."""

import csv
import hashlib
import json
import logging
import shutil

import numpy as np
import pytest

from dualsched import ConfigError, parse_scenario
from dualsched.cli import main
from dualsched.experiment import check_artifacts, emit_summary, run_scenario

MINI_INI = """\
[scenario]
name = mini
regime = stochastic-both
alphas = 0.01
iters = 2000
seeds = 1, 2
policy = block
policy_T = 3
checkpoints = 100, 1000, 2000

[problem]
objective_weights = 1, 1
constraint_rows = -1 0; 0 -1; 1 0; 0 1
mean_perturbation = 0.25, 0.5, -1, -1
action_points = 0 0; 1 0; 0 1
scale = 0.7777777777777778
slater_point = 0.26, 0.51

[arrivals]
kinds = bernoulli 0.25, bernoulli 0.5, constant -1, constant -1

[admissibility]
pairs = 0 0; 0 1; 0 2; 1 0; 1 1; 2 0; 2 2

[epsilon]
source = from-queue-identification

[reference]
dual = 0.5, 1
"""

DET_INI = """\
[scenario]
name = tiny-det
regime = deterministic
alphas = 0.01
iters = 500
seeds = 7
policy = myopic
checkpoints = 100, 500

[problem]
objective_weights = 1, 1
constraint_rows = -1 0; 0 -1; 1 0; 0 1
mean_perturbation = 0.25, 0.5, -1, -1
action_points = 0 0; 1 0; 0 1
scale = 0.7777777777777778
slater_point = 0.26, 0.51

[perturbation]
kinds = constant 0.25, constant 0.5, constant -1, constant -1
"""


def tree_digest(root):
    """Relative path -> sha256 for every regular file under root."""
    digest = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return digest


@pytest.fixture(scope="session")
def mini_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario") / "out"
    config = parse_scenario(MINI_INI)
    run_scenario(config, out)
    return config, out


class TestRunScenario:
    def test_artifact_layout(self, mini_run):
        _, out = mini_run
        for name in ("config.json", "manifest.json", "oracle.json",
                     "summary.csv"):
            assert (out / name).is_file()
        for seed in (1, 2):
            jd = out / "alpha-0.01" / f"seed-{seed:04d}"
            for name in ("trajectory.csv", "ledger.csv", "bounds.json",
                         "manifest.json"):
                assert (jd / name).is_file()

    def test_refuses_nonempty_directory(self, mini_run, tmp_path):
        config, _ = mini_run
        out = tmp_path / "busy"
        out.mkdir()
        (out / "keep.txt").write_text("do not clobber\n")
        with pytest.raises(ConfigError, match="not empty"):
            run_scenario(config, out)
        assert (out / "keep.txt").read_text() == "do not clobber\n"

    def test_rerun_is_byte_identical(self, mini_run, tmp_path):
        config, out = mini_run
        again = tmp_path / "again"
        run_scenario(config, again)
        assert tree_digest(again) == tree_digest(out)

    def test_parallel_matches_serial(self, mini_run, tmp_path):
        config, out = mini_run
        pooled = tmp_path / "pooled"
        run_scenario(config, pooled, jobs=2)
        assert tree_digest(pooled) == tree_digest(out)

    def test_manifest_records_grid_and_hash(self, mini_run):
        config, out = mini_run
        with open(out / "manifest.json") as fh:
            manifest = json.load(fh)
        assert manifest["config_hash"] == config.config_hash()
        assert manifest["alphas"] == ["0.01"]
        assert manifest["seeds"] == [1, 2]

    def test_trajectory_floats_round_trip(self, mini_run):
        _, out = mini_run
        path = out / "alpha-0.01" / "seed-0001" / "trajectory.csv"
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            row = next(reader)
        lam_cols = [i for i, name in enumerate(header)
                    if name.startswith("lam_")]
        assert len(lam_cols) == 4
        values = [float(row[i]) for i in lam_cols]
        rewritten = [float("%.17g" % v) for v in values]
        assert rewritten == values


class TestEmitSummary:
    def test_rows_cover_the_grid(self, mini_run):
        _, out = mini_run
        rows = emit_summary(out, write=False)
        assert [(r["alpha"], r["k"]) for r in rows] == [
            (0.01, 100), (0.01, 1000), (0.01, 2000)]
        for row in rows:
            assert row["runs"] == 2
            assert np.isfinite(row["f_gap_mean"])
            assert row["bounds_pass"] == 2
            assert row["bounds_fail"] == 0

    def test_summary_csv_matches_rows(self, mini_run):
        _, out = mini_run
        rows = emit_summary(out, write=False)
        with open(out / "summary.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            stored = list(reader)
        assert len(stored) == len(rows)
        for disk, row in zip(stored, rows):
            assert float(disk["alpha"]) == row["alpha"]
            assert int(disk["k"]) == row["k"]
            assert float(disk["f_gap_mean"]) == pytest.approx(
                row["f_gap_mean"], rel=1e-15)

    def test_seed_order_does_not_matter(self, mini_run, tmp_path):
        _, out = mini_run
        shuffled = tmp_path / "shuffled"
        shutil.copytree(out, shuffled)
        with open(shuffled / "config.json") as fh:
            cfg = json.load(fh)
        cfg["seeds"] = cfg["seeds"][::-1]
        with open(shuffled / "config.json", "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
        assert emit_summary(shuffled, write=False) == emit_summary(
            out, write=False)

    def test_single_deterministic_run_has_zero_std(self, tmp_path):
        config = parse_scenario(DET_INI)
        out = tmp_path / "det"
        run_scenario(config, out)
        rows = emit_summary(out, write=False)
        assert len(rows) == 2
        for row in rows:
            assert row["runs"] == 1
            assert row["f_gap_std"] == 0.0

    def test_empty_directory_warns_and_yields_empty_table(self, tmp_path,
                                                          caplog):
        out = tmp_path / "blank"
        out.mkdir()
        with caplog.at_level(logging.WARNING, logger="dualsched.experiment"):
            rows = emit_summary(out, write=True)
        assert rows == []
        assert any("empty" in rec.message for rec in caplog.records)
        with open(out / "summary.csv", newline="") as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("alpha,")

    def test_missing_job_shrinks_run_count(self, mini_run, tmp_path, caplog):
        _, out = mini_run
        partial = tmp_path / "partial"
        shutil.copytree(out, partial)
        shutil.rmtree(partial / "alpha-0.01" / "seed-0002")
        with caplog.at_level(logging.WARNING, logger="dualsched.experiment"):
            rows = emit_summary(partial, write=False)
        assert all(row["runs"] == 1 for row in rows)
        assert any("missing trajectory" in rec.message
                   for rec in caplog.records)


class TestCheckArtifacts:
    def test_fresh_run_passes(self, mini_run):
        _, out = mini_run
        report = check_artifacts(out)
        assert report.ok
        names = [item.name for item in report.items]
        assert "config-hash" in names and "oracle" in names
        assert "summary" in names

    def test_truncated_trajectory_is_flagged(self, mini_run, tmp_path):
        _, out = mini_run
        bad = tmp_path / "truncated"
        shutil.copytree(out, bad)
        path = bad / "alpha-0.01" / "seed-0001" / "trajectory.csv"
        lines = path.read_text().splitlines(keepends=True)
        path.write_text("".join(lines[:-1]))
        report = check_artifacts(bad)
        assert not report.ok
        failing = [item for item in report.items if not item.ok]
        assert any("rows" in item.detail for item in failing)

    def test_flipped_ledger_row_is_flagged(self, mini_run, tmp_path):
        _, out = mini_run
        bad = tmp_path / "ledger-flip"
        shutil.copytree(out, bad)
        path = bad / "alpha-0.01" / "seed-0002" / "ledger.csv"
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        rows[1][-1] = "0"
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        report = check_artifacts(bad)
        assert not report.ok
        assert any("ledger" in item.detail for item in report.failures())

    def test_edited_config_breaks_the_hash(self, mini_run, tmp_path):
        _, out = mini_run
        bad = tmp_path / "config-edit"
        shutil.copytree(out, bad)
        with open(bad / "config.json") as fh:
            cfg = json.load(fh)
        cfg["iters"] = cfg["iters"] + 1
        with open(bad / "config.json", "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
        report = check_artifacts(bad)
        hash_item = next(item for item in report.items
                         if item.name == "config-hash")
        assert not hash_item.ok

    def test_missing_oracle_is_flagged(self, mini_run, tmp_path):
        _, out = mini_run
        bad = tmp_path / "no-oracle"
        shutil.copytree(out, bad)
        (bad / "oracle.json").unlink()
        report = check_artifacts(bad)
        oracle_item = next(item for item in report.items
                           if item.name == "oracle")
        assert not oracle_item.ok

    def test_failed_bound_claim_is_flagged(self, mini_run, tmp_path):
        _, out = mini_run
        bad = tmp_path / "bound-flip"
        shutil.copytree(out, bad)
        path = bad / "alpha-0.01" / "seed-0001" / "bounds.json"
        with open(path) as fh:
            bounds = json.load(fh)
        bounds["certificate"]["upper_gap"]["ok"] = False
        with open(path, "w") as fh:
            json.dump(bounds, fh, indent=2, sort_keys=True)
        report = check_artifacts(bad)
        assert not report.ok
        assert any("upper_gap" in item.detail for item in report.failures())

    def test_unwritten_directory_reports_missing_config(self, tmp_path):
        report = check_artifacts(tmp_path / "nowhere")
        assert not report.ok
        assert report.items[0].name == "config"


class TestCli:
    @pytest.fixture()
    def det_ini(self, tmp_path):
        path = tmp_path / "tiny.ini"
        path.write_text(DET_INI)
        return path

    def test_run_summarize_check_round_trip(self, det_ini, tmp_path, capsys):
        out = tmp_path / "cli-out"
        assert main(["run", str(det_ini), "--out", str(out)]) == 0
        assert "1 jobs" in capsys.readouterr().out
        assert main(["summarize", str(out)]) == 0
        assert "alpha" in capsys.readouterr().out
        assert main(["check", str(out)]) == 0
        assert "checks passed" in capsys.readouterr().out

    def test_check_exits_one_on_tampering(self, det_ini, tmp_path, capsys):
        out = tmp_path / "cli-bad"
        assert main(["run", str(det_ini), "--out", str(out)]) == 0
        path = out / "alpha-0.01" / "seed-0007" / "trajectory.csv"
        lines = path.read_text().splitlines(keepends=True)
        path.write_text("".join(lines[:-1]))
        assert main(["check", str(out)]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_invalid_scenario_exits_two(self, tmp_path, capsys):
        path = tmp_path / "broken.ini"
        path.write_text(DET_INI.replace("[problem]", "[trouble]"))
        out = tmp_path / "never"
        assert main(["run", str(path), "--out", str(out)]) == 2
        assert "error:" in capsys.readouterr().err
        assert not out.exists()

    def test_missing_scenario_file_exits_two(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.ini"),
                     "--out", str(tmp_path / "out")]) == 2

    def test_nonempty_output_exits_two(self, det_ini, tmp_path):
        out = tmp_path / "occupied"
        out.mkdir()
        (out / "stale.txt").write_text("x")
        assert main(["run", str(det_ini), "--out", str(out)]) == 2

    def test_oracle_command_writes_certified_result(self, det_ini, tmp_path,
                                                    capsys):
        target = tmp_path / "oracle.json"
        assert main(["oracle", str(det_ini), "--out", str(target)]) == 0
        assert "certified" in capsys.readouterr().out
        with open(target) as fh:
            doc = json.load(fh)
        assert doc["f_star"] == pytest.approx(0.3125, abs=1e-6)
