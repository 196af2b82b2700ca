"""Scenario runner: artifact layout, summaries, and integrity checks.

`run_scenario` executes every (step size, seed) job of a validated
scenario and writes a self-describing directory:

    out/
      config.json       canonical scenario dict (the hash source)
      manifest.json     name, config hash, code version, job grid
      oracle.json       certified fluid optimum, when the solve certifies
      summary.csv       one aggregate row per (step size, checkpoint)
      alpha-<repr>/seed-<nnnn>/
        trajectory.csv  per-iteration state, 17 significant digits
        ledger.csv      telescoping-inequality rows per reference point
        bounds.json     closed-form bound certificate (single run),
                        plus queue continuity and stability reports
        manifest.json   job coordinates tied to the config hash

    trajectory.csv column order (fixed): k, the multiplier lam_*, the
    continuous point x_*, the drawn perturbation delta_*, eps_norm,
    f_running_avg (objective at the running average point), then the
    five running ledger terms gamma_a..gamma_e0 (gamma_e evaluated at
    the zero reference point).  Queue-driven runs append the integer
    occupancies Q_*, action_index, the cumulative scheduler divergence
    s_* with its care monitor gamma = -min_j s_j, and div_norm.

Everything is reproducible from config.json plus the code version: no
timestamps, no machine identifiers, floats written with enough digits
to round-trip.  A rerun of the same scenario produces byte-identical
CSV files.  Partial outputs are removed if a run aborts.

`emit_summary` rebuilds summary.csv from the artifacts on disk (so it
also works on a directory produced elsewhere) and `check_artifacts`
re-validates hashes, shapes, ledger rows, and stored certificates,
which is what the command-line `check` exit code reports.
"""

from __future__ import annotations

import csv
import hashlib
import importlib.metadata
import json
import logging
import pathlib
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ScenarioConfig, parse_scenario
from .dual import (default_checkpoints, lemma1_ledger_reports, run_dual_ascent,
                   theorem2_bounds)
from .oracle import OracleResult, fluid_oracle
from .problem import ConfigError
from .queuesim import (ArrivalProcess, queue_continuity_check,
                       run_network_sim, stability_metric)

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("alpha", "k", "runs", "f_gap_mean", "f_gap_std",
                   "slope_mean", "max_continuity_ratio", "bounds_pass",
                   "bounds_fail")

AP_EXAMPLE_INI = """\
[scenario]
name = ap-example
regime = stochastic-both
alphas = 0.01, 0.001
iters = 50000
seeds = 1..20
policy = block
policy_T = 3
checkpoints = 100, 1000, 10000, 20000, 50000

[problem]
objective_weights = 1, 3
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
dual = 2, 1
"""


def ap_example_scenario() -> ScenarioConfig:
    """The bundled two-queue access-point scenario, fully validated."""
    return parse_scenario(AP_EXAMPLE_INI)


def _package_version() -> str:
    try:
        return importlib.metadata.version("dualsched")
    except importlib.metadata.PackageNotFoundError:
        return "unpackaged"


def _g(x) -> str:
    """Format a float with enough digits to round-trip exactly."""
    return "%.17g" % float(x)


def _job_dir(out: pathlib.Path, alpha: float, seed: int) -> pathlib.Path:
    return out / f"alpha-{alpha!r}" / f"seed-{seed:04d}"


def _trajectory_header(m: int, n: int, num_actions: Optional[int]) -> list:
    """Fixed column order; num_actions is None for pure dual runs."""
    header = (["k"] + [f"lam_{j}" for j in range(m)]
              + [f"x_{j}" for j in range(n)]
              + [f"delta_{j}" for j in range(m)]
              + ["eps_norm", "f_running_avg",
                 "gamma_a", "gamma_b", "gamma_c", "gamma_d", "gamma_e0"])
    if num_actions is not None:
        header += ([f"Q_{j}" for j in range(m)] + ["action_index"]
                   + [f"s_{j}" for j in range(num_actions)]
                   + ["gamma", "div_norm"])
    return header


def _running_gammas(spec, traj) -> np.ndarray:
    """The five ledger terms at every k, with gamma_e at theta = 0."""
    subg = traj.xs @ spec.A.T + traj.deltas
    dev = traj.deltas - spec.delta
    ks = np.arange(1, traj.iters + 1, dtype=float)
    g2 = np.cumsum(np.einsum("ij,ij->i", subg, subg))
    d2 = np.cumsum(np.einsum("ij,ij->i", dev, dev))
    dg = np.cumsum(np.einsum("ij,ij->i", dev, subg))
    eg = np.cumsum(traj.eps_norms * np.linalg.norm(subg, axis=1))
    ld = np.cumsum(np.einsum("ij,ij->i", traj.lambdas[:traj.iters], dev))
    return np.column_stack([g2 / (2 * ks), d2 / (2 * ks), dg / ks,
                            2 * eg / ks, ld / ks])


def _write_trajectory(path, result, sim=None) -> None:
    traj = result.trajectory
    m = traj.lambdas.shape[1]
    n = traj.xs.shape[1]
    num_actions = sim.divs.shape[1] if sim is not None else None
    gammas = _running_gammas(result.spec, traj)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_trajectory_header(m, n, num_actions))
        for k in range(1, traj.iters + 1):
            row = ([str(k)]
                   + [_g(v) for v in traj.lambdas[k - 1]]
                   + [_g(v) for v in traj.xs[k - 1]]
                   + [_g(v) for v in traj.deltas[k - 1]]
                   + [_g(traj.eps_norms[k - 1]), _g(traj.f_xbar[k - 1])]
                   + [_g(v) for v in gammas[k - 1]])
            if sim is not None:
                row += ([str(int(q)) for q in sim.queues[k - 1]]
                        + [str(int(sim.actions[k - 1]))]
                        + [_g(v) for v in sim.divs[k - 1]]
                        + [_g(0.0 - sim.divs[k - 1].min()),
                           _g(sim.div_norms[k - 1])])
            writer.writerow(row)


def _write_ledger(path, labelled_reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "k", "lhs", "rhs", "slack", "ok"])
        for label, report in labelled_reports:
            for row in report.rows:
                writer.writerow([label, str(row.k), _g(row.lhs), _g(row.rhs),
                                 _g(row.slack), str(int(row.ok))])


def _continuity_dict(rep) -> dict:
    return {"psi_x": rep.psi_x, "bound": rep.bound, "max_gap": rep.max_gap,
            "max_gap_slot": rep.max_gap_slot, "max_ratio": rep.max_ratio,
            "violations": rep.violations,
            "first_violation": rep.first_violation,
            "growth_ratio": rep.growth_ratio, "ok": bool(rep.ok)}


def _stability_dict(rep) -> dict:
    return {"checkpoints": [int(c) for c in rep.checkpoints],
            "averages": [[float(v) for v in row] for row in rep.averages],
            "slope": rep.slope, "slope_tol": rep.slope_tol,
            "stable": bool(rep.stable)}


def _run_job(config: ScenarioConfig, alpha: float, seed: int,
             job_dir: str, oracle_path: Optional[str]) -> None:
    """One (step size, seed) run; writes the four job artifacts.

    Module-level so a process pool can dispatch it.  The oracle is read
    from disk rather than shipped through the pool to keep the pickled
    payload small and the job reproducible in isolation.
    """
    jd = pathlib.Path(job_dir)
    jd.mkdir(parents=True, exist_ok=False)
    oracle = None
    if oracle_path is not None and pathlib.Path(oracle_path).exists():
        oracle = OracleResult.load(oracle_path)

    spec = config.spec
    if config.eps_source == "from-queue-identification":
        sim = run_network_sim(spec, ArrivalProcess(config.stream), alpha,
                              config.iters, policy=config.make_policy(),
                              seed=seed, inner_tol=config.inner_tol)
        result = sim.as_dual_result()
    else:
        sim = None
        result = run_dual_ascent(spec, config.stream, alpha, config.iters,
                                 eps_source=config.eps_source,
                                 eps_fn=config.make_eps_fn(), seed=seed,
                                 inner_tol=config.inner_tol)

    _write_trajectory(jd / "trajectory.csv", result, sim)

    thetas = [("zero", np.zeros(spec.num_constraints))]
    if oracle is not None and oracle.certified:
        thetas.append(("oracle", np.asarray(oracle.lambda_star)))
    reports = lemma1_ledger_reports(result, [t for _, t in thetas],
                                    checkpoints=config.checkpoints)
    _write_ledger(jd / "ledger.csv",
                  list(zip([label for label, _ in thetas], reports)))

    bounds = {"single_run": True, "certificate": None,
              "continuity": None, "stability": None}
    if oracle is not None and oracle.certified:
        cert = theorem2_bounds([result], oracle.lambda_star, oracle.f_star,
                               h_star=oracle.h_star)
        bounds["certificate"] = cert.to_dict()
    if sim is not None:
        bounds["continuity"] = _continuity_dict(queue_continuity_check(sim))
        bounds["stability"] = _stability_dict(
            stability_metric(sim, checkpoints=config.checkpoints))
    with open(jd / "bounds.json", "w") as fh:
        json.dump(bounds, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = {"scenario": config.name, "config_hash": config.config_hash(),
                "version": _package_version(), "alpha": repr(alpha),
                "seed": int(seed), "iters": int(config.iters),
                "policy": config.policy_kind, "eps_source": config.eps_source}
    with open(jd / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _clear_outputs(out: pathlib.Path, created: bool) -> None:
    if created:
        shutil.rmtree(out, ignore_errors=True)
        return
    for child in out.iterdir():
        if child.is_dir():
            shutil.rmtree(child, ignore_errors=True)
        else:
            child.unlink(missing_ok=True)


def run_scenario(config: ScenarioConfig, out_dir, jobs: int = 1) \
        -> pathlib.Path:
    """Run the full (step size, seed) grid and write all artifacts.

    Refuses a non-empty output directory.  With jobs > 1 the grid runs
    on a process pool; results are identical either way because every
    job is seeded independently.  On any failure the partial outputs
    are removed before the exception propagates.
    """
    out = pathlib.Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory '{out}' is not empty; "
                          f"refusing to overwrite existing artifacts")
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    try:
        oracle_error = None
        oracle_path = out / "oracle.json"
        try:
            oracle = fluid_oracle(config.spec,
                                  reference_dual=config.reference_dual)
            oracle.save(oracle_path)
            if not oracle.certified:
                logger.warning(
                    "oracle did not certify (%s); ledger checks fall back "
                    "to the zero reference point", "; ".join(oracle.notes))
        except Exception as exc:
            oracle_error = str(exc)
            logger.warning("oracle solve failed: %s", exc)

        with open(out / "config.json", "w") as fh:
            json.dump(config.canonical(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest = {"scenario": config.name,
                    "config_hash": config.config_hash(),
                    "version": _package_version(),
                    "alphas": [repr(a) for a in config.alphas],
                    "seeds": [int(s) for s in config.seeds],
                    "iters": int(config.iters),
                    "policy": config.policy_kind,
                    "eps_source": config.eps_source,
                    "jobs": len(config.alphas) * len(config.seeds),
                    "oracle_error": oracle_error}
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

        grid = [(alpha, seed) for alpha in config.alphas
                for seed in config.seeds]
        for alpha in config.alphas:
            (out / f"alpha-{alpha!r}").mkdir(exist_ok=True)
        opath = str(oracle_path) if oracle_error is None else None
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_job, config, alpha, seed,
                                       str(_job_dir(out, alpha, seed)), opath)
                           for alpha, seed in grid]
                for future in futures:
                    future.result()
        else:
            for alpha, seed in grid:
                _run_job(config, alpha, seed,
                         str(_job_dir(out, alpha, seed)), opath)
        emit_summary(out)
    except BaseException:
        _clear_outputs(out, created)
        raise
    return out


def _checkpoint_f(path, wanted: set) -> dict:
    """f_running_avg at the wanted iteration numbers, streamed."""
    picked = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        col = header.index("f_running_avg")
        for row in reader:
            k = int(row[0])
            if k in wanted:
                picked[k] = float(row[col])
    return picked


def emit_summary(out_dir, write: bool = True) -> list:
    """Aggregate job artifacts into one row per (step size, checkpoint).

    Reads only what is on disk, so it works on any finished (or partly
    finished) scenario directory.  Missing jobs shrink the run count
    and log a warning; an empty directory yields an empty table.
    Aggregation is over a set of seeds, so the result does not depend
    on the order jobs finished.
    """
    out = pathlib.Path(out_dir)
    rows = []
    config_path = out / "config.json"
    if not config_path.exists():
        logger.warning("no config.json under '%s'; emitting empty summary",
                       out)
        if write:
            _write_summary_csv(out / "summary.csv", rows)
        return rows
    with open(config_path) as fh:
        cfg = json.load(fh)
    alphas = sorted(float(a) for a in cfg["alphas"])
    seeds = sorted(int(s) for s in cfg["seeds"])
    iters = int(cfg["iters"])
    checkpoints = [int(c) for c in cfg.get("checkpoints",
                                           default_checkpoints(iters))]
    f_star = None
    if (out / "oracle.json").exists():
        oracle = OracleResult.load(out / "oracle.json")
        if oracle.certified:
            f_star = oracle.f_star

    for alpha in alphas:
        f_at = {k: [] for k in checkpoints}
        slopes = []
        ratios = []
        bounds_pass = bounds_fail = 0
        runs = 0
        for seed in seeds:
            jd = _job_dir(out, alpha, seed)
            traj_path = jd / "trajectory.csv"
            if not traj_path.exists():
                logger.warning("missing trajectory for alpha=%r seed=%d; "
                               "summary is partial", alpha, seed)
                continue
            runs += 1
            picked = _checkpoint_f(traj_path, set(checkpoints))
            for k in checkpoints:
                if k in picked:
                    f_at[k].append(picked[k])
            bounds_path = jd / "bounds.json"
            if bounds_path.exists():
                with open(bounds_path) as fh:
                    bounds = json.load(fh)
                cert = bounds.get("certificate")
                if cert is not None:
                    if all(cert[c]["ok"] for c in
                           ("upper_gap", "lower_gap", "violation")
                           if cert[c] is not None) \
                            and (cert["multiplier"] is None
                                 or cert["multiplier"]["ok"]):
                        bounds_pass += 1
                    else:
                        bounds_fail += 1
                if bounds.get("stability") is not None:
                    slopes.append(float(bounds["stability"]["slope"]))
                if bounds.get("continuity") is not None:
                    ratios.append(float(bounds["continuity"]["max_ratio"]))
        for k in checkpoints:
            values = np.asarray(f_at[k], dtype=float)
            if f_star is not None and values.size:
                gaps = np.abs(values - f_star)
                gap_mean = float(gaps.mean())
                gap_std = float(gaps.std(ddof=1)) if gaps.size > 1 else 0.0
            else:
                gap_mean = gap_std = float("nan")
            rows.append({
                "alpha": alpha, "k": k, "runs": runs,
                "f_gap_mean": gap_mean, "f_gap_std": gap_std,
                "slope_mean": float(np.mean(slopes)) if slopes
                else float("nan"),
                "max_continuity_ratio": float(np.max(ratios)) if ratios
                else float("nan"),
                "bounds_pass": bounds_pass, "bounds_fail": bounds_fail,
            })
    if write:
        _write_summary_csv(out / "summary.csv", rows)
    return rows


def _write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([repr(row["alpha"]), str(row["k"]),
                             str(row["runs"]), _g(row["f_gap_mean"]),
                             _g(row["f_gap_std"]), _g(row["slope_mean"]),
                             _g(row["max_continuity_ratio"]),
                             str(row["bounds_pass"]),
                             str(row["bounds_fail"])])


@dataclass(frozen=True)
class CheckItem:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class CheckReport:
    """Outcome of re-validating a scenario directory."""

    items: list

    @property
    def ok(self) -> bool:
        return all(item.ok for item in self.items)

    def failures(self) -> list:
        return [item for item in self.items if not item.ok]


def _check_job(jd: pathlib.Path, cfg: dict, config_hash: str, alpha: float,
               seed: int, oracle_certified: bool) -> CheckItem:
    name = f"job {jd.parent.name}/{jd.name}"
    problems = []
    for fname in ("trajectory.csv", "ledger.csv", "bounds.json",
                  "manifest.json"):
        if not (jd / fname).exists():
            problems.append(f"missing {fname}")
    if problems:
        return CheckItem(name, False, "; ".join(problems))

    with open(jd / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("config_hash") != config_hash:
        problems.append("manifest hash differs from config.json")
    if manifest.get("alpha") != repr(alpha) or manifest.get("seed") != seed:
        problems.append("manifest coordinates differ from directory name")

    iters = int(cfg["iters"])
    m = len(cfg["mean_perturbation"])
    n = len(cfg["objective_weights"])
    num_actions = len(cfg["action_points"]) \
        if cfg["eps_source"] == "from-queue-identification" else None
    expected = _trajectory_header(m, n, num_actions)
    with open(jd / "trajectory.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        count = 0
        first = last = None
        finite = True
        for row in reader:
            count += 1
            k = int(row[0])
            first = k if first is None else first
            last = k
            if not all(np.isfinite(float(v)) for v in row[1:]):
                finite = False
    if header != expected:
        problems.append("trajectory header differs from the declared layout")
    if count != iters or first != 1 or last != iters:
        problems.append(f"trajectory has {count} rows (expected {iters})")
    if not finite:
        problems.append("trajectory contains non-finite values")

    checkpoints = [int(c) for c in cfg.get("checkpoints",
                                           default_checkpoints(iters))]
    expected_thetas = ["zero"] + (["oracle"] if oracle_certified else [])
    seen = {}
    bad_rows = 0
    with open(jd / "ledger.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for label, k, _lhs, _rhs, _slack, ok in reader:
            seen.setdefault(label, []).append(int(k))
            if ok != "1":
                bad_rows += 1
    if sorted(seen) != sorted(expected_thetas):
        problems.append(f"ledger reference points {sorted(seen)} != "
                        f"{sorted(expected_thetas)}")
    for label, ks in seen.items():
        if ks != sorted(checkpoints):
            problems.append(f"ledger checkpoints for '{label}' differ")
    if bad_rows:
        problems.append(f"{bad_rows} ledger row(s) violated")

    with open(jd / "bounds.json") as fh:
        bounds = json.load(fh)
    cert = bounds.get("certificate")
    if oracle_certified and cert is None:
        problems.append("bound certificate missing despite certified oracle")
    if cert is not None:
        for claim in ("upper_gap", "lower_gap", "violation", "multiplier"):
            if cert.get(claim) is not None and not cert[claim]["ok"]:
                problems.append(f"bound claim '{claim}' failed")
    if bounds.get("continuity") is not None \
            and not bounds["continuity"]["ok"]:
        problems.append("queue continuity bound violated")
    if bounds.get("stability") is not None \
            and not bounds["stability"]["stable"]:
        problems.append("queue averages not flagged stable")

    if problems:
        return CheckItem(name, False, "; ".join(problems))
    return CheckItem(name, True, "all artifacts consistent")


def check_artifacts(out_dir) -> CheckReport:
    """Re-validate a finished scenario directory.

    Confirms the stored hash matches the canonical config, the oracle
    certified, every job is present with consistent manifests and
    parseable CSV files of the right shape, all ledger rows hold, and
    every stored certificate passed.  The result backs the `check`
    command's exit code.
    """
    out = pathlib.Path(out_dir)
    items = []

    config_path = out / "config.json"
    if not config_path.exists():
        return CheckReport([CheckItem("config", False,
                                      f"no config.json under '{out}'")])
    with open(config_path) as fh:
        cfg = json.load(fh)
    blob = json.dumps(cfg, sort_keys=True)
    config_hash = hashlib.sha256(blob.encode()).hexdigest()

    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        return CheckReport([CheckItem("manifest", False,
                                      "manifest.json missing")])
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("config_hash") == config_hash:
        items.append(CheckItem("config-hash", True,
                               f"sha256 {config_hash[:12]} confirmed"))
    else:
        items.append(CheckItem("config-hash", False,
                               "manifest hash differs from config.json"))

    oracle_certified = False
    if manifest.get("oracle_error"):
        items.append(CheckItem("oracle", False,
                               f"solve failed: {manifest['oracle_error']}"))
    elif not (out / "oracle.json").exists():
        items.append(CheckItem("oracle", False, "oracle.json missing"))
    else:
        oracle = OracleResult.load(out / "oracle.json")
        oracle_certified = oracle.certified
        items.append(CheckItem("oracle", oracle_certified,
                               "certified" if oracle_certified
                               else "; ".join(oracle.notes) or "uncertified"))

    alphas = [float(a) for a in cfg["alphas"]]
    seeds = [int(s) for s in cfg["seeds"]]
    for alpha in alphas:
        for seed in seeds:
            items.append(_check_job(_job_dir(out, alpha, seed), cfg,
                                    config_hash, alpha, seed,
                                    oracle_certified))

    summary_path = out / "summary.csv"
    if not summary_path.exists():
        items.append(CheckItem("summary", False, "summary.csv missing"))
    else:
        with open(summary_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            nrows = sum(1 for _ in reader)
        iters = int(cfg["iters"])
        ncheck = len(cfg.get("checkpoints", default_checkpoints(iters)))
        ok = (header == list(SUMMARY_COLUMNS)
              and nrows == len(alphas) * ncheck)
        items.append(CheckItem("summary", ok,
                               f"{nrows} rows" if ok else
                               f"{nrows} rows, expected "
                               f"{len(alphas) * ncheck}"))
    return CheckReport(items)
