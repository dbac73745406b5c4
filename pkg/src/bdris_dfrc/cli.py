"""Command-line front end: ``bdris-dfrc solve | sweep | metrics``.

Every command is a pure function of its input files, flags, and seeds;
re-running writes byte-identical outputs (no timestamps, fixed float
formatting, CRLF line endings).

Exit codes: 0 solved/converged, 3 iteration cap hit, 4 QoS infeasible,
2 bad usage or unreadable inputs, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, bundled_scenario
from .admm import QosInfeasibleError, SolveResult, SolverConfig, Waveform, solve
from .channel import CommChannels
from .metrics import (detection_probability, simulate_ber,
                      space_range_beampattern, transmit_beampattern)
from .quadforms import SceneGeometry
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MAX_ITERS = 3
EXIT_QOS = 4

_PFA_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


# -- deterministic CSV --------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def _write_csv(path: Path, provenance: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {provenance}\r\n")
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\r\n")


def _db(x: float) -> float:
    return 10.0 * math.log10(max(float(x), 1e-30))


def _config_hash(scenario_text: str, solver: SolverConfig) -> str:
    blob = json.dumps({"scenario": scenario_text, "solver": asdict(solver)},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _provenance(scenario_text: str, solver: SolverConfig, seeds) -> str:
    return (f"provenance version=bdris-dfrc/{__version__} "
            f"config=sha256:{_config_hash(scenario_text, solver)} "
            f"seeds={'|'.join(str(s) for s in seeds)}")


# -- scenario loading / patching ----------------------------------------------

def _scenario_text(spec: str) -> str:
    p = Path(spec)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    if spec in ("desk_default", "full_default"):
        return bundled_scenario(spec)
    raise ScenarioError(f"scenario file not found: {spec}")


def _patch_ini(text: str, overrides: dict[str, object]) -> str:
    """Rewrite [system] keys and re-serialize; load-time validation reruns."""
    if not overrides:
        return text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower  # type: ignore[assignment]
    cp.read_string(text)
    for key, val in overrides.items():
        cp.set("system", key, str(val))
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


# -- solution persistence -----------------------------------------------------

def _solution_blob(scenario_text: str, res: SolveResult,
                   solver: SolverConfig) -> dict[str, np.ndarray]:
    ch: CommChannels = res.info["channels"]
    h_users = (np.stack(ch.h_users) if ch.h_users
               else np.zeros((0, ch.g_mat.shape[0]), dtype=complex))
    blob = {
        "w_mat": res.waveform.w_mat,
        "symbols": res.waveform.symbols,
        "gamma": np.float64(res.waveform.gamma),
        "phi_T": res.bdris_state.phi["T"],
        "phi_R": res.bdris_state.phi["R"],
        "g_mat": ch.g_mat,
        "h_users": h_users,
        "user_angles_deg": np.asarray(ch.user_angles_deg, dtype=float),
        "scnr_history": res.scnr_history,
        "feasibility_history": res.feasibility_history,
        "scnr_final": res.scnr_final,
        "target_keys": np.asarray(res.target_keys, dtype=int),
        "status": np.str_(res.status),
        "iterations": np.int64(res.iterations),
        "seed": np.int64(res.info["seed"]),
        "scenario_text": np.str_(scenario_text),
        "solver_json": np.str_(json.dumps(asdict(solver), sort_keys=True)),
    }
    for k, u in res.filter_bank.items():
        blob[f"filter_{k}"] = u
    return blob


def _write_solution(out_dir: Path, scenario_text: str, res: SolveResult,
                    solver: SolverConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez(out_dir / "solution.npz",
             **_solution_blob(scenario_text, res, solver))
    prov = _provenance(scenario_text, solver, [int(res.info["seed"])])
    header = (["iteration"]
              + [f"scnr_db_t{k}" for k in res.target_keys]
              + ["min_scnr_db", "feasibility"])
    rows = []
    for it in range(res.scnr_history.shape[0]):
        per = [_db(v) for v in res.scnr_history[it]]
        rows.append([it] + per + [min(per), float(res.feasibility_history[it])])
    _write_csv(out_dir / "convergence.csv", prov, header, rows)


class _Loaded:
    """solution.npz pulled back into live objects for metric evaluation."""

    def __init__(self, path: Path):
        if not path.is_file():
            raise ScenarioError(f"no solution.npz under {path.parent}")
        z = np.load(path)
        self.scenario = load_scenario(str(z["scenario_text"]))
        self.channels = CommChannels(
            g_mat=z["g_mat"],
            h_users=[h for h in z["h_users"]],
            user_angles_deg=[float(a) for a in z["user_angles_deg"]])
        self.geom = SceneGeometry(self.scenario, z["g_mat"])
        self.waveform = Waveform(w_mat=z["w_mat"], symbols=z["symbols"],
                                 gamma=float(z["gamma"]))
        self.phi = {"T": z["phi_T"], "R": z["phi_R"]}
        self.target_keys = [int(k) for k in z["target_keys"]]
        self.filters = {k: z[f"filter_{k}"] for k in self.target_keys}
        self.scnr_final = np.asarray(z["scnr_final"], dtype=float)
        self.scnr_history = z["scnr_history"]
        self.feasibility_history = z["feasibility_history"]
        self.seed = int(z["seed"])
        self.solver = SolverConfig(**json.loads(str(z["solver_json"])))
        self.scenario_text = str(z["scenario_text"])


# -- solve --------------------------------------------------------------------

def cmd_solve(args) -> int:
    text = _scenario_text(args.scenario)
    over: dict[str, object] = {}
    if args.arch:
        over["arch"] = args.arch
    if args.groups is not None:
        over["groups"] = args.groups
    if args.seed is not None:
        over["rng_seed"] = args.seed
    text = _patch_ini(text, over)
    scenario = load_scenario(text)
    solver = SolverConfig()
    if args.max_iters is not None:
        solver.max_iters = args.max_iters
    if args.penalty is not None:
        solver.penalty = args.penalty
    try:
        res = solve(scenario, solver)
    except QosInfeasibleError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_QOS
    _write_solution(Path(args.out), text, res, solver)
    per = ", ".join(f"t{k}={_db(v):.3f}" for k, v in
                    zip(res.target_keys, res.scnr_final))
    print(f"{res.status} after {res.iterations} iterations; "
          f"SCNR dB: {per}; outputs in {args.out}")
    return EXIT_OK if res.status == "converged" else EXIT_MAX_ITERS


# -- sweep --------------------------------------------------------------------

_SWEEP_KEYS = {"gamma": "qos_db", "power": "power_budget_w",
               "groups": "groups", "cells": "n_cells"}


def _read_experiment(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    for field in ("scenario", "architectures", "seeds", "out"):
        if field not in spec:
            raise ScenarioError(f"experiment spec missing {field!r}")
    if not spec["architectures"] or not spec["seeds"]:
        raise ScenarioError("architectures and seeds must be non-empty")
    sweep = spec.get("sweep", "none")
    if sweep != "none":
        if (not isinstance(sweep, dict) or len(sweep) != 1
                or next(iter(sweep)) not in _SWEEP_KEYS):
            raise ScenarioError(
                "sweep must be 'none' or one of "
                + "/".join(_SWEEP_KEYS) + " with a value list")
        if not next(iter(sweep.values())):
            raise ScenarioError("empty sweep value list")
    return spec


def _sweep_point(task: tuple) -> dict:
    """One (architecture, sweep value, seed) solve; returns a writable record."""
    base_text, arch, key, value, seed, solver_kw = task
    over: dict[str, object] = {"arch": arch, "rng_seed": seed}
    if key is not None:
        over[_SWEEP_KEYS[key]] = value
    rec = {"arch": arch, "value": value, "seed": seed, "status": "ok",
           "min_scnr_db": float("nan"), "res": None, "text": ""}
    try:
        text = _patch_ini(base_text, over)
        scenario = load_scenario(text)
        solver = SolverConfig(**solver_kw)
        res = solve(scenario, solver)
        rec["status"] = "ok" if res.status == "converged" else "max-iters"
        rec["min_scnr_db"] = _db(res.scnr_final.min())
        rec["res"] = res
        rec["text"] = text
    except QosInfeasibleError:
        rec["status"] = "qos-infeasible"
    except ScenarioError as exc:
        rec["status"] = f"error: {exc}"
    except Exception as exc:  # failed points are data, not fatal
        rec["status"] = f"error: {type(exc).__name__}"
    return rec


def _point_dir(out: Path, arch: str, key, value, seed: int) -> Path:
    tag = "base" if key is None else f"{key}_{value:g}"
    return out / "points" / f"{arch}_{tag}_seed{seed}"


def cmd_sweep(args) -> int:
    spec = _read_experiment(args.spec)
    base_text = _scenario_text(spec["scenario"])
    out = Path(spec["out"])
    out.mkdir(parents=True, exist_ok=True)
    solver_kw = dict(spec.get("solver", {}))
    sweep = spec.get("sweep", "none")
    key = None if sweep == "none" else next(iter(sweep))
    values = [None] if key is None else list(sweep[key])
    tasks = [(base_text, arch, key, val, int(seed), solver_kw)
             for arch in spec["architectures"]
             for val in values
             for seed in spec["seeds"]]
    workers = int(os.environ.get("BDRIS_DFRC_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            recs = list(pool.map(_sweep_point, tasks))
    else:
        recs = [_sweep_point(t) for t in tasks]

    solver = SolverConfig(**solver_kw)
    manifest = {"sweep": key or "none", "architectures": spec["architectures"],
                "seeds": [int(s) for s in spec["seeds"]], "points": []}
    for task, rec in zip(tasks, recs):
        pdir = _point_dir(out, rec["arch"], key, rec["value"], rec["seed"])
        if rec["res"] is not None:
            _write_solution(pdir, rec["text"], rec["res"], solver)
        manifest["points"].append(
            {"arch": rec["arch"], "value": rec["value"], "seed": rec["seed"],
             "status": rec["status"], "min_scnr_db": rec["min_scnr_db"],
             "dir": str(pdir.relative_to(out))})
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)

    prov = _provenance(base_text, solver, spec["seeds"])
    xname = key or "point"
    for arch in spec["architectures"]:
        rows = []
        for val in values:
            pts = [r for r in recs
                   if r["arch"] == arch and r["value"] == val]
            ok = [r["min_scnr_db"] for r in pts if r["status"] in ("ok", "max-iters")]
            status = ("ok" if len(ok) == len(pts) and pts
                      else "failed" if not ok else "partial")
            mean_db = float(np.mean(ok)) if ok else float("nan")
            rows.append([0.0 if val is None else float(val),
                         mean_db, len(ok), status])
        _write_csv(out / f"sweep_{xname}_{arch}.csv", prov,
                   [xname, "min_scnr_db_mean", "n_seeds_ok", "status"], rows)
    n_bad = sum(1 for r in recs if r["status"] not in ("ok", "max-iters"))
    print(f"sweep complete: {len(recs) - n_bad}/{len(recs)} points solved; "
          f"outputs in {out}")
    return EXIT_OK


# -- metrics ------------------------------------------------------------------

def _metric_ber_sweep(in_dir: Path, args) -> int:
    with open(in_dir / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    xname = manifest["sweep"] if manifest["sweep"] != "none" else "point"
    by_arch: dict[str, dict[float, list[float]]] = {}
    for pt in manifest["points"]:
        if not pt["status"] in ("ok", "max-iters"):
            continue
        sol = _Loaded(in_dir / pt["dir"] / "solution.npz")
        rng = np.random.default_rng(sol.seed)
        _, avg = simulate_ber(sol.scenario, sol.channels, sol.waveform,
                              sol.phi, n_trials=args.trials, rng=rng)
        val = 0.0 if pt["value"] is None else float(pt["value"])
        by_arch.setdefault(pt["arch"], {}).setdefault(val, []).append(avg)
    for arch, series in sorted(by_arch.items()):
        rows = [[val, float(np.mean(bers))]
                for val, bers in sorted(series.items())]
        _write_csv(in_dir / f"ber_{arch}.csv",
                   f"provenance version=bdris-dfrc/{__version__} "
                   f"trials={args.trials}",
                   [f"{xname}_db" if xname == "gamma" else xname, "ber"], rows)
    print(f"wrote {len(by_arch)} BER CSVs in {in_dir}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    in_dir = Path(args.in_dir)
    if args.which == "ber" and (in_dir / "manifest.json").is_file():
        return _metric_ber_sweep(in_dir, args)
    sol = _Loaded(in_dir / "solution.npz")
    prov = _provenance(sol.scenario_text, sol.solver, [sol.seed])
    angles = np.arange(-90.0, 90.0 + args.grid_step, args.grid_step)
    if args.which == "ber":
        rng = np.random.default_rng(sol.seed)
        _, avg = simulate_ber(sol.scenario, sol.channels, sol.waveform,
                              sol.phi, n_trials=args.trials, rng=rng)
        _write_csv(in_dir / "ber.csv", prov, ["gamma_db", "ber"],
                   [[sol.scenario.qos_db, avg]])
    elif args.which == "txbp":
        for side in ("T", "R"):
            if not sol.geom.by_side[side]:
                continue
            bp = transmit_beampattern(sol.geom, sol.waveform.w_mat,
                                      sol.phi[side], angles)
            _write_csv(in_dir / f"txbp_{side}.csv", prov,
                       ["angle_deg", "power_db"],
                       zip(bp.angles, bp.values))
    elif args.which == "srbp":
        k = args.target if args.target is not None else sol.target_keys[0]
        if k not in sol.target_keys:
            raise ScenarioError(f"unknown target index {k}; "
                                f"have {sol.target_keys}")
        bp = space_range_beampattern(sol.geom, sol.waveform.w_mat, sol.phi,
                                     sol.filters[k], k, angles)
        rows = [[a, int(r), bp.values[i, j]]
                for i, a in enumerate(bp.angles)
                for j, r in enumerate(bp.rings)]
        _write_csv(in_dir / f"srbp_t{k}.csv", prov,
                   ["angle_deg", "ring", "power_db"], rows)
    elif args.which == "pd":
        rows = []
        for k, scnr in zip(sol.target_keys, sol.scnr_final):
            for pfa in _PFA_GRID:
                rows.append([k, _db(scnr), pfa,
                             float(detection_probability(scnr, pfa))])
        _write_csv(in_dir / "pd.csv", prov,
                   ["target", "scnr_db", "p_fa", "pd"], rows)
    else:  # convergence
        header = (["iteration"]
                  + [f"scnr_db_t{k}" for k in sol.target_keys]
                  + ["min_scnr_db", "feasibility"])
        rows = []
        for it in range(sol.scnr_history.shape[0]):
            per = [_db(v) for v in sol.scnr_history[it]]
            rows.append([it] + per
                        + [min(per), float(sol.feasibility_history[it])])
        _write_csv(in_dir / "convergence.csv", prov, header, rows)
    print(f"metrics '{args.which}' written in {in_dir}")
    return EXIT_OK


# -- argument plumbing ---------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bdris-dfrc",
        description="Joint waveform / BD-RIS / filter design experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve one scenario")
    sp.add_argument("--scenario", required=True,
                    help="INI path or bundled name (desk_default, full_default)")
    sp.add_argument("--arch", default=None,
                    help="architecture override (CW-SC/CW-GC/CW-FC/"
                         "DOUBLE-RIS/RADAR-ONLY)")
    sp.add_argument("--groups", type=int, default=None,
                    help="group count override (CW-GC)")
    sp.add_argument("--seed", type=int, default=None, help="RNG seed override")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--max-iters", type=int, default=None)
    sp.add_argument("--penalty", type=float, default=None)
    sp.set_defaults(func=cmd_solve)

    sw = sub.add_parser("sweep", help="run an experiment spec (JSON)")
    sw.add_argument("--spec", required=True, help="experiment JSON path")
    sw.set_defaults(func=cmd_sweep)

    mt = sub.add_parser("metrics", help="evaluate stored solutions")
    mt.add_argument("--in", dest="in_dir", required=True,
                    help="solve output dir, or sweep root for --which ber")
    mt.add_argument("--which", required=True,
                    choices=["ber", "txbp", "srbp", "pd", "convergence"])
    mt.add_argument("--target", type=int, default=None,
                    help="target index for srbp")
    mt.add_argument("--trials", type=int, default=100_000,
                    help="Monte Carlo noise draws per (user, slot)")
    mt.add_argument("--grid-step", type=float, default=0.5,
                    help="angle grid step, degrees")
    mt.set_defaults(func=cmd_metrics)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QosInfeasibleError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_QOS
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"unexpected failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
