"""Command-line front end.

``slowfast analyze --config run.toml --out results/`` runs the whole chain:
model validation, chi/lambda scan, root refinement and (when eps values
are configured) verification on the full system.  The subcommands
``orbit``, ``chi``, ``lambda``, ``verify`` and ``sweep`` run single stages
from the artifacts of earlier ones.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical
failure, 4 no cycle candidates found.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .analysis import (CandidateSet, CycleCandidate, find_candidates, period_coefficient,
                       scan_chi)
from .characteristics import characteristic_values, chi_endpoint
from .config import ConfigError, RunConfig, load_config, load_schema, parse_config
from .heteroclinic import HeteroclinicError, OrbitSettings
from .integrator import IntegrationError
from .io import atomic_path, dumps, jsonable, write_json, write_text
from .model import GridSpec, SlowFastModel, validate_model
from .parallel import pmap, worker_count
from .verification import (NonRecurrentError, PlanarSystem, VerifySettings,
                           find_periodic_orbit)

__all__ = ["Problem", "NumericFailure", "build_problem", "run_analyze", "main",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_NO_CANDIDATES"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NO_CANDIDATES = 4


class NumericFailure(RuntimeError):
    """A pipeline stage could not produce a result."""


class MissingArtifact(ConfigError):
    pass


@dataclass
class Problem:
    model: SlowFastModel
    family: Callable
    system: Any
    grid: GridSpec
    info: dict = field(default_factory=dict)


def _settings(cfg: RunConfig) -> OrbitSettings:
    tol = cfg.tolerances
    return OrbitSettings(rtol=tol["rtol"], atol=tol["atol"], delta_rel=tol["delta_rel"],
                         b_stop_rel=tol["b_stop_rel"])


def _grid(cfg: RunConfig, a_lo: float, a_hi: float, b_hi: float) -> GridSpec:
    v = cfg.data["validate"]
    lo = a_lo if v["a_lo"] is None else float(v["a_lo"])
    hi = a_hi if v["a_hi"] is None else float(v["a_hi"])
    bh = b_hi if v["b_hi"] is None else float(v["b_hi"])
    return GridSpec(lo, hi, bh, n_a=v["n"], n_b=v["n"])


def _chemostat(cfg: RunConfig, out_dir: str | None) -> Problem:
    from .models.chemostat import (ChemostatParams, ChemostatSystem, HollingII, LinearResponse,
                                   chemostat_family, chemostat_reduced)
    p = cfg.params
    r = p["response"]
    resp = HollingII(r["a"], r["b"]) if r["kind"] == "holling2" else LinearResponse(r["k"])
    P = ChemostatParams(p["S0"], p["m"], p["rho"], p["c"], resp)
    xs = np.linspace(0.0, P.x_max, 401)
    y_top = 1.2 * float(np.max(P.F(xs)))
    return Problem(chemostat_reduced(P), chemostat_family(P, _settings(cfg)), ChemostatSystem(P),
                   _grid(cfg, -y_top, 0.0, P.x_max), {"y_bar": P.y_bar})


def _toy(cfg: RunConfig, out_dir: str | None) -> Problem:
    from .heteroclinic import AlphaParameterization
    from .models.toy import TOYS
    model = TOYS[cfg.params["variant"]]()
    lo = model.a_min if model.a_min_bounded else model.a_bar - 4.0
    hi = model.a_max if model.a_max_bounded else model.a_bar + 4.0
    return Problem(model, AlphaParameterization(model, _settings(cfg)), PlanarSystem(model),
                   _grid(cfg, lo, hi, 1.0))


def _epidemic(cfg: RunConfig, out_dir: str | None) -> Problem:
    from .models.epidemic import (CenterManifoldTable, EpidemicParams, EpidemicSystem,
                                  build_center_manifold, epidemic_family)
    P = EpidemicParams(**cfg.params)
    t = cfg.table
    path = t["path"]
    if path is not None and os.path.exists(path):
        table = CenterManifoldTable.from_csv(path)
        source = "loaded"
    else:
        table = build_center_manifold(P, delta=t["delta"], T=t["T"], M=t["M"], n_N=t["n_N"],
                                      n_I=t["n_I"], scheme=t["scheme"], workers=cfg.workers)
        source = "built"
        target = path if path is not None else (
            os.path.join(out_dir, "center_manifold.csv") if (t["save"] and out_dir) else None)
        if target is not None:
            with atomic_path(target) as tmp:
                table.to_csv(tmp)
    fam = epidemic_family(P, table, _settings(cfg))
    a_lo = float(table.N[0] + 0.05 * (table.N[-1] - table.N[0]))
    return Problem(fam.model, fam, EpidemicSystem(P, table), _grid(cfg, a_lo, P.N_max, 0.5),
                   {"table": {"source": source, **table.meta}, "N0": fam.model.a_bar})


_BUILDERS = {"chemostat": _chemostat, "toy": _toy, "epidemic": _epidemic}


def build_problem(cfg: RunConfig, out_dir: str | None = None) -> Problem:
    try:
        return _BUILDERS[cfg.kind](cfg, out_dir)
    except ValueError as exc:
        raise ConfigError(f"model.{cfg.kind}", str(exc)) from None


# artifacts -------------------------------------------------------------------------

def _emit(path: str, obj: Any, schema: str) -> None:
    """Validate against the shipped schema, then write atomically."""
    payload = jsonable(obj)
    jsonschema.validate(payload, load_schema(schema))
    write_text(path, dumps(payload))


def _csv(path: str, header, rows) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _manifest(cfg: RunConfig, command: str, problem: Problem | None, artifacts: list[str]) -> dict:
    return {"command": command, "package": "slowfast", "version": __version__,
            "numpy": np.__version__, "config": cfg.to_dict(),
            "problem": {} if problem is None else {"model": problem.model.name,
                                                    "a_bar": problem.model.a_bar, **problem.info},
            "artifacts": sorted(artifacts)}


SCAN_HEADER = ("s", "chi", "chi_err", "lambda", "lambda_err", "a_alpha", "a_omega", "error")


def _write_scan(path: str, scan) -> None:
    _csv(path, SCAN_HEADER, ([r[k] for k in SCAN_HEADER] for r in scan.rows()))


def _write_candidates(out: str, cset: CandidateSet) -> list[str]:
    files = []
    odir = os.path.join(out, "orbits")
    os.makedirs(odir, exist_ok=True)
    rows = []
    for k, c in enumerate(cset.candidates):
        name = os.path.join("orbits", f"candidate_{k:02d}.csv")
        with atomic_path(os.path.join(out, name)) as tmp:
            c.gamma.path.to_csv(tmp)
        files.append(name)
        rows.append({**c.to_dict(), "orbit_file": name})
    _emit(os.path.join(out, "candidates.json"),
          {"candidates": rows, "plateaus": [p.to_dict() for p in cset.plateaus],
           "warnings": cset.warnings}, "candidates.schema.json")
    return files + ["candidates.json"]


def _verify_all(problem: Problem, cfg: RunConfig, cands: list[CycleCandidate], out: str,
                workers: int | None) -> list[str]:
    vs = VerifySettings(rtol=cfg.tolerances["verify_rtol"])
    d1 = cfg.tolerances["delta1_rel"]
    jobs = [(k, c, e) for k, c in enumerate(cands) if c.classified for e in cfg.eps]

    def one(job):
        k, c, e = job
        return k, e, find_periodic_orbit(problem.system, e, c, d1 * c.gamma.peak_b, vs)

    results = pmap(one, jobs, workers)
    files, reports = [], []
    for k, e, rep in results:
        row = rep.to_dict()
        row["candidate_index"] = k
        if rep.orbit_path is not None:
            name = os.path.join("orbits", f"periodic_{k:02d}_eps_{e:.6g}.csv")
            with atomic_path(os.path.join(out, name)) as tmp:
                rep.orbit_path.to_csv(tmp)
            files.append(name)
            row["orbit_file"] = name
        else:
            row["orbit_file"] = None
        reports.append(row)
    _emit(os.path.join(out, "verification.json"), {"reports": reports}, "verification.schema.json")
    return files + ["verification.json"]


def _validate(problem: Problem, out: str) -> list[str]:
    rep = validate_model(problem.model, problem.grid)
    _emit(os.path.join(out, "validation.json"), rep.to_dict(), "validation.schema.json")
    if not rep.passed:
        bad = ", ".join(f"{c.name} at {c.violation}" for c in rep.failures())
        raise NumericFailure(f"model validation failed: {bad}")
    return ["validation.json"]


def run_analyze(cfg: RunConfig, out: str, workers: int | None = None) -> int:
    """Full pipeline; returns the exit code.  Errors propagate to :func:`main`."""
    workers = cfg.workers if workers is None else workers
    os.makedirs(out, exist_ok=True)
    problem = build_problem(cfg, out)
    files = _validate(problem, out)
    scan = scan_chi(problem.family, problem.model, cfg.window, cfg.n_grid,
                    form=cfg.lambda_form, workers=workers)
    _write_scan(os.path.join(out, "scan.csv"), scan)
    files.append("scan.csv")
    tol = cfg.tolerances
    cset = find_candidates(scan, tol["root_tol"], tol["lambda_tol"], workers=workers)
    files += _write_candidates(out, cset)
    if cfg.eps:
        files += _verify_all(problem, cfg, cset.candidates, out, workers)
    _emit(os.path.join(out, "manifest.json"), _manifest(cfg, "analyze", problem, files),
          "manifest.schema.json")
    return EXIT_OK if len(cset) else EXIT_NO_CANDIDATES


# single stages ---------------------------------------------------------------------

def _require(out: str, name: str, producer: str) -> str:
    path = os.path.join(out, name)
    if not os.path.exists(path):
        raise MissingArtifact(name, f"missing {path!r}; run `slowfast {producer}` with the same "
                                    f"--config and --out first")
    with open(path) as fh:
        return fh.read()


def run_orbit(cfg: RunConfig, out: str, workers: int | None = None) -> int:
    """Orbit family on the scan grid: ``orbits.json`` plus one CSV per orbit."""
    workers = cfg.workers if workers is None else workers
    os.makedirs(os.path.join(out, "orbits"), exist_ok=True)
    problem = build_problem(cfg, out)
    grid = np.linspace(*cfg.window, cfg.n_grid)

    def one(s):
        try:
            return problem.family(float(s)), ""
        except (HeteroclinicError, ValueError, ArithmeticError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    res = pmap(one, grid, workers)
    rows, files = [], []
    for k, (s, (orb, err)) in enumerate(zip(grid, res)):
        row = {"s": float(s), "error": err, "orbit_file": None}
        if orb is not None:
            name = os.path.join("orbits", f"orbit_{k:04d}.csv")
            with atomic_path(os.path.join(out, name)) as tmp:
                orb.path.to_csv(tmp)
            files.append(name)
            row.update(orb.summary())
            row.update({"omega_err": orb.omega_err, "alpha_err": orb.alpha_err,
                        "orbit_file": name})
        rows.append(row)
    if not any(r["orbit_file"] for r in rows):
        raise NumericFailure("no orbit could be computed anywhere in the window")
    _emit(os.path.join(out, "orbits.json"), {"orbits": rows}, "orbits.schema.json")
    _emit(os.path.join(out, "manifest.json"),
          _manifest(cfg, "orbit", problem, files + ["orbits.json"]), "manifest.schema.json")
    return EXIT_OK


def _stored_orbits(out: str) -> list[dict]:
    return json.loads(_require(out, "orbits.json", "orbit"))["orbits"]


def run_chi(cfg: RunConfig, out: str, workers: int | None = None) -> int:
    """chi from the stored orbit endpoints, then root refinement into ``candidates.json``."""
    workers = cfg.workers if workers is None else workers
    rows = _stored_orbits(out)
    problem = build_problem(cfg, out)
    table = []
    for r in rows:
        if r["orbit_file"] is None:
            table.append((r["s"], math.nan, math.nan, r["error"]))
            continue
        orb = SimpleNamespace(a_alpha=r["a_alpha"], a_omega=r["a_omega"],
                              omega_err=r["omega_err"], alpha_err=r["alpha_err"])
        chi, err = chi_endpoint(problem.model, orb)
        table.append((r["s"], chi, err, ""))
    _csv(os.path.join(out, "chi.csv"), ("s", "chi", "chi_err", "error"), table)
    scan = scan_chi(problem.family, problem.model, cfg.window, cfg.n_grid,
                    form=cfg.lambda_form, workers=workers)
    tol = cfg.tolerances
    cset = find_candidates(scan, tol["root_tol"], tol["lambda_tol"], workers=workers)
    files = ["chi.csv"] + _write_candidates(out, cset)
    _emit(os.path.join(out, "manifest.json"), _manifest(cfg, "chi", problem, files),
          "manifest.schema.json")
    return EXIT_OK if len(cset) else EXIT_NO_CANDIDATES


def run_lambda(cfg: RunConfig, out: str, workers: int | None = None) -> int:
    """lambda (configured form) for every stored orbit; orbits are recomputed from s."""
    workers = cfg.workers if workers is None else workers
    rows = _stored_orbits(out)
    problem = build_problem(cfg, out)

    def one(r):
        if r["orbit_file"] is None:
            return r["s"], math.nan, math.nan, "", r["error"]
        cv = characteristic_values(problem.model, problem.family(r["s"]), form=cfg.lambda_form)
        return r["s"], cv.lam, cv.lambda_err, cv.lambda_form, ""

    table = pmap(one, rows, workers)
    _csv(os.path.join(out, "lambda.csv"), ("s", "lambda", "lambda_err", "form", "error"), table)
    _emit(os.path.join(out, "manifest.json"), _manifest(cfg, "lambda", problem, ["lambda.csv"]),
          "manifest.schema.json")
    return EXIT_OK


def _candidate_from(problem: Problem, row: dict) -> CycleCandidate:
    orbit = problem.family(row["s0"])
    return CycleCandidate(
        s0=row["s0"], chi0=row["chi"], chi_err=row["chi_err"], lambda0=row["lambda"],
        lambda_err=row["lambda_err"], lambda_tol=row["lambda_tol"], stability=row["stability"],
        gamma=orbit, bracket=tuple(row["bracket"]),
        predicted_period_coeff=period_coefficient(problem.model, orbit.a_omega, orbit.a_alpha),
        chi_slope=row["chi_slope"] if row["chi_slope"] is not None else math.nan,
        warnings=list(row["warnings"]))


def run_verify(cfg: RunConfig, out: str, workers: int | None = None) -> int:
    """Verification reports for the stored candidates at every configured eps."""
    workers = cfg.workers if workers is None else workers
    stored = json.loads(_require(out, "candidates.json", "chi"))["candidates"]
    if not cfg.eps:
        raise ConfigError("verify.eps", "no eps values configured for verification")
    problem = build_problem(cfg, out)
    cands = [_candidate_from(problem, r) for r in stored]
    files = _verify_all(problem, cfg, cands, out, workers)
    _emit(os.path.join(out, "manifest.json"), _manifest(cfg, "verify", problem, files),
          "manifest.schema.json")
    return EXIT_OK


def _set_dotted(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def run_sweep(cfg: RunConfig, out: str, param: str, values: list, workers: int | None = None) -> int:
    """One analyze run per value of ``param``; candidate tables gathered in ``sweep.json``."""
    if not values:
        raise ConfigError("sweep", "no values given")
    entries = []
    for k, v in enumerate(values):
        data = cfg.to_dict()
        _set_dotted(data, param, v)
        sub_cfg = parse_config(data)
        sub = os.path.join(out, f"sweep_{k:03d}")
        code = run_analyze(sub_cfg, sub, workers)
        cands = json.loads(_require(sub, "candidates.json", "analyze"))["candidates"]
        entries.append({"param": param, "value": v, "dir": f"sweep_{k:03d}", "exit_code": code,
                        "candidates": cands})
    _emit(os.path.join(out, "sweep.json"), {"runs": entries}, "sweep.schema.json")
    _emit(os.path.join(out, "manifest.json"),
          _manifest(cfg, "sweep", None, ["sweep.json"] + [e["dir"] for e in entries]),
          "manifest.schema.json")
    return EXIT_OK


# entry point -----------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slowfast", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("analyze", "run the full pipeline"),
                           ("orbit", "compute the orbit family on the scan grid"),
                           ("chi", "chi from stored orbits and candidate refinement"),
                           ("lambda", "lambda for stored orbits"),
                           ("verify", "verify stored candidates on the full system"),
                           ("sweep", "repeat analyze over a parameter grid")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (default: $SLOWFAST_WORKERS or 1)")
        if name == "sweep":
            p.add_argument("--param", required=True,
                           help="dotted config key, e.g. model.chemostat.response.a")
            p.add_argument("--values", required=True,
                           help="comma-separated values, e.g. 1.0,1.5,2.0")
    return ap


def _fail(out: str | None, code: int, kind: str, message: str, path: str = "") -> int:
    err = {"error": {"kind": kind, "message": message, "path": path, "exit_code": code}}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            write_json(os.path.join(out, "error.json"), err)
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    out = args.out
    stale = os.path.join(out, "error.json")
    if os.path.exists(stale):
        os.unlink(stale)
    try:
        workers = worker_count(args.workers)
        cfg = load_config(args.config)
        if args.command == "analyze":
            return run_analyze(cfg, out, workers)
        if args.command == "orbit":
            return run_orbit(cfg, out, workers)
        if args.command == "chi":
            return run_chi(cfg, out, workers)
        if args.command == "lambda":
            return run_lambda(cfg, out, workers)
        if args.command == "verify":
            return run_verify(cfg, out, workers)
        values = [_parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
        return run_sweep(cfg, out, args.param, values, workers)
    except ConfigError as exc:
        return _fail(out, EXIT_CONFIG, "config", exc.message, exc.path)
    except (NumericFailure, HeteroclinicError, IntegrationError, NonRecurrentError,
            ArithmeticError) as exc:
        return _fail(out, EXIT_NUMERIC, "numeric", str(exc))
    except ValueError as exc:
        if type(exc).__name__ == "TableCoverageError":
            return _fail(out, EXIT_NUMERIC, "numeric", str(exc))
        return _fail(out, EXIT_CONFIG, "config", str(exc))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
