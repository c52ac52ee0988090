"""Command-line front end: configuration, verification suites, manifests and reports."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .baes import SpectrumOracle, solve_bae
from .fusion import TransferFamily, check_top_fusion_scalar, verify_fusion_ladder
from .linalg import max_abs
from .model import (
    InvalidModelError,
    ModelSpec,
    build_hamiltonian_from_transfer,
    build_hamiltonian_local,
    check_crossing_unitarity,
    check_gauge_invariance,
    check_hg_relation,
    check_periodicity,
    check_qybe,
    check_unitarity,
    homogeneous,
)
from .spectrum import (
    common_eigenbasis,
    export_records,
    fit_laurent,
    match_solutions,
    record_coefficient_vector,
    solve_functional_system,
    spectrum_csv_rows,
    verify_scalar_relations,
)
from .tq import TQAnsatz, admissible_sequences, check_tq_identities

SCHEMA_VERSION = "1.0"
OUT_ENV = "SPINTORUS_OUT"

DEFAULT_TOLERANCES = {
    "r_matrix": 1e-11,
    "fusion": 1e-8,
    "commutativity": 1e-8,
    "hamiltonian": 1e-6,
    "relations": 1e-8,
    "laurent_fit": 1e-8,
    "match": 1e-6,
    "tq": 1e-7,
    "bae_residual": 1e-10,
    "certification": 1e-6,
}

DEFAULT_MODEL = {"n": 3, "N": 2, "eta": 0.6, "thetas": "random"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelSpec
    tolerances: dict[str, float]
    seed: int
    functional_starts: int | None = None
    bae_budget: int = 1000
    bae_time_limit: float | None = None
    out_dir: Path = Path("spintorus-out")
    csv_grid: dict = field(default_factory=lambda: {"re_min": -1.0, "re_max": 1.0, "im": 0.25, "points": 21})
    raw: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "tolerances": dict(self.tolerances),
            "seeds": {
                "global": self.seed,
                "functional_starts": self.functional_starts,
                "bae_budget": self.bae_budget,
                "bae_time_limit": self.bae_time_limit,
            },
            "outputs": {"dir": str(self.out_dir), "csv_grid": dict(self.csv_grid)},
        }


def random_thetas(N: int, seed: int) -> list[complex]:
    """Generic real inhomogeneities in [-0.5, 0.5], reproducible from the seed."""
    rng = np.random.default_rng(seed)
    return sorted(rng.uniform(-0.5, 0.5, N).tolist())


def _require(section: dict, key: str, kind, where: str):
    if key not in section:
        raise ConfigError(f"{where}.{key}: missing required field")
    value = section[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{where}.{key}: expected integer, got {value!r}")
    return value


def parse_config(data: dict, seed_override: int | None = None) -> RunConfig:
    """Validate a config mapping; every error message names the offending field."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(data) - {"model", "tolerances", "seeds", "outputs", "schema_version"}
    if unknown:
        raise ConfigError(f"config: unknown section(s) {sorted(unknown)}")
    seeds = data.get("seeds", {})
    if not isinstance(seeds, dict):
        raise ConfigError("seeds: must be an object")
    seed = seed_override if seed_override is not None else seeds.get("global", 42)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seeds.global: expected non-negative integer, got {seed!r}")

    model = data.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model: missing or not an object")
    n = _require(model, "n", int, "model")
    N = _require(model, "N", int, "model")
    eta = _require(model, "eta", None, "model")
    thetas = model.get("thetas", "random")
    if thetas == "random":
        if isinstance(N, int) and N >= 1:
            thetas = random_thetas(N, seed)
        else:
            thetas = []
    elif not isinstance(thetas, list):
        raise ConfigError(f"model.thetas: expected list or 'random', got {thetas!r}")
    spec_data = {"n": n, "N": N, "eta": eta, "thetas": thetas}
    if "twist" in model:
        spec_data["twist"] = model["twist"]
    try:
        spec = ModelSpec.from_dict(spec_data)
    except InvalidModelError as exc:
        raise ConfigError(f"model: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: malformed value ({exc})") from exc

    tolerances = dict(DEFAULT_TOLERANCES)
    tol_section = data.get("tolerances", {})
    if not isinstance(tol_section, dict):
        raise ConfigError("tolerances: must be an object")
    for key, value in tol_section.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{key}: unknown tolerance name")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"tolerances.{key}: expected positive number, got {value!r}")
        tolerances[key] = float(value)

    outputs = data.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ConfigError("outputs: must be an object")
    out_dir = Path(os.environ.get(OUT_ENV) or outputs.get("dir", "spintorus-out"))
    grid = {"re_min": -1.0, "re_max": 1.0, "im": 0.25, "points": 21}
    grid.update(outputs.get("csv_grid", {}))

    starts = seeds.get("functional_starts")
    if starts is not None and (not isinstance(starts, int) or starts < 1):
        raise ConfigError(f"seeds.functional_starts: expected positive integer, got {starts!r}")
    budget = seeds.get("bae_budget", 1000)
    if not isinstance(budget, int) or budget < 1:
        raise ConfigError(f"seeds.bae_budget: expected positive integer, got {budget!r}")
    limit = seeds.get("bae_time_limit")
    return RunConfig(spec, tolerances, int(seed), starts, budget, limit, out_dir, grid, data)


def load_config(path: str | None, seed_override: int | None = None) -> RunConfig:
    if path is None:
        return parse_config({"model": dict(DEFAULT_MODEL)}, seed_override)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(data, seed_override)


def apply_tolerance_overrides(cfg: RunConfig, items: list[str]) -> None:
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol {item!r}: expected name=value")
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"--tol {name}: unknown tolerance name")
        try:
            cfg.tolerances[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"--tol {name}: {value!r} is not a number") from exc


# --- reports ----------------------------------------------------------------

class Report:
    def __init__(self, command: str):
        self.command = command
        self.checks: list[dict] = []
        self.data: dict = {}
        self.timings: dict[str, float] = {}

    def check(self, name: str, residual: float, tolerance: float) -> bool:
        ok = bool(np.isfinite(residual) and residual < tolerance)
        self.checks.append({"name": name, "residual": float(residual), "tolerance": tolerance, "passed": ok})
        return ok

    def flag(self, name: str, ok: bool, detail=None) -> bool:
        self.checks.append({"name": name, "residual": None, "tolerance": None, "passed": bool(ok), "detail": detail})
        return ok

    def timed(self, name: str, fn: Callable):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            self.timings[name] = time.perf_counter() - t0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "passed": self.passed,
            "checks": self.checks,
            "data": self.data,
        }


def _sample_points(rng: np.random.Generator, count: int) -> list[complex]:
    return list(rng.uniform(-1, 1, count) + 1j * rng.uniform(-1, 1, count))


def run_check(cfg: RunConfig, report: Report) -> None:
    spec = cfg.model
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)

    def r_suite():
        pts = _sample_points(rng, 9)
        report.check("qybe", max(check_qybe(spec, *pts[k : k + 3]) for k in range(0, 9, 3)), tol["r_matrix"])
        report.check("unitarity", max(check_unitarity(spec, u) for u in pts), tol["r_matrix"])
        report.check("crossing_unitarity", max(check_crossing_unitarity(spec, u) for u in pts), tol["r_matrix"])
        report.check("periodicity", max(check_periodicity(spec, u) for u in pts), tol["r_matrix"])
        report.check("gauge_invariance", max(check_gauge_invariance(spec, u) for u in pts), tol["r_matrix"])
        report.check("hg_relation", check_hg_relation(spec.n), tol["r_matrix"])

    family = TransferFamily(spec)

    def ladder():
        rep = verify_fusion_ladder(spec, family)
        names = sorted({e["identity"] for e in rep.entries})
        for name in names:
            report.check(f"ladder_{name}", rep.max_relative(name), tol["fusion"])
        u = _sample_points(rng, 1)[0]
        report.check("top_fusion_scalar", check_top_fusion_scalar(spec, u, family), tol["fusion"])

    def commutativity():
        u, v = _sample_points(rng, 2)
        worst = 0.0
        for m in range(1, spec.n + 1):
            tm = family(m, u)
            for k in range(1, spec.n + 1):
                tk = family(k, v)
                worst = max(worst, max_abs(tm @ tk - tk @ tm) / max(max_abs(tm) * max_abs(tk), 1e-300))
        report.check("commutativity", worst, tol["commutativity"])

    def hamiltonian():
        hspec = homogeneous(spec)
        local = build_hamiltonian_local(hspec)
        from_t = build_hamiltonian_from_transfer(hspec)
        report.check("hamiltonian_cross", max_abs(local - from_t), tol["hamiltonian"])

    report.timed("r_matrix", r_suite)
    report.timed("fusion_ladder", ladder)
    report.timed("commutativity", commutativity)
    report.timed("hamiltonian", hamiltonian)


def _spectrum(cfg: RunConfig, report: Report):
    family = TransferFamily(cfg.model)
    return report.timed("diagonalize", lambda: common_eigenbasis(family)), family


def _csv_text(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state", "m", "re_u", "im_u", "re_lambda", "im_lambda"])
    writer.writerows(rows)
    return buf.getvalue()


def _grid(cfg: RunConfig) -> list[complex]:
    g = cfg.csv_grid
    return [complex(x, g["im"]) for x in np.linspace(g["re_min"], g["re_max"], int(g["points"]))]


def run_spectrum(cfg: RunConfig, report: Report, files: dict[str, str]) -> None:
    spec, tol = cfg.model, cfg.tolerances
    records, family = _spectrum(cfg, report)
    report.data["num_records"] = len(records)
    u = 0.21 + 0.34j
    tr = np.trace(family(1, u))
    values = [r.lambda_value(1, u) for r in records]
    scale = max(abs(tr), max(abs(v) for v in values), 1e-300)
    report.check("trace_identity", abs(tr - sum(values)) / scale, tol["relations"])

    def relations():
        worst_rel = worst_fit = 0.0
        for rec in records:
            worst_rel = max(worst_rel, verify_scalar_relations(rec).max_residual())
            for m in range(1, spec.n + 1):
                worst_fit = max(worst_fit, fit_laurent(rec, m)[1])
        report.check("functional_relations", worst_rel, tol["relations"])
        report.check("laurent_held_out", worst_fit, tol["laurent_fit"])

    report.timed("relations", relations)
    report.data["records"] = json.loads(export_records(records))
    files["spectrum.csv"] = _csv_text(spectrum_csv_rows(records, _grid(cfg), range(1, spec.n + 1)))


def run_solve(cfg: RunConfig, report: Report, mode: str) -> None:
    spec, tol = cfg.model, cfg.tolerances
    if mode == "functional":
        records, _ = _spectrum(cfg, report)
        targets = [record_coefficient_vector(r) for r in records]
        rep = report.timed(
            "functional_solve",
            lambda: solve_functional_system(spec, num_starts=cfg.functional_starts, seed=cfg.seed),
        )
        found = [s.vector() for s in rep.solutions]
        match = match_solutions(found, targets) if found else {"best": [], "bijective": False, "nearest": []}
        matched = sum(1 for b in match["best"] if b < tol["match"])
        report.data["solve"] = rep.to_dict()
        report.data["matching"] = match
        report.data["summary"] = f"{len(set(match['nearest']))}/{len(targets)} matches"
        report.flag("all_states_recovered", match["bijective"] and matched == len(targets), report.data["summary"])
        report.flag("no_excess_solutions", not rep.excess, len(found))
    elif mode == "bae":
        oracle = report.timed("diagonalize", lambda: SpectrumOracle.from_spec(spec))
        rep = report.timed(
            "bae_solve",
            lambda: solve_bae(
                spec,
                budget=cfg.bae_budget,
                seed=cfg.seed,
                residual_tol=tol["bae_residual"],
                cert_tol=tol["certification"],
                time_limit=cfg.bae_time_limit,
                oracle=oracle,
            ),
        )
        report.data["solve"] = rep.to_dict()
        report.data["summary"] = f"{len(rep.state_tally)}/{rep.num_states} states certified"
        report.flag("certified_solution_found", len(rep.solutions) > 0, report.data["summary"])
    else:
        raise ConfigError(f"--mode: unknown mode {mode!r}")


def run_tq_verify(cfg: RunConfig, report: Report) -> None:
    spec = cfg.model
    rng = np.random.default_rng(cfg.seed)
    ans = TQAnsatz.random(spec, rng)
    rep = report.timed("tq_identities", lambda: check_tq_identities(ans))
    for prefix in ("fusion", "vanishing", "z1_at_theta", "top_product", "periodicity"):
        report.check(f"tq_{prefix}", rep.max_relative(prefix), cfg.tolerances["tq"])
    report.data["sequence_counts"] = {str(m): len(admissible_sequences(spec.n, m)) for m in range(1, spec.n)}
    report.data["ansatz"] = ans.to_dict()
    report.data["identities"] = rep.to_dict()


def run_export(cfg: RunConfig, report: Report, files: dict[str, str]) -> None:
    spec = cfg.model
    records, _ = _spectrum(cfg, report)
    for rec in records:
        for m in range(1, spec.n + 1):
            fit_laurent(rec, m)
    files["model.json"] = json.dumps(spec.to_dict(), indent=2)
    files["records.json"] = export_records(records)
    files["spectrum.csv"] = _csv_text(spectrum_csv_rows(records, _grid(cfg), range(1, spec.n + 1)))
    report.data["exported"] = sorted(files)


# --- manifests ----------------------------------------------------------------

def versions() -> dict:
    return {
        "spintorus": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_outputs(out_dir: Path, manifest: dict, report: Report | None, files: dict[str, str]) -> None:
    """Single writer for every file a run produces."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if report is not None:
        (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, default=str))
    for name, text in files.items():
        (out_dir / name).write_text(text)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def execute(command: str, cfg: RunConfig, mode: str | None = None) -> tuple[Report, dict[str, str]]:
    report = Report(command if mode is None else f"{command}:{mode}")
    files: dict[str, str] = {}
    if command == "check":
        run_check(cfg, report)
    elif command == "spectrum":
        run_spectrum(cfg, report, files)
    elif command == "solve":
        run_solve(cfg, report, mode or "functional")
    elif command == "tq-verify":
        run_tq_verify(cfg, report)
    elif command == "export":
        run_export(cfg, report, files)
    else:
        raise ConfigError(f"unknown command {command!r}")
    return report, files


def residual_table(report_or_manifest: dict) -> dict[str, float]:
    return {c["name"]: c["residual"] for c in report_or_manifest["checks"] if c["residual"] is not None}


def replay(manifest_path: str | Path) -> tuple[dict, dict[str, float]]:
    """Re-run the command recorded in a manifest; returns (manifest, |residual differences|)."""
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = parse_config(manifest["config"])
    report, _ = execute(manifest["command"], cfg, manifest.get("mode"))
    old = residual_table(manifest)
    new = residual_table(report.to_dict())
    diffs = {k: abs(old[k] - new.get(k, np.inf)) for k in old}
    return manifest, diffs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spintorus", description="Verification suites for the su(n) spin torus.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with sections model, tolerances, seeds, outputs")
    common.add_argument("--seed", type=int, help="override seeds.global")
    common.add_argument("--out", help="output directory (overrides config and environment)")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="override one tolerance")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="R-matrix, fusion ladder, commutativity, Hamiltonian")
    sub.add_parser("spectrum", parents=[common], help="diagonalize and verify eigenvalue relations")
    solve = sub.add_parser("solve", parents=[common], help="solve the functional system or the BAEs")
    solve.add_argument("--mode", choices=["functional", "bae"], default="functional")
    sub.add_parser("tq-verify", parents=[common], help="structural T-Q identities on random roots")
    sub.add_parser("export", parents=[common], help="write model, eigen-records and spectrum CSV")
    rp = sub.add_parser("replay", help="re-run a manifest and compare residuals")
    rp.add_argument("manifest")
    rp.add_argument("--tolerance", type=float, default=1e-12)
    return parser


def _replay_main(args) -> int:
    manifest, diffs = replay(args.manifest)
    worst = max(diffs.values(), default=0.0)
    ok = worst <= args.tolerance
    print(json.dumps({"manifest": args.manifest, "max_difference": worst, "reproduced": ok}, indent=2))
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        return _replay_main(args)
    started = time.time()
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or "spintorus-out")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "mode": getattr(args, "mode", None),
        "argv": sys.argv[1:] if argv is None else list(argv),
        "versions": versions(),
        "started": started,
        "status": "error",
        "checks": [],
    }
    report: Report | None = None
    files: dict[str, str] = {}
    code = 2
    try:
        cfg = load_config(args.config, args.seed)
        apply_tolerance_overrides(cfg, args.tol)
        if args.out:
            cfg.out_dir = Path(args.out)
        out_dir = cfg.out_dir
        manifest.update({"config": cfg.snapshot(), "seed": cfg.seed, "tolerances": cfg.tolerances})
        report, files = execute(args.command, cfg, manifest["mode"])
        manifest["checks"] = report.checks
        manifest["timings"] = report.timings
        manifest["status"] = "passed" if report.passed else "failed"
        code = 0 if report.passed else 1
        summary = report.data.get("summary")
        print(f"{report.command}: {manifest['status']}" + (f" ({summary})" if summary else ""))
        for c in report.checks:
            res = "" if c["residual"] is None else f" residual={c['residual']:.3e}"
            print(f"  [{'pass' if c['passed'] else 'FAIL'}] {c['name']}{res}")
    except ConfigError as exc:
        manifest["error"] = str(exc)
        print(f"spintorus: config error: {exc}", file=sys.stderr)
    except Exception as exc:  # the manifest must record any failure
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        print(f"spintorus: {manifest['error']}", file=sys.stderr)
        code = 1
    finally:
        manifest["wall_time_s"] = time.time() - started
        write_outputs(out_dir, manifest, report, files)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
