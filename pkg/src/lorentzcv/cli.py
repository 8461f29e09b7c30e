"""Command-line runner: ``lorentzcv {render,invariance,baseline}``.

Config files are TOML with a top-level ``schema_version`` and at most one
flat table per command, e.g.::

    schema_version = 1
    [invariance]
    lambdas = [0, 2]
    phis = ["0", "pi/7", "pi/3"]

Exit codes: 0 all hard assertions passed, 2 configuration error,
3 numerical-tolerance failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import io
import json
import math
import operator
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .errors import GridError
from .grid import make_grid
from .protocols import (
    ExperimentConfig,
    eigenstate_spread,
    independence_test,
    run_channel_experiment,
    shot_noise_baseline,
    spread_is_flat,
)
from .states import BRANCHES, StateParams, eigenfunction, regularized_eigenstate

SCHEMA_VERSION = 1
OUT_ENV = "LORENTZCV_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 2, 3

DEFAULTS = {
    "render": {
        "lambdas": [3, 5],
        "a": 1.0,
        "window": 3.0,
        "n": 512,
        "extent": 8.0,
        "radius": 2.0,
    },
    "invariance": {
        "lambdas": [0, 2],
        "a_values": [1.0],
        "mus": [0.5, 0.8, 1.0, 1.25, 2.0],
        "phis": ["0", "pi/7", "pi/3"],
        "kappas": [0.0],
        "boost_only_lambdas": [3],
        "loss_lambdas": [0, 3],
        "loss_kappas": [0.05, 0.1, 0.2],
        "n_samples": 10_000,
        "tolerance": 1e-2,
        "cutoff": 64,
    },
    "baseline": {
        "lambdas": [25, 100],
        "quantum_lambdas": [1, 3, 5],
        "a": 1.0,
        "n_pulses": 10_000,
        "tolerance": 0.10,
        "flatness": 0.20,
    },
}
DEFAULT_BRANCH = {"render": None, "invariance": "polar", "baseline": "polar"}


class ConfigError(ValueError):
    pass


# -- config handling -------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_angle(value) -> float:
    """Angle from a number or an arithmetic string over numbers and ``pi``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"cannot read an angle from {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ConfigError(f"unsupported angle expression {value!r}")

    try:
        return ev(ast.parse(value.strip(), mode="eval"))
    except SyntaxError as exc:
        raise ConfigError(f"unreadable angle {value!r}") from exc


def load_config(command: str, path) -> dict:
    """Defaults for ``command`` overlaid with the file's table for it."""
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path is None:
        return cfg
    try:
        raw = tomli.loads(Path(path).read_text())
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    extra = set(raw) - {"schema_version"} - set(DEFAULTS)
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    table = raw.get(command, {})
    if not isinstance(table, dict):
        raise ConfigError(f"[{command}] must be a table")
    unknown = set(table) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown [{command}] keys: {sorted(unknown)}")
    for key, value in table.items():
        if isinstance(value, dict):
            raise ConfigError(f"[{command}].{key}: nested tables are not allowed")
        cfg[key] = value
    return cfg


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _number_list(cfg, key, positive=False):
    vals = cfg[key]
    if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
        raise ConfigError(f"{key} must be a list of numbers")
    if positive and any(v <= 0 for v in vals):
        raise ConfigError(f"{key} must be positive")
    return [float(v) if isinstance(v, float) else v for v in vals]


# -- output --------------------------------------------------------------------------


def _timestamp() -> str:
    """UTC time of the run; SOURCE_DATE_EPOCH pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(type(x).__name__)


def write_run(out_dir: Path, files: dict) -> None:
    """Write every file into a scratch directory, then rename it into place."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        for name, text in files.items():
            (tmp / name).write_text(text, newline="")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


# -- render --------------------------------------------------------------------------


def winding_number(lam, a, branch, radius, points=3600) -> float:
    """Net phase advance of the eigenstate around the circle |q| = radius, in turns."""
    t = 2 * np.pi * (np.arange(points + 1) + 0.5) / points
    f = eigenfunction(StateParams(lam, a, branch))
    vals = f(radius * np.sin(t), radius * np.cos(t))
    return float((np.unwrap(np.angle(vals))[-1] - np.unwrap(np.angle(vals))[0]) / (2 * np.pi))


def cut_jump(psi, window) -> float:
    """Largest |psi(q1, +dq) - psi(q1, -dq)| across q2 = 0, relative to max |psi|."""
    g = psi.grids[1]
    i0 = int(round(g.index_of(0.0)))
    inside = np.abs(psi.grids[0].points) <= window
    jump = np.abs(psi.amplitudes[inside, i0 + 1] - psi.amplitudes[inside, i0 - 1])
    return float(jump.max() / np.abs(psi.amplitudes).max())


def cmd_render(cfg, branch, seed, threads):
    lams = _number_list(cfg, "lambdas")
    if not lams:
        raise ConfigError("lambdas is empty")
    a, window, extent, radius = float(cfg["a"]), float(cfg["window"]), float(cfg["extent"]), float(cfg["radius"])
    if window <= 0 or window > extent:
        raise ConfigError(f"window {window} must lie in (0, extent={extent}]")
    try:
        grid = make_grid(int(cfg["n"]), extent)
    except GridError as exc:
        raise ConfigError(str(exc)) from exc
    branches = [branch] if branch else list(BRANCHES)
    files, rows, checks = {}, [], []
    inside = np.abs(grid.points) <= window
    q = grid.points[inside]
    for br in branches:
        for lam in lams:
            try:
                psi = regularized_eigenstate(StateParams(lam, a, br), grid)
            except (GridError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
            amps = psi.amplitudes[np.ix_(inside, inside)]
            q1, q2 = np.meshgrid(q, q, indexing="ij")
            name = f"surface_{br}_lambda{_label(lam)}.csv"
            files[name] = _csv_text(["q1", "q2", "re", "im", "abs2"], zip(
                q1.ravel(), q2.ravel(), amps.real.ravel(), amps.imag.ravel(), (np.abs(amps) ** 2).ravel()))
            wind = winding_number(lam, a, br, radius)
            jump = cut_jump(psi, window)
            rows.append([br, lam, a, wind, jump, name])
            if br == "polar" and float(lam).is_integer():
                checks.append({"name": f"winding {br} lambda={lam}", "expected": lam, "measured": wind,
                               "passed": abs(wind - lam) < 1e-6})
            if lam == 0:
                real = float(np.abs(amps.imag).max())
                checks.append({"name": f"real surface {br} lambda=0", "expected": 0.0, "measured": real,
                               "passed": real < 1e-12})
    files["results.csv"] = _csv_text(["branch", "lambda", "a", "winding", "cut_jump", "surface"], rows)
    return files, {"assertions": checks}


def _label(x):
    return str(int(x)) if float(x).is_integer() else str(x).replace(".", "p").replace("-", "m")


# -- invariance suite --------------------------------------------------------------


def sweep_rows(cfg, branch):
    a_values = _number_list(cfg, "a_values", positive=True)
    phis = [parse_angle(p) for p in cfg["phis"]]
    rows = []
    for lam in _number_list(cfg, "lambdas"):
        for a in a_values:
            for mu in _number_list(cfg, "mus", positive=True):
                for phi in phis:
                    for kappa in _number_list(cfg, "kappas"):
                        rows.append(("grid", lam, a, mu, phi, kappa))
    for lam in _number_list(cfg, "boost_only_lambdas"):
        for a in a_values:
            for mu in _number_list(cfg, "mus", positive=True):
                rows.append(("boost", lam, a, mu, 0.0, 0.0))
    for lam in _number_list(cfg, "loss_lambdas"):
        for a in a_values:
            for kappa in _number_list(cfg, "loss_kappas"):
                rows.append(("loss", lam, a, 1.0, 0.0, kappa))
    configs = []
    for i, (block, lam, a, mu, phi, kappa) in enumerate(rows):
        try:
            ec = ExperimentConfig(lam=lam, a=a, mu=mu, phi_alice=phi, phi_bob=phi, kappa=kappa,
                                  n_samples=int(cfg["n_samples"]), seed=0, branch=branch,
                                  cutoff=int(cfg["cutoff"]))
        except ValueError as exc:
            raise ConfigError(f"sweep row {i}: {exc}") from exc
        configs.append((block, ec))
    return configs


def _run_row(ec):
    try:
        return run_channel_experiment(ec), None
    except Exception as exc:  # noqa: BLE001 - recorded per row
        return None, str(exc)


def cmd_invariance(cfg, branch, seed, threads):
    rows = sweep_rows(cfg, branch)
    if not rows:
        raise ConfigError("the sweep is empty")
    tol = float(cfg["tolerance"])
    configs = [ec.__class__(**{**asdict(ec), "seed": (seed + i) % 2**64}) for i, (_, ec) in enumerate(rows)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_row, configs))
    else:
        results = [_run_row(ec) for ec in configs]

    table, checks, findings = [], [], []
    groups = {}
    for (block, _), ec, (rep, err) in zip(rows, configs, results):
        target = ec.lam * math.sqrt(1 - ec.kappa**2)
        if rep is None:
            table.append([block, ec.lam, ec.a, ec.mu, ec.phi_alice, ec.kappa, ec.branch, ec.seed,
                          "", "", "", "", "", "", False, err])
            checks.append({"name": f"row {len(table) - 1} ran", "passed": False, "error": err})
            continue
        ang = rep.moments["angular"]
        ok = abs(ang["mean"] - target) <= tol
        table.append([block, ec.lam, ec.a, ec.mu, ec.phi_alice, ec.kappa, ec.branch, ec.seed,
                      rep.estimate, rep.stderr, ang["mean"], ang["delta"], ang["mean"] - ec.lam,
                      ang["second"] - (ec.lam**2 + 1), ok, ""])
        checks.append({"name": f"row {len(table) - 1} <L> vs lambda sqrt(1-kappa^2)", "expected": target,
                       "measured": ang["mean"], "passed": ok})
        if ec.kappa > 0:
            findings.append({"name": f"row {len(table) - 1} <L>_B vs lambda", "paper_value": ec.lam,
                             "measured": ang["mean"], "gap": ang["mean"] - ec.lam})
        if ec.kappa == 0:
            groups.setdefault((ec.lam, ec.a), []).append((ang["delta"], _samples_for(rep, ec)))
    for (lam, a), entries in sorted(groups.items()):
        deltas = [d for d, _ in entries]
        spread = float(max(deltas) - min(deltas))
        checks.append({"name": f"Delta L constant over frames lambda={lam} a={a}", "measured": spread,
                       "passed": spread <= tol})
        p = independence_test([s for _, s in entries])
        checks.append({"name": f"estimate independent of frame lambda={lam} a={a}", "p_value": p,
                       "passed": p > 0.01})
    header = ["block", "lambda", "a", "mu", "phi", "kappa", "branch", "seed", "estimate", "stderr",
              "mean_L", "delta_L", "paper_mean_gap", "paper_second_gap", "passed", "error"]
    return {"results.csv": _csv_text(header, table)}, {"assertions": checks, "findings": findings}


def _samples_for(rep, ec):
    """The run's outcomes, rebuilt from its recorded counts."""
    vals, counts = zip(*rep.diagnostics["sample_counts"])
    return np.repeat(np.array(vals), np.array(counts))


# -- baseline --------------------------------------------------------------------------


def cmd_baseline(cfg, branch, seed, threads):
    lams = _number_list(cfg, "lambdas")
    if not lams:
        raise ConfigError("lambdas is empty")
    if any(v <= 0 for v in lams):
        raise ConfigError("lambdas must be positive")
    qlams = _number_list(cfg, "quantum_lambdas")
    a, n_pulses = float(cfg["a"]), int(cfg["n_pulses"])
    tol, flat = float(cfg["tolerance"]), float(cfg["flatness"])
    quantum = {lam: eigenstate_spread(lam, a, branch) for lam in sorted(set(lams) | set(qlams))}
    rows, checks = [], []
    for i, lam in enumerate(lams):
        rep = shot_noise_baseline(lam, n_pulses, (seed + i) % 2**64)
        dc = rep.diagnostics["per_pulse_delta"]
        rows.append([lam, quantum[lam]["delta"], dc, math.sqrt(lam)])
        checks.append({"name": f"coherent Delta lambda vs sqrt(lambda) at {lam}", "expected": math.sqrt(lam),
                       "measured": dc, "passed": abs(dc - math.sqrt(lam)) <= tol * math.sqrt(lam)})
    qd = [quantum[lam]["delta"] for lam in qlams]
    if qd:
        checks.append({"name": "eigenstate Delta L independent of lambda", "measured": qd,
                       "passed": spread_is_flat(qd, flat)})
    plot = {"lambda": [r[0] for r in rows], "delta_quantum": [r[1] for r in rows],
            "delta_coherent": [r[2] for r in rows], "sqrt_lambda": [r[3] for r in rows],
            "quantum_lambdas": qlams, "quantum_deltas": qd}
    files = {
        "results.csv": _csv_text(["lambda", "delta_quantum", "delta_coherent", "sqrt_lambda"], rows),
        "plot_data.json": _json_text(plot),
    }
    return files, {"assertions": checks,
                   "energy_note": "eigenstate photons use (q^2 + p^2 - 1)/2 per mode; a pulse spends lambda photons"}


COMMANDS = {"render": cmd_render, "invariance": cmd_invariance, "baseline": cmd_baseline}


# -- entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with schema_version and a table per command")
    common.add_argument("--out", help=f"run directory (default: ${OUT_ENV} or ./runs, plus command-hash)")
    common.add_argument("--seed", type=_u64, default=0, help="base seed, unsigned 64-bit (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps (default 1)")
    common.add_argument("--branch", choices=BRANCHES, help="angle convention for the eigenstates")
    p = argparse.ArgumentParser(prog="lorentzcv", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        defaults = json.dumps(DEFAULTS[name], sort_keys=True)
        sub.add_parser(name, parents=[common], help=f"{name} run",
                       description=f"Defaults: {defaults}. Default branch: {DEFAULT_BRANCH[name] or 'both'}.")
    return p


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    try:
        cfg = load_config(cmd, args.config)
        branch = args.branch or DEFAULT_BRANCH[cmd]
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        resolved = {"command": cmd, "config": cfg, "seed": args.seed, "branch": branch}
        digest = config_hash(resolved)
        files, summary = COMMANDS[cmd](cfg, branch, args.seed, args.threads)
    except ConfigError as exc:
        print(f"lorentzcv {cmd}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    passed = all(c["passed"] for c in summary["assertions"])
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / f"{cmd}-{digest[:12]}"
    manifest = {"command": cmd, "config_path": args.config, "output_dir": str(out),
                "timestamp": _timestamp(), "version": __version__, "config_hash": digest,
                "resolved_config": resolved}
    report = {"schema_version": SCHEMA_VERSION, "command": cmd, "config": resolved,
              "passed": passed, **summary}
    files["manifest.json"] = _json_text(manifest)
    files["report.json"] = _json_text(report)
    write_run(out, files)
    n_fail = sum(not c["passed"] for c in summary["assertions"])
    print(f"{cmd}: {len(summary['assertions']) - n_fail}/{len(summary['assertions'])} assertions passed -> {out}")
    return EXIT_OK if passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
