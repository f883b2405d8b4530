"""Command-line entry point: ``fockforge <subcommand> [options]``.

Subcommands
-----------
evolve       run a pulse sequence, write the photon distribution
optimize     search for step parameters for a target Fock state
dissipate    photon-loss sweeps (or a threshold region map) with reference parameters
wigner       Wigner / Husimi field of a protocol output or a saved state
pulse-check  finite-width pulse convergence table

Every run writes its artifacts atomically into ``--out`` together with a
``<subcommand>.manifest.json``; nothing is written when a run fails.
Exit codes: 0 ok, 2 configuration error, 3 numerical guard, 4 budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, table1
from .errors import BudgetExceeded, ConfigError, NumericalGuardError
from .fock import HilbertSpace, auto_cutoff, coherent_state, fock_state, state_from_json
from .io import csv_text, manifest, write_json, atomic_write
from .kerr import PulseSequence, PulseStep, evaluate_protocol, run_protocol

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_BUDGET = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


# --------------------------------------------------------------------------- parsing helpers


def parse_floats(text: str | None) -> list[float]:
    """``"0,1e-5, 1e-4"`` -> floats; empty string -> ``[]``."""
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def parse_ints(text) -> list[int]:
    vals = parse_floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def parse_steps(text) -> list[PulseStep]:
    """``"beta,chi_over_pi;beta,chi_over_pi"`` or a list of ``{"beta", "chi_over_pi"}``."""
    if isinstance(text, list):
        return [PulseStep.from_chi_over_pi(float(s["beta"]), float(s["chi_over_pi"])) for s in text]
    steps = []
    for chunk in (text or "").split(";"):
        if not chunk.strip():
            continue
        fields = chunk.split(",")
        if len(fields) != 2:
            raise ConfigError(f"step {chunk!r} is not 'beta,chi_over_pi'")
        try:
            steps.append(PulseStep.from_chi_over_pi(float(fields[0]), float(fields[1])))
        except ValueError as exc:
            raise ConfigError(f"bad step {chunk!r}") from exc
    return steps


def _convergence(seq: PulseSequence) -> dict:
    """Cutoff-doubling verdict for the manifest (never raises a guard)."""
    from .kerr import CONVERGENCE_TOL, convergence_delta

    space = seq.auto_space()
    try:
        delta = convergence_delta(seq, space)
    except NumericalGuardError as exc:
        return {"cutoff": space.cutoff, "delta": None, "ok": False, "error": str(exc)}
    return {"cutoff": space.cutoff, "delta": delta, "ok": delta < CONVERGENCE_TOL}


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _pick(args, cfg: dict, name: str, default=None, key: str | None = None):
    """Explicit flag, else config entry, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(key or name, default)


def _threads(args, cfg) -> int:
    t = _pick(args, cfg, "threads")
    if t is None:
        t = os.environ.get("FOCKFORGE_THREADS", 1)
    try:
        t = int(t)
    except ValueError as exc:
        raise ConfigError(f"bad thread count {t!r}") from exc
    if t < 1:
        raise ConfigError("thread count must be >= 1")
    return t


def _alpha(args, cfg) -> complex:
    if args.alpha_sq is not None:
        if args.alpha_sq < 0:
            raise ConfigError("--alpha-sq must be >= 0")
        return complex(math.sqrt(args.alpha_sq))
    a = cfg.get("alpha", 0.0)
    return complex(a[0], a[1]) if isinstance(a, (list, tuple)) else complex(a)


def _sequence(args, cfg) -> PulseSequence:
    steps = args.steps if args.steps is not None else cfg.get("steps", [])
    return PulseSequence(_alpha(args, cfg), tuple(parse_steps(steps)))


# --------------------------------------------------------------------------- output


class _Outputs:
    """Collects artifacts in memory and writes them only once the run succeeded."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.files: dict[str, bytes | str] = {}

    def add(self, name: str, data) -> None:
        self.files[name] = data

    def commit(self, command: str, argv, config: dict, **meta) -> Path:
        paths = []
        for name, data in self.files.items():
            atomic_write(self.dir / name, data)
            paths.append(name)
        doc = manifest(list(argv), config, files=paths, **meta)
        return write_json(self.dir / f"{command}.manifest.json", doc)


# --------------------------------------------------------------------------- subcommands


def cmd_evolve(args, cfg, out: _Outputs) -> dict:
    seq = _sequence(args, cfg)
    target = _pick(args, cfg, "target_n")
    cutoff = _pick(args, cfg, "cutoff")
    space = HilbertSpace(int(cutoff)) if cutoff else None
    res = evaluate_protocol(seq, None if target is None else int(target), space)
    rows = [(n, p) for n, p in enumerate(res.distribution.probabilities)]
    out.add("distribution.csv", csv_text(["n", "probability"], rows))
    summary = {"sequence": seq.to_json(), "target_n": res.target_n, "fidelity": res.fidelity}
    out.add("evolve.json", json.dumps(summary, indent=2) + "\n")
    if _pick(args, cfg, "save_state", False):
        out.add("state.json", json.dumps(res.state.to_json()) + "\n")
    if res.fidelity is not None:
        print(f"fidelity {res.fidelity:.6f}")
    else:
        print(f"mean_photon_number {float(np.dot(np.arange(len(rows)), [p for _, p in rows])):.6f}")
    return {
        "config": {"sequence": seq.to_json(), "target_n": res.target_n, "cutoff": res.meta["cutoff"]},
        "cutoff": res.meta["cutoff"],
        "convergence": {"delta": res.meta["convergence_delta"], "ok": res.meta["convergence_ok"]},
    }


def cmd_optimize(args, cfg, out: _Outputs) -> dict:
    from .optimize import SearchConfig, grid_search, refine, staged_search

    n = _pick(args, cfg, "n", key="target_n")
    m = _pick(args, cfg, "m")
    if n is None or m is None:
        raise ConfigError("optimize needs --n and --m")
    n, m = int(n), int(m)
    mode = _pick(args, cfg, "mode") or ("staged" if m >= 2 else "grid")
    sc = SearchConfig(
        target_n=n,
        m=m,
        beta_range=tuple(cfg.get("beta_range", (-1.0, 2.0))),
        chi_over_pi_range=tuple(cfg.get("chi_over_pi_range", (0.0, 1.0))),
        grid_points_per_axis=int(_pick(args, cfg, "grid_points", 21, key="grid_points_per_axis")),
        chi_grid_points=_pick(args, cfg, "chi_grid_points"),
        refine_iterations=int(_pick(args, cfg, "refine_iterations", 200)),
        seed=int(_pick(args, cfg, "seed", 0)),
        budget_evals=int(_pick(args, cfg, "budget", 200_000, key="budget_evals")),
        beam_width=int(cfg.get("beam_width", 20)),
        refine_candidates=int(cfg.get("refine_candidates", 5)),
        workers=_threads(args, cfg),
    )
    if mode == "staged":
        if m < 2:
            raise ConfigError("staged mode needs M >= 2")
        result = staged_search(sc)
    elif mode == "grid":
        result = grid_search(sc)
        if m > 0 and _pick(args, cfg, "refine", True):
            polished = refine(result.best_params, sc)
            if polished.best_fidelity > result.best_fidelity:
                polished.evals_used += result.evals_used
                result = polished
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    seq = result.best_params
    doc = result.to_json()
    doc.pop("wall_time_s")  # timing lives in the manifest
    out.add("search_result.json", json.dumps(doc, indent=2) + "\n")
    header = ["N", "M"] + [f"beta_{k + 1}" for k in range(m)] + [f"chi_over_pi_{k + 1}" for k in range(m)] + ["fidelity"]
    out.add("table_row.csv", csv_text(header, [[n, m, *seq.betas, *seq.chis_over_pi, result.best_fidelity]]))
    if _pick(args, cfg, "trace", False):
        th = [f"p{i}" for i in range(2 * m)] + ["fidelity"]
        out.add("trace.csv", csv_text(th, result.trace_rows()))
    table_path = _pick(args, cfg, "update_table")
    if table_path:
        _stage_table_update(Path(table_path), n, m, seq, result.best_fidelity, out)
    print(f"fidelity {result.best_fidelity:.6f}")
    print("beta " + " ".join(f"{b:.6f}" for b in seq.betas))
    print("chi_over_pi " + " ".join(f"{c:.6f}" for c in seq.chis_over_pi))
    conv = _convergence(seq)
    return {
        "config": sc.to_json() | {"mode": mode},
        "cutoff": conv.pop("cutoff"),
        "convergence": conv,
        "evals_used": result.evals_used,
        "search_wall_time_s": result.wall_time,
    }


def _stage_table_update(path: Path, n, m, seq, fid, out: _Outputs) -> None:
    if path.exists():
        doc = _load_config(path)
    else:
        doc = json.loads(json.dumps(table1._load()))
    block = doc.setdefault(f"M{m}", [])
    row = {"N": n, "beta": seq.betas, "chi_over_pi": seq.chis_over_pi, "fidelity": round(fid, 6)}
    block[:] = sorted([r for r in block if r["N"] != n] + [row], key=lambda r: r["N"])
    # written next to the other artifacts, but at its own location
    out.files[str(path.resolve())] = json.dumps(doc, indent=2) + "\n"


def _sweep_one(n, m, gammas, dt, auto_step=True):
    from .dissipation import DissipativeConfig, loss_sweep

    cfg = DissipativeConfig(table1.sequence(n, m), integrator_step=dt)
    return cfg.space.cutoff, loss_sweep(cfg, gammas, n, auto_step=auto_step)


def cmd_dissipate(args, cfg, out: _Outputs) -> dict:
    from .dissipation import DEFAULT_DT, is_non_increasing

    m = int(_pick(args, cfg, "m", 3))
    dt = float(_pick(args, cfg, "dt", DEFAULT_DT, key="integrator_step"))
    threads = _threads(args, cfg)
    auto_step = not _pick(args, cfg, "fixed_step", False)
    if _pick(args, cfg, "region", False):
        n_values = parse_ints(_pick(args, cfg, "n_list", key="n_values"))
        gammas = parse_floats(_pick(args, cfg, "gamma_grid"))
        threshold = float(_pick(args, cfg, "threshold", 0.9))
        if not n_values or not gammas:
            raise ConfigError("--region needs --n-list and --gamma-grid")
        if any(g < 0 for g in gammas):
            raise ConfigError("loss rates must be >= 0")
        ordered = sorted(set(gammas))
        for n in n_values:
            table1.sequence(n, m)  # fail before any work
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda n: _sweep_one(n, m, ordered, dt, auto_step), n_values))
        rows, summary = [], {}
        for n, (_, sweep) in zip(n_values, runs):
            by_g = {r.gamma_over_k: r for r in sweep}
            ok = [g for g in gammas if by_g[g].fidelity > threshold]
            summary[str(n)] = max(ok) if ok else None
            for g in gammas:
                rows.append((g, n, by_g[g].fidelity, by_g[g].fidelity > threshold))
        out.add("region_map.csv", csv_text(["gamma_over_k", "N", "fidelity", "above_threshold"], rows))
        out.add("region_summary.json", json.dumps({"threshold": threshold, "max_gamma_over_k": summary}, indent=2) + "\n")
        for n, g_max in summary.items():
            print(f"N={n} largest gamma/K above {threshold}: {g_max}")
        return {
            "config": {"n_values": n_values, "gamma_grid": gammas, "threshold": threshold, "m": m, "integrator_step": dt},
            "cutoff": {str(n): c for n, (c, _) in zip(n_values, runs)},
            "convergence": {str(n): _convergence(table1.sequence(n, m))["ok"] for n in n_values},
            "region_summary": summary,
        }

    n = _pick(args, cfg, "n", key="target_n")
    if n is None:
        raise ConfigError("dissipate needs --n (or --region)")
    n = int(n)
    raw = _pick(args, cfg, "gamma_list", "0,1e-5,1e-4,1e-3", key="gamma_over_k_values")
    gammas = parse_floats(raw)
    seq = table1.sequence(n, m)
    cutoff = seq.auto_space().cutoff
    sweep = _sweep_one(n, m, gammas, dt, auto_step)[1] if gammas else []
    header = ["gamma_over_k", "N", "fidelity", "trace_drift"]
    out.add("loss_sweep.csv", csv_text(header, [r.as_tuple()[:4] for r in sweep]))
    for r in sweep:
        print(f"gamma/K={r.gamma_over_k:g} fidelity {r.fidelity:.6f}")
    fids = [r.fidelity for r in sweep]
    conv = _convergence(seq)
    conv.pop("cutoff")
    return {
        "config": {"target_n": n, "m": m, "gamma_over_k_values": gammas, "integrator_step": dt, "auto_step": auto_step},
        "cutoff": cutoff,
        "convergence": conv,
        "monotone_non_increasing": is_non_increasing(fids),
        "wall_ms": [r.wall_ms for r in sweep],
    }


def _wigner_state(args, cfg):
    if args.state:
        try:
            doc = json.loads(Path(args.state).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read state {args.state}: {exc}") from exc
        return state_from_json(doc), {"state_file": str(args.state)}
    fock_n = _pick(args, cfg, "fock")
    if fock_n is not None:
        k = int(fock_n)
        return fock_state(k, HilbertSpace(max(k + 2, 4))), {"fock": k}
    table_n = _pick(args, cfg, "table_n")
    if table_n is not None:
        m = int(_pick(args, cfg, "m", 3))
        seq = table1.sequence(int(table_n), m)
    else:
        seq = _sequence(args, cfg)
    if not seq.steps:
        space = HilbertSpace(auto_cutoff(abs(seq.alpha)))
        return coherent_state(seq.alpha, space), {"sequence": seq.to_json()}
    return run_protocol(seq), {"sequence": seq.to_json()}


def cmd_wigner(args, cfg, out: _Outputs) -> dict:
    from .fock import mean_and_variance
    from .phase_space import PhaseSpaceGrid, husimi, negativity_volume, sign_changes_along_ray, wigner

    state, source = _wigner_state(args, cfg)
    mean, _ = mean_and_variance(state)
    half = _pick(args, cfg, "half_width")
    points = int(_pick(args, cfg, "points", 201))
    grid = PhaseSpaceGrid.square(float(half), points) if half else PhaseSpaceGrid.default_for(mean, points)
    kind = _pick(args, cfg, "kind", "wigner")
    if kind not in ("wigner", "husimi"):
        raise ConfigError(f"unknown field kind {kind!r}")
    field = wigner(state, grid) if kind == "wigner" else husimi(state, grid)
    fmt = _pick(args, cfg, "format", "csv")
    if fmt not in ("csv", "binary", "both"):
        raise ConfigError(f"unknown format {fmt!r}")
    if fmt in ("csv", "both"):
        xs, ps = grid.mesh()
        out.add(f"{kind}.csv", csv_text(["x", "p", "value"], zip(xs.ravel(), ps.ravel(), field.values.ravel())))
    if fmt in ("binary", "both"):
        header = {
            "convention": field.convention,
            "grid": dict(grid.__dict__),
            "dtype": "float64",
            "byteorder": "little",
            "shape": [grid.n_p, grid.n_x],
            "layout": "row-major, x index fastest",
        }
        out.add(f"{kind}.json", json.dumps(header, indent=2) + "\n")
        out.add(f"{kind}.bin", np.ascontiguousarray(field.values.T, dtype="<f8").tobytes())
    stats = {
        "origin_value": field.value_at(0.0, 0.0),
        "min_value": float(field.values.min()),
        "integral": field.integral(),
    }
    if kind == "wigner":
        stats["negativity_volume"] = negativity_volume(field)
        stats["sign_changes_p0_ray"] = sign_changes_along_ray(field)
    for k, v in stats.items():
        print(f"{k} {v:.9g}" if isinstance(v, float) else f"{k} {v}")
    return {
        "config": {"source": source, "kind": kind, "grid": dict(grid.__dict__), "format": fmt},
        "cutoff": state.space.cutoff,
        "convergence": _convergence(PulseSequence.from_json(source["sequence"])) if "sequence" in source else "not applicable",
        "convention": field.convention,
        "field_stats": stats,
    }


def cmd_pulse_check(args, cfg, out: _Outputs) -> dict:
    from .pulses import convergence_study

    raw = _pick(args, cfg, "widths")
    if raw is None:
        raise ConfigError("pulse-check needs --widths")
    widths = parse_floats(raw)
    beta = float(_pick(args, cfg, "beta", 0.5))
    chi_over_pi = float(_pick(args, cfg, "chi_over_pi", 0.74))
    alpha = float(_pick(args, cfg, "alpha", 1.0))
    kind = _pick(args, cfg, "kind", "gaussian")
    table = convergence_study(widths, PulseStep.from_chi_over_pi(beta, chi_over_pi), alpha, kind=kind)
    out.add("pulse_check.csv", csv_text(["width", "deficit", "fitted_order"], table.rows()))
    for w, d, _ in table.rows():
        print(f"width {w:g} deficit {d:.3e}")
    print(f"fitted_order {table.fitted_order:.3f}")
    return {
        "config": {"widths": widths, "beta": beta, "chi_over_pi": chi_over_pi, "alpha": alpha, "kind": kind},
        "cutoff": auto_cutoff(abs(alpha) + abs(beta)),
        "convergence": "not applicable",
        "strictly_decreasing": table.strictly_decreasing(),
    }


# --------------------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="fockforge-out", help="output directory (default: %(default)s)")
    common.add_argument("--config", help="JSON config; explicit flags take precedence")
    common.add_argument("--threads", type=int, help="worker cap (fallback: $FOCKFORGE_THREADS, then 1)")
    common.add_argument("--seed", type=int, help="seed for randomized restarts")

    p = _Parser(prog="fockforge", description="Kerr-plus-displacement Fock-state preparation toolkit.")
    p.add_argument("--version", action="version", version=f"fockforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seq_flags(sp):
        sp.add_argument("--alpha-sq", type=float, help="|alpha|^2 of the (real) initial coherent state")
        sp.add_argument("--steps", help="'beta,chi_over_pi;...' in application order")

    ev = sub.add_parser("evolve", parents=[common], help="run a pulse sequence")
    seq_flags(ev)
    ev.add_argument("--target-n", type=int)
    ev.add_argument("--cutoff", type=int, help="override the automatic cutoff")
    ev.add_argument("--save-state", action="store_true", default=None, help="also write state.json")

    op = sub.add_parser("optimize", parents=[common], help="search step parameters")
    op.add_argument("--n", type=int)
    op.add_argument("--m", type=int)
    op.add_argument("--mode", choices=["staged", "grid"])
    op.add_argument("--budget", type=int)
    op.add_argument("--grid-points", type=int)
    op.add_argument("--chi-grid-points", type=int)
    op.add_argument("--refine-iterations", type=int)
    op.add_argument("--no-refine", dest="refine", action="store_false", default=None)
    op.add_argument("--trace", action="store_true", default=None, help="write trace.csv")
    op.add_argument("--update-table", metavar="FILE", help="merge the result into a reference-table JSON")

    di = sub.add_parser("dissipate", parents=[common], help="photon-loss sweeps")
    di.add_argument("--n", type=int)
    di.add_argument("--m", type=int, help="reference block (default 3)")
    di.add_argument("--gamma-list", help="comma-separated gamma/K values, ascending")
    di.add_argument("--dt", type=float, help="integrator step in units of 1/K")
    di.add_argument("--fixed-step", action="store_true", default=None, help="fail instead of shrinking dt at large gamma")
    di.add_argument("--region", action="store_true", default=None)
    di.add_argument("--n-list")
    di.add_argument("--gamma-grid")
    di.add_argument("--threshold", type=float)

    wi = sub.add_parser("wigner", parents=[common], help="phase-space fields")
    seq_flags(wi)
    wi.add_argument("--state", help="state JSON file")
    wi.add_argument("--fock", type=int, help="use the Fock state |k>")
    wi.add_argument("--table-n", type=int, help="use the reference parameters for N")
    wi.add_argument("--m", type=int)
    wi.add_argument("--kind", choices=["wigner", "husimi"])
    wi.add_argument("--half-width", type=float)
    wi.add_argument("--points", type=int)
    wi.add_argument("--format", choices=["csv", "binary", "both"])

    pc = sub.add_parser("pulse-check", parents=[common], help="finite-pulse convergence")
    pc.add_argument("--widths", help="comma-separated widths in units of 1/K, descending")
    pc.add_argument("--beta", type=float)
    pc.add_argument("--chi-over-pi", type=float)
    pc.add_argument("--alpha", type=float)
    pc.add_argument("--kind", choices=["gaussian", "square"])
    return p


COMMANDS = {
    "evolve": cmd_evolve,
    "optimize": cmd_optimize,
    "dissipate": cmd_dissipate,
    "wigner": cmd_wigner,
    "pulse-check": cmd_pulse_check,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = _Outputs(args.out)
    t0 = time.perf_counter()
    try:
        cfg = _load_config(args.config)
        meta = COMMANDS[args.command](args, cfg, out)
        config = meta.pop("config")
        out.commit(
            args.command,
            ["fockforge"] + argv,
            config,
            wall_time_s=time.perf_counter() - t0,
            **meta,
        )
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalGuardError as exc:
        print(f"numerical guard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
