"""Command-line entry point.

    qkflow identities [--n-max N] [--samples M]
    qkflow flow --config run.cfg
    qkflow translator --config bowl.cfg
    qkflow report --config run.cfg --snapshots OUT/snapshots

Global flags ``--seed``, ``--threads`` and ``--out-dir`` go before the
subcommand.  The output directory defaults to ``$QKFLOW_OUT_DIR`` or
``./qkflow_out``.

Exit codes: 0 pass, 1 identity failure, 2 solver failure, 3 monitor failure,
64 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import flow, identities, io, monitors, translator
from .errors import ConfigError, DomainError, FitError, InsufficientData, QkError
from .report import MonitorReport

EXIT_OK, EXIT_IDENTITY, EXIT_SOLVER, EXIT_MONITOR, EXIT_USAGE = 0, 1, 2, 3, 64
OUT_ENV = "QKFLOW_OUT_DIR"

log = logging.getLogger("qkflow")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qkflow", description="Q_k curvature flows, translators and diagnostics.")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker threads for grid kernels")
    p.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_ENV} or ./qkflow_out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("identities", help="randomized identity and inequality sweep")
    s.add_argument("--n-max", type=int, default=8)
    s.add_argument("--samples", type=int, default=1000)

    for name, text in (("flow", "evolve a graph by its Q_k curvature"),
                       ("translator", "compute a radial translator and probe it")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)

    s = sub.add_parser("report", help="recompute monitors from stored snapshots")
    s.add_argument("--config", required=True)
    s.add_argument("--snapshots", required=True, help="snapshot directory written by `flow`")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_ENV) or "qkflow_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> cfgmod.SolverConfig:
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg.validate()


# ---------------------------------------------------------------------------


def cmd_identities(args) -> int:
    if args.n_max < 1 or args.samples < 1:
        raise ConfigError("--n-max and --samples must be positive")
    seed = 0 if args.seed is None else args.seed
    results = identities.run_suite(seed=seed, n_max=min(args.n_max, 16), samples=args.samples,
                                   log=print)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"first failing identity: {failed[0].name}")
        return EXIT_IDENTITY
    return EXIT_OK


def _snapshot_files(out: Path, patches: list[tuple[float, flow.GraphPatch]], bc: str) -> None:
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for old in snap_dir.glob("snap_*.csv"):
        old.unlink()
    entries = []
    for i, (t, patch) in enumerate(patches):
        name = f"snap_{i:05d}.csv"
        io.write_grid_csv(snap_dir / name, patch)
        entries.append({"t": t, "file": name})
    first = patches[0][1]
    io.write_json(snap_dir / "index.json",
                  {"lower": list(first.lower), "h": first.h, "bc": bc, "entries": entries})


def load_snapshots(snap_dir) -> list[monitors.Snapshot]:
    """Rebuild monitor snapshots from files written by ``qkflow flow``."""
    snap_dir = Path(snap_dir)
    index_path = snap_dir / "index.json"
    if not index_path.is_file():
        raise ConfigError(f"{index_path} not found")
    index = json.loads(index_path.read_text())
    bc = flow.Periodic() if index["bc"] == "periodic" else flow.Dirichlet(lambda x, t: 0.0)
    out = []
    for e in index["entries"]:
        _, _, u = io.read_grid_csv(snap_dir / e["file"])
        patch = flow.GraphPatch(tuple(index["lower"]), index["h"], u, bc)
        out.append(monitors.snapshot_from_patch(patch, e["t"]))
    return out


def _finish(out: Path, report: MonitorReport, summary: dict, policy: str,
            stem: str = "monitors") -> int:
    report.write(out, stem)
    summary["flags"] = {k: {"passed": f.passed, "message": f.message} for k, f in report.flags.items()}
    summary["monitors_passed"] = report.passed
    io.write_json(out / ("summary.json" if stem == "monitors" else f"{stem}_summary.json"), summary)
    for name, f in report.flags.items():
        print(f"{name}: {'pass' if f.passed else 'FAIL'}  {f.message}")
    if not report.passed and policy == "fail":
        return EXIT_MONITOR
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    patches: list[tuple[float, flow.GraphPatch]] = []
    dts: list[float] = []
    summary: dict = {"command": "flow", "n": cfg.n, "k": cfg.k, "seed": cfg.seed}
    try:
        state, _ = flow.evolve(cfg, on_record=lambda s: patches.append((s.t, s.patch)),
                               on_step=lambda s: dts.append(s.dt))
    except QkError as exc:
        summary.update(status="solver_failure", error=type(exc).__name__, message=str(exc),
                       failure_time=getattr(exc, "t", None),
                       steps=getattr(getattr(exc, "state", None), "steps", None))
        if patches:
            _snapshot_files(out, patches, cfg.bc)
        io.write_json(out / "summary.json", summary)
        print(f"solver failure at t={summary['failure_time']!r}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _snapshot_files(out, patches, cfg.bc)
    io.write_grid_csv(out / "final.csv", state.patch)
    summary.update(status="completed", final_t=state.t, steps=state.steps,
                   cone_violations=state.cone_violations,
                   dt={"min": min(dts), "max": max(dts), "mean": state.t / state.steps} if dts else {},
                   snapshots=len(patches))
    snaps = [monitors.snapshot_from_patch(p, t) for t, p in patches]
    try:
        report = monitors.run_monitors(cfg, snaps)
    except (DomainError, FitError, InsufficientData) as exc:
        report = MonitorReport()
        report.flag("monitors", False, str(exc))
    return _finish(out, report, summary, cfg.monitor_policy)


def cmd_report(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    snaps = load_snapshots(args.snapshots)
    report = monitors.run_monitors(cfg, snaps)
    summary = {"command": "report", "snapshots": len(snaps)}
    return _finish(out, report, summary, cfg.monitor_policy, stem="report")


def cmd_translator(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    n, k, tol = cfg.n, cfg.k, cfg.tolerances
    summary: dict = {"command": "translator", "n": n, "k": k, "seed": cfg.seed}
    report = MonitorReport()
    try:
        prof = translator.integrate_profile(k, n, cfg.r_max, cfg.h)
    except QkError as exc:
        summary.update(status="solver_failure", error=type(exc).__name__, message=str(exc),
                       failure_radius=getattr(exc, "radius", None))
        io.write_json(out / "summary.json", summary)
        print(f"profile integration failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    residual = translator.roundtrip_residual(prof)
    io.write_columns(out / "profile.csv", {"r": prof.r, "u": prof.u, "up": prof.up,
                                            "kappa_rad": prof.kappa_rad,
                                            "kappa_ang": prof.kappa_ang, "residual": residual})
    expected = translator.vertex_curvature(n, k)
    measured = translator.measured_vertex_curvature(prof)
    summary.update(status="completed", r_end=float(prof.r[-1]), vertical_radius=prof.vertical_radius,
                   vertex_curvature={"expected": expected, "measured": measured,
                                     "error": abs(measured - expected)},
                   roundtrip_max=float(np.max(residual)))
    report.flag("roundtrip", float(np.max(residual)) <= tol["roundtrip_tol"],
                f"max |Q_k w - 1| = {np.max(residual):.3e} (tol {tol['roundtrip_tol']:.1e})")

    lo, hi = cfg.growth_lo, cfg.growth_hi
    if prof.vertical_radius is None and hi <= prof.r[-1]:
        g = translator.growth_exponent(prof, lo, hi)
        summary["growth_exponent"] = g
        report.flag("growth", g > tol["growth_min"],
                    f"log-log slope {g:.6f} on [{lo:g}, {hi:g}] (must exceed {tol['growth_min']:g})")
    else:
        summary["growth_exponent"] = None
        report.flag("growth", True, f"profile ends at r = {prof.r[-1]:.6g}; slope on "
                                    f"[{lo:g}, {hi:g}] not available")

    radii = cfg.panel_radii
    if cfg.panel_center + max(radii) <= prof.r[-1]:
        panels = monitors.panels_from_profile(prof, cfg.panel_center, radii)
        fit = monitors.elliptic_gradient_bound_check(panels, tol["gradient_c_max"])
        summary["gradient_bound"] = {"C": fit.constant, "used": fit.used,
                                     "panels": [[p.M, p.r, p.grad0, p.fittedC] for p in panels]}
        report.flag("gradient_bound", fit.passed, fit.message)
    else:
        summary["gradient_bound"] = None

    if k >= 1:
        theta = cfg.monitor_param("curvature_estimate", "theta", 0.5)
        big_r = cfg.monitor_param("curvature_estimate", "R", (2.0, 4.0, 8.0), cast=tuple)
        if math.sqrt(theta) * max(big_r) <= prof.r[-1]:
            fit = monitors.curvature_estimate_check([monitors.snapshot_from_profile(prof)], theta,
                                                    big_r, "elliptic", k, c_max=tol["curvature_c_max"])
            summary["curvature_estimate"] = {"c": fit.constant, "theta": theta, "R": list(big_r)}
            report.flag("curvature_estimate", fit.passed, fit.message)

    if cfg.relax:
        try:
            res = translator.relax_to_translator(prof, cfg.relax_h, cfg.relax_half_width,
                                                 initial=cfg.relax_initial,
                                                 curvature=cfg.relax_curvature, rtol=cfg.relax_rtol,
                                                 max_steps=cfg.max_steps, threads=cfg.threads)
        except (QkError, ValueError) as exc:
            summary.update(status="solver_failure", error=type(exc).__name__, message=str(exc))
            io.write_json(out / "summary.json", summary)
            print(f"relaxation failed: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        io.write_grid_csv(out / "relaxed.csv", res.patch)
        res.report.write(out, "relaxation")
        summary["relaxation"] = {"steps": res.steps, "residual": res.residual,
                                 "max_error": res.max_error}
    return _finish(out, report, summary, cfg.monitor_policy)


COMMANDS = {"identities": cmd_identities, "flow": cmd_flow, "translator": cmd_translator,
            "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("qkflow: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"qkflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
