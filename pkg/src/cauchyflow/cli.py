"""``cauchyflow`` command-line driver.

Subcommands ``taylor``, ``track``, ``verify`` and ``circulation`` read one
JSON run configuration, write binary checkpoints and CSV reports into the
output directory, and finish with ``summary.json`` (one record per check).
``report-merge`` combines existing summaries.

Exit codes: 0 when every check passes, 1 when a check fails (reports are
still written), 2 for configuration, schema or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import io as cfio
from .checks import CheckRecord, VerificationReport, load_report, merge_reports
from .config import RunConfig, load_config
from .errors import CauchyFlowError, ExtrapolationError, InconsistentSourceError
from .geometry import Contour, Surface, advect_contour, circulation, circulation_history, refinement_study
from .lagrangian import (
    cauchy_invariants,
    current_vorticity,
    jacobian,
    noether_residual,
    state_diagnostics,
    vorticity_formula,
    weber_residual,
    weber_solenoidal_part,
)
from .oracle import helmholtz_transport_check, pressure_history, track_times
from .spectral import Grid, ScalarField, VectorField, gradient, set_workers
from .taylor import SolverConfig, estimate_radius, evaluate, positions_at, solve_to_order

DIAGNOSTIC_COLUMNS = ("t", "invariant_drift_Linf", "det_drift_Linf", "circulation_drift", "weber_residual")
CIRCULATION_COLUMNS = ("t", "gamma", "gamma0", "flux0", "drift", "stokes_gap", "markers")


class UsageError(Exception):
    """Invalid request that is not a schema error (exit code 2)."""


def _setup(cfg: RunConfig, allow_invalid: bool):
    flow = cfg.flow.build(cfg.dimension)
    if not flow.solenoidal and not allow_invalid:
        raise UsageError(f"flow {flow.name!r} is not solenoidal; pass --allow-invalid for a negative-control run")
    return flow, Grid.cube(cfg.resolution, cfg.dimension)


def _write(out: Path, name: str, text: str):
    (out / name).write_text(text)


def _rel(err: float, ref: float) -> float:
    return err / ref if ref > 0 else err


def _contour_and_surface(cfg: RunConfig):
    c = cfg.contour
    normal = c.normal if c.normal is not None else ([0.0, 0.0, 1.0] if cfg.dimension == 3 else None)
    center = cfg.contour_center()
    contour = Contour.circle(center, c.radius, c.markers, normal)
    s = cfg.surface
    if s.kind == "cap":
        if cfg.dimension != 3:
            raise UsageError("a cap surface needs a 3D run")
        surface = Surface.cap(center, c.radius, normal, s.height, s.n_radial, s.n_angular)
    else:
        surface = Surface.disk(center, c.radius, normal, s.n_radial, s.n_angular)
    return contour, surface


def _circulation_checks(report, history, tol):
    report.add(CheckRecord("kelvin-circulation", "kelvin-circulation",
                           max(r.drift for r in history), tol.circulation))
    report.add(CheckRecord("stokes-flux", "stokes-theorem", max(r.stokes_gap for r in history), tol.stokes))


def _circulation_rows(history):
    return [{"t": r.t, "gamma": r.gamma, "gamma0": r.gamma0, "flux0": r.flux0, "drift": r.drift,
             "stokes_gap": r.stokes_gap, "markers": r.markers} for r in history]


def _noether_check(report, cfg, t, state_at):
    """Relabeling-symmetry residuals at ``t`` for each configured step; fitted order."""
    tol = cfg.tolerances
    dts = sorted(cfg.noether_dt, reverse=True)
    res = [noether_residual([state_at(t - dt), state_at(t), state_at(t + dt)]).norm_inf() for dt in dts]
    rows = [{"dt": dt, "residual": r} for dt, r in zip(dts, res)]
    if max(res) <= tol.noether_floor:
        report.add(CheckRecord("relabeling-symmetry", "relabeling-symmetry", max(res), tol.noether_floor,
                               note="residual at rounding level for every step"))
    else:
        order = float(np.polyfit(np.log(dts), np.log(np.maximum(res, 1e-300)), 1)[0])
        report.add(CheckRecord("relabeling-symmetry", "relabeling-symmetry", order, tol.noether_order_low,
                               "in", tol.noether_order_high))
    return rows


# --------------------------------------------------------------------------- commands


def cmd_track(cfg: RunConfig, out: Path, allow_invalid: bool = False) -> VerificationReport:
    flow, grid = _setup(cfg, allow_invalid)
    tol = cfg.tolerances
    report = VerificationReport("track", cfg.echo())
    bundles = track_times(flow, grid.coordinates(), cfg.times, tol.oracle)
    rows = []
    for i, b in enumerate(bundles):
        state = b.to_state(grid)
        rows.append(state_diagnostics(state))
        cfio.write_snapshot(out / f"snapshot_{i:03d}.cfs", state)
    _write(out, "diagnostics.csv", cfio.rows_to_csv(rows, DIAGNOSTIC_COLUMNS))
    _write(out, "particles.csv", cfio.bundle_to_csv(bundles[-1]))
    last = rows[-1]
    report.add(CheckRecord("cauchy-invariants", "cauchy-invariants", last["invariant_drift_Linf"], tol.invariant))
    report.add(CheckRecord("unit-jacobian", "unit-jacobian", last["det_drift_Linf"], tol.determinant))
    report.add(CheckRecord("unit-jacobian-variational", "unit-jacobian", bundles[-1].det_drift(), tol.determinant))
    return report


def cmd_verify(cfg: RunConfig, out: Path, allow_invalid: bool = False) -> VerificationReport:
    """Full theorem suite on oracle-tracked states at the configured times."""
    flow, grid = _setup(cfg, allow_invalid)
    tol = cfg.tolerances
    report = VerificationReport("verify", cfg.echo())
    t = cfg.t_final
    noether = t - max(cfg.noether_dt) > 0
    times = set(cfg.times)
    if noether:
        times |= {t + s * dt for dt in cfg.noether_dt for s in (-1, 1)}
    times = sorted(times)
    bundles = dict(zip(times, track_times(flow, grid.coordinates(), times, tol.oracle)))

    def state_at(tt):
        return bundles[tt].to_state(grid)

    final = bundles[t]
    state = state_at(t)
    if flow.has_pressure and t > 0:
        hist, _ = pressure_history(flow, grid, t, cfg.weber_samples, tol.oracle)
        state = final.to_state(grid, hist)

    # Cauchy invariants and the unit Jacobian
    inv = cauchy_invariants(state)
    w0 = state.omega0
    report.add(CheckRecord("cauchy-invariants", "cauchy-invariants",
                           _rel((inv - w0).norm_inf(), w0.norm_inf()), tol.invariant))
    jac = jacobian(state.map, check=False)
    report.add(CheckRecord("unit-jacobian", "unit-jacobian", jac.det_deviation(), tol.determinant))

    # vorticity: Cauchy's formula against Helmholtz transport and the chain rule
    formula = vorticity_formula(jac, w0, tol=math.inf)
    chain = current_vorticity(state)
    if grid.dim == 3:
        report.add(CheckRecord("cauchy-vorticity-formula", "cauchy-vorticity-formula",
                               helmholtz_transport_check(final, formula), tol.vorticity))
    else:
        gap = float(np.max(np.abs(flow.vorticity(final.positions) - w0.data)))
        report.add(CheckRecord("scalar-vorticity-conservation", "cauchy-vorticity-formula", gap,
                               tol.scalar_vorticity))
    report.add(CheckRecord("vorticity-chain-rule", "cauchy-vorticity-formula",
                           (chain - formula).norm_inf(), tol.vorticity))
    if w0.norm_inf() == 0.0:
        report.add(CheckRecord("lagrange-theorem", "lagrange-theorem", formula.norm_inf(), 0.0,
                               note="initially potential flow must stay exactly potential"))

    # circulation and Stokes
    contour, surface = _contour_and_surface(cfg)
    history = circulation_history(flow, contour, surface, cfg.times, tol.oracle)
    _circulation_checks(report, history, tol)

    # Weber transformation
    if state.pressure_history is not None:
        report.add(CheckRecord("weber-transform", "weber-transform", weber_residual(state).norm_inf(), tol.weber))
        report.add(CheckRecord("weber-solenoidal-part", "weber-transform", weber_solenoidal_part(state),
                               tol.weber))

    noether_rows = _noether_check(report, cfg, t, state_at) if noether else []

    rows = []
    for tt, r in zip(cfg.times, history):
        row = state_diagnostics(state if tt == t else state_at(tt))
        row["circulation_drift"] = r.drift
        rows.append(row)
    _write(out, "diagnostics.csv", cfio.rows_to_csv(rows, DIAGNOSTIC_COLUMNS))
    _write(out, "circulation.csv", cfio.rows_to_csv(_circulation_rows(history), CIRCULATION_COLUMNS))
    if noether_rows:
        _write(out, "noether.csv", cfio.rows_to_csv(noether_rows, ("dt", "residual")))
    _write(out, "particles.csv", cfio.bundle_to_csv(final))
    cfio.write_snapshot(out / "final.cfs", state)
    return report


def cmd_taylor(cfg: RunConfig, out: Path, allow_invalid: bool = False) -> VerificationReport:
    flow, grid = _setup(cfg, allow_invalid)
    tol = cfg.tolerances
    report = VerificationReport("taylor", cfg.echo())
    labels = grid.coordinates()
    v0 = VectorField(grid, flow.velocity(labels))
    series = solve_to_order(v0, SolverConfig(cfg.order, cfg.safety, cfg.dealias))
    cfio.write_series(out / "series.cfs", series)
    radius = estimate_radius(series).radius if series.order >= 4 else None
    _write(out, "coefficients.csv", cfio.rows_to_csv(
        [{"order": s, "norm_inf": n} for s, n in enumerate(series.norms(), 1)], ("order", "norm_inf")))

    rows, states = [], []
    for i, t in enumerate(cfg.times):
        st = evaluate(series, t, radius=radius)
        states.append(st)
        rows.append(state_diagnostics(st))
        cfio.write_snapshot(out / f"snapshot_{i:03d}.cfs", st)
    _write(out, "diagnostics.csv", cfio.rows_to_csv(rows, DIAGNOSTIC_COLUMNS))

    report.add(CheckRecord("cauchy-invariants", "cauchy-invariants",
                           max(r["invariant_drift_Linf"] for r in rows), tol.taylor_invariant))
    report.add(CheckRecord("unit-jacobian", "unit-jacobian", max(r["det_drift_Linf"] for r in rows),
                           tol.determinant))
    if flow.has_pressure:
        p0 = ScalarField(grid, flow.pressure(labels))
        gap = (series.coefficients[1] + gradient(p0) * 0.5).norm_inf()
        report.add(CheckRecord("second-order-coefficient", "lagrangian-momentum", gap, tol.second_order))
    bundles = track_times(flow, labels, cfg.times, tol.oracle)
    gap = max(float(np.max(np.abs(b.positions - st.map.positions()))) for b, st in zip(bundles, states))
    report.add(CheckRecord("series-vs-oracle", "time-analyticity", gap, tol.taylor_positions))
    return report


def cmd_circulation(cfg: RunConfig, out: Path, allow_invalid: bool = False) -> VerificationReport:
    flow, _ = _setup(cfg, allow_invalid)
    tol = cfg.tolerances
    report = VerificationReport("circulation", cfg.echo())
    contour, surface = _contour_and_surface(cfg)
    history = circulation_history(flow, contour, surface, cfg.times, tol.oracle)
    _write(out, "circulation.csv", cfio.rows_to_csv(_circulation_rows(history), CIRCULATION_COLUMNS))
    _circulation_checks(report, history, tol)

    c = cfg.contour
    normal = c.normal if c.normal is not None else ([0.0, 0.0, 1.0] if cfg.dimension == 3 else None)
    center, t = cfg.contour_center(), cfg.t_final

    def gamma(m):
        loop = advect_contour(Contour.circle(center, c.radius, m, normal), flow, t, tol=tol.oracle)
        return circulation(loop, flow)

    sweep = refinement_study(gamma, c.marker_sweep)
    _write(out, "refinement.csv", cfio.rows_to_csv(sweep, ("markers", "gamma", "error", "order")))
    orders = [r["order"] for r in sweep if math.isfinite(r["order"])]
    # no finite order means every count already sits at the rounding floor
    report.add(CheckRecord("marker-convergence", "kelvin-circulation", min(orders) if orders else math.inf,
                           tol.marker_order, "ge"))
    _write(out, "contour.csv", cfio.contour_to_csv(contour))
    _write(out, "surface.csv", cfio.surface_to_csv(surface))
    return report


COMMANDS = {"taylor": cmd_taylor, "track": cmd_track, "verify": cmd_verify, "circulation": cmd_circulation}


def cmd_report_merge(paths, out: Path) -> VerificationReport:
    labelled = []
    seen = {}
    for p in paths:
        p = Path(p)
        path = p / "summary.json" if p.is_dir() else p
        label = path.parent.name or "report"
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        labelled.append((label, load_report(path)))
    return merge_reports(labelled)


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cauchyflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        sp.add_argument("--output", type=Path, help="output directory (default: the config's 'output')")
        sp.add_argument("--threads", type=int, default=1, help="FFT worker threads (default 1)")
        sp.add_argument("--allow-invalid", action="store_true", help="permit non-solenoidal negative controls")
        sp.add_argument("--quiet", action="store_true")
    mp = sub.add_parser("report-merge")
    mp.add_argument("reports", nargs="+", type=Path, help="summary.json files or run directories")
    mp.add_argument("--output", type=Path, default=Path("merged"))
    mp.add_argument("--threads", type=int, default=1)
    mp.add_argument("--quiet", action="store_true")
    return parser


def _error(msg: str) -> int:
    print(f"cauchyflow: error: {msg}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _error("--threads must be at least 1")
    set_workers(args.threads)
    try:
        if args.command == "report-merge":
            out = args.output
            report = cmd_report_merge(args.reports, out)
        else:
            cfg = load_config(args.config)
            out = args.output or Path(cfg.output)
            out.mkdir(parents=True, exist_ok=True)
            report = COMMANDS[args.command](cfg, out, args.allow_invalid)
    except ValidationError as exc:
        return _error(f"invalid configuration:\n{exc}")
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        return _error(f"cannot read input: {exc}")
    except (UsageError, ExtrapolationError, InconsistentSourceError) as exc:
        return _error(str(exc))
    except CauchyFlowError as exc:
        return _error(f"{type(exc).__name__}: {exc}")
    report.write(out)
    if not args.quiet:
        for line in report.lines():
            print(line)
        print(f"overall: {'PASS' if report.passed else 'FAIL'} ({out / 'summary.json'})")
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
