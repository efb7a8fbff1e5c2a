"""Command-line pipeline: modes, objective scans, placement, estimation.

Every subcommand is deterministic given its config and writes CSV/JSON
tables plus static SVG figures into the output directory.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import svgplot
from .beam_model import ModelError, build_modal_basis, from_modal_coefficients
from .config import ConfigError, ExperimentConfig, load_config
from .estimate import UkfConfig, compare_placements, run_estimation
from .placement import (
    baseline_placements,
    candidate_gramians,
    objective_scan,
    round_to_binary,
    solve_relaxation,
)
from ._ukf_py import FilterNumericsError
from .textio import write_csv, write_json


def _write_table(cfg: ExperimentConfig, out: Path, stem: str, header: list[str], rows) -> Path:
    if cfg.table_format == "json":
        path = out / f"{stem}.json"
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        write_json(path, {"columns": header, "rows": rows})
    else:
        path = out / f"{stem}.csv"
        write_csv(path, header, rows)
    return path


def _basis(cfg: ExperimentConfig, n_modes: int):
    return build_modal_basis(cfg.beam_spec(), n_modes, cfg.grid_size)


def cmd_modes(cfg: ExperimentConfig, out: Path) -> None:
    basis = _basis(cfg, cfg.n_modes)
    x = basis.grid
    _write_table(
        cfg, out, "modes",
        ["x"] + [f"phi_{i+1}" for i in range(basis.n_modes)],
        np.hstack([x[:, None], basis.mode_matrix]),
    )
    _write_table(
        cfg, out, "curvatures",
        ["x"] + [f"phi_xx_{i+1}" for i in range(basis.n_modes)],
        np.hstack([x[:, None], basis.curvature_matrix]),
    )
    _write_table(
        cfg, out, "frequencies",
        ["mode", "root_bL", "omega_rad_s"],
        np.column_stack([
            np.arange(1, basis.n_modes + 1),
            basis.roots * basis.beam.length,
            basis.frequencies,
        ]),
    )
    svgplot.line_chart(
        out / "modes.svg", x,
        [(f"mode {i+1}", basis.mode_matrix[:, i]) for i in range(basis.n_modes)],
        title="Cantilever mode shapes", xlabel="x [m]", ylabel="phi_i(x)",
    )
    svgplot.line_chart(
        out / "curvatures.svg", x,
        [(f"mode {i+1}", basis.curvature_matrix[:, i]) for i in range(basis.n_modes)],
        title="Mode shape curvatures", xlabel="x [m]", ylabel="phi_i,xx(x)",
    )


def cmd_scan(cfg: ExperimentConfig, out: Path) -> None:
    for system in cfg.systems:
        columns = []
        grid = None
        for n_modes in cfg.scan_modes:
            basis = _basis(cfg, n_modes)
            horizon, dt = cfg.horizon_and_dt(basis.frequencies[0])
            Ws = candidate_gramians(basis, basis.grid, horizon, dt, system=system)
            columns.append(objective_scan(Ws, cfg.weight))
            grid = basis.grid
        header = ["x"] + [f"J_{n}" for n in cfg.scan_modes]
        _write_table(cfg, out, f"scan_{system}", header,
                     np.column_stack([grid] + columns))
        svgplot.line_chart(
            out / f"scan_{system}.svg", grid,
            [(f"{n} modes", col) for n, col in zip(cfg.scan_modes, columns)],
            title=f"Objective landscape ({system})", xlabel="x [m]",
            ylabel="J = kappa + w nu", logy=True,
        )


def cmd_place(cfg: ExperimentConfig, out: Path) -> None:
    for system in cfg.systems:
        basis = _basis(cfg, cfg.n_modes)
        horizon, dt = cfg.horizon_and_dt(basis.frequencies[0])
        Ws = candidate_gramians(basis, basis.grid, horizon, dt, system=system)
        records = []
        rows = []
        for budget in cfg.place_budgets:
            solution = solve_relaxation(
                Ws, budget, weight=cfg.weight, candidates=basis.grid
            )
            solution = round_to_binary(solution, Ws)
            records.append(
                {
                    "budget": budget,
                    "status": solution.status,
                    "iterations": solution.iterations,
                    "kkt_residual": solution.kkt_residual,
                    "scale": solution.scale,
                    "objective_relaxed": solution.objective_relaxed,
                    "kappa_hat": solution.kappa_hat,
                    "nu_hat": solution.nu_hat,
                    "selected_indices": solution.selection,
                    "selected_locations": solution.selected_locations,
                    "achieved_objective": solution.achieved.objective,
                    "achieved_kappa": solution.achieved.kappa,
                    "achieved_nu": solution.achieved.nu,
                }
            )
            rows.append((str(budget), solution.selected_locations))
        write_json(out / f"placement_{system}.json", {
            "system": system,
            "weight": cfg.weight,
            "n_modes": cfg.n_modes,
            "budgets": list(cfg.place_budgets),
            "solutions": records,
        })
        svgplot.strip_chart(
            out / f"placement_{system}.svg", rows,
            xlim=(0.0, cfg.length),
            title=f"Selected sensor locations vs budget ({system})",
            xlabel="x [m]", ylabel="budget p",
        )


def _optimal_sensors(cfg: ExperimentConfig, basis) -> np.ndarray:
    horizon, dt = cfg.horizon_and_dt(basis.frequencies[0])
    Ws = candidate_gramians(basis, basis.grid, horizon, dt, system=cfg.estimate_variant)
    solution = solve_relaxation(Ws, cfg.budget, weight=cfg.weight, candidates=basis.grid)
    solution = round_to_binary(solution, Ws)
    return solution.selected_locations


def cmd_estimate(cfg: ExperimentConfig, out: Path) -> None:
    basis = _basis(cfg, cfg.estimate_modes)
    horizon, dt = cfg.horizon_and_dt(basis.frequencies[0])
    ic = from_modal_coefficients(
        basis,
        np.full(basis.n_modes, cfg.ic_disp_coeff),
        np.full(basis.n_modes, cfg.ic_vel_coeff),
    )
    ukf = UkfConfig(
        dt=dt,
        alpha=cfg.ukf_alpha,
        beta=cfg.ukf_beta,
        kappa_u=cfg.ukf_kappa,
        process_noise=cfg.process_noise,
        measurement_noise=cfg.measurement_noise,
        initial_variance_disp=cfg.initial_variance_disp,
        initial_variance_vel=cfg.initial_variance_vel,
    )
    optimal = _optimal_sensors(cfg, basis)
    naive = baseline_placements(basis.grid, cfg.budget, cfg.seed, basis.curvature_matrix)
    placements = {
        "optimal": optimal,
        "random": None,
        "uniform": basis.grid[naive["uniform"]],
        "curvature": basis.grid[naive["curvature"]],
    }
    table = compare_placements(
        basis, ic, placements, ukf, horizon,
        n_trials=cfg.n_trials, seed=cfg.seed, budget=cfg.budget,
    )

    times = None
    for name, sensors in placements.items():
        if sensors is None:
            continue  # the random baseline has no single representative run
        run = run_estimation(basis, ic, sensors, ukf, horizon, seed=cfg.seed)
        times = run.times
        n = basis.n_modes
        header = (["t"]
                  + [f"residual_eta_{i+1}" for i in range(n)]
                  + [f"residual_eta_dot_{i+1}" for i in range(n)]
                  + [f"bound3sigma_eta_{i+1}" for i in range(n)]
                  + [f"bound3sigma_eta_dot_{i+1}" for i in range(n)])
        bounds = run.sigma_bounds(3.0)
        _write_table(cfg, out, f"residuals_{name}", header,
                     np.hstack([run.times[:, None], run.residuals, bounds]))
        svgplot.line_chart(
            out / f"residuals_{name}.svg", run.times,
            [
                ("residual eta_1", run.residuals[:, 0]),
                ("+3 sigma", bounds[:, 0]),
                ("-3 sigma", -bounds[:, 0]),
            ],
            title=f"First-mode residual with 3-sigma bounds ({name})",
            xlabel="t [s]", ylabel="eta_1 error",
        )

    names = sorted(table["placements"])
    curves = {name: table["placements"][name]["trace_curve_median"] for name in names}
    if times is None:
        times = np.arange(len(next(iter(curves.values())))) * dt
    _write_table(cfg, out, "trace_comparison", ["t"] + names,
                 np.column_stack([times] + [curves[n] for n in names]))
    svgplot.line_chart(
        out / "trace_comparison.svg", times,
        [(name, curves[name]) for name in names],
        title="Median covariance trace by placement", xlabel="t [s]",
        ylabel="trace P", logy=True,
    )
    summary = {
        "n_modes": cfg.estimate_modes,
        "budget": cfg.budget,
        "n_trials": cfg.n_trials,
        "seed": cfg.seed,
        "placements": {
            name: {
                "sensors": placements[name] if placements[name] is not None else "re-drawn per trial",
                "median_avg_trace": table["placements"][name]["median_avg_trace"],
                "median_terminal_rms": table["placements"][name]["median_terminal_rms"],
                "any_diverged": table["placements"][name]["any_diverged"],
            }
            for name in names
        },
        "reduction_vs_random_pct": table.get("reduction_vs_random_pct", {}),
    }
    write_json(out / "estimate_summary.json", summary)


def cmd_repro(cfg: ExperimentConfig, out: Path) -> None:
    cmd_modes(cfg, out)
    cmd_scan(cfg, out)
    cmd_place(cfg, out)
    cmd_estimate(cfg, out)


_COMMANDS = {
    "modes": cmd_modes,
    "scan": cmd_scan,
    "place": cmd_place,
    "estimate": cmd_estimate,
    "repro": cmd_repro,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamobs",
        description="Observability Gramians and sensor placement for a cantilever beam.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=str, default=None, help="TOML/JSON config file")
        cmd.add_argument("--out", type=str, default=None, help="output directory")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--budget", type=int, default=None)
        cmd.add_argument("--modes", type=int, default=None, help="number of modes")
        cmd.add_argument("--system", choices=["truncated", "continuum"], default=None)
        cmd.add_argument("--format", choices=["csv", "json"], default=None)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.budget is not None:
        updates["budget"] = args.budget
        updates["place_budgets"] = (args.budget,)
    if args.modes is not None:
        updates["n_modes"] = args.modes
        updates["estimate_modes"] = args.modes
    if args.system is not None:
        updates["systems"] = (args.system,)
        updates["estimate_variant"] = args.system
    if args.format is not None:
        updates["table_format"] = args.format
    if args.out is not None:
        updates["out_dir"] = args.out
    return replace(cfg, **updates).validate() if updates else cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _COMMANDS[args.command](cfg, out)
    except (ModelError, FilterNumericsError, np.linalg.LinAlgError) as exc:
        write_json(out / "error.json", {
            "command": args.command,
            "error": type(exc).__name__,
            "message": str(exc),
        })
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
