"""Time the compiled UKF kernel against the pure-Python fallback.

Runs the 20-state estimation problem (10 modes, 10 strain sensors, 2000
steps) through both kernels, reports wall time per filter run and the
worst state/covariance deviation between them.

Usage: python benchmarks/bench_ukf.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from beamobs.beam_model import build_modal_basis, from_modal_coefficients
from beamobs.config import ExperimentConfig
from beamobs.estimate import HAVE_COMPILED_KERNEL, UkfConfig, run_estimation


def _timed_run(basis, ic, sensors, ukf, horizon, use_compiled, repeats):
    best = np.inf
    run = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        run = run_estimation(basis, ic, sensors, ukf, horizon, seed=7,
                             use_compiled=use_compiled)
        best = min(best, time.perf_counter() - t0)
    return best, run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3,
                        help="timing repeats; the best run is reported")
    args = parser.parse_args()

    cfg = ExperimentConfig()
    basis = build_modal_basis(cfg.beam_spec(), cfg.estimate_modes, cfg.grid_size)
    horizon, dt = cfg.horizon_and_dt(basis.frequencies[0])
    ic = from_modal_coefficients(
        basis,
        np.full(basis.n_modes, cfg.ic_disp_coeff),
        np.full(basis.n_modes, cfg.ic_vel_coeff),
    )
    ukf = UkfConfig(dt=dt)
    sensors = basis.grid[:: cfg.grid_size // cfg.budget][: cfg.budget]

    t_py, run_py = _timed_run(basis, ic, sensors, ukf, horizon, False, args.repeats)
    n_steps = len(run_py.times) - 1
    print(f"problem: {2 * basis.n_modes} states, {len(sensors)} sensors, "
          f"{n_steps} steps, best of {args.repeats}")
    print(f"python  kernel: {t_py:8.3f} s  ({1e3 * t_py / n_steps:.3f} ms/step)")

    if not HAVE_COMPILED_KERNEL:
        print("compiled kernel not built; skipping comparison")
        return 0

    t_cy, run_cy = _timed_run(basis, ic, sensors, ukf, horizon, True, args.repeats)
    print(f"compiled kernel: {t_cy:8.3f} s  ({1e3 * t_cy / n_steps:.3f} ms/step)")
    print(f"speedup: {t_py / t_cy:.1f}x")

    # alpha = 1e-3 gives sigma weights of magnitude ~n/alpha^2 that cancel
    # to 1, so loop-order differences cost ~1e-8 of the state scale; judge
    # agreement relative to that scale, not absolutely.
    dev_mean = float(np.abs(run_py.means - run_cy.means).max())
    dev_cov = float(np.abs(run_py.covariances - run_cy.covariances).max())
    rel_mean = dev_mean / float(np.abs(run_py.means).max())
    rel_cov = dev_cov / float(np.abs(run_py.covariances).max())
    print(f"max mean deviation: {dev_mean:.3e} abs, {rel_mean:.3e} of state scale")
    print(f"max cov  deviation: {dev_cov:.3e} abs, {rel_cov:.3e} of cov scale")
    return 0 if rel_mean < 1e-6 and rel_cov < 1e-9 else 1


if __name__ == "__main__":
    raise SystemExit(main())
