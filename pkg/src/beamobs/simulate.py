"""Time propagation of the modal beam state and sensor synthesis.

The undamped modal ODEs decouple, so the reference propagator is the exact
harmonic solution; the RK4 path exists to exercise the same interfaces with
a generic integrator and to cross-check the closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .beam_model import InitialCondition, ModalBasis, ModelError, TruncatedSystem

# RK4 on an oscillator is only trustworthy well inside its stability region.
_MAX_PHASE_PER_STEP = 0.1


@dataclass(frozen=True)
class Trajectory:
    """Sampled modal state history and, when a system is attached, outputs."""

    times: np.ndarray           # (K+1,)
    states: np.ndarray          # (K+1, 2*n_modes)
    outputs: np.ndarray | None  # (K+1, n_sensors) or None
    frequencies: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def modal_energy(self) -> np.ndarray:
        """Sum of omega_i^2 eta_i^2 + eta_dot_i^2 per sample, constant in time."""
        n = self.n_modes
        eta, eta_dot = self.states[:, :n], self.states[:, n:]
        return np.sum((self.frequencies**2) * eta**2 + eta_dot**2, axis=1)

    def to_csv(self, path) -> None:
        from .textio import write_csv

        n = self.n_modes
        header = ["t"] + [f"eta_{i+1}" for i in range(n)] + [f"eta_dot_{i+1}" for i in range(n)]
        rows = np.hstack([self.times[:, None], self.states])
        if self.outputs is not None:
            header += [f"y_{j+1}" for j in range(self.outputs.shape[1])]
            rows = np.hstack([rows, self.outputs])
        write_csv(path, header, rows)


def _time_grid(horizon: float, dt: float) -> np.ndarray:
    if horizon <= 0.0 or dt <= 0.0:
        raise ModelError("horizon and dt must be positive")
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * horizon:
        n_steps = max(1, int(np.ceil(horizon / dt - 1e-12)))
    return np.arange(n_steps + 1) * dt


def propagate_closed_form(
    basis: ModalBasis,
    ic: InitialCondition,
    horizon: float,
    dt: float,
    sys: TruncatedSystem | None = None,
) -> Trajectory:
    """Exact modal solution eta_i(t) = a_i cos(w_i t) + (b_i/w_i) sin(w_i t).

    When ``sys`` is given its C matrix maps the states to strain outputs.
    """
    times = _time_grid(horizon, dt)
    w = basis.frequencies
    wt = np.outer(times, w)
    cos_wt, sin_wt = np.cos(wt), np.sin(wt)
    eta = cos_wt * ic.alpha_disp + sin_wt * (ic.alpha_vel / w)
    eta_dot = -sin_wt * (w * ic.alpha_disp) + cos_wt * ic.alpha_vel
    states = np.hstack([eta, eta_dot])
    outputs = states @ sys.C.T if sys is not None else None
    return Trajectory(times=times, states=states, outputs=outputs, frequencies=w.copy())


def propagate_numeric(
    sys: TruncatedSystem,
    initial_state: np.ndarray,
    horizon: float,
    dt: float,
    on_coarse_dt: str = "raise",
) -> Trajectory:
    """Classic RK4 on H_dot = A H.

    Requires dt * max(omega) < 0.1 so the per-step phase error stays deep in
    the asymptotic regime; ``on_coarse_dt`` picks whether a violation raises
    or merely warns.
    """
    initial_state = np.asarray(initial_state, dtype=float)
    if initial_state.shape != (sys.state_dim,):
        raise ModelError(f"initial state must have shape ({sys.state_dim},)")
    phase = dt * float(np.max(sys.frequencies))
    if phase >= _MAX_PHASE_PER_STEP:
        msg = (
            f"dt={dt:.3e} gives {phase:.3f} rad of phase per step for the fastest mode;"
            f" require < {_MAX_PHASE_PER_STEP}"
        )
        if on_coarse_dt == "warn":
            warnings.warn(msg, stacklevel=2)
        else:
            raise ModelError(msg)
    times = _time_grid(horizon, dt)
    A = sys.A
    states = np.empty((len(times), sys.state_dim))
    states[0] = initial_state
    h = dt
    for k in range(len(times) - 1):
        s = states[k]
        k1 = A @ s
        k2 = A @ (s + 0.5 * h * k1)
        k3 = A @ (s + 0.5 * h * k2)
        k4 = A @ (s + h * k3)
        states[k + 1] = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Trajectory(
        times=times,
        states=states,
        outputs=states @ sys.C.T,
        frequencies=sys.frequencies.copy(),
    )


@dataclass(frozen=True)
class MeasurementRecord:
    """Noisy strain measurements tied to the trajectory that produced them."""

    times: np.ndarray
    outputs_clean: np.ndarray
    outputs_noisy: np.ndarray
    noise_covariance: np.ndarray
    seed: int

    def to_csv(self, path) -> None:
        from .textio import write_csv

        p = self.outputs_noisy.shape[1]
        header = ["t"] + [f"y_{j+1}" for j in range(p)] + [f"y_noisy_{j+1}" for j in range(p)]
        write_csv(path, header, np.hstack([self.times[:, None], self.outputs_clean, self.outputs_noisy]))


def _noise_factor(R: np.ndarray) -> np.ndarray:
    """Matrix square root of a PSD covariance; rejects indefinite input."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ModelError("noise covariance must be square")
    if not np.allclose(R, R.T, atol=1e-12 * max(1.0, float(np.abs(R).max()))):
        raise ModelError("noise covariance must be symmetric")
    eigvals, eigvecs = np.linalg.eigh(R)
    floor = -1e-12 * max(1.0, float(eigvals.max(initial=0.0)))
    if np.any(eigvals < floor):
        raise ModelError(f"noise covariance has negative eigenvalue {eigvals.min():.3e}")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def synthesize_measurements(traj: Trajectory, R, seed: int) -> MeasurementRecord:
    """Add zero-mean Gaussian noise with covariance R to trajectory outputs."""
    if traj.outputs is None:
        raise ModelError("trajectory carries no outputs; propagate with a system attached")
    factor = _noise_factor(np.asarray(R, dtype=float))
    if factor.shape[0] != traj.outputs.shape[1]:
        raise ModelError("noise covariance size does not match the number of outputs")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(traj.outputs.shape) @ factor.T
    return MeasurementRecord(
        times=traj.times,
        outputs_clean=traj.outputs,
        outputs_noisy=traj.outputs + noise,
        noise_covariance=np.asarray(R, dtype=float),
        seed=seed,
    )


def perturbed_output_pair(
    basis: ModalBasis,
    ic: InitialCondition,
    mode_index: int,
    which: str,
    epsilon: float,
    sensor: float,
    horizon: float,
    dt: float,
):
    """Single-sensor outputs for the initial condition perturbed by +/- epsilon.

    The perturbation acts on one modal coefficient (``which`` selects the
    displacement or velocity family) and the sensor is evaluated at ``sensor``
    exactly, without grid snapping. Returns (times, y_plus, y_minus).
    """
    if not 0 <= mode_index < basis.n_modes:
        raise ModelError(f"mode_index {mode_index} outside 0..{basis.n_modes - 1}")
    if which not in ("displacement", "velocity"):
        raise ModelError("which must be 'displacement' or 'velocity'")
    if epsilon <= 0.0:
        raise ModelError("epsilon must be positive")
    times = _time_grid(horizon, dt)
    w = basis.frequencies
    gains = basis.beam.half_thickness * basis.curvature_at(sensor)[0]  # strain per unit eta
    wt = np.outer(times, w)
    base = np.cos(wt) * (gains * ic.alpha_disp) + np.sin(wt) * (gains * ic.alpha_vel / w)
    y_base = base.sum(axis=1)
    if which == "displacement":
        delta = epsilon * gains[mode_index] * np.cos(w[mode_index] * times)
    else:
        delta = epsilon * gains[mode_index] / w[mode_index] * np.sin(w[mode_index] * times)
    return times, y_base + delta, y_base - delta
