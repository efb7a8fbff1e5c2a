"""Modal model of a uniform cantilever beam.

Characteristic roots of the clamped-free Euler-Bernoulli problem, closed-form
mode shapes and curvatures, modal frequencies, Fourier projection of initial
fields, and assembly of the truncated LTI pair (A, C) observed through
surface strain gauges.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

# Raw cosh(b*L) overflows float64 near 710; roots grow like (2i-1)*pi/2,
# so this caps n_modes around 450, far beyond any sane truncation.
_ROOT_OVERFLOW_LIMIT = 700.0


class ModelError(ValueError):
    """Raised when inputs put the model outside its validity envelope."""


@dataclass(frozen=True)
class BeamSpec:
    """Geometry and material of a rectangular cantilever.

    Derived section properties are computed once in ``__post_init__`` so a
    spec instance is internally consistent by construction.
    """

    length: float
    width: float
    thickness: float
    elastic_modulus: float
    density: float
    area: float = field(init=False)
    second_moment: float = field(init=False)
    mass_per_length: float = field(init=False)
    half_thickness: float = field(init=False)

    def __post_init__(self) -> None:
        for name in ("length", "width", "thickness", "elastic_modulus", "density"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ModelError(f"{name} must be positive and finite, got {value!r}")
        object.__setattr__(self, "area", self.width * self.thickness)
        object.__setattr__(self, "second_moment", self.width * self.thickness**3 / 12.0)
        object.__setattr__(self, "mass_per_length", self.density * self.area)
        object.__setattr__(self, "half_thickness", self.thickness / 2.0)

    @property
    def flexural_rigidity(self) -> float:
        return self.elastic_modulus * self.second_moment

    @property
    def wave_coefficient(self) -> float:
        """sqrt(EI/mu), the factor turning b_i^2 into omega_i."""
        return float(np.sqrt(self.flexural_rigidity / self.mass_per_length))


def characteristic_residual(x: np.ndarray | float) -> np.ndarray | float:
    """Clamped-free frequency equation in overflow-safe form.

    cos(x)*cosh(x) + 1 = 0 is rescaled by 1/cosh(x); the rescaled residual
    stays O(1) for large x where the raw product overflows.
    """
    x = np.asarray(x, dtype=float)
    return np.cos(x) + 1.0 / np.cosh(x)


def _characteristic_slope(x: float) -> float:
    return -np.sin(x) - np.tanh(x) / np.cosh(x)


def find_characteristic_roots(n_modes: int, tol: float = 1e-12) -> np.ndarray:
    """First ``n_modes`` positive roots of cos(x)cosh(x) = -1.

    Each root is bracketed around its asymptote (2i-1)*pi/2, refined by
    bisection, and polished with Newton steps on the rescaled residual.

    Parameters
    ----------
    n_modes : int
        Number of roots to return, ascending.
    tol : float
        Acceptance threshold on the rescaled residual |cos(x) + sech(x)|.

    Returns
    -------
    ndarray
        Dimensionless roots x_i = b_i * L.
    """
    if n_modes < 1:
        raise ModelError(f"n_modes must be >= 1, got {n_modes}")
    roots = np.empty(n_modes)
    for i in range(1, n_modes + 1):
        center = (2 * i - 1) * np.pi / 2.0
        lo, hi = center - 1.0, center + 1.0
        flo, fhi = characteristic_residual(lo), characteristic_residual(hi)
        if flo * fhi >= 0.0:
            raise ModelError(f"root {i} escaped bracket [{lo:.6f}, {hi:.6f}]")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fmid = characteristic_residual(mid)
            if flo * fmid <= 0.0:
                hi = mid
            else:
                lo, flo = mid, fmid
            if hi - lo < 1e-9:
                break
        x = 0.5 * (lo + hi)
        for _ in range(8):
            step = characteristic_residual(x) / _characteristic_slope(x)
            x -= step
            if abs(step) < 1e-15 * max(1.0, abs(x)):
                break
        if abs(characteristic_residual(x)) > tol:
            raise ModelError(f"root {i} residual {characteristic_residual(x):.3e} exceeds tol {tol:.3e}")
        roots[i - 1] = x
    if np.any(np.diff(roots) <= 0.0):
        raise ModelError("characteristic roots are not strictly increasing; bracketing lost a root")
    return roots


def _stable_mode_terms(root: np.ndarray, xi: np.ndarray):
    """Shared pieces of the mode-shape family, stable for large roots.

    The textbook form subtracts nearly equal exponentials; here everything
    is expressed through decaying exponentials exp(-v) and exp(u - v) with
    u = root*xi <= v = root, so no term grows and no leading digits cancel.
    Returns (even_part, odd_part, cos u, sin u, f) where
    even_part = cosh(u) - f*sinh(u) and odd_part = sinh(u) - f*cosh(u).
    """
    v = root[np.newaxis, :]
    u = v * xi[:, np.newaxis]
    emv = np.exp(-v)
    denom = 2.0 * np.sin(v) * emv + 1.0 - emv * emv
    f = (2.0 * np.cos(v) * emv + 1.0 + emv * emv) / denom
    # (1 - f) * exp(u) without forming either overflowing factor.
    one_minus_f_eu = 2.0 * np.exp(u - v) * (np.sin(v) - np.cos(v) - emv) / denom
    one_plus_f_emu = (1.0 + f) * np.exp(-u)
    even_part = 0.5 * (one_minus_f_eu + one_plus_f_emu)
    odd_part = 0.5 * (one_minus_f_eu - one_plus_f_emu)
    return even_part, odd_part, np.cos(u), np.sin(u), f


def _as_points(x, length: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < -1e-12 * length) or np.any(x > length * (1.0 + 1e-12)):
        raise ModelError("evaluation points must lie on [0, L]")
    return np.clip(x, 0.0, length)


def mode_shapes(roots: np.ndarray, length: float, x) -> np.ndarray:
    """phi_i(x) for each dimensionless root, shaped (len(x), n_modes)."""
    xi = _as_points(x, length) / length
    even_part, _, cos_u, sin_u, f = _stable_mode_terms(np.asarray(roots, dtype=float), xi)
    return even_part - cos_u + f * sin_u


def mode_slopes(roots: np.ndarray, length: float, x) -> np.ndarray:
    """d phi_i / dx, shaped (len(x), n_modes)."""
    roots = np.asarray(roots, dtype=float)
    xi = _as_points(x, length) / length
    _, odd_part, cos_u, sin_u, f = _stable_mode_terms(roots, xi)
    return (roots / length)[np.newaxis, :] * (odd_part + sin_u + f * cos_u)


def mode_curvatures(roots: np.ndarray, length: float, x) -> np.ndarray:
    """d^2 phi_i / dx^2 in closed form, shaped (len(x), n_modes)."""
    roots = np.asarray(roots, dtype=float)
    xi = _as_points(x, length) / length
    even_part, _, cos_u, sin_u, f = _stable_mode_terms(roots, xi)
    return ((roots / length) ** 2)[np.newaxis, :] * (even_part + cos_u - f * sin_u)


@dataclass(frozen=True)
class ModalBasis:
    """Sampled modal basis of one beam.

    ``mode_matrix`` and ``curvature_matrix`` hold phi_i and phi_i,xx on the
    grid, one column per mode. ``norms`` are the L2 norms of the sampled
    shapes used to orthonormalize projections.
    """

    beam: BeamSpec
    n_modes: int
    roots: np.ndarray            # b_i, units 1/m
    frequencies: np.ndarray      # omega_i, rad/s
    grid: np.ndarray
    mode_matrix: np.ndarray      # (grid_size, n_modes)
    curvature_matrix: np.ndarray
    norms: np.ndarray            # c_i = integral of phi_i^2 dx

    def shape_at(self, x) -> np.ndarray:
        return mode_shapes(self.roots * self.beam.length, self.beam.length, x)

    def curvature_at(self, x) -> np.ndarray:
        return mode_curvatures(self.roots * self.beam.length, self.beam.length, x)

    def slope_at(self, x) -> np.ndarray:
        return mode_slopes(self.roots * self.beam.length, self.beam.length, x)

    def nearest_grid_index(self, x: float) -> int:
        return int(np.argmin(np.abs(self.grid - x)))

    def to_csv(self, path) -> None:
        from .textio import write_csv

        header = ["x"] + [f"phi_{i+1}" for i in range(self.n_modes)] + [
            f"phi_xx_{i+1}" for i in range(self.n_modes)
        ]
        rows = np.hstack([self.grid[:, None], self.mode_matrix, self.curvature_matrix])
        write_csv(path, header, rows)


def build_modal_basis(spec: BeamSpec, n_modes: int, grid_size: int = 501) -> ModalBasis:
    """Assemble the first ``n_modes`` cantilever modes on a uniform grid.

    Curvatures come from the closed-form second derivative, not finite
    differences of the sampled shapes. Norms use composite Simpson weights
    on the grid.
    """
    if grid_size < 20 * n_modes:
        raise ModelError(
            f"grid_size {grid_size} cannot resolve {n_modes} modes; need at least {20 * n_modes}"
        )
    dimensionless = find_characteristic_roots(n_modes)
    if dimensionless[-1] > _ROOT_OVERFLOW_LIMIT:
        raise ModelError(
            f"root {dimensionless[-1]:.1f} exceeds the overflow-safe evaluation range"
        )
    grid = np.linspace(0.0, spec.length, grid_size)
    phi = mode_shapes(dimensionless, spec.length, grid)
    phi_xx = mode_curvatures(dimensionless, spec.length, grid)
    norms = np.array([simpson(phi[:, i] ** 2, x=grid) for i in range(n_modes)])
    return ModalBasis(
        beam=spec,
        n_modes=n_modes,
        roots=dimensionless / spec.length,
        frequencies=(dimensionless / spec.length) ** 2 * spec.wave_coefficient,
        grid=grid,
        mode_matrix=phi,
        curvature_matrix=phi_xx,
        norms=norms,
    )


@dataclass(frozen=True)
class TruncatedSystem:
    """Modal-coordinate LTI pair: state H = [eta; eta_dot], outputs = strains."""

    frequencies: np.ndarray
    A: np.ndarray
    C: np.ndarray
    sensor_locations: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    @property
    def state_dim(self) -> int:
        return 2 * len(self.frequencies)


def _system_from_curvature_rows(basis: ModalBasis, curvature_rows: np.ndarray,
                                sensors: np.ndarray) -> TruncatedSystem:
    n = basis.n_modes
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -np.diag(basis.frequencies**2)
    C = np.zeros((len(sensors), 2 * n))
    C[:, :n] = basis.beam.half_thickness * curvature_rows
    return TruncatedSystem(
        frequencies=basis.frequencies.copy(),
        A=A,
        C=C,
        sensor_locations=np.asarray(sensors, dtype=float),
    )


def assemble_truncated_system(basis: ModalBasis, sensors) -> TruncatedSystem:
    """Truncated LTI system observed through strain gauges at ``sensors``.

    Each sensor is snapped to the nearest grid point; a snap that moves the
    sensor by more than a grid-roundoff distance emits a warning.
    """
    sensors = np.atleast_1d(np.asarray(sensors, dtype=float))
    if sensors.size == 0:
        raise ModelError("at least one sensor location is required")
    _as_points(sensors, basis.beam.length)
    spacing = basis.grid[1] - basis.grid[0]
    indices = np.array([basis.nearest_grid_index(x) for x in sensors])
    snapped = basis.grid[indices]
    moved = np.abs(snapped - sensors)
    if np.any(moved > 1e-9 * spacing):
        worst = int(np.argmax(moved))
        warnings.warn(
            f"sensor at x={sensors[worst]:.6g} snapped to grid point x={snapped[worst]:.6g}"
            f" (moved {moved[worst]:.3g} m)",
            stacklevel=2,
        )
    return _system_from_curvature_rows(basis, basis.curvature_matrix[indices, :], snapped)


@dataclass(frozen=True)
class InitialCondition:
    """Initial displacement/velocity fields and their modal coefficients."""

    displacement: np.ndarray   # samples on the basis grid
    velocity: np.ndarray
    alpha_disp: np.ndarray     # eta(0)
    alpha_vel: np.ndarray      # eta_dot(0)
    residual_disp: float       # max-abs reconstruction error, relative
    residual_vel: float

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.alpha_disp, self.alpha_vel])


def from_modal_coefficients(basis: ModalBasis, alpha_disp, alpha_vel) -> InitialCondition:
    """Initial condition synthesized from prescribed modal coefficients."""
    alpha_disp = np.asarray(alpha_disp, dtype=float)
    alpha_vel = np.asarray(alpha_vel, dtype=float)
    if alpha_disp.shape != (basis.n_modes,) or alpha_vel.shape != (basis.n_modes,):
        raise ModelError("coefficient vectors must have one entry per mode")
    return InitialCondition(
        displacement=basis.mode_matrix @ alpha_disp,
        velocity=basis.mode_matrix @ alpha_vel,
        alpha_disp=alpha_disp,
        alpha_vel=alpha_vel,
        residual_disp=0.0,
        residual_vel=0.0,
    )


def project_initial_condition(basis: ModalBasis, displacement, velocity) -> InitialCondition:
    """Project sampled fields onto the modal basis by Simpson quadrature.

    Coefficients are alpha_i = <w, phi_i> / c_i. The reported residuals are
    max-abs reconstruction errors relative to the field's own peak (zero
    fields give zero residual), quantifying what the truncation discards.
    """
    displacement = np.asarray(displacement, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    if displacement.shape != basis.grid.shape or velocity.shape != basis.grid.shape:
        raise ModelError("field samples must match the basis grid")

    def coeffs(samples: np.ndarray) -> np.ndarray:
        return np.array(
            [
                simpson(samples * basis.mode_matrix[:, i], x=basis.grid) / basis.norms[i]
                for i in range(basis.n_modes)
            ]
        )

    def rel_residual(samples: np.ndarray, alpha: np.ndarray) -> float:
        scale = np.max(np.abs(samples))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(samples - basis.mode_matrix @ alpha)) / scale)

    a_disp = coeffs(displacement)
    a_vel = coeffs(velocity)
    return InitialCondition(
        displacement=displacement,
        velocity=velocity,
        alpha_disp=a_disp,
        alpha_vel=a_vel,
        residual_disp=rel_residual(displacement, a_disp),
        residual_vel=rel_residual(velocity, a_vel),
    )
