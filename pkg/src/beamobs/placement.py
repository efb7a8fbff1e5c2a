"""Observability measures and convex sensor placement.

The placement problem minimizes J = kappa + w*nu of the summed Gramian over
binary sensor activations. Its relaxation (activations a in [0,1], budget
sum a <= p, change of variables a_bar = nu*a) is an SDP with two semidefinite
cones and box constraints, solved here by a log-det barrier interior-point
method with damped Newton centering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.linalg.blas import dsyrk

from .beam_model import ModalBasis, ModelError, assemble_truncated_system
from .gramian import (
    Gramian,
    composite_simpson_weights,
    truncated_analytical_gramian,
    _trig_kernels,
)
from .simulate import _time_grid

DEFAULT_WEIGHT = 5.0


@dataclass(frozen=True)
class MetricSet:
    """Observability measures of one Gramian under the weighted objective."""

    nu: float         # 1 / lambda_min
    kappa: float      # lambda_max / lambda_min
    objective: float  # kappa + weight * nu
    weight: float
    lambda_min: float
    lambda_max: float


def metrics(W, weight: float = DEFAULT_WEIGHT) -> MetricSet:
    """Condition number, inverse minimum eigenvalue, and J = kappa + w*nu.

    A singular Gramian (lambda_min at or below the relative floor) maps to
    infinite nu, kappa, and J rather than an error: unobservable candidates
    are ranked, not rejected.
    """
    matrix = W.matrix if isinstance(W, Gramian) else np.asarray(W, dtype=float)
    eigvals = np.linalg.eigvalsh(matrix)
    lo, hi = float(eigvals[0]), float(eigvals[-1])
    if lo <= 1e-12 * max(hi, 0.0):
        return MetricSet(np.inf, np.inf, np.inf, weight, lo, hi)
    return MetricSet(1.0 / lo, hi / lo, hi / lo + weight / lo, weight, lo, hi)


def objective_scan(gramians, weight: float = DEFAULT_WEIGHT) -> np.ndarray:
    """J for each candidate Gramian, in input order."""
    return np.array([metrics(W, weight).objective for W in gramians])


def candidate_gramians(
    basis: ModalBasis,
    candidates,
    horizon: float,
    dt: float | None = None,
    system: str = "continuum",
) -> np.ndarray:
    """Single-sensor analytical Gramians for every candidate location.

    ``system='truncated'`` gives the 2n x 2n modal-state Gramian per
    candidate (closed-form trig kernels shared across candidates);
    ``'continuum'`` gives the 2x2 distributed-state Gramian, which needs a
    quadrature step ``dt``. Returns an (m, d, d) stack.
    """
    candidates = np.atleast_1d(np.asarray(candidates, dtype=float))
    w = basis.frequencies
    gains = basis.beam.half_thickness * basis.curvature_at(candidates)  # (m, n_modes)
    if system == "truncated":
        icc, ics, iss = _trig_kernels(w, horizon)
        outer = np.einsum("mi,mj->mij", gains, gains)
        n = basis.n_modes
        W = np.empty((len(candidates), 2 * n, 2 * n))
        W[:, :n, :n] = outer * icc
        W[:, :n, n:] = outer * (ics / w[None, :])
        W[:, n:, :n] = np.swapaxes(W[:, :n, n:], 1, 2)
        W[:, n:, n:] = outer * (iss / np.outer(w, w))
        return W
    if system == "continuum":
        if dt is None:
            raise ModelError("continuum Gramians need a quadrature step dt")
        times = _time_grid(horizon, dt)
        weights = composite_simpson_weights(len(times), times[1] - times[0])
        wt = np.outer(times, w)
        a_cols = np.cos(wt) @ gains.T          # (K, m)
        b_cols = np.sin(wt) @ (gains / w).T
        W = np.empty((len(candidates), 2, 2))
        W[:, 0, 0] = np.einsum("km,k->m", a_cols**2, weights)
        W[:, 0, 1] = np.einsum("km,k->m", a_cols * b_cols, weights)
        W[:, 1, 0] = W[:, 0, 1]
        W[:, 1, 1] = np.einsum("km,k->m", b_cols**2, weights)
        return W
    raise ModelError(f"unknown system variant {system!r}")


@dataclass(frozen=True)
class PlacementSolution:
    """Relaxed and rounded solutions of one placement instance.

    The solver conditions the problem on Gramians divided by ``scale`` =
    lambda_min of the all-on sum; ``a_bar``/``nu_hat`` are the solver's
    variables in those scaled units (so a_bar_i <= nu_hat holds as stated),
    while ``objective_relaxed`` and ``achieved`` are in original units:
    J = kappa + weight / lambda_min(W_tilde). Scaling never changes which
    activation pattern is optimal, only the numbers the solver manipulates.
    """

    candidates: np.ndarray
    weight: float
    budget: int
    scale: float
    a_bar: np.ndarray
    kappa_hat: float
    nu_hat: float
    a_relaxed: np.ndarray
    objective_relaxed: float
    status: str
    iterations: int
    kkt_residual: float
    gap: float
    selection: np.ndarray | None = None
    achieved: MetricSet | None = None

    @property
    def nu_hat_original(self) -> float:
        return self.nu_hat / self.scale

    @property
    def selected_locations(self) -> np.ndarray | None:
        if self.selection is None:
            return None
        return self.candidates[self.selection]


def _as_matrix_stack(gramians) -> np.ndarray:
    mats = [W.matrix if isinstance(W, Gramian) else np.asarray(W, dtype=float) for W in gramians]
    stack = np.stack(mats).astype(float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ModelError("candidate Gramians must be square matrices of equal size")
    return stack


class _BarrierState:
    """Slack factorizations and barrier derivatives at one interior point."""

    def __init__(self, Ws: np.ndarray, p: int, y: np.ndarray):
        m, n = Ws.shape[0], Ws.shape[1]
        a_bar, kappa, nu = y[:m], y[m], y[m + 1]
        W_tilde = np.einsum("i,ijk->jk", a_bar, Ws)
        self.S1 = W_tilde - np.eye(n)
        self.S2 = kappa * np.eye(n) - W_tilde
        self.box = np.concatenate([a_bar, nu - a_bar, [p * nu - a_bar.sum()]])
        self.feasible = bool(self.box.min() > 0.0)
        self.L1 = self.L2 = None
        if self.feasible:
            try:
                self.L1 = np.linalg.cholesky(self.S1)
                self.L2 = np.linalg.cholesky(self.S2)
            except np.linalg.LinAlgError:
                self.feasible = False

    def barrier_value(self) -> float:
        logdet1 = 2.0 * np.log(np.diag(self.L1)).sum()
        logdet2 = 2.0 * np.log(np.diag(self.L2)).sum()
        return -logdet1 - logdet2 - np.log(self.box).sum()


def _barrier_derivatives(Ws: np.ndarray, p: int, y: np.ndarray, state: _BarrierState):
    """Gradient and Hessian of the full barrier at a strictly feasible y."""
    m, n = Ws.shape[0], Ws.shape[1]
    a_bar, nu = y[:m], y[m + 1]
    eye = np.eye(n)
    P1 = cho_solve((state.L1, True), eye)
    P2 = cho_solve((state.L2, True), eye)
    inv_a = 1.0 / a_bar
    inv_v = 1.0 / (nu - a_bar)
    inv_u = 1.0 / (p * nu - a_bar.sum())

    trace_P1W = np.einsum("jk,ijk->i", P1, Ws)
    trace_P2W = np.einsum("jk,ijk->i", P2, Ws)
    grad = np.empty(m + 2)
    grad[:m] = -trace_P1W + trace_P2W - inv_a + inv_v + inv_u
    grad[m] = -np.trace(P2)
    grad[m + 1] = -inv_v.sum() - p * inv_u

    Linv1 = solve_triangular(state.L1, eye, lower=True)
    Linv2 = solve_triangular(state.L2, eye, lower=True)
    # batched congruence L^-1 W_i L^-T; matmul beats einsum here by ~3x
    F1 = (Linv1[None] @ Ws @ Linv1.T[None]).reshape(m, n * n)
    F2 = (Linv2[None] @ Ws @ Linv2.T[None]).reshape(m, n * n)
    f2_kappa = (Linv2 @ Linv2.T).reshape(n * n)

    H = np.zeros((m + 2, m + 2))
    gram1 = dsyrk(1.0, F1, lower=0)
    gram2 = dsyrk(1.0, F2, lower=0)
    upper = np.triu(gram1 + gram2)
    H[:m, :m] = upper + upper.T - np.diag(np.diag(upper))
    H[:m, m] = -F2 @ f2_kappa
    H[m, :m] = H[:m, m]
    H[m, m] = f2_kappa @ f2_kappa
    # box terms: -log(a), -log(nu - a), -log(p*nu - sum a)
    diag = np.arange(m)
    H[diag, diag] += inv_a**2 + inv_v**2
    H[:m, m + 1] += -(inv_v**2)
    H[m + 1, :m] += -(inv_v**2)
    H[m + 1, m + 1] += (inv_v**2).sum()
    gu = np.concatenate([-np.ones(m), [0.0, p]])
    H += inv_u**2 * np.outer(gu, gu)
    return grad, H


def _max_box_step(p: int, y: np.ndarray, dy: np.ndarray) -> float:
    """Largest step keeping the linear box constraints strictly positive."""
    m = len(y) - 2
    vals = np.concatenate([y[:m], y[m + 1] - y[:m], [p * y[m + 1] - y[:m].sum()]])
    dirs = np.concatenate([dy[:m], dy[m + 1] - dy[:m], [p * dy[m + 1] - dy[:m].sum()]])
    shrinking = dirs < 0.0
    if not shrinking.any():
        return 1.0
    return min(1.0, 0.99 * float(np.min(vals[shrinking] / -dirs[shrinking])))


def _newton_direction(H: np.ndarray, grad_full: np.ndarray) -> np.ndarray:
    """Solve H dy = -grad via Jacobi-equilibrated Cholesky with ridge fallback.

    The barrier Hessian mixes box terms of order 1/a^2 with LMI terms of
    order trace(S^-1 W)^2, spanning many decades; equilibration keeps the
    factorization accurate where a raw Cholesky loses the small rows.
    """
    d = 1.0 / np.sqrt(np.diag(H))
    Hs = d[:, None] * H * d[None, :]
    ridge = 0.0
    while True:
        try:
            factor = cho_factor(Hs + ridge * np.eye(len(grad_full)), lower=True)
            break
        except np.linalg.LinAlgError:
            ridge = max(10.0 * ridge, 1e4 * np.finfo(float).eps)
    return d * cho_solve(factor, -(d * grad_full))


def _center(Ws, p, c, t, y, newton_budget, grad_tol):
    """Damped Newton descent on t*c.y + barrier(y).

    Returns (y, iters, grad, reason): reason is 'converged' once the gradient
    meets grad_tol, 'budget' when the Newton allowance runs out first, and
    'stalled' when the line search cannot improve the (float-limited) merit.
    """
    state = _BarrierState(Ws, p, y)
    if not state.feasible:
        raise ModelError("interior-point centering started outside the feasible region")
    iters = 0
    reason = "budget"
    for _ in range(newton_budget):
        grad_phi, H = _barrier_derivatives(Ws, p, y, state)
        grad_full = t * c + grad_phi
        if np.abs(grad_full).max() <= grad_tol:
            reason = "converged"
            break
        dy = _newton_direction(H, grad_full)
        slope = float(grad_full @ dy)
        # Affine-invariant backstop: a Newton decrement this small means the
        # point is the center to beyond float gradient resolution. Take the
        # final step only when it still shrinks the gradient (it contracts
        # quadratically until float noise takes over).
        if -slope <= 1e-10:
            trial = y + _max_box_step(p, y, dy) * dy
            trial_state = _BarrierState(Ws, p, trial)
            if trial_state.feasible:
                trial_grad = t * c + _barrier_derivatives(Ws, p, trial, trial_state)[0]
                if np.abs(trial_grad).max() < np.abs(grad_full).max():
                    y, state, grad_full = trial, trial_state, trial_grad
                    iters += 1
            reason = "converged"
            break
        if slope >= 0.0:
            reason = "stalled"
            break
        alpha = _max_box_step(p, y, dy)
        accepted = False
        # Inside the quadratic-convergence region the merit decrease falls
        # below float resolution of t*c.y, so skip the Armijo comparison
        # (pure Newton is safe there for a self-concordant barrier).
        if -slope <= 0.0625:
            trial = y + alpha * dy
            trial_state = _BarrierState(Ws, p, trial)
            if trial_state.feasible:
                y, state = trial, trial_state
                accepted = True
        if not accepted:
            f0 = t * (c @ y) + state.barrier_value()
            for _ in range(60):
                trial = y + alpha * dy
                trial_state = _BarrierState(Ws, p, trial)
                if trial_state.feasible:
                    f_trial = t * (c @ trial) + trial_state.barrier_value()
                    if f_trial <= f0 + 1e-4 * alpha * slope:
                        y, state = trial, trial_state
                        accepted = True
                        break
                alpha *= 0.5
        iters += 1
        if not accepted:
            reason = "stalled"
            break
    else:
        grad_full = t * c + _barrier_derivatives(Ws, p, y, state)[0]
        if np.abs(grad_full).max() <= grad_tol:
            reason = "converged"
    return y, iters, grad_full, reason


def solve_relaxation(
    gramians,
    budget: int,
    weight: float = DEFAULT_WEIGHT,
    candidates=None,
    gap_tol: float = 1e-6,
    max_iterations: int = 500,
) -> PlacementSolution:
    """Solve the convex placement relaxation by a barrier interior-point method.

    minimize  kappa_hat + weight * nu
    s.t.      W(a_bar) >= I,  kappa_hat*I >= W(a_bar),
              0 <= a_bar_i <= nu_hat,  sum a_bar <= budget * nu_hat,

    where W(a_bar) sums the candidate Gramians pre-divided by lambda_min of
    the all-on sum for conditioning. Dividing the Gramians multiplies nu_hat
    by the same scale, so the solver weights nu_hat by weight/scale and the
    objective stays in original units (kappa is scale-free). The recovered
    relaxed activations are a = a_bar / nu_hat in [0, 1].
    """
    Ws = _as_matrix_stack(gramians)
    m, n = Ws.shape[0], Ws.shape[1]
    if not 1 <= budget <= m:
        raise ModelError(f"budget must be in 1..{m}, got {budget}")
    if candidates is None:
        candidates = np.arange(m, dtype=float)
    candidates = np.asarray(candidates, dtype=float)
    total = Ws.sum(axis=0)
    eigvals = np.linalg.eigvalsh(total)
    scale = float(eigvals[0])
    if scale <= max(eigvals[-1], 0.0) * n * np.finfo(float).eps:
        raise ModelError(
            "all-on Gramian is singular; the placement problem is infeasible"
        )
    Ws = Ws / scale

    # Weight zero leaves nu_hat unpenalized and therefore unbounded (no
    # analytic center exists); a floor this small biases the objective by
    # under (m+p)/t, far below the gap tolerance, while keeping the
    # centering problem well-posed.
    w_eff = max(weight / scale, 1e-30)
    c = np.zeros(m + 2)
    c[m] = 1.0
    c[m + 1] = w_eff

    theta = 2.0 * n + 2.0 * m + 1.0  # total barrier complexity
    # a_bar = 2 gives W(a_bar) = 2*total/scale whose lambda_min is exactly 2.
    kappa0 = 3.0 * float(np.linalg.eigvalsh(total / scale)[-1])
    t_guess = theta / (0.5 * (1.0 + kappa0))
    y = np.empty(m + 2)
    y[:m] = 2.0
    y[m] = kappa0
    # Start nu_hat near its centered value so flat directions need no long
    # geometric climb.
    y[m + 1] = max(4.0, 4.0 * m / budget, (m + budget) / (t_guess * w_eff))
    objective = float(c @ y)
    t = theta / (0.5 * (1.0 + abs(objective)))
    total_iters = 0
    status = "max_iterations"
    grad_full = None
    for _ in range(400):
        grad_scale = max(1.0, t * float(np.abs(c).max()))
        y, iters, grad_full, reason = _center(
            Ws, budget, c, t, y,
            newton_budget=min(60, max(0, max_iterations - total_iters)),
            grad_tol=1e-9 * grad_scale,
        )
        total_iters += iters
        objective = float(c @ y)
        if reason == "stalled":
            status = "stalled"
            break
        if reason == "converged":
            if theta / t <= gap_tol * (1.0 + abs(objective)):
                status = "optimal"
                break
            if total_iters >= max_iterations:
                break
            t *= 20.0
        elif total_iters >= max_iterations:
            break

    a_bar = y[:m].copy()
    kappa_hat, nu_hat = float(y[m]), float(y[m + 1])
    kkt = float(np.abs(grad_full).max() / t / (1.0 + np.abs(c).max()))
    return PlacementSolution(
        candidates=candidates,
        weight=weight,
        budget=int(budget),
        scale=scale,
        a_bar=a_bar,
        kappa_hat=kappa_hat,
        nu_hat=nu_hat,
        a_relaxed=a_bar / nu_hat,
        objective_relaxed=kappa_hat + weight * nu_hat / scale,
        status=status,
        iterations=total_iters,
        kkt_residual=kkt,
        gap=float(theta / t / (1.0 + abs(objective))),
        selection=None,
        achieved=None,
    )


def _selection_metrics(Ws_scaled: np.ndarray, selection, weight: float) -> MetricSet:
    return metrics(Ws_scaled[list(selection)].sum(axis=0), weight)


def round_to_binary(solution: PlacementSolution, gramians, budget: int | None = None) -> PlacementSolution:
    """Round relaxed activations to a binary selection and polish it.

    Top-p activations win, ties broken toward the smaller coordinate.
    Activations below 1e-7 of the largest are interior-point residue on
    candidates the relaxation left inactive; they are treated as exact zeros
    so the tie-break, not solver noise, orders them. If the selected sum is
    singular the set is repaired by greedily adding the candidate that
    maximizes lambda_min, then trimmed back to the budget. One
    local-exchange sweep follows: each selected sensor may swap with a grid
    neighbor when that lowers J. Returns a copy of the solution with
    ``selection`` and ``achieved`` (original-unit metrics) filled in.
    """
    Ws = _as_matrix_stack(gramians)
    m = Ws.shape[0]
    p = solution.budget if budget is None else int(budget)
    if not 1 <= p <= m:
        raise ModelError(f"budget must be in 1..{m}, got {p}")
    a_ranked = solution.a_relaxed.copy()
    a_ranked[a_ranked <= 1e-7 * a_ranked.max()] = 0.0
    order = np.lexsort((solution.candidates, -a_ranked))
    chosen = list(order[:p])

    def lam_min(sel) -> float:
        return float(np.linalg.eigvalsh(Ws[list(sel)].sum(axis=0))[0])

    # Repair: a singular selection cannot be ranked by J, so grow the set
    # by best lambda_min, then trim the lowest activations that keep it
    # nonsingular.
    while not np.isfinite(_selection_metrics(Ws, chosen, solution.weight).objective) and len(chosen) < m:
        outside = [i for i in range(m) if i not in chosen]
        gains = [lam_min(chosen + [i]) for i in outside]
        chosen.append(outside[int(np.argmax(gains))])
    while len(chosen) > p:
        by_activation = sorted(chosen, key=lambda i: (a_ranked[i], -solution.candidates[i]))
        removed = None
        for victim in by_activation:
            trial = [i for i in chosen if i != victim]
            if np.isfinite(_selection_metrics(Ws, trial, solution.weight).objective):
                removed = victim
                break
        if removed is None:
            removed = by_activation[0]
        chosen.remove(removed)

    chosen = sorted(chosen)
    best_obj = _selection_metrics(Ws, chosen, solution.weight).objective
    for idx, member in enumerate(list(chosen)):
        for neighbor in (member - 1, member + 1):
            if neighbor < 0 or neighbor >= m or neighbor in chosen:
                continue
            trial = list(chosen)
            trial[idx] = neighbor
            obj = _selection_metrics(Ws, trial, solution.weight).objective
            if obj < best_obj:
                best_obj = obj
                chosen = sorted(trial)
    selection = np.array(sorted(chosen), dtype=int)
    achieved = _selection_metrics(Ws, selection, solution.weight)
    return replace(solution, selection=selection, achieved=achieved)


def baseline_placements(grid, p: int, seed: int, curvature_matrix=None) -> dict:
    """Random, equally spaced, and curvature-peak reference placements.

    Returns candidate indices into ``grid``. The curvature-peak baseline
    needs the sampled curvature matrix to score locations by sum_k |phi_k,xx|
    and picks the p largest local maxima of that score (falling back to the
    largest remaining scores when the landscape has fewer peaks).
    """
    grid = np.asarray(grid, dtype=float)
    m = len(grid)
    if not 1 <= p <= m:
        raise ModelError(f"p must be in 1..{m}, got {p}")
    rng = np.random.default_rng(seed)
    random_sel = np.sort(rng.choice(m, size=p, replace=False))

    # Cell midpoints avoid stacking sensors on both beam ends.
    targets = (np.arange(p) + 0.5) * (grid[-1] - grid[0]) / p + grid[0]
    uniform_sel: list[int] = []
    for x in targets:
        idx = int(np.argmin(np.abs(grid - x)))
        while idx in uniform_sel and idx + 1 < m:
            idx += 1
        if idx not in uniform_sel:
            uniform_sel.append(idx)
    for idx in range(m):
        if len(uniform_sel) == p:
            break
        if idx not in uniform_sel:
            uniform_sel.append(idx)
    uniform_sel = np.array(sorted(uniform_sel), dtype=int)

    result = {"random": random_sel, "uniform": uniform_sel}
    if curvature_matrix is not None:
        score = np.abs(np.asarray(curvature_matrix)).sum(axis=1)
        is_peak = np.ones(m, dtype=bool)
        is_peak[1:] &= score[1:] >= score[:-1]
        is_peak[:-1] &= score[:-1] >= score[1:]
        peaks = np.flatnonzero(is_peak)
        ranked_peaks = sorted(peaks, key=lambda i: (-score[i], grid[i]))
        chosen = list(ranked_peaks[:p])
        if len(chosen) < p:
            rest = sorted(
                (i for i in range(m) if i not in chosen),
                key=lambda i: (-score[i], grid[i]),
            )
            chosen.extend(rest[: p - len(chosen)])
        result["curvature"] = np.array(sorted(chosen), dtype=int)
    return result
