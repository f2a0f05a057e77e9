"""Adjoint-based descent for the local-equilibrium inverse problem.

Each iteration runs the forward model, evaluates the terminal cost,
backpropagates its derivative with the induced adjoint integrator under
a scale-preconditioned pairing, takes an unconstrained gradient step,
and projects back onto the local equilibrium set E = a c T^4 with one
of two projections (orthogonal, or E-coordinate only).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .blockla import BlockVec
from .precond import PairingMap, build_scale_preconditioner
from .radiff import MarshakProblem, terminal_cost
from .timeint import NewtonError, StepConfig, integrate_adjoint, integrate_forward

__all__ = [
    "DescentConfig",
    "IterateRecord",
    "InversionResult",
    "adjoint_gradient",
    "gd_step",
    "mirror_descent_step",
    "project_orthogonal",
    "project_e_coordinate",
    "run_inverse_problem",
]

_PROJECTIONS = ("none", "orthogonal", "e_coordinate")


@dataclass
class DescentConfig:
    gamma: float = 0.1
    max_iters: int = 30
    scale_x: float = 1.0
    scale_y: float = 1.0
    projection: str = "orthogonal"
    stop_tol: float = 1e-3       # relative cost reduction, over stop_window iterations
    stop_window: int = 3
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.projection not in _PROJECTIONS:
            raise ValueError(f"projection must be one of {_PROJECTIONS}")


@dataclass
class IterateRecord:
    iteration: int
    C_E: float
    C_T: float
    grad_norm_E: float
    grad_norm_T: float
    lambda_max: float    # largest |multiplier| used by the projection
    wall_s: float


@dataclass
class InversionResult:
    outcome: str                 # converged | diverged | max_iters
    records: list
    E0: np.ndarray
    T0: np.ndarray
    final_state: BlockVec
    diverged_at: int | None = None


def adjoint_gradient(problem, u_0: BlockVec, t_span, step_cfg: StepConfig,
                     scale: PairingMap, targets=None):
    """Scale-reshaped derivative of the terminal cost with respect to u_0.

    Runs the forward sweep, forms the cost derivative at t_f, and
    backpropagates it with the induced scheme under the pairing `scale`.
    Returns (xi_0, C_E, C_T, trajectory). With the identity pairing xi_0
    is the exact discrete gradient; for constant P it equals P^{-T} times
    the unscaled gradient.
    """
    traj = integrate_forward(problem.field, u_0, t_span, step_cfg)
    E_star, T_star = targets
    C_E, C_T, dC = terminal_cost(traj.states[-1], E_star, T_star, problem.config)
    xi_T = scale.solve_transpose(dC)
    xi = integrate_adjoint(problem.field, traj, xi_T, step_cfg, scheme="induced",
                           precond=scale)
    return xi[0], C_E, C_T, traj


def gd_step(u_0: BlockVec, grad: BlockVec, gamma: float) -> BlockVec:
    return u_0 - gamma * grad


def mirror_descent_step(u, grad, F, Finv, gamma):
    """u' = F^{-1}(F(u) - gamma * grad) for an invertible mirror map F."""
    return Finv(F(u) - gamma * grad)


def _phi(E, T, ac):
    return E - ac * T ** 4


def project_orthogonal(E_un, T_un, config):
    """Componentwise closest point on the constraint set E = a c T^4, T > 0.

    Moves along the constraint gradient direction (1, -4acT^3) with a
    per-component multiplier lambda_i, found by bracketed root-finding on
    the projected temperature. The curve is even in T, so the search is
    restricted to the physical positive branch; with several stationary
    points the one of least distance wins.
    """
    ac = config.a * config.c
    E_un = np.asarray(E_un, dtype=float)
    T_un = np.asarray(T_un, dtype=float)
    E_out = np.empty_like(E_un)
    T_out = np.empty_like(T_un)
    lam = np.zeros_like(E_un)
    for i in range(E_un.size):
        e, t = E_un[i], T_un[i]
        if t > 0 and _phi(e, t, ac) == 0.0:
            E_out[i], T_out[i] = e, t
            continue
        # stationarity of the distance along the curve E = ac T^4:
        # g(T) = 4 ac T^3 (ac T^4 - e) + (T - t) = 0
        def g(T):
            return 4.0 * ac * T ** 3 * (ac * T ** 4 - e) + (T - t)

        def dist2(T):
            return (ac * T ** 4 - e) ** 2 + (T - t) ** 2

        T_i = _min_dist_root(g, dist2, t, e, ac)
        E_i = ac * T_i ** 4
        E_out[i], T_out[i] = E_i, T_i
        lam[i] = e - E_i  # multiplier along the E-component of the gradient
    return E_out, T_out, lam


def _min_dist_root(g, dist2, t, e, ac):
    """Least-distance stationary point on the positive branch.

    Scans a log grid for sign changes of g, refines each with brentq, and
    keeps the candidate of least distance; the lower grid end stands in
    for the T -> 0+ boundary when no positive root exists.
    """
    hi = max(abs(t), (max(e, 0.0) / ac) ** 0.25, 1.0)
    with np.errstate(over="ignore"):
        for _ in range(200):
            if g(hi) > 0.0:
                break
            hi *= 2.0
        grid = hi * np.logspace(-18.0, 0.0, 145)
        gv = np.array([g(T) for T in grid])
    cands = [grid[0]]
    for k in range(len(grid) - 1):
        if gv[k] == 0.0:
            cands.append(grid[k])
        elif np.sign(gv[k]) != np.sign(gv[k + 1]):
            cands.append(brentq(g, grid[k], grid[k + 1], xtol=1e-300,
                                rtol=8.9e-16, maxiter=200))
    if gv[-1] == 0.0:
        cands.append(grid[-1])
    return min(cands, key=dist2)


def project_e_coordinate(E_un, T_un, config):
    """Oblique projection moving only the E coordinate: E := a c T^4."""
    T_out = np.asarray(T_un, dtype=float).copy()
    if np.any(T_out <= 0):
        raise ValueError("E-coordinate projection requires positive temperatures")
    ac = config.a * config.c
    E_out = ac * T_out ** 4
    lam = np.asarray(E_un, dtype=float) - E_out
    return E_out, T_out, lam


def run_inverse_problem(problem: MarshakProblem, targets, t_span,
                        step_cfg: StepConfig, descent: DescentConfig) -> InversionResult:
    """Projected, scale-preconditioned gradient descent on the initial state.

    Stops on the relative-cost plateau, the iteration cap, or the
    divergence detector (cost growth beyond divergence_factor in one
    iteration, or a failed forward solve).
    """
    cfg = problem.config
    scale = build_scale_preconditioner((cfg.N, cfg.N), descent.scale_x, descent.scale_y)
    free = problem.free_mask
    u = problem.initial_state.copy()
    records = []
    prev_cost = None
    flat = 0
    for k in range(descent.max_iters):
        tic = time.perf_counter()
        try:
            # divergence shows up as overflow before it is caught by the
            # finiteness checks; the warnings are expected noise here
            with np.errstate(over="ignore", invalid="ignore"):
                xi0, C_E, C_T, traj = adjoint_gradient(problem, u, t_span, step_cfg,
                                                       scale, targets)
        except (NewtonError, FloatingPointError, ValueError):
            return InversionResult(outcome="diverged", records=records,
                                   E0=u.x, T0=u.y, final_state=u, diverged_at=k)
        cost = C_E + C_T
        gE = free * xi0.x
        gT = free * xi0.y
        lam_max = 0.0

        if prev_cost is not None and (not np.isfinite(cost)
                                      or cost > descent.divergence_factor * prev_cost):
            records.append(IterateRecord(k, C_E, C_T, float(np.linalg.norm(gE)),
                                         float(np.linalg.norm(gT)), lam_max,
                                         time.perf_counter() - tic))
            return InversionResult(outcome="diverged", records=records,
                                   E0=u.x, T0=u.y, final_state=traj.states[-1],
                                   diverged_at=k)

        E_un = u.x - descent.gamma * gE
        T_un = u.y - descent.gamma * gT
        try:
            if not (np.all(np.isfinite(E_un[free > 0]))
                    and np.all(np.isfinite(T_un[free > 0]))):
                raise ValueError("non-finite descent update")
            if descent.projection == "orthogonal":
                E_new, T_new, lam = project_orthogonal(E_un[free > 0], T_un[free > 0], cfg)
                lam_max = float(np.max(np.abs(lam))) if lam.size else 0.0
            elif descent.projection == "e_coordinate":
                E_new, T_new, lam = project_e_coordinate(E_un[free > 0], T_un[free > 0], cfg)
                lam_max = float(np.max(np.abs(lam))) if lam.size else 0.0
            else:
                E_new, T_new = E_un[free > 0], T_un[free > 0]
        except (ValueError, RuntimeError):
            # the updated iterate k+1 left the feasible region
            records.append(IterateRecord(k, C_E, C_T, float(np.linalg.norm(gE)),
                                         float(np.linalg.norm(gT)), 0.0,
                                         time.perf_counter() - tic))
            return InversionResult(outcome="diverged", records=records,
                                   E0=u.x, T0=u.y, final_state=traj.states[-1],
                                   diverged_at=k + 1)

        records.append(IterateRecord(k, C_E, C_T, float(np.linalg.norm(gE)),
                                     float(np.linalg.norm(gT)), lam_max,
                                     time.perf_counter() - tic))

        u_next = u.copy()
        u_next.x[free > 0] = E_new
        u_next.y[free > 0] = T_new
        u_next = problem.apply_drive(u_next)

        if prev_cost is not None:
            if abs(prev_cost - cost) <= descent.stop_tol * max(prev_cost, 1e-300):
                flat += 1
            else:
                flat = 0
            if flat >= descent.stop_window:
                return InversionResult(outcome="converged", records=records,
                                       E0=u.x, T0=u.y, final_state=traj.states[-1])
        prev_cost = cost
        u = u_next
    return InversionResult(outcome="max_iters", records=records,
                           E0=u.x, T0=u.y, final_state=traj.states[-1])
