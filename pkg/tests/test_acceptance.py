"""Acceptance suite: one test per headline criterion, one PASS/FAIL line each.

Full-scale inverse-problem runs (N=100, 20000 steps) are gated behind
ADJPREC_FULL=1 and the `fullscale` marker; the reduced profiles below
exercise the same code paths within CI budgets.
"""

import os
import time

import numpy as np
import pytest

from adjprec.adjoint_core import ImplicitField, canonical_adjoint_rhs, pairing_drift
from adjprec.blockla import BlockOp, BlockVec, DenseOp, schur_factor
from adjprec.optim import DescentConfig, adjoint_gradient, run_inverse_problem
from adjprec.precond import (
    CallableStateTransform,
    ConstantFiberPairing,
    DiagPairing,
    DiagonalFiberPairing,
    IdentityPairing,
    MatrixPairing,
    build_scale_preconditioner,
    christoffel,
    fiberwise_precondition_adjoint_rhs,
    mass_matrix_adjoint_system,
    pairing_precondition_adjoint_rhs,
    state_transform_adjoint_rhs,
    transform_state_dynamics,
)
from adjprec.radiff import RadDiffConfig, marshak_problem, terminal_cost
from adjprec.timeint import (
    StepConfig,
    integrate_adjoint,
    integrate_forward,
    propagate_variation,
    semi_implicit_step,
)
from _helpers import linear_field_from_dense, single_block_linear

fullscale = pytest.mark.skipif(os.environ.get("ADJPREC_FULL") != "1",
                               reason="set ADJPREC_FULL=1 for full-scale runs")


def _report(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def _perturbed_marshak(cfg, t_f, step):
    """Marshak problem plus targets generated from a Gaussian T0 bump."""
    prob = marshak_problem(cfg)
    x = cfg.x_centers
    u0p = prob.initial_state.copy()
    u0p.y[:] = cfg.T_init + 50.0 * np.exp(-((x - 0.125) / 0.025) ** 2)
    u0p.x[:] = cfg.a * cfg.c * u0p.y ** 4
    u0p = prob.apply_drive(u0p)
    traj = integrate_forward(prob.field, u0p, (0.0, t_f), step)
    return prob, (traj.states[-1].x.copy(), traj.states[-1].y.copy())


# ---------------------------------------------------------------------------


def test_criterion_1_discrete_conservation():
    # induced scheme conserves the adjoint-variational pairing at every
    # step; the naive scheme accumulates measurable drift
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    cfg = RadDiffConfig(N=50)
    prob = marshak_problem(cfg)
    step = StepConfig(dt=5e-13)
    K = 500
    traj = integrate_forward(prob.field, prob.initial_state, (0.0, K * step.dt), step)
    worst_induced = 0.0
    worst_naive = 0.0
    for _ in range(10):
        pK = BlockVec(rng.standard_normal(cfg.N), rng.standard_normal(cfg.N))
        du0 = BlockVec(rng.standard_normal(cfg.N), rng.standard_normal(cfg.N))
        dus = propagate_variation(prob.field, traj, du0, step)
        ref = abs(pK.dot(dus[-1]))
        ps = integrate_adjoint(prob.field, traj, pK, step, scheme="induced")
        drift = np.max(np.abs(pairing_drift(ps, dus))) / ref
        worst_induced = max(worst_induced, drift)
        ps = integrate_adjoint(prob.field, traj, pK, step, scheme="naive")
        drift = np.max(np.abs(pairing_drift(ps, dus))) / ref
        worst_naive = max(worst_naive, drift)
    wall = time.perf_counter() - t0
    ok = worst_induced <= 1e-10 and worst_naive > 1e-8 and wall < 60.0
    _report("criterion 1 (discrete conservation)", ok,
            f"induced {worst_induced:.2e} <= 1e-10, naive {worst_naive:.2e} > 1e-8, "
            f"{wall:.0f}s")


def test_criterion_2_gradient_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    cfg = RadDiffConfig(N=20)
    step = StepConfig(dt=5e-13)
    K = 200
    t_f = K * step.dt
    prob, targets = _perturbed_marshak(cfg, t_f, step)
    u0 = prob.initial_state
    xi0, _, _, _ = adjoint_gradient(prob, u0, (0.0, t_f), step,
                                    IdentityPairing(), targets)

    def cost(u):
        traj = integrate_forward(prob.field, u, (0.0, t_f), step)
        a, b, _ = terminal_cost(traj.states[-1], targets[0], targets[1], cfg)
        return a + b

    g = xi0.concat()
    base = u0.concat()
    c0 = cost(u0)
    free_idx = np.flatnonzero(np.concatenate([prob.free_mask, prob.free_mask]))
    # cost ~ 1e42 while most gradient components are orders of magnitude
    # smaller, so a central difference only resolves components that move
    # the cost above its float64 noise floor; below that floor the check
    # degenerates to an absolute bound at the resolution limit
    worst = 0.0
    n_resolved = 0
    for j in rng.choice(free_idx, size=20, replace=False):
        eps = 1e-6 * (1.0 + abs(base[j]))
        floor = 1e-9 * c0 / (2 * eps)
        e = np.zeros_like(base)
        e[j] = eps
        fd = (cost(BlockVec.from_concat(base + e, cfg.N, cfg.N))
              - cost(BlockVec.from_concat(base - e, cfg.N, cfg.N))) / (2 * eps)
        err = abs(g[j] - fd)
        if abs(g[j]) > 1e3 * floor:
            n_resolved += 1
            worst = max(worst, err / max(abs(fd), abs(g[j])))
        else:
            assert err <= 1e-5 * max(abs(fd), abs(g[j])) + 10.0 * floor
    # directional derivative along the gradient is always resolvable
    v = np.zeros_like(base)
    v[free_idx] = g[free_idx]
    v /= np.linalg.norm(v)
    eps_d = 1e-7 * c0 / abs(g @ v)
    fd_dir = (cost(BlockVec.from_concat(base + eps_d * v, cfg.N, cfg.N))
              - cost(BlockVec.from_concat(base - eps_d * v, cfg.N, cfg.N))) / (2 * eps_d)
    dir_err = abs(g @ v - fd_dir) / abs(g @ v)
    wall = time.perf_counter() - t0
    ok = worst <= 1e-5 and dir_err <= 1e-5 and n_resolved >= 1 and wall < 120.0
    _report("criterion 2 (gradient exactness)", ok,
            f"max relative error {worst:.2e} over {n_resolved} resolvable coords, "
            f"directional {dir_err:.2e}, both <= 1e-5, {wall:.0f}s")


def test_criterion_3_block_scale_identity():
    alpha, beta = 100.0, 0.01
    n = 3
    eye = np.eye(n)
    L = np.block([[eye, alpha * eye], [beta * eye, eye]])
    field = linear_field_from_dense(L, np.zeros((2 * n, 2 * n)), n, n)
    S = build_scale_preconditioner((n, n), 1.0, alpha / beta)
    u = BlockVec(np.zeros(n), np.zeros(n))
    cols = np.eye(2 * n)
    M = np.column_stack([
        pairing_precondition_adjoint_rhs(S, field, 0.0, u,
                                         BlockVec.from_concat(cols[:, j], n, n)).concat()
        for j in range(2 * n)])
    err = np.max(np.abs(M - (-L)))
    _report("criterion 3 (block 2x2 scale identity)", err <= 1e-14,
            f"max elementwise error {err:.2e} <= 1e-14")


def test_criterion_4_reduction_chain():
    rng = np.random.default_rng(104)
    nx, ny = 3, 2
    n = nx + ny
    field = linear_field_from_dense(rng.standard_normal((n, n)),
                                    rng.standard_normal((n, n)), nx, ny)
    ident = IdentityPairing()
    const_ident = ConstantFiberPairing(ident, n)
    D = DiagPairing(0.5 + rng.random(n))
    const_diag = ConstantFiberPairing(D, n)
    worst_ident = 0.0
    worst_diag = 0.0
    for _ in range(100):
        u = BlockVec(rng.standard_normal(nx), rng.standard_normal(ny))
        p = BlockVec(rng.standard_normal(nx), rng.standard_normal(ny))
        canon = canonical_adjoint_rhs(field, 0.0, u, p).concat()
        pair = pairing_precondition_adjoint_rhs(ident, field, 0.0, u, p).concat()
        fiber = fiberwise_precondition_adjoint_rhs(const_ident, field, 0.0, u, p).concat()
        scale = max(np.abs(canon).max(), 1.0)
        worst_ident = max(worst_ident,
                          np.abs(pair - canon).max() / scale,
                          np.abs(fiber - canon).max() / scale)
        pair_d = pairing_precondition_adjoint_rhs(D, field, 0.0, u, p).concat()
        fiber_d = fiberwise_precondition_adjoint_rhs(const_diag, field, 0.0, u, p).concat()
        worst_diag = max(worst_diag,
                         np.abs(fiber_d - pair_d).max() / max(np.abs(pair_d).max(), 1.0))
    u = BlockVec(rng.standard_normal(nx), rng.standard_normal(ny))
    gamma = christoffel(const_diag, u)
    gamma_zero = np.array_equal(gamma, np.zeros_like(gamma))
    ok = worst_ident <= 1e-14 and worst_diag <= 1e-14 and gamma_zero
    _report("criterion 4 (preconditioner reduction chain)", ok,
            f"identity chain {worst_ident:.2e}, constant-P chain {worst_diag:.2e}, "
            f"constant Christoffel exactly zero: {gamma_zero}")


def _fiberwise_drift(field, Pu, u0, du0, xiT, T, dt):
    """First-order forward/backward sweep; returns max pairing drift."""
    K = int(round(T / dt))
    us = [u0.copy()]
    dus = [du0.copy()]
    for n in range(K):
        u = us[-1]
        us.append(u + dt * field.f(0.0, u))
        dus.append(dus[-1] + dt * field.jvp(0.0, u, dus[-1]))
    xis = [None] * (K + 1)
    xis[K] = xiT.copy()
    for n in range(K - 1, -1, -1):
        xi = xis[n + 1]
        xis[n] = xi - dt * fiberwise_precondition_adjoint_rhs(
            Pu, field, 0.0, us[n + 1], xi)
    vals = [xis[n].dot(Pu.p_at(us[n]).apply(dus[n])) for n in range(K + 1)]
    return np.max(np.abs(np.array(vals) - vals[-1]))


def test_criterion_5_fiberwise_conservation_order():
    rng = np.random.default_rng(105)
    cases = []

    # scalar f(u) = sin(u) + 1/2 with P(u) = e^u
    f_scalar = ImplicitField(
        (1, 0),
        lambda t, u: BlockVec.single(np.sin(u.x) + 0.5),
        lambda t, u, v: BlockVec.single(np.cos(u.x) * v.x),
        lambda t, u, w: BlockVec.single(np.cos(u.x) * w.x),
    )
    cases.append((f_scalar, DiagonalFiberPairing(np.exp, np.exp),
                  BlockVec.single(np.array([0.3])),
                  BlockVec.single(np.array([1.0])),
                  BlockVec.single(np.array([0.7])),
                  "scalar exp"))

    # coupled linear field with randomized positive diagonal-polynomial P
    nx, ny = 2, 2
    n = nx + ny
    field = linear_field_from_dense(0.4 * rng.standard_normal((n, n)),
                                    0.4 * rng.standard_normal((n, n)), nx, ny)
    a = 0.2 + 0.8 * rng.random(n)
    b = 0.2 + 0.8 * rng.random(n)
    Pu = DiagonalFiberPairing(lambda v: 1.0 + a * v ** 2 + b * v ** 4,
                              lambda v: 2 * a * v + 4 * b * v ** 3)
    cases.append((field, Pu,
                  BlockVec(rng.standard_normal(nx), rng.standard_normal(ny)),
                  BlockVec(rng.standard_normal(nx), rng.standard_normal(ny)),
                  BlockVec(rng.standard_normal(nx), rng.standard_normal(ny)),
                  "diagonal polynomial"))

    details = []
    ok = True
    for field, Pu, u0, du0, xiT, label in cases:
        drifts = [_fiberwise_drift(field, Pu, u0, du0, xiT, 1.0, dt)
                  for dt in (0.02, 0.01, 0.005, 0.0025)]
        rates = np.log2(np.array(drifts[:-1]) / np.array(drifts[1:]))
        ok = ok and bool(np.all(np.abs(rates - 1.0) <= 0.2))
        details.append(f"{label}: rates {np.round(rates, 3)}")
    _report("criterion 5 (fiberwise conservation order)", ok, "; ".join(details))


def test_criterion_6_state_transform_adjoint():
    # linear A = diag(2, 1) under a quadratic componentwise transform
    A = np.diag([2.0, 1.0])
    field = single_block_linear(A)
    c = 0.1
    L = CallableStateTransform(
        lambda v: v + c * v ** 2,
        lambda w: (-1.0 + np.sqrt(1.0 + 4.0 * c * w)) / (2.0 * c),
        lambda v: 1.0 + 2.0 * c * v,
        lambda v: np.full_like(v, 2.0 * c),
    )
    transformed = transform_state_dynamics(L, field)
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(5):
        ut = BlockVec.single(0.5 + rng.random(2))
        pt = BlockVec.single(rng.standard_normal(2))
        got = state_transform_adjoint_rhs(L, field, 0.0, ut, pt).concat()
        # FD Jacobian of the transformed dynamics, transposed
        n = 2
        J = np.empty((n, n))
        eps = 1e-7
        base = ut.concat()
        for j in range(n):
            e = np.zeros(n)
            e[j] = eps
            fp = transformed.f(0.0, BlockVec.single(base + e)).concat()
            fm = transformed.f(0.0, BlockVec.single(base - e)).concat()
            J[:, j] = (fp - fm) / (2 * eps)
        want = -J.T @ pt.concat()
        worst = max(worst, np.max(np.abs(got - want)) / max(np.abs(want).max(), 1.0))
    transform_ok = worst <= 1e-8

    # mass-matrix pathway: FEM mass, gradient against central differences
    n, h = 6, 1.0 / 6
    M = (h / 6) * (4 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1))
    Astiff = -(2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h
    sys_ = mass_matrix_adjoint_system(MatrixPairing(M), single_block_linear(Astiff))
    cfg = StepConfig(dt=0.01)
    u0 = BlockVec.single(rng.standard_normal(n))

    def discrete_cost(u0v):
        traj = integrate_forward(sys_.field, BlockVec.single(u0v), (0.0, 0.2), cfg)
        return 0.5 * np.sum(traj.states[-1].concat() ** 2)

    traj = integrate_forward(sys_.field, u0, (0.0, 0.2), cfg)
    grad = integrate_adjoint(sys_.field, traj, traj.states[-1].copy(), cfg)[0].concat()
    mass_worst = 0.0
    eps = 1e-6
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        fd = (discrete_cost(u0.x + e) - discrete_cost(u0.x - e)) / (2 * eps)
        mass_worst = max(mass_worst, abs(grad[j] - fd) / max(abs(fd), 1.0))
    mass_ok = mass_worst <= 1e-5
    _report("criterion 6 (state-transform adjoint)", transform_ok and mass_ok,
            f"transform rhs vs FD {worst:.2e} <= 1e-8, "
            f"mass-matrix gradient {mass_worst:.2e} <= 1e-5")


# ---------------------------------------------------------------------------
# criterion 7: inverse problem


# per-projection run setups: (dt, scale_x, scale_y, iteration cap). Scale
# pairs found by sweeping; the orthogonal projection needs the E and T
# steps consistent with the constraint-curve slope at the cold state
# (scale_y/scale_x = rho c_v 4 a c T0^3 = 7.7e20). The reduced caps stop
# just past the 1e3x crossing to fit the CI wall budget; the orthogonal
# reduced run tolerates (and converges faster at) the coarser step.
REDUCED = dict(N=50, t_f=5e-9,
               runs={"e_coordinate": (1e-12, 1.0, 1e44, 12),
                     "orthogonal": (2e-12, 1.3e23, 1e44, 12)})
FULL = dict(N=100, t_f=1e-8,
            runs={"e_coordinate": (5e-13, 1.0, 5e40, 30),
                  "orthogonal": (5e-13, 6.5e19, 5e40, 30)})


def _inverse_outcomes(profile):
    cfg = RadDiffConfig(N=profile["N"])
    t_f = profile["t_f"]
    targets_by_dt = {}
    out = {}
    for proj, (dt, sx, sy, cap) in profile["runs"].items():
        step = StepConfig(dt=dt)
        if dt not in targets_by_dt:
            targets_by_dt[dt] = _perturbed_marshak(cfg, t_f, step)
        prob, targets = targets_by_dt[dt]
        d = DescentConfig(gamma=0.1, max_iters=5, scale_x=1.0, scale_y=1.0,
                          projection=proj)
        res = run_inverse_problem(prob, targets, (0.0, t_f), step, d)
        out[f"naive_{proj}"] = (res.outcome, res.diverged_at)
        d = DescentConfig(gamma=0.1, max_iters=cap, scale_x=sx, scale_y=sy,
                          projection=proj, stop_tol=1e-14)
        res = run_inverse_problem(prob, targets, (0.0, t_f), step, d)
        ce = np.array([r.C_E for r in res.records])
        ct = np.array([r.C_T for r in res.records])
        tot = ce + ct
        out[proj] = dict(
            outcome=res.outcome,
            iters=len(res.records),
            mono=bool(np.all(np.diff(ce) <= 0) and np.all(np.diff(ct) <= 0)),
            reduction=float(tot[0] / tot.min()),
        )
    return out


def _check_criterion_7(out, name, wall):
    ok = True
    details = []
    for proj in ("e_coordinate", "orthogonal"):
        outcome, at = out[f"naive_{proj}"]
        ok = ok and outcome == "diverged" and at == 1
        details.append(f"scale=1 {proj}: {outcome} at {at}")
        r = out[proj]
        good = r["mono"] and r["reduction"] >= 1e3 and r["iters"] <= 30
        ok = ok and good
        details.append(f"{proj}: mono={r['mono']} reduction={r['reduction']:.1e} "
                       f"iters={r['iters']}")
    details.append(f"{wall:.0f}s")
    _report(name, ok, "; ".join(details))


def test_criterion_7_inverse_problem_reduced():
    t0 = time.perf_counter()
    out = _inverse_outcomes(REDUCED)
    wall = time.perf_counter() - t0
    _check_criterion_7(out, "criterion 7 (inverse problem, reduced profile)", wall)
    assert wall < 120.0, f"reduced profile took {wall:.0f}s"


@fullscale
@pytest.mark.fullscale
def test_criterion_7_inverse_problem_fullscale():
    t0 = time.perf_counter()
    out = _inverse_outcomes(FULL)
    wall = time.perf_counter() - t0
    _check_criterion_7(out, "criterion 7 (inverse problem, paper scale)", wall)


# ---------------------------------------------------------------------------


def test_criterion_8_marshak_sanity():
    cfg = RadDiffConfig()
    prob = marshak_problem(cfg)
    E0 = prob.initial_state.x[1]
    e0_ok = abs(E0 - 1.61e6) <= 0.01 * 1.61e6
    ratio = cfg.diffusion(1200.0) / cfg.diffusion(0.025)
    range_ok = abs(ratio - 1.1e14) <= 0.01 * 1.1e14

    cold = marshak_problem(RadDiffConfig(N=20, drive=False))
    step = StepConfig(dt=5e-13)
    out = semi_implicit_step(cold.field, 0.0, cold.initial_state, step)
    fp = np.max(np.abs((out - cold.initial_state).concat()))
    fp_ok = fp <= 1e-10 * (1 + cold.initial_state.inf_norm())

    drive = marshak_problem(RadDiffConfig(N=20))
    traj = integrate_forward(drive.field, drive.initial_state, (0.0, 1e-10), step)
    halfway = 0.5 * drive.config.T_drive
    fronts = [np.sum(s.y > halfway) for s in traj.states[::20]]
    front_ok = all(b >= a for a, b in zip(fronts, fronts[1:]))

    ok = e0_ok and range_ok and fp_ok and front_ok
    _report("criterion 8 (Marshak physics sanity)", ok,
            f"E0={E0:.3e} (1%), D-range={ratio:.3e} (1%), fixed point {fp:.1e}, "
            f"front nondecreasing: {front_ok}")


def test_criterion_9_schur_vs_dense():
    rng = np.random.default_rng(109)
    worst = 0.0
    for _ in range(50):
        nx = int(rng.integers(1, 150))
        ny = int(rng.integers(1, 200 - nx))
        n = nx + ny
        A = rng.standard_normal((n, n)) + 3.0 * np.sqrt(n) * np.eye(n)
        Nop = BlockOp(DenseOp(A[:nx, :nx]), DenseOp(A[:nx, nx:]),
                      DenseOp(A[nx:, :nx]), DenseOp(A[nx:, nx:]))
        b = rng.standard_normal(n)
        bv = BlockVec.from_concat(b, nx, ny)
        fac = schur_factor(Nop)
        got = fac.solve(bv).concat()
        want = np.linalg.solve(A, b)
        worst = max(worst, np.max(np.abs(got - want)) / np.max(np.abs(want)))
        got_t = fac.solve_transpose(bv).concat()
        want_t = np.linalg.solve(A.T, b)
        worst = max(worst, np.max(np.abs(got_t - want_t)) / np.max(np.abs(want_t)))
    _report("criterion 9 (Schur vs dense LU)", worst <= 1e-12,
            f"max relative error {worst:.2e} <= 1e-12 over 50 systems")
