"""Preconditioning transformations for adjoint systems.

Three mechanisms are provided: state-space diffeomorphisms L (with the
induced cotangent-lift adjoint), constant duality pairings P, and
state-dependent fiberwise pairings P(u) with their connection
(Christoffel) correction. A block-diagonal scale pairing builder covers
the common scale-separated case.
"""

from __future__ import annotations

import numpy as np

from .adjoint_core import ImplicitField, PartitionedField
from .blockla import BlockOp, BlockVec, DenseOp, SingularOperatorError

__all__ = [
    "PairingMap",
    "IdentityPairing",
    "DiagPairing",
    "MatrixPairing",
    "build_scale_preconditioner",
    "StateTransform",
    "LinearStateTransform",
    "CallableStateTransform",
    "FiberPairing",
    "DiagonalFiberPairing",
    "MatrixFiberPairing",
    "ConstantFiberPairing",
    "transform_state_dynamics",
    "state_transform_adjoint_rhs",
    "MassMatrixSystem",
    "mass_matrix_adjoint_system",
    "pairing_precondition_adjoint_rhs",
    "fiberwise_precondition_adjoint_rhs",
    "christoffel",
    "covariant_adjoint_residual",
]


# ---------------------------------------------------------------------------
# Constant pairings


class PairingMap:
    """Constant invertible operator P defining the pairing <p,u>_P = <<p, P u>>.

    All four actions (P, P^T, P^{-1}, P^{-T}) operate on BlockVec and
    preserve the block shape.
    """

    def apply(self, v: BlockVec) -> BlockVec:
        raise NotImplementedError

    def apply_transpose(self, w: BlockVec) -> BlockVec:
        raise NotImplementedError

    def solve(self, v: BlockVec) -> BlockVec:
        raise NotImplementedError

    def solve_transpose(self, w: BlockVec) -> BlockVec:
        raise NotImplementedError

    def pairing(self, p: BlockVec, u: BlockVec) -> float:
        return p.dot(self.apply(u))


class IdentityPairing(PairingMap):
    def apply(self, v):
        return v.copy()

    apply_transpose = apply
    solve = apply
    solve_transpose = apply


class DiagPairing(PairingMap):
    """P = diag(d) over the concatenated blocks; symmetric, so the
    transpose actions coincide with the plain ones."""

    def __init__(self, d):
        self.d = np.asarray(d, dtype=float).reshape(-1)
        if np.min(np.abs(self.d)) == 0.0:
            raise SingularOperatorError("pairing", "zero diagonal entry")

    def apply(self, v):
        return v.like(self.d * v.concat())

    apply_transpose = apply

    def solve(self, v):
        return v.like(v.concat() / self.d)

    solve_transpose = solve


class MatrixPairing(PairingMap):
    """Dense P over the concatenated blocks (diagnostics scale)."""

    def __init__(self, P):
        self._op = DenseOp(np.asarray(P, dtype=float))
        if self._op.m != self._op.n:
            raise ValueError("pairing matrix must be square")

    @property
    def matrix(self):
        return self._op.A

    def apply(self, v):
        return v.like(self._op.apply(v.concat()))

    def apply_transpose(self, w):
        return w.like(self._op.apply_t(w.concat()))

    def solve(self, v):
        return v.like(self._op.solve(v.concat()))

    def solve_transpose(self, w):
        return w.like(self._op.solve(w.concat(), trans=True))


def build_scale_preconditioner(shape, scale_x, scale_y) -> DiagPairing:
    """Block-diagonal pairing diag(scale_x I, scale_y I) for a block shape."""
    if scale_x <= 0 or scale_y <= 0:
        raise ValueError(f"scale values must be positive, got ({scale_x}, {scale_y})")
    nx, ny = shape
    return DiagPairing(np.concatenate([np.full(nx, float(scale_x)),
                                       np.full(ny, float(scale_y))]))


# ---------------------------------------------------------------------------
# State transforms (diffeomorphisms of the state space)


class StateTransform:
    """Diffeomorphism L with first and second derivative actions.

    d_forward(u, v) = DL(u) v; d2_forward(u, v, w) = (D^2 L(u) v) w;
    d2_forward_transpose(u, w, q) is the adjoint of v -> (D^2 L(u) v) w.
    Solve actions invert DL(u) and its transpose.
    """

    def forward(self, u: BlockVec) -> BlockVec:
        raise NotImplementedError

    def inverse(self, ut: BlockVec) -> BlockVec:
        raise NotImplementedError

    def d_forward(self, u, v) -> BlockVec:
        raise NotImplementedError

    def d_forward_transpose(self, u, w) -> BlockVec:
        raise NotImplementedError

    def d_forward_solve(self, u, v) -> BlockVec:
        raise NotImplementedError

    def d_forward_solve_transpose(self, u, w) -> BlockVec:
        raise NotImplementedError

    def d2_forward(self, u, v, w) -> BlockVec:
        raise NotImplementedError

    def d2_forward_transpose(self, u, w, q) -> BlockVec:
        raise NotImplementedError


class LinearStateTransform(StateTransform):
    """L(u) = A u for an invertible matrix A; the second derivative vanishes."""

    def __init__(self, A):
        self._op = DenseOp(np.asarray(A, dtype=float))

    def forward(self, u):
        return u.like(self._op.apply(u.concat()))

    def inverse(self, ut):
        return ut.like(self._op.solve(ut.concat()))

    def d_forward(self, u, v):
        return v.like(self._op.apply(v.concat()))

    def d_forward_transpose(self, u, w):
        return w.like(self._op.apply_t(w.concat()))

    def d_forward_solve(self, u, v):
        return v.like(self._op.solve(v.concat()))

    def d_forward_solve_transpose(self, u, w):
        return w.like(self._op.solve(w.concat(), trans=True))

    def d2_forward(self, u, v, w):
        return v.zeros_like()

    def d2_forward_transpose(self, u, w, q):
        return q.zeros_like()


class CallableStateTransform(StateTransform):
    """Componentwise transform ut_i = g(u_i) with analytic derivatives.

    g, ginv, dg, d2g are vectorized scalar functions; DL(u) is diagonal,
    so transposes coincide and solves divide by dg(u).
    """

    def __init__(self, g, ginv, dg, d2g):
        self._g = g
        self._ginv = ginv
        self._dg = dg
        self._d2g = d2g

    def forward(self, u):
        return u.like(self._g(u.concat()))

    def inverse(self, ut):
        return ut.like(self._ginv(ut.concat()))

    def d_forward(self, u, v):
        return v.like(self._dg(u.concat()) * v.concat())

    d_forward_transpose = d_forward

    def d_forward_solve(self, u, v):
        dg = self._dg(u.concat())
        if np.min(np.abs(dg)) == 0.0:
            raise SingularOperatorError("transform", f"DL singular at u={u.concat()}")
        return v.like(v.concat() / dg)

    d_forward_solve_transpose = d_forward_solve

    def d2_forward(self, u, v, w):
        return v.like(self._d2g(u.concat()) * v.concat() * w.concat())

    def d2_forward_transpose(self, u, w, q):
        # diagonal second derivative: symmetric in all three slots
        return q.like(self._d2g(u.concat()) * w.concat() * q.concat())


def transform_state_dynamics(L: StateTransform, field: PartitionedField) -> PartitionedField:
    """Dynamics of the transformed state ut = L(u): dut/dt = DL(u) f(t, u).

    The returned field is fully implicit in its second slot; its jvp/vjp
    differentiate through both the chain-rule factor and the inverse map.
    """
    def value(t, ut):
        u = L.inverse(ut)
        return L.d_forward(u, field.f(t, u))

    def jvp(t, ut, v):
        u = L.inverse(ut)
        s = L.d_forward_solve(u, v)
        f = field.f(t, u)
        return L.d2_forward(u, s, f) + L.d_forward(u, field.jvp(t, u, s))

    def vjp(t, ut, w):
        u = L.inverse(ut)
        f = field.f(t, u)
        inner = L.d2_forward_transpose(u, f, w) + field.vjp(t, u, L.d_forward_transpose(u, w))
        return L.d_forward_solve_transpose(u, inner)

    return ImplicitField(field.shape, value, jvp, vjp)


def state_transform_adjoint_rhs(L: StateTransform, field: PartitionedField,
                                t, ut: BlockVec, pt: BlockVec) -> BlockVec:
    """Adjoint rhs for the transformed dynamics, acting on the lifted costate.

    Returns -(DL^{-1})^T [Df]^T (DL)^T pt - (DL^{-1})^T ((D^2 L) f)^T pt
    evaluated at u = L^{-1}(ut).
    """
    u = L.inverse(ut)
    f = field.f(t, u)
    inner = field.vjp(t, u, L.d_forward_transpose(u, pt)) + L.d2_forward_transpose(u, f, pt)
    return -L.d_forward_solve_transpose(u, inner)


# ---------------------------------------------------------------------------
# Mass-matrix systems


class MassWrappedField(PartitionedField):
    """The field M^{-1} F with the same explicit/implicit slot split as F."""

    def __init__(self, M: PairingMap, field: PartitionedField):
        self.M = M
        self.inner = field
        self.shape = field.shape

    def value(self, t1, u1, t2, u2):
        return self.M.solve(self.inner.value(t1, u1, t2, u2))

    def jvp_slot1(self, t1, u1, t2, u2, du):
        return self.M.solve(self.inner.jvp_slot1(t1, u1, t2, u2, du))

    def jvp_slot2(self, t1, u1, t2, u2, du):
        return self.M.solve(self.inner.jvp_slot2(t1, u1, t2, u2, du))

    def vjp_slot1(self, t1, u1, t2, u2, w):
        return self.inner.vjp_slot1(t1, u1, t2, u2, self.M.solve_transpose(w))

    def vjp_slot2(self, t1, u1, t2, u2, w):
        return self.inner.vjp_slot2(t1, u1, t2, u2, self.M.solve_transpose(w))

    def slot2_jacobian(self, t1, u1, t2, u2):
        J = self.inner.slot2_jacobian(t1, u1, t2, u2)
        if isinstance(self.M, IdentityPairing):
            return J
        if isinstance(self.M, DiagPairing):
            nx = J.nx
            dinv = 1.0 / self.M.d
            return BlockOp(J.xx.row_scale(dinv[:nx]), J.xy.row_scale(dinv[:nx]),
                           J.yx.row_scale(dinv[nx:]), J.yy.row_scale(dinv[nx:]))
        # general M: dense fallback (diagnostics scale only)
        nx, ny = self.shape
        n = nx + ny
        A = np.zeros((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            A[:, j] = self.jvp_slot2(t1, u1, t2, u2, BlockVec.from_concat(e, nx, ny)).concat()
        from .blockla import ZeroOp
        return BlockOp(DenseOp(A[:nx, :nx]),
                       DenseOp(A[:nx, nx:]) if ny else ZeroOp(nx, 0),
                       DenseOp(A[nx:, :nx]) if ny else ZeroOp(0, nx),
                       DenseOp(A[nx:, nx:]) if ny else ZeroOp(0))


class MassMatrixSystem:
    """Evaluators for mass-matrix dynamics M du/dt = F, M^T dp/dt = -[DF]^T p.

    F is only ever hit by M^{-1} inside the solves; `field` exposes the
    equivalent explicit-in-M^{-1} field for the time integrator.
    """

    def __init__(self, M: PairingMap, bigF: PartitionedField):
        self.M = M
        self.bigF = bigF
        self.field = MassWrappedField(M, bigF)

    def state_rhs(self, t, u: BlockVec) -> BlockVec:
        return self.M.solve(self.bigF.f(t, u))

    def adjoint_rhs(self, t, u: BlockVec, p: BlockVec) -> BlockVec:
        return self.M.solve_transpose(-self.bigF.vjp(t, u, p))


def mass_matrix_adjoint_system(M: PairingMap, bigF: PartitionedField) -> MassMatrixSystem:
    return MassMatrixSystem(M, bigF)


# ---------------------------------------------------------------------------
# Constant-pairing preconditioning


def pairing_precondition_adjoint_rhs(P: PairingMap, field: PartitionedField,
                                     t, u: BlockVec, xi: BlockVec) -> BlockVec:
    """Rhs -P^{-T} [Df(t,u)]^T P^T xi of the pairing-preconditioned adjoint."""
    return -P.solve_transpose(field.vjp(t, u, P.apply_transpose(xi)))


# ---------------------------------------------------------------------------
# Fiberwise pairings


class FiberPairing:
    """State-dependent pairing u -> P(u) with derivative actions.

    dp_action(u, v, w) = [DP(u)v] w; dp_action_transpose(u, v, q) is the
    adjoint of w -> [DP(u)v] w.
    """

    def p_at(self, u: BlockVec) -> PairingMap:
        raise NotImplementedError

    def dp_action(self, u, v, w) -> BlockVec:
        raise NotImplementedError

    def dp_action_transpose(self, u, v, q) -> BlockVec:
        raise NotImplementedError

    def dp_tensor(self, u):
        """Dense D_g P[b, a] table dP[b, a, g]; diagnostics only."""
        raise NotImplementedError


class DiagonalFiberPairing(FiberPairing):
    """P(u) = diag(g(u)) with entrywise dependence: g(u)_i depends on u_i."""

    def __init__(self, g, dg):
        self._g = g
        self._dg = dg

    def p_at(self, u):
        return DiagPairing(self._g(u.concat()))

    def dp_action(self, u, v, w):
        return v.like(self._dg(u.concat()) * v.concat() * w.concat())

    # diagonal entrywise structure makes the w-adjoint the same contraction
    dp_action_transpose = dp_action

    def dp_tensor(self, u):
        uc = u.concat()
        n = uc.size
        dP = np.zeros((n, n, n))
        d = self._dg(uc)
        for i in range(n):
            dP[i, i, i] = d[i]
        return dP


class MatrixFiberPairing(FiberPairing):
    """Dense P(u) with analytic entrywise derivatives dP[b, a, g] = dP_{ba}/du_g."""

    def __init__(self, pfun, dpfun):
        self._pfun = pfun
        self._dpfun = dpfun

    def p_at(self, u):
        return MatrixPairing(self._pfun(u.concat()))

    def dp_action(self, u, v, w):
        dP = self._dpfun(u.concat())
        return v.like(np.einsum("bag,g,a->b", dP, v.concat(), w.concat()))

    def dp_action_transpose(self, u, v, q):
        dP = self._dpfun(u.concat())
        return q.like(np.einsum("bag,g,b->a", dP, v.concat(), q.concat()))

    def dp_tensor(self, u):
        return self._dpfun(u.concat())


class ConstantFiberPairing(FiberPairing):
    """Wraps a constant PairingMap as a (derivative-free) fiber pairing."""

    def __init__(self, P: PairingMap, dim: int):
        self._P = P
        self._dim = dim

    def p_at(self, u):
        return self._P

    def dp_action(self, u, v, w):
        return v.zeros_like()

    dp_action_transpose = dp_action

    def dp_tensor(self, u):
        n = self._dim
        return np.zeros((n, n, n))


def fiberwise_precondition_adjoint_rhs(Pu: FiberPairing, field: PartitionedField,
                                       t, u: BlockVec, xi: BlockVec) -> BlockVec:
    """Rhs -P(u)^{-T}[Df]^T P(u)^T xi - P(u)^{-T}[DP(u)f]^T xi."""
    P = Pu.p_at(u)
    f = field.f(t, u)
    conjugated = field.vjp(t, u, P.apply_transpose(xi))
    connection = Pu.dp_action_transpose(u, f, xi)
    return -P.solve_transpose(conjugated + connection)


_CHRISTOFFEL_DIM_LIMIT = 16


def christoffel(Pu: FiberPairing, u: BlockVec) -> np.ndarray:
    """Dense Christoffel table G[b, n, g] = (P^{-1})[a, n] dP[b, a, g].

    Materialized only at small dimension; larger systems should contract
    through dp_action_transpose instead.
    """
    n = u.dim
    if n > _CHRISTOFFEL_DIM_LIMIT:
        raise ValueError(
            f"christoffel table is O(n^3); dim {n} exceeds limit {_CHRISTOFFEL_DIM_LIMIT}")
    P = Pu.p_at(u)
    cols = np.eye(n)
    Pinv = np.column_stack([P.solve(u.like(cols[:, j])).concat() for j in range(n)])
    dP = Pu.dp_tensor(u)
    return np.einsum("an,bag->bng", Pinv, dP)


def covariant_adjoint_residual(Pu: FiberPairing, field: PartitionedField,
                               t, u: BlockVec, xi: BlockVec, dxidt: BlockVec) -> BlockVec:
    """Residual D(xi)/Dt + [Df]^{*P(u)} xi of the covariant adjoint equation.

    D(xi)/Dt contracts the connection with udot = f(t, u); the residual
    vanishes exactly when dxidt solves the fiberwise-preconditioned system.
    """
    P = Pu.p_at(u)
    f = field.f(t, u)
    connection = P.solve_transpose(Pu.dp_action_transpose(u, f, xi))
    star = P.solve_transpose(field.vjp(t, u, P.apply_transpose(xi)))
    return dxidt + connection + star
