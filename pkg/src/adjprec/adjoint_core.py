"""Coupled evolution-equation abstraction and the canonical adjoint system.

A vector field f(t, u) on a partitioned state space is represented through
a two-slot partitioned form F(t1, u1; t2, u2) agreeing with f on the
diagonal; slot 1 is treated explicitly and slot 2 implicitly by the time
integrator. Models supply directional derivatives (jvp) and their adjoint
actions (vjp) analytically; finite differences are used only to validate
them in tests.
"""

from __future__ import annotations

import numpy as np

from .blockla import BlockOp, BlockVec, DenseOp, ZeroOp

__all__ = [
    "PartitionedField",
    "LinearPartitionedField",
    "ImplicitField",
    "canonical_adjoint_rhs",
    "variational_rhs",
    "pairing_drift",
    "fd_directional",
]


class PartitionedField:
    """Two-slot vector field F(t1, u1; t2, u2) with derivative actions.

    Subclasses implement `value`, per-slot jvp/vjp actions, and an
    assembled Jacobian of the implicit slot for Newton/adjoint solves.
    """

    shape = (0, 0)

    def value(self, t1, u1, t2, u2) -> BlockVec:
        raise NotImplementedError

    def jvp_slot1(self, t1, u1, t2, u2, du) -> BlockVec:
        raise NotImplementedError

    def jvp_slot2(self, t1, u1, t2, u2, du) -> BlockVec:
        raise NotImplementedError

    def vjp_slot1(self, t1, u1, t2, u2, w) -> BlockVec:
        raise NotImplementedError

    def vjp_slot2(self, t1, u1, t2, u2, w) -> BlockVec:
        raise NotImplementedError

    def slot2_jacobian(self, t1, u1, t2, u2) -> BlockOp:
        """Assembled D_{u2} F, used by the implicit step and its transpose."""
        raise NotImplementedError

    # diagonal conveniences -------------------------------------------------

    def f(self, t, u) -> BlockVec:
        return self.value(t, u, t, u)

    def jvp(self, t, u, du) -> BlockVec:
        return self.jvp_slot1(t, u, t, u, du) + self.jvp_slot2(t, u, t, u, du)

    def vjp(self, t, u, w) -> BlockVec:
        return self.vjp_slot1(t, u, t, u, w) + self.vjp_slot2(t, u, t, u, w)


class LinearPartitionedField(PartitionedField):
    """F(t1,u1;t2,u2) = A1 u1 + A2 u2 for constant block operators A1, A2."""

    def __init__(self, A1: BlockOp, A2: BlockOp):
        self.A1 = A1
        self.A2 = A2
        self.shape = (A1.nx, A1.ny)

    def value(self, t1, u1, t2, u2):
        return self.A1.apply(u1) + self.A2.apply(u2)

    def jvp_slot1(self, t1, u1, t2, u2, du):
        return self.A1.apply(du)

    def jvp_slot2(self, t1, u1, t2, u2, du):
        return self.A2.apply(du)

    def vjp_slot1(self, t1, u1, t2, u2, w):
        return self.A1.apply_t(w)

    def vjp_slot2(self, t1, u1, t2, u2, w):
        return self.A2.apply_t(w)

    def slot2_jacobian(self, t1, u1, t2, u2):
        return self.A2


class ImplicitField(PartitionedField):
    """A field with all state dependence in the implicit slot.

    Built from callables f(t, u), jvp(t, u, v), vjp(t, u, w) and an
    optional assembled-Jacobian callable; without one, the Jacobian is
    densified column by column (small diagnostic systems only).
    """

    def __init__(self, shape, f, jvp, vjp, jac=None):
        self.shape = shape
        self._f = f
        self._jvp = jvp
        self._vjp = vjp
        self._jac = jac

    def value(self, t1, u1, t2, u2):
        return self._f(t2, u2)

    def jvp_slot1(self, t1, u1, t2, u2, du):
        return du.zeros_like()

    def jvp_slot2(self, t1, u1, t2, u2, du):
        return self._jvp(t2, u2, du)

    def vjp_slot1(self, t1, u1, t2, u2, w):
        return w.zeros_like()

    def vjp_slot2(self, t1, u1, t2, u2, w):
        return self._vjp(t2, u2, w)

    def slot2_jacobian(self, t1, u1, t2, u2):
        if self._jac is not None:
            return self._jac(t2, u2)
        nx, ny = self.shape
        n = nx + ny
        A = np.zeros((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            A[:, j] = self._jvp(t2, u2, BlockVec.from_concat(e, nx, ny)).concat()
        return BlockOp(DenseOp(A[:nx, :nx]),
                       DenseOp(A[:nx, nx:]) if ny else ZeroOp(nx, 0),
                       DenseOp(A[nx:, :nx]) if ny else ZeroOp(0, nx),
                       DenseOp(A[nx:, nx:]) if ny else ZeroOp(0))


def canonical_adjoint_rhs(field: PartitionedField, t, u: BlockVec, p: BlockVec) -> BlockVec:
    """Right-hand side -[Df(t,u)]^T p of the canonical adjoint equation."""
    if u.shape != p.shape:
        raise ValueError(f"state/costate shape mismatch: {u.shape} vs {p.shape}")
    return -field.vjp(t, u, p)


def variational_rhs(field: PartitionedField, t, u: BlockVec, du: BlockVec) -> BlockVec:
    """Right-hand side Df(t,u) du of the variational equation."""
    if u.shape != du.shape:
        raise ValueError(f"state/variation shape mismatch: {u.shape} vs {du.shape}")
    return field.jvp(t, u, du)


def pairing_drift(p_series, du_series, pairing=None):
    """Drift of the adjoint-variational pairing along paired trajectories.

    Returns <p(t_n), du(t_n)> minus its initial value, using the standard
    pairing or the one induced by `pairing` (an object with `pairing(p, u)`).
    """
    if len(p_series) != len(du_series):
        raise ValueError(f"series length mismatch: {len(p_series)} vs {len(du_series)}")
    if pairing is None:
        vals = np.array([p.dot(du) for p, du in zip(p_series, du_series)])
    else:
        vals = np.array([pairing.pairing(p, du) for p, du in zip(p_series, du_series)])
    return vals - vals[0] if len(vals) else vals


def fd_directional(fun, u: BlockVec, v: BlockVec, eps=None):
    """Central finite difference of a BlockVec-valued map along direction v."""
    if eps is None:
        eps = 1e-6 * (1.0 + u.inf_norm())
    fp = fun(u + eps * v)
    fm = fun(u + (-eps) * v)
    return (fp - fm) * (0.5 / eps)
