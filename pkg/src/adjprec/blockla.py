"""Minimal dense/banded block linear algebra.

Block vectors partitioned into an x-block and a y-block, block operators
with four sub-blocks, and Schur-complement solves for the 2x2 block
systems arising in semi-implicit Newton steps and their transposes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "BlockVec",
    "LinOp",
    "ZeroOp",
    "DiagOp",
    "BandedOp",
    "DenseOp",
    "tridiag_op",
    "identity_op",
    "BlockOp",
    "SchurFactors",
    "SingularOperatorError",
    "schur_factor",
    "schur_solve",
    "schur_solve_transpose",
]

_ABS_FLOOR = 1e-300  # guards relative tolerances against zero vectors


class SingularOperatorError(np.linalg.LinAlgError):
    """A factorization failed; `block` names the offending block."""

    def __init__(self, block, detail=""):
        self.block = block
        super().__init__(f"singular factorization in block '{block}'" + (f": {detail}" if detail else ""))


class BlockVec:
    """A vector partitioned into an x-block and a y-block.

    Block lengths are fixed at construction; arithmetic acts blockwise.
    The y-block may be empty, which degenerates to an ordinary vector.
    """

    __slots__ = ("x", "y")

    def __init__(self, x, y=None):
        self.x = np.asarray(x, dtype=float).reshape(-1)
        self.y = np.asarray(y if y is not None else [], dtype=float).reshape(-1)

    @classmethod
    def single(cls, x):
        return cls(x, [])

    @classmethod
    def from_concat(cls, arr, nx, ny):
        arr = np.asarray(arr, dtype=float).reshape(-1)
        if arr.size != nx + ny:
            raise ValueError(f"expected length {nx + ny}, got {arr.size}")
        return cls(arr[:nx], arr[nx:])

    @property
    def nx(self):
        return self.x.size

    @property
    def ny(self):
        return self.y.size

    @property
    def dim(self):
        return self.x.size + self.y.size

    @property
    def shape(self):
        return (self.x.size, self.y.size)

    def copy(self):
        return BlockVec(self.x.copy(), self.y.copy())

    def concat(self):
        return np.concatenate([self.x, self.y])

    def like(self, arr):
        """Rebuild a BlockVec with this vector's block shape from a flat array."""
        return BlockVec.from_concat(arr, self.nx, self.ny)

    def zeros_like(self):
        return BlockVec(np.zeros(self.nx), np.zeros(self.ny))

    def _check(self, other):
        if self.shape != other.shape:
            raise ValueError(f"block shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other):
        self._check(other)
        return BlockVec(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        self._check(other)
        return BlockVec(self.x - other.x, self.y - other.y)

    def __mul__(self, a):
        return BlockVec(self.x * a, self.y * a)

    __rmul__ = __mul__

    def __neg__(self):
        return BlockVec(-self.x, -self.y)

    def dot(self, other):
        """Standard duality pairing with another block vector."""
        self._check(other)
        return float(self.x @ other.x + self.y @ other.y)

    def norm(self):
        return float(np.sqrt(self.x @ self.x + self.y @ self.y))

    def inf_norm(self):
        return float(max(np.max(np.abs(self.x), initial=0.0), np.max(np.abs(self.y), initial=0.0)))

    def __repr__(self):
        return f"BlockVec(nx={self.nx}, ny={self.ny})"


# ---------------------------------------------------------------------------
# Linear operator blocks


class LinOp:
    """Square linear operator on a single block; immutable after construction."""

    n = 0

    def apply(self, v):
        raise NotImplementedError

    def apply_t(self, v):
        raise NotImplementedError

    def to_dense(self):
        raise NotImplementedError

    def solve(self, b, trans=False):
        raise NotImplementedError

    def scaled(self, a):
        raise NotImplementedError

    def row_scale(self, d):
        """Left multiplication by diag(d), preserving storage where possible."""
        raise NotImplementedError


class ZeroOp(LinOp):
    def __init__(self, m, n=None):
        self.m = m
        self.n = n if n is not None else m

    def apply(self, v):
        return np.zeros(self.m)

    def apply_t(self, v):
        return np.zeros(self.n)

    def to_dense(self):
        return np.zeros((self.m, self.n))

    def scaled(self, a):
        return self

    def row_scale(self, d):
        return self


class DiagOp(LinOp):
    def __init__(self, d):
        self.d = np.asarray(d, dtype=float).reshape(-1)
        self.n = self.d.size

    def apply(self, v):
        return self.d * v

    apply_t = apply

    def to_dense(self):
        return np.diag(self.d)

    def solve(self, b, trans=False):
        if self.n and np.min(np.abs(self.d)) == 0.0:
            raise SingularOperatorError("diag", "zero diagonal entry")
        return b / self.d

    def scaled(self, a):
        return DiagOp(a * self.d)

    def row_scale(self, d):
        return DiagOp(np.asarray(d) * self.d)


class BandedOp(LinOp):
    """Banded operator in LAPACK diagonal-ordered storage.

    `ab[u + i - j, j] = A[i, j]` with `l` sub- and `u` super-diagonals.
    """

    def __init__(self, ab, l, u):
        self.ab = np.asarray(ab, dtype=float)
        self.l = l
        self.u = u
        self.n = self.ab.shape[1]
        if self.ab.shape[0] != l + u + 1:
            raise ValueError("banded storage shape inconsistent with (l, u)")

    def apply(self, v):
        out = np.zeros(self.n)
        for k in range(-self.l, self.u + 1):
            # diagonal at offset k: A[i, i+k] = ab[u - k, i + k]
            if k >= 0:
                out[: self.n - k] += self.ab[self.u - k, k:] * v[k:]
            else:
                out[-k:] += self.ab[self.u - k, : self.n + k] * v[: self.n + k]
        return out

    def apply_t(self, v):
        return self.transpose().apply(v)

    def transpose(self):
        ab_t = np.zeros((self.l + self.u + 1, self.n))
        for k in range(-self.l, self.u + 1):
            # A^T has the diagonal at offset -k equal to A's at offset k
            if k >= 0:
                ab_t[self.l + k, : self.n - k] = self.ab[self.u - k, k:]
            else:
                ab_t[self.l + k, -k:] = self.ab[self.u - k, : self.n + k]
        return BandedOp(ab_t, self.u, self.l)

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        for k in range(-self.l, self.u + 1):
            if k >= 0:
                A[np.arange(self.n - k), np.arange(k, self.n)] = self.ab[self.u - k, k:]
            else:
                A[np.arange(-k, self.n), np.arange(self.n + k)] = self.ab[self.u - k, : self.n + k]
        return A

    def solve(self, b, trans=False):
        op = self.transpose() if trans else self
        try:
            return sla.solve_banded((op.l, op.u), op.ab, b)
        except np.linalg.LinAlgError as e:
            raise SingularOperatorError("banded", str(e)) from e

    def scaled(self, a):
        return BandedOp(a * self.ab, self.l, self.u)

    def add_diag(self, d):
        ab = self.ab.copy()
        ab[self.u, :] += d
        return BandedOp(ab, self.l, self.u)

    def row_scale(self, d):
        d = np.asarray(d, dtype=float)
        ab = self.ab.copy()
        for k in range(-self.l, self.u + 1):
            # diagonal at offset k holds rows i = 0..n-1-|k| (shifted)
            if k >= 0:
                ab[self.u - k, k:] *= d[: self.n - k]
            else:
                ab[self.u - k, : self.n + k] *= d[-k:]
        return BandedOp(ab, self.l, self.u)


class DenseOp(LinOp):
    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        self.m = self.A.shape[0]
        self.n = self.A.shape[1]
        self._lu = None

    def apply(self, v):
        return self.A @ v

    def apply_t(self, v):
        return self.A.T @ v

    def to_dense(self):
        return self.A

    def _factor(self):
        if self._lu is None:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")  # zero-pivot warning; raised below
                    self._lu = sla.lu_factor(self.A)
            except np.linalg.LinAlgError as e:
                raise SingularOperatorError("dense", str(e)) from e
            if not np.all(np.isfinite(self._lu[0])) or np.min(np.abs(np.diag(self._lu[0]))) == 0.0:
                self._lu = None
                raise SingularOperatorError("dense", "zero pivot")
        return self._lu

    def solve(self, b, trans=False):
        return sla.lu_solve(self._factor(), b, trans=1 if trans else 0)

    def scaled(self, a):
        return DenseOp(a * self.A)

    def row_scale(self, d):
        return DenseOp(np.asarray(d)[:, None] * self.A)


def tridiag_op(lower, diag, upper):
    """Tridiagonal BandedOp from its sub-, main and super-diagonals."""
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return BandedOp(ab, 1, 1)


def identity_op(n):
    return DiagOp(np.ones(n))


def as_op(A):
    """Coerce an ndarray (or LinOp) to a LinOp; 1-d arrays become diagonal."""
    if isinstance(A, LinOp):
        return A
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        return DiagOp(A)
    return DenseOp(A)


def _identity_minus_scaled(op, a, n):
    """I - a*op for a single block, preserving structure where cheap."""
    if isinstance(op, ZeroOp):
        return identity_op(n)
    if isinstance(op, DiagOp):
        return DiagOp(1.0 - a * op.d)
    if isinstance(op, BandedOp):
        return op.scaled(-a).add_diag(1.0)
    return DenseOp(np.eye(n) - a * op.to_dense())


def _sub(a, b):
    """a - b for LinOps, preserving structure where cheap."""
    if isinstance(b, ZeroOp):
        return a
    if isinstance(a, ZeroOp):
        return b.scaled(-1.0)
    if isinstance(a, DiagOp) and isinstance(b, DiagOp):
        return DiagOp(a.d - b.d)
    if isinstance(a, BandedOp) and isinstance(b, DiagOp):
        return a.add_diag(-b.d)
    return DenseOp(a.to_dense() - b.to_dense())


class BlockOp:
    """A 2x2 block operator with apply and apply-transpose."""

    def __init__(self, xx, xy, yx, yy):
        self.xx = as_op(xx)
        self.xy = as_op(xy)
        self.yx = as_op(yx)
        self.yy = as_op(yy)
        self.nx, self.ny = self.xx.n, self.yy.n

    def apply(self, v: BlockVec) -> BlockVec:
        x = self.xx.apply(v.x)
        y = self.yy.apply(v.y) if self.ny else v.y
        if self.ny:
            x = x + self.xy.apply(v.y)
            y = y + self.yx.apply(v.x)
        return BlockVec(x, y)

    def apply_t(self, v: BlockVec) -> BlockVec:
        x = self.xx.apply_t(v.x)
        y = self.yy.apply_t(v.y) if self.ny else v.y
        if self.ny:
            x = x + self.yx.apply_t(v.y)
            y = y + self.xy.apply_t(v.x)
        return BlockVec(x, y)

    def to_dense(self):
        nx, ny = self.nx, self.ny
        A = np.zeros((nx + ny, nx + ny))
        A[:nx, :nx] = self.xx.to_dense()
        if ny:
            A[:nx, nx:] = self.xy.to_dense()
            A[nx:, :nx] = self.yx.to_dense()
            A[nx:, nx:] = self.yy.to_dense()
        return A

    @classmethod
    def identity(cls, nx, ny):
        return cls(identity_op(nx), ZeroOp(nx, ny), ZeroOp(ny, nx), identity_op(ny))

    @classmethod
    def identity_minus_scaled(cls, jac: "BlockOp", a: float) -> "BlockOp":
        """I - a*jac, block by block."""
        out = object.__new__(cls)
        out.xx = _identity_minus_scaled(jac.xx, a, jac.nx)
        out.xy = jac.xy.scaled(-a)
        out.yx = jac.yx.scaled(-a)
        out.yy = _identity_minus_scaled(jac.yy, a, jac.ny)
        out.nx, out.ny = jac.nx, jac.ny
        return out


# ---------------------------------------------------------------------------
# Schur-complement block solves


@dataclass
class SchurFactors:
    """Cached pieces for solving N z = rhs and N^T z = rhs.

    The same yy and Schur-complement factorizations serve both solves,
    since the Schur complement of N^T is the transpose of that of N.
    """

    yy: LinOp
    schur: LinOp
    xy: LinOp
    yx: LinOp
    ny: int

    def solve(self, rhs: BlockVec) -> BlockVec:
        if self.ny == 0:
            return BlockVec(self._schur_solve(rhs.x, False), rhs.y)
        w = self._yy_solve(rhs.y, False)
        t = rhs.x - self.xy.apply(w)
        zx = self._schur_solve(t, False)
        zy = self._yy_solve(rhs.y - self.yx.apply(zx), False)
        return BlockVec(zx, zy)

    def solve_transpose(self, rhs: BlockVec) -> BlockVec:
        if self.ny == 0:
            return BlockVec(self._schur_solve(rhs.x, True), rhs.y)
        w = self._yy_solve(rhs.y, True)
        t = rhs.x - self.yx.apply_t(w)
        zx = self._schur_solve(t, True)
        zy = self._yy_solve(rhs.y - self.xy.apply_t(zx), True)
        return BlockVec(zx, zy)

    def _yy_solve(self, b, trans):
        try:
            return self.yy.solve(b, trans=trans)
        except SingularOperatorError as e:
            raise SingularOperatorError("yy", str(e)) from e

    def _schur_solve(self, b, trans):
        try:
            return self.schur.solve(b, trans=trans)
        except SingularOperatorError as e:
            raise SingularOperatorError("schur", str(e)) from e


def schur_factor(N: BlockOp) -> SchurFactors:
    """Form the Schur complement N_xx - N_xy N_yy^{-1} N_yx and keep the pieces."""
    if N.ny == 0:
        return SchurFactors(yy=N.yy, schur=N.xx, xy=N.xy, yx=N.yx, ny=0)
    off_zero = isinstance(N.xy, ZeroOp) and isinstance(N.yx, ZeroOp)
    off_diag = isinstance(N.xy, DiagOp) and isinstance(N.yx, DiagOp)
    if isinstance(N.yy, DiagOp) and (off_zero or off_diag):
        # structure-preserving path for the 1d model: correction is diagonal
        if np.min(np.abs(N.yy.d)) == 0.0:
            raise SingularOperatorError("yy", "zero diagonal entry")
        if off_zero:
            schur = N.xx
        else:
            corr = DiagOp(N.xy.d * N.yx.d / N.yy.d)
            schur = _sub(N.xx, corr)
    else:
        yy_dense = DenseOp(N.yy.to_dense())
        try:
            yinv_yx = yy_dense.solve(N.yx.to_dense())
        except SingularOperatorError as e:
            raise SingularOperatorError("yy", str(e)) from e
        schur = DenseOp(N.xx.to_dense() - N.xy.to_dense() @ yinv_yx)
        return SchurFactors(yy=yy_dense, schur=schur, xy=N.xy, yx=N.yx, ny=N.ny)
    return SchurFactors(yy=N.yy, schur=schur, xy=N.xy, yx=N.yx, ny=N.ny)


def schur_solve(N: BlockOp, rhs: BlockVec) -> BlockVec:
    """Solve N z = rhs via the Schur-complement block factorization."""
    return schur_factor(N).solve(rhs)


def schur_solve_transpose(N: BlockOp, rhs: BlockVec) -> BlockVec:
    """Solve N^T z = rhs, reusing the same factorization pieces as schur_solve."""
    return schur_factor(N).solve_transpose(rhs)
