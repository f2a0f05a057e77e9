"""1D radiation diffusion in CGS-eV units, with the Marshak-wave setup.

State (E, T): radiation energy density (erg/cm^3) and material
temperature (eV) on a uniform cell-centered grid over [0, l]:

    M dE/dt       = K(T) E - Sigma_a(T) E + Em(T, T),
    M_rhocv dT/dt = Sigma_a(T) E - Em(T, T),

with sigma_a(T) = sigma_coef / T^3 (1/cm), D(T) = (c/3)/sigma_a(T)
(cm^2/s), and Em(T1, T2) the weak form of a*c*sigma_a(T1)*T2^4. The
opacity argument T1 is treated explicitly by the semi-implicit scheme;
E and the T^4 emission factor are implicit. All operators are weak
forms (scaled by the cell size); the lumped mass matrices are diagonal.

The Marshak drive pins cell 0 at T_drive by zeroing its equation rows;
the E boundary condition there is configurable (equilibrium Dirichlet
or zero-flux).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .adjoint_core import PartitionedField
from .blockla import BandedOp, BlockOp, BlockVec, DiagOp, tridiag_op
from .precond import DiagPairing, MassWrappedField, mass_matrix_adjoint_system

__all__ = [
    "RadDiffConfig",
    "AssembledOps",
    "assemble",
    "RadDiffWeakField",
    "raddiff_weak_field",
    "raddiff_field",
    "mass_pairing",
    "MarshakProblem",
    "marshak_problem",
    "terminal_cost",
]

log = logging.getLogger(__name__)


@dataclass
class RadDiffConfig:
    """Physical and discretization parameters (CGS units, temperature in eV)."""

    N: int = 100
    l: float = 0.25            # domain length, cm
    c: float = 2.99792e10      # speed of light, cm/s
    a: float = 137.2           # radiation constant, erg/cm^3/eV^4
    rho: float = 1.0           # density, g/cm^3
    c_v: float = 3e12          # specific heat, erg/cm^3/eV
    sigma_coef: float = 1e12   # opacity coefficient: sigma_a = sigma_coef/T^3, 1/cm
    T_drive: float = 1200.0    # boundary drive temperature, eV
    T_init: float = 0.025      # equilibrium initial temperature, eV
    T_floor: float = 1e-6      # guard inside sigma_a/D evaluation only, eV
    drive: bool = True
    e_bc: str = "dirichlet"    # E condition at the driven boundary: dirichlet | zero-flux

    def __post_init__(self):
        if self.N < 3:
            raise ValueError(f"N must be at least 3, got {self.N}")
        for name in ("l", "c", "a", "rho", "c_v", "sigma_coef",
                     "T_drive", "T_init", "T_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.e_bc not in ("dirichlet", "zero-flux"):
            raise ValueError(f"e_bc must be 'dirichlet' or 'zero-flux', got {self.e_bc!r}")

    @property
    def dx(self) -> float:
        return self.l / self.N

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.dx

    def sigma_a(self, T):
        """Absorption opacity sigma_coef/T^3 with the floor guard."""
        Tg = self._guarded(T)
        return self.sigma_coef / Tg ** 3

    def d_sigma_a(self, T):
        Tg = self._guarded(T)
        return np.where(np.asarray(T) > self.T_floor,
                        -3.0 * self.sigma_coef / Tg ** 4, 0.0)

    def diffusion(self, T):
        """D(T) = (c/3)/sigma_a(T)."""
        Tg = self._guarded(T)
        return (self.c / 3.0) * Tg ** 3 / self.sigma_coef

    def d_diffusion(self, T):
        Tg = self._guarded(T)
        return np.where(np.asarray(T) > self.T_floor,
                        self.c * Tg ** 2 / self.sigma_coef, 0.0)

    def _guarded(self, T):
        T = np.asarray(T, dtype=float)
        if np.any(T < self.T_floor):
            log.warning("temperature floor engaged: min(T) = %.3e eV", float(T.min()))
        return np.maximum(T, self.T_floor)


# ---------------------------------------------------------------------------
# Assembly


@dataclass
class AssembledOps:
    """Weak-form operators at a frozen opacity temperature."""

    M: DiagOp
    M_rhocv: DiagOp
    K: BandedOp
    Sigma_a: DiagOp
    sigma: np.ndarray
    config: RadDiffConfig = dc_field(repr=False, default=None)

    def em(self, T2):
        """Weak emission vector: dx * a*c*sigma_a(T1) * T2^4."""
        cfg = self.config
        return cfg.dx * cfg.a * cfg.c * self.sigma * np.asarray(T2) ** 4


def _harmonic_faces(D):
    """Harmonic-mean interface coefficients h(D_i, D_{i+1})."""
    a, b = D[:-1], D[1:]
    return 2.0 * a * b / (a + b)


def assemble(config: RadDiffConfig, T) -> AssembledOps:
    """Assemble the weak operators at opacity temperature T.

    Zero-flux faces at both domain ends; the drive enters through row
    masking in the field, not through the assembled operators.
    """
    T = np.asarray(T, dtype=float)
    if T.shape != (config.N,):
        raise ValueError(f"T has shape {T.shape}, expected ({config.N},)")
    dx = config.dx
    sigma = config.sigma_a(T)
    kappa = _harmonic_faces(config.diffusion(T))  # N-1 interior faces
    # weak diffusion: dx * (1/dx^2) * standard 3-point flux stencil
    w = kappa / dx
    lower = w
    upper = w
    diag = np.zeros(config.N)
    diag[:-1] -= w
    diag[1:] -= w
    K = tridiag_op(lower, diag, upper)
    return AssembledOps(
        M=DiagOp(np.full(config.N, dx)),
        M_rhocv=DiagOp(np.full(config.N, config.rho * config.c_v * dx)),
        K=K,
        Sigma_a=DiagOp(dx * sigma),
        sigma=sigma,
        config=config,
    )


# ---------------------------------------------------------------------------
# Partitioned field (weak form, masses not applied)


class RadDiffWeakField(PartitionedField):
    """Weak-form partitioned field F(t1, u1; t2, u2) for the coupled system.

    Slot-1 dependence: the opacity temperature T1 (through K, Sigma_a and
    the emission coefficient). Slot-2 dependence: E2 in all linear terms
    and the T2^4 emission factor. Equation rows of pinned boundary cells
    are zeroed so the drive values stay fixed under time stepping.
    """

    def __init__(self, config: RadDiffConfig):
        self.config = config
        N = config.N
        self.shape = (N, N)
        self.mask_E = np.ones(N)
        self.mask_T = np.ones(N)
        if config.drive:
            self.mask_T[0] = 0.0
            if config.e_bc == "dirichlet":
                self.mask_E[0] = 0.0

    # -- helpers ------------------------------------------------------------

    def _coeffs(self, T1):
        cfg = self.config
        sigma = cfg.sigma_a(T1)
        D = cfg.diffusion(T1)
        kappa = _harmonic_faces(D)
        return sigma, D, kappa

    def _flux_div_weak(self, kappa, E):
        """Weak diffusion term: face fluxes kappa*(dE)/dx differenced per cell."""
        dx = self.config.dx
        flux = kappa * np.diff(E) / dx
        out = np.zeros_like(E)
        out[:-1] += flux
        out[1:] -= flux
        return out

    # -- PartitionedField interface -----------------------------------------

    def value(self, t1, u1, t2, u2):
        cfg = self.config
        T1, E2, T2 = u1.y, u2.x, u2.y
        sigma, _, kappa = self._coeffs(T1)
        em = cfg.dx * cfg.a * cfg.c * sigma * T2 ** 4
        absorb = cfg.dx * sigma * E2
        Fx = self._flux_div_weak(kappa, E2) - absorb + em
        Fy = absorb - em
        return BlockVec(self.mask_E * Fx, self.mask_T * Fy)

    def jvp_slot2(self, t1, u1, t2, u2, du):
        cfg = self.config
        T1, T2 = u1.y, u2.y
        sigma, _, kappa = self._coeffs(T1)
        dem = cfg.dx * cfg.a * cfg.c * sigma * 4.0 * T2 ** 3 * du.y
        dabsorb = cfg.dx * sigma * du.x
        Fx = self._flux_div_weak(kappa, du.x) - dabsorb + dem
        Fy = dabsorb - dem
        return BlockVec(self.mask_E * Fx, self.mask_T * Fy)

    def vjp_slot2(self, t1, u1, t2, u2, w):
        cfg = self.config
        T1, T2 = u1.y, u2.y
        sigma, _, kappa = self._coeffs(T1)
        wE = self.mask_E * w.x
        wT = self.mask_T * w.y
        # diffusion stencil is symmetric; absorption/emission are diagonal
        gE = self._flux_div_weak(kappa, wE) - cfg.dx * sigma * wE + cfg.dx * sigma * wT
        demdT = cfg.dx * cfg.a * cfg.c * sigma * 4.0 * T2 ** 3
        gT = demdT * (wE - wT)
        return BlockVec(gE, gT)

    def jvp_slot1(self, t1, u1, t2, u2, du):
        cfg = self.config
        T1, E2, T2 = u1.y, u2.x, u2.y
        vT = du.y
        sigma, D, kappa = self._coeffs(T1)
        dsig = cfg.d_sigma_a(T1) * vT
        dD = cfg.d_diffusion(T1) * vT
        a_, b_ = D[:-1], D[1:]
        denom = (a_ + b_) ** 2
        dkappa = 2.0 * b_ ** 2 / denom * dD[:-1] + 2.0 * a_ ** 2 / denom * dD[1:]
        dem = cfg.dx * cfg.a * cfg.c * dsig * T2 ** 4
        dabsorb = cfg.dx * dsig * E2
        Fx = self._flux_div_weak(dkappa, E2) - dabsorb + dem
        Fy = dabsorb - dem
        return BlockVec(self.mask_E * Fx, self.mask_T * Fy)

    def vjp_slot1(self, t1, u1, t2, u2, w):
        cfg = self.config
        T1, E2, T2 = u1.y, u2.x, u2.y
        sigma, D, kappa = self._coeffs(T1)
        dsig = cfg.d_sigma_a(T1)
        dD = cfg.d_diffusion(T1)
        wE = self.mask_E * w.x
        wT = self.mask_T * w.y
        # diffusion path: c_m = (s_m/dx)(wE_m - wE_{m+1}) pairs with dkappa_m
        s = np.diff(E2) / cfg.dx
        cm = s * (wE[:-1] - wE[1:])
        a_, b_ = D[:-1], D[1:]
        denom = (a_ + b_) ** 2
        gT = np.zeros(cfg.N)
        gT[:-1] += cm * 2.0 * b_ ** 2 / denom * dD[:-1]
        gT[1:] += cm * 2.0 * a_ ** 2 / denom * dD[1:]
        # absorption and emission coefficient paths
        em_fac = cfg.dx * cfg.a * cfg.c * dsig * T2 ** 4
        gT += (cfg.dx * dsig * E2 - em_fac) * (wT - wE)
        return BlockVec(np.zeros(cfg.N), gT)

    def slot2_jacobian(self, t1, u1, t2, u2):
        cfg = self.config
        T1, T2 = u1.y, u2.y
        sigma, _, kappa = self._coeffs(T1)
        w = kappa / cfg.dx
        diag = -cfg.dx * sigma
        diag[:-1] -= w
        diag[1:] -= w
        xx = tridiag_op(w, diag, w).row_scale(self.mask_E)
        demdT = cfg.dx * cfg.a * cfg.c * sigma * 4.0 * T2 ** 3
        xy = DiagOp(self.mask_E * demdT)
        yx = DiagOp(self.mask_T * cfg.dx * sigma)
        yy = DiagOp(-self.mask_T * demdT)
        return BlockOp(xx, xy, yx, yy)


def raddiff_weak_field(config: RadDiffConfig) -> RadDiffWeakField:
    return RadDiffWeakField(config)


def mass_pairing(config: RadDiffConfig) -> DiagPairing:
    """Block-diagonal lumped masses diag(M, M_rhocv) as a single pairing."""
    dx = config.dx
    return DiagPairing(np.concatenate([
        np.full(config.N, dx),
        np.full(config.N, config.rho * config.c_v * dx),
    ]))


def raddiff_field(config: RadDiffConfig) -> MassWrappedField:
    """The integrable field: lumped masses folded in via the mass-matrix form."""
    return mass_matrix_adjoint_system(mass_pairing(config), RadDiffWeakField(config)).field


# ---------------------------------------------------------------------------
# Marshak problem setup


@dataclass
class MarshakProblem:
    config: RadDiffConfig
    initial_state: BlockVec
    field: MassWrappedField
    weak_field: RadDiffWeakField
    mass: DiagPairing
    free_mask: np.ndarray  # per-cell: 1 where the cell is an optimization variable

    def apply_drive(self, state: BlockVec) -> BlockVec:
        """Overwrite pinned boundary values on a candidate state."""
        cfg = self.config
        out = state.copy()
        if cfg.drive:
            out.y[0] = cfg.T_drive
            if cfg.e_bc == "dirichlet":
                out.x[0] = cfg.a * cfg.c * cfg.T_drive ** 4
        return out


def marshak_problem(config: RadDiffConfig) -> MarshakProblem:
    """Uniform blackbody-equilibrium initial state with the surface drive."""
    N = config.N
    T0 = np.full(N, config.T_init)
    E0 = config.a * config.c * T0 ** 4
    weak = RadDiffWeakField(config)
    mass = mass_pairing(config)
    free = np.ones(N)
    if config.drive:
        free[0] = 0.0
    prob = MarshakProblem(
        config=config,
        initial_state=BlockVec(E0, T0),
        field=mass_matrix_adjoint_system(mass, weak).field,
        weak_field=weak,
        mass=mass,
        free_mask=free,
    )
    prob.initial_state = prob.apply_drive(prob.initial_state)
    return prob


# ---------------------------------------------------------------------------
# Terminal cost


def terminal_cost(state: BlockVec, E_star, T_star, config: RadDiffConfig):
    """Discrete L2 terminal cost and its derivative.

    C_E = 0.5 (E-E*)^T M (E-E*), C_T likewise with the unit-coefficient
    mass; pinned boundary cells are excluded from both the value and the
    derivative support. The derivative is returned in coefficient (dual)
    convention, ready to be used as the adjoint terminal condition.
    """
    E_star = np.asarray(E_star, dtype=float)
    T_star = np.asarray(T_star, dtype=float)
    if E_star.shape != (config.N,) or T_star.shape != (config.N,):
        raise ValueError("target shapes do not match the grid")
    w = np.full(config.N, config.dx)
    if config.drive:
        w = w.copy()
        w[0] = 0.0
    dE = state.x - E_star
    dT = state.y - T_star
    C_E = 0.5 * np.sum(w * dE ** 2)
    C_T = 0.5 * np.sum(w * dT ** 2)
    deriv = BlockVec(w * dE, w * dT)
    return C_E, C_T, deriv
