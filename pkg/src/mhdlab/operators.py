"""Oseen blocks, the coupled generator, pressure recovery, and commutators.

The generator acts on stacked solenoidal states (phi, xi).  Its ambient form
is the sparse block matrix

    [ nu*Lap - Lplus(y_e)      +Lplus(B_e)      ]
    [ +Lminus(B_e)             eta*Lap - Lminus(y_e) ]   + sigma*I

and the operator actually analyzed is its restriction to the solenoidal
basis, which realizes the Helmholtz-projected dynamics exactly (projecting
either one or both rows coincides on that subspace; the off-subspace
remainder of the xi row is exposed as a reported leakage diagnostic).

sigma is an explicit artificial spectral shift used to manufacture unstable
spectra on demand; it commutes with everything downstream.

The diffusion blocks default to a fourth-order stencil on fully periodic
grids so that computed eigenvalues carry more accuracy than the generic
second-order field operators; all other blocks are second order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import SolenoidalBasis
from .equilibria import Equilibrium
from .errors import AssemblyError, CommutatorSupportError, ConfigurationError, ShapeError
from .fields import (
    ScalarField,
    StateVector,
    VectorField2,
    divergence_matrix,
    dx_matrix,
    dy_matrix,
    gradient_matrix,
    laplacian_matrix,
    wide_laplacian_matrix,
)
from .geometry import CutoffField
from .grid import Grid
from .projection import _solver

_DENSE_STATE_LIMIT = 4400  # reduced state dimension cap for materialization


@dataclass
class LinearOperator:
    """Sparse operator with shape descriptors and a symbol tag."""

    matrix: sp.spmatrix
    dom: str
    codom: str
    label: str

    def apply(self, flat: np.ndarray) -> np.ndarray:
        return self.matrix @ flat

    def apply_field(self, v: VectorField2) -> VectorField2:
        return VectorField2.from_flat(v.grid, self.matrix @ v.ravel())


def _block_advection(e: VectorField2, grid: Grid) -> sp.csr_matrix:
    """(e . grad) acting on stacked [v1; v2]."""
    adv = sp.diags(e.u1.ravel()) @ dx_matrix(grid) + sp.diags(e.u2.ravel()) @ dy_matrix(grid)
    return sp.block_diag([adv, adv], format="csr")


def _gradient_coupling(e: VectorField2, grid: Grid) -> sp.csr_matrix:
    """(v . grad) e as a multiplication operator on stacked [v1; v2]."""
    Dx, Dy = dx_matrix(grid), dy_matrix(grid)
    d = lambda arr, m: (m @ arr.ravel())
    return sp.bmat(
        [
            [sp.diags(d(e.u1, Dx)), sp.diags(d(e.u1, Dy))],
            [sp.diags(d(e.u2, Dx)), sp.diags(d(e.u2, Dy))],
        ],
        format="csr",
    )


def oseen_plus(e: VectorField2, label: str = "L1") -> LinearOperator:
    """First-order Oseen operator v -> (e.grad)v + (v.grad)e."""
    g = e.grid
    mat = _block_advection(e, g) + _gradient_coupling(e, g)
    return LinearOperator(mat, "vector2", "vector2", label)


def oseen_minus(e: VectorField2, label: str = "M1") -> LinearOperator:
    """Sign-flipped Oseen operator v -> (e.grad)v - (v.grad)e."""
    g = e.grid
    mat = _block_advection(e, g) - _gradient_coupling(e, g)
    return LinearOperator(mat, "vector2", "vector2", label)


def export_coo(op: LinearOperator | sp.spmatrix, path) -> None:
    """Write (row, col, real, imag) rows for external inspection."""
    mat = op.matrix if isinstance(op, LinearOperator) else op
    coo = sp.coo_matrix(mat)
    with open(path, "w") as fh:
        fh.write("# row col real imag\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v.real:.12e} {complex(v).imag:.12e}\n")


# ---------------------------------------------------------------------------
# Coupled system
# ---------------------------------------------------------------------------

@dataclass
class MhdSystem:
    """Discrete linearized MHD system around one equilibrium."""

    eq: Equilibrium
    sigma: float = 0.0
    diffusion_order: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid
        if self.diffusion_order is None:
            self.diffusion_order = 4 if g.fully_periodic else 2
        if self.diffusion_order == 4 and not g.fully_periodic:
            raise ConfigurationError("order-4 diffusion needs a fully periodic grid")

    @property
    def grid(self) -> Grid:
        return self.eq.grid

    @property
    def nu(self) -> float:
        return self.eq.nu

    @property
    def eta(self) -> float:
        return self.eq.eta

    @property
    def basis(self) -> SolenoidalBasis:
        return SolenoidalBasis.for_grid(self.grid)

    @property
    def state_dim(self) -> int:
        return self.basis.state_dim()

    # -- ambient blocks ----------------------------------------------------
    def blocks(self) -> dict[str, sp.csr_matrix]:
        if "blocks" not in self._cache:
            g = self.grid
            lap = laplacian_matrix(g, self.diffusion_order)
            vlap = sp.block_diag([lap, lap], format="csr")
            self._cache["blocks"] = {
                "vlap": vlap,
                "L1": oseen_plus(self.eq.y_e, "L1").matrix,
                "L2": oseen_plus(self.eq.B_e, "L2").matrix,
                "M1": oseen_minus(self.eq.y_e, "M1").matrix,
                "M2": oseen_minus(self.eq.B_e, "M2").matrix,
            }
        return self._cache["blocks"]

    def ambient_matrix(self) -> sp.csr_matrix:
        """Unprojected block generator on stacked [phi; xi] (no shift)."""
        if "ambient" not in self._cache:
            b = self.blocks()
            top = sp.hstack([self.nu * b["vlap"] - b["L1"], b["L2"]])
            bot = sp.hstack([b["M2"], self.eta * b["vlap"] - b["M1"]])
            mat = sp.vstack([top, bot], format="csr")
            if not np.all(np.isfinite(mat.data)):
                raise AssemblyError("generator assembly produced non-finite entries")
            self._cache["ambient"] = mat
        return self._cache["ambient"]

    # -- reduced operator ---------------------------------------------------
    def reduced_matvec(self, x: np.ndarray, adjoint: bool = False) -> np.ndarray:
        basis = self.basis
        m = basis.dim
        s = basis.coeffs_to_state(x)
        flat = s.ravel()
        amb = self.ambient_matrix()
        out = (amb.T if adjoint else amb) @ flat
        sout = StateVector.from_flat(self.grid, out)
        y = np.concatenate([basis.to_coeffs(sout.phi), basis.to_coeffs(sout.xi)])
        return y + self.sigma * np.asarray(x)

    def reduced_matrix(self) -> np.ndarray:
        if "reduced" not in self._cache:
            basis = self.basis
            if basis.state_dim() > _DENSE_STATE_LIMIT:
                raise ConfigurationError(
                    f"reduced state dimension {basis.state_dim()} exceeds the dense "
                    f"cap {_DENSE_STATE_LIMIT}; use the shift_invert strategy"
                )
            Z = basis.dense()
            dA = self.grid.cell_area
            amb = self.ambient_matrix()
            n2 = 2 * self.grid.ncells
            blocks = [[None, None], [None, None]]
            for i in range(2):
                for j in range(2):
                    sub = amb[i * n2:(i + 1) * n2, j * n2:(j + 1) * n2]
                    blocks[i][j] = dA * (Z.T @ (sub @ Z))
            red = np.block(blocks)
            red += self.sigma * np.eye(red.shape[0])
            self._cache["reduced"] = red
        return self._cache["reduced"]

    def diffusion_symbol_state(self) -> np.ndarray:
        """Exact diagonal of the decoupled diffusive part in the basis."""
        sym = self.basis.diffusion_symbol(self.diffusion_order)
        return np.concatenate([self.nu * sym, self.eta * sym])

    # -- pressure and residuals ----------------------------------------------
    def pressure_from_state(self, s: StateVector) -> ScalarField:
        """Solve div(grad p) = -div L1 phi + div L2 xi, zero-mean gauge."""
        g = self.grid
        b = self.blocks()
        D = divergence_matrix(g)
        adv1 = b["L1"] @ s.phi.ravel()
        adv2 = b["L2"] @ s.xi.ravel()
        rhs = -(D @ adv1) + D @ adv2
        solver = _solver(g)
        # reference scale keeps the tolerance meaningful when the divergence
        # of the advective terms is exactly zero (constant-coefficient cases)
        ref = (np.linalg.norm(adv1) + np.linalg.norm(adv2)) * 2.0 / min(g.hx, g.hy)
        p, res = solver.solve(rhs, ref)
        if res > solver.tol and np.linalg.norm(rhs) > 0:
            from .errors import NumericalError

            raise NumericalError(
                "pressure Poisson solve did not converge", detail={"residual": res}
            )
        return ScalarField(g, p.reshape(g.shape))

    def elliptic_eigenvalue(self, lam_generator: complex) -> complex:
        """Eigenvalue of the steady (elliptic) form matching a generator mode.

        The semigroup generator and the steady eigenvalue problem state the
        same balance with opposite sign: a generator pair (lam, Phi) solves
        the steady system with eigenvalue sigma - lam once the shift is
        removed.
        """
        return self.sigma - lam_generator

    def pde_residual(
        self, lam_generator: complex, s: StateVector, p: ScalarField | None = None
    ) -> dict:
        """Residual of the steady eigen-system rows for a computed pair."""
        g = self.grid
        b = self.blocks()
        if p is None:
            p = self.pressure_from_state(s)
        lam = self.elliptic_eigenvalue(lam_generator)
        phi_f, xi_f = s.phi.ravel(), s.xi.ravel()
        Gp = gradient_matrix(g) @ p.values.ravel()
        r_phi = (
            -self.nu * (b["vlap"] @ phi_f)
            + b["L1"] @ phi_f
            - b["L2"] @ xi_f
            + Gp
            - lam * phi_f
        )
        r_xi = (
            -self.eta * (b["vlap"] @ xi_f)
            + b["M1"] @ xi_f
            - b["M2"] @ phi_f
            - lam * xi_f
        )
        dA = np.sqrt(g.cell_area)
        norm = s.norm()
        res_phi = float(np.linalg.norm(r_phi) * dA)
        res_xi = float(np.linalg.norm(r_xi) * dA)
        return {
            "residual_phi": res_phi,
            "residual_xi": res_xi,
            "relative": (res_phi + res_xi) / norm if norm else 0.0,
            "elliptic_lambda": lam,
        }

    def xi_row_leakage(self, s: StateVector) -> float:
        """Norm of the non-solenoidal remainder of the xi row (diagnostic).

        The written equations apply the Helmholtz projection only where the
        pressure is eliminated; on the discrete solenoidal subspace projecting
        the xi row too changes nothing, and this reports the size of the
        off-subspace component that choice discards.
        """
        g = self.grid
        b = self.blocks()
        rhs = self.eta * (b["vlap"] @ s.xi.ravel()) - b["M1"] @ s.xi.ravel() + b["M2"] @ s.phi.ravel()
        v = VectorField2.from_flat(g, rhs)
        coeffs = self.basis.to_coeffs(v)
        recon = self.basis.to_field(coeffs)
        diff = v.ravel() - recon.ravel()
        return float(np.linalg.norm(diff) * np.sqrt(g.cell_area))


@dataclass
class GeneratorOperator:
    """Reduced generator (or its adjoint) exposed to the spectral module."""

    system: MhdSystem
    adjoint: bool = False
    label: str = "Atilde"

    @property
    def dim(self) -> int:
        return self.system.state_dim

    @property
    def sigma(self) -> float:
        return self.system.sigma

    @property
    def grid(self) -> Grid:
        return self.system.grid

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.system.reduced_matvec(x, adjoint=self.adjoint)

    def dense(self) -> np.ndarray:
        red = self.system.reduced_matrix()
        return red.T.conj() if self.adjoint else red

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.dense())

    @property
    def dom(self) -> str:
        return "projected stacked state (phi, xi)"

    codom = dom

    def to_state(self, x: np.ndarray) -> StateVector:
        return self.system.basis.coeffs_to_state(x)

    def from_state(self, s: StateVector) -> np.ndarray:
        return self.system.basis.state_to_coeffs(s)

    def shift_invert_preconditioner(self, si: float) -> np.ndarray:
        """Diagonal (in the basis) inverse of (diffusion + sigma - si)."""
        diag = self.system.diffusion_symbol_state() + self.sigma - si
        if np.any(np.abs(diag) < 1e-12):
            diag = np.where(np.abs(diag) < 1e-12, 1e-12, diag)
        return 1.0 / diag


def assemble_generator(
    eq: Equilibrium, shift: float = 0.0, diffusion_order: int | None = None
) -> GeneratorOperator:
    if shift < 0:
        raise ConfigurationError("the spectral shift sigma must be >= 0")
    return GeneratorOperator(MhdSystem(eq, float(shift), diffusion_order), False, "Atilde")


def assemble_adjoint(
    eq: Equilibrium, shift: float = 0.0, diffusion_order: int | None = None
) -> GeneratorOperator:
    if shift < 0:
        raise ConfigurationError("the spectral shift sigma must be >= 0")
    return GeneratorOperator(MhdSystem(eq, float(shift), diffusion_order), True, "Atilde_adj")


# ---------------------------------------------------------------------------
# Cutoff commutators
# ---------------------------------------------------------------------------

@dataclass
class CommutatorForcing:
    F_chi: VectorField2
    G_chi: VectorField2
    T_chi: ScalarField
    max_outside_omega_star: float
    scale: float


def _chi_commutator(op: sp.spmatrix, chi_flat: np.ndarray, f_flat: np.ndarray, order: str):
    """[chi, Op]f = chi*(Op f) - Op(chi*f) for order "chi_first", the reverse
    for order "op_first"; both appear in the forcing formulas."""
    if order == "chi_first":
        return chi_flat * (op @ f_flat) - op @ (chi_flat * f_flat)
    return op @ (chi_flat * f_flat) - chi_flat * (op @ f_flat)


def build_commutators(
    chi: CutoffField,
    s: StateVector,
    p: ScalarField,
    eq: Equilibrium,
    diffusion_order: int | None = None,
    support_tol: float = 1e-12,
    check_support: bool = True,
) -> CommutatorForcing:
    """Literal operator-ordering differences driving the cutoff system.

    F = nu*[chi,Lap]phi + [L1,chi]phi - [L2,chi]xi + [grad,chi]p
    G = eta*[chi,Lap]xi + [M1,chi]xi  - [M2,chi]phi
    T = [Lap_p,chi]p + [divL1,chi]phi - [divL2,chi]xi

    with [chi,A]f = chi(Af) - A(chi f) and [A,chi]f = A(chi f) - chi(Af);
    Lap_p is the composed pressure Laplacian.  All three vanish identically
    wherever chi is constant across the stencil, hence inside omega, Omega1,
    Omega0 and the guard layers; leakage beyond the transition band raises.
    """
    g = s.grid
    if not chi.grid.same_as(g) or not p.grid.same_as(g):
        raise ShapeError("cutoff, state and pressure must share one grid")
    if diffusion_order is None:
        diffusion_order = 4 if g.fully_periodic else 2
    nu, eta = eq.nu, eq.eta
    chi2 = np.concatenate([chi.values.ravel()] * 2)
    chi1 = chi.values.ravel()

    lap = laplacian_matrix(g, diffusion_order)
    vlap = sp.block_diag([lap, lap], format="csr")
    L1 = oseen_plus(eq.y_e, "L1").matrix
    L2 = oseen_plus(eq.B_e, "L2").matrix
    M1 = oseen_minus(eq.y_e, "M1").matrix
    M2 = oseen_minus(eq.B_e, "M2").matrix
    D = divergence_matrix(g)
    Grad = gradient_matrix(g)
    lap_p = wide_laplacian_matrix(g)
    divL1 = (D @ L1).tocsr()
    divL2 = (D @ L2).tocsr()

    phi_f, xi_f, p_f = s.phi.ravel(), s.xi.ravel(), p.values.ravel()

    F = (
        nu * _chi_commutator(vlap, chi2, phi_f, "chi_first")
        + _chi_commutator(L1, chi2, phi_f, "op_first")
        - _chi_commutator(L2, chi2, xi_f, "op_first")
        + (Grad @ (chi1 * p_f) - chi2 * (Grad @ p_f))
    )
    G = (
        eta * _chi_commutator(vlap, chi2, xi_f, "chi_first")
        + _chi_commutator(M1, chi2, xi_f, "op_first")
        - _chi_commutator(M2, chi2, phi_f, "op_first")
    )
    # div L_i maps vector to scalar: chi acts as chi2 inside, chi1 outside
    T = (
        (lap_p @ (chi1 * p_f) - chi1 * (lap_p @ p_f))
        + (divL1 @ (chi2 * phi_f) - chi1 * (divL1 @ phi_f))
        - (divL2 @ (chi2 * xi_f) - chi1 * (divL2 @ xi_f))
    )

    Fv = VectorField2.from_flat(g, F)
    Gv = VectorField2.from_flat(g, G)
    Tv = ScalarField(g, T.reshape(g.shape))

    regions = chi.regions
    outside = ~regions.omega_star
    out_max = max(
        float(Fv.magnitude()[outside].max(initial=0.0)),
        float(Gv.magnitude()[outside].max(initial=0.0)),
        float(np.abs(Tv.values)[outside].max(initial=0.0)),
    )
    scale = max(
        float(Fv.magnitude().max()), float(Gv.magnitude().max()),
        float(np.abs(Tv.values).max()), 1e-300,
    )
    if check_support and out_max > support_tol * scale:
        raise CommutatorSupportError(
            f"commutator forcing leaks outside the transition band "
            f"({out_max:.2e} vs scale {scale:.2e}); chi guard layers are too thin"
        )
    return CommutatorForcing(Fv, Gv, Tv, out_max, scale)
