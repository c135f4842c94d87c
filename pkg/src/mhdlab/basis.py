"""Orthonormal basis of the discrete solenoidal subspace on periodic grids.

For every nonzero integer wavevector the centered divergence acts on the two
Fourier amplitudes through the symbol (sin(kx hx)/hx, sin(ky hy)/hy); its
null direction gives one real cosine and one real sine basis field per
conjugate pair of wavevectors.  Self-conjugate lattice points (Nyquist
combinations) have a vanishing symbol, so both unit polarizations enter.
The k = 0 amplitudes (componentwise means) are excluded: on the torus they
are neutral directions that never couple back, and dropping them keeps the
stability bookkeeping meaningful.

Columns are orthonormal in the grid inner product and exactly divergence
free for the same centered stencil used by the rest of the package, so
restricting operators to this basis is an exact invariant-subspace
reduction, not a Galerkin approximation, whenever the operator preserves
the subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fields import StateVector, VectorField2
from .grid import Grid


@dataclass
class SolenoidalBasis:
    grid: Grid
    dim: int
    # pair modes: one conjugate representative each, cos and sin columns
    pair_kflat: np.ndarray
    pair_negkflat: np.ndarray
    pair_t: np.ndarray          # (npair, 2) polarization
    pair_cos_col: np.ndarray
    pair_sin_col: np.ndarray
    pair_sym2: np.ndarray       # order-2 Laplacian symbol per pair
    pair_sym4: np.ndarray
    # self-conjugate modes: one column per unit polarization
    spec_kflat: np.ndarray
    spec_dir: np.ndarray        # 0 -> e_x, 1 -> e_y
    spec_col: np.ndarray
    spec_sym2: np.ndarray
    spec_sym4: np.ndarray

    # ------------------------------------------------------------------
    @classmethod
    def for_grid(cls, grid: Grid) -> "SolenoidalBasis":
        if not grid.fully_periodic:
            raise ConfigurationError(
                "the solenoidal Fourier basis requires a fully periodic grid"
            )
        if "solenoidal_basis" not in grid._cache:
            grid._cache["solenoidal_basis"] = cls._build(grid)
        return grid._cache["solenoidal_basis"]

    @staticmethod
    def _lap_symbol(mx: int, my: int, grid: Grid, order: int) -> float:
        def sym1d(m, n, h):
            a = 2 * np.pi * m / n
            if order == 2:
                return (2 * np.cos(a) - 2) / h**2
            return (-2 * np.cos(2 * a) + 32 * np.cos(a) - 30) / (12 * h**2)

        return sym1d(mx, grid.nx, grid.hx) + sym1d(my, grid.ny, grid.hy)

    @classmethod
    def _build(cls, grid: Grid) -> "SolenoidalBasis":
        nx, ny = grid.nx, grid.ny
        hx, hy = grid.hx, grid.hy
        kx_int = np.fft.fftfreq(nx, d=1.0 / nx).astype(int)
        ky_int = np.fft.fftfreq(ny, d=1.0 / ny).astype(int)

        reps = []
        seen = set()
        for mx in range(nx):
            for my in range(ny):
                if (mx, my) == (0, 0) or (mx, my) in seen:
                    continue
                conj = ((-mx) % nx, (-my) % ny)
                seen.add((mx, my))
                seen.add(conj)
                reps.append((mx, my, conj == (mx, my)))
        # deterministic ordering: by |k|^2 then integer components
        reps.sort(key=lambda r: (kx_int[r[0]] ** 2 + ky_int[r[1]] ** 2, kx_int[r[0]], ky_int[r[1]]))

        p_kflat, p_nkflat, p_t, p_cos, p_sin, p_s2, p_s4 = [], [], [], [], [], [], []
        s_kflat, s_dir, s_col, s_s2, s_s4 = [], [], [], [], []
        col = 0
        for mx, my, self_conj in reps:
            sx = np.sin(2 * np.pi * mx / nx) / hx
            sy = np.sin(2 * np.pi * my / ny) / hy
            s2 = cls._lap_symbol(mx, my, grid, 2)
            s4 = cls._lap_symbol(mx, my, grid, 4)
            flat = mx * ny + my
            if self_conj:
                # symbol vanishes at self-conjugate points; keep both directions
                for d in (0, 1):
                    s_kflat.append(flat)
                    s_dir.append(d)
                    s_col.append(col)
                    s_s2.append(s2)
                    s_s4.append(s4)
                    col += 1
            else:
                s = np.hypot(sx, sy)
                t = np.array([-sy, sx]) / s
                nflat = ((-mx) % nx) * ny + ((-my) % ny)
                p_kflat.append(flat)
                p_nkflat.append(nflat)
                p_t.append(t)
                p_cos.append(col)
                p_sin.append(col + 1)
                p_s2.append(s2)
                p_s4.append(s4)
                col += 2

        return cls(
            grid=grid,
            dim=col,
            pair_kflat=np.array(p_kflat, dtype=np.intp),
            pair_negkflat=np.array(p_nkflat, dtype=np.intp),
            pair_t=np.array(p_t) if p_t else np.zeros((0, 2)),
            pair_cos_col=np.array(p_cos, dtype=np.intp),
            pair_sin_col=np.array(p_sin, dtype=np.intp),
            pair_sym2=np.array(p_s2),
            pair_sym4=np.array(p_s4),
            spec_kflat=np.array(s_kflat, dtype=np.intp),
            spec_dir=np.array(s_dir, dtype=np.intp),
            spec_col=np.array(s_col, dtype=np.intp),
            spec_sym2=np.array(s_s2),
            spec_sym4=np.array(s_s4),
        )

    # ------------------------------------------------------------------
    @property
    def _norms(self) -> tuple[float, float]:
        area = self.grid.Lx * self.grid.Ly
        return np.sqrt(2.0 / area), np.sqrt(1.0 / area)

    def to_field(self, coeffs: np.ndarray) -> VectorField2:
        """Synthesize the vector field with the given basis coefficients."""
        g = self.grid
        nc, ns = self._norms
        coeffs = np.asarray(coeffs)
        S1 = np.zeros(g.shape, dtype=complex).ravel()
        S2 = np.zeros(g.shape, dtype=complex).ravel()
        if self.pair_kflat.size:
            a = coeffs[self.pair_cos_col]
            b = coeffs[self.pair_sin_col]
            wp = 0.5 * nc * (a - 1j * b)
            wm = 0.5 * nc * (a + 1j * b)
            t1, t2 = self.pair_t[:, 0], self.pair_t[:, 1]
            S1[self.pair_kflat] = wp * t1
            S2[self.pair_kflat] = wp * t2
            S1[self.pair_negkflat] = wm * t1
            S2[self.pair_negkflat] = wm * t2
        if self.spec_kflat.size:
            c = coeffs[self.spec_col] * ns
            xsel = self.spec_dir == 0
            S1[self.spec_kflat[xsel]] = c[xsel]
            S2[self.spec_kflat[~xsel]] = c[~xsel]
        scale = g.nx * g.ny
        u1 = np.fft.ifft2(S1.reshape(g.shape)) * scale
        u2 = np.fft.ifft2(S2.reshape(g.shape)) * scale
        if not np.iscomplexobj(coeffs):
            u1, u2 = u1.real, u2.real
        return VectorField2(g, u1, u2)

    def to_coeffs(self, v: VectorField2) -> np.ndarray:
        """Expand a field over the basis (adjoint of to_field); linear in v."""
        g = self.grid
        nc, ns = self._norms
        dA = g.cell_area
        V1 = np.fft.fft2(v.u1).ravel()
        V2 = np.fft.fft2(v.u2).ravel()
        cplx = np.iscomplexobj(v.u1) or np.iscomplexobj(v.u2)
        out = np.zeros(self.dim, dtype=complex if cplx else float)
        if self.pair_kflat.size:
            t1, t2 = self.pair_t[:, 0], self.pair_t[:, 1]
            Vp = t1 * V1[self.pair_kflat] + t2 * V2[self.pair_kflat]
            Vm = t1 * V1[self.pair_negkflat] + t2 * V2[self.pair_negkflat]
            ccos = nc * dA * 0.5 * (Vm + Vp)
            csin = nc * dA * (Vm - Vp) / 2j
            out[self.pair_cos_col] = ccos if cplx else ccos.real
            out[self.pair_sin_col] = csin if cplx else csin.real
        if self.spec_kflat.size:
            xsel = self.spec_dir == 0
            vals = np.empty(self.spec_kflat.size, dtype=complex)
            vals[xsel] = V1[self.spec_kflat[xsel]]
            vals[~xsel] = V2[self.spec_kflat[~xsel]]
            vals *= ns * dA
            out[self.spec_col] = vals if cplx else vals.real
        return out

    def dense(self) -> np.ndarray:
        """Materialize the basis as a (2*ncells, dim) array (small grids)."""
        g = self.grid
        n2 = g.ncells
        Z = np.empty((2 * n2, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            f = self.to_field(e)
            Z[:n2, j] = f.u1.ravel()
            Z[n2:, j] = f.u2.ravel()
        return Z

    def diffusion_symbol(self, order: int) -> np.ndarray:
        """Per-column Laplacian symbol (the basis diagonalizes it exactly)."""
        sym = np.empty(self.dim)
        if order == 2:
            sym[self.pair_cos_col] = self.pair_sym2
            sym[self.pair_sin_col] = self.pair_sym2
            sym[self.spec_col] = self.spec_sym2
        elif order == 4:
            sym[self.pair_cos_col] = self.pair_sym4
            sym[self.pair_sin_col] = self.pair_sym4
            sym[self.spec_col] = self.spec_sym4
        else:
            raise ConfigurationError(f"no symbol for stencil order {order}")
        return sym

    # state-level helpers -------------------------------------------------
    def state_dim(self) -> int:
        return 2 * self.dim

    def state_to_coeffs(self, s: StateVector) -> np.ndarray:
        return np.concatenate([self.to_coeffs(s.phi), self.to_coeffs(s.xi)])

    def coeffs_to_state(self, x: np.ndarray) -> StateVector:
        m = self.dim
        return StateVector(self.to_field(x[:m]), self.to_field(x[m:]))
