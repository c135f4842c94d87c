import numpy as np
import pytest

from mhdlab import (
    ScalarField,
    StateVector,
    VectorField2,
    assemble_adjoint,
    assemble_generator,
    build_cutoff,
    build_grid,
    build_nested_regions,
    build_commutators,
    compute_spectrum,
    divergence,
    make_equilibrium,
    oseen_minus,
    oseen_plus,
    rot,
)
from mhdlab.errors import CommutatorSupportError, ConfigurationError
from mhdlab.fields import dx_matrix, dy_matrix, inner
from mhdlab.geometry import CutoffField, OmegaSpec
from mhdlab.operators import export_coo

L = 2 * np.pi


class TestEquilibria:
    def test_zero(self, box32, eq_zero32):
        assert eq_zero32.is_zero
        assert eq_zero32.f.norm() == 0.0
        assert eq_zero32.g.norm() == 0.0
        assert eq_zero32.grad_bound == 0.0

    def test_shear_divfree_and_forcing(self, box32):
        nu = 0.7
        eq = make_equilibrium("shear", box32, nu=nu)
        assert np.abs(divergence(eq.y_e).values).max() < 1e-12
        _, Y = box32.meshgrid()
        # f = -nu * Lap y_e; the discrete symbol multiplies sin y by
        # (2 - 2cos h)/h^2, within O(h^2) of 1
        assert np.abs(eq.f.u1 - nu * np.sin(Y)).max() < 5e-3 * nu
        assert np.abs(eq.f.u2).max() < 1e-12
        assert eq.g.norm() == 0.0
        assert eq.grad_bound == pytest.approx(1.0, rel=1e-2)

    def test_taylor_vortex_divfree(self, box32):
        eq = make_equilibrium("taylor_vortex", box32)
        assert np.abs(divergence(eq.y_e).values).max() < 1e-12
        assert np.isfinite(eq.grad_bound)

    def test_custom_with_magnetic_part(self, box32):
        X, Y = box32.meshgrid()
        eq = make_equilibrium(
            "custom",
            box32,
            {"B_e": (np.sin(Y), np.zeros(box32.shape))},
        )
        assert eq.B_e.norm() > 0
        assert np.abs(divergence(eq.B_e).values).max() < 1e-12

    def test_unknown_kind(self, box32):
        with pytest.raises(ConfigurationError):
            make_equilibrium("vortex_street", box32)

    def test_channel_shear_respects_walls(self, channel):
        X, Y = channel.meshgrid()
        prof = Y * (channel.Ly - Y)
        eq = make_equilibrium(
            "custom", channel, {"y_e": (prof, np.zeros(channel.shape))}
        )
        ring = channel.boundary_mask()
        assert np.abs(eq.y_e.u1[ring]).max() < 1e-8 * np.abs(eq.y_e.u1).max()


class TestOseen:
    def test_zero_field_gives_zero_operator(self, box32):
        e = VectorField2.zeros(box32)
        assert oseen_plus(e).matrix.nnz == 0 or np.abs(oseen_plus(e).matrix.data).max() == 0

    def test_constant_field_is_advection(self, box32):
        ones = np.ones(box32.shape)
        e = VectorField2(box32, ones, 0 * ones)
        rng = np.random.default_rng(0)
        v = rng.normal(size=2 * box32.ncells)
        expect = np.concatenate(
            [dx_matrix(box32) @ v[: box32.ncells], dx_matrix(box32) @ v[box32.ncells :]]
        )
        assert np.abs(oseen_plus(e).matrix @ v - expect).max() < 1e-12
        # zero-order term vanishes for constant fields: both variants agree
        assert np.abs(
            oseen_plus(e).matrix @ v - oseen_minus(e).matrix @ v
        ).max() < 1e-12

    def test_shear_on_constant_state(self, box32):
        _, Y = box32.meshgrid()
        e = VectorField2(box32, np.sin(Y), np.zeros(box32.shape))
        v = np.concatenate([np.zeros(box32.ncells), np.ones(box32.ncells)])
        got_plus = oseen_plus(e).matrix @ v
        got_minus = oseen_minus(e).matrix @ v
        cos_d = (dy_matrix(box32) @ np.sin(Y).ravel())  # discrete cos y
        assert np.abs(got_plus[: box32.ncells] - cos_d).max() < 1e-12
        assert np.abs(got_minus[: box32.ncells] + cos_d).max() < 1e-12
        assert np.abs(cos_d - np.cos(Y).ravel()).max() < 1e-2

    def test_export_coo(self, box16, tmp_path):
        _, Y = box16.meshgrid()
        e = VectorField2(box16, np.sin(Y), np.zeros(box16.shape))
        path = tmp_path / "op.txt"
        export_coo(oseen_plus(e), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# row col real imag"
        r, c, re, im = lines[1].split()
        assert float(im) == 0.0


class TestGenerator:
    def test_zero_equilibrium_block_diagonal(self, box16):
        eq = make_equilibrium("zero", box16)
        A = assemble_generator(eq, 0.0)
        amb = A.system.ambient_matrix()
        n2 = 2 * box16.ncells
        off1 = amb[:n2, n2:]
        off2 = amb[n2:, :n2]
        assert off1.nnz == 0 or np.abs(off1.data).max() == 0.0
        assert off2.nnz == 0 or np.abs(off2.data).max() == 0.0

    def test_shift_moves_spectrum_exactly(self, box16):
        eq = make_equilibrium("zero", box16)
        lam0 = np.sort(np.linalg.eigvalsh(assemble_generator(eq, 0.0).dense()))
        lam5 = np.sort(np.linalg.eigvalsh(assemble_generator(eq, 0.5).dense()))
        assert np.abs((lam0 + 0.5) - lam5).max() < 1e-10

    def test_shear_block_triangular(self, box16):
        eq = make_equilibrium("shear", box16)
        A = assemble_generator(eq, 0.0)
        amb = A.system.ambient_matrix()
        n2 = 2 * box16.ncells
        # B_e = 0 kills both coupling blocks; diagonal blocks differ
        assert np.abs(amb[:n2, n2:].data).max(initial=0.0) == 0.0
        assert np.abs(amb[n2:, :n2].data).max(initial=0.0) == 0.0
        d1 = amb[:n2, :n2] - amb[n2:, n2:]
        assert np.abs(d1.data).max() > 0

    def test_negative_shift_rejected(self, box16):
        eq = make_equilibrium("zero", box16)
        with pytest.raises(ConfigurationError):
            assemble_generator(eq, -0.1)


class TestAdjoint:
    def test_zero_equilibrium_self_adjoint(self, box16):
        eq = make_equilibrium("zero", box16)
        A = assemble_generator(eq, 0.0).dense()
        Astar = assemble_adjoint(eq, 0.0).dense()
        assert np.abs(A - Astar).max() < 1e-11

    def test_pairing_identity(self, box16):
        eq = make_equilibrium("taylor_vortex", box16)
        A = assemble_generator(eq, 0.3)
        Aadj = assemble_adjoint(eq, 0.3)
        rng = np.random.default_rng(5)
        for _ in range(50):
            u = rng.normal(size=A.dim)
            v = rng.normal(size=A.dim)
            lhs = np.dot(A.matvec(u), v)
            rhs = np.dot(u, Aadj.matvec(v))
            assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_adjoint_spectrum_conjugate(self, box16):
        eq = make_equilibrium("shear", box16)
        lam = np.linalg.eigvals(assemble_generator(eq, 0.0).dense())
        lam_adj = np.linalg.eigvals(assemble_adjoint(eq, 0.0).dense())
        key = lambda z: (round(z.real, 8), round(z.imag, 8))
        a = sorted(np.conj(lam_adj), key=key)
        b = sorted(lam, key=key)
        assert np.abs(np.array(a) - np.array(b)).max() < 1e-8


class TestPressure:
    def test_zero_state(self, gen_shifted32):
        sys = gen_shifted32.system
        s = StateVector.zeros(sys.grid)
        p = sys.pressure_from_state(s)
        assert np.abs(p.values).max() == 0.0

    def test_zero_equilibrium_gives_zero_pressure(self, box32, gen_shifted32):
        rng = np.random.default_rng(6)
        sys = gen_shifted32.system
        x = rng.normal(size=gen_shifted32.dim)
        s = gen_shifted32.to_state(x)
        p = sys.pressure_from_state(s)
        assert np.abs(p.values).max() < 1e-12

    def test_poisson_identity_residual(self, box32):
        from mhdlab.fields import divergence_matrix, wide_laplacian_matrix

        eq = make_equilibrium("taylor_vortex", box32)
        A = assemble_generator(eq, 0.0)
        sys = A.system
        rng = np.random.default_rng(7)
        psi1 = ScalarField(box32, rng.normal(size=box32.shape))
        psi2 = ScalarField(box32, rng.normal(size=box32.shape))
        s = StateVector(rot(psi1), rot(psi2))
        p = sys.pressure_from_state(s)
        b = sys.blocks()
        D = divergence_matrix(box32)
        rhs = -(D @ (b["L1"] @ s.phi.ravel())) + D @ (b["L2"] @ s.xi.ravel())
        resid = wide_laplacian_matrix(box32) @ p.values.ravel() - rhs
        assert np.abs(resid).max() <= 1e-10 * max(np.abs(rhs).max(), 1.0)

    def test_div_oseen_first_order_identity(self):
        # div L1(phi) = 2 tr(grad y_e grad phi) for solenoidal fields; the two
        # discrete evaluations agree to O(h^2), measured order >= 1.8
        errs = {}
        for n in (32, 64):
            g = build_grid(L, L, n, n)
            X, Y = g.meshgrid()
            eq = make_equilibrium("shear", g)
            phi = VectorField2(g, np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y))
            from mhdlab.fields import divergence_matrix

            lhs = divergence_matrix(g) @ (oseen_plus(eq.y_e).matrix @ phi.ravel())
            Dx, Dy = dx_matrix(g), dy_matrix(g)
            d = lambda a, m: (m @ a.ravel())
            # independent oracle: the double sum 2 * (d_i e_j)(d_j phi_i)
            rhs = 2.0 * (
                d(eq.y_e.u1, Dx) * d(phi.u1, Dx)
                + d(eq.y_e.u2, Dx) * d(phi.u1, Dy)
                + d(eq.y_e.u1, Dy) * d(phi.u2, Dx)
                + d(eq.y_e.u2, Dy) * d(phi.u2, Dy)
            )
            errs[n] = np.abs(lhs - rhs).max()
        order = np.log2(errs[32] / errs[64])
        assert order >= 1.8


class TestCommutators:
    def _eigpair(self, gen):
        rep = compute_spectrum(gen, 4, "shift_invert")
        return rep.pairs[0]

    def test_constant_cutoff_gives_zero(self, box32, regions32, eq_zero32):
        chi1 = CutoffField(regions32, np.ones(box32.shape), 0.0, 1.0)
        rng = np.random.default_rng(8)
        s = StateVector(
            rot(ScalarField(box32, rng.normal(size=box32.shape))),
            rot(ScalarField(box32, rng.normal(size=box32.shape))),
        )
        p = ScalarField(box32, rng.normal(size=box32.shape))
        f = build_commutators(chi1, s, p, eq_zero32, check_support=False)
        assert f.F_chi.norm() == 0.0
        assert f.G_chi.norm() == 0.0
        assert np.abs(f.T_chi.values).max() == 0.0

    def test_support_contained_exactly(self, box32, regions32, chi32):
        eq = make_equilibrium("taylor_vortex", box32)
        rng = np.random.default_rng(9)
        s = StateVector(
            rot(ScalarField(box32, rng.normal(size=box32.shape))),
            rot(ScalarField(box32, rng.normal(size=box32.shape))),
        )
        p = ScalarField(box32, rng.normal(size=box32.shape))
        f = build_commutators(chi32, s, p, eq)
        outside = regions32.omega | regions32.omega1 | regions32.omega0
        assert f.F_chi.magnitude()[outside].max() == 0.0
        assert f.G_chi.magnitude()[outside].max() == 0.0
        assert np.abs(f.T_chi.values)[outside].max() == 0.0
        assert f.max_outside_omega_star <= 1e-12 * f.scale

    def test_laplacian_commutator_matches_leibniz(self, regions32, chi32, eq_zero32):
        # [chi,Lap]phi = -phi Lap chi - 2 grad chi . grad phi + O(h^2),
        # compared on the transition band where all fields are smooth
        from mhdlab import gradient, laplacian

        errs = {}
        for n in (32, 64):
            g = build_grid(L, L, n, n)
            regions = build_nested_regions(g, OmegaSpec(shape="disc", radius=0.15 * L))
            chi = build_cutoff(regions)
            eq = make_equilibrium("zero", g)
            X, Y = g.meshgrid()
            s = StateVector(
                VectorField2(g, np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)),
                VectorField2.zeros(g),
            )
            p = ScalarField(g, np.zeros(g.shape))
            f = build_commutators(chi, s, p, eq, diffusion_order=2)
            chi_s = chi.as_scalar()
            lap_chi = laplacian(chi_s).values
            gchi = gradient(chi_s)
            gphi1 = gradient(ScalarField(g, s.phi.u1))
            leib1 = -s.phi.u1 * lap_chi - 2.0 * (gchi.u1 * gphi1.u1 + gchi.u2 * gphi1.u2)
            band = regions.omega_star
            errs[n] = np.abs(f.F_chi.u1 - leib1)[band].max()
        assert errs[32] < 0.2  # bounded constant at unit field scale
        assert errs[32] / errs[64] > 2.5  # O(h^2)-ish decay

    def test_zero_order_in_state(self, box32, regions32, chi32, eq_zero32):
        # [L_i,chi] sees only the pointwise state: adding a constant to the
        # state changes the commutator by the commutator of the constant
        eq = make_equilibrium("taylor_vortex", box32)
        ones = VectorField2(box32, np.ones(box32.shape), np.ones(box32.shape))
        zeros2 = VectorField2.zeros(box32)
        p0 = ScalarField(box32, np.zeros(box32.shape))
        rng = np.random.default_rng(10)
        v = rot(ScalarField(box32, rng.normal(size=box32.shape)))
        sA = StateVector(v, zeros2)
        vB = VectorField2(box32, v.u1 + 1.0, v.u2 + 1.0)
        sB = StateVector(vB, zeros2)
        sC = StateVector(ones, zeros2)
        chi = chi32
        def strip_lap(state):
            # cancel the shared diffusive commutator to isolate [L1, chi]
            full = build_commutators(chi, state, p0, eq, check_support=False)
            diff_only = build_commutators(
                chi, state, p0, make_equilibrium("zero", box32), check_support=False
            )
            return full.F_chi.ravel() - diff_only.F_chi.ravel()
        delta = strip_lap(sB) - strip_lap(sA) - strip_lap(sC)
        assert np.abs(delta).max() < 1e-11

    def test_thin_guard_layer_raises(self, box32, regions32, eq_zero32):
        # chi that transitions immediately leaks commutator support
        bad_vals = np.where(regions32.omega | regions32.omega1, 1.0, 0.0)
        bad = CutoffField(regions32, bad_vals, 0.0, 1.0)
        rng = np.random.default_rng(11)
        s = StateVector(
            rot(ScalarField(box32, rng.normal(size=box32.shape))),
            rot(ScalarField(box32, rng.normal(size=box32.shape))),
        )
        p = ScalarField(box32, rng.normal(size=box32.shape))
        with pytest.raises(CommutatorSupportError):
            build_commutators(bad, s, p, eq_zero32)


class TestPdeResidual:
    def test_eigenpair_residual_small(self, gen_shifted32):
        rep = compute_spectrum(gen_shifted32, 10, "shift_invert")
        sys = gen_shifted32.system
        for pair in rep.pairs[:4]:
            out = sys.pde_residual(pair.lam, pair.Phi)
            assert out["relative"] <= 1e-6

    def test_xi_leakage_reported_for_coupled_equilibrium(self, box16):
        X, Y = box16.meshgrid()
        eq = make_equilibrium(
            "custom",
            box16,
            {"B_e": (np.sin(Y), np.zeros(box16.shape))},
        )
        A = assemble_generator(eq, 0.0)
        rep = compute_spectrum(A, 4, "dense")
        leak = A.system.xi_row_leakage(rep.pairs[0].Phi)
        assert leak < 0.3  # O(h^2) scale, strictly a diagnostic
        assert leak > 0.0
