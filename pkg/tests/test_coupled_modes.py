"""Uniform-field coupled dynamics: an independent oracle for the coupling.

With a stationary velocity equilibrium and a constant magnetic equilibrium
b = (b1, b2), each Fourier polarization obeys the 2x2 system

    d/dt [a_phi; a_xi] = [[nu*s2(k), i*sb], [i*sb, eta*s2(k)]],

where s2 is the diffusion symbol and sb the centered symbol of (b . grad).
Its eigenvalues nu*s2 +- i*|sb| (for nu = eta) are oscillatory pairs, which
pins the sign and placement of both coupling blocks and drives the complex
eigenpair handling through clustering, continuation tests and feedback.
"""

import numpy as np
import pytest

from mhdlab import (
    OmegaSpec,
    adjoint_spectrum,
    assemble_adjoint,
    assemble_generator,
    build_grid,
    build_nested_regions,
    compute_spectrum,
    kalman_rank,
    make_equilibrium,
    measure_decay,
    project_unstable,
    select_actuators,
    simulate_closed_loop,
    synthesize_feedback,
    ucp_gram_test,
)
from mhdlab.stabilize import control_fields

L = 2 * np.pi


def _uniform_field_eq(grid, b=(1.0, 0.0)):
    ones = np.ones(grid.shape)
    return make_equilibrium(
        "custom", grid, {"B_e": (b[0] * ones, b[1] * ones)}
    )


def oracle_uniform_field_eigs(grid, nu, eta, sigma, b, count, order=4):
    """Enumerate the per-wavevector 2x2 eigenvalues of the coupled symbol."""
    def d2(m, n, h):
        a = 2 * np.pi * m / n
        if order == 2:
            return (2 * np.cos(a) - 2) / h**2
        return (-2 * np.cos(2 * a) + 32 * np.cos(a) - 30) / (12 * h**2)

    vals = []
    for mx in range(grid.nx):
        for my in range(grid.ny):
            if (mx, my) == (0, 0):
                continue
            s2 = d2(mx, grid.nx, grid.hx) + d2(my, grid.ny, grid.hy)
            sb = b[0] * np.sin(2 * np.pi * mx / grid.nx) / grid.hx + b[1] * np.sin(
                2 * np.pi * my / grid.ny
            ) / grid.hy
            block = np.array([[nu * s2, 1j * sb], [1j * sb, eta * s2]])
            vals.extend(np.linalg.eigvals(block) + sigma)
    vals.sort(key=lambda z: (-z.real, z.imag))
    return np.array(vals[:count])


def test_uniform_field_oscillatory_spectrum(box16):
    eq = _uniform_field_eq(box16)
    A = assemble_generator(eq, 0.0)
    rep = compute_spectrum(A, 12, "dense")
    got = np.array([p.lam for p in rep.pairs[:12]])
    want = oracle_uniform_field_eigs(box16, 1.0, 1.0, 0.0, (1.0, 0.0), 12)
    key = lambda z: (round(z.real, 9), round(z.imag, 9))
    got_s = np.array(sorted(got, key=key))
    want_s = np.array(sorted(want, key=key))
    assert np.abs(got_s - want_s).max() < 1e-9
    # axis-aligned modes oscillate at the advective frequency sin(h)/h
    freq = np.sin(box16.hx) / box16.hx
    imag_parts = sorted({round(abs(z.imag), 6) for z in got_s})
    assert imag_parts[0] == 0.0
    assert imag_parts[-1] == pytest.approx(freq, abs=1e-6)


def test_uniform_field_pressure_and_residual_exact(box16):
    # constant-coefficient coupling keeps the solenoidal subspace exactly
    # invariant: the steady-form residual stays at solver level
    eq = _uniform_field_eq(box16)
    A = assemble_generator(eq, 1.2)
    rep = compute_spectrum(A, 8, "dense")
    sys = A.system
    for pair in rep.pairs[:8]:
        out = sys.pde_residual(pair.lam, pair.Phi)
        assert out["relative"] < 1e-9
        assert sys.xi_row_leakage(pair.Phi) < 1e-10


def test_uniform_field_complex_cluster_structure():
    grid = build_grid(L, L, 24, 24)
    eq = _uniform_field_eq(grid)
    A = assemble_generator(eq, 1.2)
    rep = compute_spectrum(A, 12, "dense")
    # sigma - |k|^2 unstable only at |k|^2 = 1: conjugate advective pair from
    # (+-1, 0) plus a real 4-fold cluster from (0, +-1)
    assert rep.N == 8
    assert rep.M == 3
    assert sorted(rep.ell) == [2, 2, 4]
    assert rep.K == 4
    lams = sorted(rep.distinct, key=lambda z: z.imag)
    assert lams[0].imag == pytest.approx(-np.sin(grid.hx) / grid.hx, abs=1e-8)
    assert lams[-1].imag == pytest.approx(np.sin(grid.hx) / grid.hx, abs=1e-8)


def test_uniform_field_closed_loop():
    grid = build_grid(L, L, 24, 24)
    eq = _uniform_field_eq(grid)
    sigma, gamma = 1.2, 0.8
    A = assemble_generator(eq, sigma)
    Aadj = assemble_adjoint(eq, sigma)
    rep = compute_spectrum(A, 12, "dense")
    arep = adjoint_spectrum(Aadj, 12, "dense")
    regions = build_nested_regions(
        grid,
        OmegaSpec(shape="disc", radius=0.15 * L),
        omega1_width=0.06 * L,
        omega_star_width=0.12 * L,
    )
    omega = regions.omega
    clusters = arep.unstable_clusters()
    for cl in clusters:
        assert ucp_gram_test(cl, omega).passed
    actuators = select_actuators(clusters, omega)
    assert all(k.passed for k in kalman_rank(actuators, clusters, omega))

    fwd = [p for p in rep.pairs if p.unstable]
    adj = [p for p in arep.pairs if p.unstable]
    proj = project_unstable(fwd, adj)
    assert proj.N == 8
    fields = control_fields(actuators, omega)
    B = np.zeros((proj.N, len(fields)))
    for j, f in enumerate(fields):
        B[:, j] = proj.coords(np.real(A.from_state(f)))
    # complex pairs fold into real blocks: build the block from the operator
    AV = np.column_stack([A.matvec(proj.V[:, j]) for j in range(proj.N)])
    import scipy.linalg as sla

    block = np.real(sla.solve(proj.pairing, proj.W.T @ AV))
    gain = synthesize_feedback(block, B, gamma)
    assert np.max(gain.achieved_poles.real) <= -gamma + 1e-8

    rng = np.random.default_rng(21)
    y0 = A.to_state(0.01 * rng.normal(size=A.dim) + proj.V @ np.ones(proj.N))
    trace = simulate_closed_loop(A, gain, actuators, omega, y0, 8.0, 0.01, proj)
    rate, _ = measure_decay(trace, (4.0, 8.0))
    lam_next = abs(rep.lambda_next_stable().real)
    target = 2.0 * min(gamma, lam_next)
    assert abs(rate - target) <= 0.2 * target
    # realized actuator signals are real and the applied fields stay in omega
    assert np.isrealobj(trace.amplitudes)
    outside = ~omega
    for f in fields:
        assert np.all(f.phi.u1[outside] == 0.0)
