"""Eigenanalysis of the coupled generator and the rank tests behind the
unique continuation property.

The spectrum is computed either densely (exact, small grids) or by a
shift-inverted Arnoldi iteration whose inner solves are GMRES preconditioned
with the exact diffusive symbol, so only the advective coupling has to be
iterated on.  Eigenvalues are clustered into distinct values with a relative
tolerance, giving the unstable count N, the number of distinct unstable
values M, their geometric multiplicities, and K = max multiplicity.

The continuation test itself is algebraic: a cluster's adjoint eigenfunctions
restricted to the control patch omega must stay linearly independent (their
omega-Gram matrix must be far from singular), and actuators built from those
restrictions must give a full-rank pairing matrix per cluster, which is the
finite-dimensional controllability condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError, UncontrollableError
from .fields import StateVector, inner, restrict
from .operators import GeneratorOperator

RESIDUAL_BOUND = 1e-8
CLUSTER_RTOL = 1e-6
RANK_RTOL = 1e-8


@dataclass
class EigenPair:
    lam: complex
    Phi: StateVector
    residual: float
    coeffs: np.ndarray = field(repr=False, default=None)

    @property
    def unstable(self) -> bool:
        return self.lam.real >= 0.0


@dataclass
class SpectrumReport:
    pairs: list[EigenPair]
    cluster_ids: list[int]
    distinct: list[complex]
    N: int
    M: int
    ell: list[int]
    K: int
    sigma: float = 0.0
    strategy: str = "dense"

    def unstable_clusters(self) -> list[list[EigenPair]]:
        out = []
        for ci in range(self.M):
            out.append(
                [p for p, c in zip(self.pairs, self.cluster_ids) if c == ci and p.unstable]
            )
        return out

    def lambda_next_stable(self) -> complex | None:
        stable = [p.lam for p in self.pairs if not p.unstable]
        return stable[0] if stable else None


def _sort_key(lam: complex):
    return (-lam.real, lam.imag)


def _phase_fix(vec: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(vec)))
    piv = vec[j]
    if np.abs(piv) == 0:
        return vec
    return vec * (np.abs(piv) / piv)


def _cluster(lams: list[complex]) -> tuple[list[int], list[complex]]:
    """Group sorted eigenvalues into distinct values (relative tolerance)."""
    if not lams:
        return [], []
    tol = CLUSTER_RTOL * max(1.0, max(abs(l) for l in lams))
    ids, reps = [], []
    for lam in lams:
        for ci, rep in enumerate(reps):
            if abs(lam - rep) <= tol:
                ids.append(ci)
                break
        else:
            reps.append(lam)
            ids.append(len(reps) - 1)
    return ids, reps


def _dense_eig(A: GeneratorOperator, how_many: int):
    mat = A.dense()
    lams, vecs = sla.eig(mat)
    order = sorted(range(len(lams)), key=lambda i: _sort_key(lams[i]))
    keep = order[: min(how_many + 8, len(order))]
    return lams[keep], vecs[:, keep]


def _shift_invert_eig(A: GeneratorOperator, how_many: int):
    dim = A.dim
    si = A.sigma + A.system.eq.grad_bound + 1.0
    pre = A.shift_invert_preconditioner(si)
    iter_log = {"gmres_calls": 0, "gmres_failures": 0}

    def solve_shifted(b):
        b = np.asarray(b)
        op = spla.LinearOperator(
            (dim, dim), matvec=lambda x: A.matvec(x) - si * x, dtype=complex
        )
        M = spla.LinearOperator((dim, dim), matvec=lambda x: pre * x, dtype=complex)
        x, info = spla.gmres(op, b, M=M, rtol=1e-12, atol=0.0, maxiter=400)
        iter_log["gmres_calls"] += 1
        if info != 0:
            iter_log["gmres_failures"] += 1
            raise NumericalError(
                "inner GMRES for the shift-inverted operator failed",
                detail=dict(iter_log, info=info),
            )
        return x

    opinv = spla.LinearOperator((dim, dim), matvec=solve_shifted, dtype=complex)
    aop = spla.LinearOperator(
        (dim, dim), matvec=lambda x: A.matvec(x), dtype=complex
    )
    k = min(how_many + 8, dim - 2)
    v0 = np.cos(0.7 * np.arange(dim)) + 0.3  # deterministic start vector
    try:
        lams, vecs = spla.eigs(
            aop, k=k, sigma=si, OPinv=opinv, which="LM", v0=v0, tol=1e-12, maxiter=600
        )
    except spla.ArpackNoConvergence as exc:
        raise NumericalError(
            "shift-invert Arnoldi did not converge", detail=dict(iter_log, k=k)
        ) from exc
    order = sorted(range(len(lams)), key=lambda i: _sort_key(lams[i]))
    return lams[order], vecs[:, order]


def compute_spectrum(
    A: GeneratorOperator, how_many: int, strategy: str = "dense"
) -> SpectrumReport:
    """Leading (largest real part) eigenpairs of the reduced generator."""
    if how_many < 1 or how_many > A.dim:
        raise ConfigurationError(
            f"how_many={how_many} outside 1..{A.dim} for this operator"
        )
    if strategy == "dense":
        lams, vecs = _dense_eig(A, how_many)
    elif strategy == "shift_invert":
        lams, vecs = _shift_invert_eig(A, how_many)
    else:
        raise ConfigurationError(f"unknown spectral strategy {strategy!r}")

    # complete the trailing cluster before truncating to how_many
    n_keep = min(how_many, len(lams))
    tol = CLUSTER_RTOL * max(1.0, float(np.abs(lams).max()))
    while n_keep < len(lams) and abs(lams[n_keep] - lams[n_keep - 1]) <= tol:
        n_keep += 1
    lams, vecs = lams[:n_keep], vecs[:, :n_keep]

    pairs = []
    for i, lam in enumerate(lams):
        c = _phase_fix(vecs[:, i])
        c = c / np.linalg.norm(c)
        res = float(np.linalg.norm(A.matvec(c) - lam * c))
        if res > RESIDUAL_BOUND:
            raise NumericalError(
                f"eigenpair residual {res:.2e} exceeds {RESIDUAL_BOUND}",
                detail={"lambda": complex(lam)},
            )
        if np.max(np.abs(c.imag)) < 1e-12 * np.max(np.abs(c.real), initial=1e-300):
            c = c.real.astype(float)
        pairs.append(EigenPair(complex(lam), A.to_state(c), res, c))

    # sorting puts unstable pairs first, so clusters are numbered from the
    # most unstable downward and the unstable ones occupy ids 0..M-1
    ids, reps = _cluster([p.lam for p in pairs])
    M = len({ci for p, ci in zip(pairs, ids) if p.unstable})
    ell = [sum(1 for p, c in zip(pairs, ids) if c == i and p.unstable) for i in range(M)]
    N = sum(1 for p in pairs if p.unstable)
    K = max(ell) if ell else 0
    return SpectrumReport(
        pairs=pairs,
        cluster_ids=ids,
        distinct=reps[:M],
        N=N,
        M=M,
        ell=ell,
        K=K,
        sigma=A.sigma,
        strategy=strategy,
    )


def adjoint_spectrum(
    A_adj: GeneratorOperator, how_many: int, strategy: str = "dense"
) -> SpectrumReport:
    """Eigenpairs of the adjoint; eigenvalues are conjugates of the forward ones."""
    if not A_adj.adjoint:
        raise ConfigurationError("adjoint_spectrum expects the adjoint operator")
    return compute_spectrum(A_adj, how_many, strategy)


# ---------------------------------------------------------------------------
# Gram / Kalman rank machinery
# ---------------------------------------------------------------------------

@dataclass
class GramMatrix:
    lam: complex
    entries: np.ndarray
    sigma_min: float
    threshold: float
    passed: bool


@dataclass
class KalmanMatrix:
    lam: complex
    entries: np.ndarray
    singular_values: np.ndarray
    rank: int
    ell: int
    passed: bool


def _omega_inner(a: StateVector, b: StateVector, omega: np.ndarray) -> complex:
    ra, rb = restrict(a.phi, omega), restrict(b.phi, omega)
    xa, xb = restrict(a.xi, omega), restrict(b.xi, omega)
    return inner(ra, rb) + inner(xa, xb)


def ucp_gram_test(
    cluster_pairs: list[EigenPair], omega: np.ndarray, threshold: float = 1e-6
) -> GramMatrix:
    """Gram matrix of one cluster's eigenfunctions restricted to omega.

    A nearly singular Gram means some combination of eigenfunctions almost
    vanishes on omega, i.e. numerical failure of unique continuation; the
    test passes when the smallest singular value stays above the threshold.
    """
    if not cluster_pairs:
        raise ConfigurationError("ucp_gram_test needs at least one eigenpair")
    ell = len(cluster_pairs)
    G = np.empty((ell, ell), dtype=complex)
    for a in range(ell):
        for b in range(ell):
            G[a, b] = _omega_inner(cluster_pairs[a].Phi, cluster_pairs[b].Phi, omega)
    svals = sla.svdvals(G)
    sigma_min = float(svals[-1]) if svals.size else 0.0
    return GramMatrix(
        lam=cluster_pairs[0].lam,
        entries=G,
        sigma_min=sigma_min,
        threshold=threshold,
        passed=bool(sigma_min >= threshold),
    )


def select_actuators(
    unstable_clusters: list[list[EigenPair]],
    omega: np.ndarray,
    K: int | None = None,
    gram_threshold: float = 1e-6,
) -> list[StateVector]:
    """Build K localized control fields from omega-restricted eigenfunctions.

    Requires every cluster's Gram test to pass; the actuators are real parts
    (and imaginary parts for complex modes) of adjoint eigenfunctions,
    restricted to omega and orthonormalized there.  Each returned field is
    exactly zero outside omega.
    """
    if not unstable_clusters or all(not c for c in unstable_clusters):
        return []
    for cl in unstable_clusters:
        if cl and not ucp_gram_test(cl, omega, gram_threshold).passed:
            raise UncontrollableError(
                f"omega-Gram of cluster at {cl[0].lam:.4g} is numerically singular; "
                "cannot build independent actuators"
            )
    if K is None:
        K = max(len(c) for c in unstable_clusters)

    candidates: list[StateVector] = []
    for cl in unstable_clusters:
        for p in cl:
            st = p.Phi
            re = StateVector(
                restrict(_real_part(st.phi), omega), restrict(_real_part(st.xi), omega)
            )
            candidates.append(re)
            if np.iscomplexobj(p.coeffs) and np.max(np.abs(p.coeffs.imag)) > 1e-10:
                im = StateVector(
                    restrict(_imag_part(st.phi), omega), restrict(_imag_part(st.xi), omega)
                )
                candidates.append(im)

    actuators: list[StateVector] = []
    for cand in candidates:
        if len(actuators) == K:
            break
        v = cand
        for u in actuators:
            coef = _omega_inner(u, v, omega)
            v = _axpy_state(v, u, -coef)
        nrm = np.sqrt(abs(_omega_inner(v, v, omega)))
        if nrm > 1e-8:
            actuators.append(_scale_state(v, 1.0 / nrm))
    if len(actuators) < K:
        raise UncontrollableError(
            f"could only orthonormalize {len(actuators)} of {K} requested actuators"
        )
    return actuators


def _real_part(v):
    from .fields import VectorField2

    return VectorField2(v.grid, np.real(v.u1), np.real(v.u2), v.bc_tag)


def _imag_part(v):
    from .fields import VectorField2

    return VectorField2(v.grid, np.imag(v.u1), np.imag(v.u2), v.bc_tag)


def _axpy_state(v: StateVector, u: StateVector, a) -> StateVector:
    from .fields import VectorField2

    return StateVector(
        VectorField2(v.grid, v.phi.u1 + a * u.phi.u1, v.phi.u2 + a * u.phi.u2),
        VectorField2(v.grid, v.xi.u1 + a * u.xi.u1, v.xi.u2 + a * u.xi.u2),
    )


def _scale_state(v: StateVector, a) -> StateVector:
    from .fields import VectorField2

    return StateVector(
        VectorField2(v.grid, a * v.phi.u1, a * v.phi.u2),
        VectorField2(v.grid, a * v.xi.u1, a * v.xi.u2),
    )


def kalman_rank(
    actuators: list[StateVector],
    unstable_clusters: list[list[EigenPair]],
    omega: np.ndarray,
) -> list[KalmanMatrix]:
    """Per-cluster pairing matrices (u_j, Phi*_ia) over omega and their ranks.

    The condition holds when each cluster's matrix has rank equal to its
    geometric multiplicity.
    """
    out = []
    for cl in unstable_clusters:
        if not cl:
            continue
        ell = len(cl)
        M = np.empty((ell, len(actuators)), dtype=complex)
        for a, p in enumerate(cl):
            for j, u in enumerate(actuators):
                M[a, j] = _omega_inner(u, p.Phi, omega)
        svals = sla.svdvals(M) if actuators else np.zeros(0)
        smax = svals[0] if svals.size else 0.0
        rank = int(np.sum(svals > RANK_RTOL * smax)) if smax > 0 else 0
        out.append(
            KalmanMatrix(
                lam=cl[0].lam,
                entries=M,
                singular_values=svals,
                rank=rank,
                ell=ell,
                passed=bool(rank == ell),
            )
        )
    return out
