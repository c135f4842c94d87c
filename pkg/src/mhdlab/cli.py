"""Batch pipeline driver: spectrum | ucp | carleman | stabilize | all.

Each subcommand reads one JSON config, runs its stage, writes columnar
tables plus a machine-readable summary into the output directory, and exits
with a status that encodes the failure class:

    0 success          2 configuration/geometry error
    3 numerical error  4 uncontrollable (rank condition failed)
    5 other deliberate failure
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .carleman import (
    CarlemanParams,
    calibrate_tau2_bound,
    find_tau0,
    integrated_inequality_check,
    make_test_field,
)
from .config import RunConfig
from .errors import (
    ConfigurationError,
    GeometryError,
    MhdLabError,
    NumericalError,
    UncontrollableError,
)
from .fields import StateVector, restrict
from .geometry import build_cutoff, build_weight
from .operators import assemble_adjoint, assemble_generator
from .reports import write_summary, write_table
from .spectral import (
    EigenPair,
    adjoint_spectrum,
    compute_spectrum,
    kalman_rank,
    select_actuators,
    ucp_gram_test,
)
from .stabilize import (
    control_fields,
    measure_decay,
    project_unstable,
    simulate_closed_loop,
    synthesize_feedback,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_UNCONTROLLABLE = 4
EXIT_OTHER = 5


def _meta(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.hash, "version": __version__}


def _spectra(cfg: RunConfig):
    grid = cfg.build_grid()
    eq = cfg.build_equilibrium(grid)
    opts = cfg.spectral_options()
    A = assemble_generator(eq, cfg.sigma)
    rep = compute_spectrum(A, opts["count"], opts["strategy"])
    return grid, eq, A, rep, opts


def run_spectrum(cfg: RunConfig, outdir: Path) -> dict:
    grid, eq, A, rep, opts = _spectra(cfg)
    rows = [
        [p.lam.real, p.lam.imag, p.residual, cid, rep.ell[cid] if cid < rep.M else 0]
        for p, cid in zip(rep.pairs, rep.cluster_ids)
    ]
    write_table(
        outdir / "spectrum.txt",
        ["re", "im", "residual", "cluster", "ell"],
        rows,
        _meta(cfg),
    )
    summary = dict(
        _meta(cfg),
        N=rep.N,
        M=rep.M,
        ell=rep.ell,
        K=rep.K,
        sigma=rep.sigma,
        strategy=rep.strategy,
        count=len(rep.pairs),
        max_residual=max((p.residual for p in rep.pairs), default=0.0),
        eigenvalues=[{"re": p.lam.real, "im": p.lam.imag} for p in rep.pairs],
    )
    write_summary(outdir / "spectrum_summary.json", summary)
    return summary


def _degenerate_clusters(clusters: list[list[EigenPair]], omega) -> list[list[EigenPair]]:
    """Fixture: overwrite one eigenfunction on omega with a copy of another."""
    out = [list(c) for c in clusters]
    for cl in out:
        if len(cl) >= 2:
            a, b = cl[0], cl[1]
            phi = b.Phi.phi.copy()
            xi = b.Phi.xi.copy()
            phi.u1[omega] = a.Phi.phi.u1[omega]
            phi.u2[omega] = a.Phi.phi.u2[omega]
            xi.u1[omega] = a.Phi.xi.u1[omega]
            xi.u2[omega] = a.Phi.xi.u2[omega]
            cl[1] = EigenPair(b.lam, StateVector(phi, xi), b.residual, b.coeffs)
            break
    return out


def run_ucp(cfg: RunConfig, outdir: Path) -> dict:
    grid = cfg.build_grid()
    eq = cfg.build_equilibrium(grid)
    opts = cfg.spectral_options()
    regions = cfg.build_regions(grid)
    omega = regions.omega
    A_adj = assemble_adjoint(eq, cfg.sigma)
    arep = adjoint_spectrum(A_adj, opts["count"], opts["strategy"])
    clusters = arep.unstable_clusters()
    if opts["degenerate_fixture"]:
        clusters = _degenerate_clusters(clusters, omega)

    rows, cluster_summaries = [], []
    all_gram = True
    for ci, cl in enumerate(clusters):
        gm = ucp_gram_test(cl, omega)
        all_gram &= gm.passed
        cluster_summaries.append(
            {
                "cluster": ci,
                "lambda": {"re": gm.lam.real, "im": gm.lam.imag},
                "ell": len(cl),
                "sigma_min": gm.sigma_min,
                "gram_passed": gm.passed,
            }
        )
    kalman_rows = []
    if arep.N > 0 and all_gram:
        actuators = select_actuators(clusters, omega, arep.K)
        km = kalman_rank(actuators, clusters, omega)
        for ci, k in enumerate(km):
            cluster_summaries[ci]["kalman_rank"] = k.rank
            cluster_summaries[ci]["kalman_passed"] = k.passed
            kalman_rows.append([ci, k.lam.real, k.lam.imag, k.rank, k.ell, k.passed])
    for cs in cluster_summaries:
        rows.append(
            [
                cs["cluster"],
                cs["lambda"]["re"],
                cs["lambda"]["im"],
                cs["ell"],
                cs["sigma_min"],
                cs["gram_passed"],
                cs.get("kalman_rank", -1),
                cs.get("kalman_passed", False),
            ]
        )
    write_table(
        outdir / "ucp_report.txt",
        ["cluster", "re", "im", "ell", "sigma_min", "gram_pass", "kalman_rank", "kalman_pass"],
        rows,
        _meta(cfg),
    )
    failed = [cs["cluster"] for cs in cluster_summaries if not cs["gram_passed"]]
    summary = dict(
        _meta(cfg),
        N=arep.N,
        M=arep.M,
        K=arep.K,
        clusters=cluster_summaries,
        vacuous=bool(arep.N == 0),
        all_gram_passed=bool(all_gram),
        all_kalman_passed=bool(
            all(cs.get("kalman_passed", False) for cs in cluster_summaries)
        )
        if (arep.N > 0 and all_gram)
        else bool(arep.N == 0),
        failed_clusters=failed,
    )
    write_summary(outdir / "ucp_summary.json", summary)
    if failed:
        raise UncontrollableError(
            f"UCP Gram test failed for cluster(s) {failed}; see ucp_summary.json"
        )
    return summary


def run_carleman(cfg: RunConfig, outdir: Path) -> dict:
    grid = cfg.build_grid()
    regions = cfg.build_regions(grid)
    chi = build_cutoff(regions)
    psi = build_weight(regions)
    opts = cfg.carleman_options(regions)
    taus = opts["tau_list"]
    c2 = opts["tau2_bound"]
    if opts["calibrate_tau2"]:
        c2 = max(c2, calibrate_tau2_bound(psi, taus, opts["delta0"], opts["epsilon"]))
    rng = np.random.default_rng(cfg.seed)
    by_tau = {t: [] for t in taus}
    for _ in range(opts["n_fields"]):
        w = make_test_field(regions, rng)
        for t in taus:
            params = CarlemanParams.for_weight(
                t, psi, opts["delta0"], opts["epsilon"], c2
            )
            by_tau[t].append(integrated_inequality_check(w, psi, params))
    rows = []
    for t in taus:
        reps = by_tau[t]
        worst = min(r.margin for r in reps)
        rows.append(
            [
                t,
                float(np.mean([r.lhs_grad for r in reps])),
                float(np.mean([r.lhs_zero for r in reps])),
                float(np.mean([r.rhs_main for r in reps])),
                worst,
                all(r.passed for r in reps),
            ]
        )
    write_table(
        outdir / "carleman_sweep.txt",
        ["tau", "lhs_grad_mean", "lhs_zero_mean", "rhs_mean", "worst_margin", "pass"],
        rows,
        _meta(cfg),
    )
    tau0 = find_tau0(by_tau)
    summary = dict(
        _meta(cfg),
        rho=psi.rho,
        kgrad=psi.kgrad,
        delta0=opts["delta0"],
        epsilon=opts["epsilon"],
        tau2_bound=c2,
        tau_list=taus,
        n_fields=opts["n_fields"],
        tau0=tau0,
        all_pass=bool(all(r[5] for r in rows)),
        weight_sign_violations={
            "omega1": psi.sign_violations_omega1,
            "outer": psi.sign_violations_outer,
        },
    )
    write_summary(outdir / "carleman_summary.json", summary)
    return summary


def run_stabilize(cfg: RunConfig, outdir: Path) -> dict:
    grid, eq, A, rep, opts = _spectra(cfg)
    sopts = cfg.stabilize_options()
    regions = cfg.build_regions(grid)
    omega = regions.omega
    A_adj = assemble_adjoint(eq, cfg.sigma)
    arep = adjoint_spectrum(A_adj, opts["count"], opts["strategy"])
    rng = np.random.default_rng(cfg.seed)

    fwd = [p for p in rep.pairs if p.unstable]
    adj = [p for p in arep.pairs if p.unstable]
    summary = dict(_meta(cfg), N=rep.N, M=rep.M, K=rep.K, gamma=sopts["gamma"])

    if rep.N == 0:
        x0 = rng.normal(size=A.dim)
        y0 = A.to_state(x0 / np.linalg.norm(x0))
        trace = simulate_closed_loop(
            A, None, [], omega, y0, sopts["T"], sopts["dt"], None
        )
        rate, hw = measure_decay(trace, (sopts["T"] / 2, sopts["T"]))
        summary.update(mode="open_loop_stable", decay_rate=rate, rate_half_width=hw)
        _write_trace(outdir, trace, cfg)
        write_summary(outdir / "stabilize_summary.json", summary)
        return summary

    clusters = arep.unstable_clusters()
    if opts["degenerate_fixture"]:
        clusters = _degenerate_clusters(clusters, omega)
    proj = project_unstable(fwd, adj)
    actuators = select_actuators(clusters, omega, arep.K)
    km = kalman_rank(actuators, clusters, omega)
    if not all(k.passed for k in km):
        raise UncontrollableError(
            f"Kalman rank defect: {[(k.rank, k.ell) for k in km]}"
        )

    fields = control_fields(actuators, omega)
    Bmap = np.zeros((proj.N, len(fields)))
    for j, f in enumerate(fields):
        Bmap[:, j] = proj.coords(np.real(A.from_state(f)))
    lam_block = _real_block(proj.lambdas, proj, A)
    gain = synthesize_feedback(lam_block, Bmap, sopts["gamma"]) if sopts["gain_on"] else None

    x0 = 0.01 * rng.normal(size=A.dim) + proj.V @ np.ones(proj.N)
    y0 = A.to_state(x0)
    trace = simulate_closed_loop(
        A, gain, actuators, omega, y0, sopts["T"], sopts["dt"], proj
    )
    window = (sopts["T"] / 2, sopts["T"])
    rate, hw = measure_decay(trace, window)
    lam_next = rep.lambda_next_stable()
    target = min(sopts["gamma"], abs(lam_next.real)) if lam_next else sopts["gamma"]
    summary.update(
        mode="closed_loop" if sopts["gain_on"] else "open_loop",
        decay_rate=rate,
        rate_half_width=hw,
        energy_rate_target=2.0 * target,
        achieved_poles=[p.real for p in np.atleast_1d(gain.achieved_poles)] if gain else [],
        pairing_cond=proj.cond,
        control_support_leakage=trace.control_support_leakage,
        open_loop_growth=bool(trace.energies[-1] > trace.energies[0])
        if not sopts["gain_on"]
        else None,
    )
    _write_trace(outdir, trace, cfg)
    if gain is not None:
        write_table(
            outdir / "gain.txt",
            [f"c{j}" for j in range(gain.gain.shape[1])],
            [list(r) for r in gain.gain],
            _meta(cfg),
        )
    write_summary(outdir / "stabilize_summary.json", summary)
    return summary


def _real_block(lams: np.ndarray, proj, A) -> np.ndarray:
    """Unstable block in the real basis: diagonal for real spectra, else the
    projected operator itself."""
    if np.all(np.abs(np.imag(lams)) < 1e-10):
        return np.diag(np.real(lams))
    AV = np.column_stack([A.matvec(proj.V[:, j]) for j in range(proj.N)])
    import scipy.linalg as sla

    return np.real(sla.solve(proj.pairing, proj.W.T @ AV))


def _write_trace(outdir: Path, trace, cfg: RunConfig):
    K = trace.amplitudes.shape[1]
    rows = [
        [trace.times[k], trace.energies[k], trace.energies_unstable[k]]
        + list(trace.amplitudes[k])
        for k in range(len(trace.times))
    ]
    write_table(
        outdir / "trace.txt",
        ["t", "energy_total", "energy_unstable"] + [f"a{j}" for j in range(K)],
        rows,
        _meta(cfg),
    )


RUNNERS = {
    "spectrum": run_spectrum,
    "ucp": run_ucp,
    "carleman": run_carleman,
    "stabilize": run_stabilize,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhdlab",
        description="Spectral, continuation-rank, weighted-estimate and "
        "feedback pipelines for the linearized MHD laboratory.",
    )
    parser.add_argument(
        "command", choices=[*RUNNERS, "all"], help="pipeline stage to run"
    )
    parser.add_argument("--config", type=Path, default=None, help="JSON config path")
    parser.add_argument("--out", type=Path, default=Path("mhdlab_out"))
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument(
        "--tau-list",
        type=str,
        default=None,
        help="comma-separated absolute tau values (overrides the config grid)",
    )
    parser.add_argument("--gamma", type=float, default=None, help="override target decay")
    args = parser.parse_args(argv)

    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_dict()
        if args.seed is not None:
            cfg.raw["seed"] = int(args.seed)
        if args.tau_list is not None:
            try:
                taus = [float(t) for t in args.tau_list.split(",") if t.strip()]
            except ValueError as exc:
                raise ConfigurationError(f"bad --tau-list: {exc}") from exc
            cfg.raw["carleman"]["tau_grid"] = taus
            cfg.raw["carleman"]["tau_scale"] = "absolute"
        if args.gamma is not None:
            cfg.raw["stabilize"]["gamma"] = float(args.gamma)
        cfg.validate()
        outdir = args.out
        outdir.mkdir(parents=True, exist_ok=True)
        stages = list(RUNNERS) if args.command == "all" else [args.command]
        for stage in stages:
            summary = RUNNERS[stage](cfg, outdir)
            keyline = {
                k: summary[k]
                for k in ("N", "M", "K", "tau0", "decay_rate", "all_pass")
                if k in summary
            }
            print(f"[mhdlab] {stage}: ok {keyline}")
        return EXIT_OK
    except (ConfigurationError, GeometryError) as exc:
        return _fail(args.out, "config_error", exc, EXIT_CONFIG)
    except NumericalError as exc:
        return _fail(args.out, "numerical_error", exc, EXIT_NUMERICAL)
    except UncontrollableError as exc:
        return _fail(args.out, "uncontrollable", exc, EXIT_UNCONTROLLABLE)
    except MhdLabError as exc:
        return _fail(args.out, "error", exc, EXIT_OTHER)


def _fail(outdir: Path, kind: str, exc: Exception, code: int) -> int:
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        write_summary(
            outdir / "error.json",
            {
                "error_kind": kind,
                "message": str(exc),
                "detail": getattr(exc, "detail", {}),
                "version": __version__,
            },
        )
    except OSError:
        pass
    print(f"[mhdlab] {kind}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
