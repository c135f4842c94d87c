import json
import subprocess
import sys

import numpy as np
import pytest

from mhdlab.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_UNCONTROLLABLE,
    main,
    run_carleman,
    run_spectrum,
    run_stabilize,
    run_ucp,
)
from mhdlab.config import DEFAULT_CONFIG, RunConfig
from mhdlab.errors import UncontrollableError

FAST_SPECTRAL = {"spectral": {"count": 10, "strategy": "shift_invert"}}


def _cfg(**over):
    base = {}
    for block in over:
        base[block] = over[block]
    return RunConfig.from_dict(base)


class TestRunSpectrum:
    def test_stable_config_has_no_unstable_modes(self, tmp_path):
        cfg = _cfg(physics={"sigma": 0.0}, **FAST_SPECTRAL)
        summary = run_spectrum(cfg, tmp_path)
        assert summary["N"] == 0
        assert (tmp_path / "spectrum.txt").exists()
        data = json.loads((tmp_path / "spectrum_summary.json").read_text())
        assert data["N"] == 0
        assert data["config_hash"] == cfg.hash

    def test_shifted_config_matches_fourier_count(self, tmp_path):
        cfg = _cfg(physics={"sigma": 1.5}, **FAST_SPECTRAL)
        summary = run_spectrum(cfg, tmp_path)
        # sigma - |k|^2 >= 0 only for |k|^2 = 1: four wavevectors, two fields
        assert summary["N"] == 8

    def test_malformed_config_file_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["spectrum", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG
        err = json.loads((tmp_path / "o" / "error.json").read_text())
        assert err["error_kind"] == "config_error"


class TestRunUcp:
    def test_vacuous_pass_when_stable(self, tmp_path):
        cfg = _cfg(physics={"sigma": 0.0}, **FAST_SPECTRAL)
        summary = run_ucp(cfg, tmp_path)
        assert summary["vacuous"] is True
        assert summary["all_kalman_passed"] is True

    def test_standard_box_full_rank(self, tmp_path):
        cfg = _cfg(physics={"sigma": 1.5}, **FAST_SPECTRAL)
        summary = run_ucp(cfg, tmp_path)
        assert summary["all_gram_passed"] and summary["all_kalman_passed"]
        for cl in summary["clusters"]:
            assert cl["kalman_rank"] == cl["ell"]

    def test_degenerate_fixture_fails_with_cluster_id(self, tmp_path):
        cfg = _cfg(
            physics={"sigma": 1.5},
            spectral={"count": 10, "strategy": "shift_invert", "degenerate_fixture": True},
        )
        with pytest.raises(UncontrollableError):
            run_ucp(cfg, tmp_path)
        data = json.loads((tmp_path / "ucp_summary.json").read_text())
        assert data["failed_clusters"] == [0]

    def test_cli_exit_uncontrollable(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(
            json.dumps(
                {
                    "physics": {"sigma": 1.5},
                    "spectral": {"count": 10, "strategy": "shift_invert", "degenerate_fixture": True},
                }
            )
        )
        code = main(["ucp", "--config", str(cfgfile), "--out", str(tmp_path / "o")])
        assert code == EXIT_UNCONTROLLABLE


class TestRunCarleman:
    def test_default_sweep_records_tau0(self, tmp_path):
        cfg = _cfg(carleman={"n_fields": 5})
        summary = run_carleman(cfg, tmp_path)
        assert summary["tau0"] is not None
        assert summary["all_pass"]
        table = (tmp_path / "carleman_sweep.txt").read_text().splitlines()
        n_taus = len(cfg.carleman_options(cfg.build_regions())["tau_list"])
        assert len([l for l in table if not l.startswith("#")]) == n_taus

    def test_empty_tau_list_is_config_error(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"carleman": {"tau_grid": []}}))
        code = main(["carleman", "--config", str(cfgfile), "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG

    def test_calibrated_correction_recorded(self, tmp_path):
        cfg = _cfg(carleman={"n_fields": 3, "tau_grid": [1.0, 4.0], "calibrate_tau2": True})
        summary = run_carleman(cfg, tmp_path)
        assert summary["tau2_bound"] >= 0.0

    def test_tau_list_flag_overrides(self, tmp_path):
        code = main(
            [
                "carleman",
                "--out",
                str(tmp_path),
                "--tau-list",
                "1.0,2.0",
                "--seed",
                "7",
            ]
        )
        assert code == EXIT_OK
        data = json.loads((tmp_path / "carleman_summary.json").read_text())
        assert data["tau_list"] == [1.0, 2.0]


STAB_GEOM = {
    "Ly": float(np.pi),
    "ny": 24,
    "nx": 24,
    "omega": {"radius_frac": 0.08},
    "omega1_width_frac": 0.05,
    "omega_star_width_frac": 0.10,
}


class TestRunStabilize:
    def test_closed_loop_summary(self, tmp_path):
        cfg = _cfg(geometry=STAB_GEOM, physics={"sigma": 1.5}, **FAST_SPECTRAL)
        summary = run_stabilize(cfg, tmp_path)
        assert summary["N"] == 4
        assert max(summary["achieved_poles"]) <= -1.0 + 1e-8
        target = summary["energy_rate_target"]
        assert abs(summary["decay_rate"] - target) <= 0.15 * target
        assert (tmp_path / "trace.txt").exists()
        assert (tmp_path / "gain.txt").exists()

    def test_gain_off_documents_growth(self, tmp_path):
        cfg = _cfg(
            geometry=STAB_GEOM,
            physics={"sigma": 1.5},
            stabilize={"gain_on": False, "T": 2.0},
            **FAST_SPECTRAL,
        )
        summary = run_stabilize(cfg, tmp_path)
        assert summary["mode"] == "open_loop"
        assert summary["open_loop_growth"] is True

    def test_gamma_flag_overrides_target(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(
            json.dumps(
                {
                    "geometry": STAB_GEOM,
                    "physics": {"sigma": 1.5},
                    "spectral": {"count": 10, "strategy": "shift_invert"},
                    "stabilize": {"T": 4.0},
                }
            )
        )
        out = tmp_path / "o"
        code = main(
            ["stabilize", "--config", str(cfgfile), "--out", str(out), "--gamma", "1.4"]
        )
        assert code == EXIT_OK
        data = json.loads((out / "stabilize_summary.json").read_text())
        assert data["gamma"] == 1.4
        assert max(data["achieved_poles"]) <= -1.4 + 1e-8

    def test_rank_failure_fixture_uncontrollable(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(
            json.dumps(
                {
                    "geometry": STAB_GEOM,
                    "physics": {"sigma": 1.5},
                    "spectral": {
                        "count": 10,
                        "strategy": "shift_invert",
                        "degenerate_fixture": True,
                    },
                }
            )
        )
        code = main(["stabilize", "--config", str(cfgfile), "--out", str(tmp_path / "o")])
        assert code == EXIT_UNCONTROLLABLE


class TestDeterminism:
    def test_identical_config_and_seed_byte_identical(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(
            json.dumps(
                {
                    "carleman": {"n_fields": 3, "tau_grid": [1.0, 2.0, 4.0]},
                    "spectral": {"count": 10, "strategy": "shift_invert"},
                }
            )
        )
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            code = main(["carleman", "--config", str(cfgfile), "--out", str(out)])
            assert code == EXIT_OK
            code = main(["spectrum", "--config", str(cfgfile), "--out", str(out)])
            assert code == EXIT_OK
            outs.append(out)
        for name in ("carleman_sweep.txt", "carleman_summary.json", "spectrum.txt"):
            a = (outs[0] / name).read_bytes()
            b = (outs[1] / name).read_bytes()
            assert a == b, name

    def test_reports_embed_hash_and_version(self, tmp_path):
        cfg = _cfg(carleman={"n_fields": 2, "tau_grid": [1.0]})
        summary = run_carleman(cfg, tmp_path)
        from mhdlab import __version__

        assert summary["version"] == __version__
        head = (tmp_path / "carleman_sweep.txt").read_text().splitlines()[:2]
        assert any(cfg.hash in line for line in head)


def test_all_subcommand_runs_every_stage(tmp_path):
    # the default square box supports every stage; keep the horizon short
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(
        json.dumps(
            {
                "spectral": {"count": 12, "strategy": "shift_invert"},
                "carleman": {"n_fields": 3, "tau_grid": [1.0, 4.0, 16.0]},
                "stabilize": {"T": 3.0},
            }
        )
    )
    out = tmp_path / "o"
    code = main(["all", "--config", str(cfgfile), "--out", str(out)])
    assert code == EXIT_OK
    for name in (
        "spectrum_summary.json",
        "ucp_summary.json",
        "carleman_summary.json",
        "stabilize_summary.json",
    ):
        assert (out / name).exists(), name


def test_console_entry_point(tmp_path):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({"spectral": {"count": 8, "strategy": "shift_invert"}}))
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "mhdlab",
            "spectrum",
            "--config",
            str(cfgfile),
            "--out",
            str(tmp_path / "o"),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "spectrum: ok" in proc.stdout


def test_default_config_validates():
    RunConfig.from_dict().validate()
    assert "geometry" in DEFAULT_CONFIG
