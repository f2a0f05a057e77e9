import csv
import json

import numpy as np
import pytest
import yaml

from adjprec.cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_OK,
    ConfigError,
    load_config,
    main,
)


TOY_MODEL = dict(N=8, l=1.0, c=3.0, a=1.0, rho=1.0, c_v=2.0, sigma_coef=1.0,
                 T_drive=2.0, T_init=0.5, drive=False)


def write_config(path, **sections):
    base = {
        "model": dict(TOY_MODEL),
        "integration": {"dt": 0.01, "t_f": 0.1},
        "optimization": {"perturbation": {"center": 0.5, "width": 0.1,
                                          "amplitude": 0.2}},
        "output": {},
    }
    for k, v in sections.items():
        base[k].update(v)
    path.write_text(yaml.safe_dump(base))
    return path


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestLoadConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.model.N == 100
        assert cfg.integration.dt == 5e-13
        assert cfg.optimization.gamma == 0.1

    def test_unknown_top_level_key(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("modle: {}\n")
        with pytest.raises(ConfigError, match="config"):
            load_config(p)

    def test_unknown_nested_key_reports_location(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("integration:\n  dt: 0.01\n  dtmax: 1.0\n")
        with pytest.raises(ConfigError, match="config.integration"):
            load_config(p)

    def test_invalid_value_reports_section(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("model:\n  N: 1\n")
        with pytest.raises(ConfigError, match="config.model"):
            load_config(p)


class TestForward:
    def test_snapshots_and_summary(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml",
                           output={"snapshot_times": [0.0, 0.05, 0.1]})
        out = tmp_path / "out"
        assert main(["forward", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["K"] == 10 and summary["schema_version"] == 1
        assert len(summary["snapshots"]) == 3
        header, rows = read_csv(out / summary["snapshots"][0]["file"])
        assert header == ["x", "E", "T"]
        assert len(rows) == TOY_MODEL["N"]

    def test_equilibrium_snapshots_identical(self, tmp_path):
        # undriven equilibrium start: every snapshot equals the initial state
        cfg = write_config(tmp_path / "c.yaml",
                           output={"snapshot_times": [0.0, 0.1]})
        out = tmp_path / "out"
        assert main(["forward", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        _, first = read_csv(out / "snapshot_000000.csv")
        _, last = read_csv(out / "snapshot_000010.csv")
        a = np.array(first, dtype=float)
        b = np.array(last, dtype=float)
        assert np.allclose(a, b, rtol=1e-9)

    def test_off_grid_snapshot_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml",
                           output={"snapshot_times": [0.005]})
        out = tmp_path / "out"
        assert main(["forward", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG


class TestGradCheck:
    def test_passes_on_toy_problem(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml")
        out = tmp_path / "out"
        rc = main(["grad-check", "--config", str(cfg), "--out", str(out),
                   "--seed", "1"])
        assert rc == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["passed"] is True
        assert summary["drift_induced"] <= 1e-10
        assert summary["drift_naive"] > summary["drift_induced"]

    def test_deterministic_for_seed(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml")
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["grad-check", "--config", str(cfg), "--out", str(out),
                  "--seed", "7"])
            outs.append((out / "summary.json").read_text())
        assert outs[0] == outs[1]


class TestInvert:
    def test_zero_perturbation_converges(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml",
                           optimization={"perturbation": {"center": 0.5,
                                                          "width": 0.1,
                                                          "amplitude": 0.0},
                                         "projection": "e_coordinate"})
        out = tmp_path / "out"
        assert main(["invert", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["outcome"] == "converged"
        header, rows = read_csv(out / "history.csv")
        assert header == ["iter", "C_E", "C_T", "grad_norm_E", "grad_norm_T", "wall_s"]
        assert float(rows[0][1]) == 0.0
        for name in ("recon_initial.csv", "true_initial.csv", "final_compare.csv"):
            assert (out / name).exists()

    def test_divergence_exit_code_under_strict(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml",
                           optimization={"gamma": 1e8,
                                         "perturbation": {"center": 0.5,
                                                          "width": 0.1,
                                                          "amplitude": 0.3},
                                         "projection": "e_coordinate"})
        out = tmp_path / "out"
        assert main(["invert", "--config", str(cfg), "--out", str(out),
                     "--strict"]) == EXIT_DIVERGED
        assert main(["invert", "--config", str(cfg), "--out", str(out)]) == EXIT_OK

    def test_scale_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml",
                           optimization={"perturbation": {"center": 0.5,
                                                          "width": 0.1,
                                                          "amplitude": 0.0}})
        out = tmp_path / "out"
        assert main(["invert", "--config", str(cfg), "--out", str(out),
                     "--scale", "100.0"]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["scale_y"] == 100.0

    def test_negative_scale_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml")
        assert main(["invert", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--scale", "-1.0"]) == EXIT_CONFIG


class TestSweep:
    def test_two_entry_sweep(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml",
                           optimization={"perturbation": {"center": 0.5,
                                                          "width": 0.1,
                                                          "amplitude": 0.0},
                                         "sweep": [
                                             {"scale_x": 1.0, "scale_y": 1.0},
                                             {"scale_x": 1.0, "scale_y": 1e3},
                                         ]})
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out / "sweep.csv")
        assert header[:4] == ["scale_x", "scale_y", "outcome", "iterations"]
        assert len(rows) == 2
        for row in rows:
            assert (out / row[6] / "history.csv").exists()

    def test_empty_sweep_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", optimization={"sweep": []})
        assert main(["sweep", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_default_sweep_has_five_entries(self):
        cfg = load_config(None)
        assert [e["scale_y"] for e in cfg.optimization.sweep] == \
            [1.0, 1e3, 1e6, 1e9, 1e12]

    def test_parallel_matches_serial(self, tmp_path):
        opt = {"perturbation": {"center": 0.5, "width": 0.1, "amplitude": 0.0},
               "sweep": [{"scale_x": 1.0, "scale_y": 1.0},
                         {"scale_x": 1.0, "scale_y": 10.0}]}
        cfg = write_config(tmp_path / "c.yaml", optimization=opt)
        out1, out2 = tmp_path / "serial", tmp_path / "par"
        assert main(["sweep", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
        assert main(["sweep", "--config", str(cfg), "--out", str(out2),
                     "--workers", "2"]) == EXIT_OK
        assert (out1 / "sweep.csv").read_text() == (out2 / "sweep.csv").read_text()


class TestMainErrors:
    def test_missing_config_file(self, tmp_path):
        assert main(["forward", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_bad_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("model: [unclosed\n")
        assert main(["forward", "--config", str(p),
                     "--out", str(tmp_path / "o")]) == EXIT_CONFIG
