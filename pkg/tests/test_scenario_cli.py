import json
import math
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import ramanmem.pipeline as pipeline
from ramanmem.cli import main as cli_main
from ramanmem.plots import MissingArtifactError, emit_plots
from ramanmem.scenario import Scenario, ScenarioError, load_scenario


def base_scenario(**extra):
    data = {
        "seed": 424242,
        "state": {"squeeze_db": 1.6, "antisqueeze_db": 1.6, "angle_rad": 0.0,
                  "fwhm_ns": 227.2},
        "channel": {"eta": 0.642, "delta": 0.025, "alternative_eta": 0.80},
        "homodyne": {"trials": 24000, "bins": 24,
                     "drift": {"bandwidth_hz": 1e5, "sigma_rad": 0.05}},
        "tomography": {"cutoff": 12, "iterations": 80, "wigner_points": 31,
                       "wigner_range": 3.0},
        "outputs": {"directory": "unused", "formats": ["csv", "json", "svg"]},
    }
    data.update(extra)
    return data


def memory_section():
    return {
        "g_s": 3.0, "g_a": 0.3, "n_z": 48, "n_t": 48, "retrieval": "backward",
        "input_mode": {"center": 0.5, "fwhm": 0.25},
        "write_pulse": {"center": 0.5, "fwhm": 0.3, "peak": 1.0},
        "read_pulse": {"center": 0.35, "fwhm": 0.25, "peak": 1.0},
    }


def write_scenario(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestScenarioValidation:
    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ScenarioError, match="schema"):
            Scenario(base_scenario(bogus={"x": 1}))

    def test_unknown_nested_key_rejected(self):
        data = base_scenario()
        data["homodyne"]["unexpected"] = 3
        with pytest.raises(ScenarioError, match="schema"):
            Scenario(data)

    def test_seed_mandatory(self):
        data = base_scenario()
        del data["seed"]
        with pytest.raises(ScenarioError, match="seed"):
            Scenario(data)

    def test_missing_section_for_command(self):
        sc = Scenario(base_scenario())
        with pytest.raises(ScenarioError, match="memory"):
            sc.require("simulate-memory")

    def test_malformed_json_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="JSON"):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "nope.json")

    def test_seed_override(self, tmp_path):
        path = write_scenario(tmp_path, base_scenario())
        sc = load_scenario(path, seed_override=7)
        assert sc.seed == 7

    def test_unknown_command(self):
        sc = Scenario(base_scenario())
        with pytest.raises(ScenarioError, match="unknown command"):
            sc.require("frobnicate")


class TestRunScenario:
    def test_full_pipeline_report_and_manifest(self, tmp_path):
        sc = Scenario(base_scenario())
        out = tmp_path / "run"
        report = pipeline.run_scenario(sc, "full-pipeline", out)
        assert report.eta == 0.642
        assert report.delta_estimate == pytest.approx(0.025, abs=0.02)
        assert report.fidelity_gaussian == pytest.approx(0.9774, abs=1e-3)
        assert report.bandwidth_mhz == pytest.approx(4.4014, abs=1e-3)
        # the two channel-model numbers both appear
        labels = {row["label"]: row for row in report.notes["channel_model"]}
        assert labels["configured"]["output_squeeze_db"] == pytest.approx(0.82, abs=0.02)
        assert labels["alternative"]["output_squeeze_db"] == pytest.approx(1.09, abs=0.02)
        # every manifest entry exists on disk
        for name in report.manifest:
            assert (out / name).exists(), name
        persisted = json.loads((out / "report.json").read_text())
        assert "wall_clock_s" not in persisted
        assert (out / "run_info.json").exists()

    def test_reproducibility_byte_identical(self, tmp_path):
        sc = Scenario(base_scenario())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        pipeline.run_scenario(sc, "full-pipeline", out1)
        pipeline.run_scenario(sc, "full-pipeline", out2)
        compared = 0
        for f1 in sorted(out1.rglob("*")):
            if f1.is_dir() or f1.name == "run_info.json":
                continue
            if f1.suffix not in (".csv", ".json"):
                continue
            f2 = out2 / f1.relative_to(out1)
            assert f1.read_bytes() == f2.read_bytes(), f1.name
            compared += 1
        assert compared >= 6

    def test_seed_changes_results(self, tmp_path):
        a = pipeline.run_scenario(Scenario(base_scenario()), "estimate-channel",
                                  tmp_path / "a")
        b = pipeline.run_scenario(Scenario(base_scenario(seed=7)), "estimate-channel",
                                  tmp_path / "b")
        assert a.delta_estimate != b.delta_estimate

    def test_simulate_memory(self, tmp_path):
        sc = Scenario(base_scenario(memory=memory_section()))
        report = pipeline.run_scenario(sc, "simulate-memory", tmp_path / "m")
        assert 0 < report.eta < 1
        assert report.delta_estimate > 0
        assert report.notes["commutator_defect"] < 1e-10
        assert (tmp_path / "m" / "transfer_matrix.csv").exists()

    def test_full_pipeline_with_simulated_memory_channel(self, tmp_path):
        data = base_scenario(memory=memory_section())
        del data["channel"]
        data["homodyne"]["trials"] = 12000
        report = pipeline.run_scenario(Scenario(data), "full-pipeline", tmp_path / "m2")
        assert 0 < report.eta < 1
        assert report.fidelity_gaussian > 0.9

    def test_optimize_write(self, tmp_path):
        mem_cfg = memory_section()
        mem_cfg["de"] = {"bounds": {"tau0": [0.1, 0.9], "fwhm": [0.05, 0.8]},
                         "population": 12, "max_generations": 15}
        sc = Scenario(base_scenario(memory=mem_cfg))
        report = pipeline.run_scenario(sc, "optimize-write", tmp_path / "o")
        best = json.loads((tmp_path / "o" / "best_genes.json").read_text())
        assert best["write_efficiency"] >= best["signal_matched_baseline"] - 1e-9
        hist = (tmp_path / "o" / "de_history.csv").read_text().splitlines()
        assert hist[1].startswith("generation,best_fitness")

    def test_simulate_homodyne_with_datasets(self, tmp_path):
        data = base_scenario()
        data["homodyne"]["trials"] = 4000
        report = pipeline.run_scenario(Scenario(data), "simulate-homodyne",
                                       tmp_path / "h")
        assert (tmp_path / "h" / "dataset_input" / "arrays.npz").exists()
        assert (tmp_path / "h" / "dataset_output" / "metadata.json").exists()
        assert report.input_squeeze_db == pytest.approx(1.6, abs=0.5)

    def test_tomography_command(self, tmp_path):
        data = base_scenario()
        data["homodyne"]["trials"] = 20000
        report = pipeline.run_scenario(Scenario(data), "tomography", tmp_path / "t")
        assert report.fidelity_fock is not None
        assert (tmp_path / "t" / "rho_input.json").exists()
        assert (tmp_path / "t" / "wigner_output.csv").exists()

    def test_sweep_bandwidth(self, tmp_path, channel_table):
        sc = Scenario(base_scenario(sweep_bandwidth={
            "rows": channel_table,
            "antisqueeze_scan_db": [1.0, 2.0, 3.0],
        }))
        report = pipeline.run_scenario(sc, "sweep-bandwidth", tmp_path / "bw")
        assert report.notes["n_bandwidths"] == 8
        assert report.notes["min_fidelity"] >= 0.92
        lines = (tmp_path / "bw" / "bandwidth_table.csv").read_text().splitlines()
        header = lines[1].split(",")
        nominal = [dict(zip(header, r.split(","))) for r in lines[2:]
                   if ",nominal," in r]
        assert len(nominal) == 8
        s_in = np.array([float(r["squeeze_in_db"]) for r in nominal])
        s_out = np.array([float(r["squeeze_out_db"]) for r in nominal])
        # channel only degrades squeezing, and outputs track the input trend
        assert np.all(s_out < s_in)
        from scipy.stats import spearmanr
        assert spearmanr(s_in, s_out).statistic >= 0.5
        # the largest-bandwidth row reproduces the reported output window
        assert 0.50 <= s_out[-1] <= 0.62

    def test_sweep_read_power(self, tmp_path):
        sc = Scenario(base_scenario(memory=memory_section(),
                                    sweep_read_power={"powers": [0.5, 1.0, 2.0]}))
        report = pipeline.run_scenario(sc, "sweep-read-power", tmp_path / "rp")
        lines = (tmp_path / "rp" / "read_power_sweep.csv").read_text().splitlines()
        assert len(lines) == 5
        assert report.notes["max_eta_backward"] > report.notes["max_eta_forward"]

    def test_failure_leaves_no_artifacts(self, tmp_path, monkeypatch):
        sc = Scenario(base_scenario())

        def boom(*args, **kwargs):
            raise pipeline.EstimationError("forced failure")

        monkeypatch.setattr(pipeline, "_cmd_full_pipeline", boom)
        monkeypatch.setitem(pipeline._COMMANDS, "full-pipeline", boom)
        out = tmp_path / "fail"
        with pytest.raises(pipeline.EstimationError):
            pipeline.run_scenario(sc, "full-pipeline", out)
        leftovers = [p for p in out.rglob("*") if p.is_file()]
        assert leftovers == []

    def test_output_lock(self, tmp_path):
        sc = Scenario(base_scenario())
        out = tmp_path / "locked"
        out.mkdir()
        (out / ".ramanmem.lock").write_text("999999")
        with pytest.raises(RuntimeError, match="locked"):
            pipeline.run_scenario(sc, "estimate-channel", out)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("plots") / "run"
    data = base_scenario()
    data["homodyne"]["trials"] = 16000
    pipeline.run_scenario(Scenario(data), "full-pipeline", out)
    return out


class TestPlots:

    def test_variance_plot_written_and_valid_svg(self, pipeline_run):
        written = emit_plots(pipeline_run, ["variance_curves.csv"])
        assert "variance_vs_phase.svg" in written
        tree = ET.parse(pipeline_run / "variance_vs_phase.svg")
        assert tree.getroot().tag.endswith("svg")

    def test_missing_artifact_named(self, tmp_path):
        with pytest.raises(MissingArtifactError, match="read_power_sweep.csv"):
            emit_plots(tmp_path, ["read_power_sweep.csv"])

    def test_empty_directory_reports_candidates(self, tmp_path):
        with pytest.raises(MissingArtifactError, match="variance_curves.csv"):
            emit_plots(tmp_path)

    def test_svg_determinism(self, pipeline_run):
        emit_plots(pipeline_run, ["variance_curves.csv"])
        first = (pipeline_run / "variance_vs_phase.svg").read_bytes()
        emit_plots(pipeline_run, ["variance_curves.csv"])
        second = (pipeline_run / "variance_vs_phase.svg").read_bytes()
        assert first == second

    def test_vacuum_wigner_contour_symmetry(self, tmp_path):
        data = base_scenario()
        data["state"] = {"squeeze_db": 0.0}
        data["homodyne"]["trials"] = 30000
        del data["channel"]
        out = tmp_path / "vac"
        pipeline.run_scenario(Scenario(data), "tomography", out)
        emit_plots(out, ["wigner_input.csv"])
        rows = [r.split(",") for r in
                (out / "wigner_input.csv").read_text().splitlines()[2:]]
        xs = np.array([float(r[0]) for r in rows])
        ps = np.array([float(r[1]) for r in rows])
        w = np.array([float(r[2]) for r in rows])
        n = int(round(math.sqrt(len(rows))))
        grid = w.reshape(n, n)
        axis = np.unique(xs)
        # half-maximum contour radius along both axes and both diagonals
        level = grid.max() / 2.0
        center = n // 2
        radii = []
        for profile, scale in ((grid[center, :], 1.0), (grid[:, center], 1.0),
                               (np.diag(grid), math.sqrt(2.0)),
                               (np.diag(np.fliplr(grid)), math.sqrt(2.0))):
            half = profile[center:]
            k = np.nonzero(half < level)[0][0]
            x0, x1 = axis[center + k - 1] - axis[center], axis[center + k] - axis[center]
            w0, w1 = half[k - 1], half[k]
            radii.append(scale * (x0 + (w0 - level) / (w0 - w1) * (x1 - x0)))
        radii = np.asarray(radii)
        assert radii.max() / radii.min() - 1.0 < 0.02

    def test_bandwidth_plots_span_all_rows(self, tmp_path, channel_table):
        sc = Scenario(base_scenario(sweep_bandwidth={
            "rows": channel_table, "antisqueeze_scan_db": [2.0]}))
        out = tmp_path / "bw"
        pipeline.run_scenario(sc, "sweep-bandwidth", out)
        written = emit_plots(out, ["bandwidth_table.csv"])
        assert set(written) == {"squeezing_vs_bandwidth.svg", "fidelity_vs_bandwidth.svg"}
        svg = (out / "fidelity_vs_bandwidth.svg").read_text()
        assert svg.startswith("<?xml")


class TestCliInterface:
    def test_schema_error_exit_code_and_no_artifacts(self, tmp_path):
        bad = write_scenario(tmp_path, {"seed": 1, "bogus": {}}, "bad.json")
        out = tmp_path / "out"
        code = cli_main(["--scenario", str(bad), "--command", "full-pipeline",
                         "--out", str(out)])
        assert code == 2
        assert not out.exists() or not any(out.iterdir())

    def test_missing_sections_is_schema_error(self, tmp_path):
        path = write_scenario(tmp_path, {"seed": 1})
        code = cli_main(["--scenario", str(path), "--command", "full-pipeline",
                         "--out", str(tmp_path / "o")])
        assert code == 2

    def test_successful_run_exit_zero(self, tmp_path):
        data = base_scenario()
        data["homodyne"]["trials"] = 6000
        data["tomography"]["iterations"] = 30
        path = write_scenario(tmp_path, data)
        out = tmp_path / "ok"
        code = cli_main(["--scenario", str(path), "--command", "estimate-channel",
                         "--out", str(out)])
        assert code == 0
        assert (out / "report.json").exists()

    def test_seed_override_changes_artifacts(self, tmp_path):
        data = base_scenario()
        data["homodyne"]["trials"] = 6000
        path = write_scenario(tmp_path, data)
        outs = []
        for seed, name in ((None, "s1"), (99, "s2")):
            args = ["--scenario", str(path), "--command", "estimate-channel",
                    "--out", str(tmp_path / name)]
            if seed is not None:
                args += ["--seed-override", str(seed)]
            assert cli_main(args) == 0
            outs.append(json.loads((tmp_path / name / "report.json").read_text()))
        assert outs[0]["delta_estimate"] != outs[1]["delta_estimate"]
        assert outs[1]["seed"] == 99

    def test_solver_error_exit_code(self, tmp_path):
        mem_cfg = {
            "g_s": 8.0, "n_z": 16, "n_t": 16, "check_convergence": True,
            "input_mode": {"center": 0.45, "fwhm": 0.07},
            "write_pulse": {"center": 0.5, "fwhm": 0.06},
            "read_pulse": {"center": 0.35, "fwhm": 0.25},
        }
        path = write_scenario(tmp_path, base_scenario(memory=mem_cfg))
        out = tmp_path / "sv"
        code = cli_main(["--scenario", str(path), "--command", "simulate-memory",
                         "--out", str(out)])
        assert code == 3
        assert not (out / "report.json").exists()

    def test_estimation_error_exit_code(self, tmp_path, monkeypatch):
        def boom(sc, command, out_dir):
            raise pipeline.EstimationError("forced")

        import ramanmem.cli as cli_mod
        monkeypatch.setattr(cli_mod, "run_scenario", boom)
        path = write_scenario(tmp_path, base_scenario())
        code = cli_main(["--scenario", str(path), "--command", "estimate-channel",
                         "--out", str(tmp_path / "ee")])
        assert code == 4

    def test_threads_flag_validated(self, tmp_path):
        path = write_scenario(tmp_path, base_scenario())
        code = cli_main(["--scenario", str(path), "--command", "estimate-channel",
                         "--out", str(tmp_path / "x"), "--threads", "0"])
        assert code == 2

    def test_env_var_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RAMANMEM_OUT_ROOT", str(tmp_path / "root"))
        data = base_scenario()
        data["homodyne"]["trials"] = 6000
        data["outputs"] = {"directory": "sub/run"}
        path = write_scenario(tmp_path, data)
        code = cli_main(["--scenario", str(path), "--command", "estimate-channel"])
        assert code == 0
        assert (tmp_path / "root" / "sub" / "run" / "report.json").exists()

    def test_module_entry_point(self, tmp_path):
        data = base_scenario()
        data["homodyne"]["trials"] = 6000
        path = write_scenario(tmp_path, data)
        proc = subprocess.run(
            [sys.executable, "-m", "ramanmem.cli", "--scenario", str(path),
             "--command", "estimate-channel", "--out", str(tmp_path / "sp")],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "artifacts" in proc.stdout

    def test_emit_plots_command(self, tmp_path):
        data = base_scenario()
        data["homodyne"]["trials"] = 6000
        path = write_scenario(tmp_path, data)
        out = tmp_path / "p"
        assert cli_main(["--scenario", str(path), "--command", "estimate-channel",
                         "--out", str(out)]) == 0
        code = cli_main(["--scenario", str(path), "--command", "emit-plots",
                         "--out", str(out)])
        assert code == 0
        assert (out / "variance_vs_phase.svg").exists()
