import json

import pytest

from hirul.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from hirul.montecarlo import CampaignTable

from conftest import FIXTURES


def _config(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def _run(tmp_path, *argv, out="out"):
    d = tmp_path / out
    return main([*argv, "--out", str(d)]), d


SMALL_MC = {"sampling": {"n_samples": 40, "soc_max_range": [0.6, 1.0], "soc_min_range": [0.0, 0.0],
                         "i_charge_range": [1.0, 2.0], "i_discharge_range": [1.0, 5.0],
                         "initial_efc_range": [500.0, 500.0], "current_unit": "C"}}


class TestCycleSim:
    def test_calibration_cell(self, tmp_path):
        cfg = _config(tmp_path, {"soc_min": 0.0, "soc_max": 1.0, "i_charge": 1.0, "i_discharge": 1.0,
                                 "current_unit": "C"})
        code, out = _run(tmp_path, "cycle-sim", "--config", cfg)
        assert code == EXIT_OK
        rul = json.loads((out / "rul.json").read_text())
        assert rul["efc_cycled"] == pytest.approx(1000.0, abs=1.0)
        assert rul["initial_hi"] == 1.0

    def test_dead_cell_is_runtime_error(self, tmp_path, capsys):
        cfg = _config(tmp_path, {"initial_efc": 1000.0, "initial_capacity": 1.8})
        code, _ = _run(tmp_path, "cycle-sim", "--config", cfg)
        assert code == EXIT_RUNTIME
        assert "AlreadyDead" in capsys.readouterr().err

    def test_rerun_identical(self, tmp_path):
        cfg = _config(tmp_path, {"soc_max": 0.9, "i_charge": 3.0, "i_discharge": 6.0, "initial_efc": 300})
        _, a = _run(tmp_path, "cycle-sim", "--config", cfg, out="a")
        _, b = _run(tmp_path, "cycle-sim", "--config", cfg, out="b")
        for name in ("rul.json",):
            ja, jb = json.loads((a / name).read_text()), json.loads((b / name).read_text())
            assert ja == jb

    @pytest.mark.parametrize("body", ["{not json", json.dumps({"soc_min": 0.9, "soc_max": 0.1})])
    def test_bad_config(self, tmp_path, body):
        p = tmp_path / "bad.json"
        p.write_text(body)
        code, _ = _run(tmp_path, "cycle-sim", "--config", str(p))
        assert code == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        code, _ = _run(tmp_path, "cycle-sim", "--config", str(tmp_path / "nope.json"))
        assert code == EXIT_CONFIG


class TestMc:
    def test_manifest_first_and_hash_comment(self, tmp_path):
        code, out = _run(tmp_path, "mc", "--config", _config(tmp_path, SMALL_MC))
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "mc"
        assert set(manifest["input_hashes"]) == {"config"}
        csv = (out / "campaign.csv").read_text()
        assert csv.splitlines()[0] == f"# manifest: {manifest['manifest_hash']}"
        assert (out / "manifest.json").stat().st_mtime_ns <= (out / "campaign.csv").stat().st_mtime_ns
        assert len(CampaignTable.from_csv(csv)) == 40

    def test_threads_do_not_change_bytes(self, tmp_path):
        cfg = _config(tmp_path, SMALL_MC)
        _, a = _run(tmp_path, "mc", "--config", cfg, "--threads", "1", out="a")
        _, b = _run(tmp_path, "mc", "--config", cfg, "--threads", "4", out="b")
        assert (a / "campaign.csv").read_bytes() == (b / "campaign.csv").read_bytes()

    def test_seed_changes_output(self, tmp_path):
        cfg = _config(tmp_path, SMALL_MC)
        _, a = _run(tmp_path, "mc", "--config", cfg, "--seed", "1", out="a")
        _, b = _run(tmp_path, "mc", "--config", cfg, "--seed", "2", out="b")
        assert (a / "campaign.csv").read_bytes() != (b / "campaign.csv").read_bytes()

    def test_preset_soc_min_zero(self, tmp_path):
        code, out = _run(tmp_path, "mc", "--preset", "fig3", "--n-samples", "30")
        assert code == EXIT_OK
        table = CampaignTable.from_csv((out / "campaign.csv").read_text())
        assert len(table) == 30
        assert (table["soc_min"] == 0).all()

    @pytest.mark.parametrize("argv", [
        ["--preset", "fig2", "--n-samples", "0"],
        ["--preset", "nope"],
        ["--seed", "-1", "--preset", "fig2"],
        ["--threads", "0", "--preset", "fig2"],
        [],
    ])
    def test_config_errors(self, tmp_path, argv):
        code, _ = _run(tmp_path, "mc", *argv)
        assert code == EXIT_CONFIG

    def test_dead_population_is_runtime_error(self, tmp_path):
        cfg = dict(SMALL_MC)
        cfg["sampling"] = dict(SMALL_MC["sampling"], initial_efc_range=[1000.0, 1000.0])
        code, _ = _run(tmp_path, "mc", "--config", _config(tmp_path, cfg))
        assert code == EXIT_RUNTIME


@pytest.fixture(scope="module")
def campaign_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("campaign")
    cfg = d / "cfg.json"
    sampling = dict(SMALL_MC["sampling"], n_samples=300)
    cfg.write_text(json.dumps({"sampling": sampling}))
    assert main(["mc", "--config", str(cfg), "--out", str(d), "--threads", "2"]) == EXIT_OK
    return d / "campaign.csv"


class TestAnalyze:
    def test_outputs(self, tmp_path, campaign_csv):
        code, out = _run(tmp_path, "analyze", str(campaign_csv))
        assert code == EXIT_OK
        lines = (out / "correlation.csv").read_text().splitlines()
        assert lines[0].startswith("# manifest: ")
        assert [ln.split(",")[0] for ln in lines[2:]] == ["v_max", "v_min", "delta_v"]
        surf = json.loads((out / "surface.json").read_text())
        assert surf["response"] == "ln_rul"
        assert (out / "family.json").exists()

    def test_too_few_rows(self, tmp_path, campaign_csv):
        text = campaign_csv.read_text().splitlines()
        short = tmp_path / "short.csv"
        short.write_text("\n".join(text[:4]) + "\n")
        code, _ = _run(tmp_path, "analyze", str(short))
        assert code == EXIT_CONFIG

    def test_missing_campaign(self, tmp_path):
        code, _ = _run(tmp_path, "analyze", str(tmp_path / "absent.csv"))
        assert code == EXIT_CONFIG


class TestBox:
    def test_from_family(self, tmp_path, campaign_csv):
        _, an = _run(tmp_path, "analyze", str(campaign_csv), out="an")
        code, out = _run(tmp_path, "box", "--family", str(an / "family.json"), "--t-hours", "100")
        assert code == EXIT_OK
        box = json.loads((out / "box.json").read_text())
        assert box["status"] in ("feasible", "infeasible")
        assert (out / "contour.csv").read_text().startswith("# manifest: ")

    def test_unattainable_target_is_a_result(self, tmp_path, campaign_csv, capsys):
        _, an = _run(tmp_path, "analyze", str(campaign_csv), out="an")
        code, out = _run(tmp_path, "box", "--family", str(an / "family.json"), "--t-hours", "1e6")
        assert code == EXIT_OK
        box = json.loads((out / "box.json").read_text())
        assert box["status"] == "infeasible"
        assert box["grid_constraints"] is None
        assert "infeasible" in capsys.readouterr().out

    def test_needs_a_source(self, tmp_path):
        code, _ = _run(tmp_path, "box")
        assert code == EXIT_CONFIG

    def test_older_cell_gets_smaller_box(self, tmp_path):
        sizes = []
        for efc in (100, 700):
            code, out = _run(tmp_path, "box", "--efc", str(efc), "--n-samples", "1500", "--threads", "4",
                             out=f"efc{efc}")
            assert code == EXIT_OK
            sizes.append(json.loads((out / "box.json").read_text())["i_length"])
        assert sizes[1] < sizes[0]


class TestOpf:
    def test_malformed_case(self, tmp_path, capsys):
        bad = tmp_path / "bad.m"
        bad.write_text((FIXTURES / "two_bus.m").read_text().replace("\t0.1\t", "\t0.1x\t", 1))
        cfg = _config(tmp_path, {"experiment": {"size_batteries": False, "batteries": []}})
        code, _ = _run(tmp_path, "opf", "--case", str(bad), "--config", cfg)
        assert code == EXIT_CONFIG
        assert "ParseError" in capsys.readouterr().err

    def test_case2_without_boxes(self, tmp_path, capsys):
        cfg = _config(tmp_path, {"experiment": {"size_batteries": False,
                                                "batteries": [{"bus": 36, "initial_efc": 100}]}})
        code, _ = _run(tmp_path, "opf", "--config", cfg, "--mode", "case2")
        assert code == EXIT_CONFIG
        assert "MissingConstraints" in capsys.readouterr().err

    def test_small_case_outputs(self, tmp_path):
        cfg = _config(tmp_path, {"experiment": {"size_batteries": False, "batteries": []}})
        code, out = _run(tmp_path, "opf", "--case", str(FIXTURES / "three_bus.m"), "--config", cfg,
                         "--mode", "case1")
        assert code == EXIT_OK
        sol = json.loads((out / "solution_case1.json").read_text())
        assert sol["converged"] is True
        assert (out / "bus_case1.csv").read_text().startswith("# manifest: ")
        assert not (out / "comparison.csv").exists()
