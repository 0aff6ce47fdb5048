import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsubexp.cli import EXIT_CONFIG, EXIT_OK, EXIT_PRECONDITION, EXIT_ZERO_HIT, main
from mvsubexp.config import (
    EXPERIMENT_KINDS,
    ExperimentFile,
    build_set,
    build_vector_law,
    config_hash,
    dump_config,
    load_config,
    parse_config,
)
from mvsubexp.errors import ConfigError
from mvsubexp.presets import list_presets, load_preset, preset_path

PARETO = {"family": "pareto", "params": {"alpha": 2.0, "scale": 1.0}}
HALF = {"kind": "halfspace", "weights": [0.5, 0.5], "c": 1.0}

SMALL = {
    "description": "small nfold run",
    "engine": {"seed": 5, "budget": 4000, "splitting": {"pilot_n": 500, "replicas": 3}},
    "experiments": [
        {
            "experiment": "nfold",
            "name": "n2",
            "law": {"kind": "independent", "marginals": [PARETO, PARETO]},
            "set": HALF,
            "n": 2,
            "x_grid": [10.0, 20.0, 40.0],
        }
    ],
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


class TestSchema:
    def test_round_trip(self):
        cfg = parse_config(SMALL)
        assert parse_config(dump_config(cfg)) == cfg
        assert config_hash(cfg) == config_hash(parse_config(dump_config(cfg)))

    def test_unknown_top_level_key(self):
        bad = dict(SMALL, extra_field=1)
        with pytest.raises(ConfigError, match="extra_field"):
            parse_config(bad)

    def test_unknown_nested_key(self):
        bad = copy.deepcopy(SMALL)
        bad["experiments"][0]["set"]["radius"] = 2.0
        with pytest.raises(ConfigError, match="radius"):
            parse_config(bad)

    def test_empty_experiment_list(self):
        with pytest.raises(ConfigError):
            parse_config(dict(SMALL, experiments=[]))

    def test_strict_types(self):
        bad = copy.deepcopy(SMALL)
        bad["experiments"][0]["n"] = "2"
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_unknown_experiment_kind(self):
        bad = copy.deepcopy(SMALL)
        bad["experiments"][0]["experiment"] = "magic"
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_risk_needs_x_or_target(self):
        model = {"d": 2, "allocation": [0.5, 0.5], "premiums": [{"cap": 1.0}, {"cap": 1.0}],
                 "claims": {"kind": "independent", "marginals": [PARETO, PARETO]},
                 "arrivals": {"kind": "poisson", "rate": 1.0}, "horizon": 10.0}
        exp = {"experiment": "entrance", "model": model, "set": HALF, "t_list": [5.0]}
        with pytest.raises(ConfigError):
            parse_config(dict(SMALL, experiments=[exp]))
        with pytest.raises(ConfigError):
            parse_config(dict(SMALL, experiments=[dict(exp, x_list=[10.0], target=1e-3)]))
        assert parse_config(dict(SMALL, experiments=[dict(exp, target=1e-3)]))

    def test_model_lengths(self):
        model = {"d": 3, "allocation": [0.5, 0.5], "premiums": [{"cap": 1.0}, {"cap": 1.0}],
                 "claims": {"kind": "independent", "marginals": [PARETO, PARETO]},
                 "arrivals": {"kind": "poisson"}, "horizon": 10.0}
        exp = {"experiment": "ruin", "model": model, "ruin_kind": "sum_negative", "t_list": [5.0],
               "x_list": [10.0]}
        with pytest.raises(ConfigError, match="d entries"):
            parse_config(dict(SMALL, experiments=[exp]))

    def test_builders(self):
        cfg = parse_config(SMALL)
        exp = cfg.experiments[0]
        assert build_vector_law(exp.law).dim == 2
        assert build_set(exp.set).y_projection([2.0, 0.0]) == pytest.approx(1.0)

    def test_json_syntax_error_location(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text('{\n  "experiments": [,]\n}')
        with pytest.raises(ConfigError, match="line 2"):
            load_config(p)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2 ** 62), budget=st.integers(1, 10 ** 7),
           grid=st.lists(st.floats(0.1, 1e6), min_size=1, max_size=6))
    def test_round_trip_property(self, seed, budget, grid):
        raw = copy.deepcopy(SMALL)
        raw["engine"].update(seed=seed, budget=budget)
        raw["experiments"][0]["x_grid"] = grid
        cfg = parse_config(raw)
        assert parse_config(dump_config(cfg)) == cfg


class TestPresets:
    def test_listing(self):
        names = [n for n, _ in list_presets()]
        assert len(names) >= 8
        for required in ("th5_1_surface", "th6_1_entrance", "cor4_1_mrv"):
            assert required in names

    @pytest.mark.parametrize("name", [n for n, _ in list_presets()])
    def test_every_preset_validates(self, name):
        cfg = load_preset(name)
        assert isinstance(cfg, ExperimentFile)
        assert all(e.experiment in EXPERIMENT_KINDS for e in cfg.experiments)

    def test_missing_preset(self):
        with pytest.raises(KeyError):
            preset_path("no_such_preset")


class TestCli:
    def test_list_presets(self, capsys):
        assert main(["list-presets"]) == EXIT_OK
        assert "th5_1_surface" in capsys.readouterr().out

    def test_validate_ok(self, tmp_path):
        assert main(["validate", str(write(tmp_path, SMALL))]) == EXIT_OK

    def test_validate_preset_by_name(self):
        assert main(["validate", "assumption62"]) == EXIT_OK

    def test_empty_experiments_exit_one(self, tmp_path, capsys):
        p = write(tmp_path, dict(SMALL, experiments=[]))
        assert main(["run", str(p), "--outdir", str(tmp_path / "out")]) == EXIT_CONFIG
        assert "experiments" in capsys.readouterr().err

    def test_bad_budget_scale(self, tmp_path):
        assert main(["run", str(write(tmp_path, SMALL)), "--budget-scale", "0"]) == EXIT_CONFIG

    def test_rerun_is_byte_identical(self, tmp_path):
        p = write(tmp_path, SMALL)
        assert main(["run", str(p), "--outdir", str(tmp_path / "a")]) == EXIT_OK
        assert main(["run", str(p), "--outdir", str(tmp_path / "b"), "--workers", "3"]) == EXIT_OK
        a = (tmp_path / "a" / "data.csv").read_bytes()
        b = (tmp_path / "b" / "data.csv").read_bytes()
        assert a == b and len(a.splitlines()) == 4
        rep = json.loads((tmp_path / "a" / "report.json").read_text())
        assert rep["seed"] == 5 and rep["exit_code"] == 0
        assert rep["experiments"][0]["verdict"] in ("Consistent", "Inconsistent", "Inconclusive")
        assert len(rep["config_hash"]) == 64

    def test_seed_override_changes_output(self, tmp_path):
        p = write(tmp_path, SMALL)
        main(["run", str(p), "--outdir", str(tmp_path / "a")])
        main(["run", str(p), "--outdir", str(tmp_path / "b"), "--seed", "6"])
        assert (tmp_path / "a" / "data.csv").read_bytes() != (tmp_path / "b" / "data.csv").read_bytes()
        assert json.loads((tmp_path / "b" / "report.json").read_text())["seed"] == 6

    def test_precondition_exit_two(self, tmp_path):
        cfg = copy.deepcopy(SMALL)
        cfg["experiments"] = [{
            "experiment": "kesten", "name": "too_small_c",
            "law": {"kind": "independent", "marginals": [PARETO, PARETO]},
            "set": HALF, "c": 1.0, "n_max": 3, "x_grid": [10.0],
        }]
        out = tmp_path / "out"
        assert main(["run", str(write(tmp_path, cfg)), "--outdir", str(out)]) == EXIT_PRECONDITION
        rep = json.loads((out / "report.json").read_text())
        assert rep["errors"][0]["error"] == "ViolatesKesten"

    def test_zero_hit_exit_three(self, tmp_path):
        # the projection only sees a coordinate that is identically one
        cfg = copy.deepcopy(SMALL)
        exp = cfg["experiments"][0]
        exp["law"] = {"kind": "independent",
                      "marginals": [PARETO, {"family": "degenerate", "params": {"value": 1.0}}]}
        exp["set"] = {"kind": "halfspace", "weights": [0.0, 1.0], "c": 1.0}
        exp["x_grid"] = [5.0, 10.0, 20.0]
        assert main(["run", str(write(tmp_path, cfg)), "--outdir", str(tmp_path / "o")]) == EXIT_ZERO_HIT
