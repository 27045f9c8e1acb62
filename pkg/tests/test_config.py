from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from quasicontact.config import ConfigError, ExperimentConfig, load_config

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


def base(**model):
    m = dict(dim=1, box=32.0, kappa=0.5, alpha={"family": "gaussian", "cov": [[1.0]]},
             markspace={"labels": [0], "weights": [1.0]}, Q=[[1.0]], c=[0.5])
    m.update(model)
    return {"name": "t", "experiment": "stationary", "model": m}


def error_paths(raw):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(raw)
    return [p for p, _ in info.value.errors]


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_load_and_round_trip(path):
    cfg = load_config(path)
    again = ExperimentConfig.loads(cfg.dump())
    assert again == cfg
    assert again.dump() == cfg.dump()


@settings(max_examples=40)
@given(kappa=st.floats(0.0, 0.95), box=st.floats(20.0, 500.0), seed=st.integers(0, 2 ** 31),
       n=st.sampled_from([8, 16, 64, 256]), tol=st.sampled_from([1e-12, 1e-8, 0.5e-10]))
def test_round_trip_is_identity(kappa, box, seed, n, tol):
    raw = base(kappa=kappa, box=box)
    raw["experiment"] = "simulate"
    raw["solver"] = {"n_points": n, "tol": tol}
    raw["simulation"] = {"seed": seed}
    cfg = ExperimentConfig.from_dict(raw)
    assert ExperimentConfig.loads(cfg.dump()) == cfg


def test_exponent_floats_without_dot_are_numbers():
    text = yaml.safe_dump(base()) + "solver: {tol: 1e-12, memory_budget: 2e9}\n"
    cfg = ExperimentConfig.loads(text)
    assert cfg.solver.tol == 1e-12 and isinstance(cfg.solver.tol, float)
    assert cfg.solver.memory_budget == 2e9


def test_defaults():
    cfg = ExperimentConfig.from_dict(base())
    assert cfg.solver.n_points == 64 and cfg.solver.n_max == 2
    assert cfg.solver.initial == {"kind": "zero"}
    assert cfg.compare.sigma == 3 and cfg.compare.bonferroni


class TestErrors:
    def test_supercritical_unmarked(self):
        assert "model.kappa" in error_paths(base(kappa=1.0))

    def test_supercritical_marked_uses_spectral_radius(self):
        # Q = [[2,1],[1,2]] with weights (.5,.5) has r = 1.5, so 1/r = 2/3
        marked = dict(markspace={"labels": ["a", "b"], "weights": [0.5, 0.5]},
                      Q=[[2.0, 1.0], [1.0, 2.0]], c=[1.0, 2.0])
        assert "model.kappa" in error_paths(base(kappa=2 / 3, **marked))
        ExperimentConfig.from_dict(base(kappa=0.6, **marked))

    def test_box_too_small(self):
        assert error_paths(base(box=19.0)) == ["model.box"]

    @pytest.mark.parametrize("n", [48, 4, 100, 64.0])
    def test_grid_size_power_of_two(self, n):
        raw = base()
        raw["solver"] = {"n_points": n}
        assert "solver.n_points" in error_paths(raw)

    def test_unresolved_kernel(self):
        raw = base(box=64.0)
        raw["solver"] = {"n_points": 32}
        assert error_paths(raw) == ["solver.n_points"]
        raw["experiment"] = "simulate"
        ExperimentConfig.from_dict(raw)

    def test_unknown_field_reported_with_path(self):
        raw = base()
        raw["solver"] = {"n_point": 64}
        raw["extra"] = 1
        assert set(error_paths(raw)) == {"solver.n_point", "extra"}

    def test_missing_model(self):
        assert "model" in error_paths({"name": "x", "experiment": "stationary"})

    def test_all_errors_collected(self):
        raw = base(kappa=-1.0, c=[0.0])
        raw["experiment"] = "fit"
        raw["simulation"] = {"burn_in": 300.0, "replicas": 0}
        paths = set(error_paths(raw))
        assert {"experiment", "model.kappa", "model.c", "simulation.burn_in",
                "simulation.replicas"} <= paths

    @pytest.mark.parametrize("initial,path", [({"kind": "constant"}, "solver.initial.value"),
                                              ({"kind": "file"}, "solver.initial.path"),
                                              ({"kind": "random"}, "solver.initial.kind")])
    def test_initial_data(self, initial, path):
        raw = base()
        raw["solver"] = {"initial": initial}
        assert error_paths(raw) == [path]

    def test_wrong_mark_count(self):
        assert "model.c" in error_paths(base(c=[0.5, 0.5]))

    def test_bad_yaml(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.loads("model: [unclosed")


def test_replace_revalidates():
    cfg = ExperimentConfig.from_dict(base())
    assert cfg.replace(experiment="cauchy").experiment == "cauchy"
    with pytest.raises(ConfigError):
        cfg.replace(experiment="nope")


def test_simulator_parameters_are_renormalised():
    raw = base(kappa=0.2, markspace={"labels": ["a", "b"], "weights": [0.5, 0.5]},
               Q=[[2.0, 1.0], [1.0, 2.0]], c=[1.0, 2.0])
    cfg = ExperimentConfig.from_dict(raw)
    p = cfg.sim_params()
    assert p.kappa == pytest.approx(0.3, abs=1e-14)
    np.testing.assert_allclose(p.kernel.entries, np.array([[2, 1], [1, 2]]) / 1.5, atol=1e-14)
    assert cfg.model_for_solver().kappa == pytest.approx(0.3, abs=1e-14)
    assert cfg.sim_params(kappa=0.1).kappa == pytest.approx(0.15, abs=1e-14)
