import numpy as np
import pytest

from drapekit.errors import ConfigError, DegenerateElementError, DimensionMismatchError, TopologyMismatchError
from drapekit.loss import TargetGarment
from drapekit.optimizer import (
    CoOptimizer,
    ParameterVector,
    co_optimize,
    material_from_log,
    material_to_log,
    warm_start,
)
from drapekit.scene import build_scene
from drapekit.schemas import RunConfig
from drapekit.synth import synth_target
from drapekit.xpbd import MaterialParams

FAST_SIM = {"max_steps": 20, "fixed_steps": True, "solver_iters": 10}


def _cfg(**sections) -> RunConfig:
    base = {"paths": {"pattern": "builtin:strip"}, "simulation": FAST_SIM}
    base.update(sections)
    return RunConfig.model_validate(base)


@pytest.fixture(scope="module")
def strip_target():
    cfg = _cfg(synth={"pattern_scale": 1.1})
    return synth_target(build_scene(cfg), cfg.synth).target


def test_parameter_vector_packs_enabled_groups():
    pv = ParameterVector({"a": np.arange(3.0), "b": [[1.0, 2.0]], "c": [5.0]}, enabled=("b", "a"))
    assert pv.size == 5
    np.testing.assert_array_equal(pv.pack(), [1, 2, 0, 1, 2])
    back = pv.unpack(np.array([9.0, 8.0, 7.0, 6.0, 5.0]))
    np.testing.assert_array_equal(back.values["b"], [9, 8])
    np.testing.assert_array_equal(back.values["a"], [7, 6, 5])
    np.testing.assert_array_equal(back.values["c"], [5])
    assert ParameterVector({"a": [1.0]}).pack().size == 0


def test_parameter_vector_size_errors():
    pv = ParameterVector({"a": np.zeros(3)}, enabled=("a",))
    with pytest.raises(DimensionMismatchError):
        pv.unpack(np.zeros(4))
    with pytest.raises(DimensionMismatchError):
        ParameterVector({"a": np.zeros(3)}, enabled=("b",))


def test_material_log_round_trip():
    m = MaterialParams(stretch=(1e-3, 2e-3, 4e-3), bend=10.0)
    logs = material_to_log(m, ("bend", "stretch"))
    np.testing.assert_allclose(logs, np.log([10.0, 1e-3, 2e-3, 4e-3]))
    back = material_from_log(MaterialParams(), ("bend", "stretch"), logs)
    assert back.bend == pytest.approx(10.0)
    np.testing.assert_allclose(back.stretch, m.stretch)


def test_warm_start_replaces_pinned_rows():
    scene = build_scene(_cfg())
    base = scene.compile()
    traj = scene.drape(base)
    grown = scene.compile(xbar=1.05 * scene.pattern.vertices_2d)
    state = warm_start(traj, grown)
    pinned = grown.model.pinned
    np.testing.assert_array_equal(state.x[pinned], grown.embedding.positions[pinned])
    np.testing.assert_array_equal(state.x[~pinned], traj.final.x[~pinned])
    assert not state.v.any()

    other = build_scene(_cfg(paths={"pattern": "builtin:patch"}, scene={"body_shape": None})).compile()
    with pytest.raises(TopologyMismatchError):
        warm_start(traj, other)


def test_configuration_conflicts(strip_target):
    scene = build_scene(_cfg())
    with pytest.raises(ConfigError):
        CoOptimizer(scene, strip_target, _cfg(optimizer={"groups": ["shape"]}))
    with pytest.raises(ConfigError):
        CoOptimizer(scene, strip_target, _cfg(optimizer={"stages": [["cage"], ["pattern"]]}))
    with pytest.raises(ConfigError):
        CoOptimizer(scene, strip_target, _cfg(optimizer={"stages": [["colour"]]}))


def test_body_alias_expands_in_stages():
    cfg = _cfg(paths={"pattern": "builtin:patch"}, optimizer={"stages": [["cage"], ["body", "material"]]})
    scene = build_scene(cfg)
    target = TargetGarment(interior=np.zeros((4, 3)))
    opt = CoOptimizer(scene, target, cfg)
    assert opt.stages == [("cage",), ("shape", "pose", "material")]
    assert opt.cage is not None and opt.shape_mode == "cage"


def test_no_groups_leaves_parameters_unchanged(strip_target):
    cfg = _cfg(optimizer={"groups": []})
    result = co_optimize(build_scene(cfg), strip_target, cfg)
    rep = result.report
    assert rep.stop_reason == "no parameter groups enabled"
    assert rep.final_loss == rep.initial_loss
    assert len(rep.iterations) == 1 and rep.notes
    np.testing.assert_array_equal(result.best.compiled.xbar, build_scene(cfg).pattern.vertices_2d)


def test_cage_steps_never_increase_the_loss(strip_target):
    cfg = _cfg(optimizer={"groups": ["cage"], "max_iters": 3, "grad_tol": 0.0,
                               "rates": {"cage": 5e-3}})
    seen = []
    result = co_optimize(build_scene(cfg), strip_target, cfg, on_iteration=lambda rec, ev: seen.append(rec))
    rep = result.report
    assert rep.iterations and rep.final_loss <= rep.initial_loss
    losses = [rep.initial_loss] + [r.loss for r in rep.iterations if r.accepted]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert len(seen) == sum(r.accepted for r in rep.iterations)
    assert rep.quality_final.min > 0
    assert len(rep.parameters["cage"]) == 4


def test_material_stage_updates_compliance(strip_target):
    cfg = _cfg(optimizer={"groups": ["material"], "material_params": ["stretch"], "max_iters": 2,
                               "grad_tol": 0.0})
    result = co_optimize(build_scene(cfg), strip_target, cfg)
    rep = result.report
    assert rep.final_loss <= rep.initial_loss
    assert len(rep.parameters["stretch_compliance"]) == 3
    assert "material" in rep.iterations[0].grad_norms


def test_degenerate_candidate_is_rejected_and_step_shrunk(strip_target, monkeypatch):
    cfg = _cfg(optimizer={"groups": ["material"], "material_params": ["stretch"]})
    opt = CoOptimizer(build_scene(cfg), strip_target, cfg)
    current = opt.forward(opt.initial_parameters().with_enabled(("material",)))
    opt.gradient(current)

    real_forward = opt.forward
    calls = []

    def flaky_forward(pv, previous=None):
        calls.append(pv)
        if len(calls) == 1:
            raise DegenerateElementError([0])
        return real_forward(pv, previous)

    monkeypatch.setattr(opt, "forward", flaky_forward)
    step = opt._line_search(current, 1.0)
    assert step.rejected == 1 and not step.aborted
    assert len(calls) >= 2
    assert step.scale <= 0.5


def test_warm_start_settles_faster_than_cold_start():
    flat = {0: {"origin": [0.0, 0.7, 0.0], "axis_u": [1.0, 0.0, 0.0], "axis_v": [0.0, 0.0, -1.0]}}
    cfg = RunConfig.model_validate({
        "paths": {"pattern": "builtin:strip"},
        "scene": {"placements": flat},
        "simulation": {"damping": 0.98, "max_steps": 3000, "solver_iters": 10},
    })
    scene = build_scene(cfg)
    first = scene.drape(scene.compile())
    assert first.converged

    grown = 1.01 * scene.pattern.vertices_2d
    cold = scene.drape(scene.compile(xbar=grown))
    warm_compiled = scene.compile(xbar=grown)
    warm_compiled.state0 = warm_start(first, warm_compiled)
    warm_compiled.cold = False
    warm = scene.drape(warm_compiled)
    assert cold.converged and warm.converged
    assert warm.n_steps < cold.n_steps
