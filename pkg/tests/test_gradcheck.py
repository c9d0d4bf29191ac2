import numpy as np
import pytest

from drapekit.errors import ConfigError
from drapekit.gradcheck import (
    ProbeLoss,
    _is_noisy,
    _spread,
    central_difference,
    finite_difference_check,
    gradcheck_simulation,
    run_gradcheck,
)
from drapekit.schemas import RunConfig


def _cubic(x):
    return float((x ** 3).sum() + x[0] * x[1])


def _cubic_grad(x):
    g = 3 * x ** 2
    g[0] += x[1]
    g[1] += x[0]
    return g


def test_central_difference_of_a_cubic():
    x = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(central_difference(_cubic, x, 1e-5), _cubic_grad(x), rtol=1e-8)
    np.testing.assert_allclose(central_difference(_cubic, x, 1e-5, indices=[2]), [12.0], rtol=1e-8)


def test_check_passes_and_flags_wrong_entries():
    x = np.array([0.5, -1.0, 2.0])
    good = finite_difference_check(_cubic, x, _cubic_grad(x), group="cubic")
    assert all(r.passed for r in good)
    assert [r.parameter for r in good] == ["cubic[0]", "cubic[1]", "cubic[2]"]

    wrong = _cubic_grad(x)
    wrong[1] *= 1.1
    rows = finite_difference_check(_cubic, x, wrong, names=["a", "b", "c"])
    assert [r.passed for r in rows] == [True, False, True]
    assert rows[1].parameter == "b"


def test_relative_step_for_large_parameters():
    x = np.array([1e3])
    rows = finite_difference_check(lambda t: float(np.log(t[0])), x, np.array([1e-3]), relative_step=True)
    assert rows[0].passed


def test_noise_detection():
    assert _is_noisy([1e-4, 1e-3, 1e-5])
    assert not _is_noisy([1e-3, 1e-5, 1e-7])
    assert not _is_noisy([1e-7, 1e-6, 1e-5])


def test_spread_picks_ends():
    assert _spread(4, 6).tolist() == [0, 1, 2, 3]
    idx = _spread(100, 5)
    assert idx[0] == 0 and idx[-1] == 99 and idx.size == 5


def test_probe_loss_gradient(rng):
    x = rng.normal(size=(4, 3))
    loss = ProbeLoss.around(x, seed=3)
    res = loss(x, np.zeros((2, 2)))
    fd = central_difference(lambda f: loss(f.reshape(4, 3), np.zeros((2, 2))).value, x.ravel(), 1e-6)
    np.testing.assert_allclose(res.grad_x.ravel(), fd, rtol=1e-6, atol=1e-8)
    assert not res.grad_p.any()


def test_unknown_group_is_rejected():
    with pytest.raises(ConfigError):
        run_gradcheck(RunConfig(), ["colour"])


def test_finite_difference_runs_are_undamped_and_fixed_length():
    cfg = RunConfig.model_validate({"simulation": {"damping": 0.9, "max_steps": 400}, "gradcheck": {"steps": 12}})
    sim = gradcheck_simulation(cfg)
    assert sim.damping == 1.0
    assert sim.fixed_steps and sim.max_steps == 12
    assert sim.dt == cfg.simulation.dt


def test_pose_and_cage_on_patch():
    cfg = RunConfig.model_validate({"gradcheck": {"steps": 10, "max_params": 2}})
    report = run_gradcheck(cfg, ["cage", "pose"])
    assert {r.group for r in report.rows} == {"cage", "pose"}
    assert report.passed, [r for r in report.rows if not r.passed]
