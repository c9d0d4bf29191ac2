import numpy as np
import pytest

from drapekit.pattern import signed_areas
from drapekit.scene import build_scene
from drapekit.schemas import RunConfig, SynthConfig
from drapekit.synth import scale_panels, synth_target


@pytest.fixture(scope="module")
def strip_scene():
    cfg = RunConfig.model_validate({"paths": {"pattern": "builtin:strip"},
                                    "simulation": {"max_steps": 20, "fixed_steps": True}})
    return build_scene(cfg)


def test_scale_panels_about_centroids():
    scene = build_scene(RunConfig(), pattern="builtin:skirt", body="none")
    xbar = scene.pattern.vertices_2d
    grown = scale_panels(scene, 1.1)
    faces = scene.pattern.faces
    np.testing.assert_allclose(signed_areas(grown, faces), 1.21 * signed_areas(xbar, faces), rtol=1e-12)
    vpanel = scene.pattern.vertex_panel()
    for panel in range(scene.pattern.n_panels):
        np.testing.assert_allclose(grown[vpanel == panel].mean(0), xbar[vpanel == panel].mean(0), atol=1e-12)


def test_noise_free_target_is_the_drape(strip_scene):
    synth = synth_target(strip_scene, SynthConfig())
    np.testing.assert_array_equal(synth.target.interior, synth.truth)
    assert synth.chamfer_mm == 0.0
    assert list(synth.target.polylines) == ["edge"]
    assert synth.trajectory.n_steps == 20


def test_dropout_and_noise(strip_scene):
    synth = synth_target(strip_scene, SynthConfig(dropout=0.5, noise=1e-3), seed=7)
    n = synth.truth.shape[0]
    assert 0.2 * n < synth.target.interior.shape[0] < 0.8 * n
    assert synth.chamfer_mm > 0.0
    again = synth_target(strip_scene, SynthConfig(dropout=0.5, noise=1e-3), seed=7)
    np.testing.assert_array_equal(again.target.interior, synth.target.interior)


def test_true_parameters_change_the_drape(strip_scene):
    base = synth_target(strip_scene, SynthConfig())
    soft = synth_target(strip_scene, SynthConfig(stretch_compliance=[1e-2, 1e-2, 4e-2]))
    grown = synth_target(strip_scene, SynthConfig(pattern_scale=1.2))
    assert soft.truth[:, 1].min() < base.truth[:, 1].min()
    np.testing.assert_allclose(grown.xbar, scale_panels(strip_scene, 1.2))
