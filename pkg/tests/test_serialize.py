"""File-format roundtrip tests."""

import numpy as np

from riskirl import serialize
from riskirl.bench import driving_config
from riskirl.envelopes import SemiParametricCrm
from riskirl.likelihood import TrajectorySegment
from riskirl.planning import ActionLibrary
from riskirl.serialize import FittedModel
from riskirl.static_inference import Demonstration


def test_demo_roundtrip(tmp_path):
    demos = [Demonstration(state=[0.1, -0.2], control=[0.5]), Demonstration(state=[1.0, 2.0], control=[-0.25])]
    path = tmp_path / "demos.json"
    serialize.save_demos(demos, path)
    back = serialize.load_demos(path)
    for a, b in zip(demos, back):
        np.testing.assert_array_equal(a.state, b.state)
        np.testing.assert_array_equal(a.control, b.control)


def test_segment_roundtrip(tmp_path):
    seg = TrajectorySegment(prev_mode=1, realized_mode=3, observed_action=np.arange(6.0).reshape(3, 2), start_state=np.arange(4.0))
    path = tmp_path / "segs.json"
    serialize.save_segments([seg], path)
    back = serialize.load_segments(path)[0]
    assert back.prev_mode == 1 and back.realized_mode == 3
    np.testing.assert_array_equal(back.observed_action, seg.observed_action)
    np.testing.assert_array_equal(back.start_state, seg.start_state)


def test_library_roundtrip(tmp_path):
    lib = ActionLibrary(first_stage=np.random.default_rng(0).normal(size=(3, 4, 2)), later_stage=np.zeros((2, 4, 2)))
    path = tmp_path / "lib.json"
    serialize.save_library(lib, path)
    back = serialize.load_library(path)
    np.testing.assert_allclose(back.first_stage, lib.first_stage)
    np.testing.assert_allclose(back.later_stage, lib.later_stage)


def test_model_roundtrip(tmp_path):
    cfg = driving_config(beta=3.5)
    model = FittedModel(
        normals=SemiParametricCrm.basis_normals(4),
        offsets=np.full(8, 0.05),
        weights=np.full(6, 1 / 6),
        beta=3.5,
        config=cfg,
    )
    path = tmp_path / "model.json"
    serialize.save_model(model, path)
    back = serialize.load_model(path)
    np.testing.assert_allclose(back.offsets, model.offsets)
    np.testing.assert_allclose(back.weights, model.weights)
    assert back.config.N == 15 and back.config.n_d == 8 and back.beta == 3.5
    back.crm()  # feasible envelope reconstructs
