"""Checks on the session-trained shipping-channel network."""
import dataclasses

import numpy as np

from reachpf import nn, sim


def test_single_ship_trajectory_tracks_exact_controller(uuv_trained):
    _, result, _ = uuv_trained
    base = sim.build_uuv_scenario(0, ships_per_lane=1)
    scenario = dataclasses.replace(base, obstacles=base.obstacles[:1])
    exact = sim.run(scenario, sim.EXACT_PF)
    learned = sim.run(scenario, sim.NN, result.mlp)
    n = min(len(exact), len(learned))
    assert exact.times[:n] == learned.times[:n]
    first = np.array(exact.times[:n]) <= 30.0 + 1e-9
    gap = np.linalg.norm(np.array(exact.robot[:n]) - np.array(learned.robot[:n]), axis=1)[first]
    assert first.sum() >= 300
    assert gap.max() < 0.5
    assert learned.status == sim.GOAL_REACHED


def test_trained_model_metadata_and_range(uuv_trained):
    ds, result, path = uuv_trained
    loaded = nn.load_model(path)
    for attr in ("output_power", "output_scale", "horizon", "footprint_radius"):
        assert getattr(loaded, attr) == getattr(result.mlp, attr)
    assert loaded.bounds == result.mlp.bounds
    np.testing.assert_array_equal(loaded.predict(ds.inputs[:50]), result.mlp.predict(ds.inputs[:50]))
    assert result.history[-1][1] < result.history[0][1]
