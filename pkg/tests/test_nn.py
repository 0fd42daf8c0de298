import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reachpf import presets
from reachpf.dynamics import NoiseBounds, ObstacleState
from reachpf.errors import (ModelFormatError, OutOfDomainError, TrainingDiverged,
                            UnsupportedVersionError)
from reachpf.nn import (FEATURES, Dataset, GridAxis, GridSpec, Mlp, TrainConfig, backprop,
                        build_model, featurize, fit, generate_training_data,
                        grid_configuration, infer, load_model, nn_control, read_dataset,
                        save_model, train, write_dataset)
from reachpf.potential import Gains, composed_control, repulsive_gradient
from reachpf.reachability import forward_reach_tube


def tiny_spec(**over):
    base = dict(along=GridAxis(-3, 6, 10), across=GridAxis(-3, 3, 7),
                rel_heading=GridAxis(0, 0, 1), speed=GridAxis(0.5, 0.5, 1),
                elapsed=GridAxis(0, 8, 5), gains=Gains(5.0, 10.0, 0.51),
                bounds=NoiseBounds(0.025, 0.02), horizon=8.0)
    base.update(over)
    return GridSpec(**base)


def independent_label(along, across, speed, elapsed, spec):
    """Re-derived repulsive gradient for the canonical grid pose.

    Obstacle at the origin heading +x. Inside the wedge the radial clamp
    is optimal because every sector point has norm in [r0, r1]; outside
    it the closest point lies on one of the two bounding-ray segments,
    found here by world-frame projection.
    """
    b = spec.bounds
    hw = b.heading_bound
    r0 = max(speed - b.speed_bound, 0.0) * elapsed * math.cos(hw)
    r1 = (speed + b.speed_bound) * spec.horizon
    q = np.array([along, across])
    cands = []
    bearing = math.atan2(across, along)
    rho = math.hypot(along, across)
    if abs(bearing) <= hw:
        if r0 <= rho <= r1:
            return None
        r = min(max(rho, r0), r1)
        cands.append(q * (r / rho) if rho > 0 else np.array([r0, 0.0]))
    # exact ties (query on the bisector behind the apex) go to the +hw edge
    for side in (hw, -hw) if not cands else ():
        u = np.array([math.cos(side), math.sin(side)])
        a, e = r0 * u, r1 * u
        seg = e - a
        lam = 0.0 if seg @ seg == 0 else min(max((q - a) @ seg / (seg @ seg), 0.0), 1.0)
        cands.append(a + lam * seg)
    p = min(cands, key=lambda c: np.hypot(*(q - c)))
    d = math.hypot(*(q - p)) - spec.footprint_radius
    if d <= spec.gains.delta:
        return None
    unit = (q - p) / np.hypot(*(q - p))
    return -spec.gains.k_r * unit / (d - spec.gains.delta) ** 3


# ---------------------------------------------------------------- data


def test_one_point_grid_label_is_exact():
    spec = tiny_spec(along=GridAxis(5, 5, 1), across=GridAxis(1, 1, 1), elapsed=GridAxis(2, 2, 1))
    ds = generate_training_data(spec)
    assert len(ds) == 1
    x_p, x_h, obs, t = grid_configuration(5.0, 1.0, 0.0, 0.5, 2.0, spec)
    tube = forward_reach_tube(obs, spec.bounds, spec.horizon, spec.footprint_radius)
    expected = repulsive_gradient(x_p, tube.slice(t), spec.gains.k_r, spec.gains.delta)
    assert ds.labels[0].tolist() == expected.tolist()


def test_far_label_is_negligible():
    spec = tiny_spec(along=GridAxis(-3000, -3000, 1), across=GridAxis(0, 0, 1),
                     elapsed=GridAxis(0, 0, 1))
    ds = generate_training_data(spec)
    assert np.hypot(*ds.labels[0]) < 1e-6 * spec.gains.k_r


def test_exclusions_are_counted():
    spec = tiny_spec()
    ds = generate_training_data(spec)
    assert len(ds) + ds.excluded_inside + ds.excluded_cap == spec.size
    assert ds.excluded_inside > 0
    capped = generate_training_data(tiny_spec(label_cap=1.0))
    assert capped.excluded_cap > 0 and len(capped) < len(ds)


def test_generation_is_deterministic_and_c_ordered():
    a = generate_training_data(tiny_spec())
    b = generate_training_data(tiny_spec())
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    keys = [tuple(r) for r in a.inputs]
    assert keys == sorted(keys)


def test_labels_match_independent_evaluator():
    spec = presets.ugv_grid(0.9)
    assert spec.size >= 3e5
    ds = generate_training_data(spec)
    # every row against the vectorised path, a large random subset against the slow oracle
    idx = range(len(ds))
    for j in idx:
        along, across, _, speed, elapsed = ds.inputs[j]
        ref = independent_label(along, across, speed, elapsed, spec)
        assert ref is not None
        assert np.all(np.abs(ds.labels[j] - ref) <= 1e-9 * max(1.0, np.abs(ref).max()))


def test_featurize_round_trip_matches_stored_inputs():
    spec = tiny_spec(rel_heading=GridAxis(-1.0, 1.0, 3))
    ds = generate_training_data(spec)
    for row in ds.inputs[::7]:
        x_p, x_h, obs, t = grid_configuration(*row, spec)
        f = featurize(x_p, x_h, obs.position, obs.heading, obs.speed, t)
        assert f.tolist() == row.tolist()


def test_featurize_scalar_and_batched_paths_agree(rng):
    xp = rng.normal(0, 100, (50, 2))
    op = rng.normal(0, 100, (50, 2))
    xh = rng.uniform(-4, 4, 50)
    oh = 0.7
    batched = featurize(xp, xh, op, oh, 5.0, 12.0)
    for k in range(50):
        scalar = featurize(xp[k], xh[k], op[k], oh, 5.0, 12.0)
        np.testing.assert_allclose(scalar, batched[k], rtol=0, atol=1e-12)


def test_dataset_round_trip(tmp_path):
    ds = generate_training_data(tiny_spec())
    path = tmp_path / "d.bin"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back.inputs.tobytes() == ds.inputs.tobytes()
    assert back.labels.tobytes() == ds.labels.tobytes()
    assert back.spec.to_dict() == ds.spec.to_dict()
    raw = path.read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-3])
    with pytest.raises(ModelFormatError):
        read_dataset(tmp_path / "t.bin")
    (tmp_path / "m.bin").write_bytes(b"NOTADATA" + raw[8:])
    with pytest.raises(ModelFormatError, match="offset 0"):
        read_dataset(tmp_path / "m.bin")


def test_grid_spec_validation_names_field():
    with pytest.raises(ValueError, match="across"):
        tiny_spec(across=GridAxis(1, 0, 3))
    with pytest.raises(ValueError, match="elapsed"):
        tiny_spec(elapsed=GridAxis(0, 9, 3))
    with pytest.raises(ValueError, match="along"):
        tiny_spec(along=GridAxis(0, 0, 0))
    with pytest.raises(ValueError, match="gains"):
        GridSpec.from_dict({k: v for k, v in tiny_spec().to_dict().items() if k != "gains"})
    assert GridSpec.from_dict(tiny_spec().to_dict()).to_dict() == tiny_spec().to_dict()


def test_grid_axis_refinement():
    ax = GridAxis(-2, 2, 5, refine=[[0.5, 1.5, 3]])
    assert ax.values().tolist() == [-2.0, -1.0, 0.0, 0.5, 1.0, 1.5, 2.0]
    assert tiny_spec().size == 10 * 7 * 1 * 1 * 5


# ---------------------------------------------------------------- network


def fd_check(mlp, Z, T, eps=1e-6):
    _, grads = backprop(mlp, Z, T)
    worst = 0.0
    for p, g in zip(mlp.params, grads):
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + eps
            up, _ = backprop(mlp, Z, T)
            p[idx] = keep - eps
            dn, _ = backprop(mlp, Z, T)
            p[idx] = keep
            fd = (up - dn) / (2 * eps)
            worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    return worst


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(4)
    mlp = Mlp.initialize([2, 3, 2], rng)
    for b in mlp.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    Z = rng.normal(0, 1, (16, 2))
    T = rng.normal(0, 1, (16, 2))
    assert fd_check(mlp, Z, T) < 1e-4


def test_backprop_deeper_network():
    rng = np.random.default_rng(5)
    mlp = Mlp.initialize([5, 6, 6, 2], rng)
    Z = rng.normal(0, 1, (8, 5))
    T = rng.normal(0, 1, (8, 2))
    assert fd_check(mlp, Z, T) < 1e-4


def test_forward_kernel_matches_numpy(rng):
    mlp = Mlp.initialize([5, 16, 16, 2], rng)
    sizes, flat = mlp.packed()
    from reachpf import kernels
    for z in rng.uniform(-1, 1, (20, 5)):
        np.testing.assert_allclose(kernels.mlp_forward(z, sizes, flat),
                                   mlp.forward_raw(z[None])[0], rtol=1e-13, atol=1e-13)


def test_memorization():
    X = np.tile([[0.3, -0.2, 0.0, 0.5, 4.0]], (64, 1))
    Y = np.tile([[0.7, -1.1]], (64, 1))
    cfg = TrainConfig(epochs=300, batch_size=16, learning_rate=0.01, hidden=[8],
                      output_power=1.0, val_fraction=0.1)
    mlp = Mlp.initialize([5, 8, 2], np.random.default_rng(0), output_power=1.0)
    res = train(mlp, X, Y, cfg)
    assert res.val_mse < 1e-6


def test_linear_target():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (2000, 5))
    A = rng.normal(0, 1, (5, 2))
    Y = X @ A
    cfg = TrainConfig(epochs=200, batch_size=64, learning_rate=0.01, lr_decay_every=70,
                      hidden=[32], output_power=1.0)
    mlp = Mlp.initialize([5, 32, 2], np.random.default_rng(0), output_power=1.0)
    res = train(mlp, X, Y, cfg)
    assert res.val_mse < 1e-3 * float(np.mean(Y * Y))


def test_training_divergence_names_epoch():
    X = np.random.default_rng(0).uniform(-1, 1, (100, 5))
    Y = X[:, :2] * 1e3
    cfg = TrainConfig(epochs=5, learning_rate=1e6, grad_clip=1e300, output_power=1.0,
                      hidden=[4])
    mlp = Mlp.initialize([5, 4, 2], np.random.default_rng(0), output_power=1.0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(TrainingDiverged, match=r"at epoch \d+"):
        train(mlp, X, Y, cfg)


def test_training_is_deterministic():
    ds = generate_training_data(tiny_spec())
    cfg = TrainConfig(epochs=3, hidden=[8, 8])
    a = fit(ds, cfg)
    b = fit(ds, cfg)
    assert [p.tobytes() for p in a.mlp.params] == [p.tobytes() for p in b.mlp.params]
    assert a.history == b.history


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(ValueError, match="bogus"):
        TrainConfig.from_dict({"bogus": 1})


@pytest.fixture(scope="module")
def small_model():
    ds = generate_training_data(tiny_spec())
    return fit(ds, TrainConfig(epochs=5, hidden=[8, 8])).mlp


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-3, 3), st.floats(0, 8))
def test_infer_output_is_finite_pair(small_model, x, y, h, t):
    g = infer(small_model, [x, y], h, ObstacleState([0.5, -0.5], 0.3, 0.5), t)
    assert g.shape == (2,) and np.all(np.isfinite(g))


def test_infer_translation_invariance(small_model):
    rng = np.random.default_rng(2)
    for _ in range(100):
        x_p = np.round(rng.uniform(-3, 3, 2), 3)
        o = np.round(rng.uniform(-3, 3, 2), 3)
        off = rng.integers(-64, 64, 2) * 0.5  # exactly representable, exact sums
        obs = ObstacleState(o, 0.9, 0.5)
        shifted = ObstacleState(o + off, 0.9, 0.5)
        if (x_p + off - (o + off)).tolist() != (x_p - o).tolist():
            continue
        a = infer(small_model, x_p, 0.1, obs, 2.0)
        b = infer(small_model, x_p + off, 0.1, shifted, 2.0)
        assert a.tobytes() == b.tobytes()


def test_infer_rotation_equivariance(small_model):
    obs = ObstacleState([0.0, 0.0], 0.0, 0.5)
    g0 = infer(small_model, [1.0, 0.5], 0.0, obs, 3.0)
    rot = math.pi / 2
    g1 = infer(small_model, [-0.5, 1.0], rot, ObstacleState([0.0, 0.0], rot, 0.5), 3.0)
    assert g1 == pytest.approx([-g0[1], g0[0]], abs=1e-12)


def test_infer_domain_checks(small_model):
    obs = ObstacleState([0, 0], 0.0, 0.5)
    with pytest.raises(OutOfDomainError, match="horizon"):
        infer(small_model, [1, 1], 0.0, obs, 8.5)
    with pytest.raises(OutOfDomainError, match="speed"):
        infer(small_model, [1, 1], 0.0, ObstacleState([0, 0], 0.0, 0.9), 1.0)
    # positions outside the grid are clamped, not rejected
    assert np.all(np.isfinite(infer(small_model, [1e4, -1e4], 0.0, obs, 1.0)))


def test_nn_control_composition(small_model):
    gains = Gains(5.0, 10.0, 0.51)
    x_p, x_g = np.array([0.3, 0.2]), np.array([2.5, 0.0])
    empty = nn_control(small_model, x_p, 0.0, x_g, [], 1.0, gains, max_speed=100.0)
    exact = composed_control(x_p, x_g, [], gains, max_speed=100.0)
    assert empty.velocity.tolist() == exact.velocity.tolist()
    report = (ObstacleState([1.0, -1.0], 1.2, 0.5, 0.0), 0.0)
    single = infer(small_model, x_p, 0.0, report[0], 1.0)
    for n in (1, 2, 4):
        u = nn_control(small_model, x_p, 0.0, x_p, [report] * n, 1.0, gains,
                       max_speed=1e9).velocity
        assert u.tolist() == (-single * n).tolist()


def test_model_round_trip(small_model, tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_model(small_model, p1)
    back = load_model(p1)
    save_model(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert [p.tobytes() for p in back.params] == [p.tobytes() for p in small_model.params]
    obs = ObstacleState([0, 0], 0.0, 0.5)
    assert infer(back, [1, 1], 0, obs, 1).tolist() == infer(small_model, [1, 1], 0, obs, 1).tolist()


def test_model_errors(small_model, tmp_path):
    path = tmp_path / "m.json"
    save_model(small_model, path)
    raw = path.read_bytes()
    (tmp_path / "trunc.json").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(ModelFormatError, match="byte offset"):
        load_model(tmp_path / "trunc.json")
    d = json.loads(raw)
    d["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(d))
    with pytest.raises(UnsupportedVersionError):
        load_model(tmp_path / "v.json")
    d["version"] = 1
    d["weights"][0] = d["weights"][0][:-1]
    (tmp_path / "s.json").write_text(json.dumps(d))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "s.json")


def test_model_metadata(small_model):
    assert small_model.layer_sizes == [len(FEATURES), 8, 8, 2]
    assert small_model.horizon == 8.0
    assert small_model.gains == Gains(5.0, 10.0, 0.51)


def test_build_model_normalization():
    spec = tiny_spec()
    mlp = build_model(spec, TrainConfig(hidden=[4]))
    z = mlp.normalize(np.array([[-3, -3, 0, 0.5, 0], [6, 3, 0, 0.5, 8]], dtype=float))
    assert z.tolist() == [[-1, -1, 0, 0, -1], [1, 1, 0, 0, 1]]


def test_empty_training_data_rejected():
    spec = tiny_spec()
    empty = Dataset(np.empty((0, 5)), np.empty((0, 2)), spec)
    with pytest.raises(ValueError):
        fit(empty, TrainConfig(epochs=1))
