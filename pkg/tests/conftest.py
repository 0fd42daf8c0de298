import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tube_params(rng):
    """Random obstacle report and noise bounds covering UUV- and UGV-like scales."""
    from reachpf.dynamics import NoiseBounds, ObstacleState

    scale = 10.0 ** rng.uniform(-1, 2)
    obs = ObstacleState(rng.uniform(-50, 50, size=2), rng.uniform(-math.pi, math.pi),
                        scale * rng.uniform(0.1, 2.0), rng.uniform(0, 5))
    bounds = NoiseBounds(obs.speed * rng.uniform(0, 0.3), rng.uniform(0, 0.4))
    return obs, bounds


# ---------------------------------------------------------------- trained model

ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance line; printed now and again in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def uuv_trained(tmp_path_factory):
    """Desk-scale shipping-channel network, trained once per session."""
    from reachpf import nn, presets

    ds = nn.generate_training_data(presets.uuv_grid())
    result = nn.fit(ds, presets.train_config(seed=0))
    path = tmp_path_factory.mktemp("model") / "uuv_model.json"
    nn.save_model(result.mlp, path)
    return ds, result, path
