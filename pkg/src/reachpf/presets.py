"""Grid specs and training settings matched to the bundled scenario families."""
from __future__ import annotations

from . import sim
from .dynamics import Footprint
from .nn import GridAxis, GridSpec, TrainConfig
from .potential import Gains


def uuv_grid(scale: float = 1.0) -> GridSpec:
    """Shipping-channel grid: ~4.6e5 points at ``scale=1``.

    Cross-track resolution is refined over the band where the tube edge
    and the safety margin sit.
    """
    def n(k):
        return max(int(round(k * scale)), 2)

    return GridSpec(
        along=GridAxis(-400.0, 3400.0, n(50)),
        across=GridAxis(-200.0, 200.0, n(101),
                        refine=[[-84.0, -34.0, n(101)], [34.0, 84.0, n(101)]]),
        rel_heading=GridAxis(0.0, 0.0, 1),
        speed=GridAxis(sim.UUV_SHIP_SPEED, sim.UUV_SHIP_SPEED, 1),
        elapsed=GridAxis(0.0, sim.UUV_HORIZON, n(41)),
        gains=Gains(sim.UUV_K_P, sim.UUV_K_R, sim.UUV_DELTA),
        bounds=sim.NoiseBounds(sim.UUV_SPEED_NOISE, sim.UUV_HEADING_NOISE),
        horizon=sim.UUV_HORIZON,
        footprint_radius=Footprint(sim.UUV_SHIP_LENGTH, sim.UUV_SHIP_WIDTH).radius,
        label_cap=1e4,
    )


def ugv_grid(scale: float = 1.0) -> GridSpec:
    def n(k):
        return max(int(round(k * scale)), 2)

    return GridSpec(
        along=GridAxis(-3.0, 6.0, n(91)),
        across=GridAxis(-3.0, 3.0, n(61), refine=[[-1.5, -0.4, n(45)], [0.4, 1.5, n(45)]]),
        rel_heading=GridAxis(0.0, 0.0, 1),
        speed=GridAxis(sim.UGV_SPEED, sim.UGV_SPEED, 1),
        elapsed=GridAxis(0.0, sim.UGV_HORIZON, n(33)),
        gains=Gains(sim.UGV_K_P, sim.UGV_K_R, sim.UGV_DELTA),
        bounds=sim.UGV_NOISE,
        horizon=sim.UGV_HORIZON,
        footprint_radius=0.0,
        label_cap=1e3,
    )


def train_config(seed: int = 0, epochs: int = 100) -> TrainConfig:
    """Four hidden ReLU layers of 16 units."""
    return TrainConfig(epochs=epochs, batch_size=256, learning_rate=0.02, momentum=0.9,
                       lr_decay_every=30, lr_decay_factor=0.5, seed=seed, val_fraction=0.1,
                       hidden=[16, 16, 16, 16], output_power=0.25)


GRIDS = {"uuv": uuv_grid, "ugv": ugv_grid}
