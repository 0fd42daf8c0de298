"""Neural approximation of the per-obstacle repulsive gradient.

Training labels come from the exact reach-tube field on a grid of
obstacle-relative configurations. At run time the network replaces the
tube construction and closest-point query; per-obstacle outputs are summed
so any number of obstacles can be handled by one network.

Features are expressed in the obstacle's heading frame: the robot's
position relative to the obstacle (along-track, cross-track), the robot's
heading relative to the obstacle's, the obstacle speed and the time since
the report. Outputs live in the same frame and are rotated back to world
coordinates. The regression target is the gradient compressed by a signed
power (``g |g|^(p-1)``) so near-field and far-field points carry comparable
weight in the squared error.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import kernels
from .dynamics import DEFAULT_MAX_SPEED, Command, NoiseBounds, ObstacleState, make_command
from .errors import (ModelFormatError, OutOfDomainError, TrainingDiverged,
                     UnsupportedVersionError)
from .potential import Gains, attractive_gradient
from .reachability import ReachTube, TubeSlice, closest_point_batch

FEATURES = ("along", "across", "rel_heading", "speed", "elapsed")
MODEL_FORMAT = "reachpf-mlp"
MODEL_VERSION = 1
DATA_MAGIC = b"RPFDATA\x00"
DATA_VERSION = 1

# slack when checking elapsed time and speed against the trained domain
_DOMAIN_TOL = 1e-9


def _wrap(theta):
    w = np.remainder(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def featurize(x_p, x_h, o_position, o_heading, o_speed, elapsed) -> np.ndarray:
    """Obstacle-frame feature vector(s). Broadcasts over array arguments.

    Scalar inputs take a ``math`` fast path; both paths evaluate the same
    expressions in the same order.
    """
    if np.ndim(x_h) == 0 and np.ndim(o_heading) == 0 and np.ndim(o_speed) == 0 \
            and np.ndim(elapsed) == 0 and np.shape(x_p) == (2,) and np.shape(o_position) == (2,):
        dx = float(x_p[0]) - float(o_position[0])
        dy = float(x_p[1]) - float(o_position[1])
        c = math.cos(o_heading)
        s = math.sin(o_heading)
        rel = math.fmod(float(x_h) - o_heading + math.pi, 2 * math.pi)
        if rel < 0.0:
            rel += 2 * math.pi
        rel -= math.pi
        if rel == -math.pi:
            rel = math.pi
        return np.array([c * dx + s * dy, -s * dx + c * dy, rel, float(o_speed),
                         float(elapsed)])
    x_p = np.asarray(x_p, dtype=np.float64)
    o_position = np.asarray(o_position, dtype=np.float64)
    dx = x_p[..., 0] - o_position[..., 0]
    dy = x_p[..., 1] - o_position[..., 1]
    c = np.cos(o_heading)
    s = np.sin(o_heading)
    along = c * dx + s * dy
    across = -s * dx + c * dy
    rel = _wrap(np.asarray(x_h, dtype=np.float64) - o_heading)
    along, across, rel, speed, elapsed = np.broadcast_arrays(
        along, across, rel, np.asarray(o_speed, dtype=np.float64),
        np.asarray(elapsed, dtype=np.float64))
    return np.stack([along, across, rel, speed, elapsed], axis=-1)


# ---------------------------------------------------------------- data


@dataclass
class GridAxis:
    """Evenly spaced axis, optionally merged with denser sub-ranges.

    ``refine`` holds ``[lo, hi, n]`` triples lying inside ``[lo, hi]``;
    their points are unioned with the base points.
    """

    lo: float
    hi: float
    n: int
    refine: list = field(default_factory=list)

    def __post_init__(self):
        self.lo = float(self.lo)
        self.hi = float(self.hi)
        self.n = int(self.n)
        self.refine = [[float(a), float(b), int(k)] for a, b, k in self.refine]

    def values(self) -> np.ndarray:
        base = np.array([self.lo]) if self.n == 1 else np.linspace(self.lo, self.hi, self.n)
        if not self.refine:
            return base
        parts = [base] + [np.linspace(a, b, k) for a, b, k in self.refine]
        return np.unique(np.concatenate(parts))

    @property
    def count(self) -> int:
        return len(self.values())


@dataclass
class GridSpec:
    along: GridAxis
    across: GridAxis
    rel_heading: GridAxis
    speed: GridAxis
    elapsed: GridAxis
    gains: Gains
    bounds: NoiseBounds
    horizon: float
    footprint_radius: float = 0.0
    label_cap: float = 1e3

    def __post_init__(self):
        for name in FEATURES:
            axis = getattr(self, name)
            if axis.n < 1:
                raise ValueError(f"{name}: step count must be >= 1")
            if not (math.isfinite(axis.lo) and math.isfinite(axis.hi)) or axis.hi < axis.lo:
                raise ValueError(f"{name}: range must satisfy lo <= hi")
            if axis.n > 1 and axis.hi == axis.lo:
                raise ValueError(f"{name}: empty range with {axis.n} steps")
            for a, b, k in axis.refine:
                if not (axis.lo <= a <= b <= axis.hi) or k < 1:
                    raise ValueError(f"{name}: refine range [{a}, {b}] outside [lo, hi]")
        if self.speed.lo < 0.0:
            raise ValueError("speed: range must be non-negative")
        if self.elapsed.lo < 0.0 or self.elapsed.hi > self.horizon:
            raise ValueError("elapsed: range must lie within [0, horizon]")
        if not self.horizon > 0.0:
            raise ValueError("horizon: must be positive")
        if not self.label_cap > 0.0:
            raise ValueError("label_cap: must be positive")

    @property
    def axes(self) -> list[GridAxis]:
        return [getattr(self, name) for name in FEATURES]

    @property
    def size(self) -> int:
        return int(np.prod([a.count for a in self.axes]))

    def to_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in FEATURES}
        out.update(gains=asdict(self.gains), bounds=asdict(self.bounds), horizon=self.horizon,
                   footprint_radius=self.footprint_radius, label_cap=self.label_cap)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        try:
            axes = {name: GridAxis(**d[name]) for name in FEATURES}
            return cls(**axes, gains=Gains(**d["gains"]), bounds=NoiseBounds(**d["bounds"]),
                       horizon=float(d["horizon"]),
                       footprint_radius=float(d.get("footprint_radius", 0.0)),
                       label_cap=float(d.get("label_cap", 1e3)))
        except KeyError as exc:
            raise ValueError(f"{exc.args[0]}: missing field") from None
        except TypeError as exc:
            raise ValueError(f"malformed grid spec: {exc}") from None


class TrainSample(NamedTuple):
    input: np.ndarray
    label: np.ndarray


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    spec: GridSpec
    excluded_inside: int = 0
    excluded_cap: int = 0

    def __len__(self) -> int:
        return len(self.inputs)

    def samples(self) -> Iterator[TrainSample]:
        for x, y in zip(self.inputs, self.labels):
            yield TrainSample(x, y)


def grid_configuration(along: float, across: float, rel_heading: float, speed: float,
                       elapsed: float, spec: GridSpec):
    """Concrete (robot, obstacle, elapsed) tuple behind one grid point.

    The obstacle sits at the origin heading along +x with timestamp 0; the
    robot sits at (along, across) with heading ``rel_heading``.
    """
    x_p = np.array([along, across])
    obs = ObstacleState(np.zeros(2), 0.0, speed, 0.0)
    return x_p, float(rel_heading), obs, float(elapsed)


def _grid_tube(speed: float, spec: GridSpec) -> ReachTube:
    b = spec.bounds
    return ReachTube(np.zeros(2), 0.0, 0.0, b.heading_bound, max(speed - b.speed_bound, 0.0),
                     speed + b.speed_bound, spec.horizon, spec.footprint_radius)


def exact_gradient_batch(points: np.ndarray, slc: TubeSlice, k_r: float, delta: float):
    """Repulsive gradients for many robot positions against one slice.

    Returns ``(gradients, distances)``; rows with distance <= delta are NaN.
    Operation order mirrors ``potential.gradient_from_closest``.
    """
    closest, dist = closest_point_batch(slc, points)
    ok = dist > delta
    safe_d = np.where(ok, dist, np.nan)
    unit = (points - closest) / safe_d[:, None]
    grad = -k_r * unit / ((safe_d - delta) ** 3)[:, None]
    return grad, dist


def generate_training_data(spec: GridSpec) -> Dataset:
    """One labelled sample per grid point, in C order over the feature axes.

    Points within the safety threshold of the tube and points whose label
    magnitude exceeds ``spec.label_cap`` are dropped and counted.
    """
    along, across, rel, speed, elapsed = (a.values() for a in spec.axes)
    aa, cc = np.meshgrid(along, across, indexing="ij")
    plane = np.stack([aa.ravel(), cc.ravel()], axis=1)
    inputs, labels = [], []
    n_inside = n_cap = 0
    for h in rel:
        for v in speed:
            tube = _grid_tube(v, spec)
            for t in elapsed:
                grad, dist = exact_gradient_batch(plane, tube.slice(float(t)),
                                                  spec.gains.k_r, spec.gains.delta)
                inside = ~(dist > spec.gains.delta)
                mag = np.hypot(grad[:, 0], grad[:, 1])
                capped = ~inside & (mag > spec.label_cap)
                keep = ~inside & ~capped
                n_inside += int(inside.sum())
                n_cap += int(capped.sum())
                x_p = plane[keep]
                feats = featurize(x_p, h, np.zeros(2), 0.0, v, t)
                inputs.append(feats)
                labels.append(grad[keep])
    # restore C order over (along, across, rel, speed, elapsed)
    X = np.concatenate(inputs) if inputs else np.empty((0, 5))
    Y = np.concatenate(labels) if labels else np.empty((0, 2))
    order = np.lexsort((X[:, 4], X[:, 3], X[:, 2], X[:, 1], X[:, 0]))
    return Dataset(np.ascontiguousarray(X[order]), np.ascontiguousarray(Y[order]), spec,
                   n_inside, n_cap)


def write_dataset(ds: Dataset, path) -> None:
    """Binary layout: magic, u32 version, u32 header length, JSON header,
    then little-endian float64 inputs (n x 5) and labels (n x 2), row-major."""
    header = json.dumps({
        "version": DATA_VERSION, "count": len(ds), "features": list(FEATURES),
        "excluded_inside": ds.excluded_inside, "excluded_cap": ds.excluded_cap,
        "spec": ds.spec.to_dict(),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC)
        fh.write(struct.pack("<II", DATA_VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(ds.inputs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<f8").tobytes())


def read_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:8] != DATA_MAGIC:
        raise ModelFormatError("not a dataset file", 0)
    if len(raw) < 16:
        raise ModelFormatError("truncated dataset header", len(raw))
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != DATA_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version}", 8)
    try:
        header = json.loads(raw[16:16 + hlen])
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"bad dataset header: {exc.msg}", 16 + exc.pos) from None
    n = int(header["count"])
    start = 16 + hlen
    need = start + n * 7 * 8
    if len(raw) != need:
        raise ModelFormatError(f"dataset payload size mismatch, expected {need} bytes",
                               min(len(raw), need))
    X = np.frombuffer(raw, dtype="<f8", count=n * 5, offset=start).reshape(n, 5).copy()
    Y = np.frombuffer(raw, dtype="<f8", count=n * 2, offset=start + n * 40).reshape(n, 2).copy()
    return Dataset(X, Y, GridSpec.from_dict(header["spec"]), header["excluded_inside"],
                   header["excluded_cap"])


# ---------------------------------------------------------------- network


@dataclass
class Mlp:
    """Fully connected ReLU regressor with input normalisation.

    ``weights[k]`` has shape ``(n_in, n_out)``; hidden layers use ReLU and
    the output layer is linear.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_lo: np.ndarray
    input_hi: np.ndarray
    output_power: float = 1.0
    output_scale: float = 1.0
    horizon: float = math.inf
    gains: Gains | None = None
    bounds: NoiseBounds | None = None
    footprint_radius: float = 0.0
    _packed: tuple | None = field(default=None, repr=False, compare=False)
    _runtime: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count mismatch")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[k], self.layer_sizes[k + 1]):
                raise ValueError(f"layer {k}: weight shape {w.shape} inconsistent with sizes")
            if b.shape != (self.layer_sizes[k + 1],):
                raise ValueError(f"layer {k}: bias shape {b.shape} inconsistent with sizes")
        self.input_lo = np.asarray(self.input_lo, dtype=np.float64)
        self.input_hi = np.asarray(self.input_hi, dtype=np.float64)

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng: np.random.Generator,
                   input_lo=None, input_hi=None, **meta) -> "Mlp":
        """He-normal weights, zero biases."""
        ws, bs = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            ws.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)))
            bs.append(np.zeros(n_out))
        n0 = layer_sizes[0]
        lo = -np.ones(n0) if input_lo is None else input_lo
        hi = np.ones(n0) if input_hi is None else input_hi
        return cls(list(layer_sizes), ws, bs, lo, hi, **meta)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def invalidate(self) -> None:
        self._packed = None
        self._runtime = None

    def packed(self):
        if self._packed is None:
            flat = np.concatenate([p.ravel() for p in self.params])
            self._packed = (np.array(self.layer_sizes, dtype=np.int64), flat)
        return self._packed

    def normalize(self, X: np.ndarray) -> np.ndarray:
        span = self.input_hi - self.input_lo
        safe = np.where(span > 0.0, span, 1.0)
        Z = 2.0 * (X - self.input_lo) / safe - 1.0
        return np.where(span > 0.0, Z, 0.0)

    def forward_raw(self, Z: np.ndarray) -> np.ndarray:
        """Network output on already-normalised inputs, batched."""
        h = Z
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    def encode(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        mag = np.hypot(g[..., 0], g[..., 1])[..., None]
        if self.output_power == 1.0:
            return g / self.output_scale
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(mag > 0.0, mag ** (self.output_power - 1.0), 0.0)
        return g * factor / self.output_scale

    def decode(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64) * self.output_scale
        if self.output_power == 1.0:
            return y
        mag = np.hypot(y[..., 0], y[..., 1])[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(mag > 0.0, mag ** (1.0 / self.output_power - 1.0), 0.0)
        return y * factor

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Decoded gradients (obstacle frame) for raw feature rows."""
        return self.decode(self.forward_raw(self.normalize(np.asarray(X, dtype=np.float64))))


def backprop(mlp: Mlp, Z: np.ndarray, T: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared error over all outputs and its parameter gradients.

    Gradient list follows ``mlp.params`` order (w0, b0, w1, b1, ...).
    """
    acts = [Z]
    h = Z
    last = len(mlp.weights) - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    err = acts[-1] - T
    loss = float(np.mean(err * err))
    delta = 2.0 * err / err.size
    grads = [None] * (2 * len(mlp.weights))
    for k in range(last, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ mlp.weights[k].T) * (acts[k] > 0.0)
    return loss, grads


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 256
    learning_rate: float = 0.02
    momentum: float = 0.9
    lr_decay_every: int = 20
    lr_decay_factor: float = 0.5
    seed: int = 0
    val_fraction: float = 0.1
    hidden: list[int] = field(default_factory=lambda: [16, 16, 16, 16])
    output_power: float = 0.25
    grad_clip: float = 10.0

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate: must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction: must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown train config field")
        return cls(**d)


@dataclass
class TrainResult:
    mlp: Mlp
    history: list[tuple[int, float, float]]
    val_mse: float
    val_index: np.ndarray


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    if n_val >= n:
        n_val = n - 1
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(mlp: Mlp, inputs: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
          log=None) -> TrainResult:
    """Mini-batch gradient descent with momentum and step learning-rate decay.

    The loss is the mean squared error between network outputs and the
    encoded labels. Validation MSE is in the same encoded space. With
    ``val_fraction == 0`` the validation MSE is the final training MSE.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(labels, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("training data is empty")
    tr, va = split_indices(len(X), cfg.val_fraction, cfg.seed)
    Z = mlp.normalize(X)
    E = mlp.encode(Y)
    Ztr, Etr = Z[tr], E[tr]
    rng = np.random.default_rng(cfg.seed + 1)
    velocity = [np.zeros_like(p) for p in mlp.params]
    history = []
    lr = cfg.learning_rate
    n = len(Ztr)
    for epoch in range(1, cfg.epochs + 1):
        if epoch > 1 and cfg.lr_decay_every > 0 and (epoch - 1) % cfg.lr_decay_every == 0:
            lr *= cfg.lr_decay_factor
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = backprop(mlp, Ztr[idx], Etr[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch)
            total += loss * len(idx)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            clip = 1.0 if norm <= cfg.grad_clip else cfg.grad_clip / norm
            for p, g, v in zip(mlp.params, grads, velocity):
                v *= cfg.momentum
                v -= (lr * clip) * g
                p += v
        train_mse = total / n
        if len(va):
            err = mlp.forward_raw(Z[va]) - E[va]
            val_mse = float(np.mean(err * err))
        else:
            val_mse = train_mse
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            raise TrainingDiverged(epoch)
        history.append((epoch, train_mse, val_mse))
        if log is not None:
            log(epoch, train_mse, val_mse)
    mlp.invalidate()
    if len(va) == 0:
        err = mlp.forward_raw(Ztr) - Etr
        history[-1] = (history[-1][0], history[-1][1], float(np.mean(err * err)))
    return TrainResult(mlp, history, history[-1][2], va)


def build_model(spec: GridSpec, cfg: TrainConfig, labels: np.ndarray | None = None) -> Mlp:
    """Fresh network whose normalisation and metadata come from ``spec``."""
    lo = np.array([a.lo for a in spec.axes])
    hi = np.array([a.hi for a in spec.axes])
    rng = np.random.default_rng(cfg.seed)
    sizes = [len(FEATURES), *cfg.hidden, 2]
    mlp = Mlp.initialize(sizes, rng, lo, hi, output_power=cfg.output_power,
                         horizon=spec.horizon, gains=spec.gains, bounds=spec.bounds,
                         footprint_radius=spec.footprint_radius)
    if labels is not None and len(labels):
        enc = mlp.encode(labels)
        mlp.output_scale = float(np.sqrt(np.mean(enc * enc))) or 1.0
    return mlp


def fit(ds: Dataset, cfg: TrainConfig, log=None) -> TrainResult:
    mlp = build_model(ds.spec, cfg, ds.labels)
    return train(mlp, ds.inputs, ds.labels, cfg, log=log)


# ---------------------------------------------------------------- runtime


def _runtime_tables(mlp: Mlp):
    if mlp._runtime is None:
        span = mlp.input_hi - mlp.input_lo
        scale = [2.0 / w if w > 0.0 else 0.0 for w in span]
        mlp._runtime = (list(mlp.input_lo), list(mlp.input_hi), scale)
    return mlp._runtime


def infer(mlp: Mlp, x_p, x_h: float, o: ObstacleState, t: float) -> np.ndarray:
    """Approximate world-frame repulsive gradient for one obstacle report.

    ``t`` is the time elapsed since the report. Elapsed times beyond the
    trained horizon and speeds outside the trained range raise
    ``OutOfDomainError``; positions and relative heading outside the grid
    are clamped to it, where the field is negligible.
    """
    feats = featurize(x_p, x_h, o.position, o.heading, o.speed, t)
    lo, hi, scale = _runtime_tables(mlp)
    elapsed = feats[4]
    if elapsed < -_DOMAIN_TOL or elapsed > mlp.horizon + _DOMAIN_TOL:
        raise OutOfDomainError(f"elapsed time {elapsed:.6g} s outside trained horizon "
                               f"[0, {mlp.horizon:.6g}]")
    tol = _DOMAIN_TOL * max(1.0, abs(hi[3]))
    if feats[3] < lo[3] - tol or feats[3] > hi[3] + tol:
        raise OutOfDomainError(f"obstacle speed {feats[3]:.6g} outside trained range "
                               f"[{lo[3]:.6g}, {hi[3]:.6g}]")
    z = [0.0] * 5
    for j in range(5):
        v = min(max(float(feats[j]), lo[j]), hi[j])
        z[j] = (v - lo[j]) * scale[j] - 1.0 if scale[j] else 0.0
    sizes, flat = mlp.packed()
    y = kernels.mlp_forward(z, sizes, flat)
    ya = float(y[0]) * mlp.output_scale
    yb = float(y[1]) * mlp.output_scale
    if mlp.output_power != 1.0:
        mag = math.hypot(ya, yb)
        f = mag ** (1.0 / mlp.output_power - 1.0) if mag > 0.0 else 0.0
        ya *= f
        yb *= f
    c, s = math.cos(o.heading), math.sin(o.heading)
    return np.array([c * ya - s * yb, s * ya + c * yb])


def nn_velocity(mlp: Mlp, x_p, x_h: float, x_g, reports, now: float, gains: Gains) -> np.ndarray:
    u = -attractive_gradient(x_p, x_g, gains.k_p)
    for obs, receipt in reports:
        u = u - infer(mlp, x_p, x_h, obs, now - receipt)
    return u


def nn_control(mlp: Mlp, x_p, x_h: float, x_g, reports, now: float, gains: Gains,
               max_speed: float = DEFAULT_MAX_SPEED) -> Command:
    """Descent command with network-estimated repulsion.

    ``reports`` is a sequence of ``(ObstacleState, receipt_time)`` pairs,
    summed in the given order.
    """
    return make_command(nn_velocity(mlp, x_p, x_h, x_g, reports, now, gains), max_speed)


# ---------------------------------------------------------------- files


def _opt(d):
    return None if d is None else asdict(d)


def model_to_dict(mlp: Mlp) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "features": list(FEATURES),
        "layer_sizes": mlp.layer_sizes,
        "activation": "relu",
        "output_activation": "linear",
        "input_lo": mlp.input_lo.tolist(),
        "input_hi": mlp.input_hi.tolist(),
        "output_power": mlp.output_power,
        "output_scale": mlp.output_scale,
        "horizon": mlp.horizon if math.isfinite(mlp.horizon) else None,
        "gains": _opt(mlp.gains),
        "noise_bounds": _opt(mlp.bounds),
        "footprint_radius": mlp.footprint_radius,
        "weights": [w.ravel().tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }


def save_model(mlp: Mlp, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(mlp), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> Mlp:
    text = Path(path).read_bytes().decode("utf-8", errors="strict")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file: {exc.msg}",
                               len(text[:exc.pos].encode())) from None
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a reachpf model file", 0)
    if d.get("version") != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {d.get('version')!r}")
    try:
        sizes = [int(n) for n in d["layer_sizes"]]
        weights = [np.array(w, dtype=np.float64).reshape(sizes[k], sizes[k + 1])
                   for k, w in enumerate(d["weights"])]
        biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
        gains = Gains(**d["gains"]) if d.get("gains") else None
        bounds = NoiseBounds(**d["noise_bounds"]) if d.get("noise_bounds") else None
        horizon = math.inf if d.get("horizon") is None else float(d["horizon"])
        mlp = Mlp(sizes, weights, biases, d["input_lo"], d["input_hi"],
                  float(d["output_power"]), float(d["output_scale"]), horizon, gains, bounds,
                  float(d.get("footprint_radius", 0.0)))
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise ModelFormatError(f"inconsistent model file: {exc}") from None
    if not all(np.all(np.isfinite(p)) for p in mlp.params):
        raise ModelFormatError("model parameters must be finite")
    return mlp
