"""U-Net regression network: build, train, checkpoint, predict."""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import gtf
from .autodiff import Tensor, concat_channels, conv2d, l1_loss, maxpool2, mul_channels, relu, tconv2d
from .dataset import Normalizer
from .optim import AdamState, PlateauScheduler, adam_step

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GTCK"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 57
    out_channels: int = 1
    base_width: int = 8
    depth: int = 3

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.base_width) <= 0:
            raise ConfigError("channel counts and base_width must be positive")
        if self.depth < 1:
            raise ConfigError("depth must be at least 1")

    def widths(self) -> list[int]:
        return [self.base_width * 2**level for level in range(self.depth + 1)]

    def check_spatial(self, h: int, w: int) -> None:
        q = 2**self.depth
        if h % q or w % q:
            raise ConfigError(f"spatial dims {h}x{w} not divisible by 2**depth = {q}")


# Full-scale width preset; the desk default is UNetConfig().
FULL_SCALE_CONFIG = UNetConfig(in_channels=57, base_width=64, depth=3)


def _layer_shapes(cfg: UNetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) of every parameter."""
    widths = cfg.widths()
    shapes: list[tuple[str, tuple[int, ...]]] = []

    def conv(name, cin, cout, k=3):
        shapes.append((f"{name}.w", (cout, cin, k, k)))
        shapes.append((f"{name}.b", (cout,)))

    cin = cfg.in_channels
    for level in range(cfg.depth):
        conv(f"enc{level}.conv1", cin, widths[level])
        conv(f"enc{level}.conv2", widths[level], widths[level])
        cin = widths[level]
    conv("mid.conv1", cin, widths[cfg.depth])
    conv("mid.conv2", widths[cfg.depth], widths[cfg.depth])
    cin = widths[cfg.depth]
    for level in reversed(range(cfg.depth)):
        shapes.append((f"dec{level}.up.w", (cin, widths[level], 2, 2)))
        shapes.append((f"dec{level}.up.b", (widths[level],)))
        conv(f"dec{level}.conv1", 2 * widths[level], widths[level])
        conv(f"dec{level}.conv2", widths[level], widths[level])
        cin = widths[level]
    conv("head", cin, cfg.out_channels, k=1)
    return shapes


class UNet:
    def __init__(self, config: UNetConfig, params: dict[str, np.ndarray]):
        expected = _layer_shapes(config)
        if [n for n, _ in expected] != list(params):
            raise ConfigError("parameter names do not match the configuration")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ConfigError(f"{name}: shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = params

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "UNet":
        return UNet(self.config, {k: v.copy() for k, v in self.params.items()})

    def forward(self, x, mask: Optional[np.ndarray] = None, params: Optional[dict[str, Tensor]] = None) -> Tensor:
        """Run the network on a (N, K, H, W) batch; returns a (N, out, H, W) Tensor.

        ``mask`` zeroes input channels (entries 0/1, length K) before the first layer.
        ``params`` substitutes Tensors for the stored weights, which is how
        training obtains weight gradients.
        """
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if x.data.ndim != 4 or x.data.shape[1] != cfg.in_channels:
            raise ConfigError(f"expected (N, {cfg.in_channels}, H, W) input, got {x.data.shape}")
        cfg.check_spatial(*x.data.shape[2:])
        p = params if params is not None else {k: Tensor(v) for k, v in self.params.items()}
        if mask is not None:
            x = mul_channels(x, mask)

        def double_conv(h, name):
            h = relu(conv2d(h, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"]))
            return relu(conv2d(h, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"]))

        skips = []
        h = x
        for level in range(cfg.depth):
            h = double_conv(h, f"enc{level}")
            skips.append(h)
            h = maxpool2(h)
        h = double_conv(h, "mid")
        for level in reversed(range(cfg.depth)):
            h = tconv2d(h, p[f"dec{level}.up.w"], p[f"dec{level}.up.b"])
            h = concat_channels(h, skips[level])
            h = double_conv(h, f"dec{level}")
        return relu(conv2d(h, p["head.w"], p["head.b"]))

    def predict(self, x: np.ndarray, batch_size: int = 64, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Predicted rainfall images (N, H, W) for normalized inputs (N, K, H, W)."""
        x = np.asarray(x, dtype=self.dtype)
        outs = [self.forward(x[i : i + batch_size], mask=mask).data[:, 0] for i in range(0, len(x), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0,) + x.shape[2:], dtype=self.dtype)


def build(config: UNetConfig, seed: int = 0, dtype=np.float32) -> UNet:
    """Deterministic He-uniform initialization; biases start at zero.

    The 1x1 head draws from the nonnegative half of its range so that the
    output relu is active on any input that excites a decoder feature.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _layer_shapes(config):
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if ".up." in name:
            fan_in = shape[0]
        else:
            fan_in = shape[1] * shape[2] * shape[3]
        bound = math.sqrt(6.0 / fan_in)
        # The head reads relu features; nonnegative weights keep the output relu alive at init.
        low = 0.0 if name == "head.w" else -bound
        params[name] = rng.uniform(low, bound, size=shape).astype(dtype)
    return UNet(config, params)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 100
    factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be nonnegative")
        if self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if not 0 < self.factor < 1:
            raise ConfigError("factor must lie in (0, 1)")


@dataclass
class TrainResult:
    model: UNet
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf


def evaluate_l1(model: UNet, x: np.ndarray, y: np.ndarray, batch_size: int = 64, mask=None) -> float:
    """Summed L1 loss of the model over a dataset, accumulated in float64."""
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = model.forward(np.asarray(x[i : i + batch_size], dtype=model.dtype), mask=mask)
        total += float(l1_loss(pred, np.asarray(y[i : i + batch_size])[:, None]).data)
    return total


def train(
    model: UNet,
    x_train: np.ndarray,
    y_train: np.ndarray,
    cfg: TrainConfig,
    x_val: Optional[np.ndarray] = None,
    y_val: Optional[np.ndarray] = None,
) -> TrainResult:
    """Mini-batch Adam on the summed L1 loss.

    The scheduler follows the validation loss when a validation split is
    given, otherwise the epoch training loss.  The returned model holds the
    weights of the best monitored epoch.
    """
    if len(x_train) == 0:
        raise TrainingError("empty training split")
    if len(x_train) != len(y_train):
        raise TrainingError("inputs and targets differ in length")
    has_val = x_val is not None and len(x_val) > 0
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(patience=cfg.patience, factor=cfg.factor)
    names = list(model.params)
    result = TrainResult(model=model)
    best_params = {k: v.copy() for k, v in model.params.items()}
    n = len(x_train)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            tp = {k: Tensor(model.params[k], requires_grad=True) for k in names}
            xb = np.asarray(x_train[idx], dtype=model.dtype)
            loss = l1_loss(model.forward(xb, params=tp), np.asarray(y_train[idx])[:, None])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            loss.backward()
            grads = [tp[k].grad if tp[k].grad is not None else np.zeros_like(model.params[k]) for k in names]
            if epoch == 0 and start == 0 and not any(g.any() for g in grads):
                log.warning("first batch produced all-zero gradients; the output relu may be inactive everywhere")
            adam_step([model.params[k] for k in names], grads, state)
            epoch_loss += value
        result.train_loss.append(epoch_loss)
        monitored = epoch_loss
        if has_val:
            monitored = evaluate_l1(model, x_val, y_val)
            result.val_loss.append(monitored)
        if monitored < result.best_loss:
            result.best_loss = monitored
            result.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
        result.lr.append(state.lr)
        sched.step(monitored, state)
        log.debug("epoch %d train %.4f monitored %.4f lr %.2e", epoch, epoch_loss, monitored, state.lr)
    for k in names:
        model.params[k][...] = best_params[k]
    return result


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: UNet, path, normalizer: Optional[Normalizer] = None, **meta) -> None:
    """Write a checkpoint: magic, version, JSON header, then one GTF1 record per parameter."""
    if model.dtype != np.float32:
        raise ConfigError("checkpoints store float32 parameters; cast the model first")
    header = {
        "config": asdict(model.config),
        "params": list(model.params),
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
        **meta,
    }
    raw = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(raw)) + raw)
        for arr in model.params.values():
            fh.write(gtf.encode(_as_rank23(arr)))


def _as_rank23(arr: np.ndarray) -> np.ndarray:
    return arr.reshape(1, -1) if arr.ndim < 2 else arr.reshape(arr.shape[0], -1)


def load_checkpoint(path, expect: Optional[UNetConfig] = None) -> tuple[UNet, dict]:
    """Read a checkpoint; returns the model and its header (normalizer, meta)."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != CHECKPOINT_MAGIC:
            raise gtf.FormatError("not a checkpoint file", 0)
        version, n = struct.unpack("<II", head[4:12])
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {version}")
        raw = fh.read(n)
        if len(raw) < n:
            raise gtf.FormatError("truncated checkpoint header", 12 + len(raw))
        header = json.loads(raw.decode("utf-8"))
        config = UNetConfig(**header["config"])
        if expect is not None and expect != config:
            raise ConfigError(f"checkpoint config {config} does not match expected {expect}")
        shapes = dict(_layer_shapes(config))
        params = {}
        offset = 12 + n
        for name in header["params"]:
            if name not in shapes:
                raise ConfigError(f"unknown parameter {name} in checkpoint")
            arr = gtf.read_from(fh, offset)
            offset += gtf.HEADER_SIZE + 4 * arr.ndim + 4 * arr.size
            params[name] = arr.reshape(shapes[name]).copy()
    model = UNet(config, params)
    if header.get("normalizer") is not None:
        header["normalizer"] = Normalizer.from_dict(header["normalizer"])
    return model, header
