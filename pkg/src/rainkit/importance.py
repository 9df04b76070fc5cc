"""Input-variable importance: Bernoulli channel masks sampled by Gibbs, plus gradient sensitivity.

The mask posterior is proportional to ``exp(-r * sum(mask) - L(mask) / (2 sigma2))``
where ``L`` is the summed L1 test loss of the fitted network with masked
channels zeroed in normalized input space.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import Tensor, half_sq_norm
from .unet import UNet, evaluate_l1


class NonFiniteLoss(RuntimeError):
    def __init__(self, mask: np.ndarray, value: float):
        super().__init__(f"loss {value} for mask {mask.astype(int).tolist()}")
        self.mask = mask
        self.value = value


@dataclass
class GibbsConfig:
    r: float = 3.76
    sigma2: float = 0.01
    epochs: int = 1000
    burn_in: int = 950
    seed: int = 0
    scan: str = "sequential"  # or "random"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not 0 <= self.burn_in < self.epochs:
            raise ValueError("need 0 <= burn_in < epochs")
        if self.scan not in ("sequential", "random"):
            raise ValueError(f"unknown scan order {self.scan!r}")


@dataclass
class ImportanceChain:
    masks: np.ndarray  # (epochs, K) int8, state after each sweep
    burn_in: int
    loss_evaluations: int = 0
    names: list[str] = field(default_factory=list)

    @property
    def posterior_means(self) -> np.ndarray:
        return self.masks[self.burn_in :].mean(axis=0)

    def ranking(self, top: Optional[int] = 30) -> list[tuple[str, float]]:
        means = self.posterior_means
        names = self.names or [str(k) for k in range(len(means))]
        order = np.argsort(-means, kind="stable")
        return [(names[k], float(means[k])) for k in order[:top]]


def gibbs_conditional(r: float, sigma2: float, loss_in: float, loss_out: float) -> float:
    """Probability that a channel is included given the rest of the mask.

    ``loss_in`` / ``loss_out`` are the losses with the channel kept / masked.
    Evaluated so that large exponents saturate to 0 or 1 instead of overflowing.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    z = r + (loss_in - loss_out) / (2.0 * sigma2)
    if z >= 0:
        e = math.exp(-z) if z < 745 else 0.0
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def gibbs_sample(loss_fn: Callable[[np.ndarray], float], K: int, cfg: GibbsConfig, init=None) -> ImportanceChain:
    """Gibbs sampler over masks in {0,1}^K; losses are memoized per mask."""
    rng = np.random.default_rng(cfg.seed)
    delta = np.ones(K, dtype=np.int8) if init is None else np.asarray(init, dtype=np.int8).copy()
    if delta.shape != (K,):
        raise ValueError(f"initial mask must have length {K}")
    cache: dict[bytes, float] = {}

    def loss(mask: np.ndarray) -> float:
        key = mask.tobytes()
        if key not in cache:
            value = float(loss_fn(mask.copy()))
            if not math.isfinite(value):
                raise NonFiniteLoss(mask.copy(), value)
            cache[key] = value
        return cache[key]

    masks = np.empty((cfg.epochs, K), dtype=np.int8)
    for epoch in range(cfg.epochs):
        order = range(K) if cfg.scan == "sequential" else rng.permutation(K)
        for j in order:
            delta[j] = 1
            l_in = loss(delta)
            delta[j] = 0
            l_out = loss(delta)
            q = gibbs_conditional(cfg.r, cfg.sigma2, l_in, l_out)
            delta[j] = 1 if rng.random() < q else 0
        masks[epoch] = delta
    return ImportanceChain(masks, cfg.burn_in, loss_evaluations=len(cache))


def masked_loss(model: UNet, x: np.ndarray, y: np.ndarray, mask) -> float:
    """Summed L1 loss over a split with channels where ``mask == 0`` zeroed."""
    mask = np.asarray(mask)
    if mask.shape != (model.config.in_channels,):
        raise ValueError(f"mask length {mask.shape} does not match {model.config.in_channels} input channels")
    return evaluate_l1(model, x, y, mask=mask)


def gibbs_run(model: UNet, x: np.ndarray, y: np.ndarray, cfg: GibbsConfig, names: Sequence[str] = ()) -> ImportanceChain:
    chain = gibbs_sample(lambda m: masked_loss(model, x, y, m), model.config.in_channels, cfg)
    chain.names = list(names)
    return chain


def sensitivity(model: UNet, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Mean over samples of the summed absolute input gradient of half the squared output norm, per channel."""
    total = np.zeros(model.config.in_channels)
    for start in range(0, len(x), batch_size):
        xb = Tensor(np.asarray(x[start : start + batch_size], dtype=model.dtype), requires_grad=True)
        half_sq_norm(model.forward(xb)).backward()
        g = xb.grad if xb.grad is not None else np.zeros_like(xb.data)
        total += np.abs(g.astype(np.float64)).sum(axis=(0, 2, 3))
    return total / len(x)


# ---------------------------------------------------------------------------
# emission


def write_chain_csv(chain: ImportanceChain, path) -> None:
    names = chain.names or [str(k) for k in range(chain.masks.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", *names])
        for epoch, row in enumerate(chain.masks):
            w.writerow([epoch, *row.tolist()])


def write_means_json(chain: ImportanceChain, path) -> None:
    names = chain.names or [str(k) for k in range(chain.masks.shape[1])]
    payload = {
        "burn_in": chain.burn_in,
        "epochs": int(chain.masks.shape[0]),
        "posterior_means": dict(zip(names, chain.posterior_means.tolist())),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def write_ranking_csv(ranking: Sequence[tuple[str, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "variable", "score"])
        for i, (name, score) in enumerate(ranking, start=1):
            w.writerow([i, name, repr(score)])
