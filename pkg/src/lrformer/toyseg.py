"""Synthetic segmentation data, training loop and evaluation.

The generator draws 1-3 axis-aligned rectangles and ellipses of class 1 on
a noisy class-0 background; shape placement is redrawn until the
foreground covers 5-60% of the image.  Everything is keyed by the
counter-based RNG, so datasets, checkpoints and metrics are
bit-reproducible from (seed, steps, spec).

Training uses cross-entropy only, decoupled-weight-decay Adam with norm
affines exempt from decay, and a polynomially decayed learning rate
(power 1.0).  Data generation is parallelizable per sample; a training
step owns its optimizer state exclusively.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError
from .model import ParamStore, VariantSpec, segmentation_logits
from .rng import keyed_rng
from .tensor import Tensor

FG_FRACTION_RANGE = (0.05, 0.60)
_NOISE_STD = 0.06
_MAX_REDRAWS = 64


@dataclass
class Sample:
    """One image/mask pair: image (3,H,W) in [0,1], integer labels (H,W)."""

    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.image.shape[1:] != self.mask.shape:
            raise DataError(f"image {self.image.shape} and mask {self.mask.shape} disagree")


def _draw_shapes(rng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=np.int64)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.integers(size // 4, 3 * size // 4, size=2)
        ry, rx = rng.integers(size // 8, size // 3 + 1, size=2)
        if rng.random() < 0.5:
            hit = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            hit = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        mask[hit] = 1
    return mask


def _make_sample(rng, size: int) -> Sample:
    for _ in range(_MAX_REDRAWS):
        mask = _draw_shapes(rng, size)
        frac = mask.mean()
        if FG_FRACTION_RANGE[0] <= frac <= FG_FRACTION_RANGE[1]:
            break
    else:
        raise DataError("could not place shapes within the foreground budget")
    bg = rng.uniform(0.15, 0.40, size=3)
    fg = rng.uniform(0.60, 0.90, size=3)
    colors = np.where(mask[None], fg[:, None, None], bg[:, None, None])
    noise = rng.standard_normal((3, size, size)) * _NOISE_STD
    image = np.clip(colors + noise, 0.0, 1.0).astype(np.float32)
    return Sample(image=image, mask=mask)


def generate_dataset(seed: int, count: int, size: int, classes: int = 2):
    """Deterministic list of ``count`` samples at ``size``x``size``."""
    if size % 32:
        raise ConfigError(f"sample size must be divisible by 32, got {size}")
    if count < 1:
        raise ConfigError("dataset needs at least one sample")
    if classes != 2:
        raise ConfigError("the toy generator produces exactly 2 classes")
    return [_make_sample(keyed_rng(seed, f"sample{i}"), size) for i in range(count)]


def cross_entropy(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over pixels of -log softmax(logits)[label]; differentiable."""
    if logits.ndim != 4:
        raise DataError(f"logits must be (B,K,H,W), got {logits.shape}")
    if mask.shape != (logits.shape[0],) + logits.shape[2:]:
        raise DataError(f"mask shape {mask.shape} does not match logits {logits.shape}")
    k = logits.shape[1]
    if mask.min() < 0 or mask.max() >= k:
        raise DataError(f"labels must lie in [0, {k}), got [{mask.min()}, {mask.max()}]")
    picked = T.take_channel(T.log_softmax(logits, axis=1), mask.astype(np.int64))
    return T.mul(T.mean(picked), -1.0)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """AdamW moments plus hyperparameters; buffers shape-match parameters."""

    lr: float = 3e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _decay_exempt(name: str) -> bool:
    # Norm affines carry no weight decay.
    return name.endswith(".gamma") or name.endswith(".beta")


def adamw_step(store: ParamStore, grads: dict, state: OptimizerState,
               lr: float = None):
    """One decoupled-weight-decay Adam update, in place."""
    lr = state.lr if lr is None else lr
    b1, b2 = state.betas
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, param in store.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(param.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay and not _decay_exempt(name):
            update = update + state.weight_decay * param.data
        param.data -= lr * update


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    final_loss: float
    losses: list
    store: ParamStore
    spec: VariantSpec


def _batch(dataset, indices):
    images = np.stack([dataset[i].image for i in indices])
    masks = np.stack([dataset[i].mask for i in indices])
    return Tensor(images), masks


def _batch_loss(store, spec, images, masks) -> Tensor:
    logits = segmentation_logits(images, store, spec)
    full = T.bilinear_resize(logits, masks.shape[1], masks.shape[2])
    return cross_entropy(full, masks)


def train_toy(store: ParamStore, spec: VariantSpec, steps: int, seed: int,
              lr: float = 3e-4, batch_size: int = 4, size: int = 64,
              train_count: int = 32, progress=None) -> TrainResult:
    """Deterministic toy training loop; returns the final evaluation loss.

    The learning rate follows lr * (1 - t/steps)^1.0.  ``progress`` is an
    optional callable(step, loss) for CLI reporting.
    """
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    dataset = generate_dataset(seed, train_count, size)
    order = keyed_rng(seed, "batch-order")
    state = OptimizerState(lr=lr)
    losses = []
    for step in range(steps):
        idx = order.integers(0, len(dataset), size=batch_size)
        images, masks = _batch(dataset, idx)
        loss = _batch_loss(store, spec, images, masks)
        T.backward(loss)
        grads = {name: p.grad for name, p in store.items() if p.grad is not None}
        step_lr = lr * (1.0 - step / steps)
        adamw_step(store, grads, state, lr=step_lr)
        store.zero_grads()
        losses.append(loss.item())
        if progress is not None:
            progress(step, losses[-1])
    with T.no_grad():
        images, masks = _batch(dataset, range(min(batch_size, len(dataset))))
        final_loss = _batch_loss(store, spec, images, masks).item()
    return TrainResult(final_loss=final_loss, losses=losses, store=store, spec=spec)


def evaluate(store: ParamStore, spec: VariantSpec, dataset) -> dict:
    """Pixel accuracy, per-class IoU and mIoU from argmax predictions."""
    k = spec.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    with T.no_grad():
        for sample in dataset:
            images = Tensor(sample.image[None])
            logits = segmentation_logits(images, store, spec)
            full = T.bilinear_resize(logits, sample.mask.shape[0], sample.mask.shape[1])
            pred = np.argmax(full.data[0], axis=0)
            idx = sample.mask.reshape(-1) * k + pred.reshape(-1)
            confusion += np.bincount(idx, minlength=k * k).reshape(k, k)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    union = tp + fp + fn
    iou = np.full(k, np.nan)
    seen = union > 0
    iou[seen] = tp[seen] / union[seen]
    return {
        "pixel_accuracy": float(tp.sum() / confusion.sum()),
        "iou": [None if not s else float(v) for v, s in zip(iou, seen)],
        "miou": float(np.nanmean(iou)),
    }
