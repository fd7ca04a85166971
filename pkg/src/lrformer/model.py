"""Encoder-decoder assembly on top of the attention and tensor layers.

The encoder is a four-stage pyramid of basic blocks.  Each block applies a
3x3 depthwise convolution with a short connection (conditional positional
encoding), low-resolution attention over layer-normalized tokens, and a
feed-forward network whose two pointwise linears sandwich another residual
depthwise convolution:

    x   = x + DWConv(x)
    x   = x + LRSA(LayerNorm(x))
    out = x  + FFN(LayerNorm(x))

The segmentation decoder fuses the stride-8/16/32 features at stride 8,
refines them with two basic blocks at the decoder width, re-injecting the
stride-32 feature in between, and emits logits with a 1x1 convolution.
The classification head pools the final feature and applies a two-layer
MLP (hidden width 1280).

Inference is reentrant given a shared read-only ParamStore; training
mutates one store and is single-owner.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, AttentionParams, attend_lrsa
from .errors import ConfigError, DataError, ShapeError
from .rng import keyed_rng, trunc_normal
from .tensor import Tensor

SEGMENTATION = "segmentation"
CLASSIFICATION = "classification"

# Hidden width of the classification MLP head; with the plain encoder this
# reproduces the reference parameter budgets for every registered variant.
CLS_HEAD_HIDDEN = 1280

# Head width shared by the decoder blocks; divides every registered
# decoder width.
DECODER_HEAD_DIM = 32

DECODER_FFN_RATIO = 4


@dataclass(frozen=True)
class VariantSpec:
    """Per-stage architecture settings plus task-head configuration."""

    name: str
    channels: tuple
    head_dims: tuple
    ffn_ratios: tuple
    depths: tuple
    decoder_width: int
    task: str = SEGMENTATION
    num_classes: int = 150
    pooled_grid: int = 16
    kv_pyramid: bool = False
    pyramid_grids: tuple = (16, 8, 4)
    use_cpe_dwconv: bool = True
    use_ffn_dwconv: bool = True
    use_layer_scale: bool = False
    head_hidden: int = CLS_HEAD_HIDDEN

    def __post_init__(self):
        if self.task not in (SEGMENTATION, CLASSIFICATION):
            raise ConfigError(f"unknown task {self.task!r}")
        for field in ("channels", "head_dims", "ffn_ratios", "depths"):
            if len(getattr(self, field)) != 4:
                raise ConfigError(f"{field} must have one entry per stage")
        for c, ch in zip(self.channels, self.head_dims):
            if c % ch != 0:
                raise ConfigError(f"channels {c} not divisible by head_dim {ch}")
        if any(n < 1 for n in self.depths):
            raise ConfigError("every stage needs at least one block")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.decoder_width % DECODER_HEAD_DIM != 0:
            raise ConfigError(f"decoder width must be a multiple of {DECODER_HEAD_DIM}")

    @property
    def pooled_tokens(self) -> int:
        return self.pooled_grid * self.pooled_grid

    def attention_config(self, channels: int, head_dim: int) -> AttentionConfig:
        return AttentionConfig(
            channels=channels, head_dim=head_dim, scheme="lrsa",
            pooled_grid=self.pooled_grid, kv_pyramid=self.kv_pyramid,
            pyramid_grids=self.pyramid_grids)


_ENCODERS = {
    "T": dict(channels=(48, 96, 240, 384), head_dims=(24, 24, 24, 24),
              ffn_ratios=(8, 8, 4, 4), depths=(2, 2, 6, 3), decoder_width=256),
    "S": dict(channels=(64, 128, 320, 512), head_dims=(32, 32, 32, 32),
              ffn_ratios=(8, 8, 4, 4), depths=(3, 3, 12, 3), decoder_width=384),
    "B": dict(channels=(80, 160, 400, 512), head_dims=(40, 40, 40, 32),
              ffn_ratios=(8, 8, 4, 4), depths=(4, 4, 15, 8), decoder_width=512),
    "L": dict(channels=(96, 192, 480, 640), head_dims=(48, 48, 48, 40),
              ffn_ratios=(8, 8, 4, 4), depths=(4, 6, 18, 8), decoder_width=640),
    "XL": dict(channels=(128, 256, 640, 768), head_dims=(64, 64, 64, 48),
               ffn_ratios=(8, 8, 4, 4), depths=(4, 8, 22, 8), decoder_width=768),
    # Desk-scale variant used by the toy trainer and gradient checks.
    "micro": dict(channels=(16, 32, 64, 96), head_dims=(16, 16, 16, 16),
                  ffn_ratios=(4, 4, 4, 4), depths=(1, 1, 2, 1), decoder_width=64),
}

VARIANT_NAMES = tuple(_ENCODERS)


def make_spec(name: str, task: str = SEGMENTATION, num_classes: int = 150) -> VariantSpec:
    """Registered variant spec with task-appropriate pooling defaults."""
    if name not in _ENCODERS:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(_ENCODERS)}")
    if task == CLASSIFICATION:
        pooled, grids = 7, (7, 4, 2)
    else:
        pooled, grids = 16, (16, 8, 4)
    return VariantSpec(name=name, task=task, num_classes=num_classes,
                       pooled_grid=pooled, pyramid_grids=grids, **_ENCODERS[name])


class ParamStore:
    """Ordered name -> Tensor map; iteration order is construction order."""

    def __init__(self):
        self._params = {}

    def add(self, name: str, value: Tensor):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        self._params[name] = value

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def total_params(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grads(self):
        for p in self._params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# Parameter layout
# ---------------------------------------------------------------------------
# Kinds drive initialization: "linear" -> truncated normal(0.02, +-2 std),
# "conv"/"dwconv" -> fan-out scaled normal, "bias"/"beta" -> zeros,
# "gamma" -> ones, "scale" -> 1e-6.

def _block_entries(prefix: str, c: int, ratio: int, spec: VariantSpec):
    if spec.use_cpe_dwconv:
        yield f"{prefix}.cpe.weight", (c, 1, 3, 3), "dwconv"
        yield f"{prefix}.cpe.bias", (c,), "bias"
    yield f"{prefix}.attn.norm.gamma", (c,), "gamma"
    yield f"{prefix}.attn.norm.beta", (c,), "beta"
    for proj in ("q", "k", "v", "proj"):
        yield f"{prefix}.attn.{proj}.weight", (c, c), "linear"
        yield f"{prefix}.attn.{proj}.bias", (c,), "bias"
    if spec.use_layer_scale:
        yield f"{prefix}.attn.scale", (c,), "scale"
    hidden = ratio * c
    yield f"{prefix}.ffn.norm.gamma", (c,), "gamma"
    yield f"{prefix}.ffn.norm.beta", (c,), "beta"
    yield f"{prefix}.ffn.fc1.weight", (c, hidden), "linear"
    yield f"{prefix}.ffn.fc1.bias", (hidden,), "bias"
    if spec.use_ffn_dwconv:
        yield f"{prefix}.ffn.dw.weight", (hidden, 1, 3, 3), "dwconv"
        yield f"{prefix}.ffn.dw.bias", (hidden,), "bias"
    yield f"{prefix}.ffn.fc2.weight", (hidden, c), "linear"
    yield f"{prefix}.ffn.fc2.bias", (c,), "bias"
    if spec.use_layer_scale:
        yield f"{prefix}.ffn.scale", (c,), "scale"


def param_entries(spec: VariantSpec):
    """Yield (name, shape, kind) for every parameter, in store order."""
    c1, c2, c3, c4 = spec.channels
    yield "stem.conv.weight", (c1, 3, 7, 7), "conv"
    yield "stem.conv.bias", (c1,), "bias"
    yield "stem.norm.gamma", (c1,), "gamma"
    yield "stem.norm.beta", (c1,), "beta"
    for i in range(4):
        c = spec.channels[i]
        if i > 0:
            prev = spec.channels[i - 1]
            yield f"embed{i + 1}.conv.weight", (c, prev, 3, 3), "conv"
            yield f"embed{i + 1}.conv.bias", (c,), "bias"
            yield f"embed{i + 1}.norm.gamma", (c,), "gamma"
            yield f"embed{i + 1}.norm.beta", (c,), "beta"
        for j in range(spec.depths[i]):
            yield from _block_entries(f"stage{i + 1}.block{j}", c, spec.ffn_ratios[i], spec)
    if spec.task == SEGMENTATION:
        d = spec.decoder_width
        yield "decoder.squeeze1.weight", (d, c2 + c3 + c4, 1, 1), "conv"
        yield "decoder.squeeze1.bias", (d,), "bias"
        yield from _block_entries("decoder.block0", d, DECODER_FFN_RATIO, spec)
        yield "decoder.squeeze2.weight", (d, d + c4, 1, 1), "conv"
        yield "decoder.squeeze2.bias", (d,), "bias"
        yield from _block_entries("decoder.block1", d, DECODER_FFN_RATIO, spec)
        yield "decoder.classify.weight", (spec.num_classes, d, 1, 1), "conv"
        yield "decoder.classify.bias", (spec.num_classes,), "bias"
    else:
        yield "head.norm.gamma", (c4,), "gamma"
        yield "head.norm.beta", (c4,), "beta"
        yield "head.fc1.weight", (c4, spec.head_hidden), "linear"
        yield "head.fc1.bias", (spec.head_hidden,), "bias"
        yield "head.fc2.weight", (spec.head_hidden, spec.num_classes), "linear"
        yield "head.fc2.bias", (spec.num_classes,), "bias"


def _init_value(name: str, shape, kind: str, seed: int, dtype) -> np.ndarray:
    if kind == "bias" or kind == "beta":
        return np.zeros(shape, dtype=dtype)
    if kind == "gamma":
        return np.ones(shape, dtype=dtype)
    if kind == "scale":
        return np.full(shape, 1e-6, dtype=dtype)
    rng = keyed_rng(seed, name)
    if kind == "linear":
        return trunc_normal(rng, shape, 0.02).astype(dtype)
    if kind in ("conv", "dwconv"):
        cout, _, kh, kw = shape
        fan_out = kh * kw if kind == "dwconv" else kh * kw * cout
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_out)).astype(dtype)
    raise ConfigError(f"unknown parameter kind {kind!r}")


def init_params(store: ParamStore, spec: VariantSpec, seed: int, dtype=np.float32):
    """Fill a store for ``spec`` deterministically from ``seed``."""
    for name, shape, kind in param_entries(spec):
        store.add(name, Tensor(_init_value(name, shape, kind, seed, dtype),
                               requires_grad=True))


def build_variant(name_or_spec, task: str = SEGMENTATION, num_classes: int = 150,
                  seed: int = 0, dtype=np.float32):
    """Allocate and initialize all parameters; returns (store, spec)."""
    if isinstance(name_or_spec, VariantSpec):
        spec = name_or_spec
    else:
        spec = make_spec(name_or_spec, task=task, num_classes=num_classes)
    store = ParamStore()
    init_params(store, spec, seed, dtype=dtype)
    return store, spec


def validate_store(store: ParamStore, spec: VariantSpec):
    """Raise DataError if the store does not match the spec's layout."""
    expected = list(param_entries(spec))
    names = store.names()
    if len(names) != len(expected):
        raise DataError(f"store has {len(names)} parameters, spec expects {len(expected)}")
    for name, (exp_name, exp_shape, _) in zip(names, expected):
        if name != exp_name:
            raise DataError(f"parameter order mismatch: got {name!r}, expected {exp_name!r}")
        if store[name].shape != tuple(exp_shape):
            raise DataError(
                f"shape mismatch for {name!r}: file {store[name].shape}, spec {tuple(exp_shape)}")


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _norm_tokens(x: Tensor, store, prefix: str) -> Tensor:
    b, c, h, w = x.shape
    t = T.layer_norm(T.spatial_to_tokens(x), store[f"{prefix}.gamma"], store[f"{prefix}.beta"])
    return T.tokens_to_spatial(t, h, w)


def stem_forward(image: Tensor, store: ParamStore) -> Tensor:
    """Overlapped 7x7 stride-4 embedding: (B,3,H,W) -> (B,C1,H/4,W/4)."""
    x = T.conv2d(image, store["stem.conv.weight"], store["stem.conv.bias"],
                 stride=4, padding=3)
    return _norm_tokens(x, store, "stem.norm")


def patch_embed_forward(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """3x3 stride-2 convolution halving the grid between stages."""
    x = T.conv2d(x, store[f"{prefix}.conv.weight"], store[f"{prefix}.conv.bias"],
                 stride=2, padding=1)
    return _norm_tokens(x, store, f"{prefix}.norm")


def ffn_forward(x: Tensor, store: ParamStore, prefix: str, ratio: int,
                use_dwconv: bool = True) -> Tensor:
    """FFN branch (pre-residual): C -> ratio*C -> C with a depthwise conv."""
    b, c, h, w = x.shape
    t = T.add(T.matmul(T.spatial_to_tokens(x), store[f"{prefix}.fc1.weight"]),
              store[f"{prefix}.fc1.bias"])
    s = T.tokens_to_spatial(t, h, w)
    if use_dwconv:
        s = T.add(s, T.conv2d(s, store[f"{prefix}.dw.weight"], store[f"{prefix}.dw.bias"],
                              stride=1, padding=1, groups=ratio * c))
    s = T.gelu(s)
    t = T.add(T.matmul(T.spatial_to_tokens(s), store[f"{prefix}.fc2.weight"]),
              store[f"{prefix}.fc2.bias"])
    return T.tokens_to_spatial(t, h, w)


def _scaled(branch: Tensor, store, name: str, enabled: bool) -> Tensor:
    if not enabled:
        return branch
    c = branch.shape[1]
    return T.mul(branch, T.reshape(store[name], (1, c, 1, 1)))


def basic_block_forward(x: Tensor, store: ParamStore, prefix: str,
                        acfg: AttentionConfig, ratio: int, spec: VariantSpec,
                        trace=None) -> Tensor:
    """One residual block: CPE DWConv, low-resolution attention, FFN."""
    c = x.shape[1]
    if c != acfg.channels:
        raise ShapeError(f"block {prefix} expects {acfg.channels} channels, got {c}")
    if spec.use_cpe_dwconv:
        x = T.add(x, T.conv2d(x, store[f"{prefix}.cpe.weight"], store[f"{prefix}.cpe.bias"],
                              stride=1, padding=1, groups=c))
    attn_in = _norm_tokens(x, store, f"{prefix}.attn.norm")
    branch = attend_lrsa(attn_in, AttentionParams.from_store(store, f"{prefix}.attn"),
                         acfg, trace=trace)
    x = T.add(x, _scaled(branch, store, f"{prefix}.attn.scale", spec.use_layer_scale))
    ffn_in = _norm_tokens(x, store, f"{prefix}.ffn.norm")
    branch = ffn_forward(ffn_in, store, f"{prefix}.ffn", ratio, spec.use_ffn_dwconv)
    return T.add(x, _scaled(branch, store, f"{prefix}.ffn.scale", spec.use_layer_scale))


def encoder_forward(image: Tensor, store: ParamStore, spec: VariantSpec, trace=None):
    """Multi-level features (F1..F4) at strides 4, 8, 16, 32."""
    _, _, h, w = image.shape
    if h % 32 or w % 32:
        raise ConfigError(f"encoder input extents must be divisible by 32, got {h}x{w}")
    x = stem_forward(image, store)
    features = []
    for i in range(4):
        if i > 0:
            x = patch_embed_forward(x, store, f"embed{i + 1}")
        acfg = spec.attention_config(spec.channels[i], spec.head_dims[i])
        for j in range(spec.depths[i]):
            x = basic_block_forward(x, store, f"stage{i + 1}.block{j}", acfg,
                                    spec.ffn_ratios[i], spec, trace=trace)
        features.append(x)
    return tuple(features)


def decoder_forward(f2: Tensor, f3: Tensor, f4: Tensor, store: ParamStore,
                    spec: VariantSpec, trace=None) -> Tensor:
    """Fuse stride-8/16/32 features into stride-8 class logits."""
    _, _, h2, w2 = f2.shape
    if f3.shape[2:] != (h2 // 2, w2 // 2) or f4.shape[2:] != (h2 // 4, w2 // 4):
        raise ShapeError("decoder features do not come from one encoder pass")
    r3 = T.bilinear_resize(f3, h2, w2)
    r4 = T.bilinear_resize(f4, h2, w2)
    acfg = spec.attention_config(spec.decoder_width, DECODER_HEAD_DIM)
    x = T.concat([f2, r3, r4], axis=1)
    x = T.conv2d(x, store["decoder.squeeze1.weight"], store["decoder.squeeze1.bias"])
    x = basic_block_forward(x, store, "decoder.block0", acfg, DECODER_FFN_RATIO,
                            spec, trace=trace)
    x = T.concat([x, r4], axis=1)
    x = T.conv2d(x, store["decoder.squeeze2.weight"], store["decoder.squeeze2.bias"])
    x = basic_block_forward(x, store, "decoder.block1", acfg, DECODER_FFN_RATIO,
                            spec, trace=trace)
    return T.conv2d(x, store["decoder.classify.weight"], store["decoder.classify.bias"])


def segmentation_logits(image: Tensor, store: ParamStore, spec: VariantSpec,
                        trace=None) -> Tensor:
    """Class logits at stride 8 for a (B,3,H,W) image."""
    if spec.task != SEGMENTATION:
        raise ConfigError("segmentation_logits needs a segmentation spec")
    _, f2, f3, f4 = encoder_forward(image, store, spec, trace=trace)
    return decoder_forward(f2, f3, f4, store, spec, trace=trace)


def classifier_forward(image: Tensor, store: ParamStore, spec: VariantSpec,
                       trace=None) -> Tensor:
    """Class logits (B, num_classes) via global pooling of F4."""
    if spec.task != CLASSIFICATION:
        raise ConfigError("classifier_forward needs a classification spec")
    *_, f4 = encoder_forward(image, store, spec, trace=trace)
    pooled = T.mean(f4, axis=(2, 3))
    x = T.layer_norm(pooled, store["head.norm.gamma"], store["head.norm.beta"])
    x = T.add(T.matmul(x, store["head.fc1.weight"]), store["head.fc1.bias"])
    x = T.gelu(x)
    return T.add(T.matmul(x, store["head.fc2.weight"]), store["head.fc2.bias"])


def predict_mask(image: Tensor, store: ParamStore, spec: VariantSpec) -> np.ndarray:
    """Argmax label map at input resolution (inference only, no tape)."""
    with T.no_grad():
        logits = segmentation_logits(image, store, spec)
        full = T.bilinear_resize(logits, image.shape[2], image.shape[3])
    return np.argmax(full.data, axis=1)


def locality_spec(spec: VariantSpec, cpe: bool, ffn_dw: bool) -> VariantSpec:
    """Spec with the depthwise-convolution branches toggled (ablation)."""
    return replace(spec, use_cpe_dwconv=cpe, use_ffn_dwconv=ffn_dw)
