"""Self-attention schemes behind one interface.

Three paradigms are implemented as pure functions over inputs and
parameters: full-resolution attention, attention with ratio-downsampled
keys/values (kept as the reference baseline for cost comparisons), and
low-resolution attention where query, key and value sources are all pooled
to a fixed grid and the result is bilinearly resized back.

Keys/values for the low-resolution scheme can optionally be drawn from a
multi-grid average-pooling pyramid.  The pyramid is pure pooling, no
convolutions or norms, so every scheme maps constant inputs to constant
outputs and the cost model stays exact.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    """Shape/scheme settings for one attention layer.

    ``pooled_grid`` is the side length of the fixed low-resolution grid
    (token count pooled_grid**2); ``downsample_ratio`` only applies to the
    ratio-downsampled scheme.
    """

    channels: int
    head_dim: int
    scheme: str = "lrsa"
    pooled_grid: int = 16
    downsample_ratio: int = 1
    kv_pyramid: bool = False
    pyramid_grids: tuple = field(default=None)

    def __post_init__(self):
        if self.scheme not in ("vanilla", "downsampled", "lrsa"):
            raise ConfigError(f"unknown attention scheme {self.scheme!r}")
        if self.channels % self.head_dim != 0:
            raise ConfigError(
                f"channels {self.channels} not divisible by head_dim {self.head_dim}")
        if self.pooled_grid < 1:
            raise ConfigError("pooled grid side must be >= 1")
        if self.downsample_ratio < 1:
            raise ConfigError("downsample ratio must be >= 1")
        if self.kv_pyramid:
            grids = self.pyramid_grids
            if not grids:
                raise ConfigError("kv_pyramid requires pyramid_grids")
            if grids[0] != self.pooled_grid:
                raise ConfigError("first pyramid grid must equal the pooled grid")
            if any(a <= b for a, b in zip(grids, grids[1:])):
                raise ConfigError("pyramid grids must be strictly decreasing")

    @property
    def heads(self) -> int:
        return self.channels // self.head_dim

    @property
    def pooled_tokens(self) -> int:
        return self.pooled_grid * self.pooled_grid


@dataclass
class AttentionParams:
    """Projection weights, all (C, C) with (C,) biases."""

    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor

    @classmethod
    def from_store(cls, store, prefix: str) -> "AttentionParams":
        return cls(
            store[f"{prefix}.q.weight"], store[f"{prefix}.q.bias"],
            store[f"{prefix}.k.weight"], store[f"{prefix}.k.bias"],
            store[f"{prefix}.v.weight"], store[f"{prefix}.v.bias"],
            store[f"{prefix}.proj.weight"], store[f"{prefix}.proj.bias"],
        )


def _project(tokens: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add(T.matmul(tokens, w), b)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, c = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, c // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, d = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, h * d))


def mhsa_core(q: Tensor, k: Tensor, v: Tensor, heads: int, trace=None) -> Tensor:
    """Per-head scaled dot-product attention, heads concatenated.

    Inputs are already-projected token sequences (B, N, C); the caller
    applies the output projection.  ``trace``, when given, receives a dict
    per call with the score-matrix shape actually used.
    """
    c = q.shape[-1]
    if c % heads != 0:
        raise ConfigError(f"channels {c} not divisible by heads {heads}")
    if k.shape[-1] != c or v.shape[-1] != c or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"inconsistent K/V shapes: {k.shape}, {v.shape}")
    scale = 1.0 / np.sqrt(c // heads)
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scores = T.mul(T.matmul(qh, T.transpose(kh, (0, 1, 3, 2))), scale)
    if trace is not None:
        trace.append({"score_shape": scores.shape,
                      "q_tokens": q.shape[-2], "kv_tokens": k.shape[-2]})
    attn = T.softmax(scores, axis=-1)
    return _merge_heads(T.matmul(attn, vh))


def attend_vanilla(tokens: Tensor, params: AttentionParams, heads: int,
                   trace=None) -> Tensor:
    """Full-resolution attention over (B, N, C) tokens."""
    q = _project(tokens, params.w_q, params.b_q)
    k = _project(tokens, params.w_k, params.b_k)
    v = _project(tokens, params.w_v, params.b_v)
    out = mhsa_core(q, k, v, heads, trace=trace)
    return _project(out, params.w_o, params.b_o)


def attend_downsampled(tokens: Tensor, h: int, w: int, params: AttentionParams,
                       heads: int, downsample_ratio: int, trace=None) -> Tensor:
    """Full-resolution queries, keys/values pooled by a fixed ratio.

    With ratio 1 this degenerates to the full-resolution scheme bit for
    bit.  Pooling before the K/V projections is exact: spatial averaging
    and the channel-wise linear map commute.
    """
    if downsample_ratio < 1:
        raise ConfigError("downsample_ratio must be >= 1")
    b, n, c = tokens.shape
    if n != h * w:
        raise ShapeError(f"{n} tokens do not form a {h}x{w} grid")
    q = _project(tokens, params.w_q, params.b_q)
    if downsample_ratio == 1:
        kv_src = tokens
    else:
        gh = -(-h // downsample_ratio)
        gw = -(-w // downsample_ratio)
        pooled = T.adaptive_avg_pool2d(T.tokens_to_spatial(tokens, h, w), gh, gw)
        kv_src = T.spatial_to_tokens(pooled)
    k = _project(kv_src, params.w_k, params.b_k)
    v = _project(kv_src, params.w_v, params.b_v)
    out = mhsa_core(q, k, v, heads, trace=trace)
    return _project(out, params.w_o, params.b_o)


def pyramid_pool_tokens(x: Tensor, grids) -> Tensor:
    """Pool (B, C, H, W) to each grid, flatten and concatenate the tokens.

    Produces sum(g*g for g in grids) tokens per batch element.
    """
    grids = tuple(grids)
    if not grids:
        raise ConfigError("pyramid grids must be non-empty")
    levels = [T.spatial_to_tokens(T.adaptive_avg_pool2d(x, g, g)) for g in grids]
    return levels[0] if len(levels) == 1 else T.concat(levels, axis=1)


def attend_lrsa(x: Tensor, params: AttentionParams, cfg: AttentionConfig,
                trace=None) -> Tensor:
    """Low-resolution attention over a (B, C, H, W) feature map.

    The input is pooled to the fixed grid before the Q/K/V projections, so
    the score matrix is pooled_tokens^2 regardless of input resolution,
    and the result is bilinearly resized back to (H, W).  When the map
    already has at most pooled_tokens positions the pooling (and the K/V
    pyramid) is bypassed entirely.
    """
    b, c, h, w = x.shape
    if c != cfg.channels:
        raise ShapeError(f"input has {c} channels, config expects {cfg.channels}")
    g = cfg.pooled_grid
    bypass = h * w <= cfg.pooled_tokens
    if bypass:
        q_src = T.spatial_to_tokens(x)
        kv_src = q_src
    else:
        q_src = T.spatial_to_tokens(T.adaptive_avg_pool2d(x, g, g))
        kv_src = pyramid_pool_tokens(x, cfg.pyramid_grids) if cfg.kv_pyramid else q_src
    q = _project(q_src, params.w_q, params.b_q)
    k = _project(kv_src, params.w_k, params.b_k)
    v = _project(kv_src, params.w_v, params.b_v)
    out = _project(mhsa_core(q, k, v, cfg.heads, trace=trace), params.w_o, params.b_o)
    if bypass:
        return T.tokens_to_spatial(out, h, w)
    return T.bilinear_resize(T.tokens_to_spatial(out, g, g), h, w)
