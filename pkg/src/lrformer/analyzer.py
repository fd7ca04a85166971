"""Analytic parameter and FLOPs accounting plus closed-form scheme costs.

Counts are exact integers derived from the architecture graph without
executing it.  The unit is the multiply-accumulate (MAC); reported "FLOPs"
figures equal MACs, the only convention under which published backbone
numbers (e.g. 4.5G for a Swin-T classifier) are reproducible.

Headline totals cover attention cores, projections, convolutions/linears
and bilinear interpolation.  Pooling (one add per input element) and
norm/activation element counts are recorded for reference but excluded
from headlines, matching the accounting used throughout the backbone
literature.

Everything here is pure and deterministic; the operator-level counting
hook in :mod:`lrformer.tensor` provides the independent cross-check.
"""

import io
from dataclasses import dataclass

from .errors import ConfigError
from .model import (DECODER_FFN_RATIO, CLASSIFICATION, SEGMENTATION,
                    ParamStore, VariantSpec, param_entries)

CSV_HEADER = "variant,input,params,flops_mac,att_flops_mac"

HEADLINE_CATEGORIES = ("attn_core", "attn_proj", "conv", "interp")


@dataclass(frozen=True)
class LayerCost:
    name: str
    category: str  # attn_core | attn_proj | conv | interp | norm_act | other
    macs: int


class FlopsReport:
    """Per-layer MAC records with category and grand totals."""

    def __init__(self, records):
        self.records = list(records)

    def by_category(self) -> dict:
        totals = {}
        for rec in self.records:
            totals[rec.category] = totals.get(rec.category, 0) + rec.macs
        return totals

    def total(self, *categories) -> int:
        if not categories:
            return self.grand_total
        wanted = set(categories)
        return sum(r.macs for r in self.records if r.category in wanted)

    @property
    def grand_total(self) -> int:
        return sum(r.macs for r in self.records)

    @property
    def headline(self) -> int:
        """MACs reported as FLOPs (pool and norm/act excluded)."""
        return self.total(*HEADLINE_CATEGORIES)


def count_params(target) -> int:
    """Total parameter scalars for a ParamStore or (analytically) a spec."""
    if isinstance(target, ParamStore):
        return target.total_params()
    if isinstance(target, VariantSpec):
        total = 0
        for _, shape, _ in param_entries(target):
            n = 1
            for extent in shape:
                n *= extent
            total += n
        return total
    raise ConfigError(f"count_params expects a ParamStore or VariantSpec, got {type(target)!r}")


def _conv_out(extent: int, k: int, stride: int, pad: int) -> int:
    return (extent + 2 * pad - k) // stride + 1


def _block_costs(prefix: str, c: int, ratio: int, n: int, spec: VariantSpec):
    recs = []
    if spec.use_cpe_dwconv:
        recs.append(LayerCost(f"{prefix}.cpe", "conv", n * c * 9))
    recs.append(LayerCost(f"{prefix}.attn.norm", "norm_act", n * c))

    m = spec.pooled_tokens
    if n <= m:
        nq = nkv = n
        pooled = False
    else:
        nq = m
        pooled = True
        recs.append(LayerCost(f"{prefix}.attn.pool", "other", n * c))
        if spec.kv_pyramid:
            nkv = sum(g * g for g in spec.pyramid_grids)
            for g in spec.pyramid_grids:
                recs.append(LayerCost(f"{prefix}.attn.pool_kv{g}", "other", n * c))
        else:
            nkv = m
    recs.append(LayerCost(f"{prefix}.attn.q", "attn_proj", nq * c * c))
    recs.append(LayerCost(f"{prefix}.attn.k", "attn_proj", nkv * c * c))
    recs.append(LayerCost(f"{prefix}.attn.v", "attn_proj", nkv * c * c))
    recs.append(LayerCost(f"{prefix}.attn.scores", "attn_core", nq * nkv * c))
    recs.append(LayerCost(f"{prefix}.attn.softmax", "norm_act", nq * nkv))
    recs.append(LayerCost(f"{prefix}.attn.aggregate", "attn_core", nq * nkv * c))
    recs.append(LayerCost(f"{prefix}.attn.out", "attn_proj", nq * c * c))
    if pooled:
        recs.append(LayerCost(f"{prefix}.attn.upsample", "interp", 4 * n * c))

    hidden = ratio * c
    recs.append(LayerCost(f"{prefix}.ffn.norm", "norm_act", n * c))
    recs.append(LayerCost(f"{prefix}.ffn.fc1", "conv", n * c * hidden))
    if spec.use_ffn_dwconv:
        recs.append(LayerCost(f"{prefix}.ffn.dw", "conv", n * hidden * 9))
    recs.append(LayerCost(f"{prefix}.ffn.gelu", "norm_act", n * hidden))
    recs.append(LayerCost(f"{prefix}.ffn.fc2", "conv", n * hidden * c))
    return recs


def count_flops(spec: VariantSpec, height: int, width: int = None) -> FlopsReport:
    """Per-layer MAC report for one forward pass at the given input size."""
    width = height if width is None else width
    if height % 32 or width % 32:
        raise ConfigError(f"input extents must be divisible by 32, got {height}x{width}")
    c1, c2, c3, c4 = spec.channels
    recs = []
    h = _conv_out(height, 7, 4, 3)
    w = _conv_out(width, 7, 4, 3)
    recs.append(LayerCost("stem.conv", "conv", h * w * c1 * 3 * 49))
    recs.append(LayerCost("stem.norm", "norm_act", h * w * c1))
    grids = []
    for i in range(4):
        c = spec.channels[i]
        if i > 0:
            h = _conv_out(h, 3, 2, 1)
            w = _conv_out(w, 3, 2, 1)
            prev = spec.channels[i - 1]
            recs.append(LayerCost(f"embed{i + 1}.conv", "conv", h * w * c * prev * 9))
            recs.append(LayerCost(f"embed{i + 1}.norm", "norm_act", h * w * c))
        grids.append((h, w))
        for j in range(spec.depths[i]):
            recs.extend(_block_costs(f"stage{i + 1}.block{j}", c,
                                     spec.ffn_ratios[i], h * w, spec))
    if spec.task == SEGMENTATION:
        h2, w2 = grids[1]
        n2 = h2 * w2
        d = spec.decoder_width
        recs.append(LayerCost("decoder.resize_f3", "interp", 4 * n2 * c3))
        recs.append(LayerCost("decoder.resize_f4", "interp", 4 * n2 * c4))
        recs.append(LayerCost("decoder.squeeze1", "conv", n2 * (c2 + c3 + c4) * d))
        recs.extend(_block_costs("decoder.block0", d, DECODER_FFN_RATIO, n2, spec))
        recs.append(LayerCost("decoder.squeeze2", "conv", n2 * (d + c4) * d))
        recs.extend(_block_costs("decoder.block1", d, DECODER_FFN_RATIO, n2, spec))
        recs.append(LayerCost("decoder.classify", "conv", n2 * d * spec.num_classes))
    else:
        h4, w4 = grids[3]
        recs.append(LayerCost("head.pool", "other", h4 * w4 * c4))
        recs.append(LayerCost("head.norm", "norm_act", c4))
        recs.append(LayerCost("head.fc1", "conv", c4 * spec.head_hidden))
        recs.append(LayerCost("head.gelu", "norm_act", spec.head_hidden))
        recs.append(LayerCost("head.fc2", "conv", spec.head_hidden * spec.num_classes))
    return FlopsReport(recs)


def attention_flops(report: FlopsReport) -> int:
    """Attention cores plus the interpolation performed inside attention.

    Q/K/V/output projections are excluded: they exist identically in every
    scheme, and the published attention-cost figures are only reproducible
    without them.
    """
    total = 0
    for rec in report.records:
        if rec.category == "attn_core":
            total += rec.macs
        elif rec.category == "interp" and ".attn." in rec.name:
            total += rec.macs
    return total


# ---------------------------------------------------------------------------
# Closed-form scheme costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Evaluated cost polynomial for one attention scheme.

    ``terms`` holds headline MACs split into projections / attention /
    upsample; ``pooling_adds`` is reported separately and excluded from
    ``total`` like everywhere else in the analyzer.
    """

    scheme: str
    formula: str
    terms: dict
    pooling_adds: int = 0

    @property
    def total(self) -> int:
        return sum(self.terms.values())


SCHEMES = ("vanilla", "window", "factorized", "downsampled", "lrsa")


def scheme_cost(scheme: str, n: int, c: int, m: int = 256, s_r: int = 2,
                window: int = 49) -> CostModel:
    """Attention-layer cost for ``n`` tokens of ``c`` channels.

    Asymptotics: vanilla and downsampled are O(N^2 C + N C^2); window and
    factorized are O(N C^2); the fixed-grid scheme is O(N C + C^2) because
    the score matrix never grows with N.
    """
    if n < 1 or c < 1:
        raise ConfigError("token and channel counts must be positive")
    if scheme == "vanilla":
        return CostModel(scheme, "4NC^2 + 2N^2C",
                         {"projections": 4 * n * c * c, "attention": 2 * n * n * c})
    if scheme == "window":
        return CostModel(scheme, "4NC^2 + 2NwC",
                         {"projections": 4 * n * c * c, "attention": 2 * n * window * c})
    if scheme == "factorized":
        return CostModel(scheme, "4NC^2 + 2NC^2",
                         {"projections": 4 * n * c * c, "attention": 2 * n * c * c})
    if scheme == "downsampled":
        nkv = max(1, n // (s_r * s_r))
        return CostModel(
            scheme, "2NC^2 + 2(N/s^2)C^2 + 2N(N/s^2)C",
            {"projections": 2 * n * c * c + 2 * nkv * c * c,
             "attention": 2 * n * nkv * c},
            pooling_adds=n * c if s_r > 1 else 0)
    if scheme == "lrsa":
        nq = min(n, m)
        pooled = n > m
        return CostModel(
            scheme, "4mC^2 + 2m^2C + 4NC",
            {"projections": 4 * nq * c * c,
             "attention": 2 * nq * nq * c,
             "upsample": 4 * n * c if pooled else 0},
            pooling_adds=n * c if pooled else 0)
    raise ConfigError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


def downsampled_model_attention_macs(spec: VariantSpec, height: int, width: int = None,
                                     ratios=(8, 4, 2, 1)) -> int:
    """Attention-core MACs if the encoder used ratio-downsampled K/V.

    Reference baseline for the scaling comparison: queries stay at full
    stage resolution, keys/values shrink by the per-stage ratio, there is
    no upsampling back.
    """
    width = height if width is None else width
    if height % 32 or width % 32:
        raise ConfigError(f"input extents must be divisible by 32, got {height}x{width}")
    h = _conv_out(height, 7, 4, 3)
    w = _conv_out(width, 7, 4, 3)
    total = 0
    for i in range(4):
        if i > 0:
            h = _conv_out(h, 3, 2, 1)
            w = _conv_out(w, 3, 2, 1)
        n = h * w
        nkv = max(1, n // (ratios[i] * ratios[i]))
        total += spec.depths[i] * 2 * n * nkv * spec.channels[i]
    return total


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def format_count(value: int) -> str:
    """Human form used in text tables: 32.10M, 39.47G, ..."""
    for unit, div in (("G", 10 ** 9), ("M", 10 ** 6), ("K", 10 ** 3)):
        if value >= div:
            return f"{value / div:.2f}{unit}"
    return str(value)


def comparison_rows(variants, sizes, task: str = SEGMENTATION, num_classes: int = 150):
    from .model import make_spec
    rows = []
    for name in variants:
        spec = make_spec(name, task=task, num_classes=num_classes)
        params = count_params(spec)
        for size in sizes:
            report = count_flops(spec, size, size)
            rows.append((name, size, params, report.headline, attention_flops(report)))
    return rows


def emit_comparison_table(variants, sizes, fmt: str = "csv",
                          task: str = SEGMENTATION, num_classes: int = 150) -> str:
    """Deterministic {variant, size, params, flops, att_flops} table."""
    rows = comparison_rows(variants, sizes, task=task, num_classes=num_classes)
    if fmt == "csv":
        out = io.StringIO()
        out.write(CSV_HEADER + "\r\n")
        for name, size, params, flops, att in rows:
            out.write(f"{name},{size},{params},{flops},{att}\r\n")
        return out.getvalue()
    if fmt == "text":
        lines = [f"{'variant':<8}{'input':>7}{'params':>10}{'flops':>10}{'att_flops':>11}"]
        for name, size, params, flops, att in rows:
            lines.append(f"{name:<8}{size:>7}{format_count(params):>10}"
                         f"{format_count(flops):>10}{format_count(att):>11}")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown table format {fmt!r}")
