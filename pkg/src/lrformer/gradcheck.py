"""64-bit gradient verification: backward pass vs central differences.

Every operator is checked on small random inputs in [-1, 1], followed by a
composite low-resolution attention layer, a full basic block, and the
micro segmentation model (a random 5% sample of its parameter
coordinates).  The finite-difference side never touches the tape, so the
two routes stay independent.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, AttentionParams, attend_lrsa
from .model import (ParamStore, _block_entries, _init_value, basic_block_forward,
                    build_variant, make_spec)
from .rng import keyed_rng
from .tensor import Tensor, finite_diff_grad
from .toyseg import cross_entropy, generate_dataset

DEFAULT_TOL = 1e-3
DEFAULT_EPS = 1e-4


@dataclass
class CheckResult:
    name: str
    rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.rel_err < self.tol


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a.reshape(-1)))
    nb = float(np.linalg.norm(b.reshape(-1)))
    diff = float(np.linalg.norm((a - b).reshape(-1)))
    return diff / max(na, nb, 1e-30)


def _rand(rng, *shape) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True, dtype=np.float64)


def _check_inputs(name, fn, inputs, tol, eps) -> list:
    """Compare tape gradients against finite differences for each input."""
    for t in inputs.values():
        t.grad = None
    loss = fn()
    T.backward(loss)
    results = []
    for label, t in inputs.items():
        fd = finite_diff_grad(lambda _t: fn(), t, eps=eps)
        results.append(CheckResult(f"{name}[{label}]", rel_error(t.grad, fd), tol))
    return results


def operator_checks(seed: int = 0, tol: float = DEFAULT_TOL,
                    eps: float = DEFAULT_EPS) -> list:
    """Finite-difference checks for every forward operator."""
    rng = keyed_rng(seed, "gradcheck-ops")
    results = []

    def weighted(out_shape):
        # Fixed projection to a scalar, drawn once so the loss is a
        # deterministic function of the checked inputs.
        w = Tensor(rng.uniform(-1.0, 1.0, size=out_shape), dtype=np.float64)
        return lambda out: T.tsum(T.mul(out, w))

    a, b = _rand(rng, 3, 4), _rand(rng, 4, 5)
    proj = weighted((3, 5))
    results += _check_inputs("matmul", lambda: proj(T.matmul(a, b)),
                             {"a": a, "b": b}, tol, eps)

    x = _rand(rng, 2, 7)
    proj = weighted((2, 7))
    results += _check_inputs("softmax", lambda: proj(T.softmax(x, axis=-1)),
                             {"x": x}, tol, eps)

    x = _rand(rng, 3, 6)
    gamma = Tensor(rng.uniform(0.5, 1.5, size=6), requires_grad=True, dtype=np.float64)
    beta = _rand(rng, 6)
    proj = weighted((3, 6))
    results += _check_inputs("layer_norm", lambda: proj(T.layer_norm(x, gamma, beta)),
                             {"x": x, "gamma": gamma, "beta": beta}, tol, eps)

    x = _rand(rng, 3, 5)
    proj = weighted((3, 5))
    results += _check_inputs("gelu", lambda: proj(T.gelu(x)), {"x": x}, tol, eps)

    x = _rand(rng, 1, 2, 5, 5)
    w = _rand(rng, 3, 2, 3, 3)
    bias = _rand(rng, 3)
    proj = weighted((1, 3, 5, 5))
    results += _check_inputs(
        "conv2d", lambda: proj(T.conv2d(x, w, bias, stride=1, padding=1)),
        {"x": x, "w": w, "bias": bias}, tol, eps)

    x = _rand(rng, 1, 4, 6, 6)
    w = _rand(rng, 4, 1, 3, 3)
    bias = _rand(rng, 4)
    proj = weighted((1, 4, 3, 3))
    results += _check_inputs(
        "conv2d_depthwise_s2",
        lambda: proj(T.conv2d(x, w, bias, stride=2, padding=1, groups=4)),
        {"x": x, "w": w, "bias": bias}, tol, eps)

    x = _rand(rng, 1, 3, 5, 4)
    proj = weighted((1, 3, 2, 2))
    results += _check_inputs("adaptive_avg_pool2d",
                             lambda: proj(T.adaptive_avg_pool2d(x, 2, 2)),
                             {"x": x}, tol, eps)

    x = _rand(rng, 1, 2, 3, 4)
    proj = weighted((1, 2, 6, 5))
    results += _check_inputs("bilinear_resize",
                             lambda: proj(T.bilinear_resize(x, 6, 5)),
                             {"x": x}, tol, eps)

    x = _rand(rng, 2, 4, 3)
    labels = np.asarray(keyed_rng(seed, "gradcheck-labels").integers(0, 4, size=(2, 3, 1)))
    results += _check_inputs("cross_entropy",
                             lambda: cross_entropy(T.reshape(x, (2, 4, 3, 1)), labels),
                             {"logits": x}, tol, eps)

    q, k, v = _rand(rng, 1, 5, 6), _rand(rng, 1, 4, 6), _rand(rng, 1, 4, 6)
    from .attention import mhsa_core
    proj = weighted((1, 5, 6))
    results += _check_inputs("mhsa_core",
                             lambda: proj(mhsa_core(q, k, v, heads=2)),
                             {"q": q, "k": k, "v": v}, tol, eps)

    return results


def lrsa_check(seed: int = 0, tol: float = DEFAULT_TOL, eps: float = DEFAULT_EPS) -> list:
    """Composite low-resolution attention layer, pooled + pyramid path."""
    rng = keyed_rng(seed, "gradcheck-lrsa")
    cfg = AttentionConfig(channels=4, head_dim=2, pooled_grid=2,
                          kv_pyramid=True, pyramid_grids=(2, 1))
    x = _rand(rng, 1, 4, 6, 6)
    params = AttentionParams(*[_rand(rng, 4, 4) if i % 2 == 0 else _rand(rng, 4)
                               for i in range(8)])
    inputs = {"x": x, "w_q": params.w_q, "w_k": params.w_k, "w_v": params.w_v,
              "w_o": params.w_o, "b_q": params.b_q, "b_o": params.b_o}
    w = Tensor(rng.uniform(-1.0, 1.0, size=(1, 4, 6, 6)), dtype=np.float64)
    return _check_inputs(
        "attend_lrsa",
        lambda: T.tsum(T.mul(attend_lrsa(x, params, cfg), w)),
        inputs, tol, eps)


def _standalone_block(c: int, ratio: int, seed: int):
    """A single basic block's parameters in an otherwise empty store."""
    spec = make_spec("micro")
    store = ParamStore()
    for name, shape, kind in _block_entries("block", c, ratio, spec):
        store.add(name, Tensor(_init_value(name, shape, kind, seed, np.float64),
                               requires_grad=True))
    return store, spec


def block_check(seed: int = 0, tol: float = DEFAULT_TOL, eps: float = DEFAULT_EPS) -> list:
    """Full basic block at 1x16x8x8: gradients for every parameter."""
    rng = keyed_rng(seed, "gradcheck-block")
    store, spec = _standalone_block(16, 4, seed)
    acfg = AttentionConfig(channels=16, head_dim=8, pooled_grid=2,
                           kv_pyramid=False, pyramid_grids=None)
    x = Tensor(rng.uniform(-1.0, 1.0, size=(1, 16, 8, 8)), dtype=np.float64)

    def loss():
        return T.mean(basic_block_forward(x, store, "block", acfg, 4, spec))

    inputs = {name: store[name] for name in store}
    return _check_inputs("basic_block", loss, inputs, tol, eps)


def model_check(seed: int = 0, tol: float = DEFAULT_TOL, eps: float = DEFAULT_EPS,
                sample_frac: float = 0.05) -> CheckResult:
    """Micro segmentation model at 64^2: 5% random parameter coordinates.

    The backward gradients at the sampled coordinates are compared as one
    vector against central differences of the cross-entropy loss.
    """
    store, spec = build_variant("micro", task="segmentation", num_classes=2,
                                seed=seed, dtype=np.float64)
    sample = generate_dataset(seed, 1, 64)[0]
    images = Tensor(sample.image[None].astype(np.float64))
    mask = sample.mask[None]

    def loss_tensor():
        from .model import segmentation_logits
        logits = segmentation_logits(images, store, spec)
        full = T.bilinear_resize(logits, 64, 64)
        return cross_entropy(full, mask)

    store.zero_grads()
    T.backward(loss_tensor())

    names = store.names()
    sizes = [store[n].size for n in names]
    offsets = np.cumsum([0] + sizes)
    total = offsets[-1]
    picks = keyed_rng(seed, "gradcheck-sample").choice(
        total, size=max(1, int(total * sample_frac)), replace=False)
    picks.sort()

    backward_vals = np.empty(picks.size)
    fd_vals = np.empty(picks.size)
    with T.no_grad():
        for out_idx, flat_idx in enumerate(picks):
            which = np.searchsorted(offsets, flat_idx, side="right") - 1
            param = store[names[which]]
            local = int(flat_idx - offsets[which])
            backward_vals[out_idx] = param.grad.reshape(-1)[local]
            flat = param.data.reshape(-1)
            orig = flat[local]
            flat[local] = orig + eps
            hi = loss_tensor().item()
            flat[local] = orig - eps
            lo = loss_tensor().item()
            flat[local] = orig
            fd_vals[out_idx] = (hi - lo) / (2.0 * eps)
    store.zero_grads()
    return CheckResult("micro_model[5% params]", rel_error(backward_vals, fd_vals), tol)


def run_suite(seed: int = 0, tol: float = DEFAULT_TOL, eps: float = DEFAULT_EPS,
              scope: str = "all") -> list:
    """Full gradient suite; ``scope`` picks ops / model / all."""
    results = []
    if scope in ("ops", "all"):
        results += operator_checks(seed, tol, eps)
        results += lrsa_check(seed, tol, eps)
        results += block_check(seed, tol, eps)
    if scope in ("model", "all"):
        results.append(model_check(seed, tol, eps))
    return results
