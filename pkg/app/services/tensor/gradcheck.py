# services/tensor/gradcheck.py
"""
Central finite-difference verification of analytic gradients.

For each checked coordinate x the step is h = FD_STEP * (1 + |x|) and the
relative error is |a - n| / max(|a|, |n|, REL_FLOOR).
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from logzero import logger

from app.constants import FD_STEP
from app.exceptions.custom_exceptions import ConfigError
from app.services.tensor import ops
from app.services.tensor.tensor import Tensor, no_grad

REL_FLOOR = 1e-6

LossFn = Callable[[], Tensor]
CaseBuilder = Callable[[np.random.Generator], Tuple[LossFn, Dict[str, Tensor]]]


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    max_abs_error: float
    coordinates: int
    finite: bool = True

    def passed(self, tolerance: float) -> bool:
        return self.finite and self.max_rel_error < tolerance


@dataclass
class GradCheckReport:
    tolerance: float
    params: List[ParamCheck] = field(default_factory=list)
    diagnostic: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.diagnostic is None and all(check.passed(self.tolerance) for check in self.params)

    @property
    def max_rel_error(self) -> float:
        return max((check.max_rel_error for check in self.params), default=0.0)

    def failures(self) -> List[str]:
        return [check.name for check in self.params if not check.passed(self.tolerance)]

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} max_rel_error={self.max_rel_error:.3e} tolerance={self.tolerance:.1e}"
        if self.diagnostic:
            text += f" ({self.diagnostic})"
        elif not self.passed:
            text += f" failing: {', '.join(self.failures())}"
        return text


def grad_check(loss_fn: LossFn, inputs: Mapping[str, Tensor], tolerance: float = 1e-4,
               max_coords: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """
    Compare analytic gradients of `loss_fn()` w.r.t. every tensor in `inputs`
    against central differences. `max_coords` limits the number of sampled
    coordinates per tensor.
    """
    report = GradCheckReport(tolerance=tolerance)
    rng = np.random.default_rng(seed)
    for tensor in inputs.values():
        tensor.grad = None

    loss = loss_fn()
    if not np.all(np.isfinite(loss.data)):
        report.diagnostic = "non-finite loss at the check point"
        return report
    loss.backward()

    for name, tensor in inputs.items():
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
        flat = tensor.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            indices = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst_rel, worst_abs, finite = 0.0, 0.0, True
        for index in indices:
            original = float(flat[index])
            step = FD_STEP * (1.0 + abs(original))
            with no_grad():
                flat[index] = original + step
                upper = loss_fn().item()
                flat[index] = original - step
                lower = loss_fn().item()
            flat[index] = original
            if not (np.isfinite(upper) and np.isfinite(lower)):
                finite = False
                continue
            numeric = (upper - lower) / (2.0 * step)
            exact = float(analytic.reshape(-1)[index])
            abs_error = abs(exact - numeric)
            rel_error = abs_error / max(abs(exact), abs(numeric), REL_FLOOR)
            worst_rel, worst_abs = max(worst_rel, rel_error), max(worst_abs, abs_error)
        report.params.append(ParamCheck(name, worst_rel, worst_abs, int(indices.size), finite))
        if not finite:
            report.diagnostic = f"non-finite values while perturbing {name}"
    return report


# =============================================================================
# Operator suite
# =============================================================================

def _projection_loss(out: Tensor, rng_seed: int) -> Tensor:
    weights = np.random.default_rng(rng_seed).normal(size=out.shape)
    return ops.sum_all(ops.mul(out, Tensor(weights)))


def _leaf(rng: np.random.Generator, *shape: int, away_from_zero: bool = False) -> Tensor:
    data = rng.normal(size=shape)
    if away_from_zero:
        data = np.sign(data) * (np.abs(data) + 0.1)
    return Tensor(data, requires_grad=True)


def _conv_case(dilation: int, size: int) -> CaseBuilder:
    def build(rng):
        x, k, b = _leaf(rng, 2, 2, size, size), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
        return (lambda: _projection_loss(ops.conv2d(x, k, b, 1, dilation, dilation), 1),
                {"input": x, "kernel": k, "bias": b})
    return build


def _strided_conv(rng):
    x, k, b = _leaf(rng, 1, 2, 7, 7), _leaf(rng, 2, 2, 3, 3), _leaf(rng, 2)
    return lambda: _projection_loss(ops.conv2d(x, k, b, 2, 1, 1), 2), {"input": x, "kernel": k, "bias": b}


def _norm_case(rng):
    x, gain, shift = _leaf(rng, 2, 4, 3, 3), _leaf(rng, 4), _leaf(rng, 4)
    return (lambda: _projection_loss(ops.normalize_features(x, 2, gain, shift), 3),
            {"input": x, "scale": gain, "shift": shift})


def _elementwise_case(rng):
    a, b, v = _leaf(rng, 1, 3, 2, 2), _leaf(rng, 1, 3, 2, 2), _leaf(rng, 3)

    def loss():
        out = ops.add(ops.sub(a, b), ops.scale(ops.mul_channel(a, v), 0.5))
        return _projection_loss(out, 4)
    return loss, {"a": a, "b": b, "vector": v}


def _pool_case(rng):
    x = _leaf(rng, 2, 3, 4, 5)
    return lambda: _projection_loss(ops.global_avg_pool(x), 5), {"input": x}


def _linear_case(rng):
    x, w, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4), _leaf(rng, 3)
    return lambda: _projection_loss(ops.linear(x, w, b), 6), {"input": x, "weight": w, "bias": b}


def _softmax_case(rng):
    x = _leaf(rng, 2, 5, 2, 2)
    return lambda: _projection_loss(ops.softmax(x, axis=1), 7), {"input": x}


def _cross_entropy_case(rng):
    x = _leaf(rng, 2, 4, 3, 3)
    targets = rng.integers(0, 4, size=(2, 3, 3))
    targets[0, 0, 0] = 255
    weights = [0.5, 1.0, 2.0, 1.5]
    return lambda: ops.cross_entropy(x, targets, weights, ignore_label=255), {"logits": x}


def _concat_case(rng):
    a, b = _leaf(rng, 1, 2, 3, 3), _leaf(rng, 1, 3, 3, 3)
    return lambda: _projection_loss(ops.concat([a, b], axis=1), 8), {"a": a, "b": b}


def _resize_case(rng):
    x = _leaf(rng, 1, 2, 3, 4)
    return lambda: _projection_loss(ops.bilinear_resize(x, 7, 5), 9), {"input": x}


def _activation_case(rng):
    x = _leaf(rng, 2, 3, 3, away_from_zero=True)
    return lambda: _projection_loss(ops.add(ops.relu(x), ops.softplus(x)), 10), {"input": x}


def _composite_case(rng):
    x, k, b = _leaf(rng, 1, 2, 5, 5), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    w, c = _leaf(rng, 2, 3), _leaf(rng, 2)

    def loss():
        hidden = ops.relu(ops.conv2d(x, k, b, 1, 1, 1))
        pooled = ops.reshape(ops.global_avg_pool(hidden), (1, 3))
        return _projection_loss(ops.linear(pooled, w, c), 11)
    return loss, {"input": x, "kernel": k, "bias": b, "weight": w, "linear_bias": c}


OP_CASES: Dict[str, CaseBuilder] = {
    "conv2d": _conv_case(1, 5),
    "conv2d_dilated": _conv_case(6, 13),
    "conv2d_strided": _strided_conv,
    "normalize_features": _norm_case,
    "elementwise": _elementwise_case,
    "global_avg_pool": _pool_case,
    "linear": _linear_case,
    "softmax": _softmax_case,
    "softmax_cross_entropy": _cross_entropy_case,
    "concat": _concat_case,
    "bilinear_resize": _resize_case,
    "activations": _activation_case,
    "composite": _composite_case,
}


def run_op_suite(tolerance: float = 1e-4, seeds: Sequence[int] = (0,),
                 cases: Optional[Mapping[str, CaseBuilder]] = None) -> Dict[str, GradCheckReport]:
    """
    One report per op. With several seeds every seed is checked and the
    parameter checks are tagged `<name>@<seed>`.
    """
    if not seeds:
        raise ConfigError("run_op_suite needs at least one seed")
    results: Dict[str, GradCheckReport] = {}
    for name, builder in (cases or OP_CASES).items():
        combined = GradCheckReport(tolerance=tolerance)
        for seed in seeds:
            loss_fn, inputs = builder(np.random.default_rng(seed))
            report = grad_check(loss_fn, inputs, tolerance=tolerance, seed=seed)
            for check in report.params:
                if len(seeds) > 1:
                    check.name = f"{check.name}@{seed}"
                combined.params.append(check)
            if report.diagnostic and combined.diagnostic is None:
                combined.diagnostic = f"seed {seed}: {report.diagnostic}"
        results[name] = combined
        logger.info(f"gradcheck {name} over {len(seeds)} seed(s): {combined.summary()}")
    return results
