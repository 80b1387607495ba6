# services/tensor/ops.py
"""
Differentiable operators for the asymmetric siamese network.

Every operator is a `Function` subclass plus a thin functional wrapper.
Layouts follow NCHW; all arithmetic is float64.
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.constants import NORM_EPS
from app.exceptions.custom_exceptions import ConfigError, DimensionError, GeometryError, LabelError
from app.services.tensor.tensor import Function, Tensor

Scalar = Union[int, float]


def as_tensor(value: Union[Tensor, np.ndarray, Scalar]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so `grad` matches `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, extent in enumerate(shape):
        if extent == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"shapes {a.shape} and {b.shape} are not broadcastable")


# =============================================================================
# Elementwise
# =============================================================================

class Add(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


class Scale(Function):
    def forward(self, a, factor: float):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


def add(a: Tensor, b) -> Tensor:
    return Add.apply(a, as_tensor(b))


def sub(a: Tensor, b) -> Tensor:
    return Sub.apply(a, as_tensor(b))


def mul(a: Tensor, b) -> Tensor:
    return Mul.apply(a, as_tensor(b))


def scale(a: Tensor, factor: float) -> Tensor:
    return Scale.apply(a, factor=float(factor))


def mul_channel(x: Tensor, vector: Tensor) -> Tensor:
    """Scale each channel of an NCHW tensor by the matching vector entry."""
    if vector.ndim != 1 or x.ndim < 2 or vector.shape[0] != x.shape[1]:
        raise DimensionError(f"vector of shape {vector.shape} cannot scale channels of {x.shape}")
    shape = (1, vector.shape[0]) + (1,) * (x.ndim - 2)
    return mul(x, reshape(vector, shape))


def mul_per_sample(x: Tensor, weights: Tensor) -> Tensor:
    """Scale sample n of `x` by `weights[n]` (weights shaped [N])."""
    if weights.ndim != 1 or weights.shape[0] != x.shape[0]:
        raise DimensionError(f"per-sample weights {weights.shape} do not match batch of {x.shape}")
    return mul(x, reshape(weights, (x.shape[0],) + (1,) * (x.ndim - 1)))


ELEMENTWISE_OPS = ("add", "sub", "scale_by_scalar", "mul_by_broadcast_vector")


def elementwise(op: str, a: Tensor, b) -> Tensor:
    if op == "add":
        return add(a, b)
    if op == "sub":
        return sub(a, b)
    if op == "scale_by_scalar":
        return scale(a, b)
    if op == "mul_by_broadcast_vector":
        return mul_channel(a, as_tensor(b))
    raise ConfigError(f"unknown elementwise op '{op}', expected one of {ELEMENTWISE_OPS}")


# =============================================================================
# Shape plumbing
# =============================================================================

class Reshape(Function):
    def forward(self, a, shape):
        self.in_shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise DimensionError(f"cannot reshape {a.shape} into {shape}")

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class SumAll(Function):
    def forward(self, a):
        self.in_shape = a.shape
        return np.asarray(a.sum())

    def backward(self, grad):
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class MeanAll(Function):
    def forward(self, a):
        self.in_shape = a.shape
        return np.asarray(a.mean())

    def backward(self, grad):
        return (np.full(self.in_shape, float(grad) / np.prod(self.in_shape)),)


class Slice(Function):
    def forward(self, a, axis: int, start: int, stop: int):
        self.in_shape, self.axis, self.start, self.stop = a.shape, axis, start, stop
        index = [slice(None)] * a.ndim
        index[axis] = slice(start, stop)
        self.index = tuple(index)
        return a[self.index].copy()

    def backward(self, grad):
        full = np.zeros(self.in_shape)
        full[self.index] = grad
        return (full,)


class Concat(Function):
    def forward(self, *arrays, axis: int):
        reference = arrays[0]
        for array in arrays[1:]:
            if array.ndim != reference.ndim:
                raise DimensionError("concat inputs differ in rank")
            for dim in range(reference.ndim):
                if dim != axis % reference.ndim and array.shape[dim] != reference.shape[dim]:
                    raise DimensionError(
                        f"concat inputs differ on non-axis dim {dim}: {array.shape} vs {reference.shape}"
                    )
        self.axis = axis
        self.sizes = [array.shape[axis] for array in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def sum_all(a: Tensor) -> Tensor:
    return SumAll.apply(a)


def mean_all(a: Tensor) -> Tensor:
    return MeanAll.apply(a)


def take(a: Tensor, axis: int, start: int, stop: Optional[int] = None) -> Tensor:
    return Slice.apply(a, axis=axis, start=start, stop=start + 1 if stop is None else stop)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    return Concat.apply(*tensors, axis=axis)


def split(a: Tensor, sizes: Sequence[int], axis: int = 1) -> List[Tensor]:
    if sum(sizes) != a.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not add up to {a.shape[axis]}")
    parts, start = [], 0
    for size in sizes:
        parts.append(take(a, axis, start, start + size))
        start += size
    return parts


# =============================================================================
# Activations
# =============================================================================

class ReLU(Function):
    def forward(self, a):
        self.mask = a > 0
        return a * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class Softplus(Function):
    def forward(self, a):
        self.a = a
        return np.logaddexp(0.0, a)

    def backward(self, grad):
        return (grad / (1.0 + np.exp(-self.a)),)


def relu(a: Tensor) -> Tensor:
    return ReLU.apply(a)


def softplus(a: Tensor) -> Tensor:
    return Softplus.apply(a)


# =============================================================================
# Convolution
# =============================================================================

def conv_output_extent(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


class Conv2d(Function):
    """Dilated 2-D cross-correlation using a strided column buffer."""

    def forward(self, x, kernel, bias, stride: int, padding: int, dilation: int):
        if x.ndim != 4 or kernel.ndim != 4:
            raise DimensionError(f"conv2d expects NCHW input and OIkk kernel, got {x.shape} and {kernel.shape}")
        n, c_in, height, width = x.shape
        c_out, k_in, k_h, k_w = kernel.shape
        if k_in != c_in:
            raise DimensionError(f"input has {c_in} channels but kernel expects {k_in}")
        if bias.shape != (c_out,):
            raise DimensionError(f"bias shape {bias.shape} does not match {c_out} output channels")
        if dilation < 1 or stride < 1 or padding < 0:
            raise GeometryError(f"invalid stride={stride} padding={padding} dilation={dilation}")
        out_h = conv_output_extent(height, k_h, stride, padding, dilation)
        out_w = conv_output_extent(width, k_w, stride, padding, dilation)
        if out_h < 1 or out_w < 1:
            raise GeometryError(f"conv2d output extent {out_h}x{out_w} is not positive")

        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        cols = np.empty((n, c_in, k_h, k_w, out_h, out_w))
        for i in range(k_h):
            hi = i * dilation
            for j in range(k_w):
                wj = j * dilation
                cols[:, :, i, j] = padded[:, :, hi:hi + stride * (out_h - 1) + 1:stride,
                                          wj:wj + stride * (out_w - 1) + 1:stride]
        self.cols, self.kernel = cols, kernel
        self.geometry = (stride, padding, dilation, padded.shape)
        out = np.tensordot(cols, kernel, axes=([1, 2, 3], [1, 2, 3]))
        return out.transpose(0, 3, 1, 2) + bias[None, :, None, None]

    def backward(self, grad):
        stride, padding, dilation, padded_shape = self.geometry
        cols, kernel = self.cols, self.kernel
        _, _, k_h, k_w = kernel.shape
        out_h, out_w = grad.shape[2:]
        grad_kernel = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 4, 5]))
        grad_bias = grad.sum(axis=(0, 2, 3))
        grad_cols = np.tensordot(grad, kernel, axes=([1], [0]))  # N, Ho, Wo, C, kh, kw
        grad_padded = np.zeros(padded_shape)
        for i in range(k_h):
            hi = i * dilation
            for j in range(k_w):
                wj = j * dilation
                grad_padded[:, :, hi:hi + stride * (out_h - 1) + 1:stride,
                            wj:wj + stride * (out_w - 1) + 1:stride] += grad_cols[..., i, j].transpose(0, 3, 1, 2)
        if padding:
            grad_padded = grad_padded[:, :, padding:-padding, padding:-padding]
        self.cols = None
        return grad_padded, grad_kernel, grad_bias


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0,
           dilation: int = 1) -> Tensor:
    return Conv2d.apply(x, kernel, bias, stride=stride, padding=padding, dilation=dilation)


# =============================================================================
# Normalization and pooling
# =============================================================================

class GroupNorm(Function):
    def forward(self, x, gain, shift, groups: int, eps: float):
        n, channels = x.shape[:2]
        if groups < 1 or channels % groups:
            raise ConfigError(f"{groups} groups do not divide {channels} channels")
        if gain.shape != (channels,) or shift.shape != (channels,):
            raise DimensionError("normalization scale/shift must have one entry per channel")
        grouped = x.reshape(n, groups, -1)
        mean = grouped.mean(axis=2, keepdims=True)
        var = grouped.var(axis=2, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = ((grouped - mean) * inv_std).reshape(x.shape)
        self.x_hat, self.inv_std, self.gain, self.groups = x_hat, inv_std, gain, groups
        view = (1, channels) + (1,) * (x.ndim - 2)
        return x_hat * gain.reshape(view) + shift.reshape(view)

    def backward(self, grad):
        x_hat, gain = self.x_hat, self.gain
        n, channels = grad.shape[:2]
        reduce_axes = (0,) + tuple(range(2, grad.ndim))
        grad_gain = (grad * x_hat).sum(axis=reduce_axes)
        grad_shift = grad.sum(axis=reduce_axes)
        view = (1, channels) + (1,) * (grad.ndim - 2)
        d_hat = (grad * gain.reshape(view)).reshape(n, self.groups, -1)
        x_hat_g = x_hat.reshape(n, self.groups, -1)
        count = d_hat.shape[2]
        grad_x = (self.inv_std / count) * (
            count * d_hat - d_hat.sum(axis=2, keepdims=True)
            - x_hat_g * (d_hat * x_hat_g).sum(axis=2, keepdims=True)
        )
        return grad_x.reshape(grad.shape), grad_gain, grad_shift


def normalize_features(x: Tensor, groups: int, gain: Tensor, shift: Tensor, eps: float = NORM_EPS) -> Tensor:
    return GroupNorm.apply(x, gain, shift, groups=groups, eps=eps)


class GlobalAvgPool(Function):
    def forward(self, x):
        if x.ndim != 4:
            raise DimensionError(f"global_avg_pool expects NCHW input, got {x.shape}")
        self.in_shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad):
        height, width = self.in_shape[2:]
        return (np.broadcast_to(grad / (height * width), self.in_shape).copy(),)


def global_avg_pool(x: Tensor) -> Tensor:
    return GlobalAvgPool.apply(x)


# =============================================================================
# Dense layers, softmax and loss
# =============================================================================

class Linear(Function):
    def forward(self, x, weight, bias):
        if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
            raise DimensionError(f"linear cannot map input {x.shape} with weight {weight.shape}")
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"bias shape {bias.shape} does not match weight {weight.shape}")
        self.x, self.weight = x, weight
        return x @ weight.T + bias

    def backward(self, grad):
        return grad @ self.weight, grad.T @ self.x, grad.sum(axis=0)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Linear.apply(x, weight, bias)


def softmax_array(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


class Softmax(Function):
    def forward(self, x, axis: int):
        self.axis = axis
        self.out = softmax_array(x, axis)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


def softmax(x: Tensor, axis: int = 1) -> Tensor:
    return Softmax.apply(x, axis=axis)


class CrossEntropy(Function):
    """
    Mean weighted negative log-likelihood over non-ignored pixels.

    Class axis is 1. Each valid pixel contributes weight[target] * nll and the
    sum is divided by the number of valid pixels.
    """

    def forward(self, logits, targets: np.ndarray, weights: Optional[np.ndarray],
                ignore_label: Optional[int]):
        classes = logits.shape[1]
        targets = np.asarray(targets)
        expected = (logits.shape[0],) + logits.shape[2:]
        if targets.shape != expected:
            raise DimensionError(f"targets {targets.shape} do not match logits {logits.shape}")
        valid = np.ones(targets.shape, dtype=bool) if ignore_label is None else targets != ignore_label
        if np.any((targets[valid] < 0) | (targets[valid] >= classes)):
            raise LabelError(f"targets must lie in [0, {classes}) or equal the ignore label")
        if weights is not None and np.asarray(weights).shape != (classes,):
            raise DimensionError(f"class weights must have {classes} entries")

        safe = np.where(valid, targets, 0).astype(np.int64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_prob = shifted - log_norm
        nll = -np.take_along_axis(log_prob, safe[:, None], axis=1)[:, 0]
        pixel_weight = valid.astype(np.float64)
        if weights is not None:
            pixel_weight = pixel_weight * np.asarray(weights, dtype=np.float64)[safe]
        count = int(valid.sum())
        self.count, self.pixel_weight, self.safe = count, pixel_weight, safe
        self.prob = np.exp(log_prob)
        if count == 0:
            return np.asarray(0.0)
        return np.asarray((pixel_weight * nll).sum() / count)

    def backward(self, grad):
        if self.count == 0:
            return (np.zeros_like(self.prob),)
        delta = self.prob.copy()
        np.put_along_axis(delta, self.safe[:, None],
                          np.take_along_axis(delta, self.safe[:, None], axis=1) - 1.0, axis=1)
        coefficient = float(grad) * self.pixel_weight / self.count
        return (delta * coefficient[:, None],)


def cross_entropy(logits: Tensor, targets: np.ndarray, class_weights: Optional[Sequence[float]] = None,
                  ignore_label: Optional[int] = None) -> Tensor:
    weights = None if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    return CrossEntropy.apply(logits, targets=targets, weights=weights, ignore_label=ignore_label)


# =============================================================================
# Resampling
# =============================================================================

def interpolation_matrix(in_size: int, out_size: int) -> np.ndarray:
    """Linear interpolation weights (align-corners-false), shape [out, in]."""
    ratio = in_size / out_size
    source = np.maximum((np.arange(out_size) + 0.5) * ratio - 0.5, 0.0)
    lower = np.minimum(np.floor(source).astype(np.int64), in_size - 1)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = source - lower
    matrix = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix


def resize_array(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the trailing two axes of a plain array."""
    height, width = array.shape[-2:]
    if (height, width) == (out_h, out_w):
        return np.array(array, dtype=np.float64)
    rows = interpolation_matrix(height, out_h)
    cols = interpolation_matrix(width, out_w)
    return rows @ np.asarray(array, dtype=np.float64) @ cols.T


class BilinearResize(Function):
    def forward(self, x, out_h: int, out_w: int):
        if out_h < 1 or out_w < 1:
            raise GeometryError(f"resize target {out_h}x{out_w} is not positive")
        height, width = x.shape[-2:]
        self.rows = interpolation_matrix(height, out_h)
        self.cols = interpolation_matrix(width, out_w)
        return self.rows @ x @ self.cols.T

    def backward(self, grad):
        return (self.rows.T @ grad @ self.cols,)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if x.shape[-2:] == (out_h, out_w):
        return x
    return BilinearResize.apply(x, out_h=int(out_h), out_w=int(out_w))
