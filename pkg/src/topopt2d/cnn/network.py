"""Encoder-decoder network mapping a density image to a sensitivity image.

The architecture is a fixed ladder of down-, flat-, and up-convolutions
followed by one linear fully connected head that emits one value per
element. ``channel_multiplier`` scales every channel count so the same
topology trains at desk scale; spatial sizes require H and W divisible by 8
(three halving stages).

All hidden layers use ReLU, the head is linear: estimated compliance
sensitivities are unbounded non-positive reals, and the raw head output is
returned unclamped so it remains directly testable (clamping to <= 0 is the
caller's job before an OC update).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, NumericalError
from . import ops

# Channel widths and layer kinds of the reference ladder, in order; the
# head maps the flattened last feature map to one output per element.
BASE_CHANNELS = (48, 128, 256, 256, 256, 512, 512, 1024, 1024,
                 1024, 1024, 512, 512, 256, 256, 256, 128, 48)
BASE_KINDS = ("down", "flat", "down", "flat", "flat", "down", "flat", "flat",
              "flat", "flat", "flat", "flat", "up", "flat", "flat", "up",
              "flat", "up")

_STRIDES = {"flat": 1, "down": 2, "up": 2}


@dataclass(frozen=True)
class ConvLayerSpec:
    """One layer: a convolution variant or the fully connected head.

    For ``fully_connected``, in_channels/out_channels carry the flattened
    feature counts and kernel/stride are unused placeholders.
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in ("flat", "down", "up", "fully_connected"):
            raise InputError(f"unknown layer kind {self.kind!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InputError("channel counts must be >= 1")
        if self.activation not in ("relu", "linear"):
            raise InputError(f"unknown activation {self.activation!r}")
        if self.kind == "flat" and (self.kernel[0] % 2 == 0 or self.kernel[1] % 2 == 0):
            raise InputError("flat convolutions need odd kernels to preserve size")
        if self.kind != "fully_connected" and self.stride != _STRIDES[self.kind]:
            raise InputError(f"{self.kind} layers use stride {_STRIDES[self.kind]}")

    @property
    def pad(self) -> int:
        return (self.kernel[0] - self.stride) // 2


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layers plus the input geometry they are wired for."""

    layers: tuple[ConvLayerSpec, ...]
    height: int
    width: int
    channel_multiplier: float = 1.0
    flat_kernel: int = 3
    resample_kernel: int = 4

    def __post_init__(self):
        trace = self.shape_trace()   # validates propagation end to end
        if trace[-1] != (self.height * self.width,):
            raise InputError("network head does not emit one value per element")

    def shape_trace(self) -> list[tuple]:
        """Output shape of every stage: input, each conv layer, the head."""
        c, h, w = 1, self.height, self.width
        trace: list[tuple] = [(c, h, w)]
        for layer in self.layers:
            if layer.kind == "fully_connected":
                if layer.in_channels != c * h * w:
                    raise InputError(
                        f"head expects {layer.in_channels} features, previous "
                        f"layer emits {c}x{h}x{w} = {c * h * w}"
                    )
                trace.append((layer.out_channels,))
                continue
            if layer.in_channels != c:
                raise InputError(
                    f"layer expects {layer.in_channels} channels, gets {c}"
                )
            kh = layer.kernel[0]
            if layer.kind in ("flat", "down"):
                h = ops.output_size(h, kh, layer.stride, layer.pad)
                w = ops.output_size(w, layer.kernel[1], layer.stride, layer.pad)
            else:
                h = layer.stride * (h - 1) + kh - 2 * layer.pad
                w = layer.stride * (w - 1) + layer.kernel[1] - 2 * layer.pad
            c = layer.out_channels
            trace.append((c, h, w))
        return trace

    def param_shapes(self) -> list[tuple[tuple, tuple]]:
        """(weight shape, bias shape) per layer."""
        shapes = []
        for layer in self.layers:
            if layer.kind == "fully_connected":
                shapes.append(((layer.in_channels, layer.out_channels),
                               (layer.out_channels,)))
            else:
                shapes.append(((layer.out_channels, layer.in_channels,
                                layer.kernel[0], layer.kernel[1]),
                               (layer.out_channels,)))
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(w)) + int(np.prod(b)) for w, b in self.param_shapes())

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "channel_multiplier": self.channel_multiplier,
            "flat_kernel": self.flat_kernel,
            "resample_kernel": self.resample_kernel,
        }


def scaled_channels(multiplier: float) -> list[int]:
    return [max(1, round(c * multiplier)) for c in BASE_CHANNELS]


def build_network_spec(height: int, width: int, channel_multiplier: float = 1.0,
                       flat_kernel: int = 3, resample_kernel: int = 4) -> NetworkSpec:
    """Assemble the reference ladder for an H x W design grid."""
    if height % 8 or width % 8:
        raise InputError(f"H and W must be divisible by 8, got {height}x{width}")
    channels = scaled_channels(channel_multiplier)
    layers = []
    prev = 1
    for kind, out in zip(BASE_KINDS, channels):
        k = flat_kernel if kind == "flat" else resample_kernel
        layers.append(ConvLayerSpec(kind, prev, out, (k, k), _STRIDES[kind]))
        prev = out
    layers.append(ConvLayerSpec("fully_connected", prev * height * width,
                                height * width, activation="linear"))
    return NetworkSpec(tuple(layers), height, width, channel_multiplier,
                       flat_kernel, resample_kernel)


def _mean_tap_fraction(layer: ConvLayerSpec, in_h: int, in_w: int) -> float:
    """Average fraction of kernel taps that land inside the (padded) input.

    At the small spatial sizes of the bottleneck stages most taps fall on
    zero padding; scaling the init by the nominal tap count would attenuate
    the signal roughly in half per layer otherwise.
    """
    kh, kw = layer.kernel
    ones = np.ones((1, 1, in_h, in_w))
    if layer.kind == "up":
        w = np.ones((1, 1, kh, kw))
        counts, _ = ops.upconv2d_forward(ones, w, np.zeros(1), layer.stride, layer.pad)
    else:
        w = np.ones((1, 1, kh, kw))
        counts, _ = ops.conv2d_forward(ones, w, np.zeros(1), layer.stride, layer.pad)
    return float(counts.mean() / (kh * kw))


def init_params(spec: NetworkSpec, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fan-in-scaled normal weights, zero biases; deterministic per seed.

    Hidden (relu) convolutions use He scaling with the fan-in corrected for
    boundary taps so activations keep their variance through the deep
    small-map stages; the linear head uses unit-gain (LeCun) scaling.
    """
    rng = np.random.default_rng(seed)
    params = []
    trace = spec.shape_trace()
    for idx, (layer, (w_shape, b_shape)) in enumerate(zip(spec.layers, spec.param_shapes())):
        if layer.kind == "fully_connected":
            std = np.sqrt(1.0 / layer.in_channels)
        else:
            _, in_h, in_w = trace[idx]
            fan_in = layer.in_channels * layer.kernel[0] * layer.kernel[1]
            fan_in *= _mean_tap_fraction(layer, in_h, in_w)
            gain = 2.0 if layer.activation == "relu" else 1.0
            std = np.sqrt(gain / fan_in)
        weight = rng.standard_normal(w_shape) * std
        params.append((weight, np.zeros(b_shape)))
    return params


def check_params(spec: NetworkSpec, params) -> None:
    expected = spec.param_shapes()
    if len(params) != len(expected):
        raise InputError(f"expected {len(expected)} parameter pairs, got {len(params)}")
    for idx, ((weight, bias), (w_shape, b_shape)) in enumerate(zip(params, expected)):
        if weight.shape != w_shape or bias.shape != b_shape:
            raise InputError(
                f"layer {idx}: parameter shapes {weight.shape}/{bias.shape} "
                f"do not match spec {w_shape}/{b_shape}"
            )


def _apply_layer(layer: ConvLayerSpec, weight, bias, x):
    """Run one layer on a batch; returns (output, op cache)."""
    if layer.kind == "fully_connected":
        flat = x.reshape(x.shape[0], -1)
        y = ops.fc_forward(flat, weight, bias)
        cache = (flat,)
    elif layer.kind == "up":
        y, cache = ops.upconv2d_forward(x, weight, bias, layer.stride, layer.pad)
    else:
        y, cache = ops.conv2d_forward(x, weight, bias, layer.stride, layer.pad)
    if layer.activation == "relu":
        y = ops.relu_forward(y)
    return y, cache


def forward_from(spec: NetworkSpec, params, x: np.ndarray, start: int = 0) -> np.ndarray:
    """Run layers ``start``.. end on a batch whose shape feeds layer ``start``."""
    for layer, (weight, bias) in zip(spec.layers[start:], params[start:]):
        x, _ = _apply_layer(layer, weight, bias, x)
    return x


def forward_batch(spec: NetworkSpec, params, x: np.ndarray,
                  keep_cache: bool = False):
    """Forward a batch (N, 1, H, W) -> (N, H*W).

    With ``keep_cache`` the per-layer activations and op caches are returned
    for :func:`backward_batch`.
    """
    check_params(spec, params)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (spec.height, spec.width):
        raise InputError(
            f"input shape {x.shape} does not match (N, 1, {spec.height}, {spec.width})"
        )
    caches = []
    for layer, (weight, bias) in zip(spec.layers, params):
        y, cache = _apply_layer(layer, weight, bias, x)
        if keep_cache:
            caches.append((cache, y))
        x = y
    if not np.all(np.isfinite(x)):
        raise NumericalError("forward pass produced non-finite values")
    return (x, caches) if keep_cache else x


def backward_batch(spec: NetworkSpec, params, caches, dout: np.ndarray):
    """Reverse-mode gradients for every parameter; dout matches the head output."""
    if not caches:
        raise InputError("backward requires the caches of a forward pass")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params)
    dy = np.asarray(dout, dtype=np.float64)
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[idx]
        weight, _ = params[idx]
        cache, y = caches[idx]
        if layer.activation == "relu":
            dy = ops.relu_backward(dy, y)
        if layer.kind == "fully_connected":
            dy, dw, db = ops.fc_backward(dy, cache[0], weight)
        elif layer.kind == "up":
            dy, dw, db = ops.upconv2d_backward(dy, cache)
        else:
            dy, dw, db = ops.conv2d_backward(dy, cache)
        grads[idx] = (dw, db)
        if layer.kind == "fully_connected":
            # restore the spatial shape the preceding conv produced
            prev_shape = spec.shape_trace()[idx]
            dy = dy.reshape(dy.shape[0], *prev_shape)
    return grads


def predict(spec: NetworkSpec, params, density) -> np.ndarray:
    """Estimate the sensitivity field of one (H, W) density image."""
    x = np.asarray(density, dtype=np.float64)
    if x.shape != (spec.height, spec.width):
        raise InputError(
            f"density shape {x.shape} does not match network ({spec.height}, {spec.width})"
        )
    out = forward_batch(spec, params, x[None, None])
    return out.reshape(spec.height, spec.width)
