"""Mini-batch MSE training of the sensitivity surrogate.

Labels may optionally be normalized per sample by their largest magnitude:
the OC update is invariant to positive per-field scaling of sensitivities,
so normalized targets are an equally valid regression task with a much
better-conditioned loss surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, NumericalError
from .adam import AdamConfig, AdamState, adam_step
from .network import NetworkSpec, backward_batch, forward_batch, init_params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)
    normalize_labels: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")


def normalize_per_sample(labels: np.ndarray) -> np.ndarray:
    """Scale each sample by 1 / max |value| (samples of all zeros pass through)."""
    peak = np.max(np.abs(labels), axis=(1, 2), keepdims=True)
    return labels / np.where(peak > 0.0, peak, 1.0)


def train(spec: NetworkSpec, densities: np.ndarray, sensitivities: np.ndarray,
          config: TrainConfig):
    """Train from a He init; returns (params, per-epoch mean MSE list).

    Deterministic for a fixed config: the init and the shuffle order derive
    from two child streams of ``config.seed``.
    """
    densities = np.asarray(densities, dtype=np.float64)
    labels = np.asarray(sensitivities, dtype=np.float64)
    if densities.ndim != 3 or densities.shape[1:] != (spec.height, spec.width):
        raise InputError(
            f"densities shape {densities.shape} does not match network "
            f"(n, {spec.height}, {spec.width})"
        )
    if labels.shape != densities.shape:
        raise InputError("densities and sensitivities shapes differ")
    if not np.all(np.isfinite(labels)):
        raise InputError("labels contain non-finite values")
    if config.normalize_labels:
        labels = normalize_per_sample(labels)

    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    params = init_params(spec, init_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    state = AdamState.for_params(params, config.adam)

    n = densities.shape[0]
    per_element = spec.height * spec.width
    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            xb = densities[batch][:, None]
            yb = labels[batch].reshape(batch.size, per_element)
            try:
                out, caches = forward_batch(spec, params, xb, keep_cache=True)
                err = out - yb
                loss = float(np.mean(err * err))
            except NumericalError:
                loss = np.nan
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss in epoch {epoch + 1}, batch starting at {start}"
                )
            total += loss * batch.size
            dout = 2.0 * err / (batch.size * per_element)
            grads = backward_batch(spec, params, caches, dout)
            params, state = adam_step(state, params, grads)
        history.append(total / n)
    return params, history
