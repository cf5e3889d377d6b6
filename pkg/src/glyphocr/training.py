"""Minibatch SGD training with momentum/Nesterov averaging, elementwise
gradient clipping, fresh per-presentation input distortion, dropout at the
softmax input, and early stopping on a held-out split.

Training is bit-reproducible for a fixed (seed, config, dataset): one RNG
drives the shuffle, the distortions and the dropout masks in a fixed order.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError
from .network import Network, NetworkSpec, weight_init

__all__ = [
    "TrainConfig",
    "TrainResult",
    "standardize_locations",
    "sgd_step",
    "evaluate",
    "train",
]


@dataclass
class TrainConfig:
    batch_size: int = 20
    learning_rate: float = 0.05
    momentum: float = 0.9
    nesterov: bool = True
    grad_clip: float = 1.0      # elementwise L-inf bound on gradients
    epochs: int = 30
    seed: int = 0
    distort: bool = True
    valid_fraction: float = 0.1
    eval_train: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0.0 <= self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must be in [0, 1)")


@dataclass
class TrainResult:
    params: list
    history: list                 # (epoch, train_err, valid_err) per epoch
    loc_mean: np.ndarray
    loc_sd: np.ndarray
    best_epoch: int = 0
    spec: NetworkSpec = None


def standardize_locations(offsets):
    """Affine transform constants (mean, sd) for the two location features.

    Computed once on the training set and frozen into the model file; a
    zero-variance feature gets sd clamped to 1 so it maps to 0.
    """
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)
    if len(offsets) < 2:
        raise DataError("need at least 2 samples to standardize locations")
    mean = offsets.mean(axis=0)
    sd = offsets.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return mean, sd


def sgd_step(params, grads, velocity, cfg: TrainConfig):
    """One parameter update, in place.

    Gradients are clipped elementwise to [-grad_clip, +grad_clip], then
    v <- mu v - eta g; classic momentum steps w += v, Nesterov steps
    w += mu v - eta g. Non-finite gradients abort the step.
    """
    for p, g, v in zip(params, grads, velocity):
        if p is None:
            continue
        for arr, garr, varr in zip(p, g, v):
            if not np.isfinite(garr).all():
                raise NumericError("non-finite gradient; update step aborted")
            gc = np.clip(garr, -cfg.grad_clip, cfg.grad_clip)
            varr *= cfg.momentum
            varr -= cfg.learning_rate * gc
            if cfg.nesterov:
                arr += cfg.momentum * varr - cfg.learning_rate * gc
            else:
                arr += varr


def evaluate(net: Network, images, locs, labels, batch_size=512) -> float:
    """Fraction of argmax misclassifications."""
    n = len(labels)
    if n == 0:
        return 0.0
    wrong = 0
    for lo in range(0, n, batch_size):
        hi = min(n, lo + batch_size)
        probs = net.predict_proba(
            np.asarray(images[lo:hi], dtype=np.float64),
            None if locs is None else locs[lo:hi],
        )
        wrong += int((probs.argmax(axis=1) != labels[lo:hi]).sum())
    return wrong / n


def _stratified_split(labels, fraction, rng):
    train_idx, valid_idx = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_valid = int(round(fraction * len(idx)))
        valid_idx.append(idx[:n_valid])
        train_idx.append(idx[n_valid:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(valid_idx))


def train(spec: NetworkSpec, cfg: TrainConfig, images, offsets, labels,
          distorter=None, verbose=False) -> TrainResult:
    """Train a network on a labelled glyph set; returns the best-validation
    parameters plus the per-epoch error curve."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    offsets = np.asarray(offsets, dtype=np.float64)
    if len(labels) == 0:
        raise DataError("empty training dataset")
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise DataError(f"labels must lie in [0, {spec.num_classes})")

    rng = np.random.default_rng([cfg.seed, 77003])
    if cfg.valid_fraction > 0:
        train_idx, valid_idx = _stratified_split(labels, cfg.valid_fraction, rng)
    else:
        train_idx, valid_idx = np.arange(len(labels)), np.array([], dtype=np.int64)

    loc_mean, loc_sd = standardize_locations(offsets[train_idx])
    locs_z = (offsets - loc_mean) / loc_sd if spec.use_location else None

    net = Network(spec, weight_init(spec, cfg.seed))
    velocity = [None if p is None else tuple(np.zeros_like(a) for a in p)
                for p in net.params]
    sm_inputs = spec.softmax_input_size()
    use_distort = cfg.distort and distorter is not None

    history = []
    best_err, best_epoch, best_params = np.inf, -1, None
    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            if use_distort:
                imgs = np.stack([distorter(images[i], rng) for i in batch])
            else:
                imgs = images[batch]
            mask = None
            if spec.dropout_rate > 0:
                keep = rng.random((len(batch), sm_inputs)) >= spec.dropout_rate
                mask = keep / (1.0 - spec.dropout_rate)
            probs, cache = net.forward(
                imgs.astype(np.float64),
                None if locs_z is None else locs_z[batch],
                dropout_mask=mask,
            )
            grads = net.backward(cache, labels[batch])
            scale = 1.0 / len(batch)
            grads = [None if g is None else (g[0] * scale, g[1] * scale) for g in grads]
            sgd_step(net.params, grads, velocity, cfg)

        train_err = (evaluate(net, images[train_idx],
                              None if locs_z is None else locs_z[train_idx],
                              labels[train_idx])
                     if cfg.eval_train else float("nan"))
        if len(valid_idx):
            valid_err = evaluate(net, images[valid_idx],
                                 None if locs_z is None else locs_z[valid_idx],
                                 labels[valid_idx])
        else:
            valid_err = train_err
        history.append((epoch, train_err, valid_err))
        if verbose:
            print(f"epoch {epoch:3d}  train {train_err:.4f}  valid {valid_err:.4f}")
        if valid_err < best_err:
            best_err, best_epoch = valid_err, epoch
            best_params = copy.deepcopy(net.params)

    return TrainResult(params=best_params if best_params is not None else net.params,
                       history=history, loc_mean=loc_mean, loc_sd=loc_sd,
                       best_epoch=best_epoch, spec=spec)
