"""Scikit-learn style estimator wrapping the glyph network.

X rows are flattened binary glyph images (input side squared columns,
row-major), optionally followed by the two raw location offsets when
``use_location`` is on. Standardization of the location features is learned
during fit and frozen into the model file.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .distortion import DistortionParams, make_distorter
from .errors import DataError
from .network import Network, load_model, parse_architecture, save_model
from .training import TrainConfig, train

__all__ = ["GlyphClassifier", "DESK_ARCH"]

DESK_ARCH = "48x48-8C3-MP2-24C3-MP2-72C3-MP2-100N-16SM"


def _check_glyph_matrix(X, side, use_location):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2D, got shape {X.shape}")
    want = side * side + (2 if use_location else 0)
    if X.shape[1] != want:
        raise ValueError(
            f"X must have {want} columns ({side}x{side} pixels"
            f"{' + 2 location offsets' if use_location else ''}), got {X.shape[1]}")
    pixels = X[:, :side * side]
    if not np.isin(pixels, (0.0, 1.0)).all():
        raise ValueError("image columns must be binary (0/1)")
    if use_location and not np.isfinite(X[:, side * side:]).all():
        raise ValueError("location columns must be finite")
    return X


class GlyphClassifier(BaseEstimator, ClassifierMixin):
    """Convolutional glyph classifier with the training tricks built in:
    per-presentation input distortion, dropout at the softmax input,
    Nesterov momentum, elementwise gradient clipping, early stopping."""

    def __init__(self, architecture=DESK_ARCH, activation="leaky",
                 use_location=True, dropout_rate=0.5, invert_input=False,
                 with_bias=True, distortion=True, distortion_params=None,
                 learning_rate=0.05, momentum=0.9, nesterov=True,
                 grad_clip=1.0, batch_size=20, epochs=30,
                 validation_fraction=0.1, random_state=0, verbose=False):
        self.architecture = architecture
        self.activation = activation
        self.use_location = use_location
        self.dropout_rate = dropout_rate
        self.invert_input = invert_input
        self.with_bias = with_bias
        self.distortion = distortion
        self.distortion_params = distortion_params
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.nesterov = nesterov
        self.grad_clip = grad_clip
        self.batch_size = batch_size
        self.epochs = epochs
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.verbose = verbose

    def _build_spec(self):
        return parse_architecture(
            self.architecture, use_location=self.use_location,
            dropout_rate=self.dropout_rate, activation=self.activation,
            invert_input=self.invert_input, with_bias=self.with_bias)

    def fit(self, X, y):
        spec = self._build_spec()
        side = spec.input_side
        X = _check_glyph_matrix(X, side, self.use_location)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
            raise ValueError("y must be integer class ids")
        if len(y) and (y.min() < 0 or y.max() >= spec.num_classes):
            raise DataError(f"labels must lie in [0, {spec.num_classes})")

        images = X[:, :side * side].reshape(-1, side, side).astype(np.uint8)
        offsets = X[:, side * side:] if self.use_location else np.zeros((len(y), 2))
        distorter = None
        if self.distortion and side == 48:
            params = self.distortion_params or DistortionParams()
            distorter = make_distorter(params)
        cfg = TrainConfig(
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            momentum=self.momentum, nesterov=self.nesterov,
            grad_clip=self.grad_clip, epochs=self.epochs,
            seed=self.random_state, distort=self.distortion,
            valid_fraction=self.validation_fraction)
        result = train(spec, cfg, images, offsets, y, distorter=distorter,
                       verbose=self.verbose)
        self.spec_ = spec
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.loc_mean_ = result.loc_mean
        self.loc_sd_ = result.loc_sd
        self.classes_ = np.arange(spec.num_classes)
        self.n_features_in_ = X.shape[1]
        self._net = Network(spec, result.params)
        return self

    def _split(self, X):
        side = self.spec_.input_side
        X = _check_glyph_matrix(X, side, self.spec_.use_location)
        images = X[:, :side * side].reshape(-1, side, side)
        locs = None
        if self.spec_.use_location:
            locs = (X[:, side * side:] - self.loc_mean_) / self.loc_sd_
        return images, locs

    def predict_proba(self, X):
        self._require_fitted()
        images, locs = self._split(X)
        return self._net.predict_proba(images, locs)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def predict_proba_glyphs(self, glyphs):
        """Pipeline convenience: probabilities for GlyphExtract objects."""
        self._require_fitted()
        return self._net.predict_proba(*self._glyph_arrays(glyphs))

    def _glyph_arrays(self, glyphs):
        images = np.stack([g.image for g in glyphs]).astype(np.float64)
        locs = None
        if self.spec_.use_location:
            raw = np.array([[g.top_offset, g.base_offset] for g in glyphs])
            locs = (raw - self.loc_mean_) / self.loc_sd_
        return images, locs

    def _require_fitted(self):
        if not hasattr(self, "spec_"):
            raise DataError("classifier is not fitted; call fit() or load()")

    def save(self, path):
        self._require_fitted()
        save_model(path, self.spec_, self.params_, (self.loc_mean_, self.loc_sd_))

    @classmethod
    def load(cls, path) -> "GlyphClassifier":
        spec, params, (mean, sd) = load_model(path)
        est = cls(architecture=spec.arch, activation=spec.activation,
                  use_location=spec.use_location, dropout_rate=spec.dropout_rate,
                  invert_input=spec.invert_input, with_bias=spec.with_bias)
        est.spec_ = spec
        est.params_ = params
        est.history_ = []
        est.best_epoch_ = -1
        est.loc_mean_ = mean
        est.loc_sd_ = sd
        est.classes_ = np.arange(spec.num_classes)
        est.n_features_in_ = spec.input_side ** 2 + (2 if spec.use_location else 0)
        est._net = Network(spec, params)
        return est

    @staticmethod
    def glyphs_to_X(glyphs):
        """GlyphExtracts -> feature matrix (pixels then raw offsets)."""
        rows = [np.concatenate([g.image.ravel().astype(np.float64),
                                [g.top_offset, g.base_offset]])
                for g in glyphs]
        return np.stack(rows)

    @staticmethod
    def dataset_to_X(images, offsets):
        """(n, s, s) images + (n, 2) offsets -> feature matrix."""
        n = len(images)
        return np.concatenate(
            [np.asarray(images, dtype=np.float64).reshape(n, -1),
             np.asarray(offsets, dtype=np.float64)], axis=1)
