import numpy as np
import pytest

from glyphocr.errors import DataError, NumericError
from glyphocr.network import parse_architecture
from glyphocr.training import (
    TrainConfig,
    sgd_step,
    standardize_locations,
    train,
)


def separable_toyset(n_per_class=40, seed=0):
    """8x8 binary images: class 0 inks the left half, class 1 the right."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for cls in range(2):
        for _ in range(n_per_class):
            img = np.zeros((8, 8), dtype=np.uint8)
            cols = slice(0, 4) if cls == 0 else slice(4, 8)
            img[:, cols] = (rng.random((8, 4)) < 0.8).astype(np.uint8)
            images.append(img)
            labels.append(cls)
    images = np.stack(images)
    labels = np.array(labels)
    offsets = rng.normal(0, 0.05, size=(len(labels), 2))
    return images, offsets, labels


class TestSgdStep:
    def run_step(self, cfg, w0, g, v0):
        params = [(np.array([w0]), np.zeros(1))]
        grads = [(np.array([g]), np.zeros(1))]
        vel = [(np.array([v0]), np.zeros(1))]
        sgd_step(params, grads, vel, cfg)
        return params[0][0][0], vel[0][0][0]

    def test_zero_momentum_is_plain_sgd(self):
        cfg = TrainConfig(learning_rate=0.1, momentum=0.0, nesterov=False, epochs=1)
        w, v = self.run_step(cfg, 1.0, 0.5, 0.0)
        assert w == pytest.approx(1.0 - 0.1 * 0.5)

    def test_huge_gradient_clipped(self):
        cfg = TrainConfig(learning_rate=1.0, momentum=0.0, nesterov=False,
                          grad_clip=1.0, epochs=1)
        w, _ = self.run_step(cfg, 0.0, 1e16, 0.0)
        assert w == -1.0  # effective gradient is the clip bound

    def test_two_momentum_steps_match_hand_unrolled(self):
        eta, mu, g1, g2 = 0.1, 0.9, 0.3, -0.2
        cfg = TrainConfig(learning_rate=eta, momentum=mu, nesterov=False, epochs=1)
        params = [(np.array([2.0]), np.zeros(1))]
        vel = [(np.zeros(1), np.zeros(1))]
        sgd_step(params, [(np.array([g1]), np.zeros(1))], vel, cfg)
        sgd_step(params, [(np.array([g2]), np.zeros(1))], vel, cfg)
        v1 = -eta * g1
        w1 = 2.0 + v1
        v2 = mu * v1 - eta * g2
        w2 = w1 + v2
        assert params[0][0][0] == pytest.approx(w2, abs=1e-15)

    def test_nesterov_step(self):
        eta, mu, g = 0.1, 0.9, 0.4
        cfg = TrainConfig(learning_rate=eta, momentum=mu, nesterov=True, epochs=1)
        w, v = self.run_step(cfg, 1.0, g, 0.2)
        v_new = mu * 0.2 - eta * g
        assert v == pytest.approx(v_new)
        assert w == pytest.approx(1.0 + mu * v_new - eta * g)

    def test_nonfinite_gradient_aborts(self):
        cfg = TrainConfig(epochs=1)
        with pytest.raises(NumericError):
            self.run_step(cfg, 0.0, float("nan"), 0.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0)
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.0)
        with pytest.raises(ValueError):
            TrainConfig(grad_clip=0)


class TestStandardizeLocations:
    def test_exact_mean_sd(self):
        data = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
        mean, sd = standardize_locations(data)
        assert np.allclose(mean, [2.0, 3.0])
        assert np.allclose(sd, data.std(axis=0))

    def test_constant_feature_maps_to_zero(self):
        data = np.array([[0.7, 1.0], [0.7, 2.0]])
        mean, sd = standardize_locations(data)
        assert sd[0] == 1.0
        z = (data - mean) / sd
        assert np.allclose(z[:, 0], 0.0)

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            standardize_locations(np.array([[1.0, 2.0]]))


class TestTrain:
    def test_separable_toyset_reaches_zero_train_error(self):
        images, offsets, labels = separable_toyset()
        spec = parse_architecture("8x8-2SM")
        cfg = TrainConfig(epochs=20, learning_rate=0.5, momentum=0.0,
                          nesterov=False, distort=False, seed=1)
        result = train(spec, cfg, images, offsets, labels)
        assert result.history[-1][1] == 0.0

    def test_seeded_determinism(self):
        images, offsets, labels = separable_toyset()
        spec = parse_architecture("8x8-4N-2SM", dropout_rate=0.3)
        cfg = TrainConfig(epochs=4, seed=7, distort=False)
        r1 = train(spec, cfg, images, offsets, labels)
        r2 = train(spec, cfg, images, offsets, labels)
        assert r1.history == r2.history
        for a, b in zip(r1.params, r2.params):
            if a is not None:
                assert np.array_equal(a[0], b[0])

    def test_distortion_consumes_rng_deterministically(self):
        from glyphocr.distortion import DistortionParams, make_distorter
        images, offsets, labels = separable_toyset()
        # mild distortion; 8x8 toy images skip the 48x48-only distorter
        spec = parse_architecture("8x8-2SM")
        cfg = TrainConfig(epochs=2, seed=3, distort=False)
        r1 = train(spec, cfg, images, offsets, labels, distorter=None)
        assert len(r1.history) == 2

    def test_empty_dataset_rejected(self):
        spec = parse_architecture("8x8-2SM")
        with pytest.raises(DataError):
            train(spec, TrainConfig(epochs=1),
                  np.zeros((0, 8, 8)), np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_out_of_range_labels_rejected(self):
        images, offsets, labels = separable_toyset(4)
        spec = parse_architecture("8x8-2SM")
        with pytest.raises(DataError):
            train(spec, TrainConfig(epochs=1), images, offsets, labels + 5)

    def test_early_stopping_returns_best_epoch_params(self):
        images, offsets, labels = separable_toyset()
        spec = parse_architecture("8x8-4N-2SM")
        cfg = TrainConfig(epochs=6, seed=5, distort=False)
        result = train(spec, cfg, images, offsets, labels)
        valid_curve = [row[2] for row in result.history]
        assert result.best_epoch == int(np.argmin(valid_curve))

    def test_location_feature_used_when_informative(self):
        # images identical across classes; only the location column separates
        rng = np.random.default_rng(6)
        img = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        n = 60
        images = np.stack([img] * (2 * n))
        labels = np.array([0] * n + [1] * n)
        offsets = np.zeros((2 * n, 2))
        offsets[:n, 1] = 0.0
        offsets[n:, 1] = 0.4
        spec = parse_architecture("8x8-2SM", use_location=True)
        cfg = TrainConfig(epochs=25, learning_rate=0.5, momentum=0.0,
                          nesterov=False, distort=False, seed=2)
        result = train(spec, cfg, images, offsets, labels)
        assert result.history[-1][1] == 0.0
