"""Network assembly: architecture strings, parameter init, forward/backward
composition, posterior recalibration and the model file format.

Architecture strings follow the compact grammar "48x48-8C3-MP2-...-457SM":
input side, then mCk convolution layers (m maps, k x k kernel), MP2 max
pooling, mN fully connected layers and a terminal mSM softmax over m
classes. Leak coefficients follow a geometric schedule from 0.5 down to
0.05 across the activated hidden layers.
"""

from __future__ import annotations

import io
import re
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from . import layers as L

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "parse_architecture",
    "alpha_for_layer",
    "weight_init",
    "Network",
    "recalibrate",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"GLYPHNET"
MODEL_VERSION = 1
_ACTIVATIONS = ("leaky", "relu", "tanh")


@dataclass(frozen=True)
class LayerSpec:
    kind: str            # "conv" | "pool" | "full" | "softmax"
    units: int = 0       # conv output maps / fc units / softmax classes
    kernel: int = 0      # conv kernel side
    alpha: float = 0.0   # leak coefficient of this layer's activation


@dataclass(frozen=True)
class NetworkSpec:
    arch: str
    input_side: int
    layers: tuple
    num_classes: int
    use_location: bool = False
    dropout_rate: float = 0.0
    activation: str = "leaky"
    invert_input: bool = False
    with_bias: bool = True

    def softmax_input_size(self) -> int:
        side, depth = self.input_side, 1
        for ls in self.layers:
            if ls.kind == "conv":
                depth = ls.units
            elif ls.kind == "pool":
                side //= 2
            elif ls.kind == "full":
                depth, side = ls.units, 1
            elif ls.kind == "softmax":
                n = depth * side * side
                return n + (2 if self.use_location else 0)
        raise ValueError("spec has no softmax layer")


def alpha_for_layer(i: int, total: int) -> float:
    """Geometric interpolation of the leak from 0.5 down to 0.05."""
    if total <= 1:
        return 0.5
    return 0.5 * 0.1 ** (i / (total - 1))


_TOKEN = re.compile(r"^(?:(?P<maps>\d+)C(?P<k>\d+)|MP(?P<p>\d+)|(?P<n>\d+)N|(?P<sm>\d+)SM)$")


def parse_architecture(s: str, *, use_location=False, dropout_rate=0.0,
                       activation="leaky", invert_input=False,
                       with_bias=True) -> NetworkSpec:
    """Parse an architecture string into a validated NetworkSpec."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"activation must be one of {_ACTIVATIONS}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    tokens = s.split("-")
    m = re.match(r"^(\d+)x(\d+)$", tokens[0])
    if not m or m.group(1) != m.group(2):
        raise DataError(f"architecture must start with a square input size, got {tokens[0]!r}")
    side = int(m.group(1))
    if side <= 0:
        raise DataError("input side must be positive")

    specs = []
    cur_side, flattened, closed = side, False, False
    for tok in tokens[1:]:
        if closed:
            raise DataError(f"token {tok!r} after the softmax output layer")
        mt = _TOKEN.match(tok)
        if not mt:
            raise DataError(f"malformed architecture token {tok!r}")
        if mt.group("maps"):
            if flattened:
                raise DataError("convolution after a fully connected layer")
            k = int(mt.group("k"))
            if k % 2 == 0:
                raise DataError(f"convolution kernel must be odd, got {k}")
            specs.append(LayerSpec("conv", units=int(mt.group("maps")), kernel=k))
        elif mt.group("p"):
            if flattened:
                raise DataError("pooling after a fully connected layer")
            if int(mt.group("p")) != 2:
                raise DataError("only 2x2 max pooling is supported")
            if cur_side % 2:
                raise DataError(f"cannot pool an odd {cur_side}x{cur_side} map")
            cur_side //= 2
            specs.append(LayerSpec("pool"))
        elif mt.group("n"):
            flattened = True
            specs.append(LayerSpec("full", units=int(mt.group("n"))))
        else:
            flattened = closed = True
            specs.append(LayerSpec("softmax", units=int(mt.group("sm"))))
    if not closed:
        raise DataError("architecture must end with an mSM softmax layer")

    hidden = [i for i, ls in enumerate(specs) if ls.kind in ("conv", "full")]
    total = len(hidden)
    for rank, i in enumerate(hidden):
        a = alpha_for_layer(rank, total) if activation == "leaky" else 0.0
        specs[i] = replace(specs[i], alpha=a)
    return NetworkSpec(
        arch=s, input_side=side, layers=tuple(specs),
        num_classes=specs[-1].units, use_location=use_location,
        dropout_rate=dropout_rate, activation=activation,
        invert_input=invert_input, with_bias=with_bias,
    )


def _layer_shapes(spec: NetworkSpec):
    """(W shape, b shape) per layer, None for pooling."""
    shapes = []
    side, depth = spec.input_side, 1
    flat = None
    for ls in spec.layers:
        if ls.kind == "conv":
            shapes.append(((ls.units, depth, ls.kernel, ls.kernel), (ls.units,)))
            depth = ls.units
        elif ls.kind == "pool":
            shapes.append(None)
            side //= 2
        elif ls.kind == "full":
            flat = depth * side * side if flat is None else flat
            shapes.append(((ls.units, flat), (ls.units,)))
            flat = ls.units
        else:
            flat = depth * side * side if flat is None else flat
            n_in = flat + (2 if spec.use_location else 0)
            shapes.append(((ls.units, n_in), (ls.units,)))
    return shapes


def weight_init(spec: NetworkSpec, seed=0) -> list:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng([seed, 52361])
    params = []
    for shape in _layer_shapes(spec):
        if shape is None:
            params.append(None)
            continue
        w_shape, b_shape = shape
        if len(w_shape) == 4:
            fan_in = w_shape[1] * w_shape[2] * w_shape[3]
            fan_out = w_shape[0] * w_shape[2] * w_shape[3]
        else:
            fan_in, fan_out = w_shape[1], w_shape[0]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-a, a, size=w_shape), np.zeros(b_shape)))
    return params


class Network:
    """A parsed spec plus its parameters; forward, backward, prediction."""

    def __init__(self, spec: NetworkSpec, params=None, seed=0):
        self.spec = spec
        self.params = params if params is not None else weight_init(spec, seed)
        self._check_shapes()

    def _check_shapes(self):
        expected = _layer_shapes(self.spec)
        if len(expected) != len(self.params):
            raise ValueError("parameter count does not match the spec")
        for exp, got in zip(expected, self.params):
            if exp is None:
                if got is not None:
                    raise ValueError("pooling layers carry no parameters")
                continue
            w, b = got
            if tuple(w.shape) != exp[0] or tuple(b.shape) != exp[1]:
                raise ValueError(f"parameter shape {w.shape} does not match spec {exp[0]}")

    def _input_tensor(self, images):
        x = np.asarray(images, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-2:] != (self.spec.input_side,) * 2:
            raise ValueError(f"expected {self.spec.input_side}x{self.spec.input_side} inputs")
        if self.spec.invert_input:
            x = 1.0 - x
        return x[:, None, :, :]

    def forward(self, images, locs=None, dropout_mask=None):
        """Class probabilities for a batch; returns (probs, cache).

        dropout_mask (train mode) multiplies the softmax-layer input; it must
        already fold in the 1/(1-delta) survivor compensation. Inference
        passes no mask and applies no compensation.
        """
        spec = self.spec
        x = self._input_tensor(images)
        batch = x.shape[0]
        if spec.use_location:
            if locs is None:
                raise ValueError("spec uses location features but none were given")
            locs = np.asarray(locs, dtype=np.float64).reshape(batch, 2)
        cache = {"inputs": [], "preacts": [], "routes": {}, "mask": dropout_mask}
        flat = None
        for i, ls in enumerate(spec.layers):
            if ls.kind == "conv":
                w, b = self.params[i]
                cache["inputs"].append(x)
                pre = L.conv_forward(x, w, b)
                cache["preacts"].append(pre)
                x = L.activation(pre, ls.alpha, spec.activation)
            elif ls.kind == "pool":
                cache["inputs"].append(x)
                cache["preacts"].append(None)
                x, route = L.maxpool_forward(x)
                cache["routes"][i] = route
            elif ls.kind == "full":
                if flat is None:
                    cache["flatten_shape"] = x.shape
                    flat = x.reshape(batch, -1)
                w, b = self.params[i]
                cache["inputs"].append(flat)
                pre = L.fc_forward(flat, w, b)
                cache["preacts"].append(pre)
                flat = L.activation(pre, ls.alpha, spec.activation)
                x = flat
            else:
                if flat is None:
                    cache["flatten_shape"] = x.shape
                    flat = x.reshape(batch, -1)
                if spec.use_location:
                    flat = np.concatenate([flat, locs], axis=1)
                if dropout_mask is not None:
                    flat = flat * dropout_mask
                w, b = self.params[i]
                cache["inputs"].append(flat)
                logits = L.fc_forward(flat, w, b)
                cache["preacts"].append(logits)
                probs = L.softmax(logits)
                cache["probs"] = probs
        return probs, cache

    def predict_proba(self, images, locs=None):
        probs, _ = self.forward(images, locs)
        return probs

    def backward(self, cache, labels):
        """Exact gradients of the summed NLL for the cached forward pass."""
        spec = self.spec
        labels = np.asarray(labels)
        grads = [None] * len(spec.layers)
        d = None
        for i in range(len(spec.layers) - 1, -1, -1):
            ls = spec.layers[i]
            if ls.kind == "softmax":
                dlogits = L.nll_grad_logits(cache["probs"], labels)
                sm_in = cache["inputs"][i]
                d, dw, db = L.fc_backward(dlogits, sm_in, self.params[i][0])
                if cache["mask"] is not None:
                    d = d * cache["mask"]
                if spec.use_location:
                    d = d[:, :-2]
                grads[i] = (dw, db)
            elif ls.kind == "full":
                dpre = d * L.activation_grad(cache["preacts"][i], ls.alpha, spec.activation)
                d, dw, db = L.fc_backward(dpre, cache["inputs"][i], self.params[i][0])
                grads[i] = (dw, db)
            elif ls.kind == "pool":
                if d.ndim == 2:
                    d = d.reshape(cache["flatten_shape"])
                d = L.maxpool_backward(d, cache["routes"][i])
            else:
                if d.ndim == 2:
                    d = d.reshape(cache["flatten_shape"])
                dpre = d * L.activation_grad(cache["preacts"][i], ls.alpha, spec.activation)
                d, dw, db = L.conv_backward(dpre, cache["inputs"][i], self.params[i][0])
                grads[i] = (dw, db)
        if not spec.with_bias:
            grads = [g if g is None else (g[0], np.zeros_like(g[1])) for g in grads]
        return grads


def recalibrate(probs, lam: float):
    """Sharpen or flatten posteriors: p_k^lam, renormalized; zeros stay zero.

    Normalizing by the max first keeps big lam from underflowing every
    entry, so the argmax is preserved for any lam > 0.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    p = np.asarray(probs, dtype=np.float64)
    top = p.max(axis=-1, keepdims=True)
    if np.any(top <= 0):
        raise ValueError("probabilities must contain a positive entry")
    q = np.zeros_like(p)
    pos = p > 0
    q[pos] = np.exp(lam * np.log(p[pos] / np.broadcast_to(top, p.shape)[pos]))
    return q / q.sum(axis=-1, keepdims=True)


def _write_block(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_block(buf, shape):
    n = int(np.prod(shape))
    raw = buf.read(4 * n)
    if len(raw) != 4 * n:
        raise DataError("model file truncated inside a weight block")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def save_model(path, spec: NetworkSpec, params, loc_stats=None):
    """Model file: magic, version, arch string, flags, location
    standardization constants (float64), then per-layer float32 W and b
    blobs in declaration order."""
    mean, sd = loc_stats if loc_stats is not None else (np.zeros(2), np.ones(2))
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        arch = spec.arch.encode()
        fh.write(struct.pack("<I", len(arch)))
        fh.write(arch)
        fh.write(struct.pack("<BBBB", int(spec.use_location), int(spec.invert_input),
                             int(spec.with_bias), _ACTIVATIONS.index(spec.activation)))
        fh.write(struct.pack("<d", spec.dropout_rate))
        fh.write(struct.pack("<4d", float(mean[0]), float(mean[1]), float(sd[0]), float(sd[1])))
        for p in params:
            if p is None:
                continue
            _write_block(fh, p[0])
            _write_block(fh, p[1])


def load_model(path):
    """Returns (spec, params, (loc_mean, loc_sd)); params come back float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(8) != MODEL_MAGIC:
        raise DataError(f"{path} is not a model file (bad magic)")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    (arch_len,) = struct.unpack("<I", buf.read(4))
    arch = buf.read(arch_len).decode()
    use_loc, invert, with_bias, act_code = struct.unpack("<BBBB", buf.read(4))
    (dropout,) = struct.unpack("<d", buf.read(8))
    m0, m1, s0, s1 = struct.unpack("<4d", buf.read(32))
    spec = parse_architecture(
        arch, use_location=bool(use_loc), dropout_rate=dropout,
        activation=_ACTIVATIONS[act_code], invert_input=bool(invert),
        with_bias=bool(with_bias),
    )
    params = []
    for shape in _layer_shapes(spec):
        if shape is None:
            params.append(None)
            continue
        w = _read_block(buf, shape[0])
        b = _read_block(buf, shape[1])
        params.append((w, b))
    if buf.read(1):
        raise DataError("model file has trailing bytes")
    return spec, params, (np.array([m0, m1]), np.array([s0, s1]))
