"""Target models with a feature tap, the loss-prediction head, and the GRU sorter."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor

TASKS = ("classification", "regression")
TARGET_KINDS = ("mlp-classifier", "mlp-regressor", "tiny-cnn-classifier")


class ModelError(ValueError):
    pass


def _uniform(rng, shape, fan_in, name, init):
    if init == "zeros":
        return Parameter(np.zeros(shape), name)
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape), name)


class Module:
    """Holds an ordered name -> Parameter mapping."""

    def __init__(self):
        self.params = {}

    def _add(self, param):
        if param.name in self.params:
            raise ModelError(f"duplicate parameter identifier {param.name!r}")
        self.params[param.name] = param
        return param

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def freeze(self):
        for p in self.params.values():
            p.requires_grad = False

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) - set(state)
        if missing:
            raise ModelError(f"missing parameters: {sorted(missing)}")
        for name, p in self.params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ModelError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()


# -- target models -------------------------------------------------------------

@dataclass
class TargetConfig:
    kind: str = "mlp-classifier"
    input_dim: int = 16
    hidden: tuple = (64, 64)
    n_classes: int = 4
    grid: int = 8
    channels: tuple = (8, 16)
    init: str = "uniform"

    @property
    def task(self):
        return "regression" if self.kind == "mlp-regressor" else "classification"


class TargetModel(Module):
    """MLP or tiny CNN whose last hidden block is exposed as tapped features."""

    def __init__(self, config, seed=0):
        super().__init__()
        if config.kind not in TARGET_KINDS:
            raise ModelError(f"unknown target kind {config.kind!r}")
        self.config = config
        rng = np.random.default_rng(seed)
        init = config.init
        if config.kind == "tiny-cnn-classifier":
            c_prev = 1
            self.convs = []
            for i, c in enumerate(config.channels):
                w = self._add(_uniform(rng, (c, c_prev, 3, 3), c_prev * 9, f"conv{i}.weight", init))
                b = self._add(_uniform(rng, (c,), c_prev * 9, f"conv{i}.bias", init))
                # Later blocks downsample by 2.
                self.convs.append((w, b, 1 if i == 0 else 2))
                c_prev = c
            self.feature_dim = c_prev
        else:
            self.layers = []
            width = config.input_dim
            for i, h in enumerate(config.hidden):
                w = self._add(_uniform(rng, (width, h), width, f"fc{i}.weight", init))
                b = self._add(_uniform(rng, (h,), width, f"fc{i}.bias", init))
                self.layers.append((w, b))
                width = h
            self.feature_dim = width
        out_dim = 1 if config.task == "regression" else config.n_classes
        self.out_w = self._add(_uniform(rng, (self.feature_dim, out_dim), self.feature_dim, "out.weight", init))
        self.out_b = self._add(_uniform(rng, (out_dim,), self.feature_dim, "out.bias", init))

    @property
    def task(self):
        return self.config.task

    def input_shape(self):
        if self.config.kind == "tiny-cnn-classifier":
            return (1, self.config.grid, self.config.grid)
        return (self.config.input_dim,)

    def __call__(self, x):
        """Returns ``(output, features)``: logits (N, C) or predictions (N,)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        expected = self.input_shape()
        if x.shape[1:] != expected:
            raise ModelError(f"input shape {x.shape[1:]} does not match model input {expected}")
        if self.config.kind == "tiny-cnn-classifier":
            h = x
            for w, b, stride in self.convs:
                h = ad.leaky_relu(ad.conv2d(h, w, b, stride=stride, padding=1))
            features = h
            out = ad.linear(ad.global_avg_pool(features), self.out_w, self.out_b)
        else:
            h = x
            for w, b in self.layers:
                h = ad.leaky_relu(ad.linear(h, w, b))
            features = h
            out = ad.linear(features, self.out_w, self.out_b)
        if self.task == "regression":
            out = out[:, 0]
        return out, features


@dataclass
class PredictionBatch:
    indices: np.ndarray
    predictions: np.ndarray
    features: np.ndarray
    probabilities: np.ndarray = None
    losses: np.ndarray = None

    def __post_init__(self):
        d = len(self.indices)
        for name in ("predictions", "features", "probabilities", "losses"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != d:
                raise ModelError(f"{name} has length {len(arr)}, expected {d}")


def per_sample_loss(output, labels, task):
    """Cross-entropy (classification) or squared error (regression) per sample."""
    if task == "classification":
        labels = np.asarray(labels)
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ModelError("classification labels must be integers")
            labels = labels.astype(np.int64)
        return ad.cross_entropy(output, labels)
    if task == "regression":
        return ad.squared_error(output, np.asarray(labels, dtype=np.float64))
    raise ModelError(f"unknown task {task!r}")


def target_forward(model, x, indices=None, labels=None, batch_size=1024):
    """Inference pass; returns predictions, tapped features and optional losses."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if indices is None:
        indices = np.arange(n)
    preds, feats, losses = [], [], []
    for start in range(0, n, batch_size):
        out, features = model(Tensor(x[start:start + batch_size]))
        preds.append(out.data)
        feats.append(features.data)
        if labels is not None:
            losses.append(per_sample_loss(out, np.asarray(labels)[start:start + batch_size], model.task).data)
    preds = np.concatenate(preds) if preds else np.zeros((0,))
    feats = np.concatenate(feats) if feats else np.zeros((0, model.feature_dim))
    probs = None
    if model.task == "classification":
        probs = ad.softmax(Tensor(preds), axis=1).data
    return PredictionBatch(
        indices=np.asarray(indices),
        predictions=preds,
        features=feats,
        probabilities=probs,
        losses=np.concatenate(losses) if labels is not None else None,
    )


# -- loss prediction module ------------------------------------------------------

@dataclass
class LossPredictorConfig:
    feature_dim: int = 64
    hidden: int = 128
    alpha: float = 0.01
    init: str = "uniform"


class LossPredictor(Module):
    """GAP -> FC -> LeakyReLU -> FC, one predicted loss per sample."""

    def __init__(self, config, seed=0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        f, h = config.feature_dim, config.hidden
        self.w1 = self._add(_uniform(rng, (f, h), f, "lpm.fc1.weight", config.init))
        self.b1 = self._add(_uniform(rng, (h,), f, "lpm.fc1.bias", config.init))
        self.w2 = self._add(_uniform(rng, (h, 1), h, "lpm.fc2.weight", config.init))
        self.b2 = self._add(_uniform(rng, (1,), h, "lpm.fc2.bias", config.init))

    def __call__(self, features):
        features = features if isinstance(features, Tensor) else Tensor(features)
        if features.ndim not in (2, 4):
            raise ModelError(f"features of shape {features.shape} cannot be pooled")
        pooled = ad.global_avg_pool(features)
        if pooled.shape[1] != self.config.feature_dim:
            raise ModelError(
                f"pooled feature width {pooled.shape[1]} != lpm input {self.config.feature_dim}"
            )
        h = ad.leaky_relu(ad.linear(pooled, self.w1, self.b1), self.config.alpha)
        return ad.linear(h, self.w2, self.b2)[:, 0]


def predict_losses(lpm, features):
    """Predicted losses for detached features (numpy in, numpy out)."""
    return lpm(Tensor(np.asarray(features, dtype=np.float64))).data


# -- sorter ----------------------------------------------------------------------

@dataclass
class SorterConfig:
    seq_len: int = 32
    hidden: int = 128


class Sorter(Module):
    """Bidirectional GRU over a scalar sequence with a per-position linear head."""

    def __init__(self, config, seed=0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        h = config.hidden
        self.directions = {}
        for tag in ("fwd", "bwd"):
            self.directions[tag] = (
                self._add(_uniform(rng, (1, 3 * h), h, f"gru.{tag}.w_input", "uniform")),
                self._add(_uniform(rng, (3 * h,), h, f"gru.{tag}.b_input", "uniform")),
                self._add(_uniform(rng, (h, 3 * h), h, f"gru.{tag}.w_hidden", "uniform")),
                self._add(_uniform(rng, (3 * h,), h, f"gru.{tag}.b_hidden", "uniform")),
            )
        self.head_w = self._add(_uniform(rng, (2 * h, 1), 2 * h, "head.weight", "uniform"))
        self.head_b = self._add(_uniform(rng, (1,), 2 * h, "head.bias", "uniform"))

    @property
    def seq_len(self):
        return self.config.seq_len

    def _direction(self, x, tag, reverse):
        w_in, b_in, w_h, b_h = self.directions[tag]
        hsz = self.config.hidden
        batch, d = x.shape
        h = Tensor(np.zeros((batch, hsz)))
        states = [None] * d
        for t in (range(d - 1, -1, -1) if reverse else range(d)):
            h = ad.gru_cell(x[:, t:t + 1], h, w_in, b_in, w_h, b_h)
            states[t] = h
        return ad.stack(states, axis=1)

    def __call__(self, values):
        """Map (B, d) or (d,) normalized values to predicted normalized ranks."""
        values = values if isinstance(values, Tensor) else Tensor(values)
        squeeze = values.ndim == 1
        if squeeze:
            values = values[None, :]
        if values.ndim != 2 or values.shape[1] != self.seq_len:
            raise ModelError(
                f"sorter expects sequences of length {self.seq_len}, got shape {values.shape}"
            )
        fwd = self._direction(values, "fwd", reverse=False)
        bwd = self._direction(values, "bwd", reverse=True)
        states = ad.concat([fwd, bwd], axis=2)
        out = ad.linear(states, self.head_w, self.head_b)[:, :, 0]
        return out[0] if squeeze else out


def gru_cell_composed(x_t, h, w_in, b_in, w_h, b_h):
    """The GRU update spelled out in elementary primitives (reference for the fused op)."""
    hsz = h.shape[1]
    gx = ad.linear(x_t, w_in, b_in)
    gh = ad.linear(h, w_h, b_h)
    rz = ad.sigmoid(gx[:, :2 * hsz] + gh[:, :2 * hsz])
    r = rz[:, :hsz]
    z = rz[:, hsz:]
    n = ad.tanh(gx[:, 2 * hsz:] + r * gh[:, 2 * hsz:])
    return n + z * (h - n)


def sorter_forward(sorter, values):
    return sorter(values)


# -- construction and persistence -------------------------------------------------

def init_model(config, seed=0):
    if isinstance(config, TargetConfig):
        return TargetModel(config, seed)
    if isinstance(config, LossPredictorConfig):
        return LossPredictor(config, seed)
    if isinstance(config, SorterConfig):
        return Sorter(config, seed)
    raise ModelError(f"unsupported config type {type(config).__name__}")


MAGIC = b"L2RP"


def dump_params(state, path):
    """Write named float64 arrays: magic, count, then per entry name, shape, values.

    Layout (little-endian): ``b"L2RP"``, uint32 entry count; per entry uint16
    name length, UTF-8 name, uint8 ndim, uint32 extents, row-major float64 data.
    """
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(state)))
        for name, arr in state.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ModelError(f"{path}: not a parameter dump")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    return state


@dataclass
class SorterArtifact:
    sorter: Sorter
    meta: dict = field(default_factory=dict)


def save_sorter(sorter, path, **meta):
    """Parameter dump plus a ``<path>.meta`` key=value sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_params(sorter.state_dict(), path)
    header = {"d": sorter.seq_len, "hidden": sorter.config.hidden, **meta}
    lines = [f"{k} = {v}" for k, v in header.items()]
    Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")


def read_meta(path):
    meta = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def load_sorter(path):
    meta_path = Path(str(path) + ".meta")
    if not meta_path.exists():
        raise ModelError(f"missing sorter header {meta_path}")
    meta = read_meta(meta_path)
    sorter = Sorter(SorterConfig(seq_len=int(meta["d"]), hidden=int(meta["hidden"])))
    sorter.load_state_dict(load_params(path))
    sorter.freeze()
    return SorterArtifact(sorter, meta)
