"""Convolutional / highway-MLP binary classifier for fixed-length DNA.

Architecture: ``n_conv_layers`` x (conv -> ReLU -> max-pool -> dropout),
temporal max-pool to a ``conv_units`` vector, an affine projection to
``mlp_units``, ``n_highway_layers`` highway layers and a 2-way softmax.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nncore as nn
from .seqdata import ALPHABET, Dataset

log = logging.getLogger(__name__)

MAGIC = b"DEMO1"
FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


class CheckpointError(ModelError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_conv_layers: int = 3
    conv_units: int = 128
    filter_len: int = 5
    pool_per_layer: tuple[int, ...] | None = None
    n_highway_layers: int = 5
    mlp_units: int = 32
    dropout_rate: float = 0.2
    input_len: int = 101

    def __post_init__(self):
        if self.pool_per_layer is None:
            object.__setattr__(self, "pool_per_layer", (2,) * self.n_conv_layers)
        object.__setattr__(self, "pool_per_layer", tuple(int(p) for p in self.pool_per_layer))
        self.validate()

    def validate(self) -> None:
        if self.n_conv_layers < 1:
            raise ModelError("n_conv_layers must be >= 1")
        if len(self.pool_per_layer) != self.n_conv_layers:
            raise ModelError(
                f"pool_per_layer has {len(self.pool_per_layer)} entries for {self.n_conv_layers} conv layers")
        if any(p not in (1, 2) for p in self.pool_per_layer):
            raise ModelError(f"pool sizes must be 1 or 2, got {self.pool_per_layer}")
        for name in ("conv_units", "filter_len", "mlp_units", "input_len"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")
        if self.n_highway_layers < 0:
            raise ModelError("n_highway_layers must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ModelError("dropout_rate must be in [0, 1)")
        self.trace_lengths()

    def trace_lengths(self) -> list[tuple[int, int]]:
        """(conv output length, pooled length) per conv layer."""
        L = self.input_len
        trace = []
        for i, pool in enumerate(self.pool_per_layer):
            conv_len = L - self.filter_len + 1
            if conv_len < 1:
                raise ModelError(
                    f"temporal length underflow at conv layer {i + 1}: "
                    f"{L} - {self.filter_len} + 1 = {conv_len}")
            L = -(-conv_len // pool)
            trace.append((conv_len, L))
        return trace

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pool_per_layer"] = list(self.pool_per_layer)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 5

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise ModelError("epochs must be >= 0, batch_size and patience >= 1")
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be > 0")


@dataclass
class ModelParams:
    """Named float64 arrays in a fixed order (the checkpoint order)."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.arrays.items()}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = len(ALPHABET)
    for i in range(cfg.n_conv_layers):
        shapes[f"conv{i}.W"] = (cfg.filter_len, c_in, cfg.conv_units)
        shapes[f"conv{i}.b"] = (cfg.conv_units,)
        c_in = cfg.conv_units
    shapes["proj.W"] = (cfg.conv_units, cfg.mlp_units)
    shapes["proj.b"] = (cfg.mlp_units,)
    d = cfg.mlp_units
    for i in range(cfg.n_highway_layers):
        shapes[f"hw{i}.W_H"] = (d, d)
        shapes[f"hw{i}.b_H"] = (d,)
        shapes[f"hw{i}.W_T"] = (d, d)
        shapes[f"hw{i}.b_T"] = (d,)
    shapes["out.W"] = (d, 2)
    shapes["out.b"] = (2,)
    return shapes


def build_model(cfg: ModelConfig, seed: int) -> ModelParams:
    """Fan-in scaled uniform weights, zero biases, gate biases at -2."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b_T"):
            arrays[name] = np.full(shape, -2.0)
        elif len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(arrays)


def forward_graph(tensors: dict[str, nn.Tensor], cfg: ModelConfig, x: nn.Tensor,
                  train: bool = False, rng: np.random.Generator | None = None,
                  trace: list | None = None) -> nn.Tensor:
    """Logits tensor (``[2]`` or ``[B, 2]``) for input ``x`` of shape ``[..., L, 4]``."""
    if x.shape[-2] != cfg.input_len:
        raise ModelError(f"input length {x.shape[-2]} != configured input_len {cfg.input_len}")
    h = x
    for i, pool in enumerate(cfg.pool_per_layer):
        h = nn.conv1d(h, tensors[f"conv{i}.W"], tensors[f"conv{i}.b"])
        h = nn.relu(h)
        h = nn.max_pool1d(h, pool)
        h = nn.dropout(h, cfg.dropout_rate, train, rng)
        if trace is not None:
            trace.append(h.shape)
    h = nn.global_max_pool(h)
    if trace is not None:
        trace.append(h.shape)
    h = nn.affine(h, tensors["proj.W"], tensors["proj.b"])
    for i in range(cfg.n_highway_layers):
        h = nn.highway_layer(h, tensors[f"hw{i}.W_H"], tensors[f"hw{i}.b_H"],
                             tensors[f"hw{i}.W_T"], tensors[f"hw{i}.b_T"])
    return nn.affine(h, tensors["out.W"], tensors["out.b"])


def param_tensors(params: ModelParams, requires_grad: bool = False) -> dict[str, nn.Tensor]:
    # wraps without copying; training updates the arrays in place
    return {k: nn.Tensor(v, requires_grad=requires_grad, name=k) for k, v in params.arrays.items()}


def trace_shapes(cfg: ModelConfig) -> list[tuple[int, ...]]:
    """Run a zero input through the network and record per-stage shapes."""
    params = ModelParams({k: np.zeros(s) for k, s in param_shapes(cfg).items()})
    trace: list = []
    forward_graph(param_tensors(params), cfg, nn.Tensor(np.zeros((cfg.input_len, 4))), trace=trace)
    return trace


def forward_model(params: ModelParams, cfg: ModelConfig, x: np.ndarray, train: bool = False,
                  seed: int | None = None) -> tuple[np.ndarray, float]:
    """(logits, p_positive) for a single ``L x 4`` matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ModelError(f"expected an L x 4 matrix, got shape {x.shape}")
    rng = np.random.default_rng(seed) if train else None
    logits = forward_graph(param_tensors(params), cfg, nn.Tensor(x), train, rng).values
    probs = nn.softmax(nn.Tensor(logits)).values
    return logits, float(probs[1])


def predict(params: ModelParams, cfg: ModelConfig, ds: Dataset, batch_size: int = 256) -> list[float]:
    """Eval-mode positive-class probability per sequence, in input order."""
    if len(ds) == 0:
        return []
    X = ds.one_hot()
    return predict_matrix(params, cfg, X, batch_size).tolist()


def predict_matrix(params: ModelParams, cfg: ModelConfig, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
    tensors = param_tensors(params)
    out = []
    for start in range(0, len(X), batch_size):
        logits = forward_graph(tensors, cfg, nn.Tensor(X[start:start + batch_size]))
        out.append(nn.softmax(logits).values[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for tied scores."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ModelError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ModelError("auc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    # twice the U statistic is an integer, so this stays exact
    u2 = 2.0 * ranks[labels == 1].sum() - n_pos * (n_pos + 1)
    return u2 / (2.0 * n_pos * n_neg)


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def train(params: ModelParams, cfg: ModelConfig, tcfg: TrainConfig, train_ds: Dataset,
          val_ds: Dataset) -> tuple[ModelParams, History]:
    """Adam on minibatch cross-entropy; keeps the best validation-AUC epoch."""
    hist = History()
    if tcfg.epochs == 0:
        return params, hist
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ModelError("training and validation sets must be non-empty")
    train_ds.require_both_classes()
    val_ds.require_both_classes()
    for ds in (train_ds, val_ds):
        if ds.length != cfg.input_len:
            raise ModelError(f"sequence length {ds.length} != configured input_len {cfg.input_len}")

    params = params.copy()
    X, y = train_ds.one_hot(), train_ds.labels
    Xv, yv = val_ds.one_hot(), val_ds.labels
    rng = np.random.default_rng(tcfg.seed)
    state = nn.AdamState()
    best_auc, best_params, stale = -np.inf, params.copy(), 0

    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            tensors = param_tensors(params, requires_grad=True)
            logits = forward_graph(tensors, cfg, nn.Tensor(X[idx]), train=True, rng=rng)
            loss, _ = nn.softmax_cross_entropy(logits, y[idx])
            if not np.isfinite(loss.values):
                raise ModelError(
                    f"non-finite loss at epoch {epoch + 1}, batch starting {start}: "
                    f"logit range [{logits.values.min()}, {logits.values.max()}]")
            nn.backward(loss)
            grads = {k: t.grad for k, t in tensors.items()}
            nn.adam_step(params.arrays, grads, state, lr=tcfg.learning_rate)
            total += loss.item() * len(idx)
        epoch_loss = total / len(X)
        val = auc(predict_matrix(params, cfg, Xv), yv)
        hist.loss.append(epoch_loss)
        hist.val_auc.append(val)
        log.info("epoch %d loss %.4f val_auc %.4f", epoch + 1, epoch_loss, val)
        if val > best_auc:
            best_auc, best_params, stale = val, params.copy(), 0
            hist.best_epoch = epoch
        else:
            stale += 1
            if stale >= tcfg.patience:
                break
    return best_params, hist


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
#
# Layout: b"DEMO1", uint64 LE header length, UTF-8 JSON header, then every
# parameter as little-endian float64 in header["params"] order.

def save_checkpoint(params: ModelParams, cfg: ModelConfig, path: str | Path) -> None:
    expected = param_shapes(cfg)
    if params.shapes() != expected:
        raise CheckpointError("parameters do not match the configuration")
    header = {
        "format_version": FORMAT_VERSION,
        "alphabet": ALPHABET,
        "config": cfg.to_dict(),
        "params": [[name, list(shape)] for name, shape in expected.items()],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<Q", len(hbytes)))
    buf.write(hbytes)
    for name in expected:
        buf.write(np.ascontiguousarray(params.arrays[name], dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, expect: ModelConfig | None = None) -> tuple[ModelParams, ModelConfig]:
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a demotif checkpoint")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise CheckpointError("truncated checkpoint header")
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    pos += hlen
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {header.get('format_version')} != supported {FORMAT_VERSION}")
    if header.get("alphabet") != ALPHABET:
        raise CheckpointError(f"checkpoint alphabet {header.get('alphabet')!r} != {ALPHABET!r}")
    cfg = ModelConfig.from_dict(header["config"])
    stored = {name: tuple(shape) for name, shape in header["params"]}
    if stored != param_shapes(cfg):
        raise CheckpointError("shape mismatch between checkpoint header and its config")
    if expect is not None and param_shapes(expect) != stored:
        raise CheckpointError("shape mismatch: checkpoint does not match the expected configuration")
    arrays = {}
    for name, shape in stored.items():
        n = int(np.prod(shape)) * 8
        if len(data) < pos + n:
            raise CheckpointError(f"truncated checkpoint while reading {name}")
        arrays[name] = np.frombuffer(data, dtype="<f8", count=n // 8, offset=pos).astype(np.float64).reshape(shape)
        pos += n
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after parameters")
    return ModelParams(arrays), cfg
