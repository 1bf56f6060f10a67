"""The attention-based multi-label predictor.

Architecture: each history position's feature row is embedded by one shared
linear map; a trainable classification token is prepended; learnable position
embeddings and (optionally) a per-position context embedding are added; the
sequence passes through stacked post-norm transformer layers (multi-head
self-attention + pointwise feed-forward, each with a residual add and a layer
norm); the classification token's final state feeds a single linear head whose
sigmoid outputs are per-delta prefetch confidences.

Training is full-precision ADAM with a step-decayed learning rate, binary
cross-entropy over the bitmap dimensions, deterministic given the seed.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
import numpy as np

from prefetchlab import autodiff as ad
from prefetchlab.autodiff import Tensor

BCE_EPS = 1e-7
CHECKPOINT_MAGIC = b"PFLCKPT1"
CHECKPOINT_VERSION = 1


class NumericError(Exception):
    """A non-finite value appeared during a forward pass."""


class TrainingError(Exception):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    num_heads: int = 4
    num_layers: int = 2
    output_dim: int = 256
    history_len: int = 9
    input_dim: int = 10
    ffn_mult: int = 2
    use_context: bool = True

    def __post_init__(self):
        dims = (self.hidden_dim, self.num_heads, self.output_dim, self.history_len,
                self.input_dim, self.ffn_mult)
        if any(d < 1 for d in dims) or self.num_layers < 0:
            raise ValueError(f"all model dimensions must be >= 1 (layers >= 0): {self}")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )

    @property
    def seq_len(self) -> int:
        return self.history_len + 1  # classification token + history

    @property
    def ffn_dim(self) -> int:
        return self.ffn_mult * self.hidden_dim


def _param_spec(cfg: ModelConfig):
    """Canonical (name, shape, kind) list; kind drives initialization."""
    d, s, b = cfg.hidden_dim, cfg.input_dim, cfg.output_dim
    spec = [
        ("embed_w", (s, d), "linear"),
        ("cls_token", (d,), "zero"),
        ("pos_embed", (cfg.seq_len, d), "zero"),
        ("ctx_embed_w", (2, d), "linear"),
    ]
    for i in range(cfg.num_layers):
        p = f"layer{i}."
        spec += [
            (p + "attn_wq", (d, d), "linear"),
            (p + "attn_wk", (d, d), "linear"),
            (p + "attn_wv", (d, d), "linear"),
            (p + "attn_wo", (d, d), "linear"),
            (p + "ffn_w1", (d, cfg.ffn_dim), "linear"),
            (p + "ffn_b1", (cfg.ffn_dim,), "zero"),
            (p + "ffn_w2", (cfg.ffn_dim, d), "linear"),
            (p + "ffn_b2", (d,), "zero"),
            (p + "ln1_gain", (d,), "one"),
            (p + "ln1_bias", (d,), "zero"),
            (p + "ln2_gain", (d,), "one"),
            (p + "ln2_bias", (d,), "zero"),
        ]
    spec += [("head_w", (d, b), "linear"), ("head_b", (b,), "zero")]
    return spec


class ModelParams:
    """All learnable tensors, in canonical order."""

    def __init__(self, cfg: ModelConfig, tensors: dict[str, Tensor]):
        self.cfg = cfg
        self._tensors = tensors

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int, trainable: bool = True) -> "ModelParams":
        """Uniform +-sqrt(1/fan_in) for linear maps; zeros for biases, the
        classification token and position embeddings; unit layer-norm gains."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape, kind in _param_spec(cfg):
            if kind == "linear":
                bound = math.sqrt(1.0 / shape[0])
                data = rng.uniform(-bound, bound, size=shape)
            elif kind == "one":
                data = np.ones(shape)
            else:
                data = np.zeros(shape)
            tensors[name] = Tensor(data, requires_grad=trainable)
        return cls(cfg, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def items(self):
        for name, _, _ in _param_spec(self.cfg):
            yield name, self._tensors[name]

    def set_trainable(self, trainable: bool):
        for _, t in self.items():
            t.requires_grad = trainable
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.cfg,
            {n: Tensor(t.data.copy(), requires_grad=t.requires_grad) for n, t in self.items()},
        )

    def _payload(self) -> bytes:
        cfg = self.cfg
        head = CHECKPOINT_MAGIC + struct.pack(
            "<9I",
            CHECKPOINT_VERSION,
            cfg.hidden_dim, cfg.num_heads, cfg.num_layers, cfg.output_dim,
            cfg.history_len, cfg.input_dim, cfg.ffn_mult, int(cfg.use_context),
        )
        body = b"".join(
            t.data.astype("<f4").tobytes() for _, t in self.items()
        )
        return head + body

    def checksum(self) -> str:
        """Hex digest of the float32 serialized form (the determinism fingerprint)."""
        return hashlib.sha256(self._payload()).hexdigest()

    def save(self, path):
        payload = self._payload()
        with open(path, "wb") as fh:
            fh.write(payload)
            fh.write(hashlib.sha256(payload).digest())

    @classmethod
    def load(cls, path, trainable: bool = False) -> "ModelParams":
        with open(path, "rb") as fh:
            raw = fh.read()
        payload, digest = raw[:-32], raw[-32:]
        if hashlib.sha256(payload).digest() != digest:
            raise ValueError(f"{path}: checkpoint checksum mismatch")
        if payload[:8] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        fields = struct.unpack_from("<9I", payload, 8)
        if fields[0] != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {fields[0]}")
        cfg = ModelConfig(
            hidden_dim=fields[1], num_heads=fields[2], num_layers=fields[3],
            output_dim=fields[4], history_len=fields[5], input_dim=fields[6],
            ffn_mult=fields[7], use_context=bool(fields[8]),
        )
        offset = 8 + struct.calcsize("<9I")
        tensors = {}
        for name, shape, _ in _param_spec(cfg):
            count = int(np.prod(shape))
            data = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            tensors[name] = Tensor(data.astype(np.float64).reshape(shape), requires_grad=trainable)
        if offset != len(payload):
            raise ValueError(f"{path}: checkpoint has {len(payload) - offset} trailing bytes")
        return cls(cfg, tensors)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention: softmax(q k^T / sqrt(d_k)) v, row-wise."""
    for t in (q, k, v):
        if not np.isfinite(t.data).all():
            raise NumericError("non-finite attention input")
    dk = q.shape[-1]
    scores = ad.scale(ad.matmul(q, ad.transpose(k, _swap_last(k))), 1.0 / math.sqrt(dk))
    return ad.matmul(ad.softmax(scores, axis=-1), v)


def _swap_last(t: Tensor):
    axes = list(range(t.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def multi_head_attention(x: Tensor, wq, wk, wv, wo, num_heads: int) -> Tensor:
    """H parallel attentions on hidden_dim/H projections, concatenated, projected."""
    *batch, seq, dim = x.shape
    dh = dim // num_heads

    def heads(m):
        t = ad.reshape(ad.matmul(x, m), tuple(batch) + (seq, num_heads, dh))
        perm = tuple(range(len(batch))) + (len(batch) + 1, len(batch), len(batch) + 2)
        return ad.transpose(t, perm)

    out = attention(heads(wq), heads(wk), heads(wv))
    perm = tuple(range(len(batch))) + (len(batch) + 1, len(batch), len(batch) + 2)
    merged = ad.reshape(ad.transpose(out, perm), tuple(batch) + (seq, dim))
    return ad.matmul(merged, wo)


def feed_forward(x: Tensor, w1, b1, w2, b2) -> Tensor:
    """Pointwise max(0, x w1 + b1) w2 + b2."""
    return ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(x, w1), b1)), w2), b2)


def forward(
    params: ModelParams,
    inputs: np.ndarray,
    contexts: np.ndarray | None = None,
) -> Tensor:
    """Batched forward pass -> (batch, output_dim) confidences in [0, 1].

    ``inputs`` is (batch, history_len, input_dim) or a single unbatched sample;
    ``contexts`` is (batch, history_len, 2) and is ignored when the model was
    configured without context enhancement. The classification token receives no
    context; every other token n gets its context pair embedded and added.
    """
    cfg = params.cfg
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None]
        contexts = None if contexts is None else np.asarray(contexts)[None]
    batch, n, s = inputs.shape
    if (n, s) != (cfg.history_len, cfg.input_dim):
        raise ValueError(
            f"input shape {(n, s)} != configured ({cfg.history_len}, {cfg.input_dim})"
        )
    if not np.isfinite(inputs).all():
        raise NumericError("non-finite model input")

    embedded = ad.matmul(Tensor(inputs), params["embed_w"])  # (batch, N, D)
    cls = ad.broadcast_to(
        ad.reshape(params["cls_token"], (1, 1, cfg.hidden_dim)), (batch, 1, cfg.hidden_dim)
    )
    x = ad.add(ad.concat([cls, embedded], axis=1), params["pos_embed"])

    if cfg.use_context:
        if contexts is None:
            raise ValueError("model configured with context enhancement but no contexts given")
        contexts = np.asarray(contexts, dtype=np.float64)
        if contexts.shape != (batch, cfg.history_len, 2):
            raise ValueError(f"context shape {contexts.shape} != {(batch, cfg.history_len, 2)}")
        ctx = ad.matmul(Tensor(contexts), params["ctx_embed_w"])  # (batch, N, D)
        pad = Tensor(np.zeros((batch, 1, cfg.hidden_dim)))
        x = ad.add(x, ad.concat([pad, ctx], axis=1))

    for i in range(cfg.num_layers):
        p = f"layer{i}."
        attn = multi_head_attention(
            x, params[p + "attn_wq"], params[p + "attn_wk"],
            params[p + "attn_wv"], params[p + "attn_wo"], cfg.num_heads,
        )
        x = ad.layer_norm(ad.add(x, attn), params[p + "ln1_gain"], params[p + "ln1_bias"])
        ffn = feed_forward(
            x, params[p + "ffn_w1"], params[p + "ffn_b1"],
            params[p + "ffn_w2"], params[p + "ffn_b2"],
        )
        x = ad.layer_norm(ad.add(x, ffn), params[p + "ln2_gain"], params[p + "ln2_bias"])
        if not np.isfinite(x.data).all():
            raise NumericError(f"non-finite activations after transformer layer {i}")

    cls_state = x[:, 0, :]
    conf = ad.sigmoid(ad.add(ad.matmul(cls_state, params["head_w"]), params["head_b"]))
    return conf[0] if single else conf


def predict(params: ModelParams, inputs, contexts=None) -> np.ndarray:
    """Forward pass returning plain confidence arrays (no graph kept)."""
    return forward(params, inputs, contexts).data


def bce_loss(pred: Tensor, labels: np.ndarray) -> Tensor:
    """Binary cross-entropy, averaged over bitmap dimensions (and batch rows).

    Probabilities are clamped to [BCE_EPS, 1 - BCE_EPS]; the gradient is exact
    for the clamped expression.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != pred.shape:
        raise ValueError(f"label shape {y.shape} != prediction shape {pred.shape}")
    p = ad.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    per_dim = ad.add(ad.mul(y, ad.log(p)), ad.mul(1.0 - y, ad.log(1.0 - p)))
    return ad.scale(ad.mean(per_dim), -1.0)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_every: int = 10  # epochs per decay step
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 50
    seed: int = 0
    grad_clip: float | None = None
    patience: int | None = 5  # early stop on validation loss; None disables

    def __post_init__(self):
        if self.learning_rate <= 0 or self.lr_decay <= 0:
            raise ValueError("rates must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("ADAM betas must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.lr_decay_every < 1:
            raise ValueError("batch size, epochs and decay interval must be >= 1")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float


class AdamOptimizer:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self._m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self._v = {n: np.zeros_like(t.data) for n, t in params.items()}

    def step(self, params: ModelParams, lr: float):
        cfg = self.cfg
        self.step_count += 1
        b1t = 1.0 - cfg.beta1 ** self.step_count
        b2t = 1.0 - cfg.beta2 ** self.step_count
        grads = [(n, t, t.grad) for n, t in params.items()]
        if cfg.grad_clip is not None:
            norm = math.sqrt(sum(float((g * g).sum()) for _, _, g in grads if g is not None))
            if norm > cfg.grad_clip:
                factor = cfg.grad_clip / norm
                grads = [(n, t, None if g is None else g * factor) for n, t, g in grads]
        for n, t, g in grads:
            if g is None:
                continue
            m = self._m[n]
            v = self._v[n]
            m += (1.0 - cfg.beta1) * (g - m)
            v += (1.0 - cfg.beta2) * (g * g - v)
            t.data -= lr * (m / b1t) / (np.sqrt(v / b2t) + cfg.adam_eps)


def _evaluate_loss(params: ModelParams, inputs, contexts, labels, batch_size: int) -> float:
    total, count = 0.0, 0
    for lo in range(0, inputs.shape[0], batch_size):
        hi = min(lo + batch_size, inputs.shape[0])
        ctx = None if contexts is None else contexts[lo:hi]
        pred = forward(params, inputs[lo:hi], ctx)
        total += float(bce_loss(pred, labels[lo:hi]).item()) * (hi - lo)
        count += hi - lo
    return total / max(count, 1)


def train(
    model_cfg: ModelConfig,
    train_inputs: np.ndarray,
    train_contexts: np.ndarray | None,
    train_labels: np.ndarray,
    val_inputs: np.ndarray | None = None,
    val_contexts: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[ModelParams, list[EpochLog]]:
    """ADAM training with step-decayed learning rate; deterministic given the seed.

    Returns the parameters that scored the best validation loss (final parameters
    when no validation set is given) plus the per-epoch loss log.
    """
    n = train_inputs.shape[0]
    if n == 0:
        raise TrainingError("empty training set")
    params = ModelParams.init(model_cfg, seed=cfg.seed, trainable=True)
    opt = AdamOptimizer(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    has_val = val_inputs is not None and val_inputs.shape[0] > 0
    log: list[EpochLog] = []
    best_val = math.inf
    best_params = params.copy()
    since_best = 0

    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** (epoch // cfg.lr_decay_every)
        order = rng.permutation(n)
        epoch_loss, seen = 0.0, 0
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo: lo + cfg.batch_size]
            ctx = None if train_contexts is None else train_contexts[idx]
            for _, t in params.items():
                t.grad = None
            try:
                pred = forward(params, train_inputs[idx], ctx)
                loss = bce_loss(pred, train_labels[idx])
            except NumericError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}, batch {bi}: {exc}"
                ) from exc
            value = float(loss.item())
            if not math.isfinite(value):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {bi}")
            loss.backward()
            opt.step(params, lr)
            epoch_loss += value * len(idx)
            seen += len(idx)
        train_loss = epoch_loss / seen
        if has_val:
            val_loss = _evaluate_loss(params, val_inputs, val_contexts, val_labels, cfg.batch_size)
        else:
            val_loss = train_loss
        log.append(EpochLog(epoch, train_loss, val_loss, lr))
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best > cfg.patience:
                break
    best_params.set_trainable(False)
    return best_params, log


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    per_tensor: dict[str, float]
    max_relative_error: float

    def worst(self) -> tuple[str, float]:
        name = max(self.per_tensor, key=self.per_tensor.get)
        return name, self.per_tensor[name]


def gradient_check(
    params: ModelParams,
    inputs: np.ndarray,
    contexts: np.ndarray | None,
    labels: np.ndarray,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients of every parameter tensor with central finite
    differences of the loss, elementwise, in float64.

    The per-entry error is |analytic - numeric| / max(1, |analytic|, |numeric|),
    i.e. absolute error for small entries and relative error for large ones.
    Intended for small models only; cost is two forward passes per parameter.
    """
    params.set_trainable(True)
    for _, t in params.items():
        t.grad = None
    loss = bce_loss(forward(params, inputs, contexts), labels)
    loss.backward()
    analytic = {n: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for n, t in params.items()}

    def loss_value() -> float:
        return float(bce_loss(forward(params, inputs, contexts), labels).item())

    report = {}
    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_value()
            flat[i] = keep - step
            down = loss_value()
            flat[i] = keep
            num[i] = (up - down) / (2.0 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(num)))
        err = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0
        report[name] = err
        worst = max(worst, err)
    return GradCheckReport(report, worst)


# ---------------------------------------------------------------------------
# Inference latency estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyCosts:
    """Per-primitive cycle costs for the fully-parallel latency estimate."""

    matmul_embed: float
    matmul_head: float
    matmul_attn: float
    matmul_ffn: float
    vector_add: float = 1.0
    activation: float = 1.0
    norm: float = 5.0

    @classmethod
    def log_tree(cls, hidden_dim: int, **overrides) -> "LatencyCosts":
        """Log-depth tree reduction cost model: every matrix multiply costs
        1 + log2(hidden_dim) cycles; adds and activations cost 1 cycle."""
        mm = 1.0 + math.log2(hidden_dim)
        base = dict(matmul_embed=mm, matmul_head=mm, matmul_attn=mm, matmul_ffn=mm)
        base.update(overrides)
        return cls(**base)


def estimate_latency(costs: LatencyCosts, cfg: ModelConfig) -> float:
    """Cycle estimate for one fully-parallel inference.

    Embeddings cost one matmul plus one add; the output head one matmul plus one
    activation; each transformer layer four attention matmuls, three activations,
    one feed-forward matmul, and two (add + norm) pairs for its residual norms.
    """
    for c in (costs.matmul_embed, costs.matmul_head, costs.matmul_attn,
              costs.matmul_ffn, costs.vector_add, costs.activation, costs.norm):
        if c < 0:
            raise ValueError("latency costs must be >= 0")
    per_layer = (
        4.0 * costs.matmul_attn
        + 3.0 * costs.activation
        + costs.matmul_ffn
        + 2.0 * (costs.vector_add + costs.norm)
    )
    return (
        costs.matmul_embed + costs.vector_add
        + costs.matmul_head + costs.activation
        + cfg.num_layers * per_layer
    )
