"""Context-augmented many-to-one LSTM language model, trained with full BPTT.

The input sequence has ``window + 1`` timesteps: timestep 0 carries the
context vector (all zeros in base mode) and timesteps 1..window carry one-hot
encodings of the input words.  A bidirectional pass concatenates the final
hidden states of both directions before the softmax projection, so base and
context models share identical parameter shapes.  An alternative input
layout concatenates the context onto every word timestep instead
(``context_position="concat"``, 2V-wide inputs, ``window`` timesteps).

Everything is float64 numpy; gradients come from a handwritten backward pass
through time, checked against finite differences in the test suite.
"""

from __future__ import annotations

import copy
import csv
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import TrainingInstance
from .errors import (
    ConfigurationError,
    NumericOverflowError,
    TrainingDivergedError,
)

PREPEND = "prepend"
CONCAT = "concat"


@dataclass
class LmConfig:
    vocab_size: int
    window: int = 8
    hidden: int = 256
    bidirectional: bool = True
    cell_activation: str = "tanh"  # "tanh" | "relu"
    lr: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    context_mode: str = "none"  # "tfidf" | "cluster" | "none"
    optimizer: str = "sgd"  # "sgd" | "adam"
    context_position: str = PREPEND

    def validate(self) -> None:
        if self.vocab_size < 2:
            raise ConfigurationError("vocab_size must be >= 2")
        if self.hidden <= 0 or self.window < 1:
            raise ConfigurationError("hidden must be > 0 and window >= 1")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("lr > 0, batch_size >= 1, epochs >= 0 required")
        if self.cell_activation not in ("tanh", "relu"):
            raise ConfigurationError(f"unknown cell activation {self.cell_activation!r}")
        if self.context_mode not in ("tfidf", "cluster", "none"):
            raise ConfigurationError(f"unknown context mode {self.context_mode!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.context_position not in (PREPEND, CONCAT):
            raise ConfigurationError(f"unknown context position {self.context_position!r}")

    @property
    def input_dim(self) -> int:
        return self.vocab_size * (2 if self.context_position == CONCAT else 1)

    @property
    def seq_len(self) -> int:
        return self.window + (0 if self.context_position == CONCAT else 1)


_DIRECTIONS = ("fwd", "bwd")


@dataclass
class LmParams:
    """Gate weights per direction plus the output projection.

    Each direction holds fused matrices over the four gates, stacked in the
    order input, forget, candidate, output: ``wx`` (4H, D), ``wh`` (4H, H),
    ``b`` (4H,).  ``w_out`` maps the concatenated final hidden states to V
    logits.
    """

    arrays: dict[str, np.ndarray]
    cell_activation: str = "tanh"
    bidirectional: bool = True

    def names(self) -> list[str]:
        order = ["wx_fwd", "wh_fwd", "b_fwd"]
        if self.bidirectional:
            order += ["wx_bwd", "wh_bwd", "b_bwd"]
        return order + ["w_out", "b_out"]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[n].ravel() for n in self.names()])

    def with_flat(self, vec: np.ndarray) -> "LmParams":
        arrays = {}
        offset = 0
        for n in self.names():
            shape = self.arrays[n].shape
            size = self.arrays[n].size
            arrays[n] = vec[offset : offset + size].reshape(shape).copy()
            offset += size
        return LmParams(arrays, self.cell_activation, self.bidirectional)

    def copy(self) -> "LmParams":
        return LmParams(
            {n: a.copy() for n, a in self.arrays.items()},
            self.cell_activation,
            self.bidirectional,
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {n: np.zeros_like(a) for n, a in self.arrays.items()}


def init_params(config: LmConfig, rng: np.random.Generator) -> LmParams:
    """Glorot-uniform weights, zero biases with the forget gate biased to 1."""
    config.validate()
    H, D, V = config.hidden, config.input_dim, config.vocab_size
    out_in = 2 * H if config.bidirectional else H

    def glorot(rows: int, cols: int) -> np.ndarray:
        s = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-s, s, size=(rows, cols))

    arrays: dict[str, np.ndarray] = {}
    dirs = _DIRECTIONS if config.bidirectional else _DIRECTIONS[:1]
    for d in dirs:
        arrays[f"wx_{d}"] = glorot(4 * H, D)
        arrays[f"wh_{d}"] = glorot(4 * H, H)
        b = np.zeros(4 * H)
        b[H : 2 * H] = 1.0
        arrays[f"b_{d}"] = b
    arrays["w_out"] = glorot(V, out_in)
    arrays["b_out"] = np.zeros(V)
    return LmParams(arrays, config.cell_activation, config.bidirectional)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(x) if kind == "tanh" else np.maximum(x, 0.0)


def _act_grad_from_output(y: np.ndarray, kind: str) -> np.ndarray:
    # Derivative expressed through the activation output; valid for tanh
    # (1 - y^2) and relu (y > 0) alike.
    return 1.0 - y**2 if kind == "tanh" else (y > 0).astype(np.float64)


def _run_direction(params: LmParams, X: np.ndarray, direction: str):
    """One LSTM direction over X (B, T, D); returns final h and the cache."""
    wx = params.arrays[f"wx_{direction}"]
    wh = params.arrays[f"wh_{direction}"]
    b = params.arrays[f"b_{direction}"]
    act = params.cell_activation
    B, T, _ = X.shape
    H = wh.shape[1]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = []
    for t in range(T):
        z = X[:, t] @ wx.T + h @ wh.T + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = _act(z[:, 2 * H : 3 * H], act)
        o = _sigmoid(z[:, 3 * H :])
        c_new = f * c + i * g
        hc = _act(c_new, act)
        h_new = o * hc
        if not (np.isfinite(c_new).all() and np.isfinite(h_new).all()):
            raise NumericOverflowError(
                f"non-finite state at timestep {t} ({direction} pass)",
                timestep=t,
                direction=direction,
            )
        cache.append((X[:, t], h, c, i, f, g, o, hc))
        h, c = h_new, c_new
    return h, cache


def _backprop_direction(
    params: LmParams, cache: list, dh_final: np.ndarray, direction: str
) -> dict[str, np.ndarray]:
    wh = params.arrays[f"wh_{direction}"]
    act = params.cell_activation
    dwx = np.zeros_like(params.arrays[f"wx_{direction}"])
    dwh = np.zeros_like(wh)
    db = np.zeros_like(params.arrays[f"b_{direction}"])
    H = wh.shape[1]
    dh = dh_final
    dc = np.zeros_like(dh_final)
    for t in range(len(cache) - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, hc = cache[t]
        do = dh * hc
        dc = dc + dh * o * _act_grad_from_output(hc, act)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * _act_grad_from_output(g, act),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dwx += dz.T @ x_t
        dwh += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = dz @ wh
        dc = dc * f
    return {f"wx_{direction}": dwx, f"wh_{direction}": dwh, f"b_{direction}": db}


def _forward_batch(params: LmParams, X: np.ndarray):
    """Probabilities (B, V) for inputs (B, T, D), plus backward caches."""
    h_fwd, cache_fwd = _run_direction(params, X, "fwd")
    if params.bidirectional:
        h_bwd, cache_bwd = _run_direction(params, X[:, ::-1], "bwd")
        h_cat = np.concatenate([h_fwd, h_bwd], axis=1)
    else:
        h_bwd, cache_bwd = None, None
        h_cat = h_fwd
    logits = h_cat @ params.arrays["w_out"].T + params.arrays["b_out"]
    logits -= logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    log_probs = logits - log_z
    probs = np.exp(log_probs)
    return probs, log_probs, h_cat, cache_fwd, cache_bwd


def forward(params: LmParams, x_seq: np.ndarray) -> np.ndarray:
    """Probability distribution over the vocabulary for one input sequence.

    ``x_seq`` has shape (T, D); the result sums to 1 within 1e-9.
    """
    probs, _, _, _, _ = _forward_batch(params, x_seq[None, :, :])
    return probs[0]


def encode_input(
    instance: TrainingInstance, vocab_size: int, context_position: str = PREPEND
) -> np.ndarray:
    """Dense input sequence for one instance.

    Default layout: timestep 0 is the context vector, then one one-hot
    timestep per input word.  ``concat`` layout: each of the ``window``
    timesteps is the word one-hot with the context vector appended.
    """
    return encode_sequence(
        instance.context.weights, instance.input_ids, vocab_size, context_position
    )


def encode_sequence(
    context_weights: np.ndarray,
    input_ids: Sequence[int],
    vocab_size: int,
    context_position: str = PREPEND,
) -> np.ndarray:
    w = len(input_ids)
    if context_position == CONCAT:
        X = np.zeros((w, 2 * vocab_size))
        X[np.arange(w), np.asarray(input_ids, dtype=np.intp)] = 1.0
        X[:, vocab_size:] = context_weights
    else:
        X = np.zeros((w + 1, vocab_size))
        X[0] = context_weights
        X[np.arange(1, w + 1), np.asarray(input_ids, dtype=np.intp)] = 1.0
    return X


def encode_batch(
    contexts: np.ndarray,
    inputs: np.ndarray,
    vocab_size: int,
    context_position: str = PREPEND,
) -> np.ndarray:
    """Vectorized ``encode_sequence`` over a batch.

    ``contexts`` is (B, V) of context weights, ``inputs`` (B, window) of ids.
    """
    B, w = inputs.shape
    rows = np.arange(B)[:, None]
    cols = np.arange(w)[None, :]
    if context_position == CONCAT:
        X = np.zeros((B, w, 2 * vocab_size))
        X[rows, cols, inputs] = 1.0
        X[:, :, vocab_size:] = contexts[:, None, :]
    else:
        X = np.zeros((B, w + 1, vocab_size))
        X[:, 0, :] = contexts
        X[rows, cols + 1, inputs] = 1.0
    return X


def _loss_grads_probs(
    params: LmParams, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    targets = np.asarray(targets, dtype=np.intp)
    if inputs.ndim != 3 or len(inputs) == 0:
        raise ConfigurationError("batch must be a nonempty (B, T, D) array")
    V = params.arrays["b_out"].shape[0]
    if targets.min() < 0 or targets.max() >= V:
        raise IndexError(f"target id out of range for vocabulary of {V}")

    B = len(inputs)
    probs, log_probs, h_cat, cache_fwd, cache_bwd = _forward_batch(params, inputs)
    loss = float(-log_probs[np.arange(B), targets].mean())

    dlogits = probs.copy()
    dlogits[np.arange(B), targets] -= 1.0
    dlogits /= B
    grads = {
        "w_out": dlogits.T @ h_cat,
        "b_out": dlogits.sum(axis=0),
    }
    dh_cat = dlogits @ params.arrays["w_out"]
    H = params.arrays["wh_fwd"].shape[1]
    grads.update(_backprop_direction(params, cache_fwd, dh_cat[:, :H], "fwd"))
    if params.bidirectional:
        grads.update(_backprop_direction(params, cache_bwd, dh_cat[:, H:], "bwd"))
    return loss, grads, probs


def loss_and_grads(
    params: LmParams, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and full-BPTT gradients.

    ``inputs`` is (B, T, D), ``targets`` (B,) of target ids.
    """
    loss, grads, _ = _loss_grads_probs(params, inputs, targets)
    return loss, grads


class _SgdOptimizer:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: LmParams, grads: dict[str, np.ndarray]) -> None:
        for name in params.arrays:
            params.arrays[name] -= self.lr * grads[name]


class _AdamOptimizer:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: LmParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g**2
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            params.arrays[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class Checkpoint:
    """Frozen snapshot of the model after one epoch."""

    epoch: int
    params: LmParams
    config: LmConfig
    metrics: dict = field(default_factory=dict)

    def next_distribution(self, x_seq: np.ndarray) -> np.ndarray:
        if x_seq.shape != (self.config.seq_len, self.config.input_dim):
            raise ConfigurationError(
                f"input shape {x_seq.shape} does not match configured "
                f"({self.config.seq_len}, {self.config.input_dim})"
            )
        return forward(self.params, x_seq)


def _instances_to_arrays(
    instances: Sequence[TrainingInstance], vocab_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    contexts = np.stack([inst.context.weights for inst in instances])
    inputs = np.array([inst.input_ids for inst in instances], dtype=np.intp)
    targets = np.array([inst.target_id for inst in instances], dtype=np.intp)
    if contexts.shape[1] != vocab_size:
        raise ConfigurationError("context vector length does not match vocab_size")
    return contexts, inputs, targets


def _epoch_metrics(
    params: LmParams,
    contexts: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    config: LmConfig,
) -> tuple[float, float]:
    losses = 0.0
    correct = 0
    n = len(targets)
    for start in range(0, n, config.batch_size):
        sl = slice(start, start + config.batch_size)
        X = encode_batch(contexts[sl], inputs[sl], config.vocab_size, config.context_position)
        probs, log_probs, _, _, _ = _forward_batch(params, X)
        idx = np.arange(len(probs))
        losses += float(-log_probs[idx, targets[sl]].sum())
        correct += int((probs.argmax(axis=1) == targets[sl]).sum())
    return losses / n, correct / n


def train(
    config: LmConfig,
    instances: Sequence[TrainingInstance],
    eval_hook: Callable[[Checkpoint], None] | None = None,
    eval_every: int = 3,
    on_checkpoint: Callable[[Checkpoint], None] | None = None,
) -> list[Checkpoint]:
    """Mini-batch training loop with a deterministic 90/10 validation split.

    Records running train loss/accuracy plus a full validation pass per
    epoch, snapshots a checkpoint per epoch, and invokes ``eval_hook`` every
    ``eval_every`` epochs.  A NaN loss aborts with the last finite
    checkpoint attached to the error.
    """
    config.validate()
    if not instances:
        raise ConfigurationError("no training instances")
    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)

    contexts, inputs, targets = _instances_to_arrays(instances, config.vocab_size)
    n = len(instances)
    perm = rng.permutation(n)
    n_val = n // 10
    val_idx = perm[n - n_val :]
    train_idx = perm[: n - n_val]

    optimizer = (
        _AdamOptimizer(config.lr) if config.optimizer == "adam" else _SgdOptimizer(config.lr)
    )

    checkpoints: list[Checkpoint] = []
    if config.epochs == 0:
        ckpt = Checkpoint(epoch=0, params=params.copy(), config=copy.deepcopy(config))
        checkpoints.append(ckpt)
        if on_checkpoint:
            on_checkpoint(ckpt)
        return checkpoints

    for epoch in range(1, config.epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            X = encode_batch(
                contexts[batch], inputs[batch], config.vocab_size, config.context_position
            )
            loss, grads, probs = _loss_grads_probs(params, X, targets[batch])
            if not np.isfinite(loss):
                last = checkpoints[-1] if checkpoints else None
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", last_checkpoint=last
                )
            correct += int((probs.argmax(axis=1) == targets[batch]).sum())
            loss_sum += loss * len(batch)
            optimizer.step(params, grads)
        train_loss = loss_sum / len(order)
        train_acc = correct / len(order)

        if n_val:
            val_loss, val_acc = _epoch_metrics(
                params, contexts[val_idx], inputs[val_idx], targets[val_idx], config
            )
        else:
            val_loss, val_acc = None, None

        ckpt = Checkpoint(
            epoch=epoch,
            params=params.copy(),
            config=copy.deepcopy(config),
            metrics={
                "train_loss": train_loss,
                "train_acc": train_acc,
                "val_loss": val_loss,
                "val_acc": val_acc,
            },
        )
        checkpoints.append(ckpt)
        if on_checkpoint:
            on_checkpoint(ckpt)
        if eval_hook and epoch % eval_every == 0:
            eval_hook(ckpt)
    return checkpoints


# ---------------------------------------------------------------------------
# Checkpoint persistence: versioned binary with a JSON header followed by the
# raw float64 parameter block.  Round-trips are bit-identical.

_CKPT_MAGIC = b"CTXLM"
_CKPT_VERSION = 1


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    header = {
        "version": _CKPT_VERSION,
        "epoch": ckpt.epoch,
        "config": asdict(ckpt.config),
        "metrics": ckpt.metrics,
        "param_names": ckpt.params.names(),
        "shapes": {n: list(ckpt.params.arrays[n].shape) for n in ckpt.params.names()},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in ckpt.params.names():
            arr = np.ascontiguousarray(ckpt.params.arrays[name], dtype=np.float64)
            fh.write(arr.tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(5) != _CKPT_MAGIC:
            raise ConfigurationError(f"{path} is not a checkpoint file")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        if header["version"] != _CKPT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {header['version']}")
        config = LmConfig(**header["config"])
        arrays = {}
        for name in header["param_names"]:
            shape = tuple(header["shapes"][name])
            size = int(np.prod(shape))
            arrays[name] = np.frombuffer(fh.read(8 * size), dtype=np.float64).reshape(shape).copy()
    params = LmParams(arrays, config.cell_activation, config.bidirectional)
    return Checkpoint(
        epoch=header["epoch"], params=params, config=config, metrics=header["metrics"]
    )


def write_metrics_csv(checkpoints: Sequence[Checkpoint], path: str) -> None:
    """Run-level metrics: one row per epoch."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for ckpt in checkpoints:
            m = ckpt.metrics
            writer.writerow(
                [ckpt.epoch]
                + [
                    "" if m.get(k) is None else repr(m[k])
                    for k in ("train_loss", "train_acc", "val_loss", "val_acc")
                ]
            )
