"""Training, evaluation, and serving of the next-action forecaster.

The model consumes sliding windows of the ``n_past`` most recent action
feature vectors ([action one-hot | app one-hot | rel_x | rel_y | elapsed
bucket]) and emits a probability distribution over the action vocabulary.
Training minimizes cross-entropy with Adam; the checkpoint kept is the
epoch with the best validation accuracy.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .nn import GRU, AdamState, NetSpec
from .tokenizer import (
    PAD_INDEX,
    UNK_INDEX,
    ActionVocabulary,
    ContextFeatures,
    UserAction,
)

CHECKPOINT_MAGIC = b"ACF1"


class NumericalError(RuntimeError):
    """Raised when parameters or losses stop being finite."""


class FilterEmptyError(ValueError):
    """Raised when a prediction filter keeps zero probability mass."""


@dataclass
class TrainingConfig:
    cell: str = GRU
    n_past: int = 5
    hidden_size: int = 600
    num_layers: int = 1
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_past < 1:
            raise ValueError("n_past must be >= 1")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class EncodedSession:
    """One session as dense arrays: action indices (T,) and contexts (T, C)."""

    indices: np.ndarray
    contexts: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class EncodedCorpus:
    sessions: list[EncodedSession]
    vocab_size: int
    context_dim: int
    vocab_hash: str

    @property
    def n_actions(self) -> int:
        return sum(len(s) for s in self.sessions)

    @property
    def feature_dim(self) -> int:
        return self.vocab_size + self.context_dim


def encode_corpus(
    sessions: Iterable[Sequence[tuple[UserAction, ContextFeatures]]],
    vocab: ActionVocabulary,
) -> EncodedCorpus:
    """Encode tokenized sessions (action, context pairs) for the model."""
    encoded = []
    context_dim = vocab.n_apps + 3
    for session in sessions:
        idx = np.array([vocab.encode(a) for a, _ in session], dtype=np.int64)
        ctx = np.zeros((len(session), context_dim))
        for i, (_, c) in enumerate(session):
            ctx[i] = c.to_vector()
        encoded.append(EncodedSession(indices=idx, contexts=ctx))
    return EncodedCorpus(
        sessions=encoded,
        vocab_size=vocab.size,
        context_dim=context_dim,
        vocab_hash=vocab.digest(),
    )


class _WindowIndex:
    """Flattened sliding-window view over a corpus.

    Each session is left-padded with ``n_past`` PAD rows; a training pair
    for target position t covers padded positions t..t+n_past-1 and its
    target is the action at t.  Windows never cross session boundaries.
    """

    def __init__(self, corpus: EncodedCorpus, n_past: int) -> None:
        self.n_past = n_past
        self.vocab_size = corpus.vocab_size
        idx_parts = []
        ctx_parts = []
        starts = []
        offset = 0
        for session in corpus.sessions:
            t_len = len(session)
            idx_parts.append(np.full(n_past, PAD_INDEX, dtype=np.int64))
            idx_parts.append(session.indices)
            ctx_parts.append(np.zeros((n_past, corpus.context_dim)))
            ctx_parts.append(session.contexts)
            # Targets range over positions with at least one real predecessor.
            starts.extend(range(offset + 1, offset + t_len))
            offset += t_len + n_past
        self.idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
        self.ctx = np.concatenate(ctx_parts) if ctx_parts else np.zeros((0, corpus.context_dim))
        self.starts = np.array(starts, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.starts)

    def gather(self, starts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Feature windows (B, n_past, V+C) and targets (B,) for pair starts."""
        n, v = self.n_past, self.vocab_size
        pos = starts[:, None] + np.arange(n)[None, :]
        win_idx = self.idx[pos]
        win_ctx = self.ctx[pos]
        batch = len(starts)
        windows = np.zeros((batch, n, v + win_ctx.shape[2]))
        windows[np.arange(batch)[:, None], np.arange(n)[None, :], win_idx] = 1.0
        windows[:, :, v:] = win_ctx
        targets = self.idx[starts + n]
        return windows, targets


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_accuracy: float
    seconds: float


@dataclass
class Checkpoint:
    """Everything needed to restore the forecaster and resume Adam."""

    config: TrainingConfig
    vocab_hash: str
    input_dim: int
    n_classes: int
    params: dict[str, np.ndarray]
    adam: AdamState

    @property
    def spec(self) -> NetSpec:
        return NetSpec(
            cell=self.config.cell,
            input_dim=self.input_dim,
            hidden_size=self.config.hidden_size,
            num_layers=self.config.num_layers,
            n_classes=self.n_classes,
        )


@dataclass
class EvalRecord:
    position: int
    target: int
    predicted: int
    prob: float

    @property
    def correct(self) -> bool:
        return self.target == self.predicted


def _check_finite(params: dict[str, np.ndarray], loss: float) -> None:
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite training loss {loss}")
    for name, tensor in params.items():
        if not np.isfinite(tensor).all():
            raise NumericalError(f"non-finite values in parameter {name}")


def train(
    corpus: EncodedCorpus,
    config: TrainingConfig,
    val_corpus: EncodedCorpus | None = None,
) -> tuple[Checkpoint, list[EpochMetrics]]:
    """Train on sliding windows; keep the best-validation-accuracy epoch.

    Pairs are rebuilt stride-1 over every session, shuffled each epoch
    with the seeded generator, and optimized with mini-batch Adam.  When
    no validation corpus is given the training corpus doubles as one.
    """
    if corpus.n_actions < 2:
        raise ValueError("training corpus must contain at least 2 actions")
    val_corpus = val_corpus or corpus
    if val_corpus.vocab_hash != corpus.vocab_hash:
        raise ValueError("validation corpus was encoded with a different vocabulary")

    spec = NetSpec(
        cell=config.cell,
        input_dim=corpus.feature_dim,
        hidden_size=config.hidden_size,
        num_layers=config.num_layers,
        n_classes=corpus.vocab_size,
    )
    rng = np.random.default_rng(config.seed)
    params = spec.init_params(rng)
    adam = AdamState.zeros_like(params)

    windows = _WindowIndex(corpus, config.n_past)
    val_windows = _WindowIndex(val_corpus, config.n_past)

    best_acc = -1.0
    best_params = {k: p.copy() for k, p in params.items()}
    best_adam = AdamState.zeros_like(params)
    metrics: list[EpochMetrics] = []

    for epoch in range(1, config.epochs + 1):
        t0 = time.monotonic()
        order = rng.permutation(len(windows))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            starts = windows.starts[order[lo : lo + config.batch_size]]
            batch_x, batch_y = windows.gather(starts)
            loss, grads = nn.loss_and_grads(spec, params, batch_x, batch_y)
            nn.adam_step(
                params,
                grads,
                adam,
                learning_rate=config.learning_rate,
                beta1=config.adam_beta1,
                beta2=config.adam_beta2,
                eps=config.adam_eps,
            )
            losses.append(loss)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        _check_finite(params, train_loss)
        val_acc, _ = _evaluate_windows(spec, params, val_windows, config.batch_size)
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=train_loss,
                val_accuracy=val_acc,
                seconds=time.monotonic() - t0,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = {k: p.copy() for k, p in params.items()}
            best_adam = AdamState(
                m={k: m.copy() for k, m in adam.m.items()},
                v={k: v.copy() for k, v in adam.v.items()},
                t=adam.t,
            )

    checkpoint = Checkpoint(
        config=config,
        vocab_hash=corpus.vocab_hash,
        input_dim=spec.input_dim,
        n_classes=spec.n_classes,
        params=best_params,
        adam=best_adam,
    )
    return checkpoint, metrics


def _evaluate_windows(
    spec: NetSpec,
    params: dict[str, np.ndarray],
    windows: _WindowIndex,
    batch_size: int,
) -> tuple[float, list[EvalRecord]]:
    records: list[EvalRecord] = []
    correct = 0
    for lo in range(0, len(windows), batch_size):
        starts = windows.starts[lo : lo + batch_size]
        batch_x, batch_y = windows.gather(starts)
        probs = nn.forward(spec, params, batch_x)
        predicted = probs.argmax(axis=1)  # argmax takes the lowest tying index
        correct += int((predicted == batch_y).sum())
        for row in range(len(starts)):
            records.append(
                EvalRecord(
                    position=lo + row,
                    target=int(batch_y[row]),
                    predicted=int(predicted[row]),
                    prob=float(probs[row, predicted[row]]),
                )
            )
    accuracy = correct / len(windows) if len(windows) else 0.0
    return accuracy, records


def evaluate(
    corpus: EncodedCorpus,
    checkpoint: Checkpoint,
    batch_size: int = 256,
) -> tuple[float, list[EvalRecord]]:
    """Top-1 accuracy over every sliding-window position of a corpus."""
    windows = _WindowIndex(corpus, checkpoint.config.n_past)
    return _evaluate_windows(checkpoint.spec, checkpoint.params, windows, batch_size)


def filter_renormalize(probs: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Zero out all classes not in ``keep`` and rescale to unit mass."""
    keep_idx = np.fromiter(set(keep), dtype=np.int64)
    if keep_idx.size == 0:
        raise FilterEmptyError("keep-set is empty")
    filtered = np.zeros_like(probs)
    filtered[keep_idx] = probs[keep_idx]
    mass = filtered.sum()
    if mass <= 0.0:
        raise FilterEmptyError("keep-set carries zero probability mass")
    return filtered / mass


class Predictor:
    """Immutable inference wrapper pairing a checkpoint with its vocabulary."""

    def __init__(self, checkpoint: Checkpoint, vocab: ActionVocabulary) -> None:
        if checkpoint.vocab_hash != vocab.digest():
            raise ValueError("checkpoint was trained against a different vocabulary")
        self.checkpoint = checkpoint
        self.vocab = vocab
        self.spec = checkpoint.spec

    @property
    def n_past(self) -> int:
        return self.checkpoint.config.n_past

    def window_probs(self, recent: Sequence[tuple[UserAction, ContextFeatures]]) -> np.ndarray:
        """Distribution over the vocabulary given the most recent actions.

        Actions unknown to the vocabulary are dropped (the remaining
        actions shift together) and the window is left-padded with PAD.
        """
        known = [
            (self.vocab.encode(a), c)
            for a, c in recent
            if self.vocab.encode(a) != UNK_INDEX
        ]
        known = known[-self.n_past:]
        v = self.vocab.size
        ctx_dim = self.vocab.n_apps + 3
        window = np.zeros((1, self.n_past, v + ctx_dim))
        pad = self.n_past - len(known)
        window[0, :pad, PAD_INDEX] = 1.0
        for i, (idx, ctx) in enumerate(known):
            window[0, pad + i, idx] = 1.0
            window[0, pad + i, v:] = ctx.to_vector()
        return nn.forward(self.spec, self.checkpoint.params, window)[0]

    def topk(
        self,
        recent: Sequence[tuple[UserAction, ContextFeatures]],
        k: int = 5,
        keep: Iterable[int] | None = None,
    ) -> list[tuple[UserAction, float]]:
        """The k most likely next actions, ties broken by lower index.

        PAD and UNK are never returned; an optional keep-set restricts and
        renormalizes the distribution first.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        probs = self.window_probs(recent)
        real = set(range(2, self.vocab.size))
        keep_set = real if keep is None else (set(keep) & real)
        probs = filter_renormalize(probs, keep_set)
        ranked = sorted(keep_set, key=lambda i: (-probs[i], i))
        return [(self.vocab.decode(i), float(probs[i])) for i in ranked[:k]]


# -- checkpoint serialization ------------------------------------------------


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Binary checkpoint: magic, length-prefixed JSON header, raw tensors.

    Tensors are little-endian IEEE-754 float64 laid out in the order the
    header's directory lists them (parameters, then Adam moments).
    """
    tensors: list[tuple[str, np.ndarray]] = list(checkpoint.params.items())
    tensors += [(f"adam.m.{k}", v) for k, v in checkpoint.adam.m.items()]
    tensors += [(f"adam.v.{k}", v) for k, v in checkpoint.adam.v.items()]
    directory = []
    offset = 0
    for name, tensor in tensors:
        directory.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        offset += tensor.size * 8
    header = {
        "config": asdict(checkpoint.config),
        "vocab_hash": checkpoint.vocab_hash,
        "input_dim": checkpoint.input_dim,
        "n_classes": checkpoint.n_classes,
        "adam_step": checkpoint.adam.t,
        "dtype": "float64",
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, tensor in tensors:
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file (magic {data[:4]!r})")
    (header_len,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    dtype = np.dtype("<f8") if header.get("dtype", "float64") == "float64" else np.dtype("<f4")
    base = 8 + header_len
    loaded: dict[str, np.ndarray] = {}
    for item in header["tensors"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + item["offset"]
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=start)
        loaded[item["name"]] = arr.reshape(shape).astype(np.float64)
    params = {k: v for k, v in loaded.items() if not k.startswith("adam.")}
    adam = AdamState(
        m={k[len("adam.m."):]: v for k, v in loaded.items() if k.startswith("adam.m.")},
        v={k[len("adam.v."):]: v for k, v in loaded.items() if k.startswith("adam.v.")},
        t=int(header["adam_step"]),
    )
    return Checkpoint(
        config=TrainingConfig(**header["config"]),
        vocab_hash=header["vocab_hash"],
        input_dim=int(header["input_dim"]),
        n_classes=int(header["n_classes"]),
        params=params,
        adam=adam,
    )


def write_metrics_csv(
    metrics: Sequence[EpochMetrics], path: str | Path, timing: bool = False
) -> None:
    """Metrics CSV (epoch, train_loss, val_accuracy, seconds).

    Wall-clock seconds are only emitted when ``timing`` is set; the
    default keeps the file byte-identical across reruns of one seed.
    """
    lines = ["epoch,train_loss,val_accuracy,seconds"]
    for m in metrics:
        seconds = f"{m.seconds:.3f}" if timing else "0.000"
        lines.append(f"{m.epoch},{m.train_loss:.10f},{m.val_accuracy:.10f},{seconds}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- estimator facade --------------------------------------------------------


class NextActionForecaster:
    """Sequence forecaster with a scikit-learn style estimator surface.

    Hyperparameters are stored verbatim by ``__init__`` and exposed via
    ``get_params``/``set_params`` so the estimator composes with tooling
    that clones or grid-searches estimators.  Fitted state lives in
    trailing-underscore attributes.
    """

    _PARAM_NAMES = (
        "cell",
        "n_past",
        "hidden_size",
        "num_layers",
        "learning_rate",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "batch_size",
        "epochs",
        "seed",
    )

    def __init__(
        self,
        cell: str = GRU,
        n_past: int = 5,
        hidden_size: int = 600,
        num_layers: int = 1,
        learning_rate: float = 1e-3,
        adam_beta1: float = 0.9,
        adam_beta2: float = 0.999,
        adam_eps: float = 1e-8,
        batch_size: int = 32,
        epochs: int = 10,
        seed: int = 0,
    ) -> None:
        self.cell = cell
        self.n_past = n_past
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "NextActionForecaster":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _config(self) -> TrainingConfig:
        return TrainingConfig(**self.get_params())

    def fit(
        self,
        corpus: EncodedCorpus,
        val_corpus: EncodedCorpus | None = None,
    ) -> "NextActionForecaster":
        self.checkpoint_, self.metrics_ = train(corpus, self._config(), val_corpus)
        self.best_val_accuracy_ = max(m.val_accuracy for m in self.metrics_)
        return self

    def predict_proba(self, corpus: EncodedCorpus) -> np.ndarray:
        """Next-action distributions for every sliding-window position."""
        self._check_fitted()
        windows = _WindowIndex(corpus, self.checkpoint_.config.n_past)
        out = []
        for lo in range(0, len(windows), 256):
            batch_x, _ = windows.gather(windows.starts[lo : lo + 256])
            out.append(nn.forward(self.checkpoint_.spec, self.checkpoint_.params, batch_x))
        return np.concatenate(out) if out else np.zeros((0, corpus.vocab_size))

    def predict(self, corpus: EncodedCorpus) -> np.ndarray:
        return self.predict_proba(corpus).argmax(axis=1)

    def score(self, corpus: EncodedCorpus) -> float:
        """Top-1 next-action accuracy."""
        self._check_fitted()
        accuracy, _ = evaluate(corpus, self.checkpoint_)
        return accuracy

    def _check_fitted(self) -> None:
        if not hasattr(self, "checkpoint_"):
            raise RuntimeError("forecaster is not fitted; call fit() first")
