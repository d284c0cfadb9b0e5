"""The two classifiers: a CNN over contextual token embeddings for stance
(support / deny / query / comment) and an MLP over thread-level features for
veracity (true / false / unverified), plus training, prediction, and
checkpoint I/O."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import nn
from .embeddings import (
    EmbeddingMix,
    EmbeddingStore,
    averaged_vectors,
    default_mix,
    mixed_matrices,
)
from .features import (
    FEATURE_DIM_A,
    FEATURE_DIM_B,
    MinMaxScaler,
    aux_features_a,
    aux_features_b,
    fit_scaler,
)
from .preprocess import MAX_TOKENS
from .thread_model import SDQC_LABELS, VERACITY_LABELS, Dataset, Post, Thread


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ConfigA:
    """Stance classifier hyperparameters."""

    conv_layers: int = 1
    kernel_sizes: tuple[int, ...] = (2, 3)
    channels: int = 64
    dense_layers: int = 3
    hidden_units: int = 128
    dropout_rate: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 512
    epochs: int = 100
    class_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 0.2)
    l2_weight: float = 1e-2
    embedding_dim: int = 1024

    def __post_init__(self):
        _check_positive_ints(
            conv_layers=self.conv_layers,
            channels=self.channels,
            dense_layers=self.dense_layers,
            hidden_units=self.hidden_units,
            batch_size=self.batch_size,
            epochs=self.epochs,
            embedding_dim=self.embedding_dim,
        )
        if not self.kernel_sizes or any(k < 1 for k in self.kernel_sizes):
            raise ValueError("kernel sizes must be positive")
        _check_training_fields(self.dropout_rate, self.learning_rate, self.l2_weight)
        if len(self.class_weights) != len(SDQC_LABELS):
            raise ValueError(f"need {len(SDQC_LABELS)} class weights")


@dataclass(frozen=True)
class ConfigB:
    """Veracity classifier hyperparameters."""

    dense_layers: int = 2
    hidden_units: int = 512
    dropout_rate: float = 0.25
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 5000
    class_weights: tuple[float, ...] = (1.0, 1.0, 0.3)
    l2_weight: float = 1e-2
    input_dim: int = FEATURE_DIM_B

    def __post_init__(self):
        _check_positive_ints(
            dense_layers=self.dense_layers,
            hidden_units=self.hidden_units,
            batch_size=self.batch_size,
            epochs=self.epochs,
            input_dim=self.input_dim,
        )
        _check_training_fields(self.dropout_rate, self.learning_rate, self.l2_weight)
        if len(self.class_weights) != len(VERACITY_LABELS):
            raise ValueError(f"need {len(VERACITY_LABELS)} class weights")


def _check_positive_ints(**fields_):
    for name, value in fields_.items():
        if value < 1:
            raise ValueError(f"{name} must be positive, got {value}")


def _check_training_fields(dropout_rate: float, learning_rate: float, l2_weight: float):
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if l2_weight < 0:
        raise ValueError("l2_weight must be nonnegative")


@dataclass(frozen=True)
class SdqcEstimate:
    post_id: str
    probabilities: tuple[float, float, float, float]

    def __post_init__(self):
        _check_probabilities(self.probabilities, len(SDQC_LABELS))

    @property
    def label(self) -> str:
        return SDQC_LABELS[int(np.argmax(self.probabilities))]


@dataclass(frozen=True)
class VeracityEstimate:
    thread_id: str
    probabilities: tuple[float, float, float]
    confidence: float

    def __post_init__(self):
        _check_probabilities(self.probabilities, len(VERACITY_LABELS))
        if abs(self.confidence - max(self.probabilities)) > 1e-6:
            raise ValueError("confidence must equal the maximum probability")

    @classmethod
    def from_probabilities(cls, thread_id: str, probabilities: Sequence[float]) -> "VeracityEstimate":
        probs = tuple(float(p) for p in probabilities)
        return cls(thread_id=thread_id, probabilities=probs, confidence=max(probs))

    @property
    def label(self) -> str:
        return VERACITY_LABELS[int(np.argmax(self.probabilities))]


def _check_probabilities(probs: Sequence[float], k: int):
    if len(probs) != k:
        raise ValueError(f"expected {k} probabilities, got {len(probs)}")
    if any(p < 0 or p > 1 for p in probs):
        raise ValueError(f"probabilities outside [0, 1]: {probs}")
    if abs(sum(probs) - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {sum(probs)}, not 1")


# ---------------------------------------------------------------------------
# networks


class ModelA:
    """Per-kernel-size conv branches (conv -> ReLU -> batchnorm), channel
    concat, mask-aware average pooling, aux-feature concat, then a dense
    stack (dense -> ReLU -> dropout) into a softmax over the four stances."""

    task = "a"

    def __init__(self, config: ConfigA, *, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.branches: list[list[tuple[nn.Conv1DLayer, nn.BatchNormLayer]]] = []
        for k in config.kernel_sizes:
            stages = []
            for i in range(config.conv_layers):
                in_channels = config.embedding_dim if i == 0 else config.channels
                conv = nn.Conv1DLayer(k, in_channels, config.channels, rng=rng, dtype=dtype, name=f"conv_k{k}_{i}")
                norm = nn.BatchNormLayer(config.channels, dtype=dtype, name=f"bn_k{k}_{i}")
                stages.append((conv, norm))
            self.branches.append(stages)
        self.dense_input_dim = len(config.kernel_sizes) * config.channels + FEATURE_DIM_A
        self.dense_stack = []
        for i in range(config.dense_layers):
            n_in = self.dense_input_dim if i == 0 else config.hidden_units
            self.dense_stack.append(nn.DenseLayer(n_in, config.hidden_units, rng=rng, dtype=dtype, name=f"dense_{i}"))
        self.output = nn.DenseLayer(config.hidden_units, len(SDQC_LABELS), rng=rng, dtype=dtype, name="output")
        if self.dense_stack[0].n_in != len(self.branches) * config.channels + FEATURE_DIM_A:
            raise nn.ShapeError("dense stack does not line up with pooled conv channels plus aux features")

    def parameters(self) -> list[nn.Tensor]:
        params = []
        for stages in self.branches:
            for conv, norm in stages:
                params += conv.parameters() + norm.parameters()
        for layer in self.dense_stack:
            params += layer.parameters()
        return params + self.output.parameters()

    def weight_matrices(self) -> list[nn.Tensor]:
        mats = [conv.weights for stages in self.branches for conv, _ in stages]
        mats += [layer.weights for layer in self.dense_stack]
        return mats + [self.output.weights]

    def norm_layers(self) -> list[nn.BatchNormLayer]:
        return [norm for stages in self.branches for _, norm in stages]

    def forward(
        self,
        embeddings: np.ndarray,
        aux: np.ndarray,
        mask: np.ndarray | None = None,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> nn.Tensor:
        x = nn.Tensor(np.asarray(embeddings, dtype=self.dtype))
        branch_outputs = []
        for stages in self.branches:
            h = x
            for conv, norm in stages:
                h = nn.batchnorm_forward(nn.relu(nn.conv1d_forward(h, conv)), norm, training)
            branch_outputs.append(h)
        pooled = (
            nn.masked_avg_pool(nn.channel_concat(branch_outputs), mask)
            if mask is not None
            else nn.global_avg_pool(nn.channel_concat(branch_outputs))
        )
        h = nn.concat([pooled, nn.Tensor(np.asarray(aux, dtype=self.dtype))], axis=-1)
        h = _dense_head(h, self.dense_stack, self.config.dropout_rate, training, rng)
        return nn.softmax(nn.dense_forward(h, self.output))


class ModelB:
    """Dense stack (dense -> ReLU -> dropout) over the 15 thread features
    into a softmax over true / false / unverified."""

    task = "b"

    def __init__(self, config: ConfigB, *, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.dense_stack = []
        for i in range(config.dense_layers):
            n_in = config.input_dim if i == 0 else config.hidden_units
            self.dense_stack.append(nn.DenseLayer(n_in, config.hidden_units, rng=rng, dtype=dtype, name=f"dense_{i}"))
        self.output = nn.DenseLayer(config.hidden_units, len(VERACITY_LABELS), rng=rng, dtype=dtype, name="output")
        if self.dense_stack[0].n_in != config.input_dim:
            raise nn.ShapeError("dense stack does not line up with the feature dimension")

    def parameters(self) -> list[nn.Tensor]:
        params = []
        for layer in self.dense_stack:
            params += layer.parameters()
        return params + self.output.parameters()

    def weight_matrices(self) -> list[nn.Tensor]:
        return [layer.weights for layer in self.dense_stack] + [self.output.weights]

    def norm_layers(self) -> list[nn.BatchNormLayer]:
        return []

    def forward(
        self,
        features: np.ndarray,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> nn.Tensor:
        h = nn.Tensor(np.asarray(features, dtype=self.dtype))
        h = _dense_head(h, self.dense_stack, self.config.dropout_rate, training, rng)
        return nn.softmax(nn.dense_forward(h, self.output))


def _dense_head(h: nn.Tensor, layers: Sequence[nn.DenseLayer], rate: float, training: bool, rng) -> nn.Tensor:
    if training and rate > 0 and rng is None:
        raise ValueError("dropout needs an rng in training mode")
    for layer in layers:
        h = nn.dropout(nn.relu(nn.dense_forward(h, layer)), rate, training, rng)
    return h


# ---------------------------------------------------------------------------
# input assembly


def pad_and_stack(matrices: Sequence[np.ndarray], length: int = MAX_TOKENS, dtype=np.float32):
    """Zero-pad (T_i, D) matrices to a common length; the mask marks real rows."""
    if not matrices:
        raise nn.ShapeError("cannot stack zero matrices")
    dim = matrices[0].shape[1]
    x = np.zeros((len(matrices), length, dim), dtype=dtype)
    mask = np.zeros((len(matrices), length), dtype=bool)
    for i, m in enumerate(matrices):
        t = m.shape[0]
        if t > length:
            raise nn.ShapeError(f"sequence of length {t} exceeds the padded length {length}")
        x[i, :t] = m
        mask[i, :t] = True
    return x, mask


def stance_inputs(
    posts: Sequence[Post],
    threads_by_id: Mapping[str, Thread],
    store: EmbeddingStore,
    mix: EmbeddingMix,
    scaler: MinMaxScaler,
    *,
    dtype=np.float32,
):
    """Padded embedding batch, aux feature batch, and pooling mask for posts."""
    wanted = {p.id for p in posts}
    wanted.update(threads_by_id[p.thread_id].source.id for p in posts)
    matrices = mixed_matrices(store, mix, sorted(wanted))
    averages = averaged_vectors(matrices)
    x, mask = pad_and_stack([matrices[p.id] for p in posts], dtype=dtype)
    aux = np.stack(
        [aux_features_a(p, threads_by_id[p.thread_id], averages, scaler).vector(dtype) for p in posts]
    )
    return x, aux, mask


def veracity_inputs(
    threads: Sequence[Thread],
    scaler: MinMaxScaler,
    sdqc_estimates: Mapping[str, Sequence[float]],
    *,
    dtype=np.float32,
) -> np.ndarray:
    return np.stack([aux_features_b(t, scaler, sdqc_estimates).vector(dtype) for t in threads])


def estimates_by_id(estimates: Iterable[SdqcEstimate]) -> dict[str, tuple[float, ...]]:
    return {e.post_id: e.probabilities for e in estimates}


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResultA:
    model: ModelA
    loss_trace: list[float]
    scaler: MinMaxScaler
    mix: EmbeddingMix


@dataclass
class TrainResultB:
    model: ModelB
    loss_trace: list[float]
    scaler: MinMaxScaler


def _batch_indices(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2:] = [np.concatenate(batches[-2:])]
    return batches


def _rng_children(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    init, shuffle, drop = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(drop)


def _run_epochs(forward_loss, n_items: int, batch_size: int, epochs: int, params, learning_rate: float, shuffle_rng) -> list[float]:
    adam = nn.AdamState.for_params(params, learning_rate)
    trace = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n_items)
        total = 0.0
        for batch_no, idx in enumerate(_batch_indices(order, batch_size)):
            nn.zero_grad(params)
            try:
                loss = forward_loss(idx)
                nn.backward(loss)
            except nn.NumericError as err:
                raise nn.NumericError(f"training aborted at epoch {epoch + 1}, batch {batch_no + 1}: {err}") from err
            nn.adam_step(params, nn.grads_of(params), adam)
            total += loss.item() * len(idx)
        trace.append(total / n_items)
    return trace


def train_a(
    train: Dataset,
    store: EmbeddingStore,
    config: ConfigA,
    seed: int,
    *,
    mix: EmbeddingMix | None = None,
    scaler: MinMaxScaler | None = None,
) -> TrainResultA:
    """Fit the stance classifier on the labelled posts of the training split."""
    if store.dimension != config.embedding_dim:
        raise nn.ShapeError(f"store dimension {store.dimension} does not match config embedding_dim {config.embedding_dim}")
    posts = [p for p in train.posts if p.sdqc_label is not None]
    if len(posts) < 2:
        raise ValueError("training needs at least two labelled posts")
    labels = np.array([SDQC_LABELS.index(p.sdqc_label) for p in posts])
    scaler = scaler if scaler is not None else fit_scaler(train.posts)
    mix = mix if mix is not None else default_mix(store.num_layers)
    threads_by_id = {t.id: t for t in train.threads}
    x, aux, mask = stance_inputs(posts, threads_by_id, store, mix, scaler)

    init_rng, shuffle_rng, dropout_rng = _rng_children(seed)
    model = ModelA(config, rng=init_rng)
    loss_spec = nn.LossSpec(config.class_weights, config.l2_weight)

    def forward_loss(idx):
        probs = model.forward(x[idx], aux[idx], mask[idx], training=True, rng=dropout_rng)
        return nn.weighted_cross_entropy(probs, labels[idx], loss_spec, model.weight_matrices())

    trace = _run_epochs(forward_loss, len(posts), config.batch_size, config.epochs, model.parameters(), config.learning_rate, shuffle_rng)
    return TrainResultA(model=model, loss_trace=trace, scaler=scaler, mix=mix)


def train_b(
    train: Dataset,
    sdqc_estimates: Mapping[str, Sequence[float]] | Iterable[SdqcEstimate],
    config: ConfigB,
    seed: int,
    *,
    scaler: MinMaxScaler | None = None,
) -> TrainResultB:
    """Fit the veracity classifier on the labelled threads of the training
    split, consuming per-post stance estimates."""
    estimates = sdqc_estimates if isinstance(sdqc_estimates, Mapping) else estimates_by_id(sdqc_estimates)
    threads = [t for t in train.threads if t.veracity_label is not None]
    if len(threads) < 2:
        raise ValueError("training needs at least two labelled threads")
    labels = np.array([VERACITY_LABELS.index(t.veracity_label) for t in threads])
    scaler = scaler if scaler is not None else fit_scaler(train.posts)
    x = veracity_inputs(threads, scaler, estimates)

    init_rng, shuffle_rng, dropout_rng = _rng_children(seed)
    model = ModelB(config, rng=init_rng)
    loss_spec = nn.LossSpec(config.class_weights, config.l2_weight)

    def forward_loss(idx):
        probs = model.forward(x[idx], training=True, rng=dropout_rng)
        return nn.weighted_cross_entropy(probs, labels[idx], loss_spec, model.weight_matrices())

    trace = _run_epochs(forward_loss, len(threads), config.batch_size, config.epochs, model.parameters(), config.learning_rate, shuffle_rng)
    return TrainResultB(model=model, loss_trace=trace, scaler=scaler)


# ---------------------------------------------------------------------------
# prediction


def predict_a(
    model: ModelA,
    dataset: Dataset,
    store: EmbeddingStore,
    scaler: MinMaxScaler,
    mix: EmbeddingMix | None = None,
    *,
    batch_size: int = 512,
) -> list[SdqcEstimate]:
    """One stance estimate per post, labelled or not, in dataset order."""
    mix = mix if mix is not None else default_mix(store.num_layers)
    posts = list(dataset.posts)
    threads_by_id = {t.id: t for t in dataset.threads}
    estimates = []
    for start in range(0, len(posts), batch_size):
        chunk = posts[start : start + batch_size]
        x, aux, mask = stance_inputs(chunk, threads_by_id, store, mix, scaler)
        probs = model.forward(x, aux, mask, training=False).data
        estimates += [
            SdqcEstimate(post_id=p.id, probabilities=tuple(float(v) for v in row))
            for p, row in zip(chunk, probs)
        ]
    return estimates


def predict_b(
    model: ModelB,
    dataset: Dataset,
    sdqc_estimates: Mapping[str, Sequence[float]] | Iterable[SdqcEstimate],
    scaler: MinMaxScaler,
    *,
    batch_size: int = 512,
) -> list[VeracityEstimate]:
    """One veracity estimate per thread, in dataset order."""
    estimates = sdqc_estimates if isinstance(sdqc_estimates, Mapping) else estimates_by_id(sdqc_estimates)
    threads = list(dataset.threads)
    out = []
    for start in range(0, len(threads), batch_size):
        chunk = threads[start : start + batch_size]
        x = veracity_inputs(chunk, scaler, estimates)
        probs = model.forward(x, training=False).data
        out += [VeracityEstimate.from_probabilities(t.id, row) for t, row in zip(chunk, probs)]
    return out


def always_comment_estimates(dataset: Dataset) -> list[SdqcEstimate]:
    """Baseline that declares every post a comment with full confidence."""
    return [SdqcEstimate(post_id=p.id, probabilities=(0.0, 0.0, 0.0, 1.0)) for p in dataset.posts]


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"CLRC"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHI")


def _state_tensors(model: ModelA | ModelB) -> list[tuple[str, np.ndarray]]:
    named = [(p.name, p.data) for p in model.parameters()]
    for norm in model.norm_layers():
        named.append((f"{norm.name}.running_mean", norm.running_mean))
        named.append((f"{norm.name}.running_var", norm.running_var))
    return named


def save_checkpoint(
    path,
    model: ModelA | ModelB,
    scaler: MinMaxScaler | None = None,
    mix: EmbeddingMix | None = None,
) -> None:
    """Versioned binary blob: JSON header (config, scaler, mix, tensor table)
    followed by the raw little-endian float32 tensor data in table order."""
    tensors = _state_tensors(model)
    meta = {
        "task": model.task,
        "config": asdict(model.config),
        "scaler": {"mins": scaler.mins, "maxs": scaler.maxs} if scaler is not None and scaler.fitted else None,
        "mix": {"gamma": mix.gamma, "layer_weights": list(mix.layer_weights)} if mix is not None else None,
        "tensors": [{"name": name, "shape": list(data.shape)} for name, data in tensors],
    }
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(payload)))
        fh.write(payload)
        for _, data in tensors:
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


@dataclass
class CheckpointBundle:
    task: str
    model: ModelA | ModelB
    scaler: MinMaxScaler
    mix: EmbeddingMix | None


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        head = fh.read(_CKPT_HEADER.size)
        if len(head) < _CKPT_HEADER.size:
            raise CheckpointFormatError("truncated checkpoint header")
        magic, version, payload_len = _CKPT_HEADER.unpack(head)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad checkpoint magic {magic!r}")
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        meta = json.loads(fh.read(payload_len).decode("utf-8"))
        if meta["task"] == "a":
            cfg = meta["config"]
            config = ConfigA(**{**cfg, "kernel_sizes": tuple(cfg["kernel_sizes"]), "class_weights": tuple(cfg["class_weights"])})
            model: ModelA | ModelB = ModelA(config, rng=np.random.default_rng(0))
        elif meta["task"] == "b":
            cfg = meta["config"]
            config_b = ConfigB(**{**cfg, "class_weights": tuple(cfg["class_weights"])})
            model = ModelB(config_b, rng=np.random.default_rng(0))
        else:
            raise CheckpointFormatError(f"unknown task {meta['task']!r}")
        slots = {name: data for name, data in _state_tensors(model)}
        if [t["name"] for t in meta["tensors"]] != list(slots):
            raise CheckpointFormatError("checkpoint tensor table does not match the rebuilt model")
        for entry in meta["tensors"]:
            shape = tuple(entry["shape"])
            if slots[entry["name"]].shape != shape:
                raise CheckpointFormatError(f"tensor {entry['name']} has shape {shape}, expected {slots[entry['name']].shape}")
            n_bytes = int(np.prod(shape, dtype=np.int64)) * 4
            raw = fh.read(n_bytes)
            if len(raw) < n_bytes:
                raise CheckpointFormatError(f"truncated tensor data for {entry['name']}")
            slots[entry["name"]][...] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    scaler = MinMaxScaler()
    if meta["scaler"] is not None:
        scaler = MinMaxScaler(mins=dict(meta["scaler"]["mins"]), maxs=dict(meta["scaler"]["maxs"]))
    mix = None
    if meta["mix"] is not None:
        mix = EmbeddingMix(gamma=float(meta["mix"]["gamma"]), layer_weights=tuple(meta["mix"]["layer_weights"]))
    return CheckpointBundle(task=meta["task"], model=model, scaler=scaler, mix=mix)
