"""Dense feed-forward networks with reverse-mode gradients for parameters and inputs.

Model parameters live in flat float64 vectors. The layout (one contiguous slice
per weight matrix and bias, layers in forward order, row-major) is a pure
function of the model spec, so the same vector can be fused, interpolated and
checkpointed without any per-layer bookkeeping at the call sites.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_FORMAT = "fedatsim-ckpt-v1"


class NumericalError(RuntimeError):
    """A non-finite value appeared during a forward/backward pass."""


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a dense classifier: sizes, hidden activation, init seed."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least an input and an output size")
        if any(n <= 0 for n in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2


@dataclass
class Batch:
    """A minibatch of inputs plus integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-d (batch, features), got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match batch size {self.inputs.shape[0]}"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("class labels must be non-negative")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.inputs[idx], self.labels[idx])


@dataclass
class GradPair:
    """Gradients from one backward pass: vs parameters and vs inputs."""

    param_grad: np.ndarray
    input_grad: np.ndarray


def param_layout(spec: ModelSpec) -> list[tuple[str, int, tuple[int, ...]]]:
    """(name, offset, shape) for every weight matrix and bias, forward order."""
    entries = []
    offset = 0
    for l, (n_in, n_out) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        entries.append((f"W{l}", offset, (n_in, n_out)))
        offset += n_in * n_out
        entries.append((f"b{l}", offset, (n_out,)))
        offset += n_out
    return entries


def param_count(spec: ModelSpec) -> int:
    return sum(
        n_in * n_out + n_out for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])
    )


def unpack(params: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reshape a flat parameter vector into per-layer (W, b) views."""
    params = np.asarray(params)
    if params.shape != (param_count(spec),):
        raise ValueError(
            f"parameter vector has length {params.shape}, spec needs {param_count(spec)}"
        )
    layers = []
    offset = 0
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        W = params[offset : offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = params[offset : offset + n_out]
        offset += n_out
        layers.append((W, b))
    return layers


def init_params(spec: ModelSpec) -> np.ndarray:
    """Xavier-uniform weights, zero biases, deterministic in spec.seed."""
    rng = np.random.default_rng(spec.seed)
    params = np.zeros(param_count(spec))
    offset = 0
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        params[offset : offset + n_in * n_out] = rng.uniform(-limit, limit, n_in * n_out)
        offset += n_in * n_out + n_out  # biases stay zero
    return params


def _forward_cache(params, spec, inputs):
    """Forward pass keeping post-activations; returns (acts, logits).

    acts[0] is the input matrix, acts[1:] the hidden post-activations.
    """
    layers = unpack(params, spec)
    a = np.asarray(inputs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != spec.input_dim:
        raise ValueError(f"inputs shape {a.shape} incompatible with input dim {spec.input_dim}")
    acts = [a]
    last = len(layers) - 1
    for l, (W, b) in enumerate(layers):
        z = a @ W + b
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite pre-activation in layer {l}")
        if l == last:
            return acts, z
        a = np.maximum(z, 0.0) if spec.activation == "relu" else np.tanh(z)
        acts.append(a)
    raise AssertionError("unreachable")


def forward(params: np.ndarray, spec: ModelSpec, batch: Batch):
    """Logits of shape (batch, classes) plus every hidden post-activation matrix."""
    acts, logits = _forward_cache(params, spec, batch.inputs)
    return logits, acts[1:]


def _log_softmax(logits):
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(logits - zmax).sum(axis=1, keepdims=True))
    return logits - lse


def backward_pass(params: np.ndarray, spec: ModelSpec, batch: Batch):
    """Shared reverse-mode core.

    Returns (loss, acts, deltas, layers) where deltas[l] holds, per sample, the
    gradient of that sample's own cross-entropy w.r.t. layer l's pre-activation
    (no 1/N factor; callers scale as needed).
    """
    if batch.labels.size and batch.labels.max() >= spec.n_classes:
        raise ValueError("label exceeds class count")
    layers = unpack(params, spec)
    acts, logits = _forward_cache(params, spec, batch.inputs)
    logp = _log_softmax(logits)
    n = len(batch)
    loss = float(-logp[np.arange(n), batch.labels].mean())
    delta = np.exp(logp)
    delta[np.arange(n), batch.labels] -= 1.0
    deltas = [None] * len(layers)
    deltas[-1] = delta
    for l in range(len(layers) - 2, -1, -1):
        W_next = layers[l + 1][0]
        da = deltas[l + 1] @ W_next.T
        a = acts[l + 1]
        if spec.activation == "relu":
            deltas[l] = da * (a > 0.0)
        else:
            deltas[l] = da * (1.0 - a * a)
    return loss, acts, deltas, layers


def loss_and_grads(params: np.ndarray, spec: ModelSpec, batch: Batch):
    """Mean cross-entropy over the batch plus its parameter and input gradients."""
    loss, acts, deltas, layers = backward_pass(params, spec, batch)
    n = len(batch)
    grad = np.empty(param_count(spec))
    offset = 0
    for l, (W, _) in enumerate(layers):
        n_in, n_out = W.shape
        grad[offset : offset + n_in * n_out] = (acts[l].T @ deltas[l]).ravel() / n
        offset += n_in * n_out
        grad[offset : offset + n_out] = deltas[l].sum(axis=0) / n
        offset += n_out
    input_grad = (deltas[0] @ layers[0][0].T) / n
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite parameter gradient")
    return loss, GradPair(param_grad=grad, input_grad=input_grad)


def mean_loss(params: np.ndarray, spec: ModelSpec, batch: Batch) -> float:
    """Mean cross-entropy over the batch, no gradients."""
    if batch.labels.size and batch.labels.max() >= spec.n_classes:
        raise ValueError("label exceeds class count")
    _, logits = _forward_cache(params, spec, batch.inputs)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(batch)), batch.labels].mean())


def save_checkpoint(path, params: np.ndarray, spec: ModelSpec) -> None:
    """Write header (spec + layout as JSON) followed by little-endian float64 data."""
    params = np.ascontiguousarray(params, dtype=np.float64)
    if params.shape != (param_count(spec),):
        raise ValueError("parameter vector does not match spec")
    header = {
        "format": CHECKPOINT_FORMAT,
        "layer_sizes": list(spec.layer_sizes),
        "activation": spec.activation,
        "seed": spec.seed,
        "count": params.size,
        "layout": [[name, off, list(shape)] for name, off, shape in param_layout(spec)],
    }
    blob = json.dumps(header, sort_keys=True).encode() + b"\n" + params.astype("<f8").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint; returns (params, spec)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        # UnicodeDecodeError for binary junk, JSONDecodeError for text junk
        header = json.loads(header_line)
    except ValueError as exc:
        raise ValueError(f"{path}: not a checkpoint file") from exc
    if not isinstance(header, dict):
        raise ValueError(f"{path}: not a checkpoint file")
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    spec = ModelSpec(
        layer_sizes=tuple(header["layer_sizes"]),
        activation=header["activation"],
        seed=header["seed"],
    )
    params = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if params.size != header["count"] or params.size != param_count(spec):
        raise ValueError(f"{path}: parameter payload does not match header")
    return params, spec
