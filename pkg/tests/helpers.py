"""Shared test utilities: independent oracles and small random problem builders."""

import numpy as np

from fedatsim import Batch, ModelSpec, mean_loss


def random_spec(rng, max_hidden=2, max_width=6, activation=None) -> ModelSpec:
    """A small random architecture, at most a few dozen parameters."""
    depth = int(rng.integers(0, max_hidden + 1))
    sizes = [int(rng.integers(2, max_width + 1)) for _ in range(depth + 2)]
    act = activation or ("relu" if rng.random() < 0.5 else "tanh")
    return ModelSpec(layer_sizes=tuple(sizes), activation=act, seed=int(rng.integers(1 << 30)))


def random_batch(rng, spec: ModelSpec, n=None, lo=0.0, hi=1.0) -> Batch:
    n = n or int(rng.integers(1, 9))
    inputs = rng.uniform(lo, hi, size=(n, spec.input_dim))
    labels = rng.integers(0, spec.n_classes, size=n)
    return Batch(inputs, labels)


def fd_param_grad(params, spec, batch, h=1e-5) -> np.ndarray:
    """Central finite differences of the mean loss w.r.t. every parameter."""
    grad = np.empty_like(params)
    for i in range(params.size):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (mean_loss(up, spec, batch) - mean_loss(down, spec, batch)) / (2 * h)
    return grad


def fd_input_grad(params, spec, batch, h=1e-5) -> np.ndarray:
    """Central finite differences of the mean loss w.r.t. every input entry."""
    x = batch.inputs
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            up, down = x.copy(), x.copy()
            up[i, j] += h
            down[i, j] -= h
            grad[i, j] = (
                mean_loss(params, spec, Batch(up, batch.labels))
                - mean_loss(params, spec, Batch(down, batch.labels))
            ) / (2 * h)
    return grad


def rel_err(got, want) -> float:
    got, want = np.asarray(got).ravel(), np.asarray(want).ravel()
    return float(np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12))
