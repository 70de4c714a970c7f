"""Server-side fusion operators and the curvature penalty they rely on.

Plain fusion is a shard-size-weighted parameter average. The curvature variant
fuses identically but additionally broadcasts every client's final weights and
Fisher diagonal, which the next round's local training uses as quadratic
anchors: R(theta) = sum_j sum_i I_j[i] * (theta[i] - anchor_j[i])^2.
"""

from dataclasses import dataclass

import numpy as np

from .nn import Batch, ModelSpec, backward_pass, param_count


@dataclass
class FusionPayload:
    """One client's contribution to a fusion round."""

    params: np.ndarray
    shard_size: int
    fisher_diag: np.ndarray | None = None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.shard_size < 1:
            raise ValueError("shard_size must be positive")
        if self.fisher_diag is not None:
            self.fisher_diag = np.asarray(self.fisher_diag, dtype=np.float64)
            if self.fisher_diag.shape != self.params.shape:
                raise ValueError("fisher diagonal shape must match params")
            if not np.all(np.isfinite(self.fisher_diag)) or self.fisher_diag.min() < 0:
                raise ValueError("fisher diagonal entries must be finite and non-negative")


@dataclass
class CurvContext:
    """Frozen anchors for one client's regularized local training.

    lam scales the penalty when the caller adds it to the training gradient;
    anchors holds the other clients' previous-round (weights, fisher diagonal).
    """

    lam: float
    anchors: list[tuple[np.ndarray, np.ndarray]]


def fedavg_fuse(payloads: list[FusionPayload]) -> np.ndarray:
    """Coordinate-wise average weighted by shard sizes."""
    if not payloads:
        raise ValueError("cannot fuse an empty payload set")
    length = payloads[0].params.size
    if any(p.params.size != length for p in payloads):
        raise ValueError("payload parameter vectors differ in length")
    total = sum(p.shard_size for p in payloads)
    fused = np.zeros(length)
    for p in payloads:
        fused += (p.shard_size / total) * p.params
    return fused


def fedcurv_fuse(payloads: list[FusionPayload]):
    """Weighted average plus the (weights, fisher) broadcast set for next round."""
    missing = [i for i, p in enumerate(payloads) if p.fisher_diag is None]
    if missing:
        raise ValueError(f"payloads missing fisher diagonals: {missing}")
    fused = fedavg_fuse(payloads)
    broadcast = [(p.params, p.fisher_diag) for p in payloads]
    return fused, broadcast


def fisher_diag(params: np.ndarray, spec: ModelSpec, shard: Batch) -> np.ndarray:
    """Empirical Fisher diagonal: mean squared per-sample loss gradient.

    Evaluated on the client's shard at its local weights. For dense layers the
    per-sample weight gradient is an outer product of the incoming activation
    and the backpropagated delta, so the mean of its square factorizes into a
    single matrix product per layer; no per-sample loop is needed.
    """
    if len(shard) == 0:
        raise ValueError("fisher diagonal needs a non-empty shard")
    _, acts, deltas, layers = backward_pass(params, spec, shard)
    n = len(shard)
    out = np.empty(param_count(spec))
    offset = 0
    for l, (W, _) in enumerate(layers):
        n_in, n_out = W.shape
        a_sq = acts[l] ** 2
        d_sq = deltas[l] ** 2
        out[offset : offset + n_in * n_out] = (a_sq.T @ d_sq).ravel() / n
        offset += n_in * n_out
        out[offset : offset + n_out] = d_sq.mean(axis=0)
        offset += n_out
    return out


def curv_penalty(theta: np.ndarray, ctx: CurvContext):
    """Penalty value and gradient at theta (unscaled; caller applies lam)."""
    value = 0.0
    grad = np.zeros_like(theta)
    for anchor, fisher in ctx.anchors:
        if anchor.shape != theta.shape or fisher.shape != theta.shape:
            raise ValueError("anchor shapes must match theta")
        diff = theta - anchor
        value += float(fisher @ (diff * diff))
        grad += 2.0 * fisher * diff
    return value, grad
