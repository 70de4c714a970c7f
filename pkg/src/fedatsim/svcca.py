"""Layer-similarity scores between two models via SVD plus canonical correlation.

Each neuron is treated as a vector of its activations over a probe set; a layer
is the subspace those vectors span. Scores compare two layers' subspaces and
land in [0, 1]: high means similar representations (low drift between models).

The computation is two-staged: each activation matrix is truncated to the
smallest number of singular directions carrying a target share of squared
singular-value mass, then canonical correlations between the truncated
subspaces are read off the singular values of the product of the whitened
projections.
"""

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .nn import Batch, ModelSpec, forward

# Regularizer added to singular values before inversion during whitening, so
# near-rank-deficient layers do not blow up.
_WHITEN_EPS = 1e-10

# Singular values at or below this (relative to the largest) count as rank loss.
_RANK_TOL = 1e-12


@dataclass
class ActivationMatrix:
    """Rows are neurons, columns are probe points; rows are mean-centered."""

    matrix: np.ndarray
    layer: int
    model_id: str = ""


@dataclass
class SvccaResult:
    score: float
    correlations: np.ndarray
    retained: tuple[int, int]
    degenerate: bool = False


@dataclass
class DriftReport:
    """Scores for each unordered model pair and layer, plus all-pairs means."""

    pair_scores: dict[tuple[int, int], dict[int, float]]
    mean_scores: dict[int, float]


def layer_activations(
    params: np.ndarray, spec: ModelSpec, probe: Batch, layer: int, model_id: str = ""
) -> ActivationMatrix:
    """Centered activation matrix of hidden layer `layer` (1-based) on the probe."""
    if not 1 <= layer <= spec.n_hidden:
        raise ValueError(f"layer must be in 1..{spec.n_hidden}, got {layer}")
    _, acts = forward(params, spec, probe)
    matrix = acts[layer - 1].T.copy()
    if matrix.shape[1] < matrix.shape[0]:
        warnings.warn(
            f"layer {layer}: only {matrix.shape[1]} probe points for "
            f"{matrix.shape[0]} neurons; scores may be inflated",
            stacklevel=2,
        )
    matrix -= matrix.mean(axis=1, keepdims=True)
    return ActivationMatrix(matrix=matrix, layer=layer, model_id=model_id)


def _as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, ActivationMatrix) else np.asarray(x, dtype=np.float64)


def _truncated_basis(matrix: np.ndarray, variance_keep: float):
    """Whitened row-space basis keeping >= variance_keep of squared SV mass."""
    _, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s.size == 0 or s[0] <= _RANK_TOL:
        return None
    rank = int(np.sum(s > s[0] * _RANK_TOL))
    s, vt = s[:rank], vt[:rank]
    mass = np.cumsum(s**2) / np.sum(s**2)
    keep = int(np.searchsorted(mass, variance_keep - 1e-12) + 1)
    keep = min(keep, rank)
    # Whitening divides each retained direction by its (regularized) singular
    # value; rows of vt are already unit length so this is a near no-op scale.
    return (s[:keep] / (s[:keep] + _WHITEN_EPS))[:, None] * vt[:keep]


def svcca_score(a, b, variance_keep: float = 0.99) -> SvccaResult:
    """Mean canonical correlation between two activation matrices.

    Accepts ActivationMatrix or raw (neurons x probe points) arrays; rows are
    re-centered (idempotent for already centered input). All-zero layers are
    degenerate: two zero layers score 1.0, a zero versus non-zero pair 0.0.
    """
    A = _as_matrix(a).copy()
    B = _as_matrix(b).copy()
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"need matrices with equal probe counts, got {A.shape} and {B.shape}")
    A -= A.mean(axis=1, keepdims=True)
    B -= B.mean(axis=1, keepdims=True)
    basis_a = _truncated_basis(A, variance_keep)
    basis_b = _truncated_basis(B, variance_keep)
    if basis_a is None or basis_b is None:
        both_zero = basis_a is None and basis_b is None
        return SvccaResult(
            score=1.0 if both_zero else 0.0,
            correlations=np.array([]),
            retained=(0 if basis_a is None else len(basis_a), 0 if basis_b is None else len(basis_b)),
            degenerate=True,
        )
    corr = np.linalg.svd(basis_a @ basis_b.T, compute_uv=False)
    corr = np.clip(corr, 0.0, 1.0)
    return SvccaResult(
        score=float(corr.mean()),
        correlations=corr,
        retained=(len(basis_a), len(basis_b)),
    )


def drift_report(
    params_list: list[np.ndarray],
    spec: ModelSpec,
    probe: Batch,
    layers: list[int] | None = None,
    variance_keep: float = 0.99,
) -> DriftReport:
    """Pairwise per-layer scores across client models, plus the all-pairs mean."""
    if len(params_list) < 2:
        raise ValueError("drift report needs at least two models")
    if layers is None:
        layers = list(range(1, spec.n_hidden + 1))
    acts = {
        (i, layer): layer_activations(p, spec, probe, layer, model_id=str(i))
        for i, p in enumerate(params_list)
        for layer in layers
    }
    pair_scores: dict[tuple[int, int], dict[int, float]] = {}
    for i, j in combinations(range(len(params_list)), 2):
        pair_scores[(i, j)] = {
            layer: svcca_score(acts[(i, layer)], acts[(j, layer)], variance_keep).score
            for layer in layers
        }
    mean_scores = {
        layer: float(np.mean([scores[layer] for scores in pair_scores.values()]))
        for layer in layers
    }
    return DriftReport(pair_scores=pair_scores, mean_scores=mean_scores)
