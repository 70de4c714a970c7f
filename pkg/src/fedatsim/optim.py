"""Local optimizers: SGD with momentum, and Adam."""

from dataclasses import dataclass, field

import numpy as np

from .nn import NumericalError

OPTIMIZER_KINDS = ("sgd_momentum", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd_momentum"
    learning_rate: float = 1e-2
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    batch_size: int = 32
    # Whether per-client optimizer state is discarded at every round start.
    # The aggregation protocol only carries model weights between rounds, so
    # resetting is the default; persisting is available for experiments.
    reset_per_round: bool = True

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"optimizer kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("adam betas must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class OptimizerState:
    step_count: int = 0
    velocity: np.ndarray | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def init_state(config: OptimizerConfig, dim: int) -> OptimizerState:
    if config.kind == "sgd_momentum":
        return OptimizerState(velocity=np.zeros(dim))
    return OptimizerState(m=np.zeros(dim), v=np.zeros(dim))


def step(params: np.ndarray, grad: np.ndarray, config: OptimizerConfig, state: OptimizerState):
    """One optimizer update. Returns new parameters; state is updated in place."""
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grad {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient passed to optimizer")
    state.step_count += 1
    if config.kind == "sgd_momentum":
        state.velocity *= config.momentum
        state.velocity -= config.learning_rate * grad
        return params + state.velocity
    t = state.step_count
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = state.m / (1.0 - config.beta1**t)
    v_hat = state.v / (1.0 - config.beta2**t)
    return params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps_hat)
