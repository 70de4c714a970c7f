"""PGD attack: iterative sign-gradient ascent projected onto an l-inf ball."""

from dataclasses import dataclass

import numpy as np

from .nn import Batch, ModelSpec, loss_and_grads


@dataclass(frozen=True)
class AttackConfig:
    """Attack triple (steps, ball radius, step size) plus the valid input box."""

    t_steps: int = 10
    epsilon: float = 8 / 255
    alpha: float = 2 / 255
    input_range: tuple[float, float] = (0.0, 1.0)
    random_start: bool = False

    def __post_init__(self):
        object.__setattr__(self, "input_range", tuple(float(v) for v in self.input_range))
        if self.t_steps < 0:
            raise ValueError("t_steps must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        lo, hi = self.input_range
        if not lo < hi:
            raise ValueError(f"input_range must satisfy lo < hi, got ({lo}, {hi})")


def pgd_attack(
    params: np.ndarray,
    spec: ModelSpec,
    batch: Batch,
    config: AttackConfig,
    rng: np.random.Generator | None = None,
) -> Batch:
    """Adversarial counterpart of `batch` under the current model.

    Each step ascends along sign(dL/dx), clamps back into the epsilon ball
    around the clean inputs, then into the valid input box (the box is the
    outer physical constraint, so it is applied last). With t_steps=0 and no
    random start the clean inputs come back bitwise. Labels are never touched.
    """
    lo, hi = config.input_range
    x0 = batch.inputs
    if x0.size and (x0.min() < lo or x0.max() > hi):
        raise ValueError("batch inputs fall outside the declared input range")
    if config.random_start:
        if rng is None:
            raise ValueError("random_start needs an rng")
        x = x0 + rng.uniform(-config.epsilon, config.epsilon, size=x0.shape)
        x = np.clip(x, lo, hi)
    else:
        x = x0.copy()
    for _ in range(config.t_steps):
        _, grads = loss_and_grads(params, spec, Batch(x, batch.labels))
        x = x + config.alpha * np.sign(grads.input_grad)
        x = np.clip(x, x0 - config.epsilon, x0 + config.epsilon)
        x = np.clip(x, lo, hi)
    return Batch(x, batch.labels.copy())
