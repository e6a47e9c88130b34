"""Adam with the AMSGrad running maximum, and the step learning-rate schedules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    correct_v: bool = True  # False: raw running maximum, steps up to lr / sqrt(1 - beta2) early on
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    v_max: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kw) -> "OptimizerState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            v_max=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_amsgrad_update(state: OptimizerState, grads, lr: float) -> list[np.ndarray]:
    """Advance the moments by one step and return the per-parameter decrements.

    Both moments are bias corrected: ``m / (1 - beta1^t)`` and the running
    maximum of ``v`` divided by ``1 - beta2^t``, so a constant gradient moves
    each parameter by about ``lr`` per step from the first step on. With
    ``state.correct_v`` false the running maximum is used as is.
    """
    if len(grads) != len(state.m):
        raise ValueError("gradient list does not match optimizer state")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction = 1.0 - b1**state.t
    root_correction = np.sqrt(1.0 - b2**state.t) if state.correct_v else 1.0
    steps = []
    for i, g in enumerate(grads):
        if g.shape != state.m[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, expected {state.m[i].shape}")
        m, v, vmax = state.m[i], state.v[i], state.v_max[i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        np.maximum(vmax, v, out=vmax)
        m_hat = m / correction
        steps.append(lr * (m_hat / (np.sqrt(vmax) / root_correction + state.eps)))
    return steps


def adam_amsgrad_step(state: OptimizerState, params, grads, lr: float):
    """Update ``params`` in place and return them."""
    for p, step in zip(params, adam_amsgrad_update(state, grads, lr)):
        p -= step.astype(p.dtype, copy=False)
    return params


@dataclass(frozen=True)
class StepSchedule:
    """``lr0 * factor**n`` with n = 0 before ``start`` and one more every ``every`` epochs after."""

    lr0: float
    start: int
    every: int
    factor: float

    def __post_init__(self):
        if self.lr0 < 0 or self.start < 0 or self.every < 1 or not 0 < self.factor <= 1:
            raise ValueError(f"invalid schedule {self}")

    def drops(self, epoch: int) -> int:
        if epoch < self.start:
            return 0
        return 1 + (epoch - self.start) // self.every

    def __call__(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        lr = self.lr0
        for _ in range(self.drops(epoch)):
            lr *= self.factor
        return lr


VDSR_SCHEDULE = StepSchedule(5e-4, start=150, every=50, factor=0.1)
IRUNET_SCHEDULE = StepSchedule(5e-4, start=100, every=100, factor=0.5)
