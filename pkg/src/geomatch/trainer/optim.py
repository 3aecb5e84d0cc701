"""AdamW with decoupled weight decay and the one-cycle LR schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError


@dataclass
class AdamW:
    """Decoupled weight decay: the decay term is lr-scaled but bypasses the
    moment estimates."""

    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]

    def update(self, params: np.ndarray, grads: np.ndarray, lr: float) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params)


def one_cycle_lr(step: int, total_steps: int, lr_max: float = 1.25e-3,
                 pct_start: float = 0.3, div_factor: float = 25.0,
                 final_div_factor: float = 1e4) -> float:
    """Linear warmup from lr_max/div_factor over pct_start of the run, then
    cosine anneal down to lr_max/div_factor/final_div_factor."""
    if total_steps <= 0:
        raise InputError("total_steps must be positive")
    if not 0.0 < pct_start < 1.0:
        raise InputError(f"pct_start must be in (0, 1), got {pct_start}")
    if not 0 <= step < total_steps:
        raise InputError(f"step {step} outside schedule of {total_steps}")
    initial = lr_max / div_factor
    final = initial / final_div_factor
    warmup = pct_start * (total_steps - 1)
    if step <= warmup:
        frac = step / warmup if warmup > 0 else 1.0
        return initial + (lr_max - initial) * frac
    frac = (step - warmup) / ((total_steps - 1) - warmup)
    # float() so the cosine branch does not leak a numpy scalar to callers
    return float(final + (lr_max - final) * 0.5 * (1.0 + np.cos(np.pi * frac)))
