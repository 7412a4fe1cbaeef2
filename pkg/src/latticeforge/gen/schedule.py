from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule; index 0 is the clean state (alpha_bar = 1)."""

    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ValueError("need 0 < beta_start <= beta_end < 1")

    @property
    def betas(self) -> np.ndarray:
        return np.concatenate([[0.0], np.linspace(self.beta_start, self.beta_end, self.T)])

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def posterior(self, t: int):
        """Coefficients of the q(x_{t-1} | x_t, x0) mean and its variance."""
        ab, b, a = self.alpha_bar, self.betas, self.alphas
        c0 = np.sqrt(ab[t - 1]) * b[t] / (1 - ab[t])
        ct = np.sqrt(a[t]) * (1 - ab[t - 1]) / (1 - ab[t])
        var = (1 - ab[t - 1]) / (1 - ab[t]) * b[t]
        return c0, ct, var

    def as_dict(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}


def forward_noise(x0, t: int, eps, schedule: NoiseSchedule, mask=None):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps; masked rows untouched."""
    if not 0 <= t <= schedule.T:
        raise ValueError(f"t={t} outside 0..{schedule.T}")
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != x0.shape:
        raise ValueError("eps must match x0 in shape")
    ab = schedule.alpha_bar[t]
    xt = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        xt = np.where(mask[..., None], xt, x0)
    return xt
