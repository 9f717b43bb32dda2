"""Gain sequences gamma(p) = gamma0 / p**a and their integer inverse.

Two regimes are supported, both within the pure power family:

* slow decay, a in (1/2, 1): used together with iterate averaging, no
  condition on gamma0;
* fast decay, a = 1: requires 2 * lambda_lower * gamma0 > 1 where
  lambda_lower is the mean-reversion constant of the driving field
  (see :func:`validate_hs2`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepSchedule:
    """Deterministic decreasing gain sequence gamma(p) = gamma0 / p**a.

    gamma0 must be positive and the decay exponent must lie in (1/2, 1],
    which makes sum(gamma) diverge and sum(gamma^2) converge.
    """

    gamma0: float
    exponent_a: float = 1.0

    def __post_init__(self) -> None:
        if not self.gamma0 > 0.0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if not 0.5 < self.exponent_a <= 1.0:
            raise ValueError(
                f"decay exponent must lie in (1/2, 1], got {self.exponent_a}"
            )

    def gamma(self, p: int) -> float:
        """Step size at iteration p >= 1."""
        if p < 1:
            raise ValueError(f"step index must be >= 1, got {p}")
        return self.gamma0 * float(p) ** (-self.exponent_a)

    def gamma_block(self, start_p: int, count: int) -> np.ndarray:
        """Vector of steps gamma(start_p + 1), ..., gamma(start_p + count)."""
        if start_p < 0 or count < 0:
            raise ValueError("start_p and count must be nonnegative")
        ps = np.arange(start_p + 1, start_p + count + 1, dtype=np.float64)
        return self.gamma0 * ps ** (-self.exponent_a)

    def gamma_inv(self, y: float) -> int:
        """Smallest integer p with gamma(p) <= y.

        Returns 1 when y exceeds gamma(1).  The float candidate
        ceil((gamma0 / y)**(1/a)) is corrected against the exact
        comparisons so that gamma_inv(gamma(p)) == p for every integer p.
        """
        if not y > 0.0:
            raise ValueError(f"target step must be positive, got {y}")
        if y >= self.gamma(1):
            return 1
        p = int(np.ceil((self.gamma0 / y) ** (1.0 / self.exponent_a)))
        p = max(p, 1)
        while p > 1 and self.gamma(p - 1) <= y:
            p -= 1
        while self.gamma(p) > y:
            p += 1
        return p

    def gamma_inv_real(self, y: float) -> float:
        """Real-valued inverse (gamma0 / y)**(1/a), used by complexity formulas."""
        if not y > 0.0:
            raise ValueError(f"target step must be positive, got {y}")
        return (self.gamma0 / y) ** (1.0 / self.exponent_a)


def validate_hs2(schedule: StepSchedule, lambda_lower: float) -> bool:
    """Check the fast-regime gain condition 2 * lambda_lower * gamma0 > 1.

    Only meaningful for the a = 1 schedule; lambda_lower is the
    mean-reversion constant of the field being driven.
    """
    if schedule.exponent_a != 1.0:
        raise ValueError("the gain condition applies to the a = 1 schedule only")
    if not lambda_lower > 0.0:
        raise ValueError(f"lambda_lower must be positive, got {lambda_lower}")
    return 2.0 * lambda_lower * schedule.gamma0 > 1.0
