"""Acceptance criteria over predicted validation loss.

Three independent verdicts per prediction, all strict inequalities:

* strict:    L_hat < L_t                 (predicted improvement)
* adaptive:  L_hat < L_t + sigma_L       (within one std of recent losses)
* proximity: |L_hat - L_t| < eps * L_t   (within a fraction of current loss)

Adaptive is None ("not evaluable") when no sigma is available, and is then
excluded from rate denominators rather than silently counted as a rejection.
A non-finite predicted loss fails everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

STRICT = "strict"
ADAPTIVE = "adaptive"
PROXIMITY = "proximity"
CRITERIA = (STRICT, ADAPTIVE, PROXIMITY)


@dataclass(frozen=True)
class Decision:
    strict: bool
    adaptive: bool | None
    proximity: bool
    l_hat: float
    l_t: float
    sigma_l: float | None
    epsilon: float
    reason: str | None = None

    def verdict(self, criterion: str) -> bool | None:
        if criterion == STRICT:
            return self.strict
        if criterion == ADAPTIVE:
            return self.adaptive
        if criterion == PROXIMITY:
            return self.proximity
        raise ValueError(f"unknown criterion {criterion!r}")


def decide(l_hat: float, l_t: float, sigma_l: float | None, epsilon: float) -> Decision:
    """Evaluate all three criteria for one predicted loss."""
    if not math.isfinite(l_t) or l_t <= 0:
        raise ValueError(f"current loss must be finite and positive, got {l_t}")
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if sigma_l is not None and (not math.isfinite(sigma_l) or sigma_l < 0):
        raise ValueError(f"sigma_l must be finite and >= 0, got {sigma_l}")

    if not math.isfinite(l_hat):
        return Decision(
            strict=False, adaptive=False, proximity=False,
            l_hat=l_hat, l_t=l_t, sigma_l=sigma_l, epsilon=epsilon,
            reason="non-finite prediction",
        )
    return Decision(
        strict=l_hat < l_t,
        adaptive=None if sigma_l is None else l_hat < l_t + sigma_l,
        proximity=abs(l_hat - l_t) < epsilon * l_t,
        l_hat=l_hat, l_t=l_t, sigma_l=sigma_l, epsilon=epsilon,
    )
