"""Analytic weight predictors: pure functions from history to predicted state.

Four extrapolators forecast parameters K steps ahead of a checkpoint:

* ``momentum``        -- theta + K * m / (sqrt(v) + eps) from the optimizer's
  raw moment EMAs. Extrapolates the current update direction at constant
  velocity; prone to norm explosion at large K.
* ``linear``          -- theta + (K/delta) * (theta - theta_prev), the
  finite-difference velocity of the observed trajectory.
* ``quadratic``       -- adds a curvature term with coefficient
  K(K-delta)/(2 delta^2) on the second difference of the last three
  checkpoints.
* ``quadratic_exact`` -- same structure with coefficient K(K+delta)/(2 delta^2),
  which is the polynomial-interpolation coefficient that reproduces
  trajectories exactly quadratic in the step index. Kept as a separate,
  always-labeled variant; ``quadratic`` is the default.

Predicted vectors may be non-finite (momentum at large K can overflow); that
is recorded in Prediction.finite rather than raised, and the verifier treats
it as an automatic rejection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import freeze, is_finite, l2_norm
from .optim import AdamState, lr_at

MOMENTUM = "momentum"
LINEAR = "linear"
QUADRATIC = "quadratic"
QUADRATIC_EXACT = "quadratic_exact"

PREDICTORS = (MOMENTUM, LINEAR, QUADRATIC, QUADRATIC_EXACT)

# checkpoints of history each predictor needs (current one included)
HISTORY_REQUIRED = {MOMENTUM: 1, LINEAR: 2, QUADRATIC: 3, QUADRATIC_EXACT: 3}


@dataclass(frozen=True)
class Prediction:
    predictor: str
    k: int
    theta_hat: np.ndarray
    displacement_norm: float
    finite: bool


def _finish(predictor: str, k: int, theta_hat: np.ndarray,
            displacement_norm: float | None = None,
            theta_t: np.ndarray | None = None) -> Prediction:
    if displacement_norm is None:
        displacement_norm = l2_norm(theta_hat - theta_t)
    return Prediction(
        predictor=predictor,
        k=k,
        theta_hat=freeze(theta_hat),
        displacement_norm=displacement_norm,
        finite=is_finite(theta_hat),
    )


def _check_k_delta(k: int, delta: int | None = None) -> None:
    if k < 1:
        raise ValueError("K must be >= 1")
    if delta is not None and delta < 1:
        raise ValueError("delta must be >= 1")


def predict_momentum(theta_t: np.ndarray, m: np.ndarray, v: np.ndarray,
                     k: int, eps: float) -> Prediction:
    """theta + K * m/(sqrt(v)+eps), raw moments, additive sign, no lr factor."""
    _check_k_delta(k)
    if eps <= 0:
        raise ValueError("eps must be > 0")
    unit = m / (np.sqrt(v) + eps)
    # K * ||unit|| keeps displacement exactly linear in K
    return _finish(MOMENTUM, k, theta_t + k * unit, displacement_norm=k * l2_norm(unit))


def predict_momentum_descent(theta_t: np.ndarray, state: AdamState, k: int) -> Prediction:
    """Descent-flavored momentum variant: theta - K * lr * m_hat/(sqrt(v_hat)+eps).

    Uses bias-corrected moments and the scheduled learning rate at the
    checkpoint step, i.e. K repeats of the current Adam update direction.
    """
    _check_k_delta(k)
    h = state.hyper
    t = max(state.step, 1)
    m_hat = state.m / (1.0 - h.beta1**t)
    v_hat = state.v / (1.0 - h.beta2**t)
    unit = lr_at(h, min(state.step, h.total_steps)) * m_hat / (np.sqrt(v_hat) + h.eps)
    return _finish(MOMENTUM, k, theta_t - k * unit, displacement_norm=k * l2_norm(unit))


def predict_linear(theta_t: np.ndarray, theta_prev: np.ndarray,
                   delta: int, k: int) -> Prediction:
    """theta + (K/delta) * (theta - theta_prev)."""
    _check_k_delta(k, delta)
    theta_hat = theta_t + (k / delta) * (theta_t - theta_prev)
    return _finish(LINEAR, k, theta_hat, theta_t=theta_t)


def _quadratic(predictor: str, coeff_num: float, theta_t, theta_prev, theta_prev2,
               delta: int, k: int) -> Prediction:
    velocity = theta_t - theta_prev
    second_diff = theta_t - 2.0 * theta_prev + theta_prev2
    theta_hat = theta_t + (k / delta) * velocity + (coeff_num / (2.0 * delta * delta)) * second_diff
    return _finish(predictor, k, theta_hat, theta_t=theta_t)


def predict_quadratic(theta_t: np.ndarray, theta_prev: np.ndarray,
                      theta_prev2: np.ndarray, delta: int, k: int) -> Prediction:
    """Parabola through three checkpoints, curvature coefficient K(K-delta)."""
    _check_k_delta(k, delta)
    return _quadratic(QUADRATIC, float(k) * (k - delta), theta_t, theta_prev,
                      theta_prev2, delta, k)


def predict_quadratic_exact(theta_t: np.ndarray, theta_prev: np.ndarray,
                            theta_prev2: np.ndarray, delta: int, k: int) -> Prediction:
    """Quadratic variant with coefficient K(K+delta): exact on parabolic trajectories."""
    _check_k_delta(k, delta)
    return _quadratic(QUADRATIC_EXACT, float(k) * (k + delta), theta_t, theta_prev,
                      theta_prev2, delta, k)
