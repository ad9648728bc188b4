"""Gaussian tail kernels, the eta nonlinearity and the one-bit log-likelihood.

``eta(x) = Q'(x) / Q(x) = -phi(x) / Q(x)`` is the negated inverse Mills
ratio. Evaluating it as a ratio of ``phi`` and ``Q`` breaks down once ``Q``
underflows, so everything here goes through ``erfcx`` (the scaled
complementary error function) and ``log_ndtr``; both stay finite and
accurate over the whole real line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx, log_ndtr

from .errors import DimensionError
from .model import ProblemInstance

SQRT2 = np.sqrt(2.0)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

# beyond this the cancellation in -x - eta(x) costs more than the series
_SERIES_CUTOFF = 100.0


def q_tail(x):
    """Standard normal upper tail ``Q(x) = 1 - Phi(x) = erfc(x / sqrt 2) / 2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / SQRT2)


def log_q_tail(x):
    """``log Q(x)``, finite for every finite ``x``."""
    return log_ndtr(-np.asarray(x, dtype=float))


def eta(x):
    """``-phi(x) / Q(x)``, strictly negative; accepts scalars or arrays."""
    return -SQRT_2_OVER_PI / erfcx(np.asarray(x, dtype=float) / SQRT2)


def eta_vec(v) -> np.ndarray:
    """Elementwise :func:`eta` on a vector (empty in, empty out)."""
    return np.atleast_1d(eta(np.asarray(v, dtype=float)))


def _neg_x_minus_eta(x, e):
    """``-x - eta(x)``, which lies in (0, 1/x) for large x and cancels badly there."""
    out = -x - e
    big = x > _SERIES_CUTOFF
    if np.any(big):
        xb = x[big]
        s = 1.0 / (xb * xb)
        out[big] = (1.0 - s * (2.0 - s * (10.0 - 74.0 * s))) / xb
    return out


def eta_prime(x, e=None):
    """Derivative of eta: ``eta'(x) = eta(x) * (-x - eta(x))``, in (-1, 0).

    Pass ``e = eta(x)`` when it is already available.
    """
    x = np.asarray(x, dtype=float)
    if e is None:
        e = eta(x)
    scalar = x.ndim == 0
    x1 = np.atleast_1d(x)
    e1 = np.atleast_1d(np.asarray(e, dtype=float))
    out = e1 * _neg_x_minus_eta(x1, e1)
    return out[0] if scalar else out


@dataclass(frozen=True)
class ScaledOneBitOperator:
    """The diagonal operator ``Diag(r) C^(-1/2)``, stored as its diagonal ``d_i = r_i / sigma_i``."""

    d: np.ndarray

    @classmethod
    def from_instance(cls, inst: ProblemInstance) -> "ScaledOneBitOperator":
        return cls(inst.d)

    def __call__(self, v):
        return self.d * v


def _check_x(inst: ProblemInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.h.shape[1],):
        raise DimensionError(f"x has shape {x.shape}, expected ({inst.h.shape[1]},)")
    return x


def tail_arguments(inst: ProblemInstance, x) -> np.ndarray:
    """``Omega~ (tau - H x)``: the per-measurement arguments of Q in the likelihood."""
    x = _check_x(inst, x)
    return inst.d * (inst.tau - inst.h @ x)


def log_likelihood(inst: ProblemInstance, x) -> float:
    """``sum_i log Q((r_i / sigma_i)(tau_i - h_i^T x))``, summed over all m measurements."""
    return float(np.sum(log_q_tail(tail_arguments(inst, x))))


def grad_log_likelihood(inst: ProblemInstance, x) -> np.ndarray:
    """``-H^T Omega~ eta(Omega~ (tau - H x))``."""
    a = tail_arguments(inst, x)
    return -inst.h.T @ (inst.d * eta(a))
