"""Fixed-budget gradient ascent on the one-bit log-likelihood."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .likelihood import eta, grad_log_likelihood, log_likelihood
from .model import ProblemInstance


@dataclass
class GdConfig:
    """Gradient ascent settings.

    ``step_schedule``, when given, maps the iteration index k (0-based) to the
    step size for that iteration and overrides ``step``.
    """

    step: float = 0.01
    max_iters: int = 90
    x0: Optional[np.ndarray] = None
    record_trajectory: bool = False
    step_schedule: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if int(self.max_iters) < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class GdResult:
    x_hat: np.ndarray
    iters_run: int
    grad_norm_final: float
    grad_evals: int
    ll_trajectory: Optional[np.ndarray] = None
    x_trajectory: Optional[np.ndarray] = None


def gd_recover(inst: ProblemInstance, cfg: GdConfig = None) -> GdResult:
    """Run exactly ``cfg.max_iters`` updates ``x <- x + step * grad L(x)``.

    No early stopping: the iteration count is the complexity budget.
    ``grad_norm_final`` is the gradient norm at the last evaluated iterate
    (the one the final update was computed from), so it costs no extra
    gradient evaluation.
    """
    cfg = cfg or GdConfig()
    n = inst.h.shape[1]
    x = np.zeros(n) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    if x.shape != (n,):
        raise ConfigError(f"x0 has shape {x.shape}, expected ({n},)")

    lls = [log_likelihood(inst, x)] if cfg.record_trajectory else None
    xs = [x.copy()] if cfg.record_trajectory else None
    g = np.zeros(n)
    evals = 0
    for k in range(int(cfg.max_iters)):
        step = cfg.step if cfg.step_schedule is None else cfg.step_schedule(k)
        with np.errstate(over="ignore", invalid="ignore"):
            g = grad_log_likelihood(inst, x)
            x = x + step * g
        evals += 1
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"gradient ascent diverged at iteration {k + 1}", iteration=k + 1)
        if cfg.record_trajectory:
            lls.append(log_likelihood(inst, x))
            xs.append(x.copy())

    return GdResult(
        x_hat=x,
        iters_run=int(cfg.max_iters),
        grad_norm_final=float(np.linalg.norm(g)),
        grad_evals=evals,
        ll_trajectory=None if lls is None else np.array(lls),
        x_trajectory=None if xs is None else np.array(xs),
    )


def stationarity_residual(inst: ProblemInstance, x) -> float:
    """Euclidean norm of the log-likelihood gradient at ``x``; zero exactly at stationary points."""
    return float(np.linalg.norm(grad_log_likelihood(inst, x)))


def gd_recover_batch(batch, step: float, iters: int) -> np.ndarray:
    """Vectorized fixed-step ascent over an :class:`InstanceBatch`, all starting from zero.

    Row b equals ``gd_recover(batch[b], GdConfig(step, iters)).x_hat`` up to
    floating-point reassociation.
    """
    h = batch.h
    d = batch.d
    x = np.zeros((len(batch), h.shape[1]))
    for k in range(int(iters)):
        a = d * (batch.tau - x @ h.T)
        x = x - step * ((d * eta(a)) @ h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"gradient ascent diverged at iteration {k + 1}", iteration=k + 1)
    return x
