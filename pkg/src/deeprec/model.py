"""Measurement model, synthetic data generation and the NMSE metric.

The acquisition model is ``y = H x + n`` with independent Gaussian noise
``n_i ~ N(0, sigma2_i)``, followed by one-bit quantization against
per-measurement thresholds: ``r = sign(y - tau)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError, DimensionError, MetricError


@dataclass(frozen=True)
class ProblemDims:
    m: int
    n: int

    def __post_init__(self):
        if int(self.m) < 1 or int(self.n) < 1:
            raise ConfigError(f"dims must be positive, got m={self.m}, n={self.n}")


@dataclass
class ProblemInstance:
    """One recovery problem: sensing matrix, noise variances, thresholds, truth, signs."""

    h: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    x_true: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        self.x_true = np.asarray(self.x_true, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.h.ndim != 2:
            raise DimensionError(f"h must be 2-D, got shape {self.h.shape}")
        m, n = self.h.shape
        for name, size in (("sigma2", m), ("tau", m), ("r", m), ("x_true", n)):
            arr = getattr(self, name)
            if arr.shape != (size,):
                raise DimensionError(f"{name} has shape {arr.shape}, expected ({size},)")
        if np.any(self.sigma2 <= 0):
            raise ConfigError("every noise variance must be positive")
        if not np.all(np.abs(self.r) == 1.0):
            raise ConfigError("one-bit observations must be -1 or +1")

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(*self.h.shape)

    @property
    def d(self) -> np.ndarray:
        """Diagonal of the semi-whitened one-bit operator, ``r_i / sigma_i``."""
        return self.r / np.sqrt(self.sigma2)


@dataclass
class InstanceBatch:
    """A batch of instances that share one sensing matrix.

    Per-instance arrays are stacked along axis 0.
    """

    h: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    x_true: np.ndarray
    r: np.ndarray

    def __len__(self):
        return self.tau.shape[0]

    @property
    def d(self) -> np.ndarray:
        return self.r / np.sqrt(self.sigma2)

    def __getitem__(self, i) -> ProblemInstance:
        return ProblemInstance(self.h, self.sigma2[i], self.tau[i], self.x_true[i], self.r[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def digest(self) -> str:
        """Stable hash of the batch contents, used to prove two methods saw the same data."""
        import hashlib

        sha = hashlib.sha256()
        for arr in (self.h, self.sigma2, self.tau, self.x_true, self.r):
            sha.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return sha.hexdigest()


@dataclass(frozen=True)
class GenConfig:
    """Distributions for synthetic data.

    Defaults: x ~ U(0, 1) (nonnegative because the network ends in a ReLU),
    tau ~ U(-1, 4), per-measurement noise variance ~ U(0.1, 1).
    """

    dims: ProblemDims = field(default_factory=lambda: ProblemDims(40, 3))
    x_low: float = 0.0
    x_high: float = 1.0
    tau_low: float = -1.0
    tau_high: float = 4.0
    noise_low: float = 0.1
    noise_high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.x_low < self.x_high:
            raise ConfigError(f"need x_low < x_high, got {self.x_low}, {self.x_high}")
        if self.x_low < 0:
            raise ConfigError("x_low must be nonnegative (network output is ReLU-clipped)")
        if not self.tau_low < self.tau_high:
            raise ConfigError(f"need tau_low < tau_high, got {self.tau_low}, {self.tau_high}")
        # equal noise bounds are accepted to allow fixed-variance fixtures
        if not 0 < self.noise_low <= self.noise_high:
            raise ConfigError(
                f"need 0 < noise_low <= noise_high, got {self.noise_low}, {self.noise_high}"
            )

    def to_dict(self) -> dict:
        out = {"m": self.dims.m, "n": self.dims.n}
        for f in fields(self):
            if f.name != "dims":
                out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        kw = {}
        for f in fields(cls):
            if f.name in d and f.name != "dims":
                kw[f.name] = int(d[f.name]) if f.name == "seed" else float(d[f.name])
        dims = ProblemDims(int(d.get("m", 40)), int(d.get("n", 3)))
        return cls(dims=dims, **kw)

    def with_seed(self, seed: int) -> "GenConfig":
        return replace(self, seed=int(seed))


def quantize(y, tau) -> np.ndarray:
    """One-bit quantizer ``sign(y - tau)`` with ties mapped to +1."""
    y = np.asarray(y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if y.shape != tau.shape:
        raise DimensionError(f"y has shape {y.shape} but tau has shape {tau.shape}")
    return np.where(y - tau >= 0, 1.0, -1.0)


def sensing_matrix(dims: ProblemDims, seed) -> np.ndarray:
    """Standard normal ``m x n`` sensing matrix."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dims.m, dims.n))


def _check_h(h_fixed, dims):
    h = np.asarray(h_fixed, dtype=float)
    if h.shape != (dims.m, dims.n):
        raise DimensionError(f"h_fixed has shape {h.shape}, expected ({dims.m}, {dims.n})")
    return h


def generate_instance(cfg: GenConfig, h_fixed=None, rng=None) -> ProblemInstance:
    """Draw one instance. Pure in ``(cfg, h_fixed)`` unless an explicit ``rng`` is passed."""
    cfg.validate()
    m, n = cfg.dims.m, cfg.dims.n
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(cfg.x_low, cfg.x_high, size=n)
    if h_fixed is None:
        h = rng.standard_normal((m, n))
    else:
        h = _check_h(h_fixed, cfg.dims)
    tau = rng.uniform(cfg.tau_low, cfg.tau_high, size=m)
    sigma2 = rng.uniform(cfg.noise_low, cfg.noise_high, size=m)
    noise = rng.standard_normal(m) * np.sqrt(sigma2)
    y = h @ x + noise
    return ProblemInstance(h=h, sigma2=sigma2, tau=tau, x_true=x, r=quantize(y, tau))


def generate_batch(cfg: GenConfig, h_fixed, size: int, rng=None) -> InstanceBatch:
    """Draw ``size`` instances sharing the sensing matrix ``h_fixed``.

    x, tau, noise variances and noise are fresh for every instance.
    """
    cfg.validate()
    m, n = cfg.dims.m, cfg.dims.n
    h = _check_h(h_fixed, cfg.dims)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(cfg.x_low, cfg.x_high, size=(size, n))
    tau = rng.uniform(cfg.tau_low, cfg.tau_high, size=(size, m))
    sigma2 = rng.uniform(cfg.noise_low, cfg.noise_high, size=(size, m))
    noise = rng.standard_normal((size, m)) * np.sqrt(sigma2)
    y = x @ h.T + noise
    return InstanceBatch(h=h, sigma2=sigma2, tau=tau, x_true=x, r=quantize(y, tau))


def nmse(x_true, x_hat) -> float:
    """Normalized squared error ``||x - x_hat||^2 / ||x||^2``."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise DimensionError(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    denom = float(np.dot(x_true, x_true))
    if denom == 0.0:
        raise MetricError("NMSE is undefined for a zero true signal")
    diff = x_true - x_hat
    return float(np.dot(diff, diff)) / denom


def nmse_batch(x_true, x_hat) -> np.ndarray:
    """Row-wise NMSE for stacked signals."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    denom = np.einsum("ij,ij->i", x_true, x_true)
    if np.any(denom == 0):
        raise MetricError("NMSE is undefined for a zero true signal")
    diff = x_true - x_hat
    return np.einsum("ij,ij->i", diff, diff) / denom
