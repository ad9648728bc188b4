"""Supervised training of the unfolded network.

Loss is the squared error ``||x - x_hat||^2`` averaged over a batch.
Gradients are derived by hand (reverse mode through every layer) and the
parameters are updated with ADAM under a staircase exponential decay of
the learning rate.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, TrainingError
from .likelihood import eta_prime
from .model import GenConfig, InstanceBatch, ProblemInstance, generate_batch, nmse_batch
from .network import (
    PARAM_NAMES,
    ForwardTrace,
    LayerParams,
    UnfoldedNetwork,
    forward_batch,
    predict,
    save_network,
)

log = logging.getLogger(__name__)

# keeps the validation stream disjoint from the training stream by default
VAL_SEED_OFFSET = 1_000_003


@dataclass
class TrainConfig:
    batch_size: int = 500
    epochs: int = 2000
    batches_per_epoch: int = 1
    lr0: float = 1e-3
    decay_rate: float = 0.97
    decay_every: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: Optional[float] = None
    eval_every: int = 10
    val_size: int = 2000
    val_seed: Optional[int] = None
    seed: int = 0
    dump_path: Optional[str] = None

    def __post_init__(self):
        if self.batch_size < 1 or self.batches_per_epoch < 1:
            raise ConfigError("batch_size and batches_per_epoch must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 < self.decay_rate <= 1:
            raise ConfigError(f"decay_rate must be in (0, 1], got {self.decay_rate}")
        if self.decay_every < 1 or self.eval_every < 1:
            raise ConfigError("decay_every and eval_every must be >= 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("ADAM betas must lie in [0, 1)")
        if not self.adam_eps > 0 or not self.lr0 > 0:
            raise ConfigError("lr0 and adam_eps must be positive")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive when set")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.decay_rate ** (epoch // self.decay_every)

    def resolved_val_seed(self) -> int:
        return self.seed + VAL_SEED_OFFSET if self.val_seed is None else self.val_seed


@dataclass
class TrainerState:
    m: List[LayerParams]
    v: List[LayerParams]
    t: int = 0
    lr: float = 1e-3
    best_val: float = math.inf
    best_epoch: int = -1
    best_net: Optional[UnfoldedNetwork] = None

    @classmethod
    def for_network(cls, net: UnfoldedNetwork, lr: float) -> "TrainerState":
        return cls(
            m=[LayerParams.zeros_like(l) for l in net.layers],
            v=[LayerParams.zeros_like(l) for l in net.layers],
            lr=lr,
        )


@dataclass
class LossReport:
    epoch: int
    loss: float
    val_nmse: float
    lr: float


def ls_loss(x_true, x_hat) -> float:
    """Squared Euclidean distance between the true and estimated signal."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise DimensionError(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    diff = x_true - x_hat
    return float(np.sum(diff * diff))


def batch_loss(x_true, x_hat) -> float:
    """Mean of :func:`ls_loss` over the rows of a batch."""
    diff = np.asarray(x_true) - np.asarray(x_hat)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def backward_batch(net: UnfoldedNetwork, trace: ForwardTrace, x_true) -> List[LayerParams]:
    """Gradient of the batch-mean squared loss with respect to every layer parameter."""
    if trace is None or len(trace) != net.k_layers:
        raise ValueError("backward needs the trace from forward(..., keep_trace=True)")
    x_true = np.atleast_2d(x_true)
    a, d, h = trace.a, trace.d, trace.h
    n = net.dims.n
    nb = x_true.shape[0]

    grads = [None] * net.k_layers
    gx = (2.0 / nb) * (trace.x_next[-1] - x_true)
    for k in range(net.k_layers - 1, -1, -1):
        layer = net.layers[k]
        x_in = trace.x_in(k)
        z, p, t, x_out = trace.z[k], trace.p[k], trace.t[k], trace.x_next[k]

        # ReLU subgradient: 0 wherever the output was clipped (including exactly 0)
        gu = gx * (x_out > 0)
        cat = np.hstack([x_in, t])
        gw3 = gu.T @ cat
        gb2 = gu.sum(axis=0)
        gcat = gu @ layer.w3
        gx_in = gcat[:, :n]
        gt = gcat[:, n:]

        gp = (gt @ h.T) * d
        gz = gp * eta_prime(z, p)
        hx = d * (x_in @ h.T)
        gw1 = gz.T @ a
        gw2 = -(gz.T @ hx)
        gb1 = gz.sum(axis=0)
        ghx = -(gz @ layer.w2)
        gx_in = gx_in + (ghx * d) @ h

        grads[k] = LayerParams(gw1, gw2, gw3, gb1, gb2)
        gx = gx_in
    return grads


def backward(net: UnfoldedNetwork, inst: ProblemInstance, trace: ForwardTrace, x_true=None) -> List[LayerParams]:
    """Single-instance gradients of ``ls_loss(x_true, forward(net, inst))``."""
    if x_true is None:
        x_true = inst.x_true
    return backward_batch(net, trace, np.asarray(x_true, dtype=float)[None, :])


def global_norm(grads: List[LayerParams]) -> float:
    return math.sqrt(sum(float(np.sum(getattr(g, p) ** 2)) for g in grads for p in PARAM_NAMES))


def adam_step(state: TrainerState, net: UnfoldedNetwork, grads: List[LayerParams], cfg: TrainConfig = None) -> None:
    """One ADAM update of every parameter in ``net``, in place."""
    cfg = cfg or TrainConfig()
    if len(grads) != net.k_layers or len(state.m) != net.k_layers:
        raise DimensionError("gradient / state layer count does not match the network")
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for layer, g, m, v in zip(net.layers, grads, state.m, state.v):
        for name in PARAM_NAMES:
            theta, gi = getattr(layer, name), getattr(g, name)
            mi, vi = getattr(m, name), getattr(v, name)
            if gi.shape != theta.shape:
                raise DimensionError(f"gradient for {name} has shape {gi.shape}, expected {theta.shape}")
            mi *= b1
            mi += (1.0 - b1) * gi
            vi *= b2
            vi += (1.0 - b2) * gi * gi
            theta -= state.lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def validation_batch(gen_cfg: GenConfig, h_fixed, cfg: TrainConfig) -> InstanceBatch:
    return generate_batch(gen_cfg, h_fixed, cfg.val_size, rng=np.random.default_rng(cfg.resolved_val_seed()))


def evaluate(net: UnfoldedNetwork, batch: InstanceBatch) -> float:
    """Mean NMSE of the network over a batch."""
    return float(np.mean(nmse_batch(batch.x_true, predict(net, batch))))


def train(net: UnfoldedNetwork, gen_cfg: GenConfig, cfg: TrainConfig, h_fixed, progress=None):
    """Train ``net`` on freshly sampled batches; return ``(best_net, reports)``.

    The input network is not modified. ``best_net`` is the snapshot with the
    lowest validation NMSE seen over the evaluated epochs (the initial
    network counts as epoch 0). With ``epochs == 0`` the result is an
    unchanged copy and no reports.
    """
    h_fixed = np.asarray(h_fixed, dtype=float)
    if h_fixed.shape != (net.dims.m, net.dims.n):
        raise DimensionError(f"h_fixed has shape {h_fixed.shape}, network expects {(net.dims.m, net.dims.n)}")
    if cfg.epochs == 0:
        return net.copy(), []

    work = net.copy()
    state = TrainerState.for_network(work, cfg.lr0)
    rng = np.random.default_rng(cfg.seed)
    val = validation_batch(gen_cfg, h_fixed, cfg)

    state.best_val = evaluate(work, val)
    state.best_epoch = 0
    state.best_net = work.copy()
    reports: List[LossReport] = []

    for epoch in range(1, cfg.epochs + 1):
        state.lr = cfg.lr_at(epoch)
        losses = []
        for _ in range(cfg.batches_per_epoch):
            batch = generate_batch(gen_cfg, h_fixed, cfg.batch_size, rng=rng)
            try:
                x_hat, trace = forward_batch(work, batch.h, batch.d, batch.tau, keep_trace=True)
            except NumericError as exc:
                _diverged(epoch, state, work, cfg, str(exc))
            # overflow here is caught by the finiteness check just below
            with np.errstate(over="ignore", invalid="ignore"):
                loss = batch_loss(batch.x_true, x_hat)
                grads = backward_batch(work, trace, batch.x_true)
                gnorm = global_norm(grads)
            if not (math.isfinite(loss) and math.isfinite(gnorm)):
                _diverged(epoch, state, work, cfg, f"non-finite loss {loss}")
            if cfg.grad_clip is not None and gnorm > cfg.grad_clip:
                scale = cfg.grad_clip / gnorm
                for g in grads:
                    for p in PARAM_NAMES:
                        getattr(g, p)[...] *= scale
            adam_step(state, work, grads, cfg)
            losses.append(loss)

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            try:
                val_nmse = evaluate(work, val)
            except NumericError as exc:
                _diverged(epoch, state, work, cfg, str(exc))
            if val_nmse < state.best_val:
                state.best_val = val_nmse
                state.best_epoch = epoch
                state.best_net = work.copy()
            rep = LossReport(epoch, float(np.mean(losses)), val_nmse, state.lr)
            reports.append(rep)
            log.debug("epoch %d loss %.6g val_nmse %.6g lr %.3g", epoch, rep.loss, val_nmse, state.lr)
            if progress is not None:
                progress(rep)
    return state.best_net, reports


def _diverged(epoch, state, net, cfg, why):
    if cfg.dump_path:
        save_network(net, cfg.dump_path)
        log.error("training diverged at epoch %d; current weights dumped to %s", epoch, cfg.dump_path)
    raise TrainingError(f"training diverged at epoch {epoch}: {why}", epoch=epoch, state=state)


def write_loss_csv(reports: List[LossReport], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["epoch", "loss", "val_nmse", "lr"])
    for rep in reports:
        writer.writerow([rep.epoch, repr(rep.loss), repr(rep.val_nmse), repr(rep.lr)])
