"""Seeded experiment harness: NMSE versus depth, DeepRec versus gradient ascent, and runtime.

Every experiment is a pure function of its :class:`ExperimentConfig`.
For each sweep point the sensing matrix, the test instances and the
training stream are drawn from seeds derived from ``cfg.seed`` and the
sweep value, so reruns are byte-identical (runtime columns excepted).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from .config import ExperimentConfig
from .errors import WeightFormatError
from .gd import GdConfig, gd_recover, gd_recover_batch
from .model import InstanceBatch, ProblemDims, generate_batch, nmse_batch, sensing_matrix
from .network import UnfoldedNetwork, forward, init_gd_equivalent, init_random, load_network, predict, save_network
from .trainer import train

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "experiment",
    "sweep_var",
    "sweep_value",
    "method",
    "mean_nmse",
    "trials",
    "median_runtime_s",
    "fingerprint",
)


@dataclass
class ExperimentReport:
    experiment: str
    sweep_var: str
    sweep_value: int
    method: str
    mean_nmse: float
    trials: int
    median_runtime_s: Optional[float]
    fingerprint: str

    def row(self) -> list:
        rt = "" if self.median_runtime_s is None else repr(float(self.median_runtime_s))
        return [
            self.experiment,
            self.sweep_var,
            self.sweep_value,
            self.method,
            repr(float(self.mean_nmse)),
            self.trials,
            rt,
            self.fingerprint,
        ]


@dataclass
class ExperimentResult:
    experiment: str
    reports: List[ExperimentReport]
    config_fingerprint: str
    notes: List[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rep in self.reports:
            writer.writerow(rep.row())
        for note in self.notes:
            buf.write(f"# {note}\n")
        buf.write(f"# config-fingerprint {self.config_fingerprint}\n")
        return buf.getvalue()

    def to_plain(self) -> str:
        lines = [f"{self.experiment}  (config {self.config_fingerprint})"]
        lines.append(f"{'sweep':>12} {'method':>8} {'mean_nmse':>12} {'trials':>7} {'median_s':>12}")
        for r in self.reports:
            rt = "-" if r.median_runtime_s is None else f"{r.median_runtime_s:.3e}"
            lines.append(
                f"{r.sweep_var + '=' + str(r.sweep_value):>12} {r.method:>8} {r.mean_nmse:12.6f} {r.trials:7d} {rt:>12}"
            )
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def write(self, path, fmt: str = "csv") -> None:
        Path(path).write_text(self.to_csv() if fmt == "csv" else self.to_plain())


def config_fingerprint(cfg: ExperimentConfig, experiment: str) -> str:
    # weights_dir is a location, not an input that changes results
    mapping = {k: v for k, v in cfg.to_mapping().items() if k != "weights_dir"}
    blob = json.dumps({"experiment": experiment, "config": mapping}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def point_fingerprint(config_fp: str, sweep_value: int, batch: InstanceBatch) -> str:
    """Hash of the inputs to one sweep point. Methods compared on the same instances share it."""
    blob = f"{config_fp}:{sweep_value}:{batch.digest()}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def problem_setup(cfg: ExperimentConfig, m: int):
    """Fixed sensing matrix and seeded test batch for measurement count ``m``."""
    gen = cfg.gen_config(m)
    h = sensing_matrix(gen.dims, cfg.derived_seed("h", m))
    test = generate_batch(gen, h, cfg.test_trials, rng=np.random.default_rng(cfg.derived_seed("test", m)))
    return gen, h, test


def weight_path(cfg: ExperimentConfig, m: int, k: int) -> Optional[Path]:
    if cfg.weights_dir is None:
        return None
    return Path(cfg.weights_dir) / f"deeprec_m{m}_n{cfg.n}_k{k}.txt"


def obtain_network(cfg: ExperimentConfig, m: int, k: int, h, progress: Callable = None) -> UnfoldedNetwork:
    """Load the trained network for ``(m, k)`` from ``weights_dir`` if present, else train it.

    A freshly trained network is saved when ``weights_dir`` is set.
    """
    path = weight_path(cfg, m, k)
    if path is not None and path.exists():
        net = load_network(path)
        if net.dims != ProblemDims(m, cfg.n) or net.k_layers != k:
            raise WeightFormatError(
                f"{path}: holds m={net.dims.m} n={net.dims.n} K={net.k_layers}, expected m={m} n={cfg.n} K={k}"
            )
        return net
    gen = cfg.gen_config(m)
    net = init_random(gen.dims, k, cfg.delta, cfg.derived_seed("init", m, k), cfg.perturb_scale)
    tcfg = cfg.train_config(cfg.derived_seed("train", m, k))
    log.info("training K=%d m=%d for %d epochs", k, m, tcfg.epochs)
    net, _ = train(net, gen, tcfg, h, progress=progress)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_network(net, path)
    return net


def mean_nmse(batch: InstanceBatch, x_hat) -> float:
    return float(np.mean(nmse_batch(batch.x_true, x_hat)))


def exp_layers(cfg: ExperimentConfig, progress: Callable = None) -> ExperimentResult:
    """Mean test NMSE of a trained network for each depth in ``cfg.k_values`` at fixed ``cfg.m``."""
    exp = "layers"
    cfp = config_fingerprint(cfg, exp)
    _, h, test = problem_setup(cfg, cfg.m)
    reports = []
    for k in cfg.k_values:
        net = obtain_network(cfg, cfg.m, k, h, progress)
        reports.append(
            ExperimentReport(
                exp, "K", k, "deeprec", mean_nmse(test, predict(net, test)), len(test), None,
                point_fingerprint(cfp, k, test),
            )
        )
    return ExperimentResult(exp, reports, cfp, [])


def exp_vs_gd(cfg: ExperimentConfig, progress: Callable = None) -> ExperimentResult:
    """Trained network versus fixed-step gradient ascent with the same iteration budget, per M."""
    exp = "vs_gd"
    cfp = config_fingerprint(cfg, exp)
    k = cfg.k_layers
    reports = []
    for m in cfg.m_values:
        _, h, test = problem_setup(cfg, m)
        fp = point_fingerprint(cfp, m, test)
        net = obtain_network(cfg, m, k, h, progress)
        nm_net = mean_nmse(test, predict(net, test))
        nm_gd = mean_nmse(test, gd_recover_batch(test, cfg.delta, k))
        reports.append(ExperimentReport(exp, "M", m, "deeprec", nm_net, len(test), None, fp))
        reports.append(ExperimentReport(exp, "M", m, "gd", nm_gd, len(test), None, fp))
    return ExperimentResult(exp, reports, cfp, [f"K={k} delta={cfg.delta!r}"])


def _median_time(fn, items, warmup: int) -> float:
    for item in items[:warmup]:
        fn(item)
    times = []
    for item in items:
        t0 = time.perf_counter()
        fn(item)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def exp_runtime(cfg: ExperimentConfig, progress: Callable = None) -> ExperimentResult:
    """Median wall-clock per recovery for gradient ascent and the network, per M.

    Both methods run sequentially on the same ``runtime_runs`` instances;
    warm-up calls are excluded. Only recovery is timed. Weights come from
    ``weights_dir`` when available, otherwise the GD-equivalent
    initialization is used (the cost of a forward pass does not depend on
    the weight values).
    """
    exp = "runtime"
    cfp = config_fingerprint(cfg, exp)
    k = cfg.k_layers
    tick = time.get_clock_info("perf_counter").resolution
    gd_cfg = GdConfig(step=cfg.delta, max_iters=k)
    reports, notes = [], []
    for m in cfg.m_values:
        _, h, test = problem_setup(cfg, m)
        runs = min(cfg.runtime_runs, len(test))
        timed = InstanceBatch(test.h, test.sigma2[:runs], test.tau[:runs], test.x_true[:runs], test.r[:runs])
        insts = list(timed)
        path = weight_path(cfg, m, k)
        if path is not None and path.exists():
            net = obtain_network(cfg, m, k, h)
        else:
            net = init_gd_equivalent(ProblemDims(m, cfg.n), k, cfg.delta)
        fp = point_fingerprint(cfp, m, timed)

        t_gd = _median_time(lambda inst: gd_recover(inst, gd_cfg), insts, cfg.warmup_runs)
        t_net = _median_time(lambda inst: forward(net, inst), insts, cfg.warmup_runs)
        x_gd = np.array([gd_recover(inst, gd_cfg).x_hat for inst in insts])
        x_net = np.array([forward(net, inst)[0] for inst in insts])
        reports.append(ExperimentReport(exp, "M", m, "deeprec", mean_nmse(timed, x_net), runs, t_net, fp))
        reports.append(ExperimentReport(exp, "M", m, "gd", mean_nmse(timed, x_gd), runs, t_gd, fp))
        notes.append(f"M={m} runtime ratio gd/deeprec = {t_gd / t_net:.3f}")
        for name, t in (("gd", t_gd), ("deeprec", t_net)):
            if t < 100 * tick:
                msg = f"warning: M={m} {name} median {t:.3e}s is below 100 timer ticks ({tick:.1e}s)"
                notes.append(msg)
                log.warning(msg)
    return ExperimentResult(exp, reports, cfp, notes)


EXPERIMENTS = {
    "exp-layers": exp_layers,
    "exp-vs-gd": exp_vs_gd,
    "exp-runtime": exp_runtime,
}
