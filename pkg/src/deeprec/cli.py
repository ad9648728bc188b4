"""Command-line entry point: ``deeprec <command> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric or
file-format failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .config import load_config
from .errors import ConfigError, DeepRecError, InstanceFileError
from .gd import GdConfig, gd_recover, gd_recover_batch
from .model import ProblemInstance, generate_instance, nmse, sensing_matrix
from .network import forward, init_random, load_network, predict, save_network
from .trainer import train, write_loss_csv

log = logging.getLogger("deeprec")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "plain"), default="plain")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deeprec", description="One-bit signal recovery")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw one problem instance and write it as JSON")
    _common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--fixed-h", action="store_true", help="use the config's fixed sensing matrix")

    p = sub.add_parser("train", help="train a network and write its weight file")
    _common(p)
    p.add_argument("--weights", required=True, help="where to write the trained weights")
    p.add_argument("--layers", type=int, help="number of layers K")

    p = sub.add_parser("eval", help="mean NMSE of a weight file (and of GD) on the seeded test set")
    _common(p)
    p.add_argument("--weights", required=True)

    p = sub.add_parser("recover", help="recover x from one instance")
    _common(p)
    p.add_argument("--instance", help="instance JSON written by 'generate'")
    p.add_argument("--m", type=int, help="generate an instance with m measurements instead")
    p.add_argument("--method", choices=("gd", "net"), default="gd")
    p.add_argument("--weights", help="weight file (method net)")
    p.add_argument("--iters", type=int, help="gradient ascent iterations (method gd)")
    p.add_argument("--step", type=float, help="gradient ascent step (method gd)")

    for name, help_ in (
        ("exp-layers", "NMSE versus number of layers"),
        ("exp-vs-gd", "DeepRec versus gradient ascent across M"),
        ("exp-runtime", "runtime of both methods across M"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--weights-dir", help="load/save trained networks here")
    return parser


def _config(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    for attr, key in (("m", "m"), ("n", "n"), ("layers", "k_layers"), ("weights_dir", "weights_dir")):
        val = getattr(args, attr, None)
        if val is not None:
            overrides.append(f"{key}={val}")
    return load_config(args.config, overrides)


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def instance_to_json(inst: ProblemInstance) -> str:
    return json.dumps({k: getattr(inst, k).tolist() for k in ("h", "sigma2", "tau", "x_true", "r")})


def instance_from_json(text: str):
    """Returns ``(instance, truth_known)``; a missing ``x_true`` is replaced by zeros."""
    try:
        d = json.loads(text)
        h = np.asarray(d["h"], dtype=float)
        truth = "x_true" in d
        x = d["x_true"] if truth else np.zeros(h.shape[1])
        return ProblemInstance(h, d["sigma2"], d["tau"], x, d["r"]), truth
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise InstanceFileError(f"bad instance file: {exc}") from None


def cmd_generate(args, parser):
    cfg = _config(args)
    gen = cfg.gen_config()
    h = sensing_matrix(gen.dims, cfg.derived_seed("h", gen.dims.m)) if args.fixed_h else None
    inst = generate_instance(gen, h)
    _emit(args, instance_to_json(inst) + "\n")
    return 0


def cmd_train(args, parser):
    cfg = _config(args)
    gen = cfg.gen_config()
    h = sensing_matrix(gen.dims, cfg.derived_seed("h", gen.dims.m))
    net = init_random(gen.dims, cfg.k_layers, cfg.delta, cfg.derived_seed("init", gen.dims.m, cfg.k_layers),
                      cfg.perturb_scale)
    tcfg = cfg.train_config(cfg.derived_seed("train", gen.dims.m, cfg.k_layers))
    progress = None
    if args.verbose:
        progress = lambda r: print(f"epoch {r.epoch} loss {r.loss:.5g} val_nmse {r.val_nmse:.5g} lr {r.lr:.3g}",
                                   file=sys.stderr)
    net, reports = train(net, gen, tcfg, h, progress=progress)
    save_network(net, args.weights)
    buf = io.StringIO()
    write_loss_csv(reports, buf)
    _emit(args, buf.getvalue())
    return 0


def cmd_eval(args, parser):
    cfg = _config(args)
    net = load_network(args.weights)
    cfg = cfg.replace(m=net.dims.m, n=net.dims.n)
    _, _, test = bench.problem_setup(cfg, net.dims.m)
    nm_net = bench.mean_nmse(test, predict(net, test))
    nm_gd = bench.mean_nmse(test, gd_recover_batch(test, cfg.delta, net.k_layers))
    if args.format == "csv":
        _emit(args, f"method,mean_nmse,trials\ndeeprec,{nm_net!r},{len(test)}\ngd,{nm_gd!r},{len(test)}\n")
    else:
        _emit(args, f"deeprec mean NMSE {nm_net:.6g}\ngd      mean NMSE {nm_gd:.6g}\n(trials {len(test)}, K {net.k_layers})\n")
    return 0


def cmd_recover(args, parser):
    if args.instance and args.m is not None:
        parser.error("--instance and --m are mutually exclusive")
    if args.method == "net" and not args.weights:
        parser.error("--method net requires --weights")
    if args.method == "gd" and args.weights:
        parser.error("--weights only applies to --method net")
    if args.method == "net" and (args.iters is not None or args.step is not None):
        parser.error("--iters/--step only apply to --method gd")
    cfg = _config(args)

    if args.instance:
        inst, truth = instance_from_json(Path(args.instance).read_text())
    else:
        inst, truth = generate_instance(cfg.gen_config()), True

    if args.method == "gd":
        gcfg = GdConfig(step=cfg.delta if args.step is None else args.step,
                        max_iters=cfg.k_layers if args.iters is None else args.iters)
        x_hat = gd_recover(inst, gcfg).x_hat
    else:
        net = load_network(args.weights)
        x_hat, _ = forward(net, inst)
    err = nmse(inst.x_true, x_hat) if truth else None

    if args.format == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow([repr(float(v)) for v in x_hat] + ["" if err is None else repr(err)])
        _emit(args, buf.getvalue())
    else:
        text = "x_hat = [" + ", ".join(f"{v:.6g}" for v in x_hat) + "]\n"
        if err is not None:
            text += f"nmse = {err:.6g}\n"
        _emit(args, text)
    return 0


def cmd_experiment(args, parser):
    cfg = _config(args)
    result = bench.EXPERIMENTS[args.command](cfg)
    _emit(args, result.to_csv() if args.format == "csv" else result.to_plain())
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "recover": cmd_recover,
    "exp-layers": cmd_experiment,
    "exp-vs-gd": cmd_experiment,
    "exp-runtime": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except ConfigError as exc:
        print(f"deeprec: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DeepRecError, ArithmeticError, OSError) as exc:
        print(f"deeprec: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
