"""Command line: train / sweep / gradcheck / params / bench.

Precedence for train and sweep settings: built-in defaults, then the
--config file, then explicit flags. Flags always win.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (ExperimentConfig, SweepSpec, cmd_bench, cmd_gradcheck,
                      cmd_params, cmd_sweep, cmd_train, load_config_file)

_FLAG_HELP = {
    "variant": "cell variant",
    "activation": "candidate/output squash (gates stay sigmoid)",
    "hidden": "hidden state width n",
    "embed": "embedding width m",
    "seq-len": "sequence length T after pre-pad/pre-truncate",
    "vocab": "vocabulary size including pad/oov rows",
    "eta": "learning rate",
    "forget": "constant forget value for lstm6/lstm_c6, -1 < f < 1",
    "epochs": "training epochs",
    "batch": "mini-batch size",
    "optimizer": "update rule",
    "loss": "bce (sigmoid) or cce (softmax)",
    "seed": "master seed for data, init, and shuffling",
    "data": "synth:<kind> or tsv:<path>",
    "samples": "synthetic sample count (train+test)",
    "out": "output directory",
}


def _add_config_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--config", default=None, metavar="PATH",
                     help="config file, one key = value per line")
    sub.add_argument("--variant", choices=["srnn", "lstm", "lstm6", "lstm_c6"],
                     default=None, help=_FLAG_HELP["variant"])
    sub.add_argument("--activation", choices=["sigmoid", "tanh", "relu"],
                     default=None, help=_FLAG_HELP["activation"])
    sub.add_argument("--hidden", type=int, default=None, help=_FLAG_HELP["hidden"])
    sub.add_argument("--embed", type=int, default=None, help=_FLAG_HELP["embed"])
    sub.add_argument("--seq-len", type=int, default=None, help=_FLAG_HELP["seq-len"])
    sub.add_argument("--vocab", type=int, default=None, help=_FLAG_HELP["vocab"])
    sub.add_argument("--eta", type=float, default=None, help=_FLAG_HELP["eta"])
    sub.add_argument("--forget", type=float, default=None, help=_FLAG_HELP["forget"])
    sub.add_argument("--epochs", type=int, default=None, help=_FLAG_HELP["epochs"])
    sub.add_argument("--batch", type=int, default=None, help=_FLAG_HELP["batch"])
    sub.add_argument("--optimizer", choices=["adam", "rmsprop", "sgd"],
                     default=None, help=_FLAG_HELP["optimizer"])
    sub.add_argument("--loss", choices=["bce", "cce"], default=None,
                     help=_FLAG_HELP["loss"])
    sub.add_argument("--seed", type=int, default=None, help=_FLAG_HELP["seed"])
    sub.add_argument("--bidirectional", action="store_true", default=None,
                     help="train a forward/backward cell pair, concatenated readout")
    sub.add_argument("--data", default=None, help=_FLAG_HELP["data"])
    sub.add_argument("--samples", type=int, default=None, help=_FLAG_HELP["samples"])
    sub.add_argument("--out", default=None, help=_FLAG_HELP["out"])


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        values.update(load_config_file(args.config))
    for key in ExperimentConfig.__dataclass_fields__:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slimrnn",
        description="Reduced-gate recurrent text classification engine")
    subs = parser.add_subparsers(dest="command", required=True)

    p_train = subs.add_parser("train", help="train one model, write metrics + checkpoint")
    _add_config_flags(p_train)

    p_sweep = subs.add_parser("sweep", help="grid of training runs, one summary CSV")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--variants", default=None,
                         help="comma-separated variant list")
    p_sweep.add_argument("--hiddens", default=None,
                         help="comma-separated hidden widths")
    p_sweep.add_argument("--etas", default=None,
                         help="comma-separated learning rates")
    p_sweep.add_argument("--forgets", default=None,
                         help="comma-separated forget constants")
    p_sweep.add_argument("--workers", type=int, default=1,
                         help="parallel cell processes")

    p_grad = subs.add_parser("gradcheck",
                             help="certify analytic gradients against finite differences")
    p_grad.add_argument("--embed", type=int, default=4, help="input width cap (<= 8)")
    p_grad.add_argument("--hidden", type=int, default=4, help="hidden width cap (<= 8)")
    p_grad.add_argument("--seq-len", type=int, default=3, help="sequence cap (<= 5)")
    p_grad.add_argument("--batch", type=int, default=2, help="batch cap (<= 8)")
    p_grad.add_argument("--seeds", type=int, default=3, help="random nets per cell")

    p_params = subs.add_parser("params", help="parameter and per-step MAC counts")
    p_params.add_argument("variant", choices=["srnn", "lstm", "lstm6", "lstm_c6"])
    p_params.add_argument("m", type=int, help="input width")
    p_params.add_argument("n", type=int, help="hidden width")
    p_params.add_argument("--bidirectional", action="store_true")
    p_params.add_argument("--json-lines", action="store_true",
                          help="emit one JSON object per line")

    p_bench = subs.add_parser("bench", help="time one forward+backward pass")
    p_bench.add_argument("variant", choices=["srnn", "lstm", "lstm6", "lstm_c6"])
    p_bench.add_argument("--embed", type=int, default=32)
    p_bench.add_argument("--hidden", type=int, default=100)
    p_bench.add_argument("--seq-len", type=int, default=500)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--json-lines", action="store_true")

    args = parser.parse_args(argv)

    if args.command == "train":
        result = cmd_train(build_config(args), log=print)
        print(f"metrics: {result['csv']}")
        print(f"checkpoint: {result['checkpoint']}")
        return 0

    if args.command == "sweep":
        spec = SweepSpec(base=build_config(args), workers=args.workers)
        if args.variants:
            spec.variants = args.variants.split(",")
        if args.hiddens:
            spec.hiddens = [int(v) for v in args.hiddens.split(",")]
        if args.etas:
            spec.etas = [float(v) for v in args.etas.split(",")]
        if args.forgets:
            spec.forgets = [float(v) for v in args.forgets.split(",")]
        result = cmd_sweep(spec)
        print(f"summary: {result['summary']}")
        return 0

    if args.command == "gradcheck":
        report, ok = cmd_gradcheck(m=args.embed, n=args.hidden,
                                   seq_len=args.seq_len, seeds=args.seeds,
                                   batch=args.batch)
        for row in report:
            print(f"{row['variant']:8s} {row['activation']:8s} "
                  f"{row['group']:6s} {row['max_rel_err']:.3e} {row['status']}")
        print("gradcheck: " + ("PASS" if ok else "FAIL"))
        return 0 if ok else 1

    if args.command == "params":
        info = cmd_params(args.variant, args.m, args.n, args.bidirectional)
        if args.json_lines:
            print(json.dumps(info))
        else:
            print(f"{info['variant']} m={info['m']} n={info['n']}"
                  + (" bidirectional" if info["bidirectional"] else "")
                  + f": params={info['params']} macs={info['macs']}")
        return 0

    if args.command == "bench":
        info = cmd_bench(args.variant, m=args.embed, n=args.hidden,
                         seq_len=args.seq_len, reps=args.reps)
        if args.json_lines:
            print(json.dumps(info))
        else:
            print(f"{info['variant']} m={info['m']} n={info['n']} T={info['seq_len']}: "
                  f"median {info['median_seconds']:.4f}s "
                  f"({info['per_step_seconds'] * 1e6:.1f}us/step), "
                  f"macs {info['macs']}, lstm/this mac ratio "
                  f"{info['mac_ratio_vs_lstm']:.2f}")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
