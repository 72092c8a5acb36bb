"""Command-line interface: ``cappronet <command> [options]``.

Exit codes: 0 success, 1 validation failure (bad config/input, failed
gradient check), 2 runtime or numerical failure.
"""

import argparse
import dataclasses
import json
import os
import sys

from . import bench, gradcheck, serialize, visualize
from .config import dump_config, load_config
from .errors import CapsuleError, DivergenceError, InputError, ParseError, SingularityError
from .train import build_data, compare_heads, evaluate, train

DEFAULT_COMPARE = "capsule:2,capsule:4,capsule:8,group_neuron:2,group_neuron:4,group_neuron:8,linear:1"


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation failures (exit 1), not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _pairs(text, sep=":"):
    out = []
    for item in text.split(","):
        a, _, b = item.strip().partition(sep)
        out.append((a, b))
    return out


def _write_jsonl(path, records):
    with open(path, "a") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _resolved_config(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _prepare_out(args, config):
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.txt"), "w") as f:
        f.write(dump_config(config))


def cmd_train(args):
    config = _resolved_config(args)
    _prepare_out(args, config)
    record = train(config)
    results = os.path.join(args.out, "results.jsonl")
    if os.path.exists(results):
        os.remove(results)
    _write_jsonl(results, record.to_records())
    serialize.save_model(os.path.join(args.out, "model.cpn"), record.model)
    last = record.epochs[-1]
    print(f"{record.label} seed={config.seed}: train_loss={last.train_loss:.6f} "
          f"test_error={record.test_error!r} head_time_fraction={record.head_time_fraction:.3f}")
    return 0


def cmd_eval(args):
    model_dir = os.path.dirname(os.path.abspath(args.model))
    cfg_path = args.config or os.path.join(model_dir, "config.txt")
    config = load_config(cfg_path, args.set or ())
    model = serialize.load_model(args.model)
    data = build_data(config)
    err, acc = evaluate(model, data.x_test, data.y_test)
    out = {"test_error": err, "per_class_accuracy": [None if a != a else float(a) for a in acc]}
    print(json.dumps(out))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w") as f:
            json.dump(out, f, indent=2)
    return 0


def cmd_compare(args):
    config = _resolved_config(args)
    _prepare_out(args, config)
    heads = [(kind, int(c or 1)) for kind, c in _pairs(args.heads)]
    seeds = _int_list(args.seeds)
    rows, runs = compare_heads(config, heads, seeds)
    path = os.path.join(args.out, "compare.jsonl")
    if os.path.exists(path):
        os.remove(path)
    for r in runs:
        _write_jsonl(path, r.to_records())
    _write_jsonl(path, [dict(type="row", **dataclasses.asdict(row)) for row in rows])
    print(f"{'head':<20} {'mean_err':>9} {'std':>8} {'step_ms':>8} {'overhead':>9}")
    for row in rows:
        ov = "-" if row.overhead_vs_linear is None else f"{100 * row.overhead_vs_linear:.1f}%"
        print(f"{row.label:<20} {row.mean_error:9.4f} {row.std_error:8.4f} "
              f"{1e3 * row.mean_step_time:8.3f} {ov:>9}")
    return 0


def cmd_gradcheck(args):
    if args.trials < 1:
        raise InputError("trials must be >= 1")
    results = gradcheck.run_all(tuple(_int_list(args.dims)), tuple(_int_list(args.caps)),
                                args.trials, args.seed)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<11} worst_rel_err={r.worst:.3e} at {r.worst_case}")
        ok &= r.passed
    if not ok:
        bad = [r for r in results if not r.passed]
        print("failing (d, c, seed, trial): " + "; ".join(str(r.worst_case) for r in bad))
        raise ValidationFailure("gradient check failed")
    return 0


def cmd_visualize(args):
    model_dir = os.path.dirname(os.path.abspath(args.model))
    config = load_config(args.config or os.path.join(model_dir, "config.txt"), args.set or ())
    model = serialize.load_model(args.model)
    data = build_data(config)
    pairs = [(int(a), int(b)) for a, b in _pairs(args.pairs)] if args.pairs else None
    summary = visualize.export_projections(model, data.x_test, data.y_test, args.out, pairs)
    for l, (own, other) in summary.items():
        print(f"subspace {l}: own-class mean length {own:.4f}, other-class {other:.4f}")
    return 0


def cmd_bench_sigma(args):
    grid = [(int(d), int(c)) for d, c in _pairs(args.grid)]
    rows = bench.bench_sigma(grid, args.steps, args.step_size, args.seed, args.adversarial)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_jsonl(os.path.join(args.out, "bench_sigma.jsonl"),
                     [dict(dataclasses.asdict(r), time_ratio=r.time_ratio) for r in rows])
    print(f"{'d':>5} {'c':>3} {'exact_us':>9} {'hyper_us':>9} {'ratio':>6} {'max_resid':>10} {'eps_fallbacks':>13}")
    for r in rows:
        print(f"{r.dim:5d} {r.capsule_dim:3d} {1e6 * r.exact_time:9.2f} {1e6 * r.hyperpower_time:9.2f} "
              f"{r.time_ratio:6.2f} {r.max_residual:10.2e} {r.eps_fallbacks:13d}")
    return 0


def build_parser():
    p = _Parser(prog="cappronet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(sp, seed=True):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        if seed:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("train", help="train one model")
    config_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a saved model on its test split")
    config_args(sp, seed=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", help="compare heads over several seeds")
    config_args(sp, seed=False)
    sp.add_argument("--heads", default=DEFAULT_COMPARE, help="kind:c list")
    sp.add_argument("--seeds", default="0,1,2,3,4")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--dims", default="8,64")
    sp.add_argument("--caps", default="1,2,4,8")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("visualize", help="export 2-D capsule coordinates (c = 2 models)")
    config_args(sp, seed=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--pairs", help="subspace:other_class list")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_visualize)

    sp = sub.add_parser("bench-sigma", help="exact vs hyper-power sigma maintenance")
    sp.add_argument("--grid", default="64:1,64:2,64:4,64:8,256:8", help="d:c list")
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--step-size", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--adversarial", action="store_true", help="use an exactly rank-deficient W")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench_sigma)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SingularityError, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ParseError, InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CapsuleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
