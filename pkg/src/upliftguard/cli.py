"""``upliftguard`` command line.

Exit codes: 0 success, 1 runtime or data error, 2 configuration error.
"""
import argparse
import sys

from . import __version__, pipeline
from .exceptions import ConfigurationError, ConsistencyError, UpliftGuardError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _u64(text):
    try:
        value = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}: expected an unsigned 64-bit integer") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed {value} is outside the unsigned 64-bit range")
    return value


def _grid(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}: expected comma-separated numbers") from None


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="pipeline config (JSON)")
    parser.add_argument("--seed", metavar="U64", type=_u64, default=default, help="override every seed in the config")
    parser.add_argument("--output", metavar="DIR", default=default, help="output directory (overrides output_dir)")
    parser.add_argument(
        "--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False, help="no progress output"
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="upliftguard", description="Guardrailed uplift targeting pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    helps = {
        "generate": "simulate a dataset and its ground-truth sidecar",
        "fit": "fit the uplift model and score the dataset",
        "optimize": "solve the guardrailed allocation and write policy + audit",
        "evaluate": "uplift curves, IPS/SNIPS and (with truth) true value, as report.json",
        "sweep": "re-solve over a grid of bounds for one constraint",
        "replay": "end-to-end scenario run with baseline comparisons",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _global_options(p, suppress=True)
        if name == "sweep":
            p.add_argument("--constraint", metavar="ID", help="constraint id to sweep")
            p.add_argument("--grid", type=_grid, help="ascending bounds, comma separated")
        if name == "replay":
            p.add_argument("scenario", choices=sorted(pipeline.PRESETS), help="scenario preset")
            p.add_argument("--n-customers", type=int, help="population size (default 20000)")
    return parser


def _summary(command, result):
    if command == "replay":
        return pipeline.format_table(result)
    if command == "evaluate":
        pv = result["policy_value"] or {}
        lines = [f"report: ips={pv.get('ips')} snips={pv.get('snips')} match_count={pv.get('match_count')}"]
        for c in result["uplift_curves"]:
            lines.append(f"uplift arm {c['arm']}: auc={c['auc']:.6g}")
        if result["truth"]:
            lines.append(f"true value={result['truth']['true_value']:.6g} regret={result['truth']['regret_vs_oracle']:.6g}")
        return "\n".join(lines)
    if command == "sweep":
        return "\n".join(f"bound={p['bound']:g} objective={p['objective']:.6g}" for p in result["points"])
    return "\n".join(f"wrote {path}" for path in result.values())


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = pipeline.load_config(args.config, seed=args.seed, output_dir=args.output)
        if args.command == "generate":
            result = pipeline.cmd_generate(cfg)
        elif args.command == "fit":
            result = pipeline.cmd_fit(cfg)
        elif args.command == "optimize":
            result = pipeline.cmd_optimize(cfg)
        elif args.command == "evaluate":
            result = pipeline.cmd_evaluate(cfg)
        elif args.command == "sweep":
            result = pipeline.cmd_sweep(cfg, args.constraint, args.grid)
        else:
            if args.n_customers is not None:
                cfg.replay["n_customers"] = args.n_customers
            result = pipeline.cmd_replay(cfg, args.scenario)
    except (ConfigurationError, ConsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UpliftGuardError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(_summary(args.command, result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
