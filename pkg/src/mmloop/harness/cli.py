"""Command line entry point (``mmloop``).

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""

import argparse
import logging
import sys

from ..errors import ConfigError, MmloopError
from .config import MODALITIES, STAGES, load_config
from .pipeline import Pipeline

log = logging.getLogger("mmloop")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


def _global_flags(defaults):
    """Flags accepted both before and after the subcommand.

    The copy attached to subparsers uses SUPPRESS defaults so that it does
    not clobber a value given before the subcommand.
    """
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--config", metavar="PATH", default=d(None), help="flat key = value config file")
    p.add_argument("--seed", type=int, metavar="N", default=d(None))
    p.add_argument("--modality", choices=MODALITIES, default=d(None))
    p.add_argument("--out", metavar="DIR", default=d(None), help="output directory")
    p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", default=d([]),
                   help="override any config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmloop", parents=[_global_flags(True)],
        description="Camera / LiDAR-intensity / fused loop-closure descriptors: synthetic "
                    "multi-weather data, triplet training and weather-pair evaluation.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    late = _global_flags(False)
    helps = {
        "synth": "render the synthetic world and write manifests and payloads",
        "ingest": "poses, places and the train/test/buffer split from the manifests",
        "mine": "build the random and hard triplet databases",
        "train": "train on random negatives until a plateau, then fine-tune on hard negatives",
        "extract": "descriptors for every test sample",
        "eval": "judge top-1 retrieval for all (test run, reference run) pairs",
        "report": "weather-pair accuracy and count matrices (CSV / JSON)",
        "pipeline": "run the configured stages in order",
    }
    cmds = {}
    for name in STAGES + ("pipeline",):
        cmds[name] = sub.add_parser(name, parents=[late], help=helps[name], description=helps[name])
    cmds["pipeline"].add_argument("--stages", default=None,
                                  help=f"comma-separated subset of {','.join(STAGES)}")
    cmds["eval"].add_argument("--no-heading-gate", action="store_true",
                              help="judge by distance only")
    cmds["pipeline"].add_argument("--no-heading-gate", action="store_true",
                                  help="judge by distance only")
    cmds["report"].add_argument("--format", dest="formats", default=None, help="csv, json or csv,json")
    return parser


def _overrides(args):
    out = {"seed": args.seed, "modality": args.modality, "out": args.out}
    for item in args.overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value
    if getattr(args, "stages", None):
        out["stages"] = args.stages
    if getattr(args, "no_heading_gate", False):
        out["judge_heading_gate"] = False
    if getattr(args, "formats", None):
        out["report_formats"] = args.formats
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, _overrides(args))
        pipe = Pipeline(cfg)
        if args.command == "pipeline":
            pipe.run()
        else:
            pipe.run_stage(args.command)
    except MmloopError as exc:
        print(f"mmloop {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mmloop {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
