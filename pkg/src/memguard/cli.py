"""Command line driver: ``memguard <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 artifact / IO error,
4 invariant failure.
"""
import argparse
import logging
import sys

from . import pipeline
from .errors import ArtifactError, ConfigError, DomainError, InvariantError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4

# flag -> RunConfig field; flags override config-file keys
_FLAGS = {
    "system": "system", "seed": "seed", "seeds": "seeds", "out": "out", "memories": "memories",
    "modes": "modes", "epochs": "epochs", "lr": "lr", "lr_grid": "lr_grid",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; keys are RunConfig field names")
    common.add_argument("--preset", choices=pipeline.PRESETS, help="size preset (desk = full sizes / 10)")
    common.add_argument("--system", choices=pipeline.SYSTEMS)
    common.add_argument("--seed", help="root seed")
    common.add_argument("--seeds", help="comma-separated training seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--memories", help="comma-separated memory counts")
    common.add_argument("--modes", help="comma-separated training modes")
    common.add_argument("--epochs")
    common.add_argument("--lr")
    common.add_argument("--lr-grid", dest="lr_grid", help="comma-separated learning rates to search")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="memguard", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "generate D / Omega train and test splits",
        "fit-gas": "fit one neural gas per memory count",
        "build-bounds": "partition and per-cell interval maps",
        "train": "train models for every (mode, memories, seed)",
        "eval": "evaluate trained models",
        "report": "aggregate plot data as CSV",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "train":
            sp.add_argument("--mode", choices=pipeline.TRAIN_MODES, help="train only this mode")
    return p


def config_from_args(args):
    overrides = {}
    for flag, key in _FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    return pipeline.load_config(args.config, args.preset, overrides)


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(args)
    cmd = args.command
    if cmd == "gen-data":
        pipeline.gen_data(cfg)
    elif cmd == "fit-gas":
        pipeline.fit_gas(cfg)
    elif cmd == "build-bounds":
        pipeline.build_bounds(cfg)
    elif cmd == "train":
        pipeline.train_models(cfg, (args.mode,) if args.mode else None)
    elif cmd == "eval":
        reports = pipeline.eval_models(cfg)
        for r in reports:
            print(f"{r.mode:15s} k={r.memories:<5d} seed={r.seed}  approx={r.approx_loss_D:.4g}"
                  f"  max_cviol_Omega={r.max_cviol_Omega:.3g}  max_ival_Omega={r.max_ival_Omega:.3g}")
    elif cmd == "report":
        for name, path in pipeline.report(cfg).items():
            print(f"{name}: {path}")
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except (ConfigError, DomainError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except InvariantError as e:
        print(f"invariant failure: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
