"""Command line entry point: ``tsmech run <config>`` and ``tsmech verify <config>``."""
import argparse
import sys

from .config import read_config
from .errors import ParseError, ValidationError
from .pipeline import output_dir, run_pipeline, run_verify

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="tsmech",
                                description="Time-separated stochastic mechanics runs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run TSM and/or Monte Carlo and write CSV artifacts"),
                        ("verify", "finite-difference and sampling checks of the tangents")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="YAML run configuration")
        s.add_argument("--out", help="output directory (overrides $TSMECH_OUT and config)")
        s.add_argument("--seed", type=int)
        s.add_argument("--mc-n", type=int, dest="mc_n")
        s.add_argument("--workers", type=int)
        # fault-injection hook used by the test suite
        s.add_argument("--tangent-scale", type=float, help=argparse.SUPPRESS)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "mc_n": args.mc_n, "workers": args.workers}
    try:
        config = read_config(args.config, overrides=overrides)
    except (ParseError, ValidationError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        print("configuration error:", file=sys.stderr)
        for msg in problems:
            print(f"  {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        if args.command == "run":
            res = run_pipeline(config, out=args.out, tangent_scale=args.tangent_scale)
            print(f"wrote {', '.join(sorted(res.files))} to {output_dir(config, args.out)}")
            if res.speedup is not None:
                print(f"speedup: {res.speedup:.2f}")
            return EXIT_OK
        report = run_verify(config, tangent_scale=args.tangent_scale)
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(report.text())
    if not report.passed:
        for line in report.failing:
            print(f"failed check: {line}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
