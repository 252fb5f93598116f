import argparse
import sys

from .selftest import run_self_test
from .shim import DEFAULT_TIME_CAP_S, serve_stdin


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cp-model-runner",
        description="Execute one generated constraint model: JSON request on "
                    "stdin, JSON verdict on stdout.",
    )
    parser.add_argument(
        "--self-test", action="store_true",
        help="run the three built-in conformance cases and exit nonzero on failure",
    )
    parser.add_argument(
        "--time-cap", type=float, default=DEFAULT_TIME_CAP_S,
        help="hard upper bound accepted for time_limit_s (default 60)",
    )
    args = parser.parse_args(argv)
    if args.self_test:
        return run_self_test()
    return serve_stdin(args.time_cap)


if __name__ == "__main__":
    sys.exit(main())
