"""Batch entry point: synthesize a metric from a spec file and verify it.

    ccmsynth [spec.json] -o metric.json

With no spec argument the packaged case-study spec is used. Exit codes:
0 success, 1 usage/spec error, 2 infeasible or failed boundary check.
"""
import argparse
import json
import sys

from .synthesis import (InfeasibleError, SpecFormatError, case_study_spec,
                        load_spec, synthesize, verify_boundary, write_metric)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ccmsynth",
        description="SOS synthesis of a polynomial contraction metric")
    parser.add_argument("spec", nargs="?",
                        help="synthesis spec JSON (default: the packaged "
                        "case-study spec)")
    parser.add_argument("-o", "--out", default="metric.json",
                        help="output metric JSON path (default %(default)s)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec) if args.spec else case_study_spec()
    except (OSError, SpecFormatError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    try:
        result = synthesize(spec)
    except InfeasibleError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    write_metric(result, args.out)
    check = verify_boundary(args.out, A0=spec.A0, B=spec.B)
    print(json.dumps({
        "out": args.out,
        "lambda": result.lam,
        "attempted": [list(a) for a in result.attempted],
        "margin": result.margin,
        "rho": list(result.rho_coeffs),
        "bounds": list(result.bounds),
        "boundary_error": check.error,
        "boundary_passed": check.passed,
    }, indent=2))
    return 0 if check.passed else 2


if __name__ == "__main__":
    sys.exit(main())
