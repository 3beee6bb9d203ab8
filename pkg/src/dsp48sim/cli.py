"""``dsp48sim`` command line: run scenarios, self-tests, reports and VCD dumps.

Exit status: 0 all checks pass, 1 a check failed, 2 usage or parse error,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import resource_model as rm
from . import scenario as sc
from .errors import ConfigError, SimError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out-dir", default="out", help="artifact directory (default: out)")
    p = argparse.ArgumentParser(prog="dsp48sim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("run", "run a scenario and its checks"),
                        ("vcd", "run a scenario and write its waveform as VCD"),
                        ("report", "write CSV/JSON resource reports for an engine config")):
        s = sub.add_parser(verb, parents=[common], help=help_)
        s.add_argument("path", help="scenario / engine config file (INI)")
    s = sub.add_parser("selftest", parents=[common], help="packing sweep and SIMD lane checks")
    s.add_argument("suites", nargs="*", metavar="{" + ",".join([*sc.SELFTEST_SUITES, "all"]) + "}")
    return p


def _print_checks(checks) -> None:
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")


def _run(args, force_vcd: bool) -> int:
    scn = sc.load_scenario(args.path, args.seed)
    outcome = sc.execute(scn, args.out_dir, force_vcd=force_vcd)
    _print_checks(outcome.checks)
    for a in outcome.artifacts:
        print(f"wrote {a}")
    if force_vcd and not any(str(a).endswith(".vcd") for a in outcome.artifacts):
        print("no waveform produced for this scenario", file=sys.stderr)
        return EXIT_USAGE
    print(f"{scn.name}: {'PASS' if outcome.passed else 'FAIL'}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


def _report(args) -> int:
    scn = sc.load_scenario(args.path, args.seed)
    reports = sc.engine_reports(scn)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        cells = ", ".join(f"{k}={v}" for k, v in r.flat().items() if k not in ("engine", "variant"))
        print(f"{r.engine} {r.variant}: {cells}")
    print(f"wrote {rm.write_csv(reports, out / f'{scn.name}.report.csv')}")
    print(f"wrote {rm.write_json(reports, out / f'{scn.name}.report.json')}")
    return EXIT_OK


def _selftest(args) -> int:
    if not args.suites:
        print("selftest: choose at least one suite (packing, simd, all)", file=sys.stderr)
        return EXIT_USAGE
    bad = [x for x in args.suites if x not in (*sc.SELFTEST_SUITES, "all")]
    if bad:
        print(f"selftest: unknown suite {bad[0]!r}", file=sys.stderr)
        return EXIT_USAGE
    suites = list(sc.SELFTEST_SUITES) if "all" in args.suites else list(dict.fromkeys(args.suites))
    checks = sc.run_selftests(suites, args.seed or 0)
    _print_checks(checks)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.verb == "selftest":
            return _selftest(args)
        if args.verb == "report":
            return _report(args)
        return _run(args, force_vcd=args.verb == "vcd")
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
