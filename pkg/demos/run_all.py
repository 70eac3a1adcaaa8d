"""Run the full pipeline on every built-in scenario and print a summary table.

    python3 demos/run_all.py [out_dir]
"""

import sys

from pqbound.errors import UncoveredProblemError
from pqbound.harness import run_certify, run_checks
from pqbound.scenarios import scenario_names


def main(out_dir="out/demo"):
    print(f"{'scenario':28s} {'label':10s} {'max|u|':>9s} {'d':>9s} {'max req c':>10s} {'verdict':>8s}")
    for name in scenario_names():
        try:
            rep = run_certify(name, out_dir=out_dir)
        except UncoveredProblemError:
            rep = run_checks(name)
            print(f"{name:28s} {rep.classification['label']:10s} {'-':>9s} {'-':>9s} {'-':>10s} {'refused':>8s}")
            continue
        rep.write(out_dir)
        c = rep.certificate
        print(f"{name:28s} {rep.classification['label']:10s} {c['observed_max']:9.4f} {c['d']:9.4f} "
              f"{rep.audit['max_required_c']:10.3g} {'PASS' if rep.passed else 'FAIL':>8s}")


if __name__ == "__main__":
    main(*sys.argv[1:])
