"""Likelihood-evaluation counts and M-step time of the three SAGE variants.

    python3 scripts/bench.py [--config cfg.json] [--trial 0]
"""

import argparse

from dss_sage.config import default_document, load_config, spec_from_dict
from dss_sage.experiments import run_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--trial", type=int, default=0)
    args = ap.parse_args()
    spec = load_config(args.config) if args.config else spec_from_dict(default_document())
    rows = run_bench(spec, trial=args.trial)
    dss = rows[0]["likelihood_evals"]
    print(f"{'estimator':>11} {'run':>4} {'evaluations':>12} {'x DSS':>7} {'elements/eval':>14} {'ratio':>9} {'M-step s':>9}")
    for r in rows:
        run = "exec" if r["executed"] else "plan"
        print(f"{r['estimator']:>11} {run:>4} {r['likelihood_evals']:12d} {r['likelihood_evals'] / dss:7.1f} "
              f"{r['max_elements_per_eval']:14d} {r['element_ratio']:9.2e} {r['mstep_seconds']:9.2f}")


if __name__ == "__main__":
    main()
