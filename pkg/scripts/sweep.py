"""Monte Carlo sweep of one scenario variable, with a per-value RMSE/FPR table.

Examples
--------
Phase-instability robustness at 10 m::

    python3 scripts/sweep.py phase_sigma_rad 0 0.6 1.2 1.8 --trials 100

Near-field behaviour over distance, noise-free phases::

    python3 scripts/sweep.py distance_m 2 5 10 20 50 100 --no-fpr
"""

import argparse
import json
import math
import time
from dataclasses import replace
from pathlib import Path

from dss_sage.config import default_document, load_config, spec_from_dict
from dss_sage.experiments import run_sweep, summarize

SWEEP_VARS = ("phase_sigma_rad", "distance_m", "snr_db", "hpbw_deg", "rotator_radius_m")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("var", choices=SWEEP_VARS)
    ap.add_argument("values", type=float, nargs="+")
    ap.add_argument("--config", help="JSON experiment config (default: built-in)")
    ap.add_argument("--estimators", nargs="+", default=["dss-o-sage", "pwf-sage", "swf-sage"])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--no-fpr", action="store_true", help="skip the residual re-estimation")
    ap.add_argument("--out", default="results/sweep")
    args = ap.parse_args()

    spec = load_config(args.config) if args.config else spec_from_dict(default_document())
    spec = replace(spec, sweep_var=args.var, sweep_values=tuple(args.values), estimators=tuple(args.estimators),
                   trials=args.trials, seed=args.seed)
    out = Path(args.out)
    t0 = time.perf_counter()

    def progress(k, n):
        if k % max(1, n // 20) == 0 or k == n:
            print(f"  {k}/{n} trials  {time.perf_counter() - t0:.0f} s", flush=True)

    rows = run_sweep(spec, out / f"{args.var}.csv", jobs=args.jobs, progress=progress, with_fpr=not args.no_fpr)
    summ = summarize(rows)
    print(f"\n{args.var:>16} {'estimator':>11} {'az RMSE':>9} {'el RMSE':>9} {'gain dB':>8} {'FPR dB':>7} {'worst':>7}")
    for (v, est), s in sorted(summ.items(), key=lambda kv: (float(kv[0][0]), kv[0][1])):
        fp = "" if math.isnan(s["fpr_db"]) else f"{s['fpr_db']:7.1f} {s['fpr_db_max']:7.1f}"
        print(f"{float(v):16g} {est:>11} {s['rmse_az_deg']:9.4f} {s['rmse_el_deg']:9.4f} {s['rmse_gain_db']:8.3f} {fp}")
    with open(out / f"{args.var}.summary.json", "w") as fh:
        json.dump([{"value": float(v), "estimator": e, **s} for (v, e), s in summ.items()], fh, indent=1)
    print(f"\nwrote {out}/{args.var}.csv ({len(rows)} rows) in {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
