"""Command-line entry point: ``dss-sage <command> [options]``.

Commands: synth, estimate, sweep, crlb, characterize, bench. Exit status
is 0 on success, 2 for configuration or usage errors and 3 for malformed
tensor or result files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentSpec, default_document, estimator_from_dict, load_config, spec_from_dict
from .sage.estimators import ESTIMATORS, run_estimator
from .geometry import SPEED_OF_LIGHT
from .synth import CirtFormatError, load_tensor, save_tensor

log = logging.getLogger("dss_sage")

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT = 0, 2, 3


def _spec(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else spec_from_dict(default_document())
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, seed=args.seed)
    if getattr(args, "trials", None) is not None:
        spec = replace(spec, trials=args.trials)
    if getattr(args, "estimator", None):
        spec = replace(spec, estimators=tuple(args.estimator))
    if getattr(args, "wavefront", None):
        spec = replace(spec, estimator=replace(spec.estimator, wavefront=args.wavefront))
    return spec


def _out_dir(args, spec=None) -> Path:
    out = Path(args.out or (spec.out if spec else "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, allow_nan=False, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def cmd_synth(args) -> int:
    from .experiments import make_tensor, trial_seed

    spec = _spec(args)
    seed = trial_seed(spec.seed, 0)
    tensor, paths = make_tensor(spec.sounding, spec.scenario, seed)
    tensor.meta.update(
        master_seed=spec.seed,
        distance_m=spec.scenario.distance if not spec.scenario.paths else None,
        f_center_hz=spec.sounding.f_center,
        paths=[
            {
                "gain_db": 20 * math.log10(p.gain),
                "delay_ns": p.delay * 1e9,
                "az_deg": p.doa.degrees[0],
                "el_deg": p.doa.degrees[1],
                "dist_m": p.d_rx if math.isfinite(p.d_rx) else None,
            }
            for p in paths
        ],
    )
    out = _out_dir(args, spec) / (args.name or "cir.cirt")
    save_tensor(tensor, out)
    print(out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    tensor = load_tensor(args.tensor)
    if tensor.config is None:
        raise CirtFormatError(f"{args.tensor}: sidecar with sounding configuration missing")
    ecfg = load_config(args.config).estimator if args.config else estimator_from_dict(None)
    if args.wavefront:
        ecfg = replace(ecfg, wavefront=args.wavefront)
    name = args.estimator[0] if args.estimator else "dss-o-sage"
    result = run_estimator(name, tensor, ecfg)
    doc = result.to_dict(phases=args.phases)
    doc["wavefront"] = ecfg.wavefront
    doc["source"] = {k: tensor.meta.get(k) for k in ("distance_m", "f_center_hz", "snr_db", "master_seed")}
    if doc["source"]["f_center_hz"] is None:
        doc["source"]["f_center_hz"] = tensor.config.f_center
    out = _out_dir(args) / (args.name or f"{Path(args.tensor).stem}.{name}.json")
    _write_json(out, doc)
    print(out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import SWEEP_COLUMNS, run_sweep, summarize, write_rows

    spec = _spec(args)
    out = _out_dir(args, spec)

    def progress(k, n):
        if k % max(1, n // 20) == 0 or k == n:
            log.info("trial %d/%d", k, n)

    rows = run_sweep(spec, jobs=args.jobs, progress=progress)
    write_rows(out / "sweep.csv", rows, SWEEP_COLUMNS)
    summ = [{"sweep_var": k[0], "estimator": k[1], **v} for k, v in summarize(rows).items()]
    _write_json(out / "summary.json", {"variable": spec.sweep_var, "groups": summ})
    print(out / "sweep.csv")
    return EXIT_OK


def cmd_crlb(args) -> int:
    from .experiments import crlb_report

    spec = _spec(args)
    try:
        rep = crlb_report(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args, spec) / "crlb.json"
    _write_json(out, rep.to_dict())
    if rep.flagged:
        log.warning("FIM ill-conditioned (condition %.3g); bounds withheld", rep.condition)
    print(out)
    return EXIT_OK


def paths_from_result(doc: dict):
    from .geometry import Direction
    from .synth import PathParams

    out = []
    for p in doc["paths"]:
        if p.get("gain_db") is None:
            continue
        out.append(
            PathParams(
                gain=10 ** (p["gain_db"] / 20),
                delay=max(p["delay_ns"], 0.0) * 1e-9,
                doa=Direction.from_degrees(p["az_deg"], p["el_deg"]),
                d_rx=math.inf if p.get("dist_m") is None else p["dist_m"],
            )
        )
    return out


def characterize(results_dir) -> tuple[list, dict]:
    """Per-result path loss, delay and angular spreads, plus a CI path-loss fit."""
    from .evalkit import asa, ci_fit, delay_spread, esa, path_loss

    files = sorted(Path(results_dir).glob("*.json"))
    rows, points, freq = [], [], None
    for f in files:
        try:
            doc = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise CirtFormatError(f"{f}: {exc}") from None
        if not isinstance(doc, dict) or "paths" not in doc:
            continue
        paths = paths_from_result(doc)
        if not paths:
            continue
        src = doc.get("source", {})
        dist = src.get("distance_m") or SPEED_OF_LIGHT * min(p.delay for p in paths)
        freq = freq or src.get("f_center_hz")
        row = {
            "scenario": f.stem,
            "distance_m": dist,
            "n_paths": len(paths),
            "path_loss_db": path_loss(paths),
            "delay_spread_ns": delay_spread(paths) * 1e9,
            "asa_deg": asa(paths),
            "esa_deg": esa(paths),
        }
        rows.append(row)
        points.append((dist, row["path_loss_db"]))
    if not rows:
        raise FileNotFoundError(f"no estimation results in {results_dir}")
    fit = {}
    if freq and len({round(p[0], 9) for p in points}) >= 2:
        n, sigma = ci_fit(points, freq)
        fit = {"ple": n, "shadow_sigma_db": sigma, "frequency_hz": freq}
    return rows, fit


def cmd_characterize(args) -> int:
    from .experiments import write_rows

    rows, fit = characterize(args.results)
    out = _out_dir(args)
    cols = ["scenario", "distance_m", "n_paths", "path_loss_db", "delay_spread_ns", "asa_deg", "esa_deg"]
    write_rows(out / "characteristics.csv", rows, cols)
    _write_json(out / "ci_fit.json", fit)
    print(out / "characteristics.csv")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .experiments import BENCH_COLUMNS, run_bench, write_rows

    spec = _spec(args)
    ests = [e for e in spec.estimators if e != "noise-elim"] or ["dss-o-sage"]
    rows = run_bench(spec, ests)
    out = _out_dir(args, spec) / "bench.csv"
    write_rows(out, rows, BENCH_COLUMNS)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dss-sage", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--out", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, help="master seed (overrides the config)")

    p = sub.add_parser("synth", help="synthesize a CIR tensor")
    common(p)
    p.add_argument("--name", help="file name inside --out (default cir.cirt)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate paths from a CIRT file")
    p.add_argument("tensor")
    common(p, seed=False)
    p.add_argument("--estimator", action="append", choices=ESTIMATORS)
    p.add_argument("--wavefront", choices=("swf", "ffa"))
    p.add_argument("--phases", action="store_true", help="include per-direction phases")
    p.add_argument("--name")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="Monte Carlo sweep to CSV")
    common(p)
    p.add_argument("--estimator", action="append", choices=ESTIMATORS)
    p.add_argument("--wavefront", choices=("swf", "ffa"))
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("crlb", help="numerical FIM and CRLB of the scenario")
    common(p, seed=False)
    p.set_defaults(func=cmd_crlb)

    p = sub.add_parser("characterize", help="path loss, spreads and CI fit of result files")
    p.add_argument("results", help="directory of estimate JSON files")
    p.add_argument("--out")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("bench", help="likelihood-evaluation counts and M-step wall time")
    common(p)
    p.add_argument("--estimator", action="append", choices=ESTIMATORS)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CirtFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT if getattr(args, "command", "") in ("estimate", "characterize") else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
