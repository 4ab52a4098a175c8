"""Command-line interface.

Subcommands
-----------
search-offsets   minimize the probing bound (large-array limit or a finite array)
crlb             evaluate the bound for a geometry / SNR / offset design
static           run the fixed-channel Monte-Carlo experiment from a config file
dynamic          run the random-walk channel experiment from a config file
gap-report       compare the reference design against per-size minima

Config files are flat ``key = value`` lines (``#`` starts a comment); CLI
flags override file values.  Exit codes: 0 success, 1 invalid configuration
or runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional

import numpy as np

from .arrays import ArrayGeometry, PilotConfig
from .crlb import crlb_from_offsets
from .errors import BeamtrackError, ConfigError
from .offsets import REFERENCE_OFFSETS, SearchConfig, offset_gap_report, search_offsets
from .simulate import DynamicScenario, StaticScenario, export, run_dynamic, run_static
from .tracking import StepSchedule

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_flat_config(path: str) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return values


def _take(values: dict, key: str, cast, default):
    if key not in values:
        return default
    raw = values.pop(key)
    try:
        if cast is bool:
            return _BOOL_VALUES[raw.lower()]
        return cast(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc


def _scenario_from_config(path: str, dynamic: bool, seed: Optional[int]) -> StaticScenario:
    values = _parse_flat_config(path)
    try:
        geom = ArrayGeometry(
            m=_take(values, "m", int, 8),
            n=_take(values, "n", int, 8),
            d1=_take(values, "d1", float, 0.5),
            d2=_take(values, "d2", float, 0.5),
        )
        pilot = PilotConfig.from_snr_db(
            _take(values, "snr_db", float, 0.0),
            s_p=_take(values, "s_p", float, 1.0),
        )
        beta = complex(
            _take(values, "beta_re", float, 1.0 / math.sqrt(2.0)),
            _take(values, "beta_im", float, 1.0 / math.sqrt(2.0)),
        )
        schedule = StepSchedule(
            kind=_take(values, "step_kind", str, "constant" if dynamic else "diminishing"),
            epsilon=_take(values, "step_epsilon", float, 1.0),
            k0=_take(values, "step_k0", float, 0.0),
            constant_value=_take(values, "step_constant", float, 0.7),
        )
        config_seed = _take(values, "seed", int, 0)
        common = dict(
            geom=geom,
            pilot=pilot,
            beta=beta,
            schedule=schedule,
            slots=_take(values, "slots", int, 200 if dynamic else 500),
            trials=_take(values, "trials", int, 1000),
            seed=seed if seed is not None else config_seed,
            m0=_take(values, "m0", int, None),
            n0=_take(values, "n0", int, None),
            exclude_diverged=_take(values, "exclude_diverged", bool, False),
            noiseless=_take(values, "noiseless", bool, False),
        )
        if dynamic:
            scenario = DynamicScenario(
                delta_std=_take(values, "delta_std", float, 0.0),
                rician_k_db=_take(values, "rician_k_db", float, 15.0),
                **common,
            )
        else:
            scenario = StaticScenario(**common)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if values:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(values))}")
    return scenario


def _load_offsets(source: str) -> np.ndarray:
    if source == "table1":
        return REFERENCE_OFFSETS
    try:
        with open(source) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read offsets file {source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"offsets file {source} is not valid JSON: {exc}") from exc
    if isinstance(payload, dict):
        payload = payload.get("offsets")
    try:
        offsets = np.array(payload, dtype=float).reshape(3, 2)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"offsets file {source} must contain a 3x2 array") from exc
    return offsets


def _print_triple(deltas: np.ndarray, objective: float, header: str, as_json: bool) -> None:
    if as_json:
        print(json.dumps(
            {"offsets": deltas.tolist(), "objective": objective},
            sort_keys=True,
        ))
        return
    print(header)
    for i, row in enumerate(deltas, start=1):
        print(f"  delta{i} = [{row[0]: .6f}, {row[1]: .6f}]")
    print(f"  objective = {objective!r}")


def _cmd_search_offsets(args) -> int:
    pilot = PilotConfig.from_snr_db(args.snr_db)
    config = SearchConfig(starts=args.starts)
    if args.mn is not None:
        geom = ArrayGeometry(m=args.mn[0], n=args.mn[1])
        triple = search_offsets(geom, pilot, config)
        header = f"optimal offsets for {geom.m} x {geom.n}"
    else:
        triple = search_offsets(None, pilot, config)
        header = "asymptotically optimal offsets"
    _print_triple(triple.deltas, triple.objective, header, args.json)
    return 0


def _cmd_crlb(args) -> int:
    geom = ArrayGeometry(m=args.mn[0], n=args.mn[1])
    pilot = PilotConfig.from_snr_db(args.snr_db)
    offsets = _load_offsets(args.offsets)
    value = crlb_from_offsets(offsets, geom, pilot, k=args.slots)
    print(repr(value))
    return 0


def _cmd_experiment(args, dynamic: bool) -> int:
    scenario = _scenario_from_config(args.config, dynamic, args.seed)
    curve = run_dynamic(scenario) if dynamic else run_static(scenario)
    if args.out is None:
        tail = curve.mse_mean[-1]
        print(f"{scenario.kind}: trials={curve.trials} converged={curve.converged_trials} "
              f"final_mse={tail!r}")
        return 0
    fmt = args.format
    if fmt is None:
        fmt = "json" if str(args.out).endswith(".json") else "csv"
    export(curve, args.out, fmt)
    print(f"wrote {args.out}")
    return 0


def _cmd_gap_report(args) -> int:
    try:
        sizes = [int(tok) for tok in args.sizes.split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from exc
    if not sizes:
        raise ConfigError("--sizes is empty")
    pilot = PilotConfig.from_snr_db(args.snr_db)
    rows = offset_gap_report([(s, s) for s in sizes], pilot, SearchConfig(starts=args.starts))
    if args.json:
        print(json.dumps([
            {"m": r.m, "n": r.n, "crlb_min": r.crlb_min, "crlb_reference": r.crlb_reference,
             "relative_gap": r.relative_gap, "error": r.error}
            for r in rows
        ], sort_keys=True))
        return 0
    print(f"{'m':>4} {'n':>4} {'crlb_min':>14} {'crlb_reference':>14} {'gap':>10}")
    for r in rows:
        if r.error:
            print(f"{r.m:>4} {r.n:>4} search failed: {r.error}")
        else:
            print(f"{r.m:>4} {r.n:>4} {r.crlb_min:>14.6e} {r.crlb_reference:>14.6e} {r.relative_gap:>10.2e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search-offsets", help="minimize the probing bound over the offset triple")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mn", nargs=2, type=int, metavar=("M", "N"),
                       help="finite array size (default: large-array limit)")
    group.add_argument("--asymptotic", action="store_true",
                       help="use the large-array limit objective (default)")
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--starts", type=int, default=SearchConfig.starts)
    p.add_argument("--json", action="store_true", help="print machine-readable output")

    p = sub.add_parser("crlb", help="evaluate the bound for a geometry and offset design")
    p.add_argument("--mn", nargs=2, type=int, required=True, metavar=("M", "N"))
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--offsets", default="table1",
                   help="'table1' for the bundled reference design, or a JSON file")
    p.add_argument("--slots", type=int, default=1, help="number of accumulated slots k")

    for name, blurb in (("static", "fixed-channel experiment"),
                        ("dynamic", "random-walk channel experiment")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output path (summary to stdout if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format (default: by --out extension)")

    p = sub.add_parser("gap-report", help="reference design vs per-size minima")
    p.add_argument("--sizes", required=True, help="comma-separated square sizes, e.g. 8,12,16")
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--starts", type=int, default=SearchConfig.starts)
    p.add_argument("--json", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "search-offsets": _cmd_search_offsets,
        "crlb": _cmd_crlb,
        "static": lambda a: _cmd_experiment(a, dynamic=False),
        "dynamic": lambda a: _cmd_experiment(a, dynamic=True),
        "gap-report": _cmd_gap_report,
    }
    try:
        return handlers[args.command](args)
    except BeamtrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
