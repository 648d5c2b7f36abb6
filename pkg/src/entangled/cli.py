"""Command-line front end.

Configuration comes from an optional flat ``key = value`` file (``#`` starts
a comment) and from flags, which take precedence. Every output file carries
the digest of the resolved configuration.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import metrics, runner
from .economy import calibrate, run_simulation
from .kernel import (active_fraction, autocorrelation_table, build_kernel, ensemble_profile_correlation,
                     expected_profile_correlation, validation_series)
from .params import EconomyParams, ParameterError
from .rng import derive_seed, hash_seed

log = logging.getLogger("entangled")

OUTPUT_DIR_ENV = "ENTANGLED_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

_PARAM_FIELDS = {f.name: f for f in fields(EconomyParams)}
_EXTRA_KEYS = {"seed": int, "output_dir": str}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass
class RunConfig:
    params: EconomyParams = field(default_factory=EconomyParams)
    seed: int = 0
    output_dir: str = DEFAULT_OUTPUT_DIR

    def to_dict(self) -> dict:
        return {**self.params.to_dict(), "seed": self.seed, "output_dir": self.output_dir}

    def digest(self) -> str:
        # output_dir does not affect results, so it is left out of the digest
        doc = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def to_text(self) -> str:
        lines = [f"# config_digest={self.digest()}"]
        lines += [f"{k} = {_format_value(v)}" for k, v in self.to_dict().items()]
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key: str, raw: str):
    kind = _EXTRA_KEYS.get(key) or _PARAM_FIELDS[key].type
    kind = {"float": float, "int": int, "bool": bool, "str": str}.get(kind, kind)
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}", key) from None


def parse_config_text(text: str) -> dict:
    """``key = value`` lines to a dict of typed values; unknown keys are rejected."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARAM_FIELDS and key not in _EXTRA_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key)
        out[key] = _convert(key, value)
    return out


def build_config(values: dict) -> RunConfig:
    params = {k: v for k, v in values.items() if k in _PARAM_FIELDS}
    extra = {k: v for k, v in values.items() if k in _EXTRA_KEYS}
    try:
        p = EconomyParams(**params)
    except ParameterError as exc:
        raise ConfigError(str(exc), exc.key) from None
    return RunConfig(params=p, seed=extra.get("seed", 0),
                     output_dir=extra.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """File values (if ``path``) overridden by ``overrides`` (raw strings or typed values)."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        values.update(parse_config_text(text))
    for key, value in (overrides or {}).items():
        if key not in _PARAM_FIELDS and key not in _EXTRA_KEYS:
            raise ConfigError(f"unknown key {key!r}", key)
        values[key] = _convert(key, value) if isinstance(value, str) else value
    return build_config(values)


# -- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model configuration (flags override --config)")
    g.add_argument("--config", help="flat 'key = value' configuration file")
    g.add_argument("--seed", help="base random seed (default 0)")
    g.add_argument("--output-dir", dest="output_dir",
                   help=f"output directory (default ${OUTPUT_DIR_ENV} or '{DEFAULT_OUTPUT_DIR}')")
    defaults = EconomyParams()
    for name in _PARAM_FIELDS:
        g.add_argument(f"--{name.replace('_', '-')}", dest=name, metavar="V",
                       help=f"default {_format_value(getattr(defaults, name))}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="entangled", description="Entangled-economy agent-based simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kernel-stats", help="AR(1) and interaction-kernel validation tables")
    _add_config_flags(p)
    p.add_argument("--lags", type=_int_list, default=[1, 10, 100, 300, 600])
    p.add_argument("--series", type=int, default=100, help="number of validation series")
    p.add_argument("--length", type=int, default=100_000, help="length of each validation series")
    p.add_argument("--kernels", type=int, default=100, help="kernels for active fraction and profile correlation")
    p.add_argument("--samples", type=int, default=10_000, help="pairs per kernel for profile correlation")
    p.add_argument("--distances", type=_int_list, default=[0, 150, 300, 600])

    p = sub.add_parser("run", help="a single run")
    _add_config_flags(p)
    p.add_argument("--check-conservation", action="store_true")

    p = sub.add_parser("ensemble", help="independent runs with derived seeds")
    _add_config_flags(p)
    p.add_argument("--runs", type=int, default=40)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--fixed-kernel", action="store_true", help="share one kernel across runs")

    p = sub.add_parser("sweep", help="(p_inv, c_connect) grid")
    _add_config_flags(p)
    p.add_argument("--p-inv-values", type=_float_list, default=list(runner.PAPER_P_INV))
    p.add_argument("--c-connect-values", type=_float_list, default=list(runner.PAPER_C_CONNECT))
    p.add_argument("--runs-per-cell", type=int, default=3)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--fixed-kernel", action="store_true")
    p.add_argument("--volatility-from", type=int, default=runner.VOLATILITY_FROM)

    p = sub.add_parser("analyze", help="metrics from persisted records")
    _add_config_flags(p)
    p.add_argument("--records", required=True, help="directory written by run/ensemble/sweep")
    p.add_argument("--histogram", choices=("capital", "age"))
    p.add_argument("--at", type=int, help="snapshot iteration for --histogram (default: last common)")
    p.add_argument("--bins", type=int, default=metrics.DEFAULT_CAPITAL_BINS)
    p.add_argument("--observable", choices=sorted(metrics.OBSERVABLES), default="gdp")
    p.add_argument("--all-runs", action="store_true", help="include collapsed runs")

    p = sub.add_parser("calibrate", help="magnitudes of the weight-function terms after a warm-up")
    _add_config_flags(p)
    p.add_argument("--warmup", type=int, default=200)
    p.add_argument("--runs", type=int, default=1)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k) for k in (*_PARAM_FIELDS, *_EXTRA_KEYS)
                 if getattr(args, k, None) is not None}
    return parse_config(args.config, overrides)


# -- subcommands ----------------------------------------------------------------


def _out_dir(cfg: RunConfig, name: str) -> Path:
    out = Path(cfg.output_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


def _write_csv(path: Path, digest: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_digest={digest}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, digest: str, doc: dict) -> None:
    path.write_text(json.dumps({"config_digest": digest, **doc}, indent=1, sort_keys=True, default=float))


def cmd_kernel_stats(cfg: RunConfig, args) -> int:
    p, digest = cfg.params, cfg.digest()
    out = _out_dir(cfg, "kernel-stats")
    series = validation_series(cfg.seed, p.xi, args.length, args.series)
    variance = float(np.mean([np.var(s.values) for s in series]))
    table = autocorrelation_table(series, args.lags)
    _write_csv(out / "autocorrelation.csv", digest, ("tau", "empirical", "analytic"), table)
    fractions = [active_fraction(build_kernel(hash_seed(cfg.seed, f"stats/kernel{k}"), p))
                 for k in range(args.kernels)]
    rows = []
    for d in args.distances:
        emp = ensemble_profile_correlation(p, d, args.samples, cfg.seed, n_kernels=args.kernels)
        rows.append((d, emp, math.exp(-d / p.xi), expected_profile_correlation(d, p.xi, p.trait_size)))
    _write_csv(out / "profile_correlation.csv", digest, ("distance", "empirical", "exp_decay", "expected"), rows)
    doc = {"variance": variance, "variance_analytic": 1.0 / (1.0 - math.exp(-2.0 / p.xi)),
           "active_fraction": float(np.mean(fractions)), "c_connect": p.c_connect}
    _write_json(out / "kernel_stats.json", digest, doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def _save(out: Path, records, cfg: RunConfig, extra: dict | None = None) -> None:
    manifest = {"config_digest": cfg.digest(), "config": cfg.to_dict(), **(extra or {})}
    runner.write_records(out / "records", records, manifest)


def cmd_run(cfg: RunConfig, args) -> int:
    rec = run_simulation(cfg.params, cfg.seed, check_conservation=args.check_conservation)
    out = _out_dir(cfg, "run")
    _save(out, [rec], cfg)
    rec.write_series_csv(out / f"series-s{cfg.seed}.csv")
    print(json.dumps({"seed": rec.seed, "collapsed": rec.collapsed, "final_iteration": rec.final_iteration,
                      "n_companies": int(rec.n_companies[-1]) if len(rec.series) else 0,
                      "config_digest": cfg.digest(), "output": str(out)}))
    return EXIT_OK


def cmd_ensemble(cfg: RunConfig, args) -> int:
    if args.runs < 1 or args.parallelism < 1:
        raise ConfigError("--runs and --parallelism must be >= 1", "runs")
    records = runner.run_ensemble(cfg.params, args.runs, cfg.seed, args.parallelism, args.fixed_kernel)
    out = _out_dir(cfg, "ensemble")
    _save(out, records, cfg, {"fixed_kernel": args.fixed_kernel, "runs": args.runs})
    survivors, collapsed = metrics.survival_filter(records)
    doc = {"runs": len(records), "survivors": len(survivors), "collapsed": len(collapsed)}
    _write_json(out / "ensemble_summary.json", cfg.digest(), doc)
    print(f"{len(survivors)} of {len(records)} runs survived ({len(collapsed)} collapsed); output in {out}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    if args.parallelism < 1:
        raise ConfigError("--parallelism must be >= 1", "parallelism")
    try:
        grid = runner.SweepGrid(args.p_inv_values, args.c_connect_values, args.runs_per_cell, cfg.seed,
                                cfg.params, args.fixed_kernel, args.volatility_from)
    except ParameterError as exc:
        raise ConfigError(str(exc), exc.key) from None
    summary = runner.run_sweep(grid, args.parallelism)
    out = _out_dir(cfg, "sweep")
    summary.write_csv(out / "sweep.csv")
    _save(out, [r for cell in summary.records for r in cell], cfg,
          {"grid": grid.to_dict(), "grid_digest": runner.grid_digest(grid)})
    for row in summary.rows:
        print(f"p_inv={row.p_inv:g} c_connect={row.c_connect:g} survivors={row.n_survivors}/{row.n_runs} "
              f"growth_variance={row.gdp_growth_variance:.4g}")
    return EXIT_OK


def _common_snapshot_iteration(records) -> int:
    common = set.intersection(*({s.iteration for s in r.snapshots} for r in records))
    if not common:
        raise ConfigError("records share no snapshot iteration; pass --at", "at")
    return max(common)


def cmd_analyze(cfg: RunConfig, args) -> int:
    path = Path(args.records)
    if (path / "records" / "manifest.json").is_file():
        path = path / "records"
    if not (path / "manifest.json").is_file():
        raise ConfigError(f"records directory {args.records} not found or has no manifest.json", "records")
    records = runner.read_records(path)
    manifest_digest = json.loads((path / "manifest.json").read_text()).get("config_digest", "")
    survivors, collapsed = metrics.survival_filter(records)
    use = records if args.all_runs else survivors
    if not use:
        raise RuntimeError("no surviving runs to analyze")
    digest = manifest_digest or cfg.digest()
    out = Path(cfg.output_dir) / "analyze"
    out.mkdir(parents=True, exist_ok=True)
    if args.histogram:
        at = args.at if args.at is not None else _common_snapshot_iteration(use)
        rows = []
        for rec in use:
            try:
                snap = rec.snapshot_at(at)
            except KeyError:
                raise ConfigError(f"run seed={rec.seed} has no snapshot at iteration {at}", "at") from None
            h = (metrics.capital_histogram(snap, n_bins=args.bins) if args.histogram == "capital"
                 else metrics.age_histogram(snap))
            for k, count in enumerate(h.counts):
                rows.append((rec.seed, at, k, float(h.bin_edges[k]), float(h.bin_edges[k + 1]), int(count)))
        target = out / f"{args.histogram}_histogram_t{at}.csv"
        _write_csv(target, digest, ("seed", "iteration", "bin", "lower", "upper", "count"), rows)
    else:
        mean, sd = metrics.ensemble_average(use, args.observable)
        start = 1 + (metrics.GROWTH_LAG if args.observable == "gdp_growth" else 0)
        target = out / f"{args.observable}_ensemble.csv"
        _write_csv(target, digest, ("iteration", "mean", "sd"),
                   ((start + k, m, s) for k, (m, s) in enumerate(zip(mean, sd))))
        stats = [runner.growth_stats(r, 0) for r in use]
        _write_json(out / "growth.json", digest, {
            "runs": len(records), "survivors": len(survivors), "analyzed": len(use),
            "mean_gdp_growth": [s[0] for s in stats], "gdp_growth_variance": [s[1] for s in stats],
            "seeds": [r.seed for r in use]})
    print(f"wrote {target}")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    rows = [calibrate(cfg.params, derive_seed(cfg.seed, 0, k), args.warmup) for k in range(args.runs)]
    out = _out_dir(cfg, "calibrate")
    _write_json(out / "calibration.json", cfg.digest(), {"warmup": args.warmup, "runs": rows})
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


COMMANDS = {"kernel-stats": cmd_kernel_stats, "run": cmd_run, "ensemble": cmd_ensemble,
            "sweep": cmd_sweep, "analyze": cmd_analyze, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
