"""Command-line runner: build spaces, run suites, write reports and tables."""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import __version__
from .io import cached_decompose, load_space, save_space, write_csv
from .kernels import AnalyticKernel
from .spaces import SpaceDescriptor, SpaceError, make_model_sample
from .verifiers.registry import SUITES, SpaceHandle, default_sample, run_suite

REPORT_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SPACE_KEYS = {"N": float, "K": float, "L": float, "R": float, "R_max": float, "n": int, "path": str}


class UsageError(ValueError):
    """Invalid command line or configuration."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a run depends on; the report echoes it verbatim."""

    spaces: List[str] = field(default_factory=list)
    suites: List[str] = field(default_factory=lambda: ["all"])
    seed: int = 0
    out: str = "heatlab-out"
    jobs: int = 0
    tolerance: Optional[float] = None
    cache: Optional[str] = None

    def validate(self) -> "RunConfig":
        if not self.spaces:
            raise UsageError("at least one --space is required")
        for s in self.spaces:
            parse_space(s)
        unknown = [s for s in self.suites if s != "all" and s not in SUITES]
        if unknown:
            raise UsageError(f"unknown suite(s): {', '.join(unknown)}; see list-suites")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.jobs < 0:
            raise UsageError("jobs must be nonnegative")
        if self.tolerance is not None and not (self.tolerance >= 0 and math.isfinite(self.tolerance)):
            raise UsageError("tolerance must be a finite nonnegative number")
        return self

    @property
    def suite_list(self) -> List[str]:
        return list(SUITES) if "all" in self.suites else list(self.suites)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "space" in data:
            data.setdefault("spaces", [])
            data["spaces"] = [data.pop("space")] + list(data["spaces"])
        if "suite" in data:
            data["suites"] = [data.pop("suite")]
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
        if isinstance(data.get("suites"), str):
            data["suites"] = [data["suites"]]
        return cls(**data)


def parse_space(text: str):
    """``kind[:key=value,...]`` -> (descriptor, n, path).

    Keys: N, K, L, R (or R_max), n, path.  A given ``n`` selects a sample
    of that size; ``sampled:path=DIR`` loads a saved space.
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    opts = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq or key not in SPACE_KEYS:
            raise UsageError(f"bad space option {item!r} in {text!r}; keys are {', '.join(SPACE_KEYS)}")
        try:
            opts[key] = SPACE_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"bad value in {item!r}") from exc
    n = opts.pop("n", None)
    path = opts.pop("path", None)
    if "R" in opts:
        opts["R_max"] = opts.pop("R")
    if kind == "sampled":
        if path is None:
            raise UsageError("sampled spaces need path=DIR")
        return None, n, path
    if path is not None:
        raise UsageError("path= is only valid for kind 'sampled'")
    try:
        if kind == "circle":
            desc = SpaceDescriptor.circle(opts.pop("L", 2 * math.pi))
        elif kind == "euclidean":
            desc = SpaceDescriptor.euclidean(int(opts.pop("N", 1)), opts.pop("R_max", None))
        elif kind == "hyperbolic3":
            desc = SpaceDescriptor.hyperbolic3(opts.pop("R_max", None))
        else:
            raise UsageError(f"unknown space kind {kind!r}")
        for key, value in opts.items():
            if getattr(desc, key) != value:
                raise UsageError(f"{kind} does not take {key}={value:g}")
    except SpaceError as exc:
        raise UsageError(str(exc)) from exc
    return desc, n, None


def make_handle(text: str, seed: int, cache: Optional[str]) -> SpaceHandle:
    desc, n, path = parse_space(text)
    if path is not None:
        space = load_space(path)
        return SpaceHandle(space.descriptor, space=space, seed=seed,
                           decomposer=lambda s: cached_decompose(s, cache or path))
    return SpaceHandle(desc, n=n, seed=seed, decomposer=lambda s: cached_decompose(s, cache))


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=-]+", "_", text).strip("_")


def _table_csv(path: Path, rows: Sequence[dict]) -> None:
    header: List[str] = []
    for row in rows:
        header += [k for k in row if k not in header]
    write_csv(path, header, ([row.get(k, "") for k in header] for row in rows))


def environment() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def run(config: RunConfig) -> dict:
    """Execute every (space, suite) pair and write report.json plus one CSV per sweep."""
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    handles = [make_handle(s, config.seed, config.cache) for s in config.spaces]
    suites = config.suite_list
    # decompositions are shared, so build them before fanning out
    for h in handles:
        if h.sampled or any(SUITES[s].needs_sample for s in suites):
            try:
                h.dec
            except Exception:  # noqa: BLE001 - surfaces again as a per-suite error
                pass
    tasks = [(i, h, s) for i, h in enumerate(handles) for s in suites]

    def work(task):
        i, h, s = task
        t0 = time.perf_counter()
        res = run_suite(s, h, config.seed, config.tolerance)
        return i, s, res, time.perf_counter() - t0

    jobs = config.jobs or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        done = list(pool.map(work, tasks))

    results, timings = [], {}
    for i, s, res, dt in done:
        entry = res.to_dict()
        entry["suite"] = s
        entry["space_spec"] = config.spaces[i]
        if res.table:
            name = f"{_slug(config.spaces[i])}__{s}.csv"
            _table_csv(out / name, res.table)
            entry["table"] = name
        results.append(entry)
        timings[f"{config.spaces[i]}::{s}"] = dt
    timings["total"] = time.perf_counter() - started
    report = {
        "version": REPORT_VERSION,
        "tool_version": __version__,
        "config": config.to_dict(),
        "results": results,
        "timings": timings,
        "environment": environment(),
    }
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")
    with open(out / "config.toml", "wb") as fh:
        tomli_w.dump(config.to_dict(), fh)
    return report


def exit_code(report: dict) -> int:
    bad = any(r["status"] in ("fail", "error") for r in report["results"])
    return EXIT_FAIL if bad else EXIT_OK


# --------------------------------------------------------------------------
# other verbs
# --------------------------------------------------------------------------


def dump_kernel(desc: SpaceDescriptor, t_list, d_list, path) -> None:
    """CSV rows (t, d, p, |grad p|, dp/dt) of a model kernel."""
    if desc is None or not desc.analytic:
        raise UsageError("dump-kernel needs a model space")
    k = AnalyticKernel(desc)
    rows = []
    for t in t_list:
        for d in d_list:
            rows.append([t, d, float(k.value(t, d)), float(k.gradient(t, d)), float(k.time_derivative(t, d))])
    write_csv(path, ["t", "d", "p", "grad_p", "dt_p"], rows)


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"heatlab {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run suites and write report.json")
    r.add_argument("--space", action="append", help="kind[:key=value,...]; repeatable")
    r.add_argument("--suite", action="append", help="suite name or 'all'; repeatable")
    r.add_argument("--config", help="TOML file with the same keys as the report config")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, help="worker threads (default: logical cores)")
    r.add_argument("--tolerance", type=float, help="relative tolerance overriding the checker default")
    r.add_argument("--cache", help="spectrum cache directory (HEATLAB_CACHE takes precedence)")

    sub.add_parser("list-suites", help="print the suite names")

    s = sub.add_parser("sample-space", help="write a model sample as a space directory")
    s.add_argument("--space", required=True, help="model with n, e.g. circle:L=6.283185307179586,n=256")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("dump-kernel", help="tabulate a model kernel as CSV")
    d.add_argument("--space", required=True)
    d.add_argument("--t", required=True, help="comma-separated times")
    d.add_argument("--d", required=True, help="comma-separated distances")
    d.add_argument("--out", help="CSV path (default: stdout)")
    return p


def config_from_args(args) -> RunConfig:
    data = load_config(args.config) if args.config else {}
    cfg = RunConfig.from_dict(data)
    if args.space:
        cfg.spaces = list(args.space)
    if args.suite:
        cfg.suites = list(args.suite)
    for key in ("out", "seed", "jobs", "tolerance", "cache"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.verb == "list-suites":
            for name, suite in SUITES.items():
                print(f"{name}\t{suite.statement}")
            return EXIT_OK
        if args.verb == "sample-space":
            desc, n, path = parse_space(args.space)
            if desc is None:
                raise UsageError("sample-space needs a model kind")
            if n is None:
                desc, n = default_sample(desc)
            elif desc.kind != "circle" and desc.R_max is None:
                desc = default_sample(desc)[0]
            save_space(make_model_sample(desc, n, args.seed), args.out)
            print(args.out)
            return EXIT_OK
        if args.verb == "dump-kernel":
            desc, _, path = parse_space(args.space)
            target = args.out or sys.stdout
            dump_kernel(desc, _floats(args.t), _floats(args.d), target)
            return EXIT_OK
        cfg = config_from_args(args)
    except (UsageError, SpaceError) as exc:
        print(f"heatlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = run(cfg)
    for r in report["results"]:
        print(f"{r['status']:<19} {r['suite']:<24} {r['space']}")
    print(f"report: {Path(cfg.out) / 'report.json'}")
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
