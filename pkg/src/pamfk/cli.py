"""Command-line entry point: ``pamfk --config run.json``.

A run is described by one JSON document::

    {
      "command": "rates",
      "params": {"H": 0.5, "Hstar": 0.5, "h": 1.0, "paper_coeff": false},
      "seed": 0,
      "output_path": "out/rates.csv",
      "rates": {"ic": "flat", "L": 4, "t": 1.0, "x": 0.0, "method": "exact"}
    }

Results go to ``output_path`` as CSV, next to a ``.manifest.json`` that
echoes the resolved configuration and library versions. Exit status is 0 on
success, 1 for I/O errors, 2 for invalid input, 3 for exceeded budgets and 4
for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import CapacityError, NumericalError, PamfkError, ValidationError
from .noise import ModelParams, sample_field

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 1, 2, 3, 4

_TOP_KEYS = {"command", "params", "seed", "output_path"}
_PARAM_KEYS = {"H", "Hstar", "h", "paper_coeff"}

# allowed keys and defaults per command section
SECTIONS = {
    "sample-noise": {"M": 4, "n_lo": -2, "n_hi": 2},
    "solve": {"ic": "flat", "m": 4, "n": 0, "backend": "enumerate", "paths": 100000, "realizations": 1},
    "moments": {"ic": "flat", "m": 4, "n": 0, "backend": "enumerate", "K": 4},
    "kernels": {"ic": "flat", "k": 1, "t": 1.0, "x": 0.0, "points": [[0.5]]},
    "llt": {"m_min": 1, "m_max": 64},
    "rates": {"ic": "flat", "L": 4, "t": 1.0, "x": 0.0, "method": "exact", "paths": 100000},
    "holder": {"t_grid": [1.0, 1.25, 1.5, 2.0], "x_grid": [0.0, 1.0, 2.0, 3.0], "realizations": 200},
    "polymer": {"task": "match", "m": 4, "variant": "free", "m_list": [4, 16, 64], "samples": 10000,
                "bootstrap": 200},
}


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    seed: int
    output_path: str
    section: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "params": asdict(self.params),
            "seed": self.seed,
            "output_path": self.output_path,
            self.command: self.section,
        }


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ValidationError(f"seed={seed!r} must be an unsigned 64-bit integer")
    return seed


def parse_config(doc: dict, seed_override: int | None = None) -> RunConfig:
    """Validate a configuration document against the command schema."""
    if not isinstance(doc, dict):
        raise ValidationError("configuration must be a JSON object")
    if "config" in doc and "command" not in doc:
        doc = doc["config"]  # a run manifest
    command = doc.get("command")
    if command not in SECTIONS:
        raise ValidationError(f"command: expected one of {sorted(SECTIONS)}, got {command!r}")
    unknown = set(doc) - _TOP_KEYS - {command}
    if unknown:
        raise ValidationError(f"unknown top-level key(s): {sorted(unknown)}")
    for key in ("output_path",):
        if key not in doc:
            raise ValidationError(f"missing required key {key!r}")
    raw_params = doc.get("params", {})
    if not isinstance(raw_params, dict):
        raise ValidationError("params must be an object")
    bad = set(raw_params) - _PARAM_KEYS
    if bad:
        raise ValidationError(f"unknown params key(s): {sorted(bad)}")
    try:
        params = ModelParams(**raw_params)
    except ValidationError as exc:
        raise ValidationError(f"params: {exc}") from None
    if not isinstance(params.paper_coeff, bool):
        raise ValidationError("params.paper_coeff must be true or false")
    seed = _check_seed(seed_override if seed_override is not None else doc.get("seed", 0))
    raw = doc.get(command, {})
    if not isinstance(raw, dict):
        raise ValidationError(f"section {command!r} must be an object")
    bad = set(raw) - set(SECTIONS[command])
    if bad:
        raise ValidationError(f"unknown key(s) in {command!r}: {sorted(bad)}")
    section = {**SECTIONS[command], **raw}
    return RunConfig(command, params, seed, str(doc["output_path"]), section)


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def write_csv(table, path) -> None:
    """Write ``(header, rows)`` as CSV with LF endings and 17 significant digits."""
    header, rows = table
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValidationError(f"row {row!r} does not match the {width}-column header")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def manifest_path(output_path) -> Path:
    p = Path(output_path)
    return p.with_name(p.stem + ".manifest.json")


# ---------------------------------------------------------------------------
# commands


def _ordered_map(fn: Callable, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _derived_seed(seed: int, i: int) -> int:
    return (seed + 0x9E3779B97F4A7C15 * (i + 1)) % 2 ** 64


def _cmd_sample_noise(cfg: RunConfig, threads):
    s = cfg.section
    grid = sample_field(cfg.params, int(s["M"]), int(s["n_lo"]), int(s["n_hi"]), cfg.seed)
    rows = [(m, n, grid.at(m, n)) for m in range(1, grid.M + 1) for n in range(grid.n_lo, grid.n_hi + 1)]
    return ["m", "n", "value"], rows


def _cmd_solve(cfg: RunConfig, threads):
    from .noise import sample_values
    from .solver import SolveRequest, required_window, solve_values

    s = cfg.section
    req = SolveRequest(s["ic"], int(s["m"]), int(s["n"]), s["backend"], int(s["paths"]), cfg.seed)
    M, lo, hi = required_window(req.m, req.n)
    seeds = [_derived_seed(cfg.seed, i) for i in range(int(s["realizations"]))]

    def one(seed):
        values = sample_values(cfg.params, M, lo, hi, [seed])
        mean, se = solve_values(req, values, lo, cfg.params)
        return seed, float(mean[0]), float(se[0])

    rows = [(i, seed, u, se) for i, (seed, u, se) in enumerate(_ordered_map(one, seeds, threads))]
    return ["realization", "noise_seed", "u", "se"], rows


def _cmd_moments(cfg: RunConfig, threads):
    from .chaos import chaos_levels
    from .solver import SolveRequest, delta_prefactor, pair_moment

    s = cfg.section
    req = SolveRequest(s["ic"], int(s["m"]), int(s["n"]), s["backend"], seed=cfg.seed)
    mean = 1.0 if req.ic == "flat" else delta_prefactor(req.m, req.n, cfg.params.h)
    second = pair_moment(req, req, cfg.params)
    rows = [("mean", None, mean), ("second_moment", None, second), ("variance", None, second - mean ** 2)]
    levels = chaos_levels(req.ic, int(s["K"]), req.m, req.n, cfg.params)
    partial = 0.0
    for k, val in enumerate(levels):
        partial += val
        rows.append(("chaos_level", k, val))
        rows.append(("chaos_partial_sum", k, partial))
    return ["quantity", "k", "value"], rows


def _cmd_kernels(cfg: RunConfig, threads):
    from .chaos import KernelSpec, f_norm2, kernel_diff_norm

    s = cfg.section
    spec = KernelSpec(s["ic"], int(s["k"]), float(s["t"]), float(s["x"]), cfg.params)
    points = [list(map(float, pt)) for pt in s["points"]]

    def one(pt):
        return f_norm2(spec, pt), kernel_diff_norm(spec, pt)

    out = _ordered_map(one, points, threads)
    rows = [(i, " ".join(_fmt(v) for v in pt), ff, dd) for i, (pt, (ff, dd)) in enumerate(zip(points, out))]
    return ["point", "s", "f_norm2", "diff_norm2"], rows


def _cmd_llt(cfg: RunConfig, threads):
    from .analysis import llt_error

    s = cfg.section
    lo, hi = int(s["m_min"]), int(s["m_max"])
    if not 1 <= lo <= hi:
        raise ValidationError("llt: need 1 <= m_min <= m_max")
    rows = []
    for m in range(lo, hi + 1):
        e = llt_error(m)
        rows.append((m, e, m * e))
    return ["m", "llt_error", "m_times_error"], rows


def _cmd_rates(cfg: RunConfig, threads):
    from .analysis import rate_study

    s = cfg.section
    rep = rate_study(s["ic"], cfg.params, int(s["L"]), float(s["t"]), float(s["x"]), s["method"],
                     int(s["paths"]), cfg.seed)
    header = ["level", "h", "err2", "method", "se", "slope", "slope_se", "theory_slope"]
    rows = [(i, lv.h, lv.err2, lv.method, lv.se, None, None, None) for i, lv in enumerate(rep.levels)]
    rows.append(("fit", rep.reference_h, None, None, None, rep.slope, rep.slope_se, rep.theory_slope))
    return header, rows


def _cmd_holder(cfg: RunConfig, threads):
    from .analysis import holder_scan

    s = cfg.section
    seeds = [_derived_seed(cfg.seed, i) for i in range(int(s["realizations"]))]
    scan = holder_scan(cfg.params, s["t_grid"], s["x_grid"], seeds)
    rows = [(d, lag, msd, se) for d, lag, msd, se in scan.rows]
    rows.append(("time_exponent", None, scan.time_exponent, scan.time_exponent_se))
    rows.append(("space_exponent", None, scan.space_exponent, scan.space_exponent_se))
    return ["direction", "lag", "mean_sq", "se"], rows


def _cmd_polymer(cfg: RunConfig, threads):
    from .polymer import match_moments, partition_samples

    s = cfg.section
    task = s["task"]
    if task == "match":
        lhs, rhs = match_moments(int(s["m"]), cfg.params, s["variant"])
        return ["m", "variant", "lhs", "rhs", "abs_diff"], [(int(s["m"]), s["variant"], lhs, rhs, abs(lhs - rhs))]
    n = int(s["samples"])
    if task == "samples":
        seeds = [_derived_seed(cfg.seed, i) for i in range(n)]
        z = partition_samples(int(s["m"]), cfg.params, s["variant"], seeds)
        return ["sample", "Z"], list(enumerate(z))
    if task == "wasserstein":
        ms = sorted({int(m) for m in s["m_list"]})
        need = sorted(set(ms) | {4 * m for m in ms})

        def draw(m):
            seeds = [_derived_seed(cfg.seed + m, i) for i in range(n)]
            return partition_samples(m, cfg.params, s["variant"], seeds)

        samples = dict(zip(need, _ordered_map(draw, need, threads)))
        rows = []
        for m in ms:
            w, se = bootstrap_w2(samples[m], samples[4 * m], int(s["bootstrap"]), _derived_seed(cfg.seed, m))
            rows.append((m, 4 * m, w, se))
        return ["m", "m_fine", "w2", "se"], rows
    raise ValidationError(f"polymer.task must be 'match', 'samples' or 'wasserstein', got {task!r}")


def bootstrap_w2(a, b, reps: int, seed: int):
    """``W_2(a, b)`` with a bootstrap standard error."""
    from .noise import make_rng
    from .polymer import wasserstein_p

    w = wasserstein_p(a, b, 2.0)
    if reps < 2:
        return w, float("nan")
    rng = make_rng(seed)
    a, b = np.asarray(a), np.asarray(b)
    boot = np.empty(reps)
    for r in range(reps):
        boot[r] = wasserstein_p(a[rng.integers(0, a.size, a.size)], b[rng.integers(0, b.size, b.size)], 2.0)
    return w, float(boot.std(ddof=1))


COMMANDS = {
    "sample-noise": _cmd_sample_noise,
    "solve": _cmd_solve,
    "moments": _cmd_moments,
    "kernels": _cmd_kernels,
    "llt": _cmd_llt,
    "rates": _cmd_rates,
    "holder": _cmd_holder,
    "polymer": _cmd_polymer,
}


def run(cfg: RunConfig, threads: int = 1, force: bool = False) -> Path:
    """Execute ``cfg`` and write its CSV and manifest; returns the CSV path."""
    out = Path(cfg.output_path)
    man = manifest_path(out)
    if not force:
        for p in (out, man):
            if p.exists():
                raise ValidationError(f"output_path: {p} exists (use --force to overwrite)")
    with threadpool_limits(limits=1):
        table = COMMANDS[cfg.command](cfg, threads)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(table, out)
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    manifest = {
        "config": cfg.to_json(),
        "csv": out.name,
        "csv_sha256": digest,
        "versions": {
            "pamfk": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    man.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("PAMFK_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"PAMFK_THREADS={env!r} is not an integer") from None
    return 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pamfk", description=__doc__.split("\n")[0])
    ap.add_argument("--config", required=True, help="JSON run configuration (or a run manifest)")
    ap.add_argument("--seed", type=int, default=None, help="override the configured seed")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: $PAMFK_THREADS or 1)")
    ap.add_argument("--force", action="store_true", help="overwrite existing outputs")
    args = ap.parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config: invalid JSON ({exc})") from None
        threads = _threads(args.threads)
        if threads < 1:
            raise ValidationError("threads must be at least 1")
        cfg = parse_config(doc, args.seed)
        out = run(cfg, threads, args.force)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (NumericalError, PamfkError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
