"""Command-line experiment runner.

Every subcommand writes a CSV (``--out``, default stdout) whose first line
is ``# decoup-csv v1 <subcommand>`` and prints a one-line summary to
stderr.  Parameters come from long flags or from a JSON file given with
``--config``; explicit flags win over the file.

Exit status: 0 when every check of the run passes, 1 when a check fails,
2 when the configuration is rejected.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import (
    LatticeSpec,
    RatioResult,
    SweepConfig,
    critical_exponent,
    fit_slope,
    focusing,
    max_rows,
    predicted_sharpness_exponent,
    random_phase,
    sharpness_rows,
    single_cap,
    sweep_rows,
    trivial_decoupling_check,
)
from .extension import SeparableFunction, extend_direct, extend_separable, nyquist_lattice, plan_rules
from .extension import Lattice
from .geometry import Box
from .partition import ScaleError, cap_family, coarse_caps, omega_regions, scale_level, verify_cover
from .plotting import render_figure, series_from_rows, write_plot_data
from .rescale import affine_for_cap, nondegeneracy_of, phase_identity_error, verify_membership_claim
from .surface import SurfaceSpec

CSV_SCHEMA = "decoup-csv v1"
CONFIG_SCHEMA = "decoup-config v1"
TIMING_COLUMNS = ("runtime_ms", "direct_ms", "separable_ms", "speedup")
RATIO_COLUMNS = [
    "n", "m", "s", "p", "K", "R", "family", "trial_seed", "lhs", "rhs", "ratio",
    "lattice_mode", "points", "runtime_ms", "row_kind", "ratio_stderr", "lattice_seed",
]


class ConfigError(ValueError):
    """Rejected configuration (exit status 2)."""


# -- argument handling ------------------------------------------------------------


def scale_arg(text: str) -> int:
    """Accept ``256``, ``2^8`` or ``2**8``."""
    m = re.fullmatch(r"\s*2\s*(?:\^|\*\*)\s*(\d+)\s*", str(text))
    if m:
        return 2 ** int(m.group(1))
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer scale: {text!r}") from None


@dataclass(frozen=True)
class Param:
    name: str
    type: object
    default: object
    help: str
    nargs: str | None = None
    choices: tuple | None = None


def _common_lattice() -> list[Param]:
    return [
        Param("lattice_mode", str, "auto", "tensor, montecarlo or auto", choices=("auto", "tensor", "montecarlo")),
        Param("mc_count", int, 1_000_000, "Monte Carlo points per lattice"),
        Param("lattice_seed", int, 0, "base seed of Monte Carlo lattices"),
        Param("step", float, 0.5, "tensor lattice step (at most 1/2)"),
        Param("max_tensor_points", int, 1 << 22, "auto mode switches to Monte Carlo above this size"),
    ]


def _plots() -> list[Param]:
    return [
        Param("emit_plot_script", str, None, "write (series, x, y) plot data to this file"),
        Param("figure", str, None, "render a PNG figure to this file"),
    ]


SUBCOMMANDS: dict[str, tuple[str, list[Param]]] = {
    "caps": (
        "list the cap family F_n(R, m, s, n-1)",
        [
            Param("n", int, 3, "ambient dimension"),
            Param("m", int, 4, "finite-type order (even, >= 4)"),
            Param("s", int, 0, "number of t^2 coordinates"),
            Param("R", scale_arg, 256, "scale 2^(m*l)"),
        ],
    ),
    "regions": (
        "list the Omega_b regions and, optionally, the coarse caps",
        [
            Param("n", int, 3, "ambient dimension"),
            Param("m", int, 4, "finite-type order"),
            Param("s", int, 0, "number of t^2 coordinates"),
            Param("K", scale_arg, 16, "coarse scale 2^(m*l)"),
            Param("coarse", bool, False, "also list the coarse caps of Omega_(1,...,1)"),
        ],
    ),
    "verify-rescale": (
        "check that rescaled fine caps land in the family at R/K",
        [
            Param("n", int, 2, "ambient dimension"),
            Param("m", int, 4, "finite-type order"),
            Param("s", int, 0, "number of t^2 coordinates"),
            Param("K", scale_arg, 16, "coarse scale"),
            Param("R", scale_arg, 256, "fine scale"),
        ],
    ),
    "ratio-sweep": (
        "decoupling ratios over several scales with slope fits",
        [
            Param("n", int, 2, "ambient dimension"),
            Param("m", int, 4, "finite-type order"),
            Param("s", int, 0, "number of t^2 coordinates"),
            Param("p", float, [2.0, 4.0, 6.0], "exponents", nargs="+"),
            Param("R", scale_arg, [16, 256, 4096], "scales", nargs="+"),
            Param("trials", int, 8, "random-phase trials per scale"),
            Param("seed", int, 0, "seed of trial 0"),
            Param("family", str, "random_phase", "test-function family",
                  choices=("random_phase", "focusing", "single_cap")),
            Param("max_slope", float, None, "fail if a fitted slope exceeds this"),
            *_common_lattice(),
            *_plots(),
        ],
    ),
    "sharpness": (
        "focusing example: slopes against the predicted exponent",
        [
            Param("n", int, 2, "ambient dimension"),
            Param("m", int, 4, "finite-type order"),
            Param("p", float, [6.0, 8.0, 12.0], "exponents", nargs="+"),
            Param("R", scale_arg, [256, 4096, 65536], "scales", nargs="+"),
            Param("lhs_radius", float, 0.01, "radius of the small ball for the left side"),
            Param("tolerance", float, 0.05, "allowed |measured - predicted| slope"),
            Param("min_gap", float, 0.03, "required slope(p=8) - slope(p=6) when both are run"),
            *_common_lattice(),
            *_plots(),
        ],
    ),
    "trivial-check": (
        "ratio on B_K over coarse caps against c*K^((n-1)/4)",
        [
            Param("n", int, 2, "ambient dimension"),
            Param("m", int, 4, "finite-type order"),
            Param("s", int, 0, "number of t^2 coordinates"),
            Param("K", scale_arg, [16, 256], "coarse scales", nargs="+"),
            Param("p", float, [6.0], "exponents", nargs="+"),
            Param("family", str, ["random_phase", "focusing", "single_cap"], "families", nargs="+",
                  choices=("random_phase", "focusing", "single_cap")),
            Param("trials", int, 4, "random-phase trials"),
            Param("seed", int, 0, "seed of trial 0"),
            Param("c", float, 10.0, "constant in the bound c*K^((n-1)/4)"),
            Param("focus_fraction", float, 0.2, "focusing rows must reach this times sqrt(#tau)"),
            Param("focus_p", float, 6.0, "exponent at which the focusing check applies"),
            *_common_lattice(),
        ],
    ),
    "bench": (
        "time the direct and separable evaluators on one cap",
        [
            Param("n", int, 3, "ambient dimension"),
            Param("m", int, 4, "finite-type order"),
            Param("R", scale_arg, 256, "scale of the cap family Q is taken from"),
            Param("cap_index", int, 0, "which cap of F_n(R, m, 0, n-1) is Q"),
            Param("points", int, 65, "lattice points per axis (odd, or 1 for the origin)"),
            Param("step", float, 0.5, "lattice step"),
            Param("rank", int, 1, "number of rank-1 terms of g"),
            Param("seed", int, 0, "seed for the factors of g"),
            Param("repeats", int, 1, "timing repeats (minimum is reported)"),
            Param("min_speedup", float, 10.0, "required direct/separable time ratio"),
            Param("max_diff", float, 1e-10, "allowed max |direct - separable|"),
            Param("dump_field", str, None, "write the separable field (x, re, im) to this CSV"),
        ],
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decoup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, params) in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", default=None, help="JSON file with parameters")
        sp.add_argument("--out", default=None, help="CSV output path (default stdout)")
        for p in params:
            flag = "--" + p.name.replace("_", "-")
            if p.type is bool:
                sp.add_argument(flag, dest=p.name, action="store_const", const=True, default=None, help=p.help)
                continue
            sp.add_argument(flag, dest=p.name, type=p.type, nargs=p.nargs, choices=p.choices,
                            default=None, help=f"{p.help} (default {p.default})")
    return parser


def _coerce(p: Param, value):
    if p.type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{p.name} must be true or false")
        return value
    if p.nargs:
        if not isinstance(value, list):
            value = [value]
        out = [p.type(v) for v in value]
        if p.choices and any(v not in p.choices for v in out):
            raise ConfigError(f"{p.name} must be drawn from {p.choices}")
        return out
    out = p.type(value) if value is not None else None
    if p.choices and out not in p.choices:
        raise ConfigError(f"{p.name} must be one of {p.choices}")
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, then the JSON config, then explicit flags."""
    params = SUBCOMMANDS[args.command][1]
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg = dict(cfg)
        schema = cfg.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}")
        cmd = cfg.pop("subcommand", args.command)
        if cmd != args.command:
            raise ConfigError(f"config is for {cmd!r}, not {args.command!r}")
        if "out" in cfg and args.out is None:
            args.out = cfg.pop("out")
        cfg.pop("out", None)
        known = {p.name for p in params}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for p in params:
        value = getattr(args, p.name)
        if value is None and p.name in cfg:
            try:
                value = _coerce(p, cfg[p.name])
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"bad value for {p.name}: {exc}") from None
        out[p.name] = p.default if value is None else value
    out["out"] = args.out
    return out


def thread_count() -> int:
    raw = os.environ.get("DECOUP_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"DECOUP_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ConfigError("DECOUP_THREADS must be >= 0")
    return k or (os.cpu_count() or 1)


def run_jobs(fn, jobs: list) -> list:
    """Map ``fn`` over independent jobs; results keep the job order."""
    k = min(thread_count(), len(jobs))
    if k <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, jobs))


# -- validation -------------------------------------------------------------------


def _check_shape(cfg: dict, need_s: bool = True) -> None:
    n, m = cfg["n"], cfg["m"]
    if n < 2:
        raise ConfigError("n must be >= 2")
    if m < 4 or m % 2:
        raise ConfigError("m must be an even integer >= 4")
    if need_s and not 0 <= cfg.get("s", 0) <= n - 1:
        raise ConfigError("s must lie in [0, n-1]")


def _check_scales(values, m: int, what: str) -> None:
    for v in values:
        try:
            scale_level(v, m)
        except ScaleError as exc:
            raise ConfigError(f"{what}={v}: {exc}") from None


def _check_ps(ps) -> None:
    if not ps or any(not (p >= 1) for p in ps):
        raise ConfigError("every p must be >= 1")


def _lattice(cfg: dict) -> LatticeSpec:
    if not 0 < cfg["step"] <= 0.5:
        raise ConfigError("step must lie in (0, 1/2]")
    if cfg["mc_count"] < 1:
        raise ConfigError("mc_count must be positive")
    return LatticeSpec(
        mode=cfg["lattice_mode"], step=cfg["step"], count=cfg["mc_count"], seed=cfg["lattice_seed"],
        max_tensor_points=cfg["max_tensor_points"],
    )


# -- output -----------------------------------------------------------------------


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "undefined" if math.isnan(v) else f"{v:.17g}"
    return str(v)


class CsvOut:
    def __init__(self, path: str | None, kind: str):
        self.fh = open(path, "w", newline="") if path else sys.stdout
        self.close_fh = bool(path)
        self.fh.write(f"# {CSV_SCHEMA} {kind}\n")
        self.w = csv.writer(self.fh, lineterminator="\n")

    def row(self, values) -> None:
        self.w.writerow([fmt(v) for v in values])

    def close(self) -> None:
        self.fh.flush()
        if self.close_fh:
            self.fh.close()


def ratio_row(r: RatioResult) -> list:
    return [r.n, r.m, r.s, r.p, r.K, r.R, r.family, r.trial_seed, r.lhs, r.rhs, r.ratio,
            r.lattice_mode, r.points, f"{r.runtime_ms:.3f}", r.row_kind, r.ratio_stderr, r.lattice_seed]


def _summary(text: str) -> None:
    print(text, file=sys.stderr)


def _emit_plots(cfg: dict, kind: str, series: dict, fits: dict, title: str) -> None:
    if cfg.get("emit_plot_script"):
        write_plot_data(cfg["emit_plot_script"], series, kind)
    if cfg.get("figure"):
        render_figure(cfg["figure"], series, fits, title)


def _interval_cells(cap) -> list:
    out = []
    for iv in cap.coords:
        out += [str(iv.lo), str(iv.hi), str(iv.role)]
    return out


def _interval_header(d: int) -> list[str]:
    return [f"{c}_{j}" for j in range(1, d + 1) for c in ("lo", "hi", "role")]


# -- subcommands ----------------------------------------------------------------------


def cmd_caps(cfg: dict) -> int:
    _check_shape(cfg)
    _check_scales([cfg["R"]], cfg["m"], "R")
    n, m, s, R = cfg["n"], cfg["m"], cfg["s"], cfg["R"]
    surf = SurfaceSpec.standard(n, m, s)
    fam = cap_family(R, m, s, n, surf.surface_id)
    out = CsvOut(cfg["out"], "caps")
    out.row(["index", *_interval_header(n - 1), "volume"])
    for i, cap in enumerate(fam):
        out.row([i, *_interval_cells(cap), str(cap.volume)])
    out.close()
    rep = verify_cover(fam)
    _summary(f"caps n={n} m={m} s={s} R={R}: {len(fam)} caps; {rep.summary()}")
    return 0 if rep.ok else 1


def cmd_regions(cfg: dict) -> int:
    _check_shape(cfg)
    _check_scales([cfg["K"]], cfg["m"], "K")
    n, m, s, K = cfg["n"], cfg["m"], cfg["s"], cfg["K"]
    regs = omega_regions(K, m, s, n)
    out = CsvOut(cfg["out"], "regions")
    out.row(["kind", "label", *_interval_header(n - 1), "volume"])
    for r in regs:
        out.row(["region", "".join(map(str, r.label)) or "-", *_interval_cells(r.cap), str(r.cap.volume)])
    rep = verify_cover([r.cap for r in regs])
    ok = rep.ok
    msg = f"regions n={n} m={m} s={s} K={K}: {len(regs)} regions; {rep.summary()}"
    if cfg["coarse"]:
        taus = coarse_caps(K, m, s, n)
        for i, tau in enumerate(taus):
            out.row(["coarse", i, *_interval_cells(tau), str(tau.volume)])
        crep = verify_cover(list(taus), regs[-1].cap)
        ok = ok and crep.ok
        msg += f"; {len(taus)} coarse caps, {crep.summary()}"
    out.close()
    _summary(msg)
    return 0 if ok else 1


def cmd_verify_rescale(cfg: dict) -> int:
    _check_shape(cfg)
    m = cfg["m"]
    _check_scales([cfg["K"], cfg["R"]], m, "scale")
    n, s, K, R = cfg["n"], cfg["s"], cfg["K"], cfg["R"]
    if R <= K:
        raise ConfigError("R must be larger than K")
    surf = SurfaceSpec.standard(n, m, s)
    rep = verify_membership_claim(surf, K, R)
    eta = np.random.default_rng(0).random((257, n - 1))
    out = CsvOut(cfg["out"], "verify-rescale")
    out.row(["tau_index", "tau", "roles", "s_new", "fine_caps", "exceptions", "phase_identity_err", "nondegenerate"])
    ok = rep.ok
    worst = 0.0
    for i, (tau, checked, bad) in enumerate(rep.per_tau):
        change = affine_for_cap(tau, surf)
        err = phase_identity_error(change, eta)
        nd = all(r.ok for r in nondegeneracy_of(change))
        worst = max(worst, err)
        ok = ok and nd and err <= 1e-12
        roles = ";".join(str(iv.role) for iv in tau.coords)
        out.row([i, str(tau), roles, change.s_new, checked, bad, err, nd])
    out.close()
    state = "pass" if ok else "FAIL"
    _summary(
        f"verify-rescale n={n} m={m} s={s} K={K} R={R}: {state}; {rep.summary()}; "
        f"lambda check {'ok' if rep.lam_tilde_ok else 'FAILED'}; worst phase identity error {worst:.2e}"
    )
    for theta, img, why in rep.exceptions[:5]:
        _summary(f"  exception: {theta} -> {img} ({why})")
    return 0 if ok else 1


def _fits(rows, ps) -> dict:
    fits = {}
    best = max_rows(rows)
    for p in ps:
        pts = sorted((r.R, r.ratio) for r in best if r.p == p)
        if len(pts) >= 3:
            fits[p] = fit_slope([a for a, _ in pts], [b for _, b in pts])
    return fits


def cmd_ratio_sweep(cfg: dict) -> int:
    _check_shape(cfg)
    _check_scales(cfg["R"], cfg["m"], "R")
    _check_ps(cfg["p"])
    if cfg["trials"] < 1:
        raise ConfigError("trials must be >= 1")
    lat = _lattice(cfg)
    Rs = sorted(set(cfg["R"]))
    config = SweepConfig(cfg["n"], cfg["m"], cfg["s"], tuple(cfg["p"]), tuple(Rs), cfg["trials"], cfg["seed"],
                         cfg["family"], lat)
    per_R = run_jobs(lambda R: sweep_rows(config, R), Rs)
    rows = sorted((r for block in per_R for r in block), key=lambda r: (r.R, r.trial_seed, r.p))
    best = max_rows(rows)
    out = CsvOut(cfg["out"], "ratio-sweep")
    out.row(RATIO_COLUMNS)
    for r in rows + best:
        out.row(ratio_row(r))
    out.close()
    fits = _fits(rows, config.ps)
    ok = True
    parts = []
    for p in config.ps:
        if p in fits:
            f = fits[p]
            parts.append(f"p={p:g} slope {f.slope:+.4f} (residual {f.residual:.3f})")
            if cfg["max_slope"] is not None and not f.slope <= cfg["max_slope"]:
                ok = False
    if cfg["max_slope"] is not None and len(Rs) < 3:
        raise ConfigError("--max-slope needs at least three scales")
    series = series_from_rows(best)
    _emit_plots(cfg, "ratio-sweep", series, {f"p={p:g}": (f.slope, f.intercept) for p, f in fits.items()},
                f"max-over-trials decoupling ratio, n={config.n}, m={config.m}")
    _summary(f"ratio-sweep n={config.n} m={config.m} s={config.s} R={Rs}: {len(rows)} rows; "
             + ("; ".join(parts) if parts else "no slope fit (fewer than 3 scales)")
             + ("" if ok else f"; slope above {cfg['max_slope']}"))
    return 0 if ok else 1


def cmd_sharpness(cfg: dict) -> int:
    _check_shape(cfg, need_s=False)
    _check_scales(cfg["R"], cfg["m"], "R")
    _check_ps(cfg["p"])
    if any(p < 2 for p in cfg["p"]):
        raise ConfigError("sharpness needs p >= 2")
    Rs = sorted(set(cfg["R"]))
    if len(Rs) < 3:
        raise ConfigError("a slope fit needs at least three scales")
    n, m, ps = cfg["n"], cfg["m"], tuple(cfg["p"])
    lat = _lattice(cfg)
    per_R = run_jobs(lambda R: sharpness_rows(n, m, ps, R, lat, cfg["lhs_radius"]), Rs)
    rows = sorted((r for block in per_R for r in block), key=lambda r: (r.R, r.p))
    out = CsvOut(cfg["out"], "sharpness")
    out.row(RATIO_COLUMNS)
    for r in rows:
        out.row(ratio_row(r))
    out.close()
    ok = True
    parts, fits = [], {}
    for p in ps:
        pts = [(r.R, r.ratio) for r in rows if r.p == p]
        f = fit_slope([a for a, _ in pts], [b for _, b in pts])
        fits[p] = f
        pred = predicted_sharpness_exponent(n, p)
        good = abs(f.slope - pred) <= cfg["tolerance"]
        ok = ok and good
        parts.append(f"p={p:g} slope {f.slope:+.4f} vs predicted {pred:+.4f} {'ok' if good else 'OFF'}")
    if 6.0 in fits and 8.0 in fits and n == 2:
        gap = fits[8.0].slope - fits[6.0].slope
        good = gap >= cfg["min_gap"]
        ok = ok and good
        parts.append(f"gap(8,6) {gap:+.4f} {'ok' if good else 'SMALL'}")
    _emit_plots(cfg, "sharpness", series_from_rows(rows),
                {f"p={p:g}": (f.slope, f.intercept) for p, f in fits.items()},
                f"focusing example, n={n}, m={m}, p_c={critical_exponent(n):g}")
    _summary(f"sharpness n={n} m={m} R={Rs}: " + "; ".join(parts))
    return 0 if ok else 1


def _trivial_family(name: str, caps, trials: int, seed: int):
    if name == "random_phase":
        return random_phase(caps, trials, seed)
    if name == "focusing":
        return focusing(caps)
    return single_cap(caps, len(caps) // 2)


def cmd_trivial_check(cfg: dict) -> int:
    _check_shape(cfg)
    _check_scales(cfg["K"], cfg["m"], "K")
    _check_ps(cfg["p"])
    n, m, s = cfg["n"], cfg["m"], cfg["s"]
    lat = _lattice(cfg)
    surf = SurfaceSpec.standard(n, m, s)
    jobs = [(K, fam) for K in sorted(set(cfg["K"])) for fam in cfg["family"]]
    ntau = {}

    def job(item):
        K, fam = item
        caps = list(coarse_caps(K, m, s, n))
        ntau[K] = len(caps)
        g = _trivial_family(fam, caps, cfg["trials"], cfg["seed"])
        return trivial_decoupling_check(g, surf, K, cfg["p"], cfg["c"], lat)

    rows = [r for block in run_jobs(job, jobs) for r in block]
    out = CsvOut(cfg["out"], "trivial-check")
    out.row(RATIO_COLUMNS + ["bound", "n_tau"])
    ok = True
    worst = {}
    for r in rows:
        out.row(ratio_row(r) + [r.bound, ntau[r.K]])
        if not (r.defined and r.ratio <= r.bound):
            ok = False
        key = (r.K, r.family)
        worst[key] = max(worst.get(key, 0.0), r.ratio)
        if r.family == "focusing" and r.p == cfg["focus_p"]:
            if not r.ratio >= cfg["focus_fraction"] * math.sqrt(ntau[r.K]):
                ok = False
    out.close()
    parts = [f"K={K} {fam}: max {v:.3f}" for (K, fam), v in sorted(worst.items())]
    _summary(f"trivial-check n={n} m={m} s={s}: {'pass' if ok else 'FAIL'}; " + "; ".join(parts))
    return 0 if ok else 1


def bench_function(rules, rank: int, seed: int) -> SeparableFunction:
    """Seeded smooth rank-``rank`` g; every factor has frequencies <= 2."""
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(rank):
        factors = []
        for _ in rules:
            a = rng.standard_normal(3)
            factors.append(lambda x, a=a: a[0] + a[1] * np.cos(2 * np.pi * x) + 1j * a[2] * np.sin(4 * np.pi * x))
        terms.append(factors)
    return SeparableFunction.from_callables(terms, rules, bandwidth=2.0)


def cmd_bench(cfg: dict) -> int:
    _check_shape(cfg, need_s=False)
    _check_scales([cfg["R"]], cfg["m"], "R")
    n, m, R = cfg["n"], cfg["m"], cfg["R"]
    pts, step = cfg["points"], cfg["step"]
    if pts < 1 or (pts > 1 and pts % 2 == 0):
        raise ConfigError("points must be 1 or odd")
    if not 0 < step <= 0.5:
        raise ConfigError("step must lie in (0, 1/2]")
    if cfg["rank"] < 1 or cfg["repeats"] < 1:
        raise ConfigError("rank and repeats must be >= 1")
    surf = SurfaceSpec.standard(n, m, 0)
    fam = cap_family(R, m, 0, n, surf.surface_id)
    if not 0 <= cfg["cap_index"] < len(fam):
        raise ConfigError(f"cap_index must lie in [0, {len(fam)})")
    Q = fam[cfg["cap_index"]]
    if pts == 1:
        X = Lattice.single(np.zeros(n))
    else:
        X = nyquist_lattice(Box.ball(np.zeros(n), step * (pts - 1) / 2), step)
    rules = plan_rules(Q, surf, X, bandwidth=2.0)
    g = bench_function(rules, cfg["rank"], cfg["seed"])
    dense = g.expand()
    t_dir, t_sep = math.inf, math.inf
    for _ in range(cfg["repeats"]):
        t0 = time.perf_counter()
        a = extend_direct(dense, Q, X, surf)
        t1 = time.perf_counter()
        b = extend_separable(g, Q, X, surf)
        t2 = time.perf_counter()
        t_dir, t_sep = min(t_dir, t1 - t0), min(t_sep, t2 - t1)
    diff = float(np.max(np.abs(a.values - b.values)))
    speedup = t_dir / t_sep if t_sep > 0 else math.inf
    out = CsvOut(cfg["out"], "bench")
    out.row(["n", "m", "R", "lattice_points", "rank", "direct_ms", "separable_ms", "speedup", "max_abs_diff", "seed",
             "quadrature_nodes"])
    out.row([n, m, R, X.size, cfg["rank"], f"{t_dir * 1e3:.3f}", f"{t_sep * 1e3:.3f}", f"{speedup:.3f}", diff,
             cfg["seed"], dense.values.size])
    out.close()
    if cfg["dump_field"]:
        with open(cfg["dump_field"], "w", newline="") as fh:
            fh.write(f"# {CSV_SCHEMA} field\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j}" for j in range(1, n + 1)] + ["re", "im"])
            w.writerows(b.to_csv_rows())
    ok = diff <= cfg["max_diff"]
    asserted = X.size > 1
    if asserted:
        ok = ok and speedup >= cfg["min_speedup"]
    _summary(
        f"bench n={n} m={m} R={R} lattice={X.size}: direct {t_dir * 1e3:.1f} ms, separable {t_sep * 1e3:.1f} ms, "
        f"speedup {speedup:.1f}x{'' if asserted else ' (not asserted)'}, max diff {diff:.2e}: "
        f"{'pass' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


COMMANDS = {
    "caps": cmd_caps,
    "regions": cmd_regions,
    "verify-rescale": cmd_verify_rescale,
    "ratio-sweep": cmd_ratio_sweep,
    "sharpness": cmd_sharpness,
    "trivial-check": cmd_trivial_check,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        thread_count()
        return COMMANDS[args.command](cfg)
    except (ConfigError, ScaleError) as exc:
        print(f"decoup {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
