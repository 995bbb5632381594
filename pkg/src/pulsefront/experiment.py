"""Sweep driver: configs, per-point runs, predictions, verdicts and reports."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis as an
from .errors import ConfigError, InsufficientDataError, PulsefrontError
from .kpp import minimal_speed
from .reaction import from_spec, validate_hypotheses
from .simulate import (Grid1D, ImexStepper, ProbeConfig, SystemParams, dump_snapshot, extend,
                       initial_front, run_until_front)
from .theta import a_profile, predict_sign, r_bounds

log = logging.getLogger(__name__)

FMT = "%.10g"


# ---------------------------------------------------------------------------
# config


@dataclass
class Seed:
    width: float = 0.2
    offset: float = 0.0  # interface shift, in periods


@dataclass
class ExperimentConfig:
    reactions: tuple  # (species1 spec, species2 spec) as dicts
    d: list
    alpha: list
    k_schedule: list
    period: float = 1.0
    nodes_per_period: int = 256
    periods: int = 40
    output_dt: float = 0.05
    horizon: float = 30.0
    horizon_max: float = 120.0
    seeds: list = field(default_factory=lambda: [Seed()])
    d_exis_check: bool = False
    sign_margin: float = 0.2
    resolution: int = 128
    snapshot_half_periods: int = 6
    dump_snapshots: bool = False
    config_hash: str = ""

    def species(self):
        return (from_spec(self.reactions[0], self.period), from_spec(self.reactions[1], self.period))

    @property
    def points(self):
        return [(d, a) for d in self.d for a in self.alpha]


def _as_list(v, name):
    if isinstance(v, (int, float)):
        return [float(v)]
    if isinstance(v, list) and v and all(isinstance(x, (int, float)) for x in v):
        return [float(x) for x in v]
    raise ConfigError(f"{name} must be a number or a nonempty list of numbers")


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Build a validated config from TOML text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    try:
        re = raw["reactions"]
        specs = (dict(re["species1"]), dict(re["species2"]))
    except KeyError as exc:
        raise ConfigError("config needs [reactions.species1] and [reactions.species2]") from exc
    grid = raw.get("grid", {})
    seeds = [Seed(**s) if isinstance(s, dict) else Seed(width=float(s)) for s in raw.get("seeds", [{}])]
    cfg = ExperimentConfig(
        reactions=specs,
        d=_as_list(raw.get("d", 1.0), "d"),
        alpha=_as_list(raw.get("alpha", 1.0), "alpha"),
        k_schedule=_as_list(raw.get("k_schedule", [100.0]), "k_schedule"),
        period=float(raw.get("period", 1.0)),
        nodes_per_period=int(grid.get("nodes_per_period", 256)),
        periods=int(grid.get("periods", 40)),
        output_dt=float(grid.get("output_dt", 0.05)),
        horizon=float(raw.get("horizon", 30.0)),
        horizon_max=float(raw.get("horizon_max", 4 * float(raw.get("horizon", 30.0)))),
        seeds=seeds,
        d_exis_check=bool(raw.get("d_exis_check", False)),
        sign_margin=float(raw.get("sign_margin", 0.2)),
        resolution=int(raw.get("prediction", {}).get("resolution", 128)),
        snapshot_half_periods=int(grid.get("snapshot_half_periods", 6)),
        dump_snapshots=bool(raw.get("dump_snapshots", False)),
        config_hash=hashlib.sha256(text.encode()).hexdigest()[:16],
    )
    for key, val in (overrides or {}).items():
        if val is not None:
            setattr(cfg, key, val)
    if cfg.horizon_max < cfg.horizon:
        cfg.horizon_max = cfg.horizon
    validate_config(cfg)
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


def bistability_threshold(r1, r2, alpha: float) -> float:
    """``max(M1 / a2, M2 / (alpha a1))``."""
    return max(r1.m_max / r2.zero_level, r2.m_max / (alpha * r1.zero_level))


def validate_config(cfg: ExperimentConfig):
    ks = cfg.k_schedule
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ConfigError("k_schedule must be strictly increasing")
    if any(d <= 0 for d in cfg.d) or any(a <= 0 for a in cfg.alpha):
        raise ConfigError("d and alpha must be positive")
    if cfg.nodes_per_period < 64:
        raise ConfigError("nodes_per_period must be at least 64")
    if cfg.periods < 2 * 5 + 4:
        raise ConfigError("window needs room for two 5-period guard bands")
    r1, r2 = cfg.species()
    for a in cfg.alpha:
        kb = bistability_threshold(r1, r2, a)
        if ks[0] <= kb:
            raise ConfigError(f"k={ks[0]} does not exceed the bistability threshold {kb:.4g} at alpha={a}")


def d_exis(r1, r2, period: float) -> float:
    """``M2 (L/pi - 1/sqrt(M1))^2`` when ``L sqrt(M1) > pi``, else 0."""
    m1, m2 = r1.m_max, r2.m_max
    if period * math.sqrt(m1) > math.pi:
        return m2 * (period / math.pi - 1 / math.sqrt(m1)) ** 2
    return 0.0


def h_freq(r1, r2, period: float, d: float) -> bool:
    """High-frequency condition ``L < pi (1/sqrt(M1) + sqrt(d/M2))``."""
    return period < math.pi * (1 / math.sqrt(r1.m_max) + math.sqrt(d / r2.m_max))


# ---------------------------------------------------------------------------
# single point


def _run_id(d, alpha, k, seed_index):
    return f"d{d:g}_a{alpha:g}_k{k:g}_s{seed_index}"


def _speed_with_extension(traj, params, cfg, stepper, probe):
    """Estimate the speed, extending the run when the data cannot support it."""
    notes = []
    while True:
        try:
            ds = an.dual_speed(traj, cfg.period)
        except InsufficientDataError as exc:
            need = getattr(exc, "needed_time", None)
            span = traj.times[-1]
            if need is None or span >= cfg.horizon_max:
                notes.append("fallback-ols")
                s1 = an.fallback_speed(traj.times, traj.crossing1)
                s2 = an.fallback_speed(traj.times, traj.crossing2)
                ds = an.DualSpeed(s2, s1, "u2") if s2.c > 0 else an.DualSpeed(s1, s2, "u1")
                return ds, traj, notes
            # trailing share of the log is 1 - burn_in = 3/4
            extra = min(cfg.horizon_max - span, max(1.05 * need * 4 / 3 - span, cfg.horizon / 4))
            notes.append(f"extended+{extra:.4g}")
            traj = extend(traj, params, extra, stepper, probe)
            continue
        c = ds.primary.c
        if an.C_FLOOR <= abs(c) <= 3 * an.C_FLOOR and traj.times[-1] < min(2 * cfg.horizon, cfg.horizon_max) - 1e-9:
            extra = min(2 * cfg.horizon, cfg.horizon_max) - traj.times[-1]
            notes.append("ambiguous-rerun")
            traj = extend(traj, params, extra, stepper, probe)
            continue
        return ds, traj, notes


def run_point(cfg: ExperimentConfig, d: float, alpha: float, k: float, seed_index: int = 0,
              out_dir: str | None = None) -> dict:
    """Simulate and analyse one ``(d, alpha, k, seed)``; errors are recorded, not raised."""
    rec = {"run_id": _run_id(d, alpha, k, seed_index), "d": d, "alpha": alpha, "k": k,
           "seed": seed_index, "config_hash": cfg.config_hash, "status": "ok"}
    try:
        rec.update(_run_point(cfg, d, alpha, k, seed_index, out_dir))
    except PulsefrontError as exc:
        rec["status"] = f"{type(exc).__name__}: {exc}"
    return rec


def _run_point(cfg, d, alpha, k, seed_index, out_dir):
    r1, r2 = cfg.species()
    params = SystemParams(d, alpha, k, r1, r2)
    grid = Grid1D(cfg.period, cfg.nodes_per_period, cfg.periods)
    seed = cfg.seeds[seed_index]
    centre = (cfg.periods // 2 + seed.offset) * cfg.period
    state = initial_front(grid, r1.zero_level, r2.zero_level, centre, seed.width)
    stepper = ImexStepper(params, grid)
    probe = ProbeConfig(output_dt=cfg.output_dt, snapshot_half_periods=cfg.snapshot_half_periods)
    traj = run_until_front(state, params, cfg.horizon, probe, stepper=stepper)
    ds, traj, notes = _speed_with_extension(traj, params, cfg, stepper, probe)
    sp = ds.primary
    t0 = sp.window[0]
    in_win = traj.times >= t0
    out = {
        "c": sp.c, "stderr": sp.stderr, "method": sp.method, "periods_used": sp.periods,
        "t_begin": sp.window[0], "t_end": sp.window[1], "level": ds.primary_level,
        "c_other_level": ds.secondary.c, "levels_consistent": ds.consistent,
        "seg_index": float(np.mean(traj.segregation[in_win])),
        "clamp_fraction": traj.clamp_fraction, "valid": traj.valid, "notes": ";".join(notes),
    }
    if abs(sp.c) > an.C_FLOOR:
        out.update(_moving_diagnostics(traj, params, cfg, sp.c, t0))
    else:
        out.update(_stationary_diagnostics(traj, params, cfg))
    if cfg.dump_snapshots and out_dir:
        target = Path(out_dir) / "snapshots" / _run_id(d, alpha, k, seed_index)
        target.mkdir(parents=True, exist_ok=True)
        dump_snapshot(traj.final, params, target)
    return out


def _moving_diagnostics(traj, params, cfg, c, t0):
    dx = cfg.period / cfg.nodes_per_period
    out = {}
    try:
        fb = an.extract_free_boundary(traj.snapshots, params.alpha, params.d, c, dx, cfg.period,
                                      t_min=t0, offset=an.layer_offset(params.k, dx),
                                      band=an.curvature_band(params.k))
        out.update({
            "xi_monotone_violation": fb.monotonicity_violation(),
            "xi_periodicity": fb.periodicity_deviation(),
            "flux_mismatch": fb.flux_mismatch(),
            "flux_negative": fb.fluxes_negative(),
            "flux_mean": float(np.mean(0.5 * (fb.flux_left + fb.flux_right))),
        })
        xp = an.xi_prime_check(fb, params.d)
        out["xi_prime_discrepancy"] = xp.median_discrepancy if xp.applicable else float("nan")
        step = max(1, len(fb.times) // 200)
        out["_xi_trace"] = (fb.times[::step].tolist(), fb.xi_of_t[::step].tolist())
    except PulsefrontError as exc:
        out["free_boundary_error"] = f"{type(exc).__name__}: {exc}"
    try:
        prof = an.reconstruct_profile(traj.snapshots, c, cfg.period, dx,
                                      params.r1.zero_level, params.r2.zero_level, t_min=t0)
        v1, v2 = prof.monotonicity_violation()
        l1, l2 = prof.limit_errors()
        out.update({"profile_monotone_violation": max(v1, v2), "profile_limit_error": max(l1, l2),
                    "profile_overlap": prof.overlap()})
    except PulsefrontError as exc:
        out["profile_error"] = f"{type(exc).__name__}: {exc}"
    return out


def _stationary_diagnostics(traj, params, cfg):
    out = {}
    try:
        f, p = traj.final, traj.previous
        eq = an.extract_equilibrium(f.grid.x, f.u1, f.u2, p.u1, p.u2, f.t - p.t, params)
        out.update({"eq_residual": eq.residual, "eq_zeros": eq.zeros, "eq_bounds_strict": eq.bounds_strict})
    except PulsefrontError as exc:
        out["equilibrium_error"] = f"{type(exc).__name__}: {exc}"
    return out


# ---------------------------------------------------------------------------
# predictions


def predictions(cfg: ExperimentConfig) -> list:
    """Sign prediction, R0 interval and speed bracket for every ``(d, alpha)``."""
    r1, r2 = cfg.species()
    bounds = r_bounds(cfg.d[0], r1, r2, resolution=cfg.resolution)
    c1 = minimal_speed(r1, 1.0).c_star
    rows = []
    for d in cfg.d:
        prof = a_profile(d, r1, r2, resolution=cfg.resolution)
        c2 = minimal_speed(r2, d).c_star
        for alpha in cfg.alpha:
            rep = predict_sign(d, alpha, r1, r2, resolution=cfg.resolution, profile=prof, bounds=bounds)
            rows.append({
                "d": d, "alpha": alpha, "ratio": rep.ratio,
                "r0_min": rep.r0_interval[0], "r0_max": rep.r0_interval[1],
                "r_lo": rep.r_lo, "r_hi": rep.r_hi, "margin": rep.margin(),
                "integral": rep.integral, "predicted": rep.predicted,
                "predicted_sign": rep.predicted_sign, "logistic_sign": rep.logistic_sign,
                "bracket_lo": -c2, "bracket_hi": c1,
                "h_freq": h_freq(r1, r2, cfg.period, d), "config_hash": cfg.config_hash,
            })
    return rows


# ---------------------------------------------------------------------------
# sweep


def _task(args):
    cfg, d, alpha, k, seed, out_dir = args
    return run_point(cfg, d, alpha, k, seed, out_dir)


def _extrapolate(ks, cs):
    """Fit ``c = a + b/k``; returns ``(a, b, rms residual)``."""
    inv = 1.0 / np.asarray(ks)
    if len(ks) < 2:
        return float(cs[0]), float("nan"), float("nan")
    A = np.column_stack([np.ones_like(inv), inv])
    coef, *_ = np.linalg.lstsq(A, np.asarray(cs), rcond=None)
    res = np.asarray(cs) - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2)))


def run_sweep(cfg: ExperimentConfig, workers: int = 1, out_dir: str | None = None):
    """All runs of the config plus their joins with the predictions.

    Returns ``(records, prediction_rows)``; both are sorted by parameter tuple.
    """
    tasks = [(cfg, d, a, k, s, out_dir) for d, a in cfg.points for k in cfg.k_schedule
             for s in range(len(cfg.seeds))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_task, tasks))
    else:
        records = [_task(t) for t in tasks]
    records.sort(key=lambda r: (r["d"], r["alpha"], r["seed"], r["k"]))
    preds = predictions(cfg)
    kmax = cfg.k_schedule[-1]
    for row in preds:
        for s in range(len(cfg.seeds)):
            mine = [r for r in records if r["d"] == row["d"] and r["alpha"] == row["alpha"]
                    and r["seed"] == s and r["status"] == "ok"]
            tag = f"_s{s}"
            if len(mine) == len(cfg.k_schedule):
                a, b, res = _extrapolate([r["k"] for r in mine], [r["c"] for r in mine])
                row["c_inf" + tag], row["c_inf_b" + tag], row["c_inf_residual" + tag] = a, b, res
                top = mine[-1]
                row["c_kmax" + tag] = top["c"]
                row["stderr_kmax" + tag] = top["stderr"]
                row["measured_sign" + tag] = measured_sign(top["c"])
            else:
                row["measured_sign" + tag] = None
        row["k_max"] = kmax
    return records, preds


def measured_sign(c: float) -> int:
    return 0 if abs(c) <= an.C_FLOOR else (1 if c > 0 else -1)


# ---------------------------------------------------------------------------
# verdicts


def _verdict(name, passed, detail):
    return {"criterion": name, "passed": bool(passed), "detail": detail}


def sweep_verdicts(cfg: ExperimentConfig, records, preds) -> list:
    out = []
    nseeds = len(cfg.seeds)
    bad = [r["run_id"] for r in records if r["status"] != "ok"]
    out.append(_verdict("runs_completed", not bad, f"{len(records) - len(bad)}/{len(records)} ok"
                        + (f"; failed: {' '.join(bad)}" if bad else "")))
    ok = [r for r in records if r["status"] == "ok"]
    invalid = [r["run_id"] for r in ok if not r["valid"]]
    out.append(_verdict("clamp_budget", not invalid, f"{len(invalid)} runs over the clamp budget"))
    incons = [r["run_id"] for r in ok if not r["levels_consistent"]]
    out.append(_verdict("level_agreement", not incons, f"{len(incons)} runs with disagreeing level-set speeds"))

    # sign agreement beyond the margin, plus the logistic corollary
    checked, wrong, lwrong = 0, [], []
    for row in preds:
        for s in range(nseeds):
            ms = row.get(f"measured_sign_s{s}")
            if ms is None:
                continue
            if row["margin"] > cfg.sign_margin and row["predicted_sign"] in (-1, 1):
                checked += 1
                if ms != row["predicted_sign"]:
                    wrong.append(f"d={row['d']:g},alpha={row['alpha']:g}")
            if row["logistic_sign"] is not None and row["predicted_sign"] in (-1, 1) \
                    and row["logistic_sign"] != row["predicted_sign"]:
                lwrong.append(f"d={row['d']:g},alpha={row['alpha']:g}")
    out.append(_verdict("sign_agreement", checked > 0 and not wrong,
                        f"{checked - len(wrong)}/{checked} outside-margin points agree"
                        + (f"; disagree: {' '.join(wrong)}" if wrong else "")))
    out.append(_verdict("logistic_corollary", not lwrong, f"{len(lwrong)} disagreements"))

    # speed bracket
    br = {(p["d"], p["alpha"]): (p["bracket_lo"], p["bracket_hi"]) for p in preds}
    outside = [r["run_id"] for r in ok if not (br[(r["d"], r["alpha"])][0] < r["c"] < br[(r["d"], r["alpha"])][1])]
    out.append(_verdict("speed_bracket", not outside, f"{len(ok) - len(outside)}/{len(ok)} inside"))

    # segregation
    if len(cfg.k_schedule) >= 2:
        fails, slopes = [], []
        for d, a in cfg.points:
            for s in range(nseeds):
                mine = [r for r in ok if r["d"] == d and r["alpha"] == a and r["seed"] == s]
                if len(mine) != len(cfg.k_schedule):
                    continue
                seg = [r["seg_index"] for r in mine]
                slope = an.loglog_slope([r["k"] for r in mine], seg)
                slopes.append(slope)
                if not (all(y < x for x, y in zip(seg, seg[1:])) and -1.4 <= slope <= -0.6):
                    fails.append(f"d={d:g},alpha={a:g},s={s}(slope={slope:.3g})")
        rng = f"slopes in [{min(slopes):.3g}, {max(slopes):.3g}]" if slopes else "no complete k-series"
        out.append(_verdict("segregation", bool(slopes) and not fails,
                            rng + (f"; failing: {' '.join(fails)}" if fails else "")))

    # free boundary at the largest k
    kmax = cfg.k_schedule[-1]
    moving = [r for r in ok if r["k"] == kmax and abs(r["c"]) > an.C_FLOOR]
    fb_fail = []
    for r in moving:
        if "free_boundary_error" in r:
            fb_fail.append(f"{r['run_id']}({r['free_boundary_error']})")
            continue
        dx = cfg.period / cfg.nodes_per_period
        if not (r["xi_monotone_violation"] < dx and r["xi_periodicity"] < 0.05
                and r["flux_mismatch"] < 0.05 and r["flux_negative"]):
            fb_fail.append(r["run_id"])
    if moving:
        out.append(_verdict("free_boundary", not fb_fail, f"{len(moving) - len(fb_fail)}/{len(moving)} moving runs pass"
                            + (f"; failing: {' '.join(fb_fail)}" if fb_fail else "")))

    # seeds
    if nseeds >= 2:
        dis = []
        for d, a in cfg.points:
            tops = [r for r in ok if r["d"] == d and r["alpha"] == a and r["k"] == kmax]
            for r in tops[1:]:
                if abs(r["c"] - tops[0]["c"]) > 2 * math.hypot(r["stderr"], tops[0]["stderr"]):
                    dis.append(f"d={d:g},alpha={a:g}")
        out.append(_verdict("seed_agreement", not dis, f"{len(dis)} points where seeds disagree"))

    if cfg.d_exis_check:
        out.extend(existence_verdicts(cfg))
    return out


def existence_verdicts(cfg: ExperimentConfig) -> list:
    r1, r2 = cfg.species()
    dx = d_exis(r1, r2, cfg.period)
    below = [d for d in cfg.d if not d > dx]
    hf = {d: h_freq(r1, r2, cfg.period, d) for d in cfg.d}
    return [
        _verdict("d_exis", not below, f"D_exis={dx:.6g}" + (f"; d not above: {below}" if below else "")),
        # reported, not gating: the high-frequency condition is sufficient only
        _verdict("h_freq_report", True, " ".join(f"d={d:g}:{'yes' if v else 'no'}" for d, v in hf.items())),
    ]


def check_verdicts(cfg: ExperimentConfig) -> list:
    """Hypotheses on the reactions and the k-schedule / existence audit."""
    r1, r2 = cfg.species()
    out = []
    for name, r in (("species1", r1), ("species2", r2)):
        rep = validate_hypotheses(r)
        out.append(_verdict(f"hypotheses_{name}", rep.passed,
                            " ".join(f"{c.name}={'ok' if c.passed else 'FAIL'}({c.worst:.3g})" for c in rep.checks)))
    kb = max(bistability_threshold(r1, r2, a) for a in cfg.alpha)
    out.append(_verdict("k_bistable", cfg.k_schedule[0] > kb, f"k_min={cfg.k_schedule[0]:g} threshold={kb:.6g}"))
    out.extend(existence_verdicts(cfg))
    return out


def prediction_verdicts(preds) -> list:
    nest = [p for p in preds if not (p["r_lo"] <= p["r0_min"] <= p["r0_max"] <= p["r_hi"])]
    rl = [p["r_lo"] for p in preds]
    rh = [p["r_hi"] for p in preds]
    same = max(rl) - min(rl) <= 1e-6 and max(rh) - min(rh) <= 1e-6
    return [
        _verdict("r0_nesting", not nest, f"{len(preds) - len(nest)}/{len(preds)} nested"),
        _verdict("r_bounds_d_independent", same, f"r_lo={rl[0]:.8g} r_hi={rh[0]:.8g}"),
    ]


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return FMT % v
    return str(v)


def write_csv(path, rows, columns=None):
    columns = columns or sorted({k for r in rows for k in r if not k.startswith("_")})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


SUMMARY_COLUMNS = [
    "run_id", "config_hash", "d", "alpha", "k", "seed", "status", "c", "stderr", "method",
    "periods_used", "t_begin", "t_end", "level", "c_other_level", "levels_consistent", "seg_index",
    "clamp_fraction", "valid", "xi_monotone_violation", "xi_periodicity", "flux_mismatch",
    "flux_negative", "flux_mean", "xi_prime_discrepancy", "profile_monotone_violation",
    "profile_limit_error", "profile_overlap", "eq_residual", "eq_zeros", "eq_bounds_strict",
    "free_boundary_error", "profile_error", "equilibrium_error", "notes",
]


def emit_report(out_dir, records, preds, verdicts, cfg: ExperimentConfig):
    """Write summary.csv, predictions.csv, verdicts.csv and the SVG plots."""
    from . import svg

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if records:
        write_csv(out / "summary.csv", records, SUMMARY_COLUMNS)
    if preds:
        write_csv(out / "predictions.csv", preds)
    for v in verdicts:
        v["config_hash"] = cfg.config_hash
    write_csv(out / "verdicts.csv", verdicts, ["criterion", "passed", "detail", "config_hash"])
    if records:
        svg.speed_vs_inverse_k(out / "speed_vs_inverse_k.svg", records)
        svg.xi_traces(out / "xi_traces.svg", records)
    if preds:
        svg.phase_diagram(out / "phase_diagram.svg", preds)
    return out


def default_out_dir(given: str | None) -> str:
    return given or os.environ.get("PULSEFRONT_OUT", "pulsefront_out")
