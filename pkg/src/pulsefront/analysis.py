"""Post-processing of simulated fronts.

Speeds from level-set crossing logs, profiles in travelling coordinates,
segregation index, free boundary of the combined field and equilibrium
extraction for the stationary regime.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateCoordinatesError,
    InsufficientDataError,
    MultiInterfaceError,
    NoInterfaceError,
    NotAFrontError,
    OutOfRangeError,
    PrematureExtractionError,
)
from .theta import eta

C_FLOOR = 1e-3


# ---------------------------------------------------------------------------
# speed


@dataclass(frozen=True)
class SpeedEstimate:
    c: float
    stderr: float
    window: tuple
    crossings_used: int
    method: str = "periodic"
    periods: int = 0

    @property
    def accepted(self) -> bool:
        return self.stderr < 0.02 * max(abs(self.c), C_FLOOR)

    def agrees_with(self, other: "SpeedEstimate", factor: float = 2.0, atol: float = 0.0) -> bool:
        return abs(self.c - other.c) <= factor * np.hypot(self.stderr, other.stderr) + atol


def _ols(t, y):
    """Slope and its standard error."""
    n = len(t)
    tm = t.mean()
    sxx = np.sum((t - tm) ** 2)
    if n < 2 or sxx == 0:
        raise InsufficientDataError("regression needs at least two distinct times")
    slope = np.sum((t - tm) * (y - y.mean())) / sxx
    if n < 3:
        return float(slope), np.inf
    resid = y - y.mean() - slope * (t - tm)
    return float(slope), float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx))


def _interval_mean(t, y, a, b):
    """Exact mean over [a, b] of the piecewise-linear interpolant of (t, y)."""
    inner = (t > a) & (t < b)
    tt = np.concatenate([[a], t[inner], [b]])
    yy = np.interp(tt, t, y)
    return float(np.sum(0.5 * (yy[1:] + yy[:-1]) * np.diff(tt)) / (b - a))


def _check_monotone(t, y, direction, jitter):
    if direction == 0:
        return
    run = np.maximum.accumulate(y) if direction > 0 else np.minimum.accumulate(y)
    back = np.max(np.abs(run - y))
    if back > jitter:
        raise NotAFrontError(f"crossing sequence moves backwards by {back:.3g} > {jitter:.3g}")


def estimate_speed(times, positions, period: float, *, burn_in: float = 0.25,
                   min_periods: int = 3, min_time: float = 5.0, c_floor: float = C_FLOOR,
                   jitter: float | None = None, max_iter: int = 30) -> SpeedEstimate:
    """Speed of a crossing log ``positions(times)``.

    The trailing ``1 - burn_in`` of the log is available.  For a moving front
    the window is an integer number of pulsation periods ``L/|c|``: means over
    consecutive periods cancel the periodic residual exactly, and the slope of
    those means is fitted by least squares.  The period is re-estimated until
    the window stops changing.  Near-stationary fronts (``|c| <= c_floor``)
    use a plain fit over the last ``min_time``.
    """
    t = np.asarray(times, float)
    y = np.asarray(positions, float)
    if t.size < 8 or not np.all(np.isfinite(y)):
        raise InsufficientDataError(f"{t.size} crossings are not enough")
    jitter = 0.05 * period if jitter is None else jitter
    t_avail = t[0] + burn_in * (t[-1] - t[0])
    sel = t >= t_avail
    c0, _ = _ols(t[sel], y[sel])
    _check_monotone(t[sel], y[sel], np.sign(c0) if abs(c0) > c_floor else 0, jitter)

    if abs(c0) <= c_floor:
        return _stationary(t, y, min_time, c_floor)

    c = c0
    seen = set()
    for _ in range(max_iter):
        tp = period / abs(c)
        m = int(np.floor((t[-1] - t_avail) / tp))
        if m < min_periods:
            err = InsufficientDataError(
                f"only {m} pulsation periods of length {tp:.3g} available, {min_periods} needed"
            )
            err.needed_time = (t[-1] - t_avail) + (min_periods - m) * tp
            err.speed_guess = c
            raise err
        edges = t[-1] - tp * np.arange(m, -1, -1)
        means = np.array([_interval_mean(t, y, a, b) for a, b in zip(edges[:-1], edges[1:])])
        mids = 0.5 * (edges[:-1] + edges[1:])
        c_new, se = _ols(mids, means)
        key = (m, round(c_new, 12))
        if abs(c_new - c) <= 1e-10 * max(abs(c), 1.0) or key in seen:
            c = c_new
            break
        seen.add(key)
        c = c_new
        if abs(c) <= c_floor:
            return _stationary(t, y, min_time, c_floor)
    used = int(np.sum(t >= edges[0]))
    return SpeedEstimate(float(c), float(se), (float(edges[0]), float(t[-1])), used, "periodic", m)


def _stationary(t, y, min_time, c_floor):
    sel = t >= t[-1] - min_time
    if sel.sum() < 8:
        raise InsufficientDataError("stationary window holds fewer than 8 crossings")
    c, se = _ols(t[sel], y[sel])
    return SpeedEstimate(c, se, (float(t[sel][0]), float(t[-1])), int(sel.sum()), "stationary", 0)


def fallback_speed(times, positions, burn_in: float = 0.25) -> SpeedEstimate:
    """Plain trailing least squares, used when too few periods were simulated."""
    t = np.asarray(times, float)
    y = np.asarray(positions, float)
    sel = t >= t[0] + burn_in * (t[-1] - t[0])
    c, se = _ols(t[sel], y[sel])
    return SpeedEstimate(c, se, (float(t[sel][0]), float(t[-1])), int(sel.sum()), "trailing-ols", 0)


@dataclass(frozen=True)
class DualSpeed:
    """Speeds from both level sets; ``primary`` follows the sign rule."""

    primary: SpeedEstimate
    secondary: SpeedEstimate
    primary_level: str

    @property
    def consistent(self) -> bool:
        # both level sets converge to the same speed at the same exponential
        # rate; the floor absorbs the residual transient the stderr ignores
        atol = 1e-3 * max(abs(self.primary.c), C_FLOOR)
        return self.primary.agrees_with(self.secondary, atol=atol)


def dual_speed(traj, period, **kw) -> DualSpeed:
    """u2 = a2/2 crossings drive the estimate for advancing fronts, u1 = a1/2 otherwise."""
    s1 = estimate_speed(traj.times, traj.crossing1, period, **kw)
    s2 = estimate_speed(traj.times, traj.crossing2, period, **kw)
    if s2.c > 0 and s1.c > 0:
        return DualSpeed(s2, s1, "u2")
    return DualSpeed(s1, s2, "u1")


# ---------------------------------------------------------------------------
# profiles


@dataclass
class ProfileSamples:
    xi_grid: np.ndarray
    x_grid: np.ndarray
    phi1: np.ndarray  # shape (len(xi_grid), len(x_grid))
    phi2: np.ndarray
    a1: float = 1.0
    a2: float = 1.0
    occupancy: np.ndarray | None = None

    def psi(self, alpha, d):
        """``(psi_d, psi_1) = (alpha phi1 - d phi2, alpha phi1 - phi2)``."""
        return alpha * self.phi1 - d * self.phi2, alpha * self.phi1 - self.phi2

    def monotonicity_violation(self) -> tuple:
        """Largest per-column increase of phi1 and decrease of phi2 along xi."""
        v1 = np.max(np.diff(self.phi1, axis=0), initial=0.0)
        v2 = np.max(-np.diff(self.phi2, axis=0), initial=0.0)
        return float(v1), float(v2)

    def is_monotone(self, rtol=1e-3) -> bool:
        v1, v2 = self.monotonicity_violation()
        return v1 <= rtol * self.a1 and v2 <= rtol * self.a2

    def limit_errors(self) -> tuple:
        return (float(np.max(np.abs(self.phi1[0] - self.a1))),
                float(np.max(np.abs(self.phi2[-1] - self.a2))))

    def overlap(self) -> float:
        """``int int phi1 phi2 dxi dx`` over the sampled cell (one period in x)."""
        dxi = self.xi_grid[1] - self.xi_grid[0]
        dx = self.x_grid[1] - self.x_grid[0]
        return float(np.sum(self.phi1 * self.phi2) * dxi * dx)


def _first_crossing(xi, col, level):
    """First xi where col drops below level."""
    idx = np.nonzero(col < level)[0]
    if idx.size == 0 or idx[0] == 0:
        return None
    i = idx[0]
    w = (col[i - 1] - level) / (col[i - 1] - col[i])
    return xi[i - 1] + w * (xi[i] - xi[i - 1])


def _last_below(xi, col, level):
    """Largest xi where col is still below level."""
    idx = np.nonzero(col < level)[0]
    if idx.size == 0 or idx[-1] == len(col) - 1:
        return None
    j = idx[-1]
    w = (level - col[j]) / (col[j + 1] - col[j])
    return xi[j] + w * (xi[j + 1] - xi[j])


def anchor(profile: ProfileSamples, c_sign: float) -> float:
    """Position of the normalisation anchor on the current xi grid."""
    xi = profile.xi_grid
    if c_sign <= 0:
        cuts = [_first_crossing(xi, profile.phi1[:, j], profile.a1 / 2) for j in range(len(profile.x_grid))]
        pick = min
    else:
        cuts = [_last_below(xi, profile.phi2[:, j], profile.a2 / 2) for j in range(len(profile.x_grid))]
        pick = max
    if any(v is None for v in cuts):
        raise OutOfRangeError("normalisation anchor not bracketed by the xi grid")
    return float(pick(cuts))


def normalize(profile: ProfileSamples, c_sign: float):
    """Translate so the anchor sits at xi = 0.

    Inf-rule on phi1 when ``c_sign <= 0``, sup-rule on phi2 otherwise.  The
    profile is resampled on the same xi grid; returns ``(profile, shift)``
    where ``shift`` is the translation applied to xi.
    """
    xi0 = anchor(profile, c_sign)
    xi = profile.xi_grid

    def resample(phi):
        out = np.empty_like(phi)
        for j in range(phi.shape[1]):
            out[:, j] = np.interp(xi + xi0, xi, phi[:, j])
        return out

    return replace(profile, phi1=resample(profile.phi1), phi2=resample(profile.phi2)), -xi0


def reconstruct_profile(snapshots, c: float, period: float, dx: float, a1: float, a2: float,
                        t_min: float = -np.inf, xi_step: float | None = None,
                        c_floor: float = C_FLOOR) -> ProfileSamples:
    """Bin snapshot samples by ``(xi = x - c t, x mod L)``.

    Within each cell the mean xi and mean values are kept; each column is then
    interpolated onto a uniform xi grid from its cell-mean positions, which
    removes the first-order binning bias.  Only the xi range covered by every
    column is returned.
    """
    if abs(c) <= c_floor:
        raise DegenerateCoordinatesError(f"|c| = {abs(c):.3g} too small for travelling coordinates")
    snaps = [s for s in snapshots if s.t >= t_min]
    if not snaps:
        raise InsufficientDataError("no snapshots in the requested time range")
    npp = int(round(period / dx))
    xi_step = dx if xi_step is None else xi_step

    idx = np.concatenate([s.start + np.arange(len(s.u1)) for s in snaps])
    tt = np.concatenate([np.full(len(s.u1), s.t) for s in snaps])
    u1 = np.concatenate([s.u1 for s in snaps])
    u2 = np.concatenate([s.u2 for s in snaps])
    xi = idx * dx - c * tt
    col = np.mod(idx, npp)
    lo = np.floor(xi.min() / xi_step) * xi_step
    b = np.floor((xi - lo) / xi_step).astype(np.int64)
    nb = int(b.max()) + 1
    key = b * npp + col
    size = nb * npp
    cnt = np.bincount(key, minlength=size).astype(float)
    sx = np.bincount(key, xi, size)
    s1 = np.bincount(key, u1, size)
    s2 = np.bincount(key, u2, size)
    occ = cnt.reshape(nb, npp)
    with np.errstate(invalid="ignore", divide="ignore"):
        mx = (sx / cnt).reshape(nb, npp)
        m1 = (s1 / cnt).reshape(nb, npp)
        m2 = (s2 / cnt).reshape(nb, npp)

    # xi span covered by every column
    filled = occ > 0
    first = np.array([np.argmax(filled[:, j]) for j in range(npp)])
    last = np.array([nb - 1 - np.argmax(filled[::-1, j]) for j in range(npp)])
    if np.any(~filled.any(axis=0)):
        raise InsufficientDataError("some x columns received no samples")
    lo_i, hi_i = first.max() + 1, last.min() - 1
    if hi_i - lo_i < 4:
        raise InsufficientDataError("snapshot windows do not overlap in travelling coordinates")
    grid = lo + (np.arange(lo_i, hi_i + 1) + 0.5) * xi_step
    phi1 = np.empty((grid.size, npp))
    phi2 = np.empty((grid.size, npp))
    for j in range(npp):
        ok = filled[:, j]
        phi1[:, j] = np.interp(grid, mx[ok, j], m1[ok, j])
        phi2[:, j] = np.interp(grid, mx[ok, j], m2[ok, j])
    return ProfileSamples(grid, np.arange(npp) * dx, phi1, phi2, a1, a2, occ[lo_i:hi_i + 1])


# ---------------------------------------------------------------------------
# segregation


def segregation_index(u1, u2, x, window=None) -> float:
    """Trapezoid integral of ``u1 u2`` over ``window`` (default: whole grid)."""
    x = np.asarray(x, float)
    prod = np.asarray(u1, float) * np.asarray(u2, float)
    if window is not None:
        lo, hi = window
        if lo < x[0] - 1e-12 or hi > x[-1] + 1e-12:
            raise OutOfRangeError("segregation window outside the grid")
        sel = (x >= lo) & (x <= hi)
        x, prod = x[sel], prod[sel]
    return float(np.trapezoid(prod, x))


def loglog_slope(ks, values):
    """Least-squares slope of log(values) against log(ks)."""
    return float(np.polyfit(np.log(ks), np.log(values), 1)[0])


# ---------------------------------------------------------------------------
# free boundary


@dataclass
class FreeBoundaryTrace:
    times: np.ndarray
    xi_of_t: np.ndarray
    flux_left: np.ndarray
    flux_right: np.ndarray
    curv_left: np.ndarray
    curv_right: np.ndarray
    s: float
    dx: float
    period: float
    offset: int = 2

    def monotonicity_violation(self) -> float:
        """Largest backward step of Xi against the direction of s."""
        y = self.xi_of_t if self.s >= 0 else -self.xi_of_t
        run = np.maximum.accumulate(y)
        return float(np.max(run - y))

    def is_monotone(self) -> bool:
        return self.monotonicity_violation() < self.dx

    def flux_mismatch(self) -> float:
        """Max over time of ``|flux_left - flux_right| / |flux_left|``."""
        return float(np.max(np.abs(self.flux_left - self.flux_right) / np.abs(self.flux_left)))

    def fluxes_negative(self) -> bool:
        return bool(np.all(self.flux_left < 0) and np.all(self.flux_right < 0))

    def inverse(self, x):
        """Xi^{-1}(x) by monotone interpolation; ties resolved by their mid-time."""
        xi, t = self.xi_of_t, self.times
        if self.s < 0:
            xi, x = -xi, -np.asarray(x)
        xi = np.maximum.accumulate(xi)
        uniq, inv = np.unique(xi, return_inverse=True)
        tm = np.bincount(inv, t) / np.bincount(inv)
        return np.interp(x, uniq, tm, left=np.nan, right=np.nan)

    def periodicity_deviation(self, samples: int = 200) -> float:
        """``max |g(x + L) - g(x)| / L`` for ``g(x) = x - s Xi^{-1}(x)``."""
        lo, hi = np.sort([self.xi_of_t[0], self.xi_of_t[-1]])
        if hi - lo <= self.period:
            raise InsufficientDataError("free boundary covers less than one period")
        x = np.linspace(lo, hi - self.period, samples)
        g0 = x - self.s * self.inverse(x)
        g1 = x + self.period - self.s * self.inverse(x + self.period)
        dev = np.abs(g1 - g0)
        return float(np.nanmax(dev) / self.period)


def _sign_change(v):
    """Index ``i`` with v[i] > 0 >= v[i+1]; exactly one change required."""
    s = np.sign(v)
    nz = np.nonzero(s)[0]
    if nz.size == 0:
        raise NoInterfaceError("field vanishes identically")
    flips = np.nonzero(s[nz][1:] != s[nz][:-1])[0]
    if flips.size == 0:
        raise NoInterfaceError("combined field keeps one sign")
    if flips.size > 1:
        raise MultiInterfaceError(f"{flips.size} sign changes in the combined field")
    i, j = nz[flips[0]], nz[flips[0] + 1]
    if s[i] < 0:
        raise MultiInterfaceError("combined field changes sign from - to +")
    return i, j


def interface_point(v, x):
    i, j = _sign_change(v)
    if j == i + 1:
        return x[i] + v[i] / (v[i] - v[j]) * (x[j] - x[i]), i, j
    # exact zeros in between: take the middle of the zero run
    return 0.5 * (x[i + 1] + x[j - 1]), i, j


def _one_sided(x, v, nodes, at):
    """First and second derivative at ``at`` of the cubic through ``nodes``."""
    p = np.polyfit(x[nodes] - at, v[nodes], 3)
    return p[2], 2 * p[1]


def layer_offset(k: float, dx: float, factor: float = 2.0) -> int:
    """Node offset clearing the finite-k transition layer, at least 2."""
    if k <= 0:
        return 2
    return max(2, int(np.ceil(factor * k ** -0.5 / dx)))


def _band_fit(x, v, at, lo, hi, side, deg=4):
    """Slope and curvature at ``at`` of a least-squares polynomial on one side.

    Nodes at distance ``[lo, hi]`` from ``at`` are used; the finite-k layer
    around the interface is thereby skipped.
    """
    dist = (at - x) if side < 0 else (x - at)
    sel = (dist >= lo) & (dist <= hi)
    if sel.sum() < deg + 2:
        raise OutOfRangeError("curvature band holds too few nodes")
    p = np.polyfit(x[sel] - at, v[sel], deg)
    return p[-2], 2 * p[-3]


def free_boundary_point(v, x, offset=2, band=None):
    """Interface position, one-sided slopes and one-sided curvatures.

    Slopes come from the cubic through 4 nodes starting ``offset`` nodes away
    from the sign change.  Curvatures come from a quartic least-squares fit
    over ``band = (lo, hi)`` (distances), or from the same cubic if omitted.
    """
    xi, i, j = interface_point(v, x)
    left = np.arange(i - offset - 3, i - offset + 1)
    right = np.arange(j + offset, j + offset + 4)
    if left[0] < 0 or right[-1] >= len(v):
        raise OutOfRangeError("interface too close to the window edge")
    fl, cl = _one_sided(x, v, left, xi)
    fr, cr = _one_sided(x, v, right, xi)
    if band is not None:
        _, cl = _band_fit(x, v, xi, *band, side=-1)
        _, cr = _band_fit(x, v, xi, *band, side=+1)
    return xi, fl, fr, cl, cr


def curvature_band(k: float, inner: float = 4.0, outer: float = 10.0):
    """Distances ``(inner, outer) * k^(-1/3)`` clearing the interface layer."""
    w = k ** (-1 / 3)
    return inner * w, outer * w


def extract_free_boundary(snapshots, alpha: float, d: float, s: float, dx: float, period: float,
                          t_min: float = -np.inf, offset: int = 2, band=None,
                          c_floor: float = C_FLOOR) -> FreeBoundaryTrace:
    """Zero set of ``v_d = alpha u1 - d u2`` and its one-sided derivatives over time."""
    if abs(s) <= c_floor:
        raise DegenerateCoordinatesError("free boundary tracking needs a moving front")
    rows = []
    for snap in snapshots:
        if snap.t < t_min:
            continue
        x = (snap.start + np.arange(len(snap.u1))) * dx
        v = alpha * snap.u1 - d * snap.u2
        rows.append((snap.t, *free_boundary_point(v, x, offset, band)))
    if len(rows) < 3:
        raise InsufficientDataError("fewer than three snapshots for the free boundary")
    a = np.array(rows)
    return FreeBoundaryTrace(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5], s, dx, period, offset)


@dataclass(frozen=True)
class XiPrimeReport:
    applicable: bool
    median_discrepancy: float = np.nan
    fd: np.ndarray | None = None
    formula: np.ndarray | None = None


def xi_prime_check(trace: FreeBoundaryTrace, d: float) -> XiPrimeReport:
    """Compare finite-difference Xi' with the second-derivative jump formula.

    ``Xi' = d/(1-d) (z_xx(Xi-) - z_xx(Xi+)) / z_x(Xi)``; void when d = 1.
    """
    if d == 1:
        return XiPrimeReport(False)
    fd = np.gradient(trace.xi_of_t, trace.times)
    zx = 0.5 * (trace.flux_left + trace.flux_right)
    formula = d / (1 - d) * (trace.curv_left - trace.curv_right) / zx
    rel = np.abs(fd - formula) / np.maximum(np.abs(fd), 1e-12)
    # endpoints use one-sided time differences
    return XiPrimeReport(True, float(np.median(rel[1:-1] if rel.size > 4 else rel)), fd, formula)


# ---------------------------------------------------------------------------
# stationary regime


@dataclass
class EquilibriumSamples:
    x: np.ndarray
    e: np.ndarray
    zero: float
    residual: float
    time_derivative: float
    bounds_strict: bool
    zeros: int


def extract_equilibrium(x, u1, u2, u1_prev, u2_prev, dt_between: float, params,
                        tol: float = 1e-3, band: float | None = None) -> EquilibriumSamples:
    """``e = alpha u1 - d u2`` at the final time with its stationary residual.

    ``(u1_prev, u2_prev)`` is the state ``dt_between`` earlier and must show
    ``max |d_t u| < tol``.  The RMS of ``-e'' - eta(e)`` is taken over nodes at
    least ``band`` (default ``4 k^(-1/3)``) away from the zero of ``e``.
    """
    rate = max(np.max(np.abs(u1 - u1_prev)), np.max(np.abs(u2 - u2_prev))) / dt_between
    if rate >= tol:
        raise PrematureExtractionError(f"max |d_t u| = {rate:.3g} is not below {tol:.3g}")
    alpha, d = params.alpha, params.d
    e = alpha * u1 - d * u2
    zero, _, _ = interface_point(e, x)
    s = np.sign(e)
    nzs = s[s != 0]
    zeros = int(np.count_nonzero(nzs[1:] != nzs[:-1]))
    h = x[1] - x[0]
    exx = np.zeros_like(e)
    exx[1:-1] = (e[2:] - 2 * e[1:-1] + e[:-2]) / h**2
    res = -exx - eta(e, x, d, alpha, params.r1, params.r2)
    band = 4 * params.k ** (-1 / 3) if band is None else band
    keep = np.abs(x - zero) > band
    keep[[0, -1]] = False
    resid = float(np.sqrt(np.mean(res[keep] ** 2)))
    a1, a2 = params.r1.zero_level, params.r2.zero_level
    strict = bool(np.all(e > -d * a2) and np.all(e < alpha * a1))
    return EquilibriumSamples(x, e, float(zero), resid, float(rate), strict, zeros)


# ---------------------------------------------------------------------------
# structural checks on raw fields


def v1_identity_residual(x, states, dt, params) -> float:
    """RMS of ``d_t v1 - d_xx v_d - (alpha u1 f1 - u2 f2)`` at the middle state.

    ``states`` holds three consecutive ``(u1, u2)`` pairs ``dt`` apart; the
    time derivative is centred.  The competition terms cancel identically,
    so the residual reflects discretisation only.
    """
    (a1, b1), (a2, b2), (a3, b3) = states
    alpha, d = params.alpha, params.d
    v1p, v1m = alpha * a3 - b3, alpha * a1 - b1
    vd = alpha * a2 - d * b2
    h = x[1] - x[0]
    lhs = (v1p[1:-1] - v1m[1:-1]) / (2 * dt) - (vd[2:] - 2 * vd[1:-1] + vd[:-2]) / h**2
    xi = x[1:-1]
    src = alpha * a2[1:-1] * params.r1.eval(a2[1:-1], xi) - b2[1:-1] * params.r2.eval(b2[1:-1], xi)
    return float(np.sqrt(np.mean((lhs - src) ** 2)))


def period_shift_violation(v, nodes_per_period: int) -> float:
    """Largest increase of ``n -> v(x + nL)`` over all base points."""
    n = (len(v) - 1) // nodes_per_period
    cols = v[: n * nodes_per_period].reshape(n, nodes_per_period)
    return float(max(np.max(np.diff(cols, axis=0)), 0.0))
