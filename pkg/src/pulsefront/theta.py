"""Half-line KPP problems, the threshold profile ``A_d`` and sign predictors.

``Theta(x0, f)`` is the slope at ``x0`` of the unique positive solution of

    -z'' = z f(z, x)  on (x0, +inf),   z(x0) = 0,

i.e. the flux a single species pushes into an interface at ``x0`` when it
occupies the half-line to its right.  Everything in this module is built
from it: the critical ratio ``A_d``, the interval ``R0`` of ``alpha^2/d``
compatible with a pinned interface, its ``d``-independent bounds and the
glued stationary equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .errors import ConsistencyError, GluingError, NumericalFailure
from .reaction import LogisticReaction, PeriodicReaction, envelope, reflect, rescale, scale

DEFAULT_PERIODS = 10
DEFAULT_NODES = 256
# far field must have decayed by ~exp(-FAR_FIELD) at the truncation point
FAR_FIELD = 16.0


@dataclass
class HalfLineSolution:
    x0: float
    x: np.ndarray
    z: np.ndarray
    theta: float
    newton_residuals: list = field(default_factory=list)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


def _decay_rate(r: PeriodicReaction) -> float:
    xs = np.linspace(0.0, r.period, 64, endpoint=False)
    a = r.zero_level
    slope = -r.eval_du(np.full_like(xs, a), xs)
    return float(np.sqrt(a * max(slope.min(), 1e-12)))


def _numerov_residual(z, x, h, r):
    q = z * r.eval(z, x)
    res = z[2:] - 2 * z[1:-1] + z[:-2] + (h * h / 12.0) * (q[2:] + 10 * q[1:-1] + q[:-2])
    return res, q


def _newton(z, x, h, r, tol, max_iter=60):
    """Damped Newton on the Numerov discretisation; ``z[0]``, ``z[-1]`` fixed."""
    history = []
    res, _ = _numerov_residual(z, x, h, r)
    norm = np.abs(res).max()
    history.append(norm)
    c = h * h / 12.0
    for _ in range(max_iter):
        if norm < tol:
            return z, history
        dq = r.eval(z, x) + z * r.eval_du(z, x)
        ab = np.zeros((3, len(z) - 2))
        ab[0, 1:] = 1 + c * dq[2:-1]
        ab[1, :] = -2 + 10 * c * dq[1:-1]
        ab[2, :-1] = 1 + c * dq[1:-2]
        step = solve_banded((1, 1), ab, -res, check_finite=False)
        t = 1.0
        while True:
            trial = z.copy()
            trial[1:-1] += t * step
            new_res, _ = _numerov_residual(trial, x, h, r)
            new_norm = np.abs(new_res).max()
            if np.isfinite(new_norm) and new_norm <= (1 - 1e-4 * t) * norm:
                break
            t *= 0.5
            if t < 1e-10:
                raise NumericalFailure("Newton line search stalled", residual=history)
        z, res, norm = trial, new_res, new_norm
        history.append(norm)
    if norm < tol:
        return z, history
    raise NumericalFailure(f"Newton did not converge (residual {norm:.3e})", residual=history)


def _one_sided_slope(z, h):
    return (-25 * z[0] + 48 * z[1] - 36 * z[2] + 16 * z[3] - 3 * z[4]) / (12 * h)


def solve_halfline(
    x0: float,
    r: PeriodicReaction,
    truncation_periods: int = DEFAULT_PERIODS,
    nodes_per_period: int = DEFAULT_NODES,
    check_envelope: bool = True,
    initial: np.ndarray | None = None,
) -> HalfLineSolution:
    """Positive solution of ``-z'' = z f(z, x)`` on ``[x0, x0 + N L]``.

    Dirichlet data ``z(x0) = 0`` and ``z(end) = a``.  The truncation is
    lengthened beyond ``N`` periods when the far-field decay is slow.
    Newton starts from the solution for the lower envelope ``min_x f``,
    which is a sub-solution, and the result is checked against both
    envelope solutions.
    """
    if truncation_periods < 6:
        raise ValueError("truncation_periods must be at least 6")
    a, period = r.zero_level, r.period
    decay = _decay_rate(r)
    periods = max(truncation_periods, int(np.ceil(FAR_FIELD / (decay * period))))
    n = periods * nodes_per_period
    h = period / nodes_per_period
    x = x0 + h * np.arange(n + 1)
    s = x - x0

    lower = upper = None
    if check_envelope:
        sub = solve_halfline(x0, envelope(r, "min"), truncation_periods, nodes_per_period, check_envelope=False)
        sup = solve_halfline(x0, envelope(r, "max"), truncation_periods, nodes_per_period, check_envelope=False)
        lower, upper = _resample(sub, x), _resample(sup, x)
        z = lower.copy() if initial is None else initial.copy()
    elif initial is not None:
        z = initial.copy()
    else:
        m = max(float(r.rate_at_zero(np.asarray(x0))), 1e-6)
        z = a * (1 - np.exp(-np.sqrt(m) * s))
    z[0], z[-1] = 0.0, a

    tol = 5e-14 * max(a, 1.0)
    z, history = _newton(z, x, h, r, tol)

    if np.any(z[1:] <= 0):
        raise NumericalFailure("half-line solution is not positive", residual=history)
    if check_envelope:
        slack = 1e-9 * a
        if np.any(z < lower - slack) or np.any(z > upper + slack):
            raise NumericalFailure("half-line solution escaped its sub/super-solution envelope",
                                   residual=history)
    # far-field saturation one period before the truncation point
    if abs(z[-1 - nodes_per_period] - a) > 0.01 * a:
        raise NumericalFailure("truncation too short: far field not saturated", residual=history)
    return HalfLineSolution(x0=x0, x=x, z=z, theta=float(_one_sided_slope(z, h)),
                            newton_residuals=history, lower=lower, upper=upper)


def _resample(sol: HalfLineSolution, x):
    if len(sol.x) == len(x):
        return sol.z.copy()
    return np.interp(x, sol.x, sol.z, right=sol.z[-1])


def theta(x0: float, r: PeriodicReaction, **kwargs) -> float:
    """Interface slope ``Theta(x0, f) = z'(x0+)`` of the half-line solution."""
    return solve_halfline(x0, r, **kwargs).theta


def eta(z, x, d, alpha, r1: PeriodicReaction, r2: PeriodicReaction):
    """Limit nonlinearity acting on the signed field ``w = alpha u1 - d u2``."""
    z = np.asarray(z, dtype=float)
    zp = np.maximum(z, 0.0)
    zm = np.maximum(-z, 0.0)
    return r1.eval(zp / alpha, x) * zp - r2.eval(zm / d, x) * zm / d


# --------------------------------------------------------------------------
# threshold profile


@dataclass
class ThresholdProfile:
    d: float
    x_samples: np.ndarray
    A_values: np.ndarray
    A_min: float
    A_max: float
    x_argmin: float
    x_argmax: float
    theta1: np.ndarray
    theta2: np.ndarray


def _theta1(x, r1, **kw):
    return theta(x, reflect(r1, x), **kw)


def _theta2(x, d, r2, **kw):
    return theta(x, scale(r2, 1.0 / d), **kw)


def threshold(x, d, r1, r2, **kw) -> float:
    """``A_d(x) = d Theta(x, f2/d) / Theta(x, f1 reflected about x)``."""
    return d * _theta2(x, d, r2, **kw) / _theta1(x, r1, **kw)


def _refine_extremum(g, xs, vals, sign, period, xatol):
    i = int(np.argmin(sign * vals))
    h = period / len(xs)
    res = minimize_scalar(lambda x: sign * g(x), bounds=(xs[i] - h, xs[i] + h),
                          method="bounded", options={"xatol": xatol})
    if sign * res.fun < sign * vals[i]:
        return float(res.x), float(sign * res.fun)
    return float(xs[i]), float(vals[i])


def a_profile(d, r1, r2, resolution: int = 128, refine: bool = True, xatol: float = 1e-6, **kw) -> ThresholdProfile:
    """Sample ``A_d`` over one period and locate its extrema."""
    if not d > 0:
        raise ValueError("d must be positive")
    period = r1.period
    xs = np.arange(resolution) * (period / resolution)
    if r1.is_homogeneous and r2.is_homogeneous:
        t1 = np.full(resolution, _theta1(0.0, r1, **kw))
        t2 = np.full(resolution, _theta2(0.0, d, r2, **kw))
    else:
        t1 = np.array([_theta1(x, r1, **kw) for x in xs])
        t2 = np.array([_theta2(x, d, r2, **kw) for x in xs])
    vals = d * t2 / t1
    if not np.all(vals > 0):
        raise ConsistencyError("A_d must be positive")
    g = lambda x: threshold(x, d, r1, r2, **kw)  # noqa: E731
    if refine and not np.allclose(vals, vals[0], rtol=1e-12, atol=0):
        x_lo, a_lo = _refine_extremum(g, xs, vals, 1.0, period, xatol)
        x_hi, a_hi = _refine_extremum(g, xs, vals, -1.0, period, xatol)
    else:
        i, j = int(np.argmin(vals)), int(np.argmax(vals))
        x_lo, a_lo, x_hi, a_hi = xs[i], vals[i], xs[j], vals[j]
    return ThresholdProfile(d=d, x_samples=xs, A_values=vals, A_min=a_lo, A_max=a_hi,
                            x_argmin=x_lo % period, x_argmax=x_hi % period, theta1=t1, theta2=t2)


def _theta1_extrema(r1, resolution, xatol=1e-6, **kw):
    period = r1.period
    xs = np.arange(resolution) * (period / resolution)
    if r1.is_homogeneous:
        v = _theta1(0.0, r1, **kw)
        return v, v
    vals = np.array([_theta1(x, r1, **kw) for x in xs])
    g = lambda x: _theta1(x, r1, **kw)  # noqa: E731
    _, lo = _refine_extremum(g, xs, vals, 1.0, period, xatol)
    _, hi = _refine_extremum(g, xs, vals, -1.0, period, xatol)
    return lo, hi


def r_bounds(d, r1, r2, resolution: int = 128, **kw):
    """``d``-uniform bounds ``(r_lo, r_hi)`` enclosing every ``R0_d``.

    ``r_lo = (z_lo'(0) / max Theta1)^2`` and ``r_hi = (z_hi'(0) / min Theta1)^2``
    where ``z_lo``, ``z_hi`` solve the unit-diffusion half-line problems for
    ``min_x f2`` and ``max_x f2``.  ``d`` is accepted for symmetry with the
    other predictors and does not enter.
    """
    z_lo = theta(0.0, envelope(r2, "min"), check_envelope=False, **kw)
    z_hi = theta(0.0, envelope(r2, "max"), check_envelope=False, **kw)
    t_min, t_max = _theta1_extrema(r1, resolution, **kw)
    return (z_lo / t_max) ** 2, (z_hi / t_min) ** 2


def r0_interval(d, r1, r2, profile: ThresholdProfile | None = None, bounds=None, resolution: int = 128, rtol=1e-7, **kw):
    """``R0_d = [min(A_d)^2 / d, max(A_d)^2 / d]``, checked to nest in ``[r_lo, r_hi]``."""
    if profile is None:
        profile = a_profile(d, r1, r2, resolution=resolution, **kw)
    lo, hi = profile.A_min**2 / d, profile.A_max**2 / d
    if bounds is None:
        bounds = r_bounds(d, r1, r2, resolution=resolution, **kw)
    r_lo, r_hi = bounds
    if lo < r_lo * (1 - rtol) or hi > r_hi * (1 + rtol) or lo > hi:
        raise ConsistencyError(f"R0 = [{lo}, {hi}] not inside [{r_lo}, {r_hi}]")
    return lo, hi


# --------------------------------------------------------------------------
# glued stationary equilibrium


@dataclass
class Equilibrium:
    x_e: float
    x: np.ndarray
    e: np.ndarray
    theta_left: float
    theta_right: float
    residual: float

    @property
    def mismatch(self) -> float:
        return abs(self.theta_left - self.theta_right)


def build_equilibrium(x_e, d, alpha, r1, r2, window_periods: int = 6, tol: float = 1e-4,
                      nodes_per_period: int = DEFAULT_NODES, **kw) -> Equilibrium:
    """Glue species 1 on the left and species 2 on the right of ``x_e``.

    Left of ``x_e`` the signed field is the reflected half-line solution for
    ``f1(z/alpha, 2 x_e - x)``; right of it, minus the one for
    ``f2(z/d, x)/d``.  The glued profile is C1 iff the two slopes agree,
    i.e. iff ``alpha = A_d(x_e)``; otherwise :class:`GluingError` is raised.
    """
    left = solve_halfline(x_e, rescale(reflect(r1, x_e), alpha), nodes_per_period=nodes_per_period, **kw)
    right = solve_halfline(x_e, rescale(scale(r2, 1.0 / d), d), nodes_per_period=nodes_per_period, **kw)
    m = min(window_periods * nodes_per_period, len(left.x) - 2, len(right.x) - 2)
    s = left.x[: m + 1] - x_e
    x = np.concatenate([x_e - s[::-1], x_e + s[1:]])
    e = np.concatenate([left.z[: m + 1][::-1], -right.z[1 : m + 1]])

    h = s[1] - s[0]
    lap = (e[2:] - 2 * e[1:-1] + e[:-2]) / h**2
    res = -lap - eta(e[1:-1], x[1:-1], d, alpha, r1, r2)
    keep = np.abs(x[1:-1] - x_e) > 2.5 * h
    residual = float(np.sqrt(np.mean(res[keep] ** 2)))

    eq = Equilibrium(x_e=x_e, x=x, e=e, theta_left=left.theta, theta_right=right.theta, residual=residual)
    if eq.mismatch > tol:
        raise GluingError(
            f"slopes differ by {eq.mismatch:.3e} at x_e={x_e}: alpha is not A_d(x_e)", eq.mismatch
        )
    return eq


# --------------------------------------------------------------------------
# sign of the limiting speed


def sign_integral(d, alpha, r1, r2, nz: int = 64, nx: int = 512):
    """``int_0^L int_{-d a2}^{alpha a1} eta(z, x) dz dx`` and an error estimate.

    Gauss-Legendre in ``z`` on each half (``eta`` is smooth on either side of
    0), composite midpoint in ``x``.  The error estimate is the change when
    the ``x`` rule is halved.
    """
    period = r1.period
    gz, gw = np.polynomial.legendre.leggauss(nz)

    def total(mx):
        xs = (np.arange(mx) + 0.5) * (period / mx)
        hi = alpha * r1.zero_level
        lo = d * r2.zero_level
        zp = 0.5 * hi * (gz + 1)
        zm = -0.5 * lo * (gz + 1)
        inner_p = (eta(zp[:, None], xs[None, :], d, alpha, r1, r2) * gw[:, None]).sum(0) * 0.5 * hi
        inner_m = (eta(zm[:, None], xs[None, :], d, alpha, r1, r2) * gw[:, None]).sum(0) * 0.5 * lo
        return float((inner_p + inner_m).sum() * (period / mx))

    value = total(nx)
    return value, abs(value - total(nx // 2))


def _sign(v, tol):
    return 0 if abs(v) <= tol else (1 if v > 0 else -1)


@dataclass
class SignReport:
    d: float
    alpha: float
    integral: float
    integral_error: float
    r0_interval: tuple
    r_lo: float
    r_hi: float
    ratio: float
    predicted: str
    logistic_sign: int | None = None

    @property
    def predicted_sign(self) -> int | None:
        return {"positive": 1, "negative": -1, "zero-interval": 0}.get(self.predicted)

    def margin(self) -> float:
        """Signed distance of ``alpha^2/d`` outside ``R0`` (negative inside)."""
        lo, hi = self.r0_interval
        if self.ratio > hi:
            return self.ratio - hi
        if self.ratio < lo:
            return lo - self.ratio
        return -min(self.ratio - lo, hi - self.ratio)


def classify(ratio, interval, band=1e-3):
    lo, hi = interval
    if abs(ratio - lo) < band or abs(ratio - hi) < band:
        return "boundary-ambiguous"
    if ratio > hi:
        return "positive"
    if ratio < lo:
        return "negative"
    return "zero-interval"


def predict_sign(d, alpha, r1, r2, resolution: int = 128, band: float = 1e-3,
                 profile: ThresholdProfile | None = None, bounds=None, **kw) -> SignReport:
    """Predicted sign of the large-competition speed from ``alpha^2/d`` vs ``R0_d``.

    The interval prediction is cross-checked against the sign integral and,
    for logistic reactions, against ``alpha^2 a1^3 |mu1| - d a2^3 |mu2|``.
    """
    if bounds is None:
        bounds = r_bounds(d, r1, r2, resolution=resolution, **kw)
    interval = r0_interval(d, r1, r2, profile=profile, bounds=bounds, resolution=resolution, **kw)
    integral, err = sign_integral(d, alpha, r1, r2)
    ratio = alpha**2 / d
    report = SignReport(d=d, alpha=alpha, integral=integral, integral_error=err,
                        r0_interval=interval, r_lo=bounds[0], r_hi=bounds[1], ratio=ratio,
                        predicted=classify(ratio, interval, band))
    tol = max(10 * err, 1e-12 * (alpha**2 + d))
    s_int = _sign(integral, tol)
    if isinstance(r1, LogisticReaction) and isinstance(r2, LogisticReaction):
        closed = (alpha**2 * r1.zero_level**3 * r1.mu_l1 - d * r2.zero_level**3 * r2.mu_l1) / 6.0
        report.logistic_sign = _sign(closed, tol)
        if report.logistic_sign != s_int:
            raise ConsistencyError(f"sign integral {integral} disagrees with logistic closed form {closed}")
    ps = report.predicted_sign
    if ps in (-1, 1) and s_int != ps:
        raise ConsistencyError(
            f"alpha^2/d={ratio:.6g} outside R0={interval} predicts {report.predicted}, "
            f"sign integral is {integral:.6g}"
        )
    return report
