"""Periodic KPP-type reaction rates ``f(u, x)``.

The per-capita growth rate ``f`` enters the system as ``u * f(u, x)``.  It is
``L``-periodic in ``x``, decreasing in ``u`` and vanishes at a constant level
``a`` (the carrying capacity).  All evaluators take numpy arrays and must
broadcast like ufuncs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import MalformedReactionError

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

_FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class PeriodicReaction:
    """A growth rate ``f(u, x)``, periodic in ``x`` with period ``period``.

    ``du`` and ``dx`` are the partial derivatives; when omitted they are
    replaced by centered finite differences of ``f``.
    """

    f: Evaluator
    period: float
    zero_level: float
    du: Evaluator | None = None
    dx: Evaluator | None = None
    name: str = "custom"
    # envelope of a transformed reaction, expressed through its source
    envelope_of: Callable[[str], "PeriodicReaction"] | None = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if not self.zero_level > 0:
            raise ValueError(f"zero_level must be positive, got {self.zero_level}")

    def eval(self, u, x):
        return np.asarray(self.f(np.asarray(u, dtype=float), np.asarray(x, dtype=float)), dtype=float)

    __call__ = eval

    def eval_du(self, u, x):
        u = np.asarray(u, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.du is not None:
            return np.asarray(self.du(u, x), dtype=float)
        h = _FD_STEP * np.maximum(1.0, np.abs(u))
        return (self.f(u + h, x) - self.f(u - h, x)) / (2 * h)

    def eval_dx(self, u, x):
        u = np.asarray(u, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.dx is not None:
            return np.asarray(self.dx(u, x), dtype=float)
        h = _FD_STEP * self.period
        return (self.f(u, x + h) - self.f(u, x - h)) / (2 * h)

    def rate_at_zero(self, x):
        """``f(0, x)``: the linearised growth rate at low density."""
        x = np.asarray(x, dtype=float)
        return self.eval(np.zeros_like(x), x)

    @cached_property
    def _extrema(self):
        return _periodic_extrema(self.rate_at_zero, self.period)

    @property
    def m_min(self) -> float:
        return self._extrema[0]

    @property
    def m_max(self) -> float:
        return self._extrema[1]

    @property
    def is_homogeneous(self) -> bool:
        return self.m_max - self.m_min <= 1e-14 * max(1.0, abs(self.m_max))


def _periodic_extrema(g, period, samples=256):
    """Min and max of a smooth periodic scalar function.

    Dense sampling followed by a bounded Brent/golden refinement around the
    best sample of each kind.
    """
    xs = np.arange(samples) * (period / samples)
    vals = g(xs)
    if not np.all(np.isfinite(vals)):
        raise MalformedReactionError("non-finite value of f(0, x)")
    h = period / samples

    def refine(sign):
        i = int(np.argmin(sign * vals))
        x0 = xs[i]
        res = minimize_scalar(
            lambda x: sign * float(g(np.asarray(x))),
            bounds=(x0 - h, x0 + h),
            method="bounded",
            options={"xatol": 1e-10 * period},
        )
        return min(sign * vals[i], res.fun) * sign

    return float(refine(1.0)), float(refine(-1.0))


@dataclass(frozen=True, eq=False)
class LogisticReaction(PeriodicReaction):
    """``f(u, x) = mu(x) * (a - u)`` with ``mu`` a truncated Fourier series.

    ``mu(x) = mean + sum_j cos_j cos(2 pi j x / L) + sin_j sin(2 pi j x / L)``
    with ``j`` starting at 1.
    """

    mean: float = 1.0
    fourier_cosine: tuple = ()
    fourier_sine: tuple = ()

    def __init__(
        self,
        mean: float = 1.0,
        fourier_cosine: Sequence[float] = (),
        fourier_sine: Sequence[float] = (),
        a: float = 1.0,
        period: float = 1.0,
    ):
        cos_c = tuple(float(c) for c in fourier_cosine)
        sin_c = tuple(float(s) for s in fourier_sine)
        object.__setattr__(self, "mean", float(mean))
        object.__setattr__(self, "fourier_cosine", cos_c)
        object.__setattr__(self, "fourier_sine", sin_c)
        a = float(a)
        w = 2 * np.pi / period

        def mu(x):
            x = np.asarray(x, dtype=float)
            out = np.full_like(x, self.mean)
            for j, c in enumerate(cos_c, start=1):
                out = out + c * np.cos(j * w * x)
            for j, s in enumerate(sin_c, start=1):
                out = out + s * np.sin(j * w * x)
            return out

        def mu_prime(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for j, c in enumerate(cos_c, start=1):
                out = out - c * j * w * np.sin(j * w * x)
            for j, s in enumerate(sin_c, start=1):
                out = out + s * j * w * np.cos(j * w * x)
            return out

        object.__setattr__(self, "mu", mu)
        super().__init__(
            f=lambda u, x: mu(x) * (a - u),
            period=float(period),
            zero_level=a,
            du=lambda u, x: -mu(x) * np.ones_like(u),
            dx=lambda u, x: mu_prime(x) * (a - u),
            name="logistic",
        )

    @property
    def mu_l1(self) -> float:
        """``||mu||_L1`` over one period (exact for a Fourier series)."""
        return self.mean * self.period

    @property
    def mu_min(self) -> float:
        return self.m_min / self.zero_level

    @property
    def mu_max(self) -> float:
        return self.m_max / self.zero_level


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst: float
    where: tuple | None = None


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c.name for c in self.checks if not c.passed]


def validate_hypotheses(r: PeriodicReaction, nx: int = 256, nu: int = 128) -> ValidationReport:
    """Sampling-based check of regularity, positivity at zero and monotonicity.

    ``H1``: finite values and derivative evaluators consistent with finite
    differences.  ``H2``: ``min f(0, .) > 0``.  ``H3``: ``df/du < 0`` on the
    lattice and ``f(a, .) = 0``.  A periodicity check is reported as well.
    """
    a = r.zero_level
    xs = np.arange(nx) * (r.period / nx)
    us = np.linspace(0.0, 2 * a, nu)
    U, X = np.meshgrid(us, xs, indexing="ij")
    vals = r.eval(U, X)
    d_u = r.eval_du(U, X)
    d_x = r.eval_dx(U, X)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(d_u)) and np.all(np.isfinite(d_x))):
        raise MalformedReactionError(f"reaction {r.name!r} produced non-finite values")

    report = ValidationReport()

    # H1: derivative evaluators against centered differences
    hu = 1e-5 * max(1.0, a)
    hx = 1e-5 * r.period
    fd_u = (r.eval(U + hu, X) - r.eval(U - hu, X)) / (2 * hu)
    fd_x = (r.eval(U, X + hx) - r.eval(U, X - hx)) / (2 * hx)
    scale_u = np.maximum(np.abs(fd_u), 1e-3 * max(1.0, np.abs(vals).max()))
    scale_x = np.maximum(np.abs(fd_x), 1e-3 * max(1.0, np.abs(vals).max()))
    err = max(np.max(np.abs(d_u - fd_u) / scale_u), np.max(np.abs(d_x - fd_x) / scale_x))
    report.checks.append(HypothesisCheck("H1", bool(err <= 1e-5 * 10), float(err)))

    report.checks.append(HypothesisCheck("H2", r.m_min > 0, float(r.m_min)))

    worst_slope = float(d_u.max())
    i, j = np.unravel_index(np.argmax(d_u), d_u.shape)
    report.checks.append(
        HypothesisCheck("H3", worst_slope < 0, worst_slope, (float(us[i]), float(xs[j])))
    )
    zero_err = float(np.max(np.abs(r.eval(np.full_like(xs, a), xs))))
    report.checks.append(HypothesisCheck("zero_level", zero_err <= 1e-10 * max(1.0, r.m_max), zero_err))

    shifted = r.eval(U, X + r.period)
    per_err = float(np.max(np.abs(shifted - vals) / (1 + np.abs(vals))))
    report.checks.append(HypothesisCheck("periodic", per_err <= 1e-12, per_err))

    f0 = r.rate_at_zero(xs)
    bounds_ok = bool(np.all(f0 >= r.m_min - 1e-12) and np.all(f0 <= r.m_max + 1e-12))
    report.checks.append(HypothesisCheck("m_bounds", bounds_ok and 0 < r.m_min <= r.m_max, float(r.m_max - r.m_min)))
    return report


def reflect(r: PeriodicReaction, x0: float) -> PeriodicReaction:
    """Mirror image about ``x0``: ``g(u, x) = f(u, 2 x0 - x)``."""
    f, fu, fx = r.eval, r.eval_du, r.eval_dx
    return PeriodicReaction(
        f=lambda u, x: f(u, 2 * x0 - x),
        period=r.period,
        zero_level=r.zero_level,
        du=lambda u, x: fu(u, 2 * x0 - x),
        dx=lambda u, x: -fx(u, 2 * x0 - x),
        name=f"reflect({r.name},{x0:g})",
        envelope_of=lambda kind: envelope(r, kind),
    )


def rescale(r: PeriodicReaction, kappa: float) -> PeriodicReaction:
    """Density rescaling ``g(z, x) = f(z / kappa, x)``; the zero level becomes ``kappa * a``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    f, fu, fx = r.eval, r.eval_du, r.eval_dx
    return PeriodicReaction(
        f=lambda z, x: f(z / kappa, x),
        period=r.period,
        zero_level=kappa * r.zero_level,
        du=lambda z, x: fu(z / kappa, x) / kappa,
        dx=lambda z, x: fx(z / kappa, x),
        name=f"rescale({r.name},{kappa:g})",
        envelope_of=lambda kind: rescale(envelope(r, kind), kappa),
    )


def scale(r: PeriodicReaction, factor: float) -> PeriodicReaction:
    """Rate scaling ``g = factor * f`` (same zero level)."""
    if not factor > 0:
        raise ValueError(f"factor must be positive, got {factor}")
    f, fu, fx = r.eval, r.eval_du, r.eval_dx
    return PeriodicReaction(
        f=lambda u, x: factor * f(u, x),
        period=r.period,
        zero_level=r.zero_level,
        du=lambda u, x: factor * fu(u, x),
        dx=lambda u, x: factor * fx(u, x),
        name=f"scale({r.name},{factor:g})",
        envelope_of=lambda kind: scale(envelope(r, kind), factor),
    )


def envelope(r: PeriodicReaction, kind: str, samples: int = 1024) -> PeriodicReaction:
    """x-independent lower (``kind='min'``) or upper (``'max'``) envelope of ``f``.

    For the logistic family the exact extremes of ``mu`` are used; otherwise
    the envelope is taken over ``samples`` points of a period.
    """
    if kind not in ("min", "max"):
        raise ValueError(kind)
    if r.envelope_of is not None:
        return r.envelope_of(kind)
    a = r.zero_level
    if isinstance(r, LogisticReaction):
        lo, hi = r.mu_min, r.mu_max

        def f(u, x):
            u = np.asarray(u, dtype=float)
            v_lo, v_hi = lo * (a - u), hi * (a - u)
            return np.minimum(v_lo, v_hi) if kind == "min" else np.maximum(v_lo, v_hi)

        def du(u, x):
            u = np.asarray(u, dtype=float)
            below = u <= a
            pick_lo = below if kind == "min" else ~below
            return np.where(pick_lo, -lo, -hi) + 0 * np.asarray(x)

        return PeriodicReaction(f=f, period=r.period, zero_level=a, du=du,
                                dx=lambda u, x: np.zeros(np.broadcast(u, x).shape),
                                name=f"{kind}({r.name})")

    xs = np.arange(samples) * (r.period / samples)
    pick = np.argmin if kind == "min" else np.argmax

    def _table(u):
        u = np.asarray(u, dtype=float)
        vals = r.eval(u[..., None], xs)
        idx = pick(vals, axis=-1)
        return vals, idx

    def f(u, x):
        vals, idx = _table(u)
        out = np.take_along_axis(vals, idx[..., None], axis=-1)[..., 0]
        return out + 0 * np.asarray(x)

    def du(u, x):
        u = np.asarray(u, dtype=float)
        _, idx = _table(u)
        return r.eval_du(u, xs[idx]) + 0 * np.asarray(x)

    return PeriodicReaction(f=f, period=r.period, zero_level=a, du=du,
                            dx=lambda u, x: np.zeros(np.broadcast(u, x).shape),
                            name=f"{kind}({r.name})")


def from_spec(spec: dict, period: float) -> LogisticReaction:
    """Build a logistic reaction from a config table ``{a, mean, fourier_cosine, fourier_sine}``."""
    return LogisticReaction(
        mean=spec.get("mean", 1.0),
        fourier_cosine=spec.get("fourier_cosine", ()),
        fourier_sine=spec.get("fourier_sine", ()),
        a=spec.get("a", 1.0),
        period=period,
    )
