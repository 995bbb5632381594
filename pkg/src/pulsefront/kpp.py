"""Scalar periodic Fisher-KPP: principal eigenvalues and minimal front speeds.

For ``u_t = delta u_xx + u f(u, x)`` with ``L``-periodic ``f`` the minimal
pulsating-front speed is

    c* = min_{lam > 0} -k(lam) / lam,

where ``k(lam)`` is the periodic principal eigenvalue of

    -delta psi'' - 2 delta lam psi' - (delta lam^2 + f(0, x)) psi.

The tilted operator is discretised as ``e^{-lam x} (-delta D2) e^{lam x}``
on the grid, i.e. the neighbours carry weights ``e^{+-lam h}``.  This keeps
every off-diagonal entry negative for any ``lam`` (an M-matrix after a
shift), so inverse iteration always lands on the Perron eigenpair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from .errors import NumericalFailure, UnboundedSearchError
from .reaction import PeriodicReaction

LAMBDA_MIN = 1e-3
LAMBDA_MAX = 1e3


@dataclass(frozen=True)
class EigenProblem:
    diffusion: float
    potential: Callable[[np.ndarray], np.ndarray]
    period: float = 1.0
    wavenumber: float = 0.0
    grid_n: int = 512

    def __post_init__(self):
        if self.grid_n < 16:
            raise ValueError("grid_n must be at least 16")
        if not self.diffusion > 0:
            raise ValueError("diffusion must be positive")
        if self.wavenumber < 0:
            raise ValueError("wavenumber must be non-negative")

    @property
    def nodes(self):
        return np.arange(self.grid_n) * (self.period / self.grid_n)


@dataclass(frozen=True)
class MinimalSpeedResult:
    c_star: float
    lambda_opt: float
    bracket: tuple


def _tilted_matrix(p: EigenProblem, shift: float):
    n, h, lam, delta = p.grid_n, p.period / p.grid_n, p.wavenumber, p.diffusion
    v = np.asarray(p.potential(p.nodes), dtype=float)
    diag = 2 * delta / h**2 - v - shift
    # psi_{j+1} weight e^{lam h}, psi_{j-1} weight e^{-lam h}
    up = -delta * np.exp(lam * h) / h**2
    lo = -delta * np.exp(-lam * h) / h**2
    rows = np.arange(n)
    data = np.concatenate([diag, np.full(n, up), np.full(n, lo)])
    i = np.concatenate([rows, rows, rows])
    j = np.concatenate([rows, (rows + 1) % n, (rows - 1) % n])
    return sp.csc_matrix((data, (i, j)), shape=(n, n)), v


def principal_eigenvalue(p: EigenProblem, tol: float = 1e-13, max_iter: int = 2000):
    """Periodic principal eigenpair of the tilted operator.

    Returns ``(value, psi)`` with ``psi`` positive and ``max(psi) == 1``.
    """
    n, h, lam, delta = p.grid_n, p.period / p.grid_n, p.wavenumber, p.diffusion
    v = np.asarray(p.potential(p.nodes), dtype=float)
    # Gershgorin: every eigenvalue has real part >= this bound
    lower = -4 * delta * np.sinh(lam * h / 2) ** 2 / h**2 - v.max()
    shift = lower - 1.0
    m, _ = _tilted_matrix(p, shift)
    lu = splu(m)
    full, _ = _tilted_matrix(p, 0.0)

    psi = np.ones(n)
    value = np.nan
    for it in range(max_iter):
        nxt = lu.solve(psi)
        nxt /= np.abs(nxt).max()
        value = float(nxt @ (full @ nxt) / (nxt @ nxt))
        resid = np.abs(full @ nxt - value * nxt).max()
        psi = nxt
        if resid < tol * max(1.0, abs(value), 2 * delta / h**2):
            break
    else:
        raise NumericalFailure(
            f"inverse iteration did not converge in {max_iter} iterations", residual=resid
        )
    if psi.min() <= 0:
        psi = -psi if psi.max() <= 0 else psi
    if psi.min() <= 0:
        raise NumericalFailure("principal eigenfunction is not positive", residual=resid)
    return value, psi / psi.max()


def _speed_of(r_at_zero, delta, period, grid_n):
    def c_of_log_lambda(s):
        lam = float(np.exp(s))
        k, _ = principal_eigenvalue(EigenProblem(delta, r_at_zero, period, lam, grid_n))
        return -k / lam

    return c_of_log_lambda


def minimal_speed(r: PeriodicReaction, delta: float, grid_n: int = 512, tol: float = 1e-5) -> MinimalSpeedResult:
    """Minimal speed ``c*[delta]`` of scalar pulsating fronts for rate ``f(0, .)``.

    The speed functional ``lam -> -k(lam)/lam`` is minimised over ``log lam``
    by a bounded golden/Brent search on ``[1e-3, 1e3]``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    c_of = _speed_of(r.rate_at_zero, delta, r.period, grid_n)
    lo, hi = np.log(LAMBDA_MIN), np.log(LAMBDA_MAX)
    # start from the homogeneous optimum sqrt(mean/delta) and bracket around it
    mean_rate = float(np.mean(r.rate_at_zero(np.arange(grid_n) * (r.period / grid_n))))
    s0 = float(np.clip(0.5 * np.log(mean_rate / delta), lo + 1, hi - 1))
    a_, b_ = s0 - 1.0, s0 + 1.0
    fa, f0, fb = c_of(a_), c_of(s0), c_of(b_)
    while fa < f0:
        a_, s0, f0 = a_ - 1.0, a_, fa
        if a_ < lo:
            raise UnboundedSearchError("minimal-speed search left [1e-3, 1e3]")
        fa = c_of(a_)
    while fb < f0:
        s0, b_, f0 = b_, b_ + 1.0, fb
        if b_ > hi:
            raise UnboundedSearchError("minimal-speed search left [1e-3, 1e3]")
        fb = c_of(b_)
    res = minimize_scalar(c_of, bounds=(a_, b_), method="bounded", options={"xatol": 1e-7})
    c_star = float(res.fun)
    return MinimalSpeedResult(c_star=c_star, lambda_opt=float(np.exp(res.x)),
                              bracket=(float(np.exp(a_)), float(np.exp(b_))))


def speed_bracket(d: float, r1: PeriodicReaction, r2: PeriodicReaction, grid_n: int = 512):
    """``(-c*[d, 2], c*[1, 1])``: every competitive front speed lies strictly inside."""
    lower = -minimal_speed(r2, d, grid_n).c_star
    upper = minimal_speed(r1, 1.0, grid_n).c_star
    return lower, upper
