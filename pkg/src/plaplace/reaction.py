"""Nonlinearities f(x, u) with p-homogeneous asymptotic slopes.

Three constructors cover the experiments:

* ``homogeneous(g, p)``: f = g(x) |u|^(p-2) u, exactly p-homogeneous,
* ``interpolated(a0, a_inf, s, p)``: f = a(|u|) |u|^(p-2) u with the
  monotone slope transition a(r) = a0 + (a_inf - a0) r^s / (1 + r^s),
  so the slope at 0 is a0 and the slope at infinity is a_inf,
* ``custom(...)``: arbitrary vectorized callables with declared slopes.

Every reaction knows its primitive, a Lipschitz bound on each bounded
set, and the asymptotic slopes; :func:`index_bracket` places those
slopes in the p-Laplacian spectrum and predicts existence when the two
counts differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import hyp2f1

from . import eigen
from .grid import GridFunction

__all__ = [
    "Reaction",
    "IndexBracket",
    "ResonanceError",
    "index_bracket",
    "nemytskii",
    "rescaled_nemytskii",
]


class ResonanceError(ValueError):
    """A slope range overlaps the spectrum; the bracket index is ill-defined."""


# ---------------------------------------------------------------------------
# x-dependent coefficients: constant, node table (piecewise linear), callable

class _Coefficient:
    def __call__(self, x):
        raise NotImplementedError

    def bounds(self, l: float) -> tuple[float, float]:
        raise NotImplementedError


class _Const(_Coefficient):
    def __init__(self, c: float):
        self.c = float(c)

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def bounds(self, l):
        return self.c, self.c

    def describe(self):
        return self.c


class _Table(_Coefficient):
    """Values at uniformly spaced nodes spanning [0, l], linear in between."""

    def __init__(self, values, l: float):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError("coefficient table needs at least two values")
        self.xp = np.linspace(0.0, float(l), len(self.values))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xp, self.values)

    def bounds(self, l):
        return float(self.values.min()), float(self.values.max())

    def describe(self):
        return list(self.values)


class _Func(_Coefficient):
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def bounds(self, l):
        xs = np.linspace(0.0, l, 4097)
        vals = self(xs)
        return float(vals.min()), float(vals.max())

    def describe(self):
        return "<callable>"


def _as_coefficient(g, l: float | None) -> _Coefficient:
    if isinstance(g, _Coefficient):
        return g
    if np.isscalar(g):
        return _Const(float(g))
    if callable(g):
        return _Func(g)
    if l is None:
        raise ValueError("a coefficient table needs the domain length l")
    return _Table(g, l)


def _odd_power(u, e):
    """sign(u) |u|^e, vectorized."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** e


# ---------------------------------------------------------------------------
# primitive of the interpolated family
#
# F(u) = a_inf |u|^p / p + (a0 - a_inf) * G(|u|),
# G(r) = int_0^r  tau^(p-1) / (1 + tau^s)  dtau.
#
# For moderate r, G has the hypergeometric closed form
#   G(r) = (1/s) * z^a / a * 2F1(1, a; a+1; -z),  z = r^s,  a = p/s,
# which loses accuracy once z is huge; beyond z = 100 the geometric tail
#   1/(1+tau^s) = sum_k (-1)^k tau^(-s(k+1))   (tau >= r0, r0^s = 100)
# integrates term by term with elementary antiderivatives.

_Z_SWITCH = 100.0


def _g_hyp(r: np.ndarray, p: float, s: float) -> np.ndarray:
    a = p / s
    z = r**s
    out = np.zeros_like(r)
    nz = z > 0
    out[nz] = (1.0 / s) * (z[nz] ** a / a) * hyp2f1(1.0, a, a + 1.0, -z[nz])
    return out


def _g_tail(r: np.ndarray, r0: float, p: float, s: float) -> np.ndarray:
    """int_{r0}^{r} tau^(p-1)/(1+tau^s) dtau by the alternating tail series."""
    total = np.zeros_like(r)
    for k in range(64):
        e = p - 1.0 - s * (k + 1)
        if abs(e + 1.0) < 1e-9:
            term = np.log(r / r0)
        else:
            term = (r ** (e + 1.0) - r0 ** (e + 1.0)) / (e + 1.0)
        term = (-1.0) ** k * term
        total += term
        if np.all(np.abs(term) <= 1e-16 * (1.0 + np.abs(total))):
            break
    return total


def _g_interp(r, p: float, s: float):
    r = np.abs(np.asarray(r, dtype=float))
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    r0 = _Z_SWITCH ** (1.0 / s)
    out = np.empty_like(r)
    small = r <= r0
    out[small] = _g_hyp(r[small], p, s)
    if np.any(~small):
        g0 = _g_hyp(np.array([r0]), p, s)[0]
        out[~small] = g0 + _g_tail(r[~small], r0, p, s)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reaction:
    """A nonlinearity f(x, u) with primitive, slopes and Lipschitz data.

    Instances are immutable; use the classmethod constructors.  The
    callables stored here are vectorized over numpy arrays in both x
    and u.
    """

    p: float
    form: str
    f: Callable  # noqa: A003 - (x, u) -> f(x, u)
    F: Callable  # (x, u) -> int_0^u f(x, .)
    f0: Callable  # slope at 0, function of x
    finf: Callable  # slope at infinity, function of x
    lipschitz: Callable  # R -> Lipschitz constant of f(x, .) on [-R, R]
    params: dict
    # effective slope f(x,u)/(|u|^(p-2)u) at amplitude |u| = radius, when
    # it admits a stable direct evaluation (None for custom forms)
    slope_at: Callable | None = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def homogeneous(cls, g, p: float, l: float | None = None) -> "Reaction":
        """f(x, u) = g(x) |u|^(p-2) u; both asymptotic slopes equal g."""
        p = _check_p(p)
        gc = _as_coefficient(g, l)

        def f(x, u):
            return gc(x) * _odd_power(u, p - 1.0)

        def F(x, u):
            return gc(x) * np.abs(np.asarray(u, dtype=float)) ** p / p

        g_sup = _sup_abs(gc, l)

        def lip(R):
            return g_sup * (p - 1.0) * max(R, 0.0) ** (p - 2.0)

        def slope_at(x, radius):
            return gc(x) * np.ones_like(np.asarray(radius, dtype=float))

        return cls(p=p, form="homogeneous", f=f, F=F, f0=gc, finf=gc,
                   lipschitz=lip, params={"g": gc.describe(), "p": p},
                   slope_at=slope_at)

    @classmethod
    def interpolated(cls, a0, a_inf, s: float, p: float,
                     l: float | None = None) -> "Reaction":
        """f = a(|u|)|u|^(p-2)u with a(r) = a0 + (a_inf - a0) r^s/(1+r^s)."""
        p = _check_p(p)
        s = float(s)
        if not s > 0:
            raise ValueError(f"transition rate s must be positive, got {s}")
        c0 = _as_coefficient(a0, l)
        ci = _as_coefficient(a_inf, l)

        def a_of(x, r):
            with np.errstate(over="ignore"):
                w = 1.0 / (1.0 + r**s)  # 1 at r=0, 0 at r=inf
            return ci(x) + (c0(x) - ci(x)) * w

        def f(x, u):
            u = np.asarray(u, dtype=float)
            return a_of(x, np.abs(u)) * _odd_power(u, p - 1.0)

        def F(x, u):
            u = np.asarray(u, dtype=float)
            r = np.abs(u)
            return ci(x) * r**p / p + (c0(x) - ci(x)) * _g_interp(r, p, s)

        sup_a = max(_sup_abs(c0, l), _sup_abs(ci, l))
        diff_sup = _sup_abs_diff(c0, ci, l)
        # |d/du f| <= sup|a| (p-1) R^(p-2) + sup|a0-a_inf| * max_r s r^(p+s-2)/(1+r^s)^2
        rr = np.geomspace(1e-8, 1e8, 2049)
        c_max = float(np.max(s * rr ** (p + s - 2.0) / (1.0 + rr**s) ** 2))

        def lip(R):
            R = max(R, 0.0)
            rr_loc = np.geomspace(1e-12, max(R, 1e-12), 1025)
            c_loc = float(np.max(s * rr_loc ** (p + s - 2.0)
                                 / (1.0 + rr_loc**s) ** 2, initial=0.0))
            return sup_a * (p - 1.0) * R ** (p - 2.0) + diff_sup * 1.05 * min(c_max, c_loc)

        return cls(p=p, form="interpolated", f=f, F=F, f0=c0, finf=ci,
                   lipschitz=lip,
                   params={"a0": c0.describe(), "a_inf": ci.describe(),
                           "s": s, "p": p},
                   slope_at=a_of)

    @classmethod
    def custom(cls, f: Callable, p: float, f0, finf, lipschitz,
               F: Callable | None = None, l: float | None = None) -> "Reaction":
        """Wrap vectorized callables; the primitive falls back to quadrature.

        ``lipschitz`` is either a callable R -> L(R) or a single constant
        valid on every bounded set.
        """
        p = _check_p(p)
        c0 = _as_coefficient(f0, l)
        ci = _as_coefficient(finf, l)
        if F is None:
            def F(x, u):  # noqa: F811 - quadrature fallback, abs tol 1e-10
                def one(xi, ui):
                    val, _ = quad(lambda t: float(f(xi, t)), 0.0, ui,
                                  epsabs=1e-10, epsrel=1e-12, limit=200)
                    return val
                return np.vectorize(one)(x, u)
        lip = lipschitz if callable(lipschitz) else (lambda R, L=float(lipschitz): L)
        return cls(p=p, form="custom", f=f, F=F, f0=c0, finf=ci,
                   lipschitz=lip, params={"p": p})

    @classmethod
    def blend(cls, r0: "Reaction", r1: "Reaction", mu: float) -> "Reaction":
        """Convex homotopy (1-mu)*r0 + mu*r1 (used for continuation)."""
        if r0.p != r1.p:
            raise ValueError("can only blend reactions with the same exponent p")
        mu = float(mu)

        def f(x, u):
            return (1.0 - mu) * r0.f(x, u) + mu * r1.f(x, u)

        def F(x, u):
            return (1.0 - mu) * r0.F(x, u) + mu * r1.F(x, u)

        def f0(x):
            return (1.0 - mu) * r0.f0(x) + mu * r1.f0(x)

        def finf(x):
            return (1.0 - mu) * r0.finf(x) + mu * r1.finf(x)

        def lip(R):
            return (1.0 - mu) * r0.lipschitz(R) + mu * r1.lipschitz(R)

        slope_at = None
        if r0.slope_at is not None and r1.slope_at is not None:
            def slope_at(x, radius, _s0=r0.slope_at, _s1=r1.slope_at):
                return (1.0 - mu) * _s0(x, radius) + mu * _s1(x, radius)

        return cls(p=r0.p, form="blend", f=f, F=F, f0=_Func(f0),
                   finf=_Func(finf), lipschitz=lip,
                   params={"mu": mu, "r0": r0.params, "r1": r1.params},
                   slope_at=slope_at)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x, u):
        """f(x, u), vectorized."""
        return self.f(x, u)

    def primitive(self, x, u):
        """F(x, u) = int_0^u f(x, tau) dtau, vectorized."""
        return self.F(x, u)

    def is_odd(self, l: float = 1.0) -> bool:
        """Numerically check f(x, -u) = -f(x, u) on a sample."""
        xs = np.linspace(0.0, l, 17)
        us = np.array([0.13, 0.71, 1.9, 5.3])
        for u in us:
            lhs = self.f(xs, np.full_like(xs, -u))
            rhs = -np.asarray(self.f(xs, np.full_like(xs, u)))
            if not np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12):
                return False
        return True


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2.0:
        raise ValueError(f"exponent p must satisfy p >= 2, got {p}")
    return p


def _sup_abs(c: _Coefficient, l: float | None) -> float:
    lo, hi = c.bounds(l if l is not None else 1.0)
    return max(abs(lo), abs(hi))


def _sup_abs_diff(c0: _Coefficient, ci: _Coefficient, l: float | None) -> float:
    ll = l if l is not None else 1.0
    xs = np.linspace(0.0, ll, 1025)
    return float(np.max(np.abs(c0(xs) - ci(xs))))


# ---------------------------------------------------------------------------
# Nemytskii operators on grid functions

def nemytskii(r: Reaction, u: GridFunction) -> GridFunction:
    """Nodewise application x_i -> f(x_i, u_i)."""
    xs = u.grid.interior_nodes
    return GridFunction(u.grid, np.asarray(r.f(xs, u.values), dtype=float))


def rescaled_nemytskii(r: Reaction, u: GridFunction, rho: float) -> GridFunction:
    """rho^(1-p) * f(x, rho*u), the blow-up/blow-down rescaling.

    Converges nodewise to f0(x)|u|^(p-2)u as rho -> 0 and to the finf
    version as rho -> infinity.  Built-in forms evaluate this
    algebraically so extreme rho cannot overflow; custom reactions are
    evaluated directly and overflow raises.
    """
    rho = float(rho)
    if not rho > 0:
        raise ValueError(f"scale rho must be positive, got {rho}")
    xs = u.grid.interior_nodes
    if r.slope_at is not None:
        # rho^(1-p) f(x, rho u) = slope(x, rho|u|) * |u|^(p-2) u by the
        # p-homogeneity of the power factor; immune to extreme rho
        with np.errstate(over="ignore"):
            radii = rho * np.abs(u.values)
        vals = r.slope_at(xs, radii) * _odd_power(u.values, r.p - 1.0)
        return GridFunction(u.grid, np.asarray(vals, dtype=float))
    with np.errstate(over="raise"):
        try:
            vals = rho ** (1.0 - r.p) * np.asarray(r.f(xs, rho * u.values), dtype=float)
        except FloatingPointError as exc:
            raise OverflowError(f"rescaled evaluation overflowed at rho={rho}") from exc
    if not np.all(np.isfinite(vals)):
        raise OverflowError(f"rescaled evaluation overflowed at rho={rho}")
    return GridFunction(u.grid, vals)


# ---------------------------------------------------------------------------
# bracketing the slopes in the spectrum

@dataclass(frozen=True)
class IndexBracket:
    """Counts k with lambda_k <= slope <= lambda_(k+1) for both slopes.

    The convention lambda_0 = -infinity makes k = 0 mean "below the first
    eigenvalue".  ``margins`` hold the distances of each slope range to
    its bracketing eigenvalues, (lower, upper) per slope.
    """

    k0: int
    k_inf: int
    margins0: tuple[float, float]
    margins_inf: tuple[float, float]

    @property
    def existence_predicted(self) -> bool:
        return self.k0 != self.k_inf


def _bracket_one(lo: float, hi: float, p: float, l: float, label: str) -> tuple[int, tuple[float, float]]:
    lam = [-math.inf]
    k = 1
    while True:
        lam.append(eigen.eigenvalue(k, p, l))
        if lam[-1] > hi:
            break
        k += 1
        if k > 10_000:
            raise RuntimeError("slope bound unreasonably large")
    for j in range(1, len(lam)):
        if lo < lam[j] < hi:
            raise ResonanceError(
                f"{label} range [{lo}, {hi}] contains eigenvalue "
                f"lambda_{j} = {lam[j]} in its interior")
    k0 = max(j for j in range(len(lam)) if lam[j] <= lo)
    lam_up = lam[k0 + 1] if k0 + 1 < len(lam) else eigen.eigenvalue(k0 + 1, p, l)
    if hi > lam_up:
        raise ResonanceError(
            f"{label} range [{lo}, {hi}] is not contained in "
            f"[lambda_{k0}, lambda_{k0 + 1}]")
    if k0 >= 1 and lo == lam[k0] and hi == lam_up:
        raise ResonanceError(
            f"{label} range [{lo}, {hi}] touches eigenvalues at both ends")
    if k0 >= 1 and hi == lam[k0]:
        raise ResonanceError(
            f"{label} slope sits exactly on eigenvalue lambda_{k0} = {lam[k0]}")
    return k0, (lo - lam[k0], lam_up - hi)


def index_bracket(r: Reaction, l: float) -> IndexBracket:
    """Locate f'_0 and f'_inf in the spectrum and report (k0, k_inf)."""
    lo0, hi0 = r.f0.bounds(l)
    loi, hii = r.finf.bounds(l)
    k0, m0 = _bracket_one(lo0, hi0, r.p, l, "f'_0")
    ki, mi = _bracket_one(loi, hii, r.p, l, "f'_inf")
    return IndexBracket(k0=k0, k_inf=ki, margins0=m0, margins_inf=mi)
