"""Stationary solutions of -(|u'|^(p-2) u')' = f(x, u), u(0) = u(l) = 0.

Candidates come from a shooting scan: integrate the first-order system
u' = sign(w)|w|^(1/(p-1)), w' = -f(x, u) (the flux variable
w = |u'|^(p-2) u' keeps the right-hand side continuous through critical
points of u), sweep the initial slope, and bisect every sign change of
the endpoint mismatch u(l; slope).

A sampled continuum profile does not satisfy the *discrete* equilibrium
equation to better than truncation error, so every accepted candidate is
then polished by damped Newton on A_p^h u = f(x, u) on the target grid.
Polished states are exact fixed points of the evolution splitting (up to
the inner-solve tolerance), which is what the flow experiments need.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from . import eigen
from .grid import Grid, GridFunction, norm, p_laplacian
from .reaction import Reaction, nemytskii
from .semiflow import BLOWUP, EvolutionConfig, evolve, lyapunov

__all__ = [
    "EquilibriumRecord",
    "ShotProfile",
    "ContinuationPath",
    "shoot",
    "elliptic_residual",
    "newton_polish",
    "find_equilibria",
    "default_slope_range",
    "continue_in_mu",
    "continue_in_p",
    "stability_probe",
]

ATTRACTING = "attracting"
REPELLING = "repelling"
UNDETERMINED = "undetermined"

_ESCAPE_AMPLITUDE = 1e8


@dataclass(frozen=True)
class EquilibriumRecord:
    """A stationary state accepted on a grid, with its certificates."""

    u: GridFunction
    shooting_slope: float
    boundary_mismatch: float
    elliptic_residual: float
    lyapunov_value: float
    n_sign_changes: int
    stability_hint: str = UNDETERMINED

    @property
    def is_trivial(self) -> bool:
        return norm(self.u, "sup") == 0.0


@dataclass(frozen=True)
class ShotProfile:
    """Result of one shooting integration over [0, l]."""

    slope: float
    endpoint: float          # u(l); +-inf when the trajectory escaped
    escaped: bool
    _dense: object           # solve_ivp dense-output solution

    def on_grid(self, grid: Grid) -> GridFunction:
        if self.escaped:
            raise RuntimeError("escaped trajectory has no grid profile")
        return GridFunction(grid, self._dense(grid.interior_nodes)[0])

    def values(self, xs) -> np.ndarray:
        return self._dense(np.asarray(xs, dtype=float))[0]


def shoot(r: Reaction, l: float, slope: float, tol: float = 1e-11) -> ShotProfile:
    """Integrate the stationary ODE from u(0)=0, u'(0)=slope up to x=l."""
    if not np.isfinite(slope):
        raise ValueError(f"slope must be finite, got {slope}")
    if not tol > 0:
        raise ValueError("integrator tol must be positive")
    p = r.p
    w0 = np.sign(slope) * abs(slope) ** (p - 1.0)

    def rhs(x, y):
        u, w = y
        return (np.sign(w) * abs(w) ** (1.0 / (p - 1.0)), -float(r.f(x, u)))

    def escape(x, y):
        return abs(y[0]) - _ESCAPE_AMPLITUDE

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, l), (0.0, w0), method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True,
                    events=escape)
    if sol.status == 1:  # escape event fired
        sign = np.sign(sol.y[0, -1])
        return ShotProfile(slope=slope, endpoint=sign * np.inf, escaped=True,
                           _dense=sol.sol)
    if not sol.success:
        raise RuntimeError(f"shooting integration failed: {sol.message}")
    return ShotProfile(slope=slope, endpoint=float(sol.y[0, -1]), escaped=False,
                       _dense=sol.sol)


def elliptic_residual(u: GridFunction, r: Reaction) -> float:
    """||A_p^h u - f(x, u)||_l2 on u's grid."""
    return norm(p_laplacian(u, r.p) - nemytskii(r, u), "l2")


def _df_du(r: Reaction, xs: np.ndarray, u: np.ndarray) -> np.ndarray:
    h = 1e-7 * (1.0 + np.abs(u))
    return (np.asarray(r.f(xs, u + h)) - np.asarray(r.f(xs, u - h))) / (2.0 * h)


def newton_polish(u: GridFunction, r: Reaction, tol: float = 1e-9,
                  max_iter: int = 60) -> tuple[GridFunction, float, bool]:
    """Damped Newton on the discrete system G(u) = A_p^h u - f(x, u) = 0.

    Returns (state, residual, converged).  The merit function is
    ||G||^2; steps are halved until it decreases.
    """
    grid = u.grid
    dx = grid.spacing
    xs = grid.interior_nodes
    p = r.p
    v = u.values.copy()

    def G(v):
        ve = np.concatenate(([0.0], v, [0.0]))
        d = np.diff(ve) / dx
        flux = np.sign(d) * np.abs(d) ** (p - 1.0)
        return -np.diff(flux) / dx - np.asarray(r.f(xs, v), dtype=float)

    g = G(v)
    res = np.sqrt(np.sum(g * g) * dx)
    for _ in range(max_iter):
        if res <= tol:
            return GridFunction(grid, v), res, True
        ve = np.concatenate(([0.0], v, [0.0]))
        d = np.diff(ve) / dx
        c = (p - 1.0) * np.abs(d) ** (p - 2.0) + 1e-12 * (1.0 + np.abs(d) ** (p - 2.0))
        n = len(v)
        ab = np.zeros((3, n))
        ab[1] = (c[:-1] + c[1:]) / dx**2 - _df_du(r, xs, v)
        if n > 1:
            ab[0, 1:] = -c[1:-1] / dx**2
            ab[2, :-1] = -c[1:-1] / dx**2
        try:
            step = solve_banded((1, 1), ab, -g)
        except np.linalg.LinAlgError:
            break
        merit = np.sum(g * g)
        t_ls = 1.0
        improved = False
        for _ in range(40):
            v_new = v + t_ls * step
            g_new = G(v_new)
            if np.sum(g_new * g_new) < merit:
                improved = True
                break
            t_ls *= 0.5
        if not improved:
            break
        v, g = v_new, g_new
        res = np.sqrt(np.sum(g * g) * dx)
    return GridFunction(grid, v), res, res <= tol


def default_slope_range(r: Reaction, l: float) -> tuple[float, float]:
    """Heuristic scan window for the shooting slope (no completeness claim).

    Uses the effective-slope amplitude R* where the reaction crosses the
    first eigenvalue (when it does) and the eigen-profile relation
    slope ~ amplitude * (slope_bound/(p-1))^(1/p), padded by 2x.
    """
    p = r.p
    lo0, hi0 = r.f0.bounds(l)
    loi, hii = r.finf.bounds(l)
    m = max(abs(lo0), abs(hi0), abs(loi), abs(hii), 1e-6)
    lam1 = eigen.eigenvalue(1, p, l)
    r_star = 1.0
    if r.slope_at is not None:
        radii = np.geomspace(1e-4, 1e4, 513)
        slopes = np.asarray(r.slope_at(np.full_like(radii, l / 2.0), radii))
        crossing = np.nonzero(np.diff(np.sign(slopes - lam1)))[0]
        if len(crossing):
            r_star = max(r_star, radii[crossing[-1] + 1])
    s = 2.0 * r_star * (m / (p - 1.0)) ** (1.0 / p)
    return (-s, s)


def _trivial_record(grid: Grid, r: Reaction) -> EquilibriumRecord:
    z = GridFunction.zeros(grid)
    return EquilibriumRecord(u=z, shooting_slope=0.0, boundary_mismatch=0.0,
                             elliptic_residual=0.0,
                             lyapunov_value=0.0, n_sign_changes=0)


def _record_from_slope(r: Reaction, grid: Grid, slope: float, mismatch: float,
                       profile: ShotProfile, polish_tol: float) -> EquilibriumRecord | None:
    sampled = profile.on_grid(grid)
    polished, res, ok = newton_polish(sampled, r, tol=polish_tol)
    if not ok:
        return None
    return EquilibriumRecord(
        u=polished,
        shooting_slope=slope,
        boundary_mismatch=mismatch,
        elliptic_residual=res,
        lyapunov_value=lyapunov(polished, r),
        n_sign_changes=eigen.count_sign_changes(polished.values))


def find_equilibria(r: Reaction, grid: Grid,
                    slope_range: tuple[float, float] | None = None,
                    n_samples: int = 64, accept_tol: float = 1e-8,
                    polish_tol: float = 1e-9,
                    shoot_tol: float = 1e-11) -> list[EquilibriumRecord]:
    """Scan shooting slopes, bisect endpoint sign changes, polish on the grid.

    The trivial record is always included.  When f is odd in u the output
    is closed under negation.  Records are deduplicated by sup-distance
    (100 * accept_tol) and sorted by Lyapunov value.
    """
    if n_samples < 8:
        raise ValueError("need at least 8 slope samples")
    l = grid.length
    if slope_range is None:
        slope_range = default_slope_range(r, l)
    slopes = np.linspace(slope_range[0], slope_range[1], n_samples)

    def endpoint(s: float) -> float:
        return shoot(r, l, s, tol=shoot_tol).endpoint

    ends = np.array([endpoint(s) for s in slopes])
    records: list[EquilibriumRecord] = [_trivial_record(grid, r)]

    for i in range(len(slopes) - 1):
        e0, e1 = ends[i], ends[i + 1]
        if not (np.isfinite(e0) and np.isfinite(e1)):
            continue  # escaped shots bracket nothing usable
        if e0 == 0.0 and abs(slopes[i]) > 0:
            root = slopes[i]
        elif np.sign(e0) * np.sign(e1) < 0:
            root = brentq(endpoint, slopes[i], slopes[i + 1], xtol=1e-13, rtol=1e-15)
        else:
            continue
        if abs(root) < 1e-12:
            continue  # the trivial solution is recorded already
        prof = shoot(r, l, root, tol=shoot_tol)
        if prof.escaped or abs(prof.endpoint) > accept_tol:
            continue
        rec = _record_from_slope(r, grid, root, prof.endpoint, prof, polish_tol)
        if rec is not None:
            records.append(rec)

    if r.is_odd(l):
        for rec in list(records):
            if rec.is_trivial:
                continue
            neg = GridFunction(grid, -rec.u.values)
            records.append(replace(
                rec, u=neg, shooting_slope=-rec.shooting_slope,
                boundary_mismatch=-rec.boundary_mismatch,
                lyapunov_value=lyapunov(neg, r),
                elliptic_residual=elliptic_residual(neg, r)))

    deduped: list[EquilibriumRecord] = []
    for rec in records:
        if all(norm(rec.u - kept.u, "sup") > 100.0 * accept_tol for kept in deduped):
            deduped.append(rec)
    deduped.sort(key=lambda rec: rec.lyapunov_value)
    return deduped


@dataclass(frozen=True)
class ContinuationPath:
    """Records along a parameter grid; fold_at marks early truncation."""

    parameters: tuple
    records: tuple
    fold_at: float | None = None

    @property
    def completed(self) -> bool:
        return self.fold_at is None


def _root_near(endpoint: Callable[[float], float], s0: float) -> float | None:
    """Locate a slope root near s0 by expanding brackets, None on failure."""
    e0 = endpoint(s0)
    if np.isfinite(e0) and abs(e0) < 1e-13:
        return s0
    delta = max(1e-6, 1e-3 * (1.0 + abs(s0)))
    for _ in range(24):
        lo, hi = s0 - delta, s0 + delta
        e_lo, e_hi = endpoint(lo), endpoint(hi)
        if np.isfinite(e_lo) and np.isfinite(e_hi) and np.sign(e_lo) * np.sign(e_hi) < 0:
            return brentq(endpoint, lo, hi, xtol=1e-13, rtol=1e-15)
        if np.isfinite(e_lo) and np.isfinite(e0) and np.sign(e_lo) * np.sign(e0) < 0:
            return brentq(endpoint, lo, s0, xtol=1e-13, rtol=1e-15)
        if np.isfinite(e_hi) and np.isfinite(e0) and np.sign(e_hi) * np.sign(e0) < 0:
            return brentq(endpoint, s0, hi, xtol=1e-13, rtol=1e-15)
        delta *= 2.0
        if delta > 1e3 * (1.0 + abs(s0)):
            break
    return None


def _continue_along(make_reaction: Callable[[float], Reaction], seed: EquilibriumRecord,
                    params, grid: Grid, accept_tol: float, polish_tol: float,
                    shoot_tol: float) -> ContinuationPath:
    l = grid.length
    records = []
    done = []
    slope = seed.shooting_slope
    for par in params:
        r_par = make_reaction(float(par))

        def endpoint(s: float) -> float:
            return shoot(r_par, l, s, tol=shoot_tol).endpoint

        root = _root_near(endpoint, slope)
        if root is None:
            return ContinuationPath(tuple(done), tuple(records), fold_at=float(par))
        prof = shoot(r_par, l, root, tol=shoot_tol)
        if prof.escaped or abs(prof.endpoint) > accept_tol:
            return ContinuationPath(tuple(done), tuple(records), fold_at=float(par))
        rec = _record_from_slope(r_par, grid, root, prof.endpoint, prof, polish_tol)
        if rec is None:
            return ContinuationPath(tuple(done), tuple(records), fold_at=float(par))
        records.append(rec)
        done.append(float(par))
        slope = root
    return ContinuationPath(tuple(done), tuple(records), fold_at=None)


def continue_in_mu(r0: Reaction, r1: Reaction, seed: EquilibriumRecord, mus,
                   grid: Grid, accept_tol: float = 1e-8, polish_tol: float = 1e-9,
                   shoot_tol: float = 1e-11) -> ContinuationPath:
    """Track a branch along the homotopy (1-mu)*r0 + mu*r1.

    The seed must solve the mu = first-entry problem; each step reshoots
    seeded with the previous slope.  A failed bracket (fold) truncates
    the path and records the offending mu.
    """
    return _continue_along(lambda mu: Reaction.blend(r0, r1, mu), seed, mus,
                           grid, accept_tol, polish_tol, shoot_tol)


def continue_in_p(reaction_family: Callable[[float], Reaction],
                  seed: EquilibriumRecord, ps, grid: Grid,
                  accept_tol: float = 1e-8, polish_tol: float = 1e-9,
                  shoot_tol: float = 1e-11) -> ContinuationPath:
    """Track a branch along an exponent grid; family maps p to a Reaction."""
    return _continue_along(reaction_family, seed, ps, grid, accept_tol,
                           polish_tol, shoot_tol)


def stability_probe(eq: EquilibriumRecord, r: Reaction, eps: float,
                    t_probe: float, dt: float | None = None,
                    prox_tol: float = 1e-11) -> str:
    """Flow-based stability classification of an equilibrium.

    Perturb by +-eps along the first eigenfunction and evolve for
    t_probe: attracting if both probes end within eps/2 of the
    equilibrium, repelling if either leaves a 10*eps tube (or blows up),
    undetermined otherwise.
    """
    if not eps > 0:
        raise ValueError("probe size eps must be positive")
    grid = eq.u.grid
    e1 = eigen.eigenfunction(1, r.p, grid.length, grid).eigenfunction
    if dt is None:
        dt = min(1e-2, t_probe / 100.0)
    n_steps = max(int(round(t_probe / dt)), 1)
    cfg = EvolutionConfig(dt=t_probe / n_steps, t_end=t_probe, prox_tol=prox_tol,
                          snapshot_every=max(n_steps // 100, 1))
    final_dists = []
    for sign in (+1.0, -1.0):
        traj = evolve(eq.u + (sign * eps) * e1, r, cfg)
        if traj.termination.status == BLOWUP:
            return REPELLING
        dists = [norm(s.u - eq.u, "sup") for s in traj.snapshots]
        if max(dists) > 10.0 * eps:
            return REPELLING
        final_dists.append(dists[-1])
    if all(d <= eps / 2.0 for d in final_dists):
        return ATTRACTING
    return UNDETERMINED
