"""Dirichlet eigenpairs of the 1-D p-Laplacian.

Two independent routes to every eigenvalue:

* the generalized-trigonometric closed form
  lambda_n = (p-1) * (n * pi_p / l)**p with pi_p = 2*pi / (p*sin(pi/p)),
* a shooting oracle that integrates the eigen-ODE as an initial value
  problem and bisects the spectral parameter until the n-th zero of the
  solution lands on the right endpoint.

The test suite refuses to trust the closed form until the oracle agrees
with it, so the formula can never silently drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .grid import Grid, GridFunction, norm, p_laplacian

__all__ = [
    "Eigenpair",
    "BracketNotFoundError",
    "pi_p",
    "eigenvalue",
    "shooting_eigenvalue",
    "eigenfunction",
    "continuity_in_p",
    "integrate_eigen_ivp",
    "count_sign_changes",
]


class BracketNotFoundError(RuntimeError):
    """Doubling search failed to bracket the requested eigenvalue."""


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2.0:
        raise ValueError(f"exponent p must satisfy p >= 2, got {p}")
    return p


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"mode index n must be a positive integer, got {n}")
    return int(n)


def pi_p(p: float) -> float:
    """Half-period of the generalized sine: pi_p = 2*pi / (p*sin(pi/p))."""
    p = _check_p(p)
    return 2.0 * math.pi / (p * math.sin(math.pi / p))


def eigenvalue(n: int, p: float, l: float) -> float:
    """Closed-form n-th Dirichlet eigenvalue (p-1)*(n*pi_p/l)**p."""
    n = _check_n(n)
    p = _check_p(p)
    if not l > 0:
        raise ValueError(f"domain length must be positive, got {l}")
    return (p - 1.0) * (n * pi_p(p) / l) ** p


def integrate_eigen_ivp(lam: float, p: float, l: float, rtol: float = 1e-11,
                        atol: float = 1e-13, dense: bool = False):
    """Integrate -(|u'|^(p-2)u')' = lam*|u|^(p-2)u, u(0)=0, u'(0)=1 over [0, l].

    Works in the variables (u, w) with w = |u'|^(p-2) u', whose
    right-hand side u' = sign(w)|w|^(1/(p-1)), w' = -lam*|u|^(p-2)u
    stays continuous where u' vanishes.  Zero crossings of u are
    recorded as integration events (the spurious event at x = 0 is kept;
    callers filter it).
    """
    p = _check_p(p)
    pm1 = p - 1.0

    def rhs(x, y):
        u, w = y
        return (np.sign(w) * np.abs(w) ** (1.0 / pm1),
                -lam * np.sign(u) * np.abs(u) ** pm1)

    def crossing(x, y):
        return y[0]

    sol = solve_ivp(rhs, (0.0, l), (0.0, 1.0), method="DOP853",
                    events=crossing, rtol=rtol, atol=atol,
                    dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"eigen IVP integration failed: {sol.message}")
    return sol


def _interior_zeros(sol, l: float) -> np.ndarray:
    zs = sol.t_events[0]
    return zs[zs > 1e-12 * max(1.0, l)]


def shooting_eigenvalue(n: int, p: float, l: float, tol: float = 1e-8) -> float:
    """Independent eigenvalue oracle: bisect lam so the n-th zero sits at x = l.

    A value lam is "large enough" exactly when the IVP solution has at
    least n interior zeros on (0, l]; this count is nondecreasing in lam
    and flips at lam_n.  The initial bracket is found by doubling/halving
    from lam = 1.
    """
    n = _check_n(n)
    p = _check_p(p)
    if not tol > 0:
        raise ValueError("tol must be positive")

    def reaches(lam: float) -> bool:
        sol = integrate_eigen_ivp(lam, p, l)
        return len(_interior_zeros(sol, l)) >= n

    lam_lo = lam_hi = 1.0
    for _ in range(200):
        if reaches(lam_hi):
            break
        lam_hi *= 2.0
    else:
        raise BracketNotFoundError(f"no upper bracket for n={n}, p={p}, l={l}")
    for _ in range(200):
        if not reaches(lam_lo):
            break
        lam_lo *= 0.5
    else:
        raise BracketNotFoundError(f"no lower bracket for n={n}, p={p}, l={l}")

    while lam_hi - lam_lo > tol * 0.5 * (lam_hi + lam_lo):
        mid = 0.5 * (lam_lo + lam_hi)
        if reaches(mid):
            lam_hi = mid
        else:
            lam_lo = mid
    return 0.5 * (lam_lo + lam_hi)


def count_sign_changes(values: np.ndarray) -> int:
    """Strict sign changes in a sequence, zeros ignored."""
    signs = np.sign(values)
    signs = signs[signs != 0]
    if len(signs) < 2:
        return 0
    return int(np.sum(signs[1:] != signs[:-1]))


@dataclass(frozen=True)
class Eigenpair:
    """Eigenvalue lambda_n with its sup-normalized eigenfunction.

    The eigenfunction has exactly n-1 interior sign changes, sup-norm 1,
    a positive first lobe, and reports the discrete residual
    ||A_p e - lam*|e|^(p-2)e||_l2 measured on its grid.
    """

    n: int
    p: float
    length: float
    lam: float
    eigenfunction: GridFunction
    residual: float


def eigenfunction(n: int, p: float, l: float, grid: Grid) -> Eigenpair:
    """Sample the n-th eigenfunction on a grid (rescaled generalized sine)."""
    n = _check_n(n)
    p = _check_p(p)
    if abs(grid.length - l) > 1e-12 * max(1.0, l):
        raise ValueError(f"grid.length {grid.length} != requested l {l}")
    lam = eigenvalue(n, p, l)
    sol = integrate_eigen_ivp(lam, p, l, dense=True)
    vals = sol.sol(grid.interior_nodes)[0]

    m = np.max(np.abs(vals))
    if m == 0:
        raise RuntimeError("degenerate eigenfunction sample")
    vals = vals / m
    nz = vals[vals != 0]
    if len(nz) and nz[0] < 0:
        vals = -vals
    e = GridFunction(grid, vals)

    flux = np.sign(e.values) * np.abs(e.values) ** (p - 1.0)
    res = norm(GridFunction(grid, p_laplacian(e, p).values - lam * flux), "l2")
    return Eigenpair(n=n, p=p, length=l, lam=lam, eigenfunction=e, residual=res)


def continuity_in_p(n: int, p0: float, deltas, l: float = 1.0):
    """Table of (q, lambda_n(q), |lambda_n(q) - lambda_n(p0)|) for q = p0 + delta."""
    lam0 = eigenvalue(n, p0, l)
    rows = []
    for d in deltas:
        q = p0 + float(d)
        lam_q = eigenvalue(n, q, l)
        rows.append((q, lam_q, abs(lam_q - lam0)))
    return rows
