"""Uniform 1-D mesh on [0, l] with homogeneous Dirichlet endpoints.

Interior nodal values are the only stored degrees of freedom; the two
boundary values are identically zero and get re-attached whenever a
difference quotient is formed.  The discrete p-Dirichlet energy, the
flux-form p-Laplacian (its exact gradient with respect to the weighted
inner product), and the norms used by every other module live here.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "p_dirichlet_energy",
    "p_laplacian",
    "norm",
    "inner_product",
    "write_csv",
    "read_csv",
]


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 2.0:
        raise ValueError(f"exponent p must satisfy p >= 2, got {p}")
    return p


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``n_cells`` cells on [0, length].

    Interior nodes are x_i = i*spacing for i = 1..n_cells-1; both
    endpoints carry the homogeneous Dirichlet condition.
    """

    length: float
    n_cells: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if self.n_cells < 2:
            raise ValueError(f"n_cells must be >= 2, got {self.n_cells}")

    @property
    def spacing(self) -> float:
        return self.length / self.n_cells

    @property
    def n_interior(self) -> int:
        return self.n_cells - 1

    @property
    def nodes(self) -> np.ndarray:
        """All node coordinates, boundary included, shape (n_cells + 1,)."""
        return np.arange(self.n_cells + 1) * self.spacing

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.arange(1, self.n_cells) * self.spacing


@dataclass(frozen=True)
class GridFunction:
    """Interior nodal values of a function vanishing at both endpoints."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.n_interior,):
            raise ValueError(
                f"expected {self.grid.n_interior} interior values, got shape {vals.shape}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n_interior))

    @classmethod
    def sample(cls, grid: Grid, fn) -> "GridFunction":
        """Sample a callable of x at the interior nodes."""
        return cls(grid, np.asarray(fn(grid.interior_nodes), dtype=float))

    def extended(self) -> np.ndarray:
        """Values on all nodes with the zero boundary values attached."""
        out = np.zeros(self.grid.n_cells + 1)
        out[1:-1] = self.values
        return out

    # small amount of vector-space sugar so perturbation experiments read
    # naturally; scalars only on the multiplicative side
    def __add__(self, other: "GridFunction") -> "GridFunction":
        _same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)


def _same_grid(u: GridFunction, v: GridFunction) -> None:
    if u.grid != v.grid:
        raise ValueError(f"grid mismatch: {u.grid} vs {v.grid}")


def difference_quotients(u: GridFunction) -> np.ndarray:
    """Edge slopes D_{i+1/2} = (u_{i+1} - u_i)/dx, shape (n_cells,)."""
    return np.diff(u.extended()) / u.grid.spacing


def _flux(s: np.ndarray, p: float) -> np.ndarray:
    """The odd power map s -> |s|^(p-2) s."""
    return np.sign(s) * np.abs(s) ** (p - 1.0)


def p_dirichlet_energy(u: GridFunction, p: float) -> float:
    """Discrete energy (1/p) * sum_edges |D_{i+1/2}|^p * dx.

    Equals (1/p) * int_0^l |u'|^p dx for the piecewise-linear
    interpolant of u.
    """
    p = _check_p(p)
    d = difference_quotients(u)
    return float(np.sum(np.abs(d) ** p) / p * u.grid.spacing)


def p_laplacian(u: GridFunction, p: float) -> GridFunction:
    """Flux-form discrete p-Laplacian -(|u'|^(p-2) u')' on interior nodes.

    (A u)_i = -(phi(D_{i+1/2}) - phi(D_{i-1/2}))/dx with phi(s)=|s|^(p-2)s.
    This is exactly the gradient of :func:`p_dirichlet_energy` with
    respect to the dx-weighted inner product.
    """
    p = _check_p(p)
    d = difference_quotients(u)
    return GridFunction(u.grid, -np.diff(_flux(d, p)) / u.grid.spacing)


def norm(u: GridFunction, kind: str = "l2", p: float | None = None) -> float:
    """Norms on GridFunction: 'sup', 'l2' (dx-weighted), or 'w1p' seminorm.

    The 'w1p' kind needs the exponent: (sum |D_{i+1/2}|^p dx)^(1/p).
    """
    if kind == "sup":
        return float(np.max(np.abs(u.values), initial=0.0))
    if kind == "l2":
        return float(np.sqrt(np.sum(u.values**2) * u.grid.spacing))
    if kind == "w1p":
        if p is None:
            raise ValueError("w1p norm needs the exponent p")
        p = _check_p(p)
        d = difference_quotients(u)
        return float((np.sum(np.abs(d) ** p) * u.grid.spacing) ** (1.0 / p))
    raise ValueError(f"unknown norm kind {kind!r}")


def inner_product(u: GridFunction, v: GridFunction) -> float:
    """Discrete L2 pairing sum_i u_i v_i dx."""
    _same_grid(u, v)
    return float(np.sum(u.values * v.values) * u.grid.spacing)


def write_csv(u: GridFunction, path_or_file) -> None:
    """Serialize to CSV with header x,u over all nodes, boundaries included.

    Values are written in positional decimal notation with enough digits
    to round-trip exactly.
    """
    xs = u.grid.nodes
    vals = u.extended()
    lines = ["x,u"]
    for x, v in zip(xs, vals):
        lines.append(
            f"{np.format_float_positional(x, unique=True)},"
            f"{np.format_float_positional(v, unique=True)}"
        )
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def read_csv(path_or_file) -> GridFunction:
    """Read a GridFunction written by :func:`write_csv`."""
    if hasattr(path_or_file, "read"):
        fh = path_or_file
        data = fh.read()
    else:
        with open(path_or_file) as fh:
            data = fh.read()
    rows = np.loadtxt(io.StringIO(data), delimiter=",", skiprows=1)
    xs, vals = rows[:, 0], rows[:, 1]
    n_cells = len(xs) - 1
    grid = Grid(length=float(xs[-1]), n_cells=n_cells)
    if not np.allclose(xs, grid.nodes, rtol=0, atol=1e-12 * max(1.0, grid.length)):
        raise ValueError("node coordinates are not a uniform grid starting at 0")
    if abs(vals[0]) > 0 or abs(vals[-1]) > 0:
        raise ValueError("boundary values must be exactly zero")
    return GridFunction(grid, vals[1:-1])
