"""Discrete steady cavity flow: polynomial systems, energy and grid mappings.

Grid points are ``(i, j)`` with ``1 <= i, j <= N``; ``i`` runs along x,
``j`` along y, and the row ``j = N`` is the moving lid.  Only interior
values are unknowns: all interior psi (row-major: ``j`` outer, ``i`` inner)
followed by all interior omega in the same order.  Boundary psi is zero and
boundary omega is eliminated by the wall formulas

* lid (``j = N``):  ``omega = -2 (psi_P + v h) / h**2``
* other walls:      ``omega = -2 psi_P / h**2``

where ``P`` is the interior neighbour along the wall normal.  The two lid
corners take the lid value, the other corners are zero.

Equations are ordered psi-equations first, then omega-equations, so that
equation ``k`` carries the diagonal stencil entry of variable ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .polysys import Poly, PolySystem

SCHEMES = ("central", "arakawa")


def mesh_size(N: int) -> float:
    # N points per side span the unit square
    return 1.0 / (N - 1)


@dataclass(frozen=True)
class GridMap:
    N: int

    def __post_init__(self):
        if self.N < 4:
            raise ValueError(f"N must be at least 4 (got {self.N})")

    @property
    def h(self) -> float:
        return mesh_size(self.N)

    @property
    def m(self) -> int:
        return self.N - 2

    @property
    def n_interior(self) -> int:
        return self.m * self.m

    @property
    def dimension(self) -> int:
        return 2 * self.n_interior

    def is_interior(self, i: int, j: int) -> bool:
        return 2 <= i <= self.N - 1 and 2 <= j <= self.N - 1

    def psi_index(self, i: int, j: int) -> int:
        if not self.is_interior(i, j):
            raise IndexError(f"({i}, {j}) is not an interior point")
        return (j - 2) * self.m + (i - 2)

    def omega_index(self, i: int, j: int) -> int:
        return self.n_interior + self.psi_index(i, j)

    def interior_points(self):
        for j in range(2, self.N):
            for i in range(2, self.N):
                yield i, j

    def coords(self, i: int, j: int) -> tuple[float, float]:
        return (i - 1) * self.h, (j - 1) * self.h

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Interior psi and omega of ``x`` as ``(m, m)`` arrays indexed ``[j-2, i-2]``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected a vector of length {self.dimension}, got {x.shape}")
        n = self.n_interior
        return x[:n].reshape(self.m, self.m), x[n:].reshape(self.m, self.m)

    def full_grids(self, x, v: float) -> tuple[np.ndarray, np.ndarray]:
        """Full ``(N, N)`` psi and omega grids indexed ``[j-1, i-1]``, boundary included."""
        psi_in, om_in = self.split(x)
        N, h = self.N, self.h
        psi = np.zeros((N, N))
        om = np.zeros((N, N))
        psi[1:-1, 1:-1] = psi_in
        om[1:-1, 1:-1] = om_in
        om[0, 1:-1] = -2.0 * psi[1, 1:-1] / h**2
        om[1:-1, 0] = -2.0 * psi[1:-1, 1] / h**2
        om[1:-1, -1] = -2.0 * psi[1:-1, -2] / h**2
        om[-1, :] = -(2.0 * psi[-2, :] + 2.0 * v * h) / h**2
        return psi, om

    def from_full_grids(self, psi: np.ndarray, om: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(psi)[1:-1, 1:-1].ravel(),
                               np.asarray(om)[1:-1, 1:-1].ravel()])


class _Fields:
    """Symbolic psi/omega accessors on the full grid with boundary substitution."""

    def __init__(self, grid: GridMap, v: float):
        self.g = grid
        self.v = float(v)
        n = grid.dimension
        self.zero = Poly.zero(n)
        self._psi = {}
        self._om = {}
        for i, j in grid.interior_points():
            self._psi[i, j] = Poly.var(grid.psi_index(i, j), n)
            self._om[i, j] = Poly.var(grid.omega_index(i, j), n)

    def psi(self, i: int, j: int) -> Poly:
        return self._psi.get((i, j), self.zero)

    def omega(self, i: int, j: int) -> Poly:
        g = self.g
        if (i, j) in self._om:
            return self._om[i, j]
        N, h = g.N, g.h
        if j == N:
            return (self.psi(i, N - 1) * 2.0 + 2.0 * self.v * h) * (-1.0 / h**2)
        if j == 1:
            return self.psi(i, 2) * (-2.0 / h**2)
        if i == 1:
            return self.psi(2, j) * (-2.0 / h**2)
        if i == N:
            return self.psi(N - 1, j) * (-2.0 / h**2)
        raise IndexError(f"({i}, {j}) outside the grid")


def laplace5(f: Callable, i: int, j: int):
    return -4 * f(i, j) + f(i + 1, j) + f(i - 1, j) + f(i, j + 1) + f(i, j - 1)


def central_bracket(P: Callable, W: Callable, i: int, j: int):
    """``(P[i+1,j]-P[i-1,j])(W[i,j+1]-W[i,j-1]) - (P[i,j+1]-P[i,j-1])(W[i+1,j]-W[i-1,j])``."""
    return ((P(i + 1, j) - P(i - 1, j)) * (W(i, j + 1) - W(i, j - 1))
            - (P(i, j + 1) - P(i, j - 1)) * (W(i + 1, j) - W(i - 1, j)))


def arakawa_bracket(P: Callable, W: Callable, i: int, j: int):
    """Eight-term bracket of Arakawa's Jacobian, without the ``-1/(12 h^2)`` prefactor.

    Works on any accessor returning numbers or :class:`Poly`.  With the
    prefactor it approximates ``P_x W_y - P_y W_x`` at ``(i, j)``, the same
    combination the central bracket carries.
    """
    ip, im, jp, jm = i + 1, i - 1, j + 1, j - 1
    return ((W(i, jm) + W(ip, jm) - W(i, jp) - W(ip, jp)) * (P(ip, j) + P(i, j))
            - (W(im, jm) + W(i, jm) - W(im, jp) - W(i, jp)) * (P(i, j) + P(im, j))
            + (W(ip, j) + W(ip, jp) - W(im, j) - W(im, jp)) * (P(i, jp) + P(i, j))
            - (W(ip, jm) + W(ip, j) - W(im, jm) - W(im, j)) * (P(i, j) + P(i, jm))
            + (W(ip, j) - W(i, jp)) * (P(ip, jp) + P(i, j))
            - (W(i, jm) - W(im, j)) * (P(i, j) + P(im, jm))
            + (W(i, jp) - W(im, j)) * (P(im, jp) + P(i, j))
            - (W(ip, j) - W(i, jm)) * (P(i, j) + P(ip, jm)))


def _build(R: float, v: float, N: int, scheme: str) -> PolySystem:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if R < 0:
        raise ValueError("R must be non-negative")
    grid = GridMap(N)
    f = _Fields(grid, v)
    h2 = grid.h ** 2
    psi_eqs, om_eqs = [], []
    for i, j in grid.interior_points():
        psi_eqs.append(laplace5(f.psi, i, j) + f.omega(i, j) * h2)
        eq = laplace5(f.omega, i, j)
        if R != 0:
            if scheme == "central":
                eq = eq + central_bracket(f.psi, f.omega, i, j) * (R / 4.0)
            else:
                # R h^2 * J_A with J_A = -bracket / (12 h^2); matches the central term to O(h^2)
                eq = eq - arakawa_bracket(f.psi, f.omega, i, j) * (R / 12.0)
        om_eqs.append(eq)
    return PolySystem(tuple(psi_eqs + om_eqs), (), grid.dimension)


def build_dscf(R: float, v: float, N: int) -> PolySystem:
    """Central-difference cavity system in ``2 (N-2)^2`` interior unknowns."""
    return _build(R, v, N, "central")


def build_adscf(R: float, v: float, N: int) -> PolySystem:
    """Same as :func:`build_dscf` with Arakawa's conservative Jacobian."""
    return _build(R, v, N, "arakawa")


def build_system(R: float, v: float, N: int, scheme: str = "central") -> PolySystem:
    return _build(R, v, N, scheme)


def build_energy(N: int) -> Poly:
    """Discrete kinetic energy, a PSD quadratic form in the interior psi."""
    grid = GridMap(N)
    f = _Fields(grid, 0.0)
    F = Poly.zero(grid.dimension)
    for i, j in grid.interior_points():
        dx = f.psi(i + 1, j) - f.psi(i - 1, j)
        dy = f.psi(i, j + 1) - f.psi(i, j - 1)
        F = F + (dx * dx + dy * dy) * 0.25
    return F


def energy_value(x, N: int) -> float:
    """Numerical energy straight from the grid (independent of :func:`build_energy`)."""
    grid = GridMap(N)
    psi, _ = grid.full_grids(x, 0.0)
    dx = psi[1:-1, 2:] - psi[1:-1, :-2]
    dy = psi[2:, 1:-1] - psi[:-2, 1:-1]
    return float(0.25 * (np.sum(dx**2) + np.sum(dy**2)))


def default_bounds(v: float, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Box ``psi in [-v, v]``, ``|omega| <= (2 v + 2 v h) / h^2``."""
    if v <= 0:
        raise ValueError("default bounds need v > 0")
    grid = GridMap(N)
    h = grid.h
    n = grid.n_interior
    wb = (2.0 * v + 2.0 * v * h) / h**2
    lbd = np.concatenate([np.full(n, -v), np.full(n, -wb)])
    return lbd, -lbd


@dataclass
class CavityPOP:
    """Minimize the discrete energy subject to the cavity system and a box."""

    objective: Poly
    system: PolySystem
    lbd: np.ndarray
    ubd: np.ndarray
    R: float
    v: float
    N: int
    scheme: str = "central"

    @property
    def grid(self) -> GridMap:
        return GridMap(self.N)

    @property
    def dimension(self) -> int:
        return self.system.dimension

    def bound_inequalities(self) -> list[Poly]:
        n = self.dimension
        out = []
        for k in range(n):
            x = Poly.var(k, n)
            out.append(x - float(self.lbd[k]))
            out.append(float(self.ubd[k]) - x)
        return out


def build_pop(R: float, v: float, N: int, scheme: str = "central",
              bounds: tuple[np.ndarray, np.ndarray] | None = None) -> CavityPOP:
    system = build_system(R, v, N, scheme)
    lbd, ubd = bounds if bounds is not None else default_bounds(v, N)
    lbd = np.asarray(lbd, dtype=float)
    ubd = np.asarray(ubd, dtype=float)
    if lbd.shape != (system.dimension,) or ubd.shape != (system.dimension,):
        raise ValueError("bounds must have one entry per variable")
    if not (np.all(np.isfinite(lbd)) and np.all(np.isfinite(ubd)) and np.all(lbd <= ubd)):
        raise ValueError("bounds must be finite with lbd <= ubd")
    return CavityPOP(build_energy(N), system, lbd, ubd, float(R), float(v), int(N), scheme)


PROVENANCE = ("linear-solve", "sdpr(1)", "sdpr(2)", "sdpr(1)+newton", "sdpr(2)+newton",
              "sdpr(1)+sqp", "sdpr(2)+sqp", "sdpr(1)+sqp+newton", "sdpr(2)+sqp+newton",
              "continuation", "refined", "oracle", "newton", "sqp")


@dataclass
class Solution:
    point: np.ndarray
    energy: float
    residual: float
    provenance: str
    R: float = 0.0
    v: float = 1.0
    N: int = 5
    scheme: str = "central"
    converged: bool = True
    status: str = "ok"
    stability: dict | None = None
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> GridMap:
        return GridMap(self.N)


@dataclass
class VelocityField:
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    magnification: float = 1.0

    def __len__(self):
        return len(self.x)


def velocity_field(sol: Solution, M: float = 1.0) -> VelocityField:
    """Central-difference velocities ``(M psi_y, -M psi_x)`` at interior nodes."""
    grid = sol.grid
    if len(sol.point) != grid.dimension:
        raise ValueError("solution length does not match its grid")
    psi, _ = grid.full_grids(sol.point, sol.v)
    h = grid.h
    u = (psi[2:, 1:-1] - psi[:-2, 1:-1]) / (2 * h)
    w = -(psi[1:-1, 2:] - psi[1:-1, :-2]) / (2 * h)
    jj, ii = np.meshgrid(np.arange(2, grid.N), np.arange(2, grid.N), indexing="ij")
    return VelocityField(((ii - 1) * h).ravel(), ((jj - 1) * h).ravel(),
                         M * u.ravel(), M * w.ravel(), float(M))
