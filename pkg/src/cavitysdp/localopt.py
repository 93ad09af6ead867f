"""Local solvers: damped Newton, SQP refinement, multistart oracle, stability."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

from .cavity import CavityPOP, Solution
from .polysys import Poly, PolySystem

log = logging.getLogger(__name__)

DENSE_LIMIT = 400


@dataclass
class NewtonOptions:
    max_iters: int = 100
    tol: float = 1e-12
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-12
    # once the full step stops shrinking the residual, accept anything below this
    stall_tol: float = 1e-10

    def __post_init__(self):
        if self.tol <= 0 or self.stall_tol <= 0 or self.min_step <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class StabilityReport:
    lambda_max: float
    n_positive: int
    spectrum: np.ndarray = field(repr=False)

    @property
    def stable(self) -> bool:
        return self.n_positive == 0


def scaled_residual(s: PolySystem, x) -> float:
    """``max_i |g_i(x)| / max(1, ||x||_inf)``."""
    x = np.asarray(x, dtype=float)
    g = s.residual(x)
    if g.size == 0:
        return 0.0
    return float(np.max(np.abs(g)) / max(1.0, float(np.max(np.abs(x), initial=0.0))))


def _solve_linear(J, rhs):
    if isinstance(J, np.ndarray):
        return np.linalg.solve(J, rhs)
    return spla.spsolve(J.tocsc(), rhs)


def newton_iterate(s: PolySystem, x0, opts: NewtonOptions | None = None):
    """Damped Newton on ``s``; returns ``(x, status, iterations, merit_history)``.

    ``status`` is ``"converged"``, ``"singular"``, ``"max-iters"`` or ``"stall"``.
    """
    opts = opts or NewtonOptions()
    if not s.is_square():
        raise ValueError("Newton needs a square system")
    x = np.array(x0, dtype=float)
    if x.shape != (s.dimension,):
        raise ValueError(f"expected a start point of length {s.dimension}")
    sparse = s.dimension > DENSE_LIMIT
    g = s.residual(x)
    merit = 0.5 * float(g @ g)
    history = [merit]

    def eps_sc(x, g):
        return float(np.max(np.abs(g), initial=0.0)) / max(1.0, float(np.max(np.abs(x), initial=0.0)))

    for it in range(opts.max_iters + 1):
        if eps_sc(x, g) <= opts.tol:
            return x, "converged", it, history
        if it == opts.max_iters:
            break
        J = s.jacobian(x, sparse=sparse)
        try:
            with np.errstate(all="raise"):
                dx = -_solve_linear(J, g)
        except (np.linalg.LinAlgError, FloatingPointError, RuntimeError):
            return x, "singular", it, history
        if not np.all(np.isfinite(dx)):
            return x, "singular", it, history
        t = 1.0
        while True:
            xn = x + t * dx
            gn = s.residual(xn)
            mn = 0.5 * float(gn @ gn)
            # directional derivative of the merit along a Newton step is -2*merit
            if np.isfinite(mn) and mn <= (1.0 - 2.0 * opts.armijo_c * t) * merit:
                break
            t *= opts.backtrack
            if t < opts.min_step:
                if eps_sc(x, g) <= opts.stall_tol:
                    return x, "converged", it, history
                return x, "stall", it, history
        if mn >= merit:
            # only rounding noise left
            if eps_sc(x, g) <= opts.stall_tol:
                return x, "converged", it, history
            return x, "stall", it, history
        x, g, merit = xn, gn, mn
        history.append(merit)
    return x, "max-iters", opts.max_iters, history


def newton_solve(s: PolySystem, x0, opts: NewtonOptions | None = None, *,
                 objective: Poly | None = None, provenance: str = "newton",
                 params: dict | None = None) -> Solution:
    x, status, iters, _ = newton_iterate(s, x0, opts)
    params = params or {}
    energy = float(objective(x)) if objective is not None else float("nan")
    return Solution(point=x, energy=energy, residual=scaled_residual(s, x),
                    provenance=provenance, converged=status == "converged",
                    status=status, info={"newton_iters": iters}, **params)


def kkt_residual(pop: CavityPOP, x, extra_ineqs=()) -> float:
    """Feasibility plus least-squares stationarity residual of ``min F s.t. G=0``."""
    s = pop.system
    feas = scaled_residual(s, x)
    gradF = np.array([p(x) for p in _grad_cache(pop.objective)])
    J = s.jacobian(x)
    lam, *_ = np.linalg.lstsq(J.T, gradF, rcond=None)
    stat = float(np.max(np.abs(gradF - J.T @ lam), initial=0.0)) / max(1.0, float(np.max(np.abs(gradF), initial=0.0)))
    bnd = float(max(np.max(pop.lbd - x, initial=0.0), np.max(x - pop.ubd, initial=0.0), 0.0))
    ineq = max((max(0.0, -g(x)) for g in extra_ineqs), default=0.0)
    return max(feas, stat, bnd, ineq)


_GRADS: dict = {}


def _grad_cache(p: Poly):
    key = id(p)
    hit = _GRADS.get(key)
    if hit is None or hit[0] is not p:
        from .polysys import poly_grad
        hit = (p, poly_grad(p))
        _GRADS[key] = hit
    return hit[1]


def _quadratic_parts(p: Poly):
    """``(c, b, Q)`` with ``p(x) = c + b.x + x'Qx`` for a polynomial of degree <= 2."""
    n = p.dimension
    c = 0.0
    b = np.zeros(n)
    Q = np.zeros((n, n))
    for m, coef in p.terms:
        if not m:
            c += coef
        elif len(m) == 1 and m[0][1] == 1:
            b[m[0][0]] += coef
        elif len(m) == 1 and m[0][1] == 2:
            Q[m[0][0], m[0][0]] += coef
        elif len(m) == 2:
            Q[m[0][0], m[1][0]] += coef / 2
            Q[m[1][0], m[0][0]] += coef / 2
        else:
            raise ValueError("only polynomials of degree <= 2 are supported")
    return c, b, Q


def sqp_refine(pop: CavityPOP, x0, *, extra_ineqs=(), max_iters: int = 500,
               kkt_tol: float = 1e-8, polish: bool = True) -> Solution:
    """Local minimizer of the energy on the cavity system within the bounds.

    SLSQP on ``min F s.t. G = 0, lbd <= x <= ubd`` (plus ``extra_ineqs >= 0``),
    followed by a Newton polish on ``G`` when no extra inequality is active.
    Because the system is square, its isolated roots are KKT points, so the
    polish only removes SLSQP's terminal feasibility error.
    """
    s = pop.system
    x0 = np.clip(np.asarray(x0, dtype=float), pop.lbd, pop.ubd)
    c, b, Q = _quadratic_parts(pop.objective)
    # SLSQP works in absolute units; rescale psi and omega blocks to O(1)
    half = s.dimension // 2
    scale = np.empty(s.dimension)
    scale[:half] = max(float(np.max(np.abs(x0[:half]), initial=0.0)), 1e-3)
    scale[half:] = max(float(np.max(np.abs(x0[half:]), initial=0.0)), 1e-1)
    cons = [{"type": "eq",
             "fun": lambda z: s.residual(z * scale),
             "jac": lambda z: s.jacobian(z * scale) * scale[None, :]}]
    for g in extra_ineqs:
        cg, bg, Qg = _quadratic_parts(g)
        cons.append({"type": "ineq",
                     "fun": lambda z, cg=cg, bg=bg, Qg=Qg: cg + bg @ (z * scale) + (z * scale) @ Qg @ (z * scale),
                     "jac": lambda z, bg=bg, Qg=Qg: (bg + 2 * Qg @ (z * scale)) * scale})
    params = dict(R=pop.R, v=pop.v, N=pop.N, scheme=pop.scheme)
    res = minimize(lambda z: c + b @ (z * scale) + (z * scale) @ Q @ (z * scale),
                   x0 / scale, jac=lambda z: (b + 2 * Q @ (z * scale)) * scale,
                   constraints=cons, method="SLSQP",
                   bounds=list(zip(pop.lbd / scale, pop.ubd / scale)),
                   options={"maxiter": max_iters, "ftol": 1e-16})
    x = res.x * scale
    start_viol = scaled_residual(s, x0)
    prov = "sqp"
    info = {"slsqp_status": int(res.status), "slsqp_message": str(res.message),
            "slsqp_iters": int(res.nit), "start_violation": start_viol}
    active = any(g(x) < 1e-8 for g in extra_ineqs)
    if polish and not active:
        xp, status, iters, _ = newton_iterate(s, x)
        inside = np.all(xp >= pop.lbd - 1e-12) and np.all(xp <= pop.ubd + 1e-12)
        if status == "converged" and inside and all(g(xp) >= 0 for g in extra_ineqs):
            x = xp
            info["polish_iters"] = iters
    kkt = kkt_residual(pop, x, extra_ineqs)
    info["kkt_residual"] = kkt
    return Solution(point=x, energy=float(pop.objective(x)), residual=scaled_residual(s, x),
                    provenance=prov, converged=kkt <= kkt_tol,
                    status="converged" if kkt <= kkt_tol else "not-converged",
                    info=info, **params)


def dedup_tolerance(x) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(x), initial=0.0)))


def is_duplicate(x, y) -> bool:
    return float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) < dedup_tolerance(x)


def multistart_enumerate(pop: CavityPOP, n_starts: int, seed: int = 0, *,
                         psi_fraction: float = 1.0, omega_fraction: float = 1.0,
                         workers: int = 1, opts: NewtonOptions | None = None) -> list[Solution]:
    """Newton from uniform random starts in the (optionally shrunk) box.

    Start ``k`` draws from ``default_rng([seed, k])``, so the result does not
    depend on ``workers``.  Distinct roots are returned sorted by energy.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    s = pop.system
    n = s.dimension
    half = n // 2
    frac = np.concatenate([np.full(half, psi_fraction), np.full(n - half, omega_fraction)])
    lo = pop.lbd * frac
    hi = pop.ubd * frac
    opts = opts or NewtonOptions(max_iters=60)

    def run(k):
        rng = np.random.default_rng([seed, k])
        x0 = rng.uniform(lo, hi)
        x, status, _, _ = newton_iterate(s, x0, opts)
        return x if status == "converged" else None

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            roots = list(ex.map(run, range(n_starts)))
    else:
        roots = [run(k) for k in range(n_starts)]
    found: list[np.ndarray] = []
    for x in roots:
        if x is None:
            continue
        if not any(is_duplicate(x, y) for y in found):
            found.append(x)
    params = dict(R=pop.R, v=pop.v, N=pop.N, scheme=pop.scheme)
    sols = [Solution(point=x, energy=float(pop.objective(x)), residual=scaled_residual(s, x),
                     provenance="oracle", **params) for x in found]
    sols.sort(key=lambda z: (z.energy, tuple(z.point)))
    return sols


def stability(s: PolySystem, sol: Solution | np.ndarray, *, residual_tol: float = 1e-8) -> StabilityReport:
    """Spectrum of the (nonsymmetric) Jacobian at a root.

    A solution counts as stable when no eigenvalue has positive real part.
    """
    x = sol.point if isinstance(sol, Solution) else np.asarray(sol, dtype=float)
    if scaled_residual(s, x) > residual_tol:
        raise ValueError("stability analysis needs a root (scaled residual above tolerance)")
    J = s.jacobian(x)
    ev = sla.eigvals(J, check_finite=True)
    re = ev.real
    return StabilityReport(float(re.max()), int(np.sum(re > 0)), ev)
