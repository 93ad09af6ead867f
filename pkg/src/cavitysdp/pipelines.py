"""End-to-end procedures: relaxation method, enumeration, continuation, sweeps."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import least_squares

from .cavity import GridMap, Solution, build_pop, build_system, energy_value
from .localopt import (NewtonOptions, is_duplicate, multistart_enumerate, newton_iterate,
                       scaled_residual, sqp_refine, stability)
from .polysys import Poly, PolySystem
from .sdprelax import build_relaxation, extract_point, make_exclusion
from .sdpsolve import SDPOptions, solve_sdp

log = logging.getLogger(__name__)

REFINE_CHOICES = ("none", "newton", "sqp", "sqp+newton")
# statuses whose iterate is still worth extracting from
USABLE_SDP = ("optimal", "inaccurate", "slow-progress", "iteration-limit")


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``partial`` holds whatever was computed."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


def default_equality_mode(w: int) -> str:
    # w=1 follows the localizing-matrix semantics; at w>=2 the full product set
    # keeps the reduced SDP small enough for a desk machine
    return "localizing" if w == 1 else "full"


# ---------------------------------------------------------------------------
# local refinement

def _newton_chain(s: PolySystem, x0, opts: NewtonOptions | None = None):
    """Damped Newton, then Levenberg-Marquardt plus a Newton polish if it fails."""
    x, status, iters, _ = newton_iterate(s, x0, opts)
    if status == "converged":
        return x, True, ["newton"], {"newton_iters": iters}
    info = {"newton_iters": iters, "newton_status": status}
    res = least_squares(s.residual, np.asarray(x0, dtype=float), jac=lambda z: s.jacobian(z),
                        method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    xl, status, iters, _ = newton_iterate(s, res.x, opts)
    info["lm_nfev"] = int(res.nfev)
    info["polish_iters"] = iters
    if status == "converged":
        return xl, True, ["newton", "lm", "newton"], info
    # keep whichever point is more nearly a root
    best = min((x, res.x, xl), key=lambda z: scaled_residual(s, z))
    return best, False, ["newton", "lm", "newton"], info


def refine_point(pop, x0, method: str = "newton", opts: NewtonOptions | None = None):
    """Refine a candidate point; returns ``(x, ok, steps, info)``.

    ``sqp`` and ``sqp+newton`` fall back to the Newton chain when SLSQP does
    not reach a KKT point, and ``steps`` records which route produced ``x``.
    """
    if method not in REFINE_CHOICES:
        raise ValueError(f"refine must be one of {REFINE_CHOICES}")
    s = pop.system
    x0 = np.asarray(x0, dtype=float)
    if method == "none":
        return x0.copy(), True, [], {}
    if method == "newton":
        return _newton_chain(s, x0, opts)
    sol = sqp_refine(pop, x0, polish=method == "sqp+newton")
    info = dict(sol.info)
    if sol.converged:
        return sol.point, True, ["sqp", "newton"] if "polish_iters" in info else ["sqp"], info
    x, ok, steps, more = _newton_chain(s, x0, opts)
    info.update(more)
    info["sqp_failed"] = True
    return x, ok, steps, info


# ---------------------------------------------------------------------------
# Method 1

def sdpr_method(R: float, v: float, N: int, w: int = 1, scheme: str = "central",
                refine: str = "newton", *, bounds=None, exclusions: Sequence[Poly] = (),
                equality_mode: str | None = None, sdp_options: SDPOptions | None = None,
                pop=None) -> Solution:
    """Relax CF(R, v, N), solve the SDP, extract the first moments, refine.

    Raises :class:`PipelineError` if the SDP is infeasible or breaks down.
    A failed refinement returns the extracted point with ``converged=False``.
    """
    if w not in (1, 2):
        raise ValueError("relaxation order w must be 1 or 2")
    if refine not in REFINE_CHOICES:
        raise ValueError(f"refine must be one of {REFINE_CHOICES}")
    t0 = time.perf_counter()
    pop = pop if pop is not None else build_pop(R, v, N, scheme, bounds)
    mode = equality_mode or default_equality_mode(w)
    rp = build_relaxation(pop, w, exclusions, equality_mode=mode)
    t_build = time.perf_counter() - t0
    sdp = solve_sdp(rp.sdp, sdp_options)
    t_sdp = time.perf_counter() - t0 - t_build
    info = {"sdp_status": sdp.status, "sdp_objective": rp.objective_value(sdp),
            "sdp_residuals": dict(sdp.residuals), "sdp_backend": sdp.info.get("backend"),
            "sdp_iterations": sdp.info.get("iterations"), "equality_mode": mode,
            "clique_sizes": rp.cliques.sizes(), "n_moments": rp.sdp.n_vars,
            "n_exclusions": len(exclusions), "build_time": t_build, "sdp_time": t_sdp}
    params = dict(R=pop.R, v=pop.v, N=pop.N, scheme=pop.scheme)
    if sdp.status not in USABLE_SDP or not np.all(np.isfinite(sdp.y)):
        raise PipelineError(f"SDP relaxation failed with status {sdp.status!r}", info)
    x0 = extract_point(rp, sdp)
    info["extracted_energy"] = float(pop.objective(x0))
    info["extracted_residual"] = scaled_residual(pop.system, x0)
    x, ok, steps, rinfo = refine_point(pop, x0, refine)
    info.update(rinfo)
    info["refine_steps"] = steps
    info["total_time"] = time.perf_counter() - t0
    if refine != "none" and not ok:
        x = x0
        steps = []
    prov = f"sdpr({w})" + "".join(f"+{s}" for s in dict.fromkeys(st for st in steps if st != "lm"))
    if "lm" in steps:
        info["lm_fallback"] = True
    status = "ok" if (ok or refine == "none") else "unrefined"
    return Solution(point=x, energy=float(pop.objective(x)), residual=scaled_residual(pop.system, x),
                    provenance=prov, converged=(refine != "none" and ok), status=status,
                    info=info, **params)


# ---------------------------------------------------------------------------
# Algorithm 1

@dataclass(frozen=True)
class ExclusionParams:
    eps1: float = 1e-5
    eps2: float = 0.0
    b1: int = 5
    b2: int = 0


@dataclass
class EnumerationRow:
    k: int
    w: int
    eps1: float
    eps2: float
    b1: int
    b2: int
    eps_sc: float
    energy: float
    solution: Solution
    accepted: bool = True
    duplicate_of: int | None = None
    attempt: int = 0


@dataclass
class EnumerationRun:
    """Every attempted iteration in execution order; accepted rows are the ``u^(k)``."""

    R: float
    v: float
    N: int
    w: int
    scheme: str
    rows: list[EnumerationRow] = field(default_factory=list)
    exclusions: list[Poly] = field(default_factory=list)
    status: str = "complete"
    message: str = ""

    @property
    def solutions(self) -> list[Solution]:
        return [r.solution for r in self.rows if r.accepted]

    @property
    def energies(self) -> list[float]:
        return [r.energy for r in self.rows if r.accepted]

    @property
    def duplicates(self) -> list[EnumerationRow]:
        return [r for r in self.rows if r.duplicate_of is not None]

    @property
    def non_monotone(self) -> bool:
        e = self.energies
        return any(b < a for a, b in zip(e, e[1:]))

    def sorted_view(self) -> list[EnumerationRow]:
        return sorted((r for r in self.rows if r.accepted), key=lambda r: r.energy)


ENUM_COLUMNS = ("k", "w", "eps1", "eps2", "b1", "b2", "eps_sc", "F_u_k",
                "accepted", "duplicate_of", "attempt", "provenance", "status")


def write_enumeration_csv(run: EnumerationRun, fh) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(ENUM_COLUMNS)
    for r in run.rows:
        wr.writerow([r.k, r.w, repr(r.eps1), repr(r.eps2), r.b1, r.b2, repr(r.eps_sc), repr(r.energy),
                     int(r.accepted), "" if r.duplicate_of is None else f"u{r.duplicate_of}",
                     r.attempt, r.solution.provenance, r.solution.status])


def _params_for(params, j: int) -> ExclusionParams:
    if params is None:
        return ExclusionParams()
    if isinstance(params, ExclusionParams):
        return params
    if isinstance(params, Mapping):
        return ExclusionParams(**params)
    seq = list(params)
    if not seq:
        return ExclusionParams()
    p = seq[min(j - 1, len(seq) - 1)]
    return p if isinstance(p, ExclusionParams) else ExclusionParams(**p)


def enumerate_k(R: float, v: float, N: int, w: int = 1, k: int = 3, params=None, *,
                scheme: str = "central", refine: str = "newton", retries: int = 3,
                retry_factor: float = 10.0, bounds=None, equality_mode: str | None = None,
                sdp_options: SDPOptions | None = None) -> EnumerationRun:
    """Find ``k`` solutions ``u^(0..k-1)`` by successive exclusion.

    ``params`` is one :class:`ExclusionParams` (or dict) for every iteration,
    or a sequence with one entry per iteration ``1..k-1`` (the last entry is
    reused).  Iteration ``j`` excludes a neighbourhood of ``u^(j-1)`` on top of
    all earlier exclusions.  A refined point within the dedup tolerance of an
    earlier ``u`` is recorded as a duplicate row and the iteration is retried
    with ``eps1`` (and ``eps2``) scaled by ``retry_factor``; after ``retries``
    retries the run stops with status ``"stall"``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pop = build_pop(R, v, N, scheme, bounds)
    run = EnumerationRun(float(R), float(v), int(N), int(w), scheme)
    kw = dict(refine=refine, equality_mode=equality_mode, sdp_options=sdp_options, pop=pop)
    try:
        u = sdpr_method(R, v, N, w, scheme, **kw)
    except PipelineError as exc:
        run.status, run.message = "sdp-failure", str(exc)
        return run
    run.rows.append(EnumerationRow(0, w, 0.0, 0.0, 0, 0, u.residual, u.energy, u))
    for j in range(1, k):
        p = _params_for(params, j)
        eps1, eps2 = p.eps1, p.eps2
        accepted = False
        for attempt in range(retries + 1):
            new = make_exclusion(run.solutions[-1], eps1, eps2, p.b1, p.b2)
            try:
                u = sdpr_method(R, v, N, w, scheme, exclusions=run.exclusions + new, **kw)
            except PipelineError as exc:
                run.status, run.message = "sdp-failure", f"iteration {j}: {exc}"
                return run
            dup = next((i for i, s in enumerate(run.solutions) if is_duplicate(u.point, s.point)), None)
            row = EnumerationRow(j, w, eps1, eps2, p.b1, p.b2, u.residual, u.energy, u,
                                 accepted=dup is None, duplicate_of=dup, attempt=attempt)
            run.rows.append(row)
            if dup is None:
                run.exclusions.extend(new)
                accepted = True
                break
            log.info("iteration %d attempt %d returned u%d again", j, attempt, dup)
            eps1 *= retry_factor
            eps2 *= retry_factor
        if not accepted:
            run.status = "stall"
            run.message = f"iteration {j} kept returning earlier solutions"
            return run
    return run


# ---------------------------------------------------------------------------
# Method 2

def default_step(R: float) -> float:
    return 10.0 if R < 1000.0 else 500.0


@dataclass
class ContinuationPath:
    entries: list[tuple[float, Solution]] = field(default_factory=list)
    step: float | None = None
    R_target: float = 0.0
    terminated_at: float = 0.0
    status: str = "complete"
    halvings: int = 0

    @property
    def final(self) -> Solution:
        return self.entries[-1][1]

    @property
    def R_values(self) -> list[float]:
        return [r for r, _ in self.entries]


def linear_solve(v: float, N: int, scheme: str = "central") -> Solution:
    """The unique solution of the (linear) system at R = 0."""
    s = build_system(0.0, v, N, scheme)
    x, status, iters, _ = newton_iterate(s, np.zeros(s.dimension))
    return Solution(point=x, energy=energy_value(x, N), residual=scaled_residual(s, x),
                    provenance="linear-solve", R=0.0, v=float(v), N=int(N), scheme=scheme,
                    converged=status == "converged", status="ok" if status == "converged" else status,
                    info={"newton_iters": iters})


def continuation(R_target: float, v: float, N: int, dR: float | Callable[[float], float] | None = None,
                 scheme: str = "central", *, tol: float = 1e-10, max_halvings: int = 10,
                 opts: NewtonOptions | None = None, lm_fallback: bool = True) -> ContinuationPath:
    """Follow the R = 0 solution to ``R_target`` with Newton steps.

    ``dR`` is a constant step, a function of the current R, or ``None`` for
    :func:`default_step`.  After a failed Newton solve the step is halved (at
    most ``max_halvings`` times in a row); a successful step restores the
    scheduled size.  With ``lm_fallback`` a failed Newton solve is retried
    through Levenberg-Marquardt before the step is halved.  On breakdown the partial path is returned with status
    ``"breakdown"``.
    """
    if R_target < 0:
        raise ValueError("R_target must be >= 0")
    if isinstance(dR, (int, float)) and dR <= 0:
        raise ValueError("dR must be positive")
    schedule = default_step if dR is None else (dR if callable(dR) else (lambda R, d=float(dR): d))
    opts = opts or NewtonOptions(tol=1e-12, stall_tol=tol)
    u0 = linear_solve(v, N, scheme)
    path = ContinuationPath([(0.0, u0)], None if callable(dR) else dR, float(R_target))
    if not u0.converged:
        path.status = "breakdown"
        return path
    R, x = 0.0, u0.point
    while R < R_target:
        step = schedule(R)
        for halving in range(max_halvings + 1):
            Rn = min(R + step, R_target)
            s = build_system(Rn, v, N, scheme)
            xn, status, iters, _ = newton_iterate(s, x, opts)
            if status != "converged" and lm_fallback:
                xn, ok, _, chain = _newton_chain(s, x, opts)
                status = "converged" if ok else status
                iters = chain["newton_iters"]
            res = scaled_residual(s, xn)
            if status == "converged" and res <= tol:
                break
            step *= 0.5
            path.halvings += 1
        else:
            path.status = "breakdown"
            path.terminated_at = R
            return path
        R, x = Rn, xn
        path.entries.append((R, Solution(point=x, energy=energy_value(x, N), residual=res,
                                         provenance="continuation", R=R, v=float(v), N=int(N),
                                         scheme=scheme, info={"newton_iters": iters})))
    path.terminated_at = R
    return path


# ---------------------------------------------------------------------------
# grid refinement

def _interior_laplacian_omega(psi: np.ndarray, h: float) -> np.ndarray:
    """``omega = -Laplace(psi)`` at the interior of a full grid."""
    lap = (psi[1:-1, 2:] + psi[1:-1, :-2] + psi[2:, 1:-1] + psi[:-2, 1:-1] - 4.0 * psi[1:-1, 1:-1]) / h**2
    return -lap


def interpolate_solution(sol: Solution, N_f: int, *, recompute_omega: bool = False) -> np.ndarray:
    """Bilinear transfer of ``sol`` to the ``N_f`` grid; boundary omega follows the wall formulas."""
    gc, gf = GridMap(sol.N), GridMap(N_f)
    psi_c, om_c = gc.full_grids(sol.point, sol.v)
    axis_c = np.arange(gc.N) * gc.h
    axis_f = np.arange(gf.N) * gf.h
    # full grids are indexed [j, i] = [y, x]
    Y, X = np.meshgrid(axis_f, axis_f, indexing="ij")
    pts = np.column_stack([Y.ravel(), X.ravel()])
    psi_f = RegularGridInterpolator((axis_c, axis_c), psi_c)(pts).reshape(gf.N, gf.N)
    om_f = RegularGridInterpolator((axis_c, axis_c), om_c)(pts).reshape(gf.N, gf.N)
    psi_f[0, :] = psi_f[-1, :] = psi_f[:, 0] = psi_f[:, -1] = 0.0
    if recompute_omega:
        om_f[1:-1, 1:-1] = _interior_laplacian_omega(psi_f, gf.h)
    return gf.from_full_grids(psi_f, om_f)


def refine_grid(sol: Solution, N_f: int, scheme: str | None = None, *, recompute_omega: bool = False,
                opts: NewtonOptions | None = None) -> Solution:
    """Interpolate ``sol`` to ``N_f`` and solve the fine system by Newton from there.

    Divergence is reported through ``converged=False`` and ``status``; the
    returned point is then the last Newton iterate.
    """
    if N_f < sol.N:
        raise ValueError("refine_grid needs N_f >= N_c")
    scheme = scheme or sol.scheme
    x0 = interpolate_solution(sol, N_f, recompute_omega=recompute_omega) if N_f > sol.N else sol.point.copy()
    s = build_system(sol.R, sol.v, N_f, scheme)
    x, status, iters, _ = newton_iterate(s, x0, opts or NewtonOptions(max_iters=100))
    ok = status == "converged"
    return Solution(point=x, energy=energy_value(x, N_f), residual=scaled_residual(s, x),
                    provenance="refined", R=sol.R, v=sol.v, N=N_f, scheme=scheme, converged=ok,
                    status="ok" if ok else f"diverged ({status})",
                    info={"newton_iters": iters, "from_N": sol.N, "recompute_omega": recompute_omega,
                          "start_residual": scaled_residual(s, x0)})


# ---------------------------------------------------------------------------
# sweeps

ENERGY_METHODS = ("continuation", "sdpr1", "sdpr2", "oracle")


@dataclass
class SweepTable:
    kind: str
    N: int
    v: float
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    solutions: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def row(self, R: float) -> dict:
        for r in self.rows:
            if r["R"] == R:
                return r
        raise KeyError(R)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def write_sweep_csv(table: SweepTable, fh) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(table.columns)
    for r in table.rows:
        wr.writerow([_fmt(r.get(c)) for c in table.columns])


def monotonicity_report(R_values: Sequence[float], E: Sequence[float | None], rtol: float = 0.0) -> dict:
    """Every consecutive pair (skipping failed cells) where E increases with R."""
    pairs = [(R, e) for R, e in zip(R_values, E) if e is not None and np.isfinite(e)]
    inc = [{"R_from": a[0], "R_to": b[0], "E_from": a[1], "E_to": b[1]}
           for a, b in zip(pairs, pairs[1:]) if b[1] > a[1] * (1.0 + rtol)]
    return {"monotone_nonincreasing": not inc, "increases": inc, "rtol": rtol}


def _energy_cell(method: str, R: float, v: float, N: int, scheme: str, refine: str,
                 oracle_starts: int, seed: int, sdp_options):
    if method == "continuation":
        path = continuation(R, v, N, scheme=scheme)
        if path.status != "complete":
            return None, f"breakdown at R={path.terminated_at}"
        return path.final, "ok"
    if method in ("sdpr1", "sdpr2"):
        w = int(method[-1])
        try:
            sol = sdpr_method(R, v, N, w, scheme, refine, sdp_options=sdp_options)
        except PipelineError as exc:
            return None, str(exc)
        return sol, sol.status
    if method == "oracle":
        pop = build_pop(R, v, N, scheme)
        roots = multistart_enumerate(pop, oracle_starts, seed, psi_fraction=0.1, omega_fraction=0.1)
        if not roots:
            return None, "no root found"
        return roots[0], "ok"
    raise ValueError(f"unknown sweep method {method!r}")


def energy_sweep(R_list: Sequence[float], v: float, N: int,
                 methods: Sequence[str] | Mapping[str, Sequence[float] | None] = ("continuation", "sdpr1"),
                 *, scheme: str = "central", refine: str = "newton", oracle_starts: int = 2000,
                 seed: int = 0, workers: int = 1, sdp_options: SDPOptions | None = None,
                 rtol: float = 0.0) -> SweepTable:
    """Energies per R and method, with the minimum over successful cells.

    ``methods`` may map a method to the subset of ``R_list`` it runs on
    (``None`` meaning all of it).  Failed cells keep a status string and are
    skipped by the minimum; the report flags every increase of ``E_min``.
    The oracle is the multistart Newton search and is meant for N = 5.
    """
    plan = dict(methods) if isinstance(methods, Mapping) else {m: None for m in methods}
    for m in plan:
        if m not in ENERGY_METHODS:
            raise ValueError(f"unknown sweep method {m!r}; choose from {ENERGY_METHODS}")
    R_list = [float(R) for R in R_list]
    cells = [(m, R) for m, subset in plan.items() for R in R_list
             if subset is None or any(math.isclose(R, float(r)) for r in subset)]

    def run(cell):
        m, R = cell
        t = time.perf_counter()
        sol, status = _energy_cell(m, R, v, N, scheme, refine, oracle_starts, seed, sdp_options)
        return cell, sol, status, time.perf_counter() - t

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, cells))
    else:
        results = [run(c) for c in cells]
    col = {"continuation": "E_C", "sdpr1": "E_SDPR1", "sdpr2": "E_SDPR2", "oracle": "E_oracle"}
    used = [m for m in ENERGY_METHODS if m in plan]
    columns = ("R", "N", *(col[m] for m in used), "E_min", "E_min_source",
               *(f"status_{m}" for m in used))
    table = SweepTable("energy", int(N), float(v), columns)
    by_R = {R: {"R": R, "N": int(N)} for R in R_list}
    for (m, R), sol, status, dt in results:
        row = by_R[R]
        row[col[m]] = sol.energy if sol is not None else None
        row[f"status_{m}"] = status
        if sol is not None:
            sol.info.setdefault("wall_time", dt)
            table.solutions[(m, R)] = sol
    for R in R_list:
        row = by_R[R]
        # an unrefined relaxation point is not a root and cannot stand for E_min
        cand = [(row[col[m]], m) for m in used
                if row.get(col[m]) is not None and (m, R) in table.solutions
                and table.solutions[(m, R)].residual <= 1e-8]
        if cand:
            row["E_min"], row["E_min_source"] = min(cand)
        else:
            row["E_min"], row["E_min_source"] = None, ""
        table.rows.append(row)
    table.report = monotonicity_report(R_list, [r["E_min"] for r in table.rows], rtol)
    return table


def stability_sweep(R_list: Sequence[float], v: float, N: int, *, scheme: str = "central",
                    dR=None, workers: int = 1) -> SweepTable:
    """Continuation to each R followed by the Jacobian spectrum.

    The report gives the first consecutive pair of R values where the
    number of unstable eigenvalues turns positive.
    """
    R_list = [float(R) for R in R_list]

    def run(R):
        path = continuation(R, v, N, dR, scheme)
        if path.status != "complete":
            return R, None, None, f"breakdown at R={path.terminated_at}"
        sol = path.final
        try:
            rep = stability(build_system(R, v, N, scheme), sol)
        except ValueError as exc:
            return R, sol, None, str(exc)
        sol.stability = {"lambda_max": rep.lambda_max, "n_positive": rep.n_positive}
        return R, sol, rep, "ok"

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, R_list))
    else:
        results = [run(R) for R in R_list]
    table = SweepTable("stability", int(N), float(v),
                       ("R", "N", "eps_sc", "lambda_max", "N_lambda_pos", "F", "status"))
    for R, sol, rep, status in results:
        table.rows.append({"R": R, "N": int(N),
                           "eps_sc": sol.residual if sol is not None else None,
                           "lambda_max": rep.lambda_max if rep is not None else None,
                           "N_lambda_pos": rep.n_positive if rep is not None else None,
                           "F": sol.energy if sol is not None else None, "status": status})
        if sol is not None:
            table.solutions[("continuation", R)] = sol
    table.report = {"bracket": stability_bracket(table)}
    return table


def stability_bracket(table: SweepTable) -> dict | None:
    ok = [r for r in table.rows if r["N_lambda_pos"] is not None]
    for a, b in zip(ok, ok[1:]):
        if a["N_lambda_pos"] == 0 and b["N_lambda_pos"] > 0:
            return {"R_stable": a["R"], "R_unstable": b["R"],
                    "lambda_max_stable": a["lambda_max"], "lambda_max_unstable": b["lambda_max"],
                    "N_lambda_pos_stable": a["N_lambda_pos"], "N_lambda_pos_unstable": b["N_lambda_pos"]}
    return None
