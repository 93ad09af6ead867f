"""Command-line interface.

Every subcommand reads an optional JSON config (``--config``); flags given on
the command line override config values.  Results go to ``--output-dir``,
else ``$CAVITYSDP_OUTPUT_DIR``, else the working directory.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cavity import SCHEMES, GridMap, Solution, build_pop, build_system, velocity_field
from .localopt import multistart_enumerate, stability
from .pipelines import (REFINE_CHOICES, ExclusionParams, PipelineError, continuation,
                        energy_sweep, enumerate_k, linear_solve, refine_grid, sdpr_method,
                        stability_sweep, write_enumeration_csv, write_sweep_csv)
from .sdprelax import build_relaxation
from .sdpsolve import write_sdp

log = logging.getLogger("cavitysdp")

SCHEMA_VERSION = 1
OUTPUT_ENV = "CAVITYSDP_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
SOLVE_METHODS = ("linear", "continuation", "sdpr", "oracle")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    scheme: str = "central"
    method: str = "sdpr"
    R: float = 0.0
    R_list: list | None = None
    v: float = 1.0
    N: int = 5
    w: int = 1
    k: int = 3
    refine: str = "newton"
    eps1: float = 1e-5
    eps2: float = 0.0
    b1: int = 5
    b2: int = 0
    iterations: list | None = None
    retries: int = 3
    bounds: dict | None = None
    dR: float | None = None
    N_f: int | None = None
    recompute_omega: bool = False
    input: str | None = None
    M: float = 1.0
    format: str = "csv"
    sweep: str = "energy"
    methods: list | None = None
    n_starts: int = 2000
    seed: int = 0
    workers: int = 1
    output_dir: str | None = None
    output: str | None = None

    def validate(self) -> "RunConfig":
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.method not in SOLVE_METHODS:
            raise ConfigError(f"method must be one of {SOLVE_METHODS}")
        if self.refine not in REFINE_CHOICES:
            raise ConfigError(f"refine must be one of {REFINE_CHOICES}")
        if not isinstance(self.N, int) or self.N < 4:
            raise ConfigError("N must be an integer >= 4")
        if self.w not in (1, 2):
            raise ConfigError("w must be 1 or 2")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        for name in ("R", "v", "M", "eps1", "eps2"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ConfigError(f"{name} must be a finite number")
        if self.R < 0:
            raise ConfigError("R must be >= 0")
        if self.dR is not None and self.dR <= 0:
            raise ConfigError("dR must be positive")
        if self.format not in ("csv", "svg"):
            raise ConfigError("format must be csv or svg")
        if self.sweep not in ("energy", "stability"):
            raise ConfigError("sweep must be energy or stability")
        if self.N_f is not None and self.N_f < self.N:
            raise ConfigError("N_f must be >= N")
        if self.R_list is not None and (not self.R_list or any(float(r) < 0 for r in self.R_list)):
            raise ConfigError("R_list must be a non-empty list of R >= 0")
        if self.iterations is not None:
            allowed = {f.name for f in fields(ExclusionParams)}
            for i, it in enumerate(self.iterations):
                if not isinstance(it, dict) or set(it) - allowed:
                    raise ConfigError(f"iterations[{i}] keys must be among {sorted(allowed)}")
        if self.bounds is not None and set(self.bounds) - {"psi", "omega"}:
            raise ConfigError("bounds accepts the keys psi and omega")
        return self

    def exclusion_params(self):
        if self.iterations:
            return [ExclusionParams(**it) for it in self.iterations]
        return ExclusionParams(self.eps1, self.eps2, self.b1, self.b2)

    def bounds_arrays(self):
        """Symmetric per-block box overrides ``{"psi": a, "omega": b}``."""
        if not self.bounds:
            return None
        from .cavity import default_bounds
        lbd, ubd = default_bounds(self.v, self.N)
        n = GridMap(self.N).n_interior
        if "psi" in self.bounds:
            lbd[:n], ubd[:n] = -float(self.bounds["psi"]), float(self.bounds["psi"])
        if "omega" in self.bounds:
            lbd[n:], ubd[n:] = -float(self.bounds["omega"]), float(self.bounds["omega"])
        return lbd, ubd


CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# solution files

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no inf/nan
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (int, str)) or x is None:
        return x
    return repr(x)


def solution_to_dict(sol: Solution) -> dict:
    grid = sol.grid
    psi, om = grid.full_grids(sol.point, sol.v)
    return {
        "schema_version": SCHEMA_VERSION,
        "params": {"R": float(sol.R), "v": float(sol.v), "N": int(sol.N), "scheme": sol.scheme},
        "energy": float(sol.energy),
        "eps_sc": float(sol.residual),
        "provenance": sol.provenance,
        "status": sol.status,
        "converged": bool(sol.converged),
        "point": [float(t) for t in sol.point],
        "psi_grid": psi.tolist(),
        "omega_grid": om.tolist(),
        "stability": _jsonable(sol.stability),
        "info": _jsonable(sol.info),
    }


def solution_from_dict(d: dict) -> Solution:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported solution schema {d.get('schema_version')!r}")
    try:
        p = d["params"]
        sol = Solution(point=np.array(d["point"], dtype=float), energy=float(d["energy"]),
                       residual=float(d["eps_sc"]), provenance=d["provenance"], R=float(p["R"]),
                       v=float(p["v"]), N=int(p["N"]), scheme=p["scheme"],
                       converged=bool(d["converged"]), status=d["status"],
                       stability=d.get("stability"), info=d.get("info") or {})
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed solution file: {exc}") from exc
    if len(sol.point) != sol.grid.dimension:
        raise ValueError("point length does not match N")
    return sol


def dumps_solution(sol: Solution) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(solution_to_dict(sol), indent=1, sort_keys=True) + "\n"


def atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_solution(sol: Solution, path) -> Path:
    return atomic_write(Path(path), dumps_solution(sol))


def load_solution(path) -> Solution:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed solution file: {exc}") from exc
    return solution_from_dict(d)


# ---------------------------------------------------------------------------
# field export

def field_csv(sol: Solution, M: float = 1.0) -> str:
    vf = velocity_field(sol, M)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["x", "y", "u", "v"])
    for row in zip(vf.x, vf.y, vf.u, vf.v):
        wr.writerow([repr(float(t)) for t in row])
    return buf.getvalue()


def field_svg(sol: Solution, M: float = 1.0, size: int = 600) -> str:
    vf = velocity_field(sol, M)
    pad = 50
    L = size - 2 * pad

    def px(x, y):
        return pad + x * L, size - pad - y * L

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           '<defs><marker id="head" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="5" '
           'markerHeight="5" orient="auto-start-reverse"><path d="M0,0 L10,5 L0,10 z" fill="black"/>'
           '</marker></defs>',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{pad}" y="{pad}" width="{L}" height="{L}" fill="none" stroke="black" stroke-width="1.5"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad + L}" y2="{pad}" stroke="red" stroke-width="4"/>',
           f'<text x="{size / 2}" y="{pad - 12}" text-anchor="middle" font-size="14" '
           f'font-family="sans-serif">lid, v = {sol.v:g}</text>']
    for x, y, u, w in zip(vf.x, vf.y, vf.u, vf.v):
        x0, y0 = px(x, y)
        x1, y1 = px(x + u, y + w)
        out.append(f'<circle cx="{x0:.2f}" cy="{y0:.2f}" r="1.5" fill="black"/>')
        if abs(u) + abs(w) > 0:
            out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                       'stroke="black" stroke-width="1" marker-end="url(#head)"/>')
    out.append(f'<text x="{pad}" y="{size - 15}" font-size="12" font-family="sans-serif">'
               f'R = {sol.R:g}, N = {sol.N}, M = {M:g}, F = {sol.energy:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands

class NumericalFailure(RuntimeError):
    pass


def _outdir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir or os.environ.get(OUTPUT_ENV) or ".")


def _summary(sol: Solution) -> str:
    return (f"R={sol.R:g} N={sol.N} scheme={sol.scheme} F={sol.energy:.6e} "
            f"eps_sc={sol.residual:.2e} provenance={sol.provenance} status={sol.status}")


def _write_failure(cfg: RunConfig, command: str, message: str, partial=None) -> Path:
    rec = {"schema_version": SCHEMA_VERSION, "command": command, "error": message,
           "config": _jsonable(vars(cfg)), "partial": _jsonable(partial)}
    return atomic_write(_outdir(cfg) / f"{command}-failure.json", json.dumps(rec, indent=1, sort_keys=True) + "\n")


def cmd_solve(cfg: RunConfig) -> Solution:
    if cfg.method == "linear":
        if cfg.R != 0:
            raise ConfigError("method linear needs R = 0")
        sol = linear_solve(cfg.v, cfg.N, cfg.scheme)
    elif cfg.method == "continuation":
        path = continuation(cfg.R, cfg.v, cfg.N, cfg.dR, cfg.scheme)
        if path.status != "complete":
            raise NumericalFailure(f"continuation broke down at R={path.terminated_at:g}")
        sol = path.final
    elif cfg.method == "oracle":
        roots = multistart_enumerate(build_pop(cfg.R, cfg.v, cfg.N, cfg.scheme, cfg.bounds_arrays()),
                                     cfg.n_starts, cfg.seed, psi_fraction=0.1, omega_fraction=0.1,
                                     workers=cfg.workers)
        if not roots:
            raise NumericalFailure("multistart found no root")
        sol = roots[0]
    else:
        sol = sdpr_method(cfg.R, cfg.v, cfg.N, cfg.w, cfg.scheme, cfg.refine, bounds=cfg.bounds_arrays())
    name = cfg.output or f"solution_R{cfg.R:g}_N{cfg.N}_{sol.provenance.replace('+', '-')}.json"
    save_solution(sol, _outdir(cfg) / name)
    print(_summary(sol))
    if sol.status not in ("ok",):
        raise NumericalFailure(f"solution status {sol.status}")
    return sol


def cmd_enumerate(cfg: RunConfig):
    run = enumerate_k(cfg.R, cfg.v, cfg.N, cfg.w, cfg.k, cfg.exclusion_params(), scheme=cfg.scheme,
                      refine=cfg.refine, retries=cfg.retries, bounds=cfg.bounds_arrays())
    out = _outdir(cfg)
    for j, sol in enumerate(run.solutions):
        save_solution(sol, out / f"u{j}_R{cfg.R:g}_N{cfg.N}.json")
    buf = io.StringIO()
    write_enumeration_csv(run, buf)
    atomic_write(out / (cfg.output or f"enumeration_R{cfg.R:g}_N{cfg.N}.csv"), buf.getvalue())
    sys.stdout.write(buf.getvalue())
    if run.non_monotone:
        print("note: energies are not in increasing order")
    if run.status == "sdp-failure":
        raise NumericalFailure(run.message)
    if run.status != "complete":
        print(f"run stopped: {run.message}")
    return run


def cmd_continue(cfg: RunConfig):
    path = continuation(cfg.R, cfg.v, cfg.N, cfg.dR, cfg.scheme)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["R", "F", "eps_sc"])
    for R, s in path.entries:
        wr.writerow([repr(R), repr(s.energy), repr(s.residual)])
    out = _outdir(cfg)
    atomic_write(out / f"continuation_R{cfg.R:g}_N{cfg.N}.csv", buf.getvalue())
    save_solution(path.final, out / (cfg.output or f"continuation_R{path.terminated_at:g}_N{cfg.N}.json"))
    print(_summary(path.final))
    if path.status != "complete":
        raise NumericalFailure(f"continuation broke down at R={path.terminated_at:g}")
    return path


def _need_input(cfg: RunConfig) -> Solution:
    if not cfg.input:
        raise ConfigError("this command needs --input SOLUTION.json")
    try:
        return load_solution(cfg.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_refine(cfg: RunConfig) -> Solution:
    sol = _need_input(cfg)
    if cfg.N_f is None or cfg.N_f < sol.N:
        raise ConfigError("refine needs --N-f at least the input grid size")
    fine = refine_grid(sol, cfg.N_f, recompute_omega=cfg.recompute_omega)
    save_solution(fine, _outdir(cfg) / (cfg.output or f"refined_R{fine.R:g}_N{fine.N}.json"))
    print(_summary(fine))
    if not fine.converged:
        raise NumericalFailure(f"Newton on the fine grid failed: {fine.status}")
    return fine


def cmd_stability(cfg: RunConfig) -> Solution:
    if cfg.input:
        sol = _need_input(cfg)
    else:
        path = continuation(cfg.R, cfg.v, cfg.N, cfg.dR, cfg.scheme)
        if path.status != "complete":
            raise NumericalFailure(f"continuation broke down at R={path.terminated_at:g}")
        sol = path.final
    try:
        rep = stability(build_system(sol.R, sol.v, sol.N, sol.scheme), sol)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from exc
    sol.stability = {"lambda_max": rep.lambda_max, "n_positive": rep.n_positive}
    save_solution(sol, _outdir(cfg) / (cfg.output or f"stability_R{sol.R:g}_N{sol.N}.json"))
    print(_summary(sol), f"lambda_max={rep.lambda_max:.6g} N_lambda_pos={rep.n_positive}",
          "stable" if rep.stable else "unstable")
    return sol


def cmd_sweep(cfg: RunConfig):
    R_list = cfg.R_list if cfg.R_list is not None else [cfg.R]
    if cfg.sweep == "energy":
        methods = cfg.methods or ["continuation", "sdpr1"]
        table = energy_sweep(R_list, cfg.v, cfg.N, methods, scheme=cfg.scheme, refine=cfg.refine,
                             oracle_starts=cfg.n_starts, seed=cfg.seed, workers=cfg.workers)
    else:
        table = stability_sweep(R_list, cfg.v, cfg.N, scheme=cfg.scheme, dR=cfg.dR, workers=cfg.workers)
    buf = io.StringIO()
    write_sweep_csv(table, buf)
    out = _outdir(cfg)
    stem = cfg.output or f"sweep_{cfg.sweep}_N{cfg.N}"
    atomic_write(out / f"{stem}.csv", buf.getvalue())
    atomic_write(out / f"{stem}_report.json", json.dumps(_jsonable(table.report), indent=1, sort_keys=True) + "\n")
    sys.stdout.write(buf.getvalue())
    if cfg.sweep == "energy":
        rep = table.report
        if rep["monotone_nonincreasing"]:
            print("E_min is nonincreasing in R")
        for inc in rep["increases"]:
            print(f"E_min increases from R={inc['R_from']:g} ({inc['E_from']:.3e}) "
                  f"to R={inc['R_to']:g} ({inc['E_to']:.3e})")
    else:
        b = table.report["bracket"]
        if b is None:
            print("no stability transition in the sweep")
        else:
            print(f"transition between R={b['R_stable']:g} (lambda_max={b['lambda_max_stable']:.4g}) "
                  f"and R={b['R_unstable']:g} (lambda_max={b['lambda_max_unstable']:.4g}), "
                  f"N_lambda_pos {b['N_lambda_pos_stable']} -> {b['N_lambda_pos_unstable']}")
    return table


def cmd_export_field(cfg: RunConfig) -> Path:
    sol = _need_input(cfg)
    text = field_csv(sol, cfg.M) if cfg.format == "csv" else field_svg(sol, cfg.M)
    name = cfg.output or f"{Path(cfg.input).stem}_field.{cfg.format}"
    path = atomic_write(_outdir(cfg) / name, text)
    print(path)
    return path


def cmd_export_sdp(cfg: RunConfig) -> Path:
    pop = build_pop(cfg.R, cfg.v, cfg.N, cfg.scheme, cfg.bounds_arrays())
    from .pipelines import default_equality_mode
    rp = build_relaxation(pop, cfg.w, equality_mode=default_equality_mode(cfg.w))
    buf = io.StringIO()
    write_sdp(rp.sdp, buf)
    path = atomic_write(_outdir(cfg) / (cfg.output or f"sdpr{cfg.w}_R{cfg.R:g}_N{cfg.N}.sdp"), buf.getvalue())
    print(f"{path}: {rp.sdp.n_vars} moments, {rp.sdp.n_blocks} blocks, {rp.sdp.A.shape[0]} equalities")
    return path


COMMANDS = {
    "solve": cmd_solve, "enumerate": cmd_enumerate, "continue": cmd_continue, "refine": cmd_refine,
    "stability": cmd_stability, "sweep": cmd_sweep, "export-field": cmd_export_field,
    "export-sdp": cmd_export_sdp,
}


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("-R", type=float, dest="R")
    common.add_argument("--R-list", type=_floats, dest="R_list", help="comma-separated R values")
    common.add_argument("-v", type=float, dest="v", help="lid velocity")
    common.add_argument("-N", type=int, dest="N")
    common.add_argument("-w", type=int, dest="w", help="relaxation order")
    common.add_argument("-k", type=int, dest="k")
    common.add_argument("--method", choices=SOLVE_METHODS)
    common.add_argument("--refine", choices=REFINE_CHOICES)
    common.add_argument("--eps1", type=float)
    common.add_argument("--eps2", type=float)
    common.add_argument("--b1", type=int)
    common.add_argument("--b2", type=int)
    common.add_argument("--retries", type=int)
    common.add_argument("--dR", type=float, dest="dR")
    common.add_argument("--N-f", type=int, dest="N_f")
    common.add_argument("--recompute-omega", action="store_const", const=True, dest="recompute_omega")
    common.add_argument("--input")
    common.add_argument("-M", type=float, dest="M", help="velocity magnification")
    common.add_argument("--format", choices=("csv", "svg"))
    common.add_argument("--sweep", choices=("energy", "stability"))
    common.add_argument("--methods", type=lambda s: [t for t in s.split(",") if t])
    common.add_argument("--n-starts", type=int, dest="n_starts")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("-o", "--output", help="output file name inside the output directory")
    common.add_argument("--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="cavitysdp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, PipelineError) as exc:
        _write_failure(cfg, args.command, str(exc), getattr(exc, "partial", None))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
