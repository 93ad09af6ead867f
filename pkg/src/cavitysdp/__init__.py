"""Minimal-energy solutions of the discrete steady cavity flow problem via sparse SDP relaxations."""

__version__ = "0.1.0"

from .cavity import CavityPOP, GridMap, Solution, build_adscf, build_dscf, build_energy, build_pop
from .localopt import multistart_enumerate, newton_solve, sqp_refine, stability
from .pipelines import continuation, energy_sweep, enumerate_k, refine_grid, sdpr_method, stability_sweep
from .sdprelax import build_relaxation, csp_cliques, extract_point, make_exclusion
from .sdpsolve import SDPOptions, SDPProblem, solve_sdp

__all__ = [
    "CavityPOP", "GridMap", "Solution", "build_adscf", "build_dscf", "build_energy", "build_pop",
    "multistart_enumerate", "newton_solve", "sqp_refine", "stability",
    "continuation", "energy_sweep", "enumerate_k", "refine_grid", "sdpr_method", "stability_sweep",
    "build_relaxation", "csp_cliques", "extract_point", "make_exclusion",
    "SDPOptions", "SDPProblem", "solve_sdp",
]
