"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``CAVITYSDP_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

BACKEND = "python"
if os.environ.get("CAVITYSDP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ckernels import eval_polys, jac_values, prepare  # noqa: F401
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        pass
if BACKEND == "python":
    from ._pykernels import eval_polys, jac_values, prepare  # noqa: F401

__all__ = ["BACKEND", "eval_polys", "jac_values", "prepare"]
