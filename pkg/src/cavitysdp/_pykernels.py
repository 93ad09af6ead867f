"""Pure numpy implementation of the polynomial-system kernels.

Used when the compiled extension is unavailable or when
``CAVITYSDP_PURE_PYTHON=1`` is set.  Terms are grouped by their number of
factors so every group is evaluated with a handful of vectorized calls.
"""
import numpy as np


def prepare(coef, term_row, term_ptr, fac_var, fac_exp, slot_nz):
    nfac = np.diff(term_ptr)
    term_ids = np.arange(len(coef))
    groups = []
    for k in np.unique(nfac):
        sel = term_ids[nfac == k]
        pos = term_ptr[sel][:, None] + np.arange(k)[None, :]
        groups.append((int(k), sel, pos))
    return {
        "coef": coef, "term_row": term_row, "fac_var": fac_var,
        "fac_exp": fac_exp, "slot_nz": slot_nz, "groups": groups,
    }


def eval_polys(data, x, out):
    fv = x[data["fac_var"]] ** data["fac_exp"]
    tv = np.empty(len(data["coef"]))
    for k, sel, pos in data["groups"]:
        if k == 0:
            tv[sel] = data["coef"][sel]
        else:
            tv[sel] = data["coef"][sel] * np.prod(fv[pos], axis=1)
    out[:] = np.bincount(data["term_row"], weights=tv, minlength=len(out))[:len(out)]


def jac_values(data, x, out):
    xv = x[data["fac_var"]]
    e = data["fac_exp"]
    fv = xv ** e
    dfv = e * xv ** (e - 1)
    out[:] = 0.0
    n = len(out)
    for k, sel, pos in data["groups"]:
        if k == 0:
            continue
        c = data["coef"][sel]
        F = fv[pos]
        for col in range(k):
            others = np.prod(np.delete(F, col, axis=1), axis=1) if k > 1 else 1.0
            slots = data["slot_nz"][pos[:, col]]
            out += np.bincount(slots, weights=c * dfv[pos[:, col]] * others, minlength=n)[:n]
