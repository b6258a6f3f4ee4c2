"""Thin wrappers over the production LP / assignment solvers.

POT probes every array backend it knows about at import time (torch, jax,
tensorflow, cupy), which costs seconds and is never needed here.
"""
import os

for _key in (
    "POT_BACKEND_DISABLE_PYTORCH",
    "POT_BACKEND_DISABLE_JAX",
    "POT_BACKEND_DISABLE_TENSORFLOW",
    "POT_BACKEND_DISABLE_CUPY",
):
    os.environ.setdefault(_key, "1")

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment

_MAX_ITER = 10**8


def transport_value(a, b, cost):
    """Exact optimal transport value (network simplex)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    # emd2 insists on equal total mass to ~1e-7; renormalise rounding noise
    a = a / a.sum()
    b = b / b.sum()
    plan, log = ot.emd(a, b, cost, numItermax=_MAX_ITER, log=True)
    if log.get("warning"):
        raise RuntimeError(f"network simplex did not converge: {log['warning']}")
    return float(np.sum(plan * cost))


def assignment_value(cost):
    """Mean cost of the optimal assignment for a square matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / cost.shape[0]), cols
