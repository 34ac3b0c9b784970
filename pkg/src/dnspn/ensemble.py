"""Fusion of per-head predictions.

The fused prediction minimizes the summed KL divergences from each head's
output to the fused distribution (heads on the left of the divergence);
solving that constrained problem gives the arithmetic mean, which is what
:func:`fuse` computes. Regression outputs fuse by the same mean.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError


def fuse(outputs: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of the head outputs (shape-checked)."""
    if len(outputs) == 0:
        raise ParameterError("fuse requires at least one head output")
    first = np.asarray(outputs[0], dtype=np.float64)
    total = first.copy()
    for out in outputs[1:]:
        arr = np.asarray(out, dtype=np.float64)
        if arr.shape != first.shape:
            raise ShapeError(
                f"head output shapes differ: {arr.shape} vs {first.shape}"
            )
        total += arr
    return total / len(outputs)


def kl_objective(outputs: Sequence[np.ndarray], q: np.ndarray) -> float:
    """Sum over heads of KL(head || q), with 0 * log(0/q) taken as 0.

    `q` must be strictly positive wherever any head puts mass; heads and q
    are flattened rows of probability values (any common shape works).
    """
    if len(outputs) == 0:
        raise ParameterError("kl_objective requires at least one head output")
    q = np.asarray(q, dtype=np.float64)
    total = 0.0
    for out in outputs:
        r = np.asarray(out, dtype=np.float64)
        qb = np.broadcast_to(q, r.shape)
        support = r > 0.0
        if np.any(qb[support] <= 0.0):
            raise ParameterError(
                "q must be strictly positive wherever a head has mass"
            )
        total += float(np.sum(r[support] * np.log(r[support] / qb[support])))
    return total
