"""Evaluation against ground truth.

The error measure is the square root of the summed squared entrywise
relative errors, so it is scale-free per entry and grows with dimension.
Mixture components carry no canonical order, so scoring first aligns the
fitted components to the truth by searching all permutations for the one
with the smallest concentration error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .model import MdmParams

__all__ = ["nmse", "AlignedNmseReport", "align_and_score"]

_MAX_ALIGN_COMPONENTS = 8


def nmse(x, y) -> float:
    """sqrt of the summed squared relative errors of x against ground truth y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ContractError("nmse requires at least one entry")
    if (y == 0.0).any():
        raise DomainError("ground-truth vector contains a zero entry")
    rel = (x - y) / y
    return float(np.sqrt(np.sum(rel * rel)))


@dataclass(frozen=True)
class AlignedNmseReport:
    """Per-parameter errors under the best component alignment.

    permutation[j] is the fitted component matched to truth component j.
    """

    permutation: tuple[int, ...]
    nmse_tau: float
    nmse_alpha: float
    nmse_pi: float


def _count_dist_errors(fitted: dict[int, float], truth: dict[int, float]) -> list[float]:
    """Relative errors over the union of support points.

    Points the truth does not support are excluded (the relative error is
    undefined there); points only the truth supports score the fitted
    probability as 0.
    """
    return [(fitted.get(n, 0.0) - p) / p for n, p in truth.items()]


def align_and_score(fitted: MdmParams, truth: MdmParams) -> AlignedNmseReport:
    """Score fitted parameters against truth under the best permutation.

    The permutation minimizes the error of the flattened concentration
    matrix; weight and count-distribution errors are reported under that
    same alignment. Weight and concentration errors require strictly
    positive truth entries.
    """
    if fitted.num_components != truth.num_components:
        raise ContractError("component counts differ")
    if fitted.num_categories != truth.num_categories:
        raise ContractError("category counts differ")
    k = truth.num_components
    if k > _MAX_ALIGN_COMPONENTS:
        raise ContractError(
            f"alignment search supports at most {_MAX_ALIGN_COMPONENTS} components, got {k}"
        )
    best_perm = None
    best_err = np.inf
    truth_alpha_flat = truth.alphas.ravel()
    for perm in itertools.permutations(range(k)):
        err = nmse(fitted.alphas[list(perm)].ravel(), truth_alpha_flat)
        if err < best_err:
            best_err = err
            best_perm = perm
    aligned = fitted.permuted(best_perm)
    pi_errors: list[float] = []
    for j in range(k):
        pi_errors.extend(_count_dist_errors(aligned.count_dists[j], truth.count_dists[j]))
    return AlignedNmseReport(
        permutation=tuple(best_perm),
        nmse_tau=nmse(aligned.weights, truth.weights),
        nmse_alpha=best_err,
        nmse_pi=float(np.sqrt(np.sum(np.square(pi_errors)))),
    )
