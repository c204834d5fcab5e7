"""Mixture-of-Dirichlet-multinomials model.

The joint distribution of one client is a mixture over K components; each
component pairs a Dirichlet-multinomial over the C-category histogram with an
independent distribution over the per-client sample count. This module holds
the immutable parameter set, every probability computation (all in log
space), and the JSON wire format for parameters.

Count vectors reaching the matrix-valued functions are trusted to satisfy
sum(c) == n; the scalar entry points validate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateClientError, DomainError
from .special import log_gamma

__all__ = [
    "LOG_ZERO",
    "ClientRecord",
    "MdmParams",
    "log_dm_pmf",
    "log_joint_pmf",
    "log_mdm_pmf",
    "log_likelihood",
    "responsibilities",
]

# Sentinel for log of an exact zero probability. It flows through
# log-sum-exp correctly and never turns into NaN on the paths below.
LOG_ZERO = float("-inf")

_PROB_SUM_TOL = 1e-9


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ClientRecord:
    """One federated client: a category-count histogram and its total.

    counts holds the per-category counts of the modelled feature; n is the
    client's sample count and must equal counts.sum().
    """

    counts: np.ndarray
    n: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ContractError("counts must be a non-empty 1-D vector")
        if not np.issubdtype(counts.dtype, np.integer):
            as_int = counts.astype(np.int64)
            if not np.array_equal(as_int, counts):
                raise ContractError("counts must be integer-valued")
            counts = as_int
        else:
            counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise ContractError("counts must be non-negative")
        n = self.n
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
            raise ContractError(f"n must be an integer, got {n!r}")
        n = int(n)
        if n < 1:
            raise ContractError(f"n must be positive, got {n}")
        if int(counts.sum()) != n:
            raise ContractError(f"counts sum to {int(counts.sum())} but n is {n}")
        object.__setattr__(self, "counts", _readonly(counts))
        object.__setattr__(self, "n", n)

    @property
    def num_categories(self) -> int:
        return int(self.counts.shape[0])


def _canonical_count_dist(dist: dict) -> dict[int, float]:
    """Validate one sample-count distribution and drop zero entries."""
    out: dict[int, float] = {}
    total = 0.0
    for n, p in dist.items():
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
            raise ContractError(f"sample-count support must be integers, got {n!r}")
        if int(n) < 1:
            raise ContractError(f"sample-count support must be positive, got {n}")
        p = float(p)
        if not math.isfinite(p) or p < 0.0:
            raise ContractError(f"sample-count probability must be finite and >= 0, got {p}")
        total += p
        if p > 0.0:
            out[int(n)] = p
    if abs(total - 1.0) > _PROB_SUM_TOL:
        raise ContractError(f"sample-count distribution sums to {total!r}, expected 1")
    if not out:
        raise ContractError("sample-count distribution has empty support")
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class MdmParams:
    """Immutable parameter set of the mixture.

    weights: length-K component weights, summing to 1.
    alphas: K x C matrix of strictly positive Dirichlet parameters.
    count_dists: per-component sparse sample-count distributions, stored as
        {count: probability} maps with zero entries dropped.
    n_bound: upper bound on sample counts (the largest supported count is
        always <= n_bound).
    """

    weights: np.ndarray
    alphas: np.ndarray
    count_dists: tuple[dict[int, float], ...]
    n_bound: int = 0

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ContractError("weights must be a non-empty vector")
        if alphas.ndim != 2 or alphas.shape[0] != weights.shape[0]:
            raise ContractError("alphas must be a K x C matrix matching weights")
        if not np.all(np.isfinite(weights)) or (weights < 0.0).any():
            raise ContractError("weights must be finite and non-negative")
        if abs(float(weights.sum()) - 1.0) > _PROB_SUM_TOL:
            raise ContractError(f"weights sum to {float(weights.sum())!r}, expected 1")
        if not np.all(np.isfinite(alphas)) or (alphas <= 0.0).any():
            raise ContractError("alphas must be finite and strictly positive")
        dists = tuple(_canonical_count_dist(d) for d in self.count_dists)
        if len(dists) != weights.shape[0]:
            raise ContractError("count_dists must have one distribution per component")
        max_support = max(max(d) for d in dists)
        n_bound = int(self.n_bound) if self.n_bound else max_support
        if n_bound < max_support:
            raise ContractError(
                f"n_bound {n_bound} is below the largest supported count {max_support}"
            )
        object.__setattr__(self, "weights", _readonly(weights))
        object.__setattr__(self, "alphas", _readonly(alphas))
        object.__setattr__(self, "count_dists", dists)
        object.__setattr__(self, "n_bound", n_bound)

    @property
    def num_components(self) -> int:
        return int(self.weights.shape[0])

    @property
    def num_categories(self) -> int:
        return int(self.alphas.shape[1])

    def log_count_probs(self, ns: np.ndarray) -> np.ndarray:
        """Matrix of log pi_k(n) for each requested count, shape (len(ns), K)."""
        ns = np.asarray(ns)
        unique, inverse = np.unique(ns, return_inverse=True)
        table = np.full((unique.shape[0], self.num_components), LOG_ZERO)
        for k, dist in enumerate(self.count_dists):
            for j, n in enumerate(unique):
                p = dist.get(int(n), 0.0)
                if p > 0.0:
                    table[j, k] = math.log(p)
        return table[inverse]

    def permuted(self, order) -> "MdmParams":
        """Copy with components reindexed by the given permutation."""
        order = list(order)
        if sorted(order) != list(range(self.num_components)):
            raise ContractError(f"not a permutation of components: {order}")
        return MdmParams(
            weights=self.weights[order],
            alphas=self.alphas[order],
            count_dists=tuple(dict(self.count_dists[k]) for k in order),
            n_bound=self.n_bound,
        )


# --- probability computations ---------------------------------------------


def _log_sum_exp(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted log-sum-exp that maps all-(-inf) slices to -inf, not NaN."""
    values = np.asarray(values, dtype=np.float64)
    peak = np.max(values, axis=axis, keepdims=True)
    safe_peak = np.where(np.isfinite(peak), peak, 0.0)
    total = np.sum(np.exp(values - safe_peak), axis=axis)
    with np.errstate(divide="ignore"):
        out = np.log(total) + np.squeeze(safe_peak, axis=axis)
    return np.where(np.isfinite(np.squeeze(peak, axis=axis)), out, LOG_ZERO)


def log_dm_pmf(counts, n: int, alpha) -> float:
    """Log pmf of the Dirichlet-multinomial at one histogram.

    counts must sum to n and alpha must be strictly positive, with matching
    lengths. The n=0 empty histogram has probability 1.
    """
    counts = np.asarray(counts, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if counts.ndim != 1 or alpha.ndim != 1 or counts.shape != alpha.shape:
        raise ContractError("counts and alpha must be 1-D vectors of equal length")
    if (counts < 0).any():
        raise ContractError("counts must be non-negative")
    if int(round(float(counts.sum()))) != int(n) or n < 0:
        raise ContractError(f"counts sum to {counts.sum()} but n is {n}")
    if not np.all(np.isfinite(alpha)) or (alpha <= 0.0).any():
        raise DomainError("alpha must be finite and strictly positive")
    if n == 0:
        return 0.0
    return float(_log_dm_pmf_matrix(counts[None, :], np.array([float(n)]), alpha[None, :])[0, 0])


def _log_dm_pmf_matrix(counts: np.ndarray, ns: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Vectorized DM log pmf: (B, C) histograms against (K, C) parameter rows -> (B, K)."""
    alpha_totals = alphas.sum(axis=1)
    out = log_gamma(ns + 1.0)[:, None]
    out = out + (log_gamma(alpha_totals)[None, :] - log_gamma(ns[:, None] + alpha_totals[None, :]))
    out = out + (
        log_gamma(counts[:, None, :] + alphas[None, :, :]) - log_gamma(alphas)[None, :, :]
    ).sum(axis=2)
    out = out - log_gamma(counts + 1.0).sum(axis=1)[:, None]
    return out


def log_joint_pmf(rec: ClientRecord, alpha, count_dist: dict) -> float:
    """Log joint pmf of (histogram, sample count) under one component."""
    p = count_dist.get(int(rec.n), 0.0)
    if p <= 0.0:
        return LOG_ZERO
    return log_dm_pmf(rec.counts, rec.n, alpha) + math.log(p)


def _log_joint_matrix(counts: np.ndarray, ns: np.ndarray, params: MdmParams) -> np.ndarray:
    return _log_dm_pmf_matrix(counts, ns, params.alphas) + params.log_count_probs(ns)


def log_mdm_pmf(rec: ClientRecord, params: MdmParams) -> float:
    """Log pmf of one client under the full mixture."""
    counts, ns = _stack_records([rec], params.num_categories)
    return float(log_mdm_pmf_matrix(counts, ns, params)[0])


def log_mdm_pmf_matrix(counts: np.ndarray, ns: np.ndarray, params: MdmParams) -> np.ndarray:
    """Vectorized mixture log pmf for a batch of clients, shape (B,)."""
    with np.errstate(divide="ignore"):
        log_weights = np.log(params.weights)
    return _log_sum_exp(_log_joint_matrix(counts, ns, params) + log_weights[None, :], axis=1)


def _stack_records(records, num_categories: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.empty((len(records), num_categories), dtype=np.float64)
    ns = np.empty(len(records), dtype=np.float64)
    for i, rec in enumerate(records):
        if rec.num_categories != num_categories:
            raise ContractError(
                f"record has {rec.num_categories} categories, model has {num_categories}"
            )
        counts[i] = rec.counts
        ns[i] = rec.n
    return counts, ns


def log_likelihood(records, params: MdmParams) -> float:
    """Sum of mixture log pmf values over a non-empty list of clients."""
    if len(records) == 0:
        raise ContractError("log_likelihood requires at least one record")
    counts, ns = _stack_records(list(records), params.num_categories)
    return float(log_mdm_pmf_matrix(counts, ns, params).sum())


def responsibilities(rec: ClientRecord, params: MdmParams) -> np.ndarray:
    """Posterior component probabilities for one client.

    Raises DegenerateClientError when every component assigns the client
    probability zero (possible when no component supports its sample count).
    """
    counts, ns = _stack_records([rec], params.num_categories)
    resp, degenerate = responsibilities_matrix(counts, ns, params)
    if degenerate[0]:
        raise DegenerateClientError(
            f"no component assigns positive probability to a client with n={rec.n}"
        )
    return resp[0]


def responsibilities_matrix(
    counts: np.ndarray, ns: np.ndarray, params: MdmParams
) -> tuple[np.ndarray, np.ndarray]:
    """Batch responsibilities, shape (B, K), plus a (B,) degenerate-row mask.

    Degenerate rows (every component at log-zero) come back as all zeros and
    are flagged in the mask; policy is the caller's concern.
    """
    with np.errstate(divide="ignore"):
        log_weights = np.log(params.weights)
    log_post = _log_joint_matrix(counts, ns, params) + log_weights[None, :]
    peak = log_post.max(axis=1, keepdims=True)
    degenerate = ~np.isfinite(peak[:, 0])
    shifted = np.exp(log_post - np.where(np.isfinite(peak), peak, 0.0))
    totals = shifted.sum(axis=1, keepdims=True)
    resp = shifted / np.where(totals > 0.0, totals, 1.0)
    resp[degenerate] = 0.0
    return resp, degenerate


# --- JSON wire format -------------------------------------------------------

_JSON_FLOAT_DIGITS = ".17g"


def _emit_json(value) -> str:
    if isinstance(value, dict):
        inner = ",".join(f'"{k}":{_emit_json(v)}' for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit_json(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ContractError(f"cannot serialize non-finite float {value!r}")
        return format(float(value), _JSON_FLOAT_DIGITS)
    if isinstance(value, str):
        import json as _json

        return _json.dumps(value)
    raise ContractError(f"cannot serialize {type(value).__name__}")


def params_to_json(params: MdmParams) -> str:
    """Serialize parameters to the canonical JSON document.

    Keys appear in a fixed order and floats carry 17 significant digits, so
    equal parameters always produce byte-identical documents.
    """
    doc = {
        "K": params.num_components,
        "C": params.num_categories,
        "N": params.n_bound,
        "tau": list(params.weights),
        "alpha": [list(row) for row in params.alphas],
        "pi": [
            [{"n": n, "p": p} for n, p in dist.items()] for dist in params.count_dists
        ],
    }
    return _emit_json(doc) + "\n"


def params_from_json(text: str) -> MdmParams:
    """Parse the canonical JSON document back into parameters."""
    import json

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractError(f"invalid params JSON: {exc}") from exc
    try:
        weights = np.asarray(doc["tau"], dtype=np.float64)
        alphas = np.asarray(doc["alpha"], dtype=np.float64)
        dists = tuple({int(e["n"]): float(e["p"]) for e in comp} for comp in doc["pi"])
        params = MdmParams(
            weights=weights, alphas=alphas, count_dists=dists, n_bound=int(doc["N"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractError(f"malformed params document: {exc}") from exc
    if params.num_components != int(doc["K"]) or params.num_categories != int(doc["C"]):
        raise ContractError("params document K/C fields disagree with array shapes")
    return params
