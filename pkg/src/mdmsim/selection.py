"""Component-count selection by validation log likelihood.

Each candidate component count gets a full estimation run on the training
clients; candidates are scored by mean per-client log likelihood on held-out
validation clients, and near-ties resolve toward the smallest count.

Validation clients are split off up front (or supplied as a separate
population), so they are disjoint from every training cohort by
construction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, NumericError
from .federation import ClientPopulation, sample_cohort
from .inference import InferenceConfig, fit
from .model import MdmParams, log_mdm_pmf_matrix
from .rng import RngHandle

__all__ = ["CandidateResult", "KSelectionReport", "select_k", "choose_k"]

DEFAULT_TIE_TOLERANCE = 1e-2


@dataclass(frozen=True)
class CandidateResult:
    """One candidate component count with its fitted model and score."""

    n_components: int
    params: MdmParams
    mean_val_loglik: float


@dataclass(frozen=True)
class KSelectionReport:
    """All candidate results plus the chosen component count."""

    candidates: tuple[CandidateResult, ...]
    chosen: int
    tie_tolerance: float

    @property
    def chosen_params(self) -> MdmParams:
        for cand in self.candidates:
            if cand.n_components == self.chosen:
                return cand.params
        raise ContractError("report does not contain its own chosen candidate")


def choose_k(candidate_ks, scores, tie_tolerance: float) -> int:
    """Smallest candidate whose score is within tie_tolerance of the best."""
    scores = np.asarray(scores, dtype=np.float64)
    best = scores.max()
    if not np.isfinite(best):
        raise NumericError(
            "every candidate assigns zero probability to some validation client"
        )
    eligible = [k for k, s in zip(candidate_ks, scores) if s >= best - tie_tolerance]
    return min(eligible)


def _mean_val_loglik(val_pop: ClientPopulation, params: MdmParams) -> float:
    if val_pop.num_categories != params.num_categories:
        raise ContractError("validation clients and model disagree on category count")
    logp = log_mdm_pmf_matrix(
        val_pop.counts.astype(np.float64), val_pop.ns.astype(np.float64), params
    )
    return float(logp.mean())


def select_k(
    pop: ClientPopulation,
    candidate_ks,
    cfg: InferenceConfig,
    rng: RngHandle,
    val_cohort_size: int | None = None,
    val_pop: ClientPopulation | None = None,
    tie_tolerance: float = DEFAULT_TIE_TOLERANCE,
    n_threads: int = 1,
) -> KSelectionReport:
    """Fit every candidate component count and pick one by validation score.

    Exactly one of val_cohort_size (held out from pop up front, sampled with
    rng.child(0)) and val_pop (separate validation population) must be
    given. Candidate fits use rng.child(k) keyed by the candidate value k,
    so scores do not depend on which other candidates run, and per-candidate
    fits may run on up to n_threads workers without changing any result.
    """
    candidate_ks = [int(k) for k in candidate_ks]
    if not candidate_ks:
        raise ContractError("candidate_ks must be non-empty")
    if any(k < 1 for k in candidate_ks):
        raise ContractError("candidate component counts must be positive")
    if len(set(candidate_ks)) != len(candidate_ks):
        raise ContractError("candidate component counts must be distinct")
    if not (float(tie_tolerance) >= 0.0):
        raise ContractError(f"tie_tolerance must be non-negative, got {tie_tolerance!r}")
    if (val_cohort_size is None) == (val_pop is None):
        raise ContractError("pass exactly one of val_cohort_size and val_pop")

    if val_pop is None:
        if not 1 <= val_cohort_size < pop.num_clients:
            raise ContractError(
                f"val_cohort_size must leave at least one training client, "
                f"got {val_cohort_size} of {pop.num_clients}"
            )
        val_idx = sample_cohort(pop.num_clients, val_cohort_size, rng.child(0).generator())
        train_idx = np.setdiff1d(np.arange(pop.num_clients, dtype=np.int64), val_idx)
        train_pop = pop.subset(train_idx)
        val_pop = pop.subset(val_idx)
    else:
        train_pop = pop

    def run_one(k: int) -> CandidateResult:
        params, _ = fit(train_pop, replace(cfg, n_components=k), rng.child(k))
        return CandidateResult(
            n_components=k,
            params=params,
            mean_val_loglik=_mean_val_loglik(val_pop, params),
        )

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run_one, candidate_ks))
    else:
        results = [run_one(k) for k in candidate_ks]

    chosen = choose_k(
        candidate_ks, [r.mean_val_loglik for r in results], tie_tolerance
    )
    return KSelectionReport(
        candidates=tuple(results), chosen=chosen, tie_tolerance=tie_tolerance
    )
