"""Federated generalized-EM estimation of the mixture.

Each round samples a client cohort, collects one summed statistics packet
through secure aggregation, and applies closed-form server updates: mixture
weights from total responsibilities, sample-count distributions from
responsibility-weighted count histograms, and concentrations from a digamma
fixed-point step. Initialization assigns cohort clients to components
uniformly at random and moment-matches each component's concentration from
its members' histogram moments.

The server-side apply functions consume aggregates only; nothing here ever
hands a per-client packet list to an update rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateClientError, NumericError
from .federation import (
    ClientPopulation,
    EmAggregate,
    InitAggregate,
    compute_em_aggregate,
    compute_init_aggregate,
    make_em_packet,
    make_init_packet,
    sample_cohort,
    secure_sum,
)
from .model import MdmParams, log_likelihood
from .rng import RngHandle

__all__ = [
    "InferenceConfig",
    "InferenceTrace",
    "init_params",
    "em_round",
    "theorem1_update",
    "fit",
    "apply_init_aggregate",
    "apply_em_aggregate",
]

# Components whose cohort responsibility mass falls below this fraction of
# the cohort size are treated as dead for the round: their concentration and
# count distribution stay at the previous values.
DEATH_THRESHOLD = 1e-12

_POLICIES = ("skip", "error")
_SCALE_MODES = ("averaged", "first_category")
_AGG_MODES = ("fused", "per_client")


@dataclass(frozen=True)
class InferenceConfig:
    """Settings for one estimation run.

    init_cohort_size / em_cohort_size of None mean the full population.
    degenerate_policy chooses what to do with clients no component supports:
    "skip" drops them from the round, "error" aborts. init_scale_mode picks
    the moment-matching scale estimate: "averaged" pools the per-category
    scale estimates, "first_category" uses only the first usable one.
    aggregation "fused" computes cohort sums with vectorized reductions;
    "per_client" sums literal packets in cohort order (canonical, slower).
    """

    n_components: int
    n_rounds: int
    init_cohort_size: int | None = None
    em_cohort_size: int | None = None
    alpha_floor: float = 1e-8
    degenerate_policy: str = "skip"
    init_scale_mode: str = "averaged"
    aggregation: str = "fused"
    track_loglik: bool = False
    early_stop_tol: float | None = None
    early_stop_patience: int = 5
    max_init_retries: int = 10

    def __post_init__(self) -> None:
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise ContractError(f"n_components must be a positive integer, got {self.n_components!r}")
        if int(self.n_rounds) != self.n_rounds or self.n_rounds < 0:
            raise ContractError(f"n_rounds must be a non-negative integer, got {self.n_rounds!r}")
        for name in ("init_cohort_size", "em_cohort_size"):
            size = getattr(self, name)
            if size is not None and (int(size) != size or size < 1):
                raise ContractError(f"{name} must be a positive integer or None, got {size!r}")
        if self.init_cohort_size is not None and self.init_cohort_size < self.n_components:
            raise ContractError(
                f"init_cohort_size {self.init_cohort_size} is below n_components {self.n_components}"
            )
        if not (float(self.alpha_floor) > 0.0):
            raise ContractError(f"alpha_floor must be positive, got {self.alpha_floor!r}")
        if self.degenerate_policy not in _POLICIES:
            raise ContractError(f"degenerate_policy must be one of {_POLICIES}")
        if self.init_scale_mode not in _SCALE_MODES:
            raise ContractError(f"init_scale_mode must be one of {_SCALE_MODES}")
        if self.aggregation not in _AGG_MODES:
            raise ContractError(f"aggregation must be one of {_AGG_MODES}")
        if self.early_stop_tol is not None and not (float(self.early_stop_tol) > 0.0):
            raise ContractError(f"early_stop_tol must be positive or None, got {self.early_stop_tol!r}")
        if int(self.early_stop_patience) != self.early_stop_patience or self.early_stop_patience < 1:
            raise ContractError(f"early_stop_patience must be a positive integer")
        if int(self.max_init_retries) != self.max_init_retries or self.max_init_retries < 1:
            raise ContractError(f"max_init_retries must be a positive integer")


@dataclass(frozen=True)
class InferenceTrace:
    """Per-round parameter snapshots (initialization included) and, when
    tracked, the full-population log likelihood of each snapshot."""

    params_history: tuple[MdmParams, ...]
    loglik_history: tuple[float, ...] | None = None

    @property
    def n_rounds_run(self) -> int:
        return len(self.params_history) - 1


# --- initialization ---------------------------------------------------------


def apply_init_aggregate(agg: InitAggregate, cfg: InferenceConfig) -> MdmParams:
    """Server-side initialization update from one summed init aggregate.

    Every component's concentration comes from moment matching its members'
    mean and mean-square category ratios; the scale factor falls back to 1
    (concentration = mean ratios) when no category has a usable denominator.
    """
    members = np.asarray(agg.member_counts, dtype=np.float64)
    if (members <= 0.0).any():
        raise NumericError("initialization produced an empty component")
    num_components = members.shape[0]
    p_bar = agg.first_moment / members[:, None]
    q_bar = agg.second_moment / members[:, None]
    num = p_bar - q_bar
    den = q_bar - p_bar * p_bar
    alphas = np.empty_like(p_bar)
    for k in range(num_components):
        usable = den[k] > 0.0
        if cfg.init_scale_mode == "first_category":
            usable_idx = np.flatnonzero(usable)
            scale = num[k, usable_idx[0]] / den[k, usable_idx[0]] if usable_idx.size else 1.0
        else:
            scale = np.mean(num[k, usable] / den[k, usable]) if usable.any() else 1.0
        alphas[k] = scale * p_bar[k]
    alphas = np.maximum(alphas, cfg.alpha_floor)
    count_dists = _dists_from_hist(agg.count_hist, members)
    weights = np.full(num_components, 1.0 / num_components)
    return MdmParams(weights=weights, alphas=alphas, count_dists=count_dists)


def _dists_from_hist(
    count_hist: dict[int, np.ndarray], totals: np.ndarray
) -> tuple[dict[int, float], ...]:
    dists: list[dict[int, float]] = []
    for k in range(totals.shape[0]):
        dist = {}
        for n, vec in count_hist.items():
            p = float(vec[k]) / float(totals[k])
            if p > 0.0:
                dist[int(n)] = p
        dists.append(dist)
    return tuple(dists)


def init_params(pop: ClientPopulation, cfg: InferenceConfig, rng: RngHandle) -> MdmParams:
    """Moment-matching initialization over one sampled cohort.

    Assignment draws repeat (same cohort, fresh assignments) while any
    component ends up empty, up to cfg.max_init_retries attempts.
    """
    generator = rng.generator()
    cohort_size = cfg.init_cohort_size or pop.num_clients
    if cohort_size < cfg.n_components:
        raise ContractError(
            f"cohort of {cohort_size} cannot cover {cfg.n_components} components"
        )
    cohort = sample_cohort(pop.num_clients, cohort_size, generator)
    counts = pop.counts[cohort]
    ns = pop.ns[cohort]
    for _ in range(cfg.max_init_retries):
        assignments = generator.integers(0, cfg.n_components, size=cohort_size)
        if cfg.aggregation == "per_client":
            packets = [
                make_init_packet(pop.records[i], int(k), cfg.n_components)
                for i, k in zip(cohort, assignments)
            ]
            agg = secure_sum(packets)
        else:
            agg = compute_init_aggregate(counts, ns, assignments, cfg.n_components)
        if (np.asarray(agg.member_counts) > 0.0).all():
            return apply_init_aggregate(agg, cfg)
    raise NumericError(
        f"initialization left a component empty in {cfg.max_init_retries} attempts"
    )


# --- EM rounds --------------------------------------------------------------


def apply_em_aggregate(
    agg: EmAggregate, params: MdmParams, cfg: InferenceConfig
) -> MdmParams:
    """Server-side EM update from one summed round aggregate.

    Mixture weights are the mean responsibilities over contributing clients,
    renormalized; each live component's count distribution is its
    responsibility-weighted count histogram and its concentration takes one
    multiplicative fixed-point step. Dead components (responsibility mass
    under DEATH_THRESHOLD of the cohort) keep their previous concentration
    and count distribution.
    """
    if agg.cohort_size < 1:
        raise NumericError("no client in the cohort contributed to the round")
    resp_total = np.asarray(agg.resp_total, dtype=np.float64)
    tau = resp_total / float(agg.cohort_size)
    tau = tau / tau.sum()
    alive = resp_total >= DEATH_THRESHOLD * float(agg.cohort_size)
    safe_total = np.where(alive, resp_total, 1.0)
    safe_den = np.where(alive & (agg.alpha_den > 0.0), agg.alpha_den, 1.0)
    stepped = params.alphas * agg.alpha_num / safe_den[:, None]
    alphas = np.where(alive[:, None], stepped, params.alphas)
    alphas = np.maximum(alphas, cfg.alpha_floor)
    dists = []
    for k in range(params.num_components):
        if alive[k]:
            dist = {
                int(n): float(vec[k]) / float(safe_total[k])
                for n, vec in agg.count_hist.items()
                if float(vec[k]) > 0.0
            }
        else:
            dist = dict(params.count_dists[k])
        dists.append(dist)
    n_bound = max(params.n_bound, max(max(d) for d in dists))
    return MdmParams(weights=tau, alphas=alphas, count_dists=tuple(dists), n_bound=n_bound)


def _aggregate_round(
    pop: ClientPopulation, cohort: np.ndarray, params: MdmParams, cfg: InferenceConfig
) -> EmAggregate:
    """Collect one round's aggregate for a cohort, honoring the degeneracy policy."""
    counts = pop.counts[cohort].astype(np.float64)
    ns = pop.ns[cohort].astype(np.float64)
    if cfg.aggregation == "per_client":
        packets = []
        n_degenerate = 0
        for i in cohort:
            try:
                packets.append(make_em_packet(pop.records[i], params))
            except DegenerateClientError:
                n_degenerate += 1
        if n_degenerate and cfg.degenerate_policy == "error":
            raise DegenerateClientError(
                f"{n_degenerate} cohort client(s) unsupported by every component"
            )
        if not packets:
            raise NumericError("no client in the cohort contributed to the round")
        return secure_sum(packets)
    agg, degenerate = compute_em_aggregate(counts, ns, params)
    if degenerate.any() and cfg.degenerate_policy == "error":
        raise DegenerateClientError(
            f"{int(degenerate.sum())} cohort client(s) unsupported by every component"
        )
    return agg


def em_round(
    pop: ClientPopulation, params: MdmParams, cfg: InferenceConfig, rng: RngHandle
) -> MdmParams:
    """One generalized-EM round over a freshly sampled cohort."""
    generator = rng.generator()
    cohort = sample_cohort(pop.num_clients, cfg.em_cohort_size or pop.num_clients, generator)
    agg = _aggregate_round(pop, cohort, params, cfg)
    return apply_em_aggregate(agg, params, cfg)


def theorem1_update(records, params: MdmParams, cfg: InferenceConfig | None = None) -> MdmParams:
    """Full-batch EM update over every record, in order, with no sampling.

    This is the deterministic reference step: a cohort equal to the whole
    population makes em_round compute exactly this update.
    """
    pop = records if isinstance(records, ClientPopulation) else ClientPopulation(records)
    if cfg is None:
        cfg = InferenceConfig(n_components=params.num_components, n_rounds=0)
    cohort = np.arange(pop.num_clients, dtype=np.int64)
    agg = _aggregate_round(pop, cohort, params, cfg)
    return apply_em_aggregate(agg, params, cfg)


# --- full runs --------------------------------------------------------------


def fit(
    pop: ClientPopulation, cfg: InferenceConfig, rng: RngHandle
) -> tuple[MdmParams, InferenceTrace]:
    """Initialize, run up to cfg.n_rounds EM rounds, and record the trace.

    Round t draws from rng.child(t + 1); initialization uses rng.child(0).
    With early stopping enabled, the run ends once the relative change in
    full-population log likelihood stays below early_stop_tol for
    early_stop_patience consecutive rounds.
    """
    track = cfg.track_loglik or cfg.early_stop_tol is not None
    params = init_params(pop, cfg, rng.child(0))
    history = [params]
    logliks = [log_likelihood(pop.records, params)] if track else None
    quiet_rounds = 0
    for t in range(cfg.n_rounds):
        params = em_round(pop, params, cfg, rng.child(t + 1))
        history.append(params)
        if not track:
            continue
        logliks.append(log_likelihood(pop.records, params))
        if cfg.early_stop_tol is None:
            continue
        prev, curr = logliks[-2], logliks[-1]
        if np.isfinite(prev) and np.isfinite(curr):
            change = abs(curr - prev) / max(1.0, abs(prev))
            quiet_rounds = quiet_rounds + 1 if change < cfg.early_stop_tol else 0
            if quiet_rounds >= cfg.early_stop_patience:
                break
        else:
            quiet_rounds = 0
    trace = InferenceTrace(
        params_history=tuple(history),
        loglik_history=tuple(logliks) if track else None,
    )
    return params, trace
