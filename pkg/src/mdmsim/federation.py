"""Federated data structures and aggregation.

Clients emit fixed-shape packets; the server only ever consumes their sums.
Two aggregation routes produce those sums: a per-client route that literally
builds one packet per client and adds them in cohort order (canonical,
bit-reproducible), and a fused route that computes the same totals with
vectorized reductions. The fused route is the fast default; tests hold the
two routes together.

Packet contents never include raw histograms. The init packet carries the
client's first and second moment rows placed in its assigned component; the
EM packet carries responsibility-weighted sufficient statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateClientError
from .model import ClientRecord, MdmParams, responsibilities_matrix
from .special import digamma

__all__ = [
    "ClientPopulation",
    "InitPacket",
    "EmPacket",
    "InitAggregate",
    "EmAggregate",
    "make_init_packet",
    "make_em_packet",
    "secure_sum",
    "sample_cohort",
    "compute_init_aggregate",
    "compute_em_aggregate",
]


class ClientPopulation:
    """Immutable collection of client records with stacked count arrays."""

    def __init__(self, records) -> None:
        records = tuple(records)
        if not records:
            raise ContractError("a population must contain at least one client")
        num_categories = records[0].num_categories
        for rec in records:
            if not isinstance(rec, ClientRecord):
                raise ContractError(f"expected ClientRecord, got {type(rec).__name__}")
            if rec.num_categories != num_categories:
                raise ContractError("all clients must share the same category count")
        self._records = records
        counts = np.stack([rec.counts for rec in records]).astype(np.int64)
        ns = np.array([rec.n for rec in records], dtype=np.int64)
        counts.flags.writeable = False
        ns.flags.writeable = False
        self._counts = counts
        self._ns = ns

    @property
    def records(self) -> tuple[ClientRecord, ...]:
        return self._records

    @property
    def counts(self) -> np.ndarray:
        """Stacked histograms, shape (num_clients, num_categories)."""
        return self._counts

    @property
    def ns(self) -> np.ndarray:
        return self._ns

    @property
    def num_clients(self) -> int:
        return len(self._records)

    @property
    def num_categories(self) -> int:
        return int(self._counts.shape[1])

    @property
    def max_n(self) -> int:
        return int(self._ns.max())

    def __len__(self) -> int:
        return len(self._records)

    def subset(self, indices) -> "ClientPopulation":
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 1 or indices.size == 0:
            raise ContractError("subset requires a non-empty 1-D index vector")
        if (indices < 0).any() or (indices >= self.num_clients).any():
            raise ContractError("subset index out of range")
        return ClientPopulation(self._records[i] for i in indices)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self._records:
                c = ",".join(str(int(v)) for v in rec.counts)
                fh.write('{"c":[%s],"n":%d}\n' % (c, rec.n))

    @classmethod
    def from_jsonl(cls, path) -> "ClientPopulation":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                    rec = ClientRecord(
                        counts=np.asarray(doc["c"], dtype=np.int64), n=int(doc["n"])
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ContractError(f"{path}:{lineno}: bad client line: {exc}") from exc
                records.append(rec)
        if not records:
            raise ContractError(f"{path}: no client records found")
        return cls(records)


# --- packets ----------------------------------------------------------------


@dataclass(frozen=True)
class InitPacket:
    """Per-client contribution to the initialization statistics.

    count_hist maps the client's sample count to a one-hot component vector;
    first_moment and second_moment place c/n and its elementwise square in
    the assigned component's row, zeros elsewhere.
    """

    count_hist: dict[int, np.ndarray]
    first_moment: np.ndarray
    second_moment: np.ndarray


@dataclass(frozen=True)
class EmPacket:
    """Per-client contribution to one EM round.

    resp is the client's posterior over components; count_hist maps its
    sample count to resp; alpha_num and alpha_den are the responsibility-
    weighted digamma statistics driving the concentration update.
    """

    resp: np.ndarray
    count_hist: dict[int, np.ndarray]
    alpha_num: np.ndarray
    alpha_den: np.ndarray


@dataclass(frozen=True)
class InitAggregate:
    """Cohort sum of init packets plus the component membership counts."""

    count_hist: dict[int, np.ndarray]
    first_moment: np.ndarray
    second_moment: np.ndarray
    member_counts: np.ndarray
    cohort_size: int


@dataclass(frozen=True)
class EmAggregate:
    """Cohort sum of EM packets over the contributing (non-degenerate) clients."""

    resp_total: np.ndarray
    count_hist: dict[int, np.ndarray]
    alpha_num: np.ndarray
    alpha_den: np.ndarray
    cohort_size: int


def make_init_packet(rec: ClientRecord, component: int, num_components: int) -> InitPacket:
    """Build the one-hot moment packet for a client assigned to a component."""
    if not 0 <= component < num_components:
        raise ContractError(f"component {component} out of range for K={num_components}")
    onehot = np.zeros(num_components)
    onehot[component] = 1.0
    ratio = rec.counts / rec.n
    first = np.zeros((num_components, rec.num_categories))
    second = np.zeros_like(first)
    first[component] = ratio
    second[component] = ratio * ratio
    return InitPacket(count_hist={rec.n: onehot}, first_moment=first, second_moment=second)


def make_em_packet(rec: ClientRecord, params: MdmParams) -> EmPacket:
    """Build the responsibility-weighted statistics packet for one client.

    Raises DegenerateClientError when the model assigns the client zero
    probability under every component; the caller decides the policy.
    """
    counts = rec.counts.astype(np.float64)[None, :]
    ns = np.array([float(rec.n)])
    resp, degenerate = responsibilities_matrix(counts, ns, params)
    if degenerate[0]:
        raise DegenerateClientError(
            f"no component assigns positive probability to a client with n={rec.n}"
        )
    resp = resp[0]
    alphas = params.alphas
    alpha_totals = alphas.sum(axis=1)
    cat_term = digamma(counts[0][None, :] + alphas) - digamma(alphas)
    tot_term = digamma(rec.n + alpha_totals) - digamma(alpha_totals)
    return EmPacket(
        resp=resp,
        count_hist={rec.n: resp.copy()},
        alpha_num=resp[:, None] * cat_term,
        alpha_den=resp * tot_term,
    )


# --- aggregation ------------------------------------------------------------


def _check_matrix(name: str, value: np.ndarray, shape: tuple) -> np.ndarray:
    value = np.asarray(value, dtype=np.float64)
    if value.shape != shape:
        raise ContractError(f"packet field {name} has shape {value.shape}, expected {shape}")
    if not np.all(np.isfinite(value)):
        raise ContractError(f"packet field {name} contains non-finite values")
    return value


def _sum_count_hists(hists, num_components: int) -> dict[int, np.ndarray]:
    total: dict[int, np.ndarray] = {}
    for hist in hists:
        for n, vec in hist.items():
            vec = _check_matrix(f"count_hist[{n}]", vec, (num_components,))
            if n in total:
                total[n] = total[n] + vec
            else:
                total[n] = vec.copy()
    return dict(sorted(total.items()))


def secure_sum(packets):
    """Sum a homogeneous list of packets in the order given.

    Models a secure-aggregation round: the output reveals only totals. The
    result is an InitAggregate or EmAggregate matching the packet type.
    Summation order is the list order, so a sorted cohort gives
    bit-reproducible aggregates.
    """
    packets = list(packets)
    if not packets:
        raise ContractError("secure_sum requires at least one packet")
    kinds = {type(p) for p in packets}
    if len(kinds) != 1 or kinds.pop() not in (InitPacket, EmPacket):
        raise ContractError("secure_sum requires a homogeneous list of packets")

    if isinstance(packets[0], InitPacket):
        k, c = packets[0].first_moment.shape
        first = np.zeros((k, c))
        second = np.zeros((k, c))
        for p in packets:
            first = first + _check_matrix("first_moment", p.first_moment, (k, c))
            second = second + _check_matrix("second_moment", p.second_moment, (k, c))
        count_hist = _sum_count_hists((p.count_hist for p in packets), k)
        members = np.zeros(k)
        for vec in count_hist.values():
            members = members + vec
        return InitAggregate(
            count_hist=count_hist,
            first_moment=first,
            second_moment=second,
            member_counts=members,
            cohort_size=len(packets),
        )

    k, c = packets[0].alpha_num.shape
    resp_total = np.zeros(k)
    alpha_num = np.zeros((k, c))
    alpha_den = np.zeros(k)
    for p in packets:
        resp_total = resp_total + _check_matrix("resp", p.resp, (k,))
        alpha_num = alpha_num + _check_matrix("alpha_num", p.alpha_num, (k, c))
        alpha_den = alpha_den + _check_matrix("alpha_den", p.alpha_den, (k,))
    count_hist = _sum_count_hists((p.count_hist for p in packets), k)
    return EmAggregate(
        resp_total=resp_total,
        count_hist=count_hist,
        alpha_num=alpha_num,
        alpha_den=alpha_den,
        cohort_size=len(packets),
    )


def sample_cohort(
    num_clients: int, cohort_size: int, generator: np.random.Generator
) -> np.ndarray:
    """Uniform without-replacement cohort, returned in ascending index order."""
    if cohort_size < 1:
        raise ContractError(f"cohort_size must be positive, got {cohort_size}")
    if cohort_size > num_clients:
        raise ContractError(
            f"cohort_size {cohort_size} exceeds population size {num_clients}"
        )
    picked = generator.choice(num_clients, size=cohort_size, replace=False)
    return np.sort(picked.astype(np.int64))


def compute_init_aggregate(
    counts: np.ndarray, ns: np.ndarray, assignments: np.ndarray, num_components: int
) -> InitAggregate:
    """Fused init aggregation over a cohort's stacked arrays.

    Accumulation visits clients in row order, so the result is exactly equal
    to summing the corresponding packets in the same order.
    """
    counts = np.asarray(counts, dtype=np.float64)
    ns = np.asarray(ns, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    b = counts.shape[0]
    if ns.shape != (b,) or assignments.shape != (b,) or b == 0:
        raise ContractError("counts, ns and assignments must be non-empty and aligned")
    if (assignments < 0).any() or (assignments >= num_components).any():
        raise ContractError("component assignment out of range")
    c = counts.shape[1]
    ratio = counts / ns[:, None]
    first = np.zeros((num_components, c))
    second = np.zeros((num_components, c))
    np.add.at(first, assignments, ratio)
    np.add.at(second, assignments, ratio * ratio)
    unique_ns, inverse = np.unique(ns.astype(np.int64), return_inverse=True)
    hist = np.zeros((unique_ns.shape[0], num_components))
    np.add.at(hist, (inverse, assignments), 1.0)
    count_hist = {int(n): hist[j].copy() for j, n in enumerate(unique_ns)}
    members = np.bincount(assignments, minlength=num_components).astype(np.float64)
    return InitAggregate(
        count_hist=count_hist,
        first_moment=first,
        second_moment=second,
        member_counts=members,
        cohort_size=b,
    )


def compute_em_aggregate(
    counts: np.ndarray, ns: np.ndarray, params: MdmParams
) -> tuple[EmAggregate, np.ndarray]:
    """Fused EM aggregation over a cohort's stacked arrays.

    Returns the aggregate over non-degenerate clients together with the
    per-client degenerate mask; degenerate clients contribute nothing and do
    not count toward cohort_size. The caller enforces its degeneracy policy.
    """
    counts = np.asarray(counts, dtype=np.float64)
    ns = np.asarray(ns, dtype=np.float64)
    b = counts.shape[0]
    if b == 0 or ns.shape != (b,):
        raise ContractError("counts and ns must be non-empty and aligned")
    resp, degenerate = responsibilities_matrix(counts, ns, params)
    keep = ~degenerate
    resp = resp[keep]
    counts = counts[keep]
    ns = ns[keep]
    k = params.num_components
    if resp.shape[0] == 0:
        empty = np.zeros(k)
        return (
            EmAggregate(
                resp_total=empty,
                count_hist={},
                alpha_num=np.zeros((k, params.num_categories)),
                alpha_den=empty.copy(),
                cohort_size=0,
            ),
            degenerate,
        )
    alphas = params.alphas
    alpha_totals = alphas.sum(axis=1)
    cat_term = digamma(counts[:, None, :] + alphas[None, :, :]) - digamma(alphas)[None, :, :]
    tot_term = digamma(ns[:, None] + alpha_totals[None, :]) - digamma(alpha_totals)[None, :]
    alpha_num = np.einsum("bk,bkc->kc", resp, cat_term)
    alpha_den = (resp * tot_term).sum(axis=0)
    unique_ns, inverse = np.unique(ns.astype(np.int64), return_inverse=True)
    hist = np.zeros((unique_ns.shape[0], k))
    np.add.at(hist, inverse, resp)
    count_hist = {int(n): hist[j].copy() for j, n in enumerate(unique_ns)}
    return (
        EmAggregate(
            resp_total=resp.sum(axis=0),
            count_hist=count_hist,
            alpha_num=alpha_num,
            alpha_den=alpha_den,
            cohort_size=int(resp.shape[0]),
        ),
        degenerate,
    )
