"""Partitioning centralized data into simulated federated clients.

Each simulated client gets a target category histogram and a concrete set of
pool row indices realizing it exactly. Rows are drawn without replacement
within a client and independently across clients; when a pool bucket is
smaller than a client's demand for that category, the draw falls back to
with-replacement and the client records a per-category replacement flag.

Three generators: draws from learned mixture parameters, a fully-IID
baseline that ignores per-client structure, and a conditionally-IID oracle
that clones each true client's histogram (test-only: it requires clients to
reveal their histograms).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, PartitionError
from .federation import ClientPopulation
from .ingestion import CentralPool
from .model import MdmParams
from .rng import RngHandle
from .sampling import sample_client, sample_count

__all__ = [
    "SimulatedClient",
    "PartitionPlan",
    "partition_mdm",
    "partition_fully_iid",
    "partition_conditionally_iid",
    "export_histograms",
]


@dataclass(frozen=True)
class SimulatedClient:
    """One simulated client: target histogram and its realizing row indices.

    rows maps each category with positive target count to the assigned pool
    row indices; replacement flags the categories whose rows were drawn with
    replacement because the pool bucket was too small.
    """

    target: np.ndarray
    rows: dict[int, np.ndarray]
    replacement: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        target = np.asarray(self.target, dtype=np.int64)
        if target.ndim != 1 or (target < 0).any() or target.sum() < 1:
            raise ContractError("target must be a 1-D histogram with positive total")
        rows = {int(l): np.asarray(idx, dtype=np.int64) for l, idx in self.rows.items()}
        for l, idx in rows.items():
            if not 0 <= l < target.shape[0]:
                raise ContractError(f"row group category {l} out of range")
            if idx.shape[0] != target[l]:
                raise ContractError(
                    f"category {l} holds {idx.shape[0]} rows but target is {target[l]}"
                )
            if l not in self.replacement and np.unique(idx).shape[0] != idx.shape[0]:
                raise ContractError(f"category {l} repeats rows without a replacement flag")
        if any(target[l] > 0 and l not in rows for l in range(target.shape[0])):
            raise ContractError("every positive target category needs assigned rows")
        target.flags.writeable = False
        for idx in rows.values():
            idx.flags.writeable = False
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "replacement", frozenset(int(l) for l in self.replacement))

    @property
    def n(self) -> int:
        return int(self.target.sum())


@dataclass(frozen=True)
class PartitionPlan:
    """A full set of simulated clients plus how they were generated.

    The JSONL serialization carries only the client lines; generator and
    seed provenance live in the run manifest.
    """

    clients: tuple[SimulatedClient, ...]
    generator: str | None = None
    seed: int | None = None
    stream: int | None = None

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for client in self.clients:
                doc = {
                    "target_c": [int(v) for v in client.target],
                    "rows": {
                        str(l): [int(r) for r in idx] for l, idx in client.rows.items()
                    },
                }
                if client.replacement:
                    doc["replacement"] = {str(l): True for l in sorted(client.replacement)}
                fh.write(json.dumps(doc, separators=(",", ":")) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "PartitionPlan":
        clients = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    doc = json.loads(line)
                    client = SimulatedClient(
                        target=np.asarray(doc["target_c"], dtype=np.int64),
                        rows={int(l): np.asarray(idx, dtype=np.int64)
                              for l, idx in doc["rows"].items()},
                        replacement=frozenset(
                            int(l) for l, on in doc.get("replacement", {}).items() if on
                        ),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ContractError(f"{path}:{lineno}: bad plan line: {exc}") from exc
                clients.append(client)
        if not clients:
            raise ContractError(f"{path}: no simulated clients found")
        return cls(clients=tuple(clients))


def _draw_rows_for_target(
    pool: CentralPool, target: np.ndarray, generator: np.random.Generator
) -> tuple[dict[int, np.ndarray], frozenset[int]]:
    """Realize one target histogram from the pool's category buckets."""
    rows: dict[int, np.ndarray] = {}
    flagged = []
    for l in range(target.shape[0]):
        need = int(target[l])
        if need == 0:
            continue
        bucket = pool.buckets.get(l)
        if bucket is None or bucket.shape[0] == 0:
            raise PartitionError(f"pool has no rows in category {l} but {need} are needed")
        if bucket.shape[0] >= need:
            picked = generator.choice(bucket.shape[0], size=need, replace=False)
        else:
            picked = generator.choice(bucket.shape[0], size=need, replace=True)
            flagged.append(l)
        rows[l] = bucket[picked]
    return rows, frozenset(flagged)


def partition_mdm(
    pool: CentralPool, params: MdmParams, num_clients: int, rng: RngHandle
) -> PartitionPlan:
    """Simulate clients whose histograms follow the learned mixture.

    Client i draws its (histogram, count) via sample_client from
    rng.child(i), then realizes the histogram from the pool.
    """
    if params.num_categories != pool.num_categories:
        raise ContractError(
            f"model has {params.num_categories} categories, pool has {pool.num_categories}"
        )
    if int(num_clients) != num_clients or num_clients < 1:
        raise ContractError(f"num_clients must be a positive integer, got {num_clients!r}")
    clients = []
    for i in range(int(num_clients)):
        generator = rng.child(i).generator()
        rec, _ = sample_client(params, generator)
        rows, flagged = _draw_rows_for_target(pool, rec.counts, generator)
        clients.append(SimulatedClient(target=rec.counts, rows=rows, replacement=flagged))
    return PartitionPlan(
        clients=tuple(clients), generator="mdm", seed=rng.seed, stream=rng.stream
    )


def partition_fully_iid(
    pool: CentralPool, n_distribution: dict, num_clients: int, rng: RngHandle
) -> PartitionPlan:
    """Baseline: each client is a uniform without-replacement draw from the pool.

    Only the per-client sample count follows a learned distribution; the
    target histogram is whatever the uniform draw realizes.
    """
    if int(num_clients) != num_clients or num_clients < 1:
        raise ContractError(f"num_clients must be a positive integer, got {num_clients!r}")
    clients = []
    for i in range(int(num_clients)):
        generator = rng.child(i).generator()
        n = sample_count(n_distribution, generator)
        if n > pool.n_rows:
            raise PartitionError(f"client needs {n} rows but the pool has {pool.n_rows}")
        picked = generator.choice(pool.n_rows, size=n, replace=False)
        cats = pool.row_categories[picked]
        target = np.bincount(cats, minlength=pool.num_categories).astype(np.int64)
        rows = {int(l): picked[cats == l] for l in np.unique(cats)}
        clients.append(SimulatedClient(target=target, rows=rows))
    return PartitionPlan(
        clients=tuple(clients), generator="fully_iid", seed=rng.seed, stream=rng.stream
    )


def partition_conditionally_iid(
    pool: CentralPool, true_pop: ClientPopulation, rng: RngHandle
) -> PartitionPlan:
    """Oracle: clone every true client's histogram from the pool.

    One simulated client per true client, same target histogram and sample
    count. Requires the true histograms, so it is a comparison oracle, not a
    private procedure.
    """
    if true_pop.num_categories != pool.num_categories:
        raise ContractError(
            f"population has {true_pop.num_categories} categories, pool has {pool.num_categories}"
        )
    clients = []
    for i, rec in enumerate(true_pop.records):
        generator = rng.child(i).generator()
        rows, flagged = _draw_rows_for_target(pool, rec.counts, generator)
        clients.append(SimulatedClient(target=rec.counts, rows=rows, replacement=flagged))
    return PartitionPlan(
        clients=tuple(clients),
        generator="conditionally_iid",
        seed=rng.seed,
        stream=rng.stream,
    )


def export_histograms(source) -> np.ndarray:
    """Normalized per-client histograms (rows c/n) from a plan or population."""
    if isinstance(source, PartitionPlan):
        rows = [client.target / client.n for client in source.clients]
    elif isinstance(source, ClientPopulation):
        rows = [rec.counts / rec.n for rec in source.records]
    else:
        raise ContractError(
            f"expected PartitionPlan or ClientPopulation, got {type(source).__name__}"
        )
    return np.stack(rows)
