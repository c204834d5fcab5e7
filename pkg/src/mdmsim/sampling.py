"""Sampling from the mixture model.

Dirichlet draws go through gamma variates so the code path is explicit and
identical across platforms; client generation derives one child stream per
client, which makes any client's record reproducible without generating the
ones before it.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericError
from .model import ClientRecord, MdmParams
from .rng import RngHandle

__all__ = [
    "sample_dirichlet",
    "sample_multinomial",
    "sample_count",
    "sample_client",
    "gen_synthetic_federation",
]

_MAX_ZERO_RETRIES = 100


def sample_dirichlet(alpha, generator: np.random.Generator) -> np.ndarray:
    """One draw from Dirichlet(alpha) via normalized gamma variates."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size == 0:
        raise DomainError("alpha must be a non-empty 1-D vector")
    if not np.all(np.isfinite(alpha)) or (alpha <= 0.0).any():
        raise DomainError("alpha must be finite and strictly positive")
    # Tiny concentrations can underflow every gamma draw to zero; redraw
    # rather than return NaN.
    for _ in range(_MAX_ZERO_RETRIES):
        gammas = generator.gamma(shape=alpha)
        total = gammas.sum()
        if total > 0.0:
            return gammas / total
    raise NumericError(f"gamma draws underflowed for alpha={alpha!r}")


def sample_multinomial(n: int, probs, generator: np.random.Generator) -> np.ndarray:
    """One multinomial histogram; probs are renormalized before drawing."""
    if int(n) != n or n < 0:
        raise DomainError(f"n must be a non-negative integer, got {n!r}")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise DomainError("probs must be a non-empty 1-D vector")
    if not np.all(np.isfinite(probs)) or (probs < 0.0).any():
        raise DomainError("probs must be finite and non-negative")
    total = probs.sum()
    if total <= 0.0:
        raise DomainError("probs must have positive mass")
    return generator.multinomial(int(n), probs / total).astype(np.int64)


def sample_count(dist: dict[int, float], generator: np.random.Generator) -> int:
    """One draw from a sparse sample-count distribution {count: probability}."""
    if not dist:
        raise DomainError("sample-count distribution has empty support")
    support = np.fromiter(dist.keys(), dtype=np.int64)
    probs = np.fromiter(dist.values(), dtype=np.float64)
    if not np.all(np.isfinite(probs)) or (probs < 0.0).any() or probs.sum() <= 0.0:
        raise DomainError("sample-count probabilities must be non-negative with positive mass")
    idx = generator.choice(support.shape[0], p=probs / probs.sum())
    return int(support[idx])


def sample_client(
    params: MdmParams, generator: np.random.Generator
) -> tuple[ClientRecord, int]:
    """Draw one client: component, sample count, category distribution, histogram.

    Returns the record together with the component index that produced it.
    """
    k = int(generator.choice(params.num_components, p=params.weights))
    n = sample_count(params.count_dists[k], generator)
    theta = sample_dirichlet(params.alphas[k], generator)
    counts = sample_multinomial(n, theta, generator)
    return ClientRecord(counts=counts, n=n), k


def gen_synthetic_federation(
    params: MdmParams, num_clients: int, rng: RngHandle
) -> tuple[list[ClientRecord], np.ndarray]:
    """Generate a population of clients plus their true component labels.

    Client i draws from rng.child(i), so records are independent of
    num_clients and of each other.
    """
    if int(num_clients) != num_clients or num_clients < 1:
        raise DomainError(f"num_clients must be a positive integer, got {num_clients!r}")
    records: list[ClientRecord] = []
    labels = np.empty(int(num_clients), dtype=np.int64)
    for i in range(int(num_clients)):
        rec, k = sample_client(params, rng.child(i).generator())
        records.append(rec)
        labels[i] = k
    return records, labels
