"""Raw data ingestion: CSV records to client histograms and central pools.

Input is a CSV with a `feature` column and an optional `client_id` column,
plus a JSON sidecar describing how feature values map to category indices:
either an explicit categorical vocabulary or fixed-width numeric bins with
an open-ended last bin. The vocabulary is always explicit so the category
count stays stable between estimation and partitioning runs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .federation import ClientPopulation
from .model import ClientRecord

__all__ = [
    "BinningSpec",
    "bin_value",
    "RecordTable",
    "build_clients",
    "build_central_pool",
    "CentralPool",
]


@dataclass(frozen=True)
class BinningSpec:
    """Feature-to-category mapping.

    mode "categorical" uses an explicit token vocabulary; mode "fixed_width"
    bins numeric values into n_bins intervals of the given width starting at
    lower, with the last bin open-ended above.
    """

    mode: str
    vocabulary: tuple[str, ...] = ()
    width: float = 0.0
    lower: float = 0.0
    n_bins: int = 0

    def __post_init__(self) -> None:
        if self.mode == "categorical":
            vocab = tuple(str(t) for t in self.vocabulary)
            if not vocab:
                raise ContractError("categorical mode requires a non-empty vocabulary")
            if len(set(vocab)) != len(vocab):
                raise ContractError("vocabulary contains duplicate tokens")
            object.__setattr__(self, "vocabulary", vocab)
        elif self.mode == "fixed_width":
            if not (float(self.width) > 0.0) or not math.isfinite(self.width):
                raise ContractError(f"width must be positive, got {self.width!r}")
            if not math.isfinite(self.lower):
                raise ContractError(f"lower must be finite, got {self.lower!r}")
            if int(self.n_bins) != self.n_bins or self.n_bins < 2:
                raise ContractError(f"n_bins must be an integer >= 2, got {self.n_bins!r}")
        else:
            raise ContractError(f"mode must be 'categorical' or 'fixed_width', got {self.mode!r}")

    @property
    def num_categories(self) -> int:
        return len(self.vocabulary) if self.mode == "categorical" else int(self.n_bins)

    def category_of(self, raw: str) -> int:
        """Map one raw CSV cell to its category index."""
        if self.mode == "categorical":
            try:
                return self.vocabulary.index(raw)
            except ValueError:
                raise ContractError(f"unknown category token {raw!r}") from None
        try:
            x = float(raw)
        except ValueError:
            raise ContractError(f"non-numeric feature value {raw!r}") from None
        return bin_value(x, self)

    def to_json_file(self, path) -> None:
        if self.mode == "categorical":
            doc = {"mode": "categorical", "vocabulary": list(self.vocabulary)}
        else:
            doc = {
                "mode": "fixed_width",
                "width": self.width,
                "lower": self.lower,
                "n_bins": self.n_bins,
            }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_file(cls, path) -> "BinningSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid binning spec JSON: {exc}") from exc
        if not isinstance(doc, dict) or "mode" not in doc:
            raise ContractError(f"{path}: binning spec must be an object with a 'mode' field")
        mode = doc["mode"]
        if mode == "categorical":
            return cls(mode="categorical", vocabulary=tuple(doc.get("vocabulary", ())))
        if mode == "fixed_width":
            try:
                return cls(
                    mode="fixed_width",
                    width=float(doc["width"]),
                    lower=float(doc.get("lower", 0.0)),
                    n_bins=int(doc["n_bins"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ContractError(f"{path}: malformed fixed_width spec: {exc}") from exc
        raise ContractError(f"{path}: unknown binning mode {mode!r}")


def bin_value(x: float, spec: BinningSpec) -> int:
    """Fixed-width bin index of a numeric value; the last bin is open-ended.

    Intervals are half-open [a, b), so a value on an interior edge falls in
    the higher bin.
    """
    if spec.mode != "fixed_width":
        raise ContractError("bin_value requires a fixed_width spec")
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"feature value must be finite, got {x!r}")
    if x < spec.lower:
        raise DomainError(f"feature value {x} is below the lower bound {spec.lower}")
    return min(int(math.floor((x - spec.lower) / spec.width)), spec.n_bins - 1)


@dataclass(frozen=True)
class RecordTable:
    """Parsed raw rows: (stable row index, optional client id, raw feature cell)."""

    rows: tuple[tuple[int, str | None, str], ...]
    has_client_ids: bool

    @classmethod
    def from_csv(cls, path) -> "RecordTable":
        """Read a CSV with a mandatory `feature` column and optional `client_id`.

        Rows are indexed by data-row position, starting at 0. Missing or
        empty feature cells are rejected.
        """
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "feature" not in reader.fieldnames:
                raise ContractError(f"{path}: CSV must have a header with a 'feature' column")
            has_ids = "client_id" in reader.fieldnames
            rows = []
            for idx, record in enumerate(reader):
                feature = record.get("feature")
                if feature is None or feature.strip() == "":
                    raise ContractError(f"{path}: row {idx} has a missing feature value")
                client = record.get("client_id") if has_ids else None
                if has_ids and (client is None or client.strip() == ""):
                    raise ContractError(f"{path}: row {idx} has a missing client_id")
                rows.append((idx, client, feature.strip()))
        return cls(rows=tuple(rows), has_client_ids=has_ids)


def build_clients(table: RecordTable, spec: BinningSpec) -> ClientPopulation:
    """Group rows by client id into per-client category histograms.

    Clients appear in order of first appearance in the table.
    """
    if not table.rows:
        raise ContractError("cannot build clients from an empty table")
    if not table.has_client_ids:
        raise ContractError("building clients requires a client_id column")
    c = spec.num_categories
    histograms: dict[str, np.ndarray] = {}
    for _, client, raw in table.rows:
        hist = histograms.get(client)
        if hist is None:
            hist = histograms[client] = np.zeros(c, dtype=np.int64)
        hist[spec.category_of(raw)] += 1
    records = [
        ClientRecord(counts=hist, n=int(hist.sum())) for hist in histograms.values()
    ]
    return ClientPopulation(records)


class CentralPool:
    """Centralized rows grouped by category, ready for partitioning.

    buckets maps each non-empty category to the ascending row indices in it;
    marginal is the per-category row count.
    """

    def __init__(self, row_categories: np.ndarray, num_categories: int) -> None:
        row_categories = np.asarray(row_categories, dtype=np.int64)
        if row_categories.ndim != 1 or row_categories.size == 0:
            raise ContractError("a central pool requires at least one row")
        if (row_categories < 0).any() or (row_categories >= num_categories).any():
            raise ContractError("row category out of range")
        self.row_categories = row_categories
        self.num_categories = int(num_categories)
        self.buckets: dict[int, np.ndarray] = {
            int(l): np.flatnonzero(row_categories == l)
            for l in np.unique(row_categories)
        }
        self.marginal = np.bincount(row_categories, minlength=num_categories).astype(np.int64)

    @property
    def n_rows(self) -> int:
        return int(self.row_categories.shape[0])

    @classmethod
    def from_categories(cls, categories, num_categories: int) -> "CentralPool":
        return cls(np.asarray(list(categories), dtype=np.int64), num_categories)


def build_central_pool(table: RecordTable, spec: BinningSpec) -> CentralPool:
    """Bin every row of the table, ignoring client ids."""
    if not table.rows:
        raise ContractError("cannot build a pool from an empty table")
    cats = np.fromiter(
        (spec.category_of(raw) for _, _, raw in table.rows),
        dtype=np.int64,
        count=len(table.rows),
    )
    return CentralPool(cats, spec.num_categories)
