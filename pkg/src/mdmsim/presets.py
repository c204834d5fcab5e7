"""Embedded ground-truth parameter presets.

One three-component reference setting over five categories, plus nine
synthetic-benchmark settings over ten categories arranged as a grid of
heterogeneity level (low, medium, high) by component count (1, 2, 3). Each
K=3 setting reuses its family's earlier concentration rows plus one new row.

The published low-heterogeneity K=3 table omits its third concentration
row; following the construction pattern of the other families, the missing
row is the low-heterogeneity K=1 row (all ones).

Presets carry a point-mass sample-count distribution; the count itself is a
parameter because the benchmark tables do not fix one.
"""

from __future__ import annotations

from .errors import ContractError
from .model import MdmParams

__all__ = ["get_preset", "preset_names"]

_REFERENCE = {
    "tau": [0.2, 0.5, 0.3],
    "alpha": [
        [0.1, 0.2, 0.1, 0.3, 0.1],
        [1.0, 4.0, 1.0, 2.0, 0.5],
        [10.0, 5.0, 3.0, 2.0, 30.0],
    ],
}

_LOW_1 = [1.0] * 10
_LOW_2A = [0.5] * 10
_LOW_2B = [2.5] * 10
_MEDIUM_1 = [0.1, 0.2, 0.6, 1.0, 2.0, 0.1, 1.0, 2.0, 0.5, 0.5]
_MEDIUM_2B = [2.5, 2.6, 2.7, 2.8, 3.0, 2.5, 2.0, 3.0, 1.0, 0.9]
_MEDIUM_3A = [5.0, 4.0, 5.0, 1.0, 1.0, 1.0, 5.0, 4.0, 5.0, 1.0]
_HIGH_1 = [0.1, 0.2, 0.15, 0.18, 0.1, 0.05, 0.08, 0.4, 0.2, 0.12]
_HIGH_2B = [2.5, 2.6, 2.0, 3.2, 1.5, 0.9, 0.8, 1.3, 3.1, 2.4]
_HIGH_3A = [5.0, 5.0, 0.2, 0.2, 3.1, 3.0, 3.2, 0.8, 0.9, 5.0]

_BENCHMARK = {
    ("low", 1): {"tau": [1.0], "alpha": [_LOW_1]},
    ("low", 2): {"tau": [0.5, 0.5], "alpha": [_LOW_2A, _LOW_2B]},
    ("low", 3): {"tau": [0.333, 0.334, 0.333], "alpha": [_LOW_2B, _LOW_2A, _LOW_1]},
    ("medium", 1): {"tau": [1.0], "alpha": [_MEDIUM_1]},
    ("medium", 2): {"tau": [0.4, 0.6], "alpha": [_MEDIUM_1, _MEDIUM_2B]},
    ("medium", 3): {"tau": [0.5, 0.2, 0.3], "alpha": [_MEDIUM_3A, _MEDIUM_1, _MEDIUM_2B]},
    ("high", 1): {"tau": [1.0], "alpha": [_HIGH_1]},
    ("high", 2): {"tau": [0.1, 0.9], "alpha": [_HIGH_1, _HIGH_2B]},
    ("high", 3): {"tau": [0.8, 0.05, 0.15], "alpha": [_HIGH_3A, _HIGH_1, _HIGH_2B]},
}


def preset_names() -> tuple[str, ...]:
    names = ["appendixA"]
    names += [f"table1:{het}:{k}" for het, k in _BENCHMARK]
    return tuple(names)


def _build(tau, alpha, n_per_component: int) -> MdmParams:
    point_mass = {int(n_per_component): 1.0}
    return MdmParams(
        weights=tau,
        alphas=alpha,
        count_dists=tuple(dict(point_mass) for _ in tau),
        n_bound=int(n_per_component),
    )


def get_preset(name: str, n_per_component: int = 100) -> MdmParams:
    """Look up a preset by token.

    Tokens: "appendixA" for the five-category reference setting, or
    "table1:<low|medium|high>:<1|2|3>" for the benchmark grid. Every preset
    puts a point mass at n_per_component on each component's sample count.
    """
    if int(n_per_component) != n_per_component or n_per_component < 1:
        raise ContractError(
            f"n_per_component must be a positive integer, got {n_per_component!r}"
        )
    if name == "appendixA":
        return _build(_REFERENCE["tau"], _REFERENCE["alpha"], n_per_component)
    parts = name.split(":")
    if len(parts) == 3 and parts[0] == "table1":
        try:
            key = (parts[1], int(parts[2]))
        except ValueError:
            key = None
        if key in _BENCHMARK:
            entry = _BENCHMARK[key]
            return _build(entry["tau"], entry["alpha"], n_per_component)
    raise ContractError(
        f"unknown preset {name!r}; valid presets: {', '.join(preset_names())}"
    )
