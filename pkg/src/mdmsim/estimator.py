"""Scikit-learn style front end for the mixture estimator.

DirichletMultinomialMixture wraps the functional pipeline in the familiar
fit / predict / score shape: X is a client-by-category count matrix, one row
per client. The functional API underneath stays the source of truth; this
class only validates matrices, shuttles them into populations, and exposes
the fitted parameters as attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ContractError
from .federation import ClientPopulation
from .inference import InferenceConfig
from .inference import fit as fit_params
from .model import ClientRecord, MdmParams, log_mdm_pmf_matrix, responsibilities_matrix
from .rng import RngHandle
from .sampling import sample_client

__all__ = ["DirichletMultinomialMixture", "validate_count_matrix"]


def validate_count_matrix(X) -> np.ndarray:
    """Check X is a 2-D non-negative integer count matrix with positive row sums."""
    X = check_array(X, dtype="numeric", ensure_2d=True)
    as_int = X.astype(np.int64)
    if not np.array_equal(as_int, X):
        raise ContractError("X must contain integer counts")
    if (as_int < 0).any():
        raise ContractError("X must be non-negative")
    if (as_int.sum(axis=1) < 1).any():
        raise ContractError("every row of X needs at least one observation")
    return as_int


def _population_from_matrix(X: np.ndarray) -> ClientPopulation:
    return ClientPopulation(
        ClientRecord(counts=row, n=int(row.sum())) for row in X
    )


class DirichletMultinomialMixture(BaseEstimator):
    """Mixture of Dirichlet-multinomials fitted by federated generalized EM.

    Parameters mirror InferenceConfig; random_state and stream identify the
    reproducible randomness source. After fit the model exposes weights_,
    alphas_, count_probs_ and the full params_ / trace_ objects.
    """

    def __init__(
        self,
        n_components: int = 1,
        n_rounds: int = 100,
        init_cohort_size: int | None = None,
        em_cohort_size: int | None = None,
        alpha_floor: float = 1e-8,
        degenerate_policy: str = "skip",
        init_scale_mode: str = "averaged",
        aggregation: str = "fused",
        random_state: int = 0,
        stream: int = 0,
    ) -> None:
        self.n_components = n_components
        self.n_rounds = n_rounds
        self.init_cohort_size = init_cohort_size
        self.em_cohort_size = em_cohort_size
        self.alpha_floor = alpha_floor
        self.degenerate_policy = degenerate_policy
        self.init_scale_mode = init_scale_mode
        self.aggregation = aggregation
        self.random_state = random_state
        self.stream = stream

    def _config(self) -> InferenceConfig:
        return InferenceConfig(
            n_components=self.n_components,
            n_rounds=self.n_rounds,
            init_cohort_size=self.init_cohort_size,
            em_cohort_size=self.em_cohort_size,
            alpha_floor=self.alpha_floor,
            degenerate_policy=self.degenerate_policy,
            init_scale_mode=self.init_scale_mode,
            aggregation=self.aggregation,
        )

    def _rng(self) -> RngHandle:
        return RngHandle(seed=self.random_state, stream=self.stream)

    def fit(self, X, y=None) -> "DirichletMultinomialMixture":
        """Estimate the mixture from a client count matrix. y is ignored."""
        X = validate_count_matrix(X)
        params, trace = fit_params(_population_from_matrix(X), self._config(), self._rng())
        self._set_fitted(params, trace)
        return self

    def _set_fitted(self, params: MdmParams, trace=None) -> None:
        self.params_ = params
        self.trace_ = trace
        self.weights_ = params.weights
        self.alphas_ = params.alphas
        self.count_probs_ = params.count_dists
        self.n_features_in_ = params.num_categories

    @classmethod
    def from_model(cls, params: MdmParams, **kwargs) -> "DirichletMultinomialMixture":
        """Wrap existing parameters as an already-fitted estimator."""
        est = cls(n_components=params.num_components, **kwargs)
        est._set_fitted(params)
        return est

    def _check_x(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = validate_count_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ContractError(
                f"X has {X.shape[1]} categories, model was fitted with {self.n_features_in_}"
            )
        return X

    def score_samples(self, X) -> np.ndarray:
        """Per-client log probability under the fitted mixture."""
        X = self._check_x(X)
        return log_mdm_pmf_matrix(
            X.astype(np.float64), X.sum(axis=1).astype(np.float64), self.params_
        )

    def score(self, X, y=None) -> float:
        """Mean per-client log probability."""
        return float(self.score_samples(X).mean())

    def predict_proba(self, X) -> np.ndarray:
        """Posterior component probabilities per client.

        Clients no component supports get an all-zero row.
        """
        X = self._check_x(X)
        resp, _ = responsibilities_matrix(
            X.astype(np.float64), X.sum(axis=1).astype(np.float64), self.params_
        )
        return resp

    def transform(self, X) -> np.ndarray:
        """Soft component assignments (alias of predict_proba)."""
        return self.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        """Most probable component per client; -1 for unsupported clients."""
        resp = self.predict_proba(X)
        labels = resp.argmax(axis=1).astype(np.int64)
        labels[resp.sum(axis=1) == 0.0] = -1
        return labels

    def sample(self, n_samples: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Draw clients from the fitted mixture; returns (counts, labels).

        Deterministic per estimator configuration: repeated calls return the
        same draws.
        """
        check_is_fitted(self, "params_")
        if int(n_samples) != n_samples or n_samples < 1:
            raise ContractError(f"n_samples must be a positive integer, got {n_samples!r}")
        handle = self._rng().child(int(self.n_rounds) + 2)
        X = np.zeros((int(n_samples), self.params_.num_categories), dtype=np.int64)
        labels = np.empty(int(n_samples), dtype=np.int64)
        for i in range(int(n_samples)):
            rec, k = sample_client(self.params_, handle.child(i).generator())
            X[i] = rec.counts
            labels[i] = k
        return X, labels
