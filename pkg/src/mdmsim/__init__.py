"""Mixture-of-Dirichlet-multinomials estimation over federated histograms.

The package learns a mixture distribution over clients' per-category count
histograms through simulated federated generalized EM, selects the number of
mixture components by validation likelihood, and partitions centralized data
into simulated clients that follow the learned distribution.
"""

from .errors import (
    ContractError,
    DegenerateClientError,
    DomainError,
    MdmError,
    NumericError,
    PartitionError,
)
from .estimator import DirichletMultinomialMixture, validate_count_matrix
from .federation import (
    ClientPopulation,
    EmAggregate,
    EmPacket,
    InitAggregate,
    InitPacket,
    make_em_packet,
    make_init_packet,
    sample_cohort,
    secure_sum,
)
from .inference import (
    InferenceConfig,
    InferenceTrace,
    em_round,
    fit,
    init_params,
    theorem1_update,
)
from .ingestion import (
    BinningSpec,
    CentralPool,
    RecordTable,
    bin_value,
    build_central_pool,
    build_clients,
)
from .metrics import AlignedNmseReport, align_and_score, nmse
from .model import (
    LOG_ZERO,
    ClientRecord,
    MdmParams,
    log_dm_pmf,
    log_joint_pmf,
    log_likelihood,
    log_mdm_pmf,
    params_from_json,
    params_to_json,
    responsibilities,
)
from .partition import (
    PartitionPlan,
    SimulatedClient,
    export_histograms,
    partition_conditionally_iid,
    partition_fully_iid,
    partition_mdm,
)
from .presets import get_preset, preset_names
from .rng import RngHandle
from .sampling import (
    gen_synthetic_federation,
    sample_client,
    sample_count,
    sample_dirichlet,
    sample_multinomial,
)
from .selection import CandidateResult, KSelectionReport, choose_k, select_k
from .special import digamma, log_gamma

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "MdmError",
    "ContractError",
    "DomainError",
    "NumericError",
    "DegenerateClientError",
    "PartitionError",
    "RngHandle",
    "log_gamma",
    "digamma",
    "LOG_ZERO",
    "ClientRecord",
    "MdmParams",
    "log_dm_pmf",
    "log_joint_pmf",
    "log_mdm_pmf",
    "log_likelihood",
    "responsibilities",
    "params_to_json",
    "params_from_json",
    "sample_dirichlet",
    "sample_multinomial",
    "sample_count",
    "sample_client",
    "gen_synthetic_federation",
    "ClientPopulation",
    "InitPacket",
    "EmPacket",
    "InitAggregate",
    "EmAggregate",
    "make_init_packet",
    "make_em_packet",
    "secure_sum",
    "sample_cohort",
    "InferenceConfig",
    "InferenceTrace",
    "init_params",
    "em_round",
    "theorem1_update",
    "fit",
    "KSelectionReport",
    "CandidateResult",
    "choose_k",
    "select_k",
    "AlignedNmseReport",
    "align_and_score",
    "nmse",
    "BinningSpec",
    "bin_value",
    "RecordTable",
    "build_clients",
    "build_central_pool",
    "CentralPool",
    "SimulatedClient",
    "PartitionPlan",
    "partition_mdm",
    "partition_fully_iid",
    "partition_conditionally_iid",
    "export_histograms",
    "get_preset",
    "preset_names",
    "DirichletMultinomialMixture",
    "validate_count_matrix",
]
