"""Closed-loop DER aggregation: simulator and ergodicity diagnostics."""

from .casefmt import (
    Branch,
    Bus,
    BusKind,
    CaseError,
    DerSpec,
    DuplicateBusId,
    Generator,
    InvalidCaseError,
    MalformedMatrix,
    MissingSection,
    Network,
    UnknownBusReference,
    apply_der_sidecar,
    parse_matpower_case,
    parse_native_case,
    serialize_matpower_case,
    serialize_native_case,
)
from .control import (
    ControllerState,
    FilterState,
    StabilityVerdict,
    controller_step,
    error_signal,
    filter_step,
    incremental_iss_probe,
    is_marginally_unstable,
)
from .ensemble import (
    DerAgent,
    Ifs,
    ProbFunction,
    ProbabilityMassError,
    RngStream,
    agents_from_network,
    eval_prob,
    ifs_step,
    sample_commitment,
)
from .ergodic import (
    ContractionEstimate,
    ErgodicityReport,
    GroupCheckResult,
    Irrational,
    Thresholds,
    build_ergodicity_report,
    discrete_group_check,
    estimate_average_contraction,
    fairness_gap,
    ks_distance,
    predictability_gap,
    time_average,
)
from .powerflow import (
    Commitment,
    PowerFlowSolution,
    SingularBranch,
    SingularJacobian,
    build_ybus,
    solve_power_flow,
    total_der_output,
)
from .simloop import (
    EnsembleStats,
    SimConfig,
    SimulationTrace,
    load_network,
    load_sim_config,
    run,
    run_ensemble,
    with_overrides,
)

__version__ = "0.1.0"
