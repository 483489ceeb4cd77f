"""Superiorized adaptive projected subgradient detection for MIMO systems."""

from .apsm import (
    AuditResult,
    DiagnosticReport,
    IterateTrace,
    apsm_run,
    check_attracting,
    check_quasi_fejer,
    diagnose,
)
from .cost import (
    ApsmConfig,
    BetaSchedule,
    QuadraticResidualCost,
    RhoSchedule,
    apsm_map,
    rho_at,
    standard_config,
    theta,
    theta_subgradient,
)
from .detectors import (
    DetectorKind,
    detect,
    detect_box_oracle,
    detect_constrained_lmmse,
    detect_lmmse,
    detect_ml_bruteforce,
)
from .geometry import (
    BoxSet,
    Constellation,
    constellation,
    perturbation_l1,
    perturbation_l2,
    project_box,
    project_constellation,
    prox_l1_superiorization,
    soft_threshold,
)
from .mimo import (
    ChannelInstance,
    ChannelModel,
    add_noise,
    gen_channel,
    make_instance,
    realify,
    snr_to_sigma2,
    symbol_errors,
    transmit,
)
from .sim import ExperimentConfig, SerRow, SerTable, emit, run_ser_vs_iter, run_ser_vs_snr

__version__ = "0.1.0"

__all__ = [
    "ApsmConfig",
    "AuditResult",
    "BetaSchedule",
    "BoxSet",
    "ChannelInstance",
    "ChannelModel",
    "Constellation",
    "DetectorKind",
    "DiagnosticReport",
    "ExperimentConfig",
    "IterateTrace",
    "QuadraticResidualCost",
    "RhoSchedule",
    "SerRow",
    "SerTable",
    "add_noise",
    "apsm_map",
    "apsm_run",
    "check_attracting",
    "check_quasi_fejer",
    "constellation",
    "detect",
    "detect_box_oracle",
    "detect_constrained_lmmse",
    "detect_lmmse",
    "detect_ml_bruteforce",
    "diagnose",
    "emit",
    "gen_channel",
    "make_instance",
    "perturbation_l1",
    "perturbation_l2",
    "project_box",
    "project_constellation",
    "prox_l1_superiorization",
    "realify",
    "rho_at",
    "run_ser_vs_iter",
    "run_ser_vs_snr",
    "snr_to_sigma2",
    "soft_threshold",
    "standard_config",
    "symbol_errors",
    "theta",
    "theta_subgradient",
    "transmit",
]
