"""Capacity bounds and power/training optimisation for pilot-assisted MIMO links."""

from .allocopt import (
    AlphaRegime,
    alpha_star,
    closed_form_alpha,
    gamma_beamforming,
    gamma_ccf,
    gamma_nonfeedback,
    numeric_alpha,
    numeric_phi,
    optimal_pilot_length,
    phi_star_perfect_csi,
)
from .capacity import (
    Beamforming,
    CapacityEstimate,
    Ccf,
    CgfDelayed,
    CgfDelayless,
    NonFeedback,
    SchemeConfig,
    SimSettings,
    evaluate,
    gap_estimate,
    perfect_csi_delayed_clb,
)
from .channelmodel import CovarianceSpec, exp_correlation, identity_covariance, majorizes
from .config import ExperimentSpec, parse_config
from .errors import ConfigError, ContractViolation, PsamError
from .estimation import ccf_pilots, estimation_stats, iid_orthogonal_pilots, lmmse_estimate, worst_case_mse
from .experiments import ResultRow, figure_spec, run
from .matrixcore import RandomStream, hermitian_eig
from .waterfill import waterfill

__version__ = "0.1.0"
