"""Unsupervised radio-map learning: HMM model, parameter fits, decoder and the alternating loop."""
from .alternate import AlternateConfig, FitReport, alternate, objective
from .fit import (classify_los, fit_angle_vars, fit_delay_block, fit_delay_params, fit_mobility,
                  fit_power_params, wls_solve)
from .model import (Geometry, Grid, PropagationParams, emission_logpdf, mobility_logpdf,
                    trajectory_mobility_logpdf)
from .viterbi import decode, viterbi2

__all__ = [
    "AlternateConfig", "FitReport", "alternate", "objective", "classify_los", "fit_angle_vars",
    "fit_delay_block", "fit_delay_params", "fit_mobility", "fit_power_params", "wls_solve",
    "Geometry", "Grid", "PropagationParams", "emission_logpdf", "mobility_logpdf",
    "trajectory_mobility_logpdf", "decode", "viterbi2",
]
