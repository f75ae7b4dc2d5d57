"""Sparse adaptive filtering for point-process observations.

Recursive ℓ1-regularized estimators of logistic point-process models, with
de-sparsified confidence intervals, time-rescaling goodness-of-fit tests,
simulation studies and a spectrotemporal receptive field pipeline.
"""

from .confidence import ConfidenceState, confidence_interval, nodewise_lasso, normal_quantile, theta_row, update_G
from .estimators import (BatchSparseLogistic, GaborDesign, LaggedDesign, NormalizedReverseCorrelation,
                         SparsePointProcessFilter, SteepestDescentPPF, StochasticStatePPF)
from .filters import (ConvergenceError, FilterDivergence, PPF0State, PPF1State, SDPPFState, SSPPFState,
                      batch_solve, kkt_residual, nrc_estimate, ppf0_update, ppf1_update, run_filter,
                      sdppf_update, ssppf_update)
from .gof import acf_test, ks_test, time_rescale
from .model import (ParamVector, SpikeTrain, StimulusSequence, build_design, lagged_design, logistic_cif,
                    weighted_gradient, weighted_loglik, window_loglik)
from .prox import ProxHyper, default_step_size, proximal_step, soft_threshold

__version__ = "0.1.0"
