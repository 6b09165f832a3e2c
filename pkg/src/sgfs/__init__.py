"""Minibatch posterior sampling with Stochastic Gradient Fisher Scoring.

Submodules
----------
model        data models, priors and posterior oracles
fisher       empirical Fisher information and its online average
samplers     SGFS, SGLD, SGD, the exact-Gaussian chain and HMC
diagnostics  moments, relative errors, autocorrelation time, ATUC
harness      config-driven sweeps, trace files and reports
"""

from .diagnostics import (
    MomentSummary,
    atuc,
    autocorrelation,
    autocorrelation_time,
    relative_errors,
    running_moments,
)
from .fisher import FisherEstimate, diagonal_empirical_fisher, empirical_fisher, online_update
from .model import (
    Dataset,
    GaussianPosterior,
    LinearRegressionModel,
    LogisticRegressionModel,
    conjugate_posterior,
)
from .samplers import (
    ChainState,
    HmcConfig,
    ScheduleConfig,
    SgdConfig,
    SgfsConfig,
    SgldConfig,
    Trace,
    run_chain,
)

__version__ = "0.1.0"
