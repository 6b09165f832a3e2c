"""
HMC as a reference sampler
==========================

When no closed form or grid is available the harness falls back to HMC.
The step size is tuned during a warm-up phase toward 80% acceptance and
then frozen, so the retained samples come from a fixed, valid kernel.
"""

import numpy as np

from sgfs import HmcConfig, LogisticRegressionModel, run_chain, running_moments
from sgfs.harness import generate_synthetic

data, _ = generate_synthetic("logistic", 1000, 4, seed=5)
model = LogisticRegressionModel(data, prior_precision=1.0)
laplace = model.laplace_approximation()

cfg = HmcConfig(leapfrog_steps=10, step_size=0.01, adapt_iterations=1000)
trace = run_chain(model, cfg, 11_000, 1_000, seed=0, theta0=laplace.mean)
print(f"acceptance {trace.meta['acceptance_rate']:.3f}, step {trace.meta['step_size']:.4f}")

est = running_moments(trace)
print("HMC mean     ", np.round(est.mean, 3))
print("Laplace mean ", np.round(laplace.mean, 3))
print("sd ratio HMC/Laplace",
      np.round(np.sqrt(np.diag(est.covariance) / np.diag(laplace.covariance)), 3))
