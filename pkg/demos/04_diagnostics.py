"""
Mixing diagnostics
==================

Autocorrelation time (ACT) counts how many correlated draws are worth one
independent draw.  Multiplying by seconds per sample gives ATUC, which puts
cheap-but-sticky and expensive-but-fast samplers on one scale.
"""

import numpy as np

from sgfs import HmcConfig, LinearRegressionModel, SgfsConfig, run_chain
from sgfs.diagnostics import atuc, autocorrelation_time, mean_autocorrelation_time
from sgfs.harness import generate_synthetic

# %%
# The AR(1) process has ACT (1 + phi) / (1 - phi).
rng = np.random.default_rng(0)
for phi in (0.0, 0.5, 0.9):
    x = np.empty(50_000)
    x[0] = rng.standard_normal() / np.sqrt(1 - phi**2)
    for t in range(1, len(x)):
        x[t] = phi * x[t - 1] + rng.standard_normal()
    print(f"phi={phi}: ACT {autocorrelation_time(x):6.2f}  exact {(1 + phi) / (1 - phi):.2f}")

# %%
# ATUC of two samplers on the same posterior.  At alpha = 0 SGFS contracts
# by about 2/gamma per step, so it needs on the order of N/n steps per
# independent draw.  A full-data numpy gradient over 20k rows is still
# cheap, so HMC can come out ahead here; the balance shifts toward SGFS as
# the per-datum cost grows relative to per-step overhead.
data, _ = generate_synthetic("linear", 20_000, 5, seed=1, noise_variance=1.0)
model = LinearRegressionModel(data, 1.0, 1.0)
start = model.exact_posterior().mean
runs = {
    "SGFS-f": SgfsConfig(n=100, alpha=0.0),
    "HMC": HmcConfig(leapfrog_steps=10, step_size=0.002, adapt_iterations=1000),
}
for name, cfg in runs.items():
    trace = run_chain(model, cfg, 11_000, 1_000, seed=2, theta0=start)
    act = mean_autocorrelation_time(trace.samples)
    print(f"{name:7s} ACT {act:7.2f}  s/sample {trace.time_per_sample():.2e}  "
          f"ATUC {atuc(trace.samples, trace.time_per_sample()):.2e}")
