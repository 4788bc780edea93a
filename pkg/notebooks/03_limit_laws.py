# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Limit laws and limit simulators
#
# Hermite processes Y_tau are normalized so that Var Y_tau(1) = 1/tau!.  At
# tau = 1 this is fractional Brownian motion with H = 1 - D/2; at tau = 2 it
# is the Rosenblatt process.

# %%
import math
import warnings

import numpy as np
from scipy import stats

from lrdvervaat import experiments as ex
from lrdvervaat import limit_processes as lp

warnings.filterwarnings("ignore", message="clipping negative circulant spectrum")

# %% [markdown]
# ## Two routes to fBm
#
# A normalized Hermite partial sum of the driver and the exact circulant
# sampler should agree in law.

# %%
a = [lp.simulate_hermite_sum(1, 0.4, 4096, 16, s).Y[-1] for s in range(300)]
b = [lp.simulate_fbm(0.8, 16, 10_000 + s).Y[-1] for s in range(300)]
print("KS", round(stats.ks_2samp(a, b).statistic, 3), " 1% critical",
      round(1.628 * math.sqrt(2 / 300), 3))

# %% [markdown]
# ## Rosenblatt variance
#
# The law is skewed with a heavy right tail, so a few hundred replications
# give a noisy variance; the acceptance run uses 2000.

# %%
y2 = np.array([lp.simulate_hermite_sum(2, 0.25, 2 ** 14, 16, s).Y[-1] for s in range(400)])
print("Var Y_2(1) =", round(y2.var(ddof=1), 3), "(target 0.5)")
print("skewness   =", round(stats.skew(y2), 3), "(the Rosenblatt law is skewed)")

# %% [markdown]
# ## Distribution probes
#
# The normalized Bahadur-Kiefer probe at y = 0.8 against c_weak J J' Y(1)^2,
# plus the two Vervaat probes.  At y = 0.5 the first limit vanishes because
# J'(0.5) = 0, and the probe is flagged instead of tested.

# %%
plan = ex.ExperimentPlan(n_grid=(4096,), replications=200, metrics=ex.DIST_METRICS,
                         probe=(0.8, 1.0), limit_mt=64)
for row in ex.run_distribution(plan).dist:
    print(row)

# %%
flat = ex.ExperimentPlan(n_grid=(1024,), replications=50, metrics=("thm23_dist",),
                         probe=(0.5, 1.0), limit_mt=16)
print(ex.run_distribution(flat).dist)

# %%
c = lp.limit_constants(1, 0.4)
print(f"c_weak {c.c_weak:.6f}   c_Q {c.c_Q:.6f}")
