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
# # Coupled rates on a small grid
#
# Each replication evaluates the pre-limit field and its approximation on the
# same random path, along every prefix length in `n_grid`.  The slope of
# log(median) against log(n) is then compared with the expected exponent.
#
# The acceptance run uses n up to 2^14 and 100 replications; this notebook
# stops at 2^12 with 12 replications so it finishes in under a minute.

# %%
import warnings

import numpy as np

from lrdvervaat import experiments as ex

warnings.filterwarnings("ignore", message="clipping negative circulant spectrum")

plan = ex.ExperimentPlan(n_grid=(256, 512, 1024, 2048, 4096), replications=12)
print(plan.describe())

# %%
rs = ex.rate_spec(plan.tau, plan.D)
print("p for the moment bounds:", rs.p21, rs.p22, " nu =", rs.nu)
print({k: round(v, 3) for k, v in rs.expected.items()})

# %%
report = ex.run_coupling(plan)
for metric, slope, se, expected, verdict in report.slopes:
    print(f"{metric:8s} slope {slope:+.3f} (se {se:.3f})  expected {expected:+.3f}  {verdict}")

# %% [markdown]
# Medians per n for the Bahadur-Kiefer coupling.  They fall slowly: the
# exponent is about -tau D / 2 with log-log corrections.

# %%
print(np.round(report.medians("thm22"), 4))

# %% [markdown]
# ## i.i.d. baseline
#
# With independent uniforms and d_n = sqrt(n) the Vervaat error vanishes and
# V_n(1/2, 1) tends to a squared Brownian bridge value with mean 1/4.

# %%
base = ex.iid_baseline(ex.ExperimentPlan(n_grid=(256, 1024, 4096), replications=400))
print(base.dist[0])
print([round(r[2], 4) for r in base.rates])
