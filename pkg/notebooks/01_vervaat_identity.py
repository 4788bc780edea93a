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
# # Sequential empirical processes on one LRD path
#
# We draw a long-memory Gaussian sequence, push it through a subordinating
# function and look at the empirical, quantile and Vervaat processes of the
# resulting PIT sample.  The last cell checks the exact identity
# Q = A - d^-2 R*^2 on every breakpoint of a short path.

# %%
import warnings

import numpy as np

from lrdvervaat import distributions as dist
from lrdvervaat import hermite
from lrdvervaat import lrd_gauss as lg
from lrdvervaat.bk_vervaat import Model, identity_residuals, r_star, vervaat, vervaat_error
from lrdvervaat.seq_processes import SampleBatch, process_field, sup_norm

warnings.filterwarnings("ignore", message="clipping negative circulant spectrum")

# %% [markdown]
# ## The driver
#
# Pure power covariance k^-D with D = 0.4.  At L = 1 the sequence is not a
# valid covariance at small lags, so the sampler clips the negative part of
# the circulant spectrum; the manifest field `clipped_mass` says how much.

# %%
spec = lg.CovarianceSpec(0.4)
path = lg.generate_path(spec, 2048, seed=11)
print(path.method, f"clipped mass {path.clipped_mass:.3%}")
print("realized lags 0..3:", np.round(lg.realized_autocovariance(spec, 2048)[:4], 3))

# %% [markdown]
# ## Subordination and the PIT sample
#
# `quantile-compose` with a normal target is G = Q_N o Phi, the identity in
# disguise, which has Hermite rank 1.

# %%
G = hermite.SubordinationSpec("quantile-compose", target=dist.normal())
an = hermite.analyze(G, G.marginal())
print("rank", an.tau, "kappas", np.round(an.kappas, 6))

batch = SampleBatch.from_path(path.values, G)
model = Model(2048, 1, 0.4)

# %%
alpha = process_field(batch, "alpha", model)
u = process_field(batch, "u", model)
for y in (0.2, 0.5, 0.8):
    print(f"y={y}: alpha {float(alpha(y, 1.0)):+.4f}  u {float(u(y, 1.0)):+.4f}  "
          f"R* {float(r_star(batch, model)(y, 1.0)):+.4f}")

# %% [markdown]
# The exact supremum over the (y, t) field takes breakpoints and interior
# stationary points into account, so no grid is involved.

# %%
print("sup |alpha|  ", sup_norm(alpha))
print("sup |V|      ", sup_norm(vervaat(batch, model)))
print("sup |Q|      ", sup_norm(vervaat_error(batch, model)))

# %% [markdown]
# ## The exact identity
#
# With extended precision the residual sits at rounding level.

# %%
short = lg.generate_path(spec, 300, seed=3)
ext = SampleBatch.from_path(short.values, G, extended=True)
print(identity_residuals(ext, Model(300, 1, 0.4)))
