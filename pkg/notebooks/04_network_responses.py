# %% [markdown]
# # Graph Laplacians as responses
#
# Weighted networks on a fixed node set are represented by their graph
# Laplacians and compared in the Frobenius norm. Signed regression weights can
# leave the space, so barycenters are projected back: symmetrize, clip edge
# weights to the allowed range and rebuild the diagonal.

# %%
import numpy as np

from frechet_uq import (
    LaplacianSpace,
    PredictionRegion,
    coverage,
    fit,
    fit_homoscedastic,
    residuals,
)

rng = np.random.default_rng(0)
r, n = 6, 600


def laplacian(weights):
    W = np.zeros((r, r))
    W[np.triu_indices(r, 1)] = weights
    W = W + W.T
    return np.diag(W.sum(axis=1)) - W


# edge weights in [0, 1] driven by one predictor through a logistic link
X = rng.normal(size=(n, 2))
m = r * (r - 1) // 2
base = rng.normal(size=m)
probs = 1 / (1 + np.exp(-(base[None, :] + X[:, :1])))
weights = np.clip(probs + 0.05 * rng.normal(size=(n, m)), 0, 1)
L = np.stack([laplacian(w) for w in weights])
space = LaplacianSpace(r, edge_bound=1.0)

# %%
model = fit(X[:300], L[:300], space)
pred = model.predict(np.array([3.0, 0.0]))
space.validate(pred)
print("row sums:", np.round(pred.sum(axis=1), 12))
print("edge weights within [0, 1]:", bool(np.all(-pred[~np.eye(r, dtype=bool)] <= 1)))

# %%
sample = residuals(model, X[300:450], L[300:450], seed=1)
region = PredictionRegion(model, fit_homoscedastic(sample, 0.1), 0.1, space)
print("radius", round(region.radius_rule.value, 3),
      "held-out coverage", round(coverage(region, X[450:], L[450:]), 3))
