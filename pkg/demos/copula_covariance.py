"""
Conditional-copula covariance prediction
========================================

Couples two standard normal margins through a Clayton copula with
theta = 3, fits the volatility model and one pairwise copula per
family, and checks two things: whether the Clayton fit recovers the
dependence strength, and how well each family's implied covariance
tracks the realized cross products.
"""

import warnings

import numpy as np
from scipy.special import ndtri

from mgpch import (
    Ar1Kernel,
    Clayton,
    Frank,
    Gumbel,
    MgpchConfig,
    PypConfig,
    QuadratureWarning,
    conditional_theta,
    fit,
    predict,
    predictive_covariance,
    train_pairwise,
)

###############################################################################
# Clayton-coupled sample
# ----------------------
# The conditional inverse gives exact draws: lower-tail dependence,
# Kendall tau = theta / (theta + 2) = 0.6.

rng = np.random.default_rng(0)
N, theta_true = 400, 3.0
u = rng.uniform(size=N)
p = rng.uniform(size=N)
v = (1.0 + u ** (-theta_true) * (p ** (-theta_true / (1.0 + theta_true)) - 1.0)) ** (
    -1.0 / theta_true
)
Y = np.column_stack([ndtri(u), ndtri(v)])
X = ((np.arange(N) - N / 2) / N)[:, None]
print(f"{N} draws, empirical correlation {np.corrcoef(Y.T)[0, 1]:.3f}")

###############################################################################
# Margins first, dependence second
# --------------------------------
# The copula layer consumes the fitted model's predictive margins, so
# the volatility fit happens once and is shared by every family.

d = np.abs(X[:, None, 0] - X[None, :, 0])
med = float(np.median(d[np.triu_indices(N, 1)]))
phi = float(np.exp(np.log(0.5) / (3.0 * med)))
model = fit(
    X,
    Y,
    MgpchConfig(
        pyp=PypConfig(truncation=1),
        noise_kernels=(Ar1Kernel(phi=phi, sigma0_sq=(1.0 - phi**2) * 0.3),),
        max_iters=60,
        seed=0,
    ),
)
moments = [predict(model, x) for x in X]
products = Y[:, 0] * Y[:, 1]

###############################################################################
# Family comparison
# -----------------

clayton = train_pairwise((0, 1), model, (X, Y), Clayton())
thetas = np.array([conditional_theta(clayton, x) for x in X])
print(f"\nClayton theta along the input range: mean {thetas.mean():.2f} "
      f"(min {thetas.min():.2f}, max {thetas.max():.2f}, truth {theta_true})")

print(f"\n{'family':>8} {'covariance MSE':>15} {'mean cov':>10}")
with warnings.catch_warnings():
    warnings.simplefilter("ignore", QuadratureWarning)
    for family in (Clayton(), Frank(), Gumbel()):
        pm = train_pairwise((0, 1), model, (X, Y), family)
        covs = np.array(
            [predictive_covariance(pm, moments[n], (0, 1), X[n]) for n in range(N)]
        )
        mse = float(np.mean((products - covs) ** 2))
        name = type(family).__name__
        print(f"{name:>8} {mse:>15.4f} {covs.mean():>10.3f}")

print("\nA misspecified family still tracks the covariance level; the")
print("penalty shows up in the tails, not the second moment.")
