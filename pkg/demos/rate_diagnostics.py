"""Finite-sample rate diagnostics: gradient concentration and error decay.

Both checks regress a log median statistic on log n.  The gradient
sup-norm at the true parameter and the penalized-MLE estimation error
should each shrink like n^(-1/2), so both slopes should land near -0.5.
Settings here are trimmed (small p, few replications) to finish in a
couple of minutes; the acceptance-scale runs use 50 replications.
"""

import numpy as np

from kernelgm import (
    GibbsConfig,
    KernelSpec,
    ModelSpec,
    ParamMatrix,
    SolveConfig,
    error_scaling_check,
    gradient_concentration_check,
    make_chain,
)

kern = KernelSpec("heat", sigma=1.0)

th = np.eye(3)
th[0, 1] = th[1, 0] = 0.8
th[1, 2] = th[2, 1] = -0.6
model3 = ModelSpec(kern, ParamMatrix(th), domain=(-4, 4), base_coeff=0.5)

res = gradient_concentration_check(
    model3, sample_sizes=(125, 250, 500, 1000), replications=12, seed=1,
    gibbs=GibbsConfig(n_grid=201, burn_in=200, thin=3),
)
print("gradient concentration, joint statistic, p=3")
print(f"  slope {res.fitted_slope:.3f}  (bootstrap CI {res.slope_ci[0]:.3f} .. {res.slope_ci[1]:.3f})")
for n, med in zip(res.sample_sizes, res.statistic_medians):
    print(f"  n={n:5d}  median sup-gradient {med:.4f}")

chain = ModelSpec(kern, make_chain(6, 1.0).theta, domain=(-6, 6), base_coeff=0.5)
res = error_scaling_check(
    chain, estimator="nodewise_mle", sample_sizes=(250, 500, 1000, 2000),
    replications=5, lam_scale=1.0, seed=2,
    config=SolveConfig(grad_tol=1e-4, max_iter=400, accelerate=True),
    gibbs=GibbsConfig(n_grid=201, burn_in=200, thin=3),
)
print("\nestimation error decay, node-wise penalized MLE, p=6 chain")
print(f"  slope {res.fitted_slope:.3f}  (bootstrap CI {res.slope_ci[0]:.3f} .. {res.slope_ci[1]:.3f})")
for n, med in zip(res.sample_sizes, res.statistic_medians):
    print(f"  n={n:5d}  median worst-node error {med:.4f}")

print("\nboth slopes should sit near -0.5; the medians must fall monotonically.")
