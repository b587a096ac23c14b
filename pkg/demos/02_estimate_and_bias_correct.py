"""Fitting the model and removing the incidental-parameters bias.

Profiling out N unit effects biases the dynamic coefficients at rate 1/T
(the panel version of the Nickell bias).  The estimator computes the
exact expected score under the fitted model and subtracts H^(-1) b once;
with T = 10 the own-lag coefficient moves visibly back toward the truth.
"""

import numpy as np

import netpanel as npn

theta0 = npn.Theta(rho=0.5, lam=0.2, nu=0.1, gamma=1.0, beta=np.array([1.0]), sigma2=1.0)
config = npn.DgpConfig(N=100, T=10, theta0=theta0, target_up=0.30, seed=7)
layout, network, data, _ = npn.simulate_dataset(config)

result = npn.fit(layout, network, data)

names = result.param_names
truth = theta0.to_vector()
raw = result.theta_hat.to_vector()
corrected = result.theta_bc.to_vector()
se = result.se

print(f"n = {result.n}, UP = {result.diagnostics['unbalancedness']:.3f}, "
      f"log-likelihood = {result.loglik:.2f}")
print(f"\n{'parameter':<10}{'truth':>9}{'raw':>9}{'corrected':>11}{'std.err':>9}")
for j, nm in enumerate(names):
    print(f"{nm:<10}{truth[j]:>9.3f}{raw[j]:>9.4f}{corrected[j]:>11.4f}{se[j]:>9.4f}")

print("\nbias adjustment applied (corrected - raw):")
print(np.array2string(corrected - raw, precision=4, floatmode="fixed"))

# 95% confidence intervals around the corrected estimates
cis = npn.confidence_intervals(corrected, se, (0.95,))
lo, hi = cis[0.95]
covered = (lo <= truth) & (truth <= hi)
print(f"\ntrue values inside the 95% interval: {covered.sum()} of {len(names)}")

# Robust (moment-based) standard errors are available on request; under
# normal errors they track the Hessian-based ones.
robust = npn.fit(layout, network, data, npn.FitOptions(robust=True))
print("\nSE ratio (robust / Hessian):",
      np.array2string(robust.se_robust / robust.se_raw, precision=3, floatmode="fixed"))
