"""Simulating a genuinely unbalanced dynamic network panel.

Units live on a rook-contiguity grid, enter and exit at random times
(one contiguous observation window each), and their outcomes respond to
contemporaneous neighbors, last period's neighbors, their own lag, and a
one-off listing effect in the entry period.
"""

import numpy as np

import netpanel as npn

# True parameters: (rho, lambda, nu, gamma, beta, sigma2).
theta0 = npn.Theta(rho=0.5, lam=0.2, nu=0.1, gamma=1.0, beta=np.array([1.0]), sigma2=1.0)

# Target 30% unbalancedness: the duration parameter is calibrated so that
# on average 30% of the N x T estimation grid is unobserved.
config = npn.DgpConfig(N=400, T=40, theta0=theta0, target_up=0.30, seed=2024)
layout, network, data, alpha = npn.simulate_dataset(config)

print(f"units ever observed      N = {layout.N}")
print(f"estimation periods       T = {layout.T}")
print(f"estimation sample size   n = {layout.n}")
print(f"unbalancedness          UP = {npn.unbalancedness(layout):.3f}")
print(f"duration parameter       p = {config.p:.3f}")

# Cross-section sizes over time: sparse at the start and end, peaking in
# the middle, because windows are placed uniformly at random.
counts = layout.period_counts
print("\nobserved units per period (every 5th):")
for t in range(0, layout.T + 1, 5):
    print(f"  t={t:>3}: {counts[t]:>4}  " + "#" * (counts[t] // 10))

# Window-length distribution: a clump of fully observed units plus a
# roughly flat spread of shorter spells.
lengths = layout.windows[:, 1] - layout.windows[:, 0] + 1
full = np.sum(lengths == layout.T + 1)
print(f"\nfully observed units: {full} ({100 * full / layout.N:.0f}%)")
print(f"median window length: {np.median(lengths):.0f} of {layout.T + 1} periods")

# Entrants per period identify the listing effect.
entrants = [int(layout.newly_listed(t).sum()) for t in range(1, layout.T + 1)]
print(f"total entrants after period 0: {sum(entrants)}")

# The spectral condition that keeps the contemporaneous system invertible.
report = npn.check_spectral_condition(network, (-0.995, 0.995))
print(f"\nmax row norm of W_t: {report['max_row_norm']:.3f} (condition satisfied: {report['satisfied']})")
