"""
Choosing the number of clusters
===============================

Walk the merge sequence, test each large merge with a share of the
significance budget, and stop at the first rejection. Compared with the gap
statistic on simulated data and on the Palmer penguins.
"""

import os
from collections import Counter

from rhclust import alpha_sequence, estimate_k, gap_statistic, generate_three_cluster, load_csv
from rhclust.bench import default_spec, run_stability
from rhclust.metrics import cooccurrence_blocks

# alpha_j proportional to exp(-0.5 j), summing to 0.05
print("first alphas for n = 30:", [round(a, 5) for a in alpha_sequence(30).alphas[:4]])

# three well separated groups of 10
X, truth = generate_three_cluster(30, delta=14.0, rng_seed=5)
est, trace = estimate_k(X, tau=0.1, rng_seed=5)
print("estimated K:", est.k_hat, "stopped at merge", est.stop_step)
for s in est.steps:
    if s.tested:
        print(f"  merge {s.step}: sizes {s.sizes}, alpha {s.alpha_used:.3g}, p {s.p_value:.3g}")
print("gap statistic K:", gap_statistic(X, k_max=10, b_refs=20).k_hat)

# the penguin data: female birds observed in 2007 and 2008
path = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "penguins.csv")
P = load_csv(path, ["bill_length_mm", "flipper_length_mm"],
             ["sex=female", "year=2007", "year=2008"])
print("penguins:", P.n, "rows")
ks = Counter(estimate_k(P, rng_seed=s)[0].k_hat for s in range(5))
print("estimated K over 5 randomized runs:", dict(ks))
print("gap statistic K:", gap_statistic(P, k_max=10, b_refs=50).k_hat)

# how stable is the 2-cluster split under randomization
C = run_stability(default_spec("stability", 100, method={"K": 2}), P)
blocks = cooccurrence_blocks(C, 2)
within, between = C.block_means(blocks)
print(f"co-occurrence over {C.runs} runs: within-block {within:.3f}, between-block {between:.3f}")
