# %% [markdown]
# Offline allocation on a small overlapping network
#
# Three layers share part of one node universe. With the visiting
# probabilities known, we compare the greedy solvers against brute force
# as the budget grows.

# %%
import numpy as np

import mulane
from mulane.synthetic import random_network

rng = np.random.default_rng(12)
net = random_network(rng, 3, (8, 12), overlapping=True, caps=[8, 8, 8], weights="random3")
table = mulane.build_table(net)
print(net.m, "layers,", net.N, "nodes in the union")

# %%
solvers = {"beg": mulane.beg, "bege": mulane.bege, "mg": mulane.mg}
print(f"{'B':>3} {'opt':>8} " + " ".join(f"{s:>8}" for s in solvers))
for B in range(0, 13, 2):
    opt = mulane.opt_enumerate(table, net.weights, B)
    row = [solvers[s](table, net.weights, B).reward for s in solvers]
    print(f"{B:>3} {opt.reward:8.4f} " + " ".join(f"{r:8.4f}" for r in row))

# %% [markdown]
# Where the budget goes. The greedy spends on whichever layer adds the most
# uncovered weight per walker step, so the split drifts as layers saturate.

# %%
for B in (4, 8, 12):
    print(B, mulane.beg(table, net.weights, B).allocation,
          mulane.opt_enumerate(table, net.weights, B).allocation)

# %%
# without overlap the DP is exact and cheap
disjoint = random_network(rng, 4, (10, 20), overlapping=False, caps=[10] * 4)
t2 = mulane.build_table(disjoint)
res = mulane.dp_nonoverlapping(t2, disjoint.weights, 20)
print(res.allocation, round(res.reward, 4), f"{res.millis:.2f} ms")
