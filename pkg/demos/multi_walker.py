# %% [markdown]
# Several walkers per layer
#
# Running w independent walkers on one layer is the same as w copies of the
# layer, so the solvers need no changes.

# %%
import numpy as np

import mulane
from mulane.synthetic import random_network

net = random_network(np.random.default_rng(5), 2, (10, 14), overlapping=True, caps=[4, 4])
B = 14

for walkers in ([1, 1], [2, 1], [2, 2], [3, 2]):
    wide = mulane.expand_multi_walker(net, walkers)
    table = mulane.build_table(wide)
    res = mulane.bege(table, wide.weights, B)
    names = [layer.name for layer in wide.layers]
    print(walkers, dict(zip(names, res.allocation)), round(res.reward, 4))

# %%
# once a walker hits its cap, a second walker on the same layer is the only
# way to keep spending there
