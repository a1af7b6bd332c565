"""
The Q-network and its gradients
===============================

Two stacked LSTMs read the feature window, a small dense layer reads the
position, and both are merged into three Q-values. Backpropagation is
checked against central finite differences.
"""
import numpy as np

from rltrader.gradcheck import SMALL_DIMS, check_one
from rltrader.qnet import NetDims, QNetwork, init_params

net = QNetwork(init_params(NetDims(), seed=0))
window = np.random.default_rng(1).uniform(0.1, 1.0, size=(30, 9))
q = net.forward(window, np.array([0.2, 0.0, 0.0]))  # one long of five, no PnL
print("Q(hold, buy, sell) =", q.round(4))

grads = net.backward(np.array([0.0, 1.0, 0.0]))  # d Q(buy) / d theta
print("gradient norm:", round(grads.norm(), 4), "over", grads.size, "parameters")

for w in (1, 3, 8):
    r = check_one(seed=0, window=w, dims=SMALL_DIMS)
    print(f"W={w}: max relative error {r.max_rel_error:.2e}")
