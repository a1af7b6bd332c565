"""Central finite-difference verification of :func:`rltrader.qnet.backward`."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qnet import NetDims, NetworkParams, backward, forward, forward_cached

# Denominator floor for relative error; keeps near-zero components from
# turning round-off into huge ratios.
REL_FLOOR = 1e-6
# Central differences are only valid away from ReLU kinks.
KINK_MARGIN_STEPS = 100


def random_params(dims: NetDims, rng: np.random.Generator, scale: float = 0.5) -> NetworkParams:
    """Random parameters with non-zero biases, unlike :func:`init_params`."""
    return NetworkParams({k: rng.uniform(-scale, scale, size=s) for k, s in dims.shapes().items()}, dims)


def numerical_gradient(params: NetworkParams, market, position, output_grad,
                       head: str = "linear", h: float = 1e-5) -> np.ndarray:
    theta = params.flat()
    dq = np.asarray(output_grad, dtype=float)
    grad = np.empty_like(theta)
    for j in range(len(theta)):
        old = theta[j]
        theta[j] = old + h
        fp = dq @ forward(NetworkParams.from_flat(theta, params.dims), market, position, head)
        theta[j] = old - h
        fm = dq @ forward(NetworkParams.from_flat(theta, params.dims), market, position, head)
        theta[j] = old
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)


def kink_distance(cache) -> float:
    """Smallest |pre-activation| over all ReLU units in a forward pass."""
    return float(min(np.abs(a).min() for a in (cache.pos_pre, cache.m1_pre, cache.m2_pre)))


@dataclass
class GradCheckResult:
    seed: int
    window: int
    head: str
    max_rel_error: float
    n_params: int


def check_one(seed: int, window: int, dims: NetDims, head: str = "linear",
              h: float = 1e-5, corrupt: bool = False) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    while True:
        params = random_params(dims, rng)
        market = rng.uniform(0.1, 1.0, size=(window, dims.n_features))
        position = rng.uniform(-1.0, 1.0, size=dims.pos_in)
        dq = rng.normal(size=dims.n_actions)
        _, cache = forward_cached(params, market, position, head)
        if kink_distance(cache) >= KINK_MARGIN_STEPS * h:
            break
    analytic = backward(params, cache, dq).flat()
    if corrupt:
        analytic[rng.integers(len(analytic))] += 1.0
    numeric = numerical_gradient(params, market, position, dq, head, h)
    return GradCheckResult(seed, window, head, float(relative_error(analytic, numeric).max()), len(analytic))


SMALL_DIMS = NetDims(n_features=9, lstm1=6, lstm2=4, pos_in=3, pos_hidden=4, merge1=6, merge2=5)


def run_suite(seeds: Sequence[int] = range(10), windows: Sequence[int] = (1, 3, 8),
              dims: NetDims = SMALL_DIMS, heads: Sequence[str] = ("linear", "softmax"),
              h: float = 1e-5, corrupt: bool = False) -> list[GradCheckResult]:
    out = []
    for seed in seeds:
        for w in windows:
            for head in heads:
                out.append(check_one(seed, w, dims, head, h, corrupt))
    return out
