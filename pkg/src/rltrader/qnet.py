"""Recurrent Q-network in plain numpy.

Layout::

    market (W x F) -> LSTM1 (full sequence) -> LSTM2 (last hidden state) --+
                                                                           concat -> dense+ReLU -> dense+ReLU -> head (3)
    position (3)   -> dense+ReLU ------------------------------------------+

LSTM gates are stacked in the order input, forget, candidate, output.
Everything is float64 so finite-difference checks stay tight.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import DomainError, ShapeError, UsageError

FORMAT_VERSION = 1
HEADS = ("linear", "softmax")


@dataclass(frozen=True)
class NetDims:
    n_features: int = 9
    lstm1: int = 32
    lstm2: int = 16
    pos_in: int = 3
    pos_hidden: int = 8
    merge1: int = 32
    merge2: int = 16
    n_actions: int = 3

    def shapes(self) -> dict[str, tuple[int, ...]]:
        H1, H2 = self.lstm1, self.lstm2
        return {
            "lstm1.W": (4 * H1, self.n_features),
            "lstm1.U": (4 * H1, H1),
            "lstm1.b": (4 * H1,),
            "lstm2.W": (4 * H2, H1),
            "lstm2.U": (4 * H2, H2),
            "lstm2.b": (4 * H2,),
            "pos.W": (self.pos_hidden, self.pos_in),
            "pos.b": (self.pos_hidden,),
            "merge1.W": (self.merge1, H2 + self.pos_hidden),
            "merge1.b": (self.merge1,),
            "merge2.W": (self.merge2, self.merge1),
            "merge2.b": (self.merge2,),
            "head.W": (self.n_actions, self.merge2),
            "head.b": (self.n_actions,),
        }


class NetworkParams:
    """Named float64 arrays for one network, in a fixed order."""

    def __init__(self, arrays: dict[str, np.ndarray], dims: NetDims = NetDims()):
        expected = dims.shapes()
        if set(arrays) != set(expected):
            raise ShapeError(f"parameter names {sorted(arrays)} do not match {sorted(expected)}")
        self.dims = dims
        self.arrays: dict[str, np.ndarray] = {}
        for name, shape in expected.items():
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {a.shape}")
            self.arrays[name] = a

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.arrays.items()}, self.dims)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "NetworkParams":
        return NetworkParams({k: fn(v) for k, v in self.arrays.items()}, self.dims)

    def zip_map(self, other: "NetworkParams", fn) -> "NetworkParams":
        return NetworkParams({k: fn(v, other.arrays[k]) for k, v in self.arrays.items()}, self.dims)

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    @classmethod
    def from_flat(cls, vec: np.ndarray, dims: NetDims = NetDims()) -> "NetworkParams":
        shapes = dims.shapes()
        total = sum(int(np.prod(s)) for s in shapes.values())
        if len(vec) != total:
            raise ShapeError(f"flat vector has {len(vec)} entries, expected {total}")
        out, i = {}, 0
        for name, shape in shapes.items():
            n = int(np.prod(shape))
            out[name] = np.array(vec[i:i + n], dtype=np.float64).reshape(shape)
            i += n
        return cls(out, dims)

    @classmethod
    def zeros(cls, dims: NetDims = NetDims()) -> "NetworkParams":
        return cls({k: np.zeros(s) for k, s in dims.shapes().items()}, dims)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self.dims == other.dims and all(
            np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items()
        )

    def max_abs_diff(self, other: "NetworkParams") -> float:
        return max(float(np.max(np.abs(v - other.arrays[k]))) for k, v in self.arrays.items())

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(v * v) for v in self.arrays.values())))


def init_params(dims: NetDims = NetDims(), seed: int = 0) -> NetworkParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0 except LSTM forget gates at 1."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in dims.shapes().items():
        if name.endswith(".b"):
            b = np.zeros(shape)
            if name.startswith("lstm"):
                h = shape[0] // 4
                b[h:2 * h] = 1.0
            arrays[name] = b
        else:
            bound = 1.0 / np.sqrt(shape[1])
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(arrays, dims)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lstm_forward(x, W, U, b):
    n, H = len(x), U.shape[1]
    zx = x @ W.T + b
    h = np.zeros(H)
    c = np.zeros(H)
    hs = np.empty((n + 1, H))
    cs = np.empty((n + 1, H))
    gates = np.empty((n, 4 * H))
    tcs = np.empty((n, H))
    hs[0] = h
    cs[0] = c
    for t in range(n):
        z = zx[t] + U @ h
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:] = i, f, g, o
        hs[t + 1], cs[t + 1], tcs[t] = h, c, tc
    return hs, cs, gates, tcs


def _lstm_backward(dh_seq, x, W, U, hs, cs, gates, tcs):
    n, H = len(x), U.shape[1]
    dz_all = np.empty((n, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(n - 1, -1, -1):
        i, f, g, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
        tc = tcs[t]
        dh = dh_seq[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dz_all[t]
        dz[:H] = dc * g * i * (1.0 - i)
        dz[H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dz[2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = U.T @ dz
    dW = dz_all.T @ x
    dU = dz_all.T @ hs[:-1]
    db = dz_all.sum(axis=0)
    dx = dz_all @ W
    return dx, dW, dU, db


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class ForwardCache:
    market: np.ndarray
    position: np.ndarray
    head: str
    l1: tuple
    l2: tuple
    pos_pre: np.ndarray
    pos_act: np.ndarray
    merged: np.ndarray
    m1_pre: np.ndarray
    m1_act: np.ndarray
    m2_pre: np.ndarray
    m2_act: np.ndarray
    logits: np.ndarray
    q: np.ndarray


def _check_inputs(params: NetworkParams, market, position):
    d = params.dims
    m = np.asarray(getattr(market, "rows", market), dtype=np.float64)
    p = np.asarray(position, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != d.n_features or m.shape[0] < 1:
        raise ShapeError(f"market window must be (W>=1, {d.n_features}), got {m.shape}")
    if p.shape != (d.pos_in,):
        raise ShapeError(f"position vector must have shape ({d.pos_in},), got {p.shape}")
    return m, p


def forward_cached(params: NetworkParams, market, position, head: str = "linear"):
    """Forward pass returning ``(q_values, cache)`` for :func:`backward`."""
    if head not in HEADS:
        raise DomainError(f"head must be one of {HEADS}, got {head!r}")
    x, p = _check_inputs(params, market, position)
    P = params.arrays
    l1 = _lstm_forward(x, P["lstm1.W"], P["lstm1.U"], P["lstm1.b"])
    l2 = _lstm_forward(l1[0][1:], P["lstm2.W"], P["lstm2.U"], P["lstm2.b"])
    pos_pre = P["pos.W"] @ p + P["pos.b"]
    pos_act = np.maximum(pos_pre, 0.0)
    merged = np.concatenate([l2[0][-1], pos_act])
    m1_pre = P["merge1.W"] @ merged + P["merge1.b"]
    m1_act = np.maximum(m1_pre, 0.0)
    m2_pre = P["merge2.W"] @ m1_act + P["merge2.b"]
    m2_act = np.maximum(m2_pre, 0.0)
    logits = P["head.W"] @ m2_act + P["head.b"]
    q = _softmax(logits) if head == "softmax" else logits.copy()
    cache = ForwardCache(x, p, head, l1, l2, pos_pre, pos_act, merged,
                         m1_pre, m1_act, m2_pre, m2_act, logits, q)
    return q, cache


def forward(params: NetworkParams, market, position, head: str = "linear") -> np.ndarray:
    return forward_cached(params, market, position, head)[0]


def backward(params: NetworkParams, cache: ForwardCache | None, output_grad) -> NetworkParams:
    """Gradient of ``<output_grad, q>`` with respect to every parameter."""
    if cache is None:
        raise UsageError("backward() needs the cache of a preceding forward pass")
    P = params.arrays
    d = params.dims
    dq = np.asarray(output_grad, dtype=np.float64)
    if dq.shape != (d.n_actions,):
        raise ShapeError(f"output_grad must have shape ({d.n_actions},), got {dq.shape}")
    if cache.head == "softmax":
        s = cache.q
        dlogits = s * (dq - s @ dq)
    else:
        dlogits = dq
    g = {}
    g["head.W"] = np.outer(dlogits, cache.m2_act)
    g["head.b"] = dlogits.copy()
    dm2 = (P["head.W"].T @ dlogits) * (cache.m2_pre > 0)
    g["merge2.W"] = np.outer(dm2, cache.m1_act)
    g["merge2.b"] = dm2
    dm1 = (P["merge2.W"].T @ dm2) * (cache.m1_pre > 0)
    g["merge1.W"] = np.outer(dm1, cache.merged)
    g["merge1.b"] = dm1
    dmerged = P["merge1.W"].T @ dm1
    H2 = d.lstm2
    dpos = dmerged[H2:] * (cache.pos_pre > 0)
    g["pos.W"] = np.outer(dpos, cache.position)
    g["pos.b"] = dpos

    hs2 = cache.l2[0]
    dh2 = np.zeros((len(hs2) - 1, H2))
    dh2[-1] = dmerged[:H2]
    x2 = cache.l1[0][1:]
    dx2, g["lstm2.W"], g["lstm2.U"], g["lstm2.b"] = _lstm_backward(
        dh2, x2, P["lstm2.W"], P["lstm2.U"], *cache.l2)
    _, g["lstm1.W"], g["lstm1.U"], g["lstm1.b"] = _lstm_backward(
        dx2, cache.market, P["lstm1.W"], P["lstm1.U"], *cache.l1)
    return NetworkParams(g, d)


class QNetwork:
    """Stateful wrapper: keeps the cache of the last forward pass for backward."""

    def __init__(self, params: NetworkParams, head: str = "linear"):
        if head not in HEADS:
            raise DomainError(f"head must be one of {HEADS}, got {head!r}")
        self.params = params
        self.head = head
        self._cache: ForwardCache | None = None

    def forward(self, market, position) -> np.ndarray:
        q, self._cache = forward_cached(self.params, market, position, self.head)
        return q

    def backward(self, output_grad) -> NetworkParams:
        return backward(self.params, self._cache, output_grad)

    def q_values(self, market, position) -> np.ndarray:
        return forward(self.params, market, position, self.head)


@dataclass
class AdamState:
    first_moment: NetworkParams
    second_moment: NetworkParams
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: NetworkParams, **kw) -> "AdamState":
        return cls(NetworkParams.zeros(params.dims), NetworkParams.zeros(params.dims), **kw)


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState,
              lr: float) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        gk = grads[k]
        m = b1 * state.first_moment[k] + (1.0 - b1) * gk
        v = b2 * state.second_moment[k] + (1.0 - b2) * (gk * gk)
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    d = params.dims
    return NetworkParams(new_p, d), AdamState(
        NetworkParams(new_m, d), NetworkParams(new_v, d), t, b1, b2, eps)


def soft_update(target: NetworkParams, online: NetworkParams, tau: float) -> NetworkParams:
    """``(1 - tau) * target + tau * online``, elementwise."""
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    if target.dims != online.dims:
        raise ShapeError("target and online networks have different shapes")
    if tau == 1.0:
        return online.copy()
    if tau == 0.0:
        return target.copy()
    return target.zip_map(online, lambda a, b: (1.0 - tau) * a + tau * b)


def save_params(path, params: NetworkParams) -> None:
    """Write a checkpoint; ``.json`` suffix gives the text form, anything else ``.npz``."""
    path = str(path)
    meta = {"format_version": FORMAT_VERSION, "dims": asdict(params.dims)}
    if path.endswith(".json"):
        doc = dict(meta, arrays={k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                                 for k, v in params.items()})
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    else:
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **params.arrays)


def load_params(path) -> NetworkParams:
    path = str(path)
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        _check_version(doc.get("format_version"))
        dims = NetDims(**doc["dims"])
        arrays = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in doc["arrays"].items()}
        return NetworkParams(arrays, dims)
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        _check_version(meta.get("format_version"))
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    return NetworkParams(arrays, NetDims(**meta["dims"]))


def _check_version(v):
    if v != FORMAT_VERSION:
        raise DomainError(f"unsupported checkpoint format_version {v!r}")
