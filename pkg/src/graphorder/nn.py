"""Neural building blocks shared by the generative models and the posterior:
Glorot initialisation, linear maps, a GRU cell, and a multi-head additive
attention round over graph neighbourhoods.
"""

from __future__ import annotations

import numpy as np

from .graphs import Graph, adjacency_matrix
from .tensor import (
    ParameterStore,
    Tensor,
    add,
    concat,
    leaky_relu,
    masked_softmax,
    matmul,
    mul,
    reshape,
    sigmoid,
    sub,
    tanh,
)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


def register_linear(
    store: ParameterStore,
    name: str,
    in_dim: int,
    out_dim: int,
    rng: np.random.Generator,
    zero: bool = False,
) -> None:
    w = np.zeros((in_dim, out_dim)) if zero else glorot(rng, in_dim, out_dim)
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(out_dim))


def linear(bound: dict[str, Tensor], name: str, x) -> Tensor:
    return add(matmul(x, bound[f"{name}.w"]), bound[f"{name}.b"])


_GRU_GATES = ("update", "reset", "candidate")


def register_gru(
    store: ParameterStore,
    name: str,
    in_dim: int,
    dim: int,
    rng: np.random.Generator,
    zero: bool = False,
) -> None:
    for gate in _GRU_GATES:
        wx = np.zeros((in_dim, dim)) if zero else glorot(rng, in_dim, dim)
        wh = np.zeros((dim, dim)) if zero else glorot(rng, dim, dim)
        store.add(f"{name}.{gate}.wx", wx)
        store.add(f"{name}.{gate}.wh", wh)
        store.add(f"{name}.{gate}.b", np.zeros(dim))


def gru_step(bound: dict[str, Tensor], name: str, h, x) -> Tensor:
    """One gated recurrent update; h (..., dim), x (..., in_dim)."""

    def gate(which: str, state) -> Tensor:
        return add(
            add(
                matmul(x, bound[f"{name}.{which}.wx"]),
                matmul(state, bound[f"{name}.{which}.wh"]),
            ),
            bound[f"{name}.{which}.b"],
        )

    z = sigmoid(gate("update", h))
    r = sigmoid(gate("reset", h))
    cand = tanh(gate("candidate", mul(r, h)))
    return add(mul(sub(1.0, z), cand), mul(z, h))


def register_attention(
    store: ParameterStore,
    name: str,
    in_dim: int,
    heads: int,
    head_dim: int,
    rng: np.random.Generator,
    zero: bool = False,
) -> None:
    for k in range(heads):
        w = np.zeros((in_dim, head_dim)) if zero else glorot(rng, in_dim, head_dim)
        store.add(f"{name}.head{k}.w", w)
        for side in ("src", "dst"):
            vec = np.zeros(head_dim) if zero else glorot(rng, head_dim, 1, shape=(head_dim,))
            store.add(f"{name}.head{k}.{side}", vec)


def neighborhood_mask(g: Graph, include_self: bool = True) -> np.ndarray:
    """Boolean (n, n) attention support: neighbours, plus self if requested."""
    mask = adjacency_matrix(g).astype(bool)
    if include_self:
        mask |= np.eye(g.n, dtype=bool)
    return mask


def attention_message_pass(
    bound: dict[str, Tensor],
    name: str,
    feats,
    neighbor_mask: np.ndarray,
    heads: int,
    slope: float = 0.2,
) -> Tensor:
    """One multi-head attention round restricted to ``neighbor_mask``.

    feats has shape (..., n, d).  Head k scores pair (i, j) as
    leaky_relu(src_k . W_k f_i + dst_k . W_k f_j), normalises over each node's
    masked neighbourhood, and averages the projected features; head outputs
    are concatenated.  Permutation equivariant by construction.
    """
    outs = []
    for k in range(heads):
        z = matmul(feats, bound[f"{name}.head{k}.w"])
        s_src = matmul(z, bound[f"{name}.head{k}.src"])
        s_dst = matmul(z, bound[f"{name}.head{k}.dst"])
        shp = s_src.data.shape
        scores = add(
            reshape(s_src, shp + (1,)),
            reshape(s_dst, shp[:-1] + (1, shp[-1])),
        )
        att = masked_softmax(leaky_relu(scores, slope), neighbor_mask)
        outs.append(matmul(att, z))
    return concat(outs, axis=-1)


def residual_attention_stack(
    bound: dict[str, Tensor],
    name: str,
    feats,
    neighbor_mask: np.ndarray,
    layers: int,
    heads: int,
) -> Tensor:
    """``layers`` attention rounds with tanh nonlinearity and residual sums.

    Requires in_dim == heads * head_dim so outputs can be added back."""
    h = feats
    for layer in range(layers):
        h = add(h, tanh(attention_message_pass(bound, f"{name}.layer{layer}", h, neighbor_mask, heads)))
    return h
