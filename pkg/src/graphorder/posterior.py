"""Learned distribution over node orderings of a graph.

The posterior factorizes over steps: at step t a categorical over the
not-yet-chosen nodes is computed by an attention network whose input
features mark already-chosen nodes with the positional encoding of the
step at which they were picked.  A uniform fallback with the same sampling
interface serves as the no-learning baseline.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import permutations

import numpy as np

from .errors import InputError
from .graphs import Graph, Ordering, validate_ordering
from .models import _config_from_metadata, _load_params
from .nn import neighborhood_mask, register_attention, register_linear, residual_attention_stack, linear
from .rng import spawn_rng
from .tensor import (
    ParameterStore,
    Tape,
    Tensor,
    add,
    checkpoint_document,
    load_checkpoint,
    masked_log_softmax,
    parse_checkpoint,
    reshape,
    save_checkpoint,
    take_along_last,
    tensor_sum,
)


def positional_encoding(positions, dim: int) -> np.ndarray:
    """Sinusoidal position features: sin on even lanes, cos on odd lanes,
    wavelengths geometric in 10000^(2i/dim)."""
    pos = np.asarray(positions, dtype=np.float64)[..., None]
    lanes = np.arange(dim)
    angles = pos / np.power(10000.0, (2 * (lanes // 2)) / dim)
    return np.where(lanes % 2 == 0, np.sin(angles), np.cos(angles))


@dataclass(frozen=True)
class OrderingSample:
    """One draw from an ordering distribution."""

    pi: Ordering
    log_q: float
    per_step_logits: tuple | None = None


@dataclass(frozen=True)
class PosteriorConfig:
    max_nodes: int = 20
    layers: int = 3
    heads: int = 6
    head_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.max_nodes < 1 or self.layers < 1 or self.heads < 1 or self.head_dim < 1:
            raise InputError("posterior config fields must be positive")

    @property
    def d_model(self) -> int:
        return self.heads * self.head_dim


class OrderPosterior:
    """Attention network scoring which unchosen node to pick next."""

    kind = "posterior"

    def __init__(self, cfg: PosteriorConfig, zero_init: bool = False):
        self.cfg = cfg
        self.store = ParameterStore()
        rng = spawn_rng(cfg.seed, 10)
        d = cfg.d_model
        self.store.add("h0", np.zeros(d) if zero_init else rng.normal(0, 0.1, d))
        for i in range(cfg.layers):
            register_attention(self.store, f"gnn.layer{i}", d, cfg.heads, cfg.head_dim, rng, zero=zero_init)
        register_linear(self.store, "head", d, 1, rng, zero=zero_init)
        # rows 1..max_nodes mark the step at which a node was chosen
        self._pe = positional_encoding(np.arange(cfg.max_nodes + 1), d)

    def _check_graph(self, g: Graph) -> None:
        if g.n > self.cfg.max_nodes:
            raise InputError(f"graph size {g.n} exceeds max_nodes {self.cfg.max_nodes}")

    # -- shared forward: per-node logits from marked features ---- -------------------

    def _node_logits(self, bound, g: Graph, feats_np: np.ndarray, tape: Tape | None) -> Tensor:
        """(..., n) logits from (..., n, d_model) chosen-step features."""
        h = add(Tensor(feats_np, tape=tape), bound["h0"])
        states = residual_attention_stack(
            bound, "gnn", h, neighborhood_mask(g), self.cfg.layers, self.cfg.heads
        )
        return reshape(linear(bound, "head", states), feats_np.shape[:-1])

    def _step_features(self, g: Graph, pis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-step marked features and availability masks for a batch of
        orderings: feats (B, n, n, d) and avail (B, n, n) over steps axis 1."""
        b, n = pis.shape
        d = self.cfg.d_model
        delta = np.zeros((b, n, n, d))
        avail_delta = np.zeros((b, n, n))
        if n > 1:
            b_idx = np.repeat(np.arange(b), n - 1)
            s_idx = np.tile(np.arange(1, n), b)
            j_idx = pis[:, : n - 1].ravel()
            delta[b_idx, s_idx, j_idx] = self._pe[s_idx]
            avail_delta[b_idx, s_idx, j_idx] = 1.0
        feats = np.cumsum(delta, axis=1)
        avail = np.cumsum(avail_delta, axis=1) < 0.5
        return feats, avail

    def log_probs_orderings(self, g: Graph, orders, tape: Tape | None = None) -> Tensor:
        """Teacher-forced log q for a batch of orderings, shape (batch,)."""
        self._check_graph(g)
        pis = np.asarray(orders, dtype=np.int64)
        if pis.ndim != 2 or pis.shape[1] != g.n:
            raise InputError("orders must have shape (batch, n)")
        for pi in pis:
            validate_ordering(g, tuple(int(v) for v in pi))
        feats, avail = self._step_features(g, pis)
        b, n = pis.shape
        logits = self._node_logits(self.store.bind(tape), g, feats.reshape(b * n, n, -1), tape)
        lp = masked_log_softmax(reshape(logits, (b, n, n)), avail)
        return tensor_sum(take_along_last(lp, pis), axis=-1)

    def log_prob_ordering(self, g: Graph, pi) -> float:
        pi = validate_ordering(g, pi)
        return float(self.log_probs_orderings(g, np.asarray([pi])).data[0])

    def step_logits(self, g: Graph, prefix) -> np.ndarray:
        """Raw per-node logits given an already-chosen prefix."""
        self._check_graph(g)
        prefix = tuple(int(v) for v in prefix)
        if len(prefix) >= g.n or len(set(prefix)) != len(prefix):
            raise InputError("prefix must be distinct nodes, shorter than the graph")
        if any(not 0 <= v < g.n for v in prefix):
            raise InputError("prefix node out of range")
        feats = np.zeros((1, g.n, self.cfg.d_model))
        for step, node in enumerate(prefix, start=1):
            feats[0, node] = self._pe[step]
        logits = self._node_logits(self.store.bind(None), g, feats, None)
        return np.array(logits.data[0])

    def sample_orderings(
        self, g: Graph, count: int, rng: np.random.Generator, record_logits: bool = False
    ) -> list[OrderingSample]:
        """Ancestral draws; each sample consumes an independent child stream
        so any parallel split reproduces the sequential result."""
        self._check_graph(g)
        if count < 1:
            raise InputError("count must be positive")
        n = g.n
        bound = self.store.bind(None)
        uniforms = np.stack([stream.random(n) for stream in rng.spawn(count)])
        feats = np.zeros((count, n, self.cfg.d_model))
        chosen = np.zeros((count, n), dtype=bool)
        pis = np.zeros((count, n), dtype=np.int64)
        log_q = np.zeros(count)
        step_logits: list[np.ndarray] = []
        rows = np.arange(count)
        for s in range(n):
            logits = self._node_logits(bound, g, feats, None)
            if record_logits:
                step_logits.append(np.array(logits.data))
            lp = masked_log_softmax(logits, ~chosen).data
            probs = np.where(chosen, 0.0, np.exp(lp))
            cum = np.cumsum(probs, axis=-1)
            r = uniforms[:, s] * cum[:, -1]
            idx = np.minimum((cum <= r[:, None]).sum(axis=-1), n - 1)
            for i in rows[probs[rows, idx] <= 0.0]:
                idx[i] = int(np.flatnonzero(probs[i] > 0.0)[0])
            log_q += lp[rows, idx]
            pis[:, s] = idx
            chosen[rows, idx] = True
            feats[rows, idx] = self._pe[s + 1]
        return [
            OrderingSample(
                tuple(int(v) for v in pis[i]),
                float(log_q[i]),
                tuple(arr[i] for arr in step_logits) if record_logits else None,
            )
            for i in range(count)
        ]

    # -- persistence -----------------------------------------------------------

    def checkpoint(self, metadata: dict | None = None) -> dict:
        return checkpoint_document(self.store, self.kind, self._metadata(metadata))

    def save(self, path, metadata: dict | None = None) -> None:
        save_checkpoint(path, self.store, self.kind, self._metadata(metadata))

    def _metadata(self, extra: dict | None) -> dict:
        meta = {"config": asdict(self.cfg), "seed": self.cfg.seed}
        meta.update(extra or {})
        return meta

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "OrderPosterior":
        return _build_posterior(*parse_checkpoint(doc))

    @classmethod
    def load(cls, path) -> "OrderPosterior":
        return _build_posterior(*load_checkpoint(path))


def _build_posterior(kind: str, meta: dict, params: dict) -> OrderPosterior:
    if kind != OrderPosterior.kind:
        raise InputError(f"checkpoint kind {kind!r} is not {OrderPosterior.kind!r}")
    q = OrderPosterior(_config_from_metadata(PosteriorConfig, meta))
    _load_params(q.store, params)
    return q


def uniform_ordering(g: Graph, rng: np.random.Generator) -> OrderingSample:
    """One uniformly random ordering; log q is -log n!."""
    pi = tuple(int(v) for v in rng.permutation(g.n))
    return OrderingSample(pi, -math.lgamma(g.n + 1))


class UniformOrderer:
    """Parameter-free stand-in for the learned posterior."""

    kind = "uniform"

    def __init__(self):
        self.store = ParameterStore()

    def log_probs_orderings(self, g: Graph, orders, tape: Tape | None = None) -> Tensor:
        pis = np.asarray(orders, dtype=np.int64)
        if pis.ndim != 2 or pis.shape[1] != g.n:
            raise InputError("orders must have shape (batch, n)")
        for pi in pis:
            validate_ordering(g, tuple(int(v) for v in pi))
        return Tensor(np.full(len(pis), -math.lgamma(g.n + 1)), tape=tape)

    def log_prob_ordering(self, g: Graph, pi) -> float:
        validate_ordering(g, pi)
        return -math.lgamma(g.n + 1)

    def sample_orderings(
        self, g: Graph, count: int, rng: np.random.Generator, record_logits: bool = False
    ) -> list[OrderingSample]:
        if count < 1:
            raise InputError("count must be positive")
        return [uniform_ordering(g, stream) for stream in rng.spawn(count)]


OrderingModel = OrderPosterior | UniformOrderer


def enumerate_log_probs(q, g: Graph) -> dict[Ordering, float]:
    """Teacher-forced log q over every ordering (test-scale sizes only)."""
    pis = np.array(list(permutations(range(g.n))), dtype=np.int64)
    vals = q.log_probs_orderings(g, pis).data
    return {tuple(int(v) for v in pi): float(val) for pi, val in zip(pis, vals)}
