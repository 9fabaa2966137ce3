"""Autoregressive graph generative models over ordered representations.

Two model families share one contract: assign log-probabilities to ordered
representations of a graph (lower-triangular adjacency rows, or node-by-node
growth steps), sample new graphs ancestrally, and combine with ordering
multiplicities to give joint and marginal graph probabilities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache, reduce
from itertools import permutations
from typing import Sequence

import numpy as np

from .errors import InputError, ResourceError
from .graphs import (
    Graph,
    GraphSequence,
    LowerTriangularEncoding,
    Ordering,
    adjacency_matrix,
    decode_adjacency,
    encode_adjacency,
    validate_ordering,
)
from .nn import gru_step, linear, register_gru, register_linear
from .rng import spawn_rng
from .symmetry import (
    automorphism_count,
    sequence_multiplicity_cr,
    sequence_multiplicity_exact,
)
from .tensor import (
    ParameterStore,
    Tape,
    Tensor,
    add,
    checkpoint_document,
    concat,
    load_checkpoint,
    log_sigmoid,
    mean,
    mul,
    parse_checkpoint,
    reshape,
    save_checkpoint,
    tanh,
    tensor_sum,
)

MULTIPLICITY_MODES = ("exact", "cr")


def log_sum_exp(values: np.ndarray) -> float:
    m = float(np.max(values))
    return m + float(np.log(np.sum(np.exp(values - m))))


@lru_cache(maxsize=4096)
def cached_automorphism_count(g: Graph) -> int:
    return automorphism_count(g)


def _bernoulli_log_prob(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None) -> Tensor:
    """Sum over the last axis of Bernoulli log-likelihoods at ``targets``."""
    ll = add(
        mul(targets, log_sigmoid(logits)),
        mul(1.0 - targets, log_sigmoid(mul(logits, -1.0))),
    )
    if mask is not None:
        ll = mul(ll, mask)
    return tensor_sum(ll, axis=-1)


def _broadcast_rows(vec: Tensor, batch: int) -> Tensor:
    """(d,) parameter replicated to (batch, d), differentiably."""
    return add(Tensor(np.zeros((batch, vec.data.shape[-1]))), vec)


@dataclass(frozen=True)
class AdjacencyModelConfig:
    max_nodes: int = 20
    hidden: int = 64
    row_embed: int = 32
    fixed_node_count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_nodes < 2:
            raise InputError("max_nodes must be at least 2")
        if self.fixed_node_count is not None and not 1 <= self.fixed_node_count <= self.max_nodes:
            raise InputError("fixed_node_count must lie in [1, max_nodes]")


class AdjacencyModel:
    """Recurrent model over lower-triangular adjacency rows.

    A GRU consumes one full-width row per step; each state emits Bernoulli
    logits for the next row's entries and for the continue/stop decision.
    With ``fixed_node_count`` set, size is deterministic and the stop terms
    vanish (useful for hand-built fixtures).
    """

    kind = "adjacency"

    def __init__(self, cfg: AdjacencyModelConfig, zero_init: bool = False):
        self.cfg = cfg
        self.store = ParameterStore()
        rng = spawn_rng(cfg.seed, 0)
        width = cfg.max_nodes - 1
        register_linear(self.store, "embed", width, cfg.row_embed, rng, zero=zero_init)
        register_gru(self.store, "cell", cfg.row_embed, cfg.hidden, rng, zero=zero_init)
        self.store.add("state0", np.zeros(cfg.hidden))
        register_linear(self.store, "edges", cfg.hidden, width, rng, zero=zero_init)
        register_linear(self.store, "stop", cfg.hidden, 1, rng, zero=zero_init)

    # -- step pieces shared by scoring and sampling -------------------------

    def _advance(self, bound, state: Tensor, row: np.ndarray | Tensor) -> Tensor:
        return gru_step(bound, "cell", state, tanh(linear(bound, "embed", row)))

    def _row_logits(self, bound, state: Tensor) -> Tensor:
        return linear(bound, "edges", state)

    def _stop_logit(self, bound, state: Tensor) -> Tensor:
        return reshape(linear(bound, "stop", state), state.data.shape[:-1])

    # -- scoring -------------------------------------------------------------

    def _check_n(self, n: int) -> None:
        if not 1 <= n <= self.cfg.max_nodes:
            raise InputError(f"graph size {n} outside [1, {self.cfg.max_nodes}]")
        fixed = self.cfg.fixed_node_count
        if fixed is not None and n != fixed:
            raise InputError(f"model generates exactly {fixed} nodes, got {n}")

    def log_prob_rows(self, rows: np.ndarray, tape: Tape | None = None) -> Tensor:
        """Log-probabilities of (batch, n-1, max_nodes-1) padded row arrays."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 3 or rows.shape[2] != self.cfg.max_nodes - 1:
            raise InputError("rows must have shape (batch, steps, max_nodes - 1)")
        batch, steps, width = rows.shape
        self._check_n(steps + 1)
        sized = self.cfg.fixed_node_count is not None
        bound = self.store.bind(tape)
        state = _broadcast_rows(bound["state0"], batch)
        terms = [Tensor(np.zeros(batch), tape=tape)]
        for k in range(steps):
            if not sized:
                terms.append(log_sigmoid(mul(self._stop_logit(bound, state), -1.0)))
            mask = np.zeros(width)
            mask[: k + 1] = 1.0
            terms.append(_bernoulli_log_prob(self._row_logits(bound, state), rows[:, k, :], mask))
            state = self._advance(bound, state, rows[:, k, :])
        if not sized:
            terms.append(log_sigmoid(self._stop_logit(bound, state)))
        return reduce(add, terms)

    def log_prob_encodings(
        self, encs: Sequence[LowerTriangularEncoding], tape: Tape | None = None
    ) -> Tensor:
        if not encs:
            raise InputError("need at least one encoding")
        n = encs[0].n
        if any(e.n != n for e in encs):
            raise InputError("batched encodings must share a node count")
        self._check_n(n)
        rows = np.zeros((len(encs), n - 1, self.cfg.max_nodes - 1))
        for b, enc in enumerate(encs):
            for k, row in enumerate(enc.rows):
                rows[b, k, : k + 1] = row
        return self.log_prob_rows(rows, tape)

    def log_prob(self, enc: LowerTriangularEncoding) -> float:
        return float(self.log_prob_encodings([enc]).data[0])

    # -- sampling ------------------------------------------------------------

    def sample(self, count: int, rng: np.random.Generator) -> list[Graph]:
        if count < 1:
            raise InputError("count must be positive")
        cfg = self.cfg
        bound = self.store.bind(None)
        state = _broadcast_rows(bound["state0"], count)
        alive = np.ones(count, dtype=bool)
        rows: list[list[tuple[int, ...]]] = [[] for _ in range(count)]
        for k in range(cfg.max_nodes - 1):
            if cfg.fixed_node_count is not None:
                if k >= cfg.fixed_node_count - 1:
                    break
            else:
                p_stop = 1.0 / (1.0 + np.exp(-self._stop_logit(bound, state).data))
                stopping = alive & (rng.random(count) < p_stop)
                alive &= ~stopping
                if not alive.any():
                    break
            logits = self._row_logits(bound, state).data[:, : k + 1]
            bits = (rng.random(logits.shape) < 1.0 / (1.0 + np.exp(-logits))).astype(np.float64)
            for b in range(count):
                if alive[b]:
                    rows[b].append(tuple(int(x) for x in bits[b]))
            full = np.zeros((count, cfg.max_nodes - 1))
            full[:, : k + 1] = np.where(alive[:, None], bits, 0.0)
            state = self._advance(bound, state, full)
        graphs = []
        for b in range(count):
            n = len(rows[b]) + 1
            graphs.append(decode_adjacency(LowerTriangularEncoding(n, tuple(rows[b]))))
        return graphs

    # -- persistence ----------------------------------------------------------

    def checkpoint(self, metadata: dict | None = None) -> dict:
        return checkpoint_document(self.store, self.kind, _model_metadata(self, metadata))

    def save(self, path, metadata: dict | None = None) -> None:
        save_checkpoint(path, self.store, self.kind, _model_metadata(self, metadata))

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "AdjacencyModel":
        return _expect_kind(model_from_document(doc), cls)


@dataclass(frozen=True)
class SequenceModelConfig:
    max_nodes: int = 20
    hidden: int = 32
    rounds: int = 2
    edge_hidden: int = 32
    fixed_node_count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_nodes < 2:
            raise InputError("max_nodes must be at least 2")
        if self.fixed_node_count is not None and not 1 <= self.fixed_node_count <= self.max_nodes:
            raise InputError("fixed_node_count must lie in [1, max_nodes]")


class SequenceModel:
    """Node-by-node growth model with a message-passing propagator.

    Each step re-embeds the current partial graph (summed messages with a
    gated update, repeated ``rounds`` times from a learned constant), then an
    edge head scores the new node against every existing node and a stop head
    reads the mean node state.
    """

    kind = "sequence"

    def __init__(self, cfg: SequenceModelConfig, zero_init: bool = False):
        self.cfg = cfg
        self.store = ParameterStore()
        rng = spawn_rng(cfg.seed, 1)
        d = cfg.hidden
        self.store.add("node0", np.zeros(d) if zero_init else spawn_rng(cfg.seed, 2).normal(0, 0.1, d))
        register_linear(self.store, "msg", d, d, rng, zero=zero_init)
        register_gru(self.store, "cell", d, d, rng, zero=zero_init)
        register_linear(self.store, "edge1", 3 * d, cfg.edge_hidden, rng, zero=zero_init)
        register_linear(self.store, "edge2", cfg.edge_hidden, 1, rng, zero=zero_init)
        register_linear(self.store, "stop", d, 1, rng, zero=zero_init)

    def _check_n(self, n: int) -> None:
        if not 1 <= n <= self.cfg.max_nodes:
            raise InputError(f"graph size {n} outside [1, {self.cfg.max_nodes}]")
        fixed = self.cfg.fixed_node_count
        if fixed is not None and n != fixed:
            raise InputError(f"model generates exactly {fixed} nodes, got {n}")

    # -- step pieces -----------------------------------------------------------

    def _propagate(self, bound, adj: np.ndarray) -> Tensor:
        """Node states (..., t, hidden) for adjacency blocks (..., t, t)."""
        t = adj.shape[-1]
        lead = adj.shape[:-2]
        h = add(Tensor(np.zeros(lead + (t, self.cfg.hidden))), bound["node0"])
        for _ in range(self.cfg.rounds):
            msgs = Tensor(adj) @ linear(bound, "msg", h)
            h = gru_step(bound, "cell", h, msgs)
        return h

    def _edge_logits(self, bound, h: Tensor, readout: Tensor) -> Tensor:
        """Bernoulli logits (..., t) for joining the new node to each node."""
        t = h.data.shape[-2]
        lead = h.data.shape[:-1]
        new = add(Tensor(np.zeros(lead + (self.cfg.hidden,))), bound["node0"])
        ro = add(Tensor(np.zeros(lead + (self.cfg.hidden,))), reshape(readout, readout.data.shape[:-1] + (1, self.cfg.hidden)))
        feats = concat_last([h, new, ro])
        hidden = tanh(linear(bound, "edge1", feats))
        return reshape(linear(bound, "edge2", hidden), lead)

    def _stop_logit(self, bound, readout: Tensor) -> Tensor:
        return reshape(linear(bound, "stop", readout), readout.data.shape[:-1])

    # -- scoring -----------------------------------------------------------------

    def _ordered_log_prob(self, aperm: np.ndarray, tape: Tape | None) -> Tensor:
        """(batch,) log-probabilities of permuted adjacency matrices."""
        batch, n, _ = aperm.shape
        self._check_n(n)
        sized = self.cfg.fixed_node_count is not None
        bound = self.store.bind(tape)
        terms = [Tensor(np.zeros(batch), tape=tape)]
        for t in range(1, n):
            h = self._propagate(bound, aperm[:, :t, :t])
            readout = tensor_mean_nodes(h)
            if not sized:
                terms.append(log_sigmoid(mul(self._stop_logit(bound, readout), -1.0)))
            logits = self._edge_logits(bound, h, readout)
            terms.append(_bernoulli_log_prob(logits, aperm[:, t, :t], None))
        if not sized:
            h = self._propagate(bound, aperm)
            terms.append(log_sigmoid(self._stop_logit(bound, tensor_mean_nodes(h))))
        return reduce(add, terms)

    def log_prob_orderings(
        self, g: Graph, orders: np.ndarray, tape: Tape | None = None
    ) -> Tensor:
        """Log-probabilities of growing ``g`` along each ordering in ``orders``."""
        pis = np.asarray(orders, dtype=np.int64)
        if pis.ndim != 2 or pis.shape[1] != g.n:
            raise InputError("orders must have shape (batch, n)")
        a = adjacency_matrix(g)
        aperm = a[pis[:, :, None], pis[:, None, :]]
        return self._ordered_log_prob(aperm, tape)

    def log_prob_sequence(
        self, gs: GraphSequence, trace_edges: Sequence[Sequence[int]]
    ) -> float:
        """Score one growth trace; the per-step edge vectors must match the
        sequence's own edges."""
        n = gs.n
        self._check_n(n)
        if len(trace_edges) != n - 1:
            raise InputError(f"trace must have {n - 1} edge vectors")
        for k, bits in enumerate(trace_edges):
            if len(bits) != k + 1:
                raise InputError(f"trace step {k} must have {k + 1} bits")
            for j, bit in enumerate(bits):
                if bit not in (0, 1):
                    raise InputError("trace bits must be 0 or 1")
                if bool(bit) != gs.steps[k + 1].has_edge(k + 1, j):
                    raise InputError(f"trace step {k} disagrees with the sequence")
        aperm = adjacency_matrix(gs.final)[None, :, :]
        return float(self._ordered_log_prob(aperm, None).data[0])

    # -- sampling ---------------------------------------------------------------

    def sample(self, count: int, rng: np.random.Generator) -> list[Graph]:
        if count < 1:
            raise InputError("count must be positive")
        cfg = self.cfg
        bound = self.store.bind(None)
        out: list[Graph] = []
        adjs = [np.zeros((1, 1, 1)) for _ in range(count)]
        alive = np.ones(count, dtype=bool)
        # grow every sample in lockstep; finished samples stop participating
        for t in range(1, cfg.max_nodes):
            if cfg.fixed_node_count is not None:
                if t >= cfg.fixed_node_count:
                    break
            live_idx = np.flatnonzero(alive)
            if live_idx.size == 0:
                break
            block = np.stack([adjs[b][0] for b in live_idx])
            h = self._propagate(bound, block)
            readout = tensor_mean_nodes(h)
            if cfg.fixed_node_count is None:
                p_stop = 1.0 / (1.0 + np.exp(-self._stop_logit(bound, readout).data))
                stops = rng.random(live_idx.size) < p_stop
                for i, b in enumerate(live_idx):
                    if stops[i]:
                        alive[b] = False
                live_idx = live_idx[~stops]
                if live_idx.size == 0:
                    break
                keep = ~stops
                block = block[keep]
                h = self._propagate(bound, block)
                readout = tensor_mean_nodes(h)
            logits = self._edge_logits(bound, h, readout).data
            bits = (rng.random(logits.shape) < 1.0 / (1.0 + np.exp(-logits))).astype(np.float64)
            for i, b in enumerate(live_idx):
                old = adjs[b][0]
                grown = np.zeros((t + 1, t + 1))
                grown[:t, :t] = old
                grown[t, :t] = bits[i]
                grown[:t, t] = bits[i]
                adjs[b] = grown[None]
        for b in range(count):
            a = adjs[b][0]
            n = a.shape[0]
            edges = [(i, j) for i in range(n) for j in range(i + 1, n) if a[i, j] > 0]
            out.append(Graph.from_edges(n, edges))
        return out

    # -- persistence ---------------------------------------------------------------

    def checkpoint(self, metadata: dict | None = None) -> dict:
        return checkpoint_document(self.store, self.kind, _model_metadata(self, metadata))

    def save(self, path, metadata: dict | None = None) -> None:
        save_checkpoint(path, self.store, self.kind, _model_metadata(self, metadata))

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "SequenceModel":
        return _expect_kind(model_from_document(doc), cls)


GraphModel = AdjacencyModel | SequenceModel


def concat_last(tensors: Sequence[Tensor]) -> Tensor:
    return concat(tensors, axis=-1)


def tensor_mean_nodes(h: Tensor) -> Tensor:
    """Mean over the node axis of (..., t, d) states."""
    return mean(h, axis=-2)


def _config_from_metadata(cls, meta: dict):
    cfg = meta.get("config")
    if not isinstance(cfg, dict):
        raise InputError("checkpoint metadata must carry a config mapping")
    try:
        return cls(**cfg)
    except TypeError as exc:
        raise InputError(f"bad checkpoint config: {exc}") from exc


def _load_params(store: ParameterStore, params: dict[str, np.ndarray]) -> None:
    expected = set(store.names())
    got = set(params)
    if expected != got:
        missing = expected - got
        extra = got - expected
        raise InputError(f"checkpoint parameters mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, arr in params.items():
        target = store.get(name)
        if target.shape != arr.shape:
            raise InputError(f"parameter {name!r} has shape {arr.shape}, expected {target.shape}")
        target[:] = arr


def _model_metadata(model: GraphModel, extra: dict | None) -> dict:
    meta = {"config": asdict(model.cfg), "seed": model.cfg.seed}
    meta.update(extra or {})
    return meta


def _expect_kind(model: GraphModel, cls) -> GraphModel:
    if not isinstance(model, cls):
        raise InputError(f"checkpoint kind {model.kind!r} is not {cls.kind!r}")
    return model


def _build_model(kind: str, meta: dict, params: dict) -> GraphModel:
    if kind == AdjacencyModel.kind:
        model = AdjacencyModel(_config_from_metadata(AdjacencyModelConfig, meta))
    elif kind == SequenceModel.kind:
        model = SequenceModel(_config_from_metadata(SequenceModelConfig, meta))
    else:
        raise InputError(f"unknown model kind {kind!r}")
    _load_params(model.store, params)
    return model


def model_from_document(doc: dict) -> GraphModel:
    """Rebuild whichever model family a checkpoint document holds."""
    return _build_model(*parse_checkpoint(doc))


def load_model(path) -> GraphModel:
    """Read a model checkpoint file of either family."""
    return _build_model(*load_checkpoint(path))


def _check_mode(mode: str) -> None:
    if mode not in MULTIPLICITY_MODES:
        raise InputError(f"multiplicity mode must be one of {MULTIPLICITY_MODES}")


def ordering_multiplicity(model: GraphModel, g: Graph, order: Ordering, mode: str) -> int:
    """How many orderings share this ordering's representation under the model."""
    _check_mode(mode)
    if isinstance(model, AdjacencyModel):
        return cached_automorphism_count(g)
    if mode == "exact":
        return sequence_multiplicity_exact(g, order)
    return sequence_multiplicity_cr(g, order)


def joint_log_prob(
    model: GraphModel, g: Graph, order: Sequence[int], mode: str = "exact"
) -> float:
    """log p(graph, ordering): the ordered representation's log-probability
    minus the log of its ordering multiplicity.

    Adjacency models always divide by the exact automorphism count; for
    sequence models ``mode`` selects the exact orbit product or its cheaper
    color-refinement upper bound (which makes the result a lower bound).
    """
    pi = validate_ordering(g, order)
    _check_mode(mode)
    if isinstance(model, AdjacencyModel):
        rep = model.log_prob(encode_adjacency(g, pi))
    else:
        rep = float(model.log_prob_orderings(g, np.asarray([pi])).data[0])
    return rep - math.log(ordering_multiplicity(model, g, pi, mode))


def joint_log_probs(
    model: GraphModel, g: Graph, orders: np.ndarray, mode: str = "exact", tape: Tape | None = None
) -> tuple[Tensor, np.ndarray]:
    """Batched joint log-probabilities for orderings of one graph.

    Returns (representation log-probs as a tensor, log-multiplicities as a
    constant array); the joint is their difference.
    """
    _check_mode(mode)
    pis = np.asarray(orders, dtype=np.int64)
    if isinstance(model, AdjacencyModel):
        a = adjacency_matrix(g)
        aperm = a[pis[:, :, None], pis[:, None, :]]
        rows = np.zeros((len(pis), g.n - 1, model.cfg.max_nodes - 1))
        for k in range(g.n - 1):
            rows[:, k, : k + 1] = aperm[:, k + 1, : k + 1]
        rep = model.log_prob_rows(rows, tape)
        log_mult = np.full(len(pis), math.log(cached_automorphism_count(g)))
    else:
        rep = model.log_prob_orderings(g, pis, tape)
        log_mult = np.array(
            [
                math.log(ordering_multiplicity(model, g, tuple(int(v) for v in pi), mode))
                for pi in pis
            ]
        )
    return rep, log_mult


def exact_marginal_log_prob(model: GraphModel, g: Graph, max_nodes: int = 8) -> float:
    """log p(graph) by summing the joint over every ordering (factorial cost)."""
    if g.n > max_nodes:
        raise ResourceError(
            f"exact marginal enumerates {g.n}! orderings; raise max_nodes (currently {max_nodes}) to allow"
        )
    logs = []
    chunk: list[tuple[int, ...]] = []

    def flush() -> None:
        if not chunk:
            return
        rep, log_mult = joint_log_probs(model, g, np.array(chunk), mode="exact")
        logs.append(rep.data - log_mult)
        chunk.clear()

    for pi in permutations(range(g.n)):
        chunk.append(pi)
        if len(chunk) == 8192:
            flush()
    flush()
    return log_sum_exp(np.concatenate(logs))
