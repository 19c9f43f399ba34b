"""Unsupervised node embeddings for the scan graph.

Every node gets a unit-norm vector from a K-hop sampled-neighborhood
aggregation network.  Neighbor draws and the aggregation coefficients are
proportional to edge weights (the RSS-derived attention); stacking K
aggregate-concat-affine-relu-normalize layers yields the output
representation.  Training is skip-gram style: co-occurrence pairs from
short weighted random walks are pulled together, degree-biased negative
draws are pushed apart, and all gradients are hand-derived (no autodiff).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ValidationError
from .graph import BipartiteGraph

logger = logging.getLogger(__name__)

ZERO_GUARD_NORM = 1e-12
NEGATIVE_POWER = 0.75  # degree exponent of the negative-sampling distribution


@dataclass(frozen=True)
class GnnConfig:
    dim: int = 32
    hops: int = 2
    fanout: tuple[int, ...] = (10, 10)
    walk_length: int = 5
    walks_per_node: int = 20
    negatives: int = 4  # draws per positive pair
    epochs: int = 10
    batch_size: int = 512
    learning_rate: float = 1e-2
    seed: int = 0
    aggregator: str = "weighted"  # or "uniform" (attention off)
    walk_transition: str = "weighted"  # or "uniform"
    pair_window: int | None = None  # co-occurrence window in steps; None = whole walk
    optimizer: str = "adam"  # or "sgd"
    lr_schedule: str = "linear"  # or "constant"; linear decays to 0 over training
    trainable_inputs: bool = True  # False keeps the random input table frozen

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValidationError(f"embedding dim must be >= 2, got {self.dim}")
        if self.hops < 1:
            raise ValidationError(f"hops must be >= 1, got {self.hops}")
        if len(self.fanout) != self.hops:
            raise ValidationError(
                f"fanout needs one entry per hop: {len(self.fanout)} != {self.hops}"
            )
        if any(f < 1 for f in self.fanout):
            raise ValidationError("fanout entries must be >= 1")
        if self.walk_length < 1 or self.walks_per_node < 1:
            raise ValidationError("walk length and walks per node must be >= 1")
        if self.negatives < 1:
            raise ValidationError("need at least one negative draw per pair")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValidationError("invalid training hyperparameters")
        if self.aggregator not in ("weighted", "uniform"):
            raise ValidationError(f"unknown aggregator: {self.aggregator!r}")
        if self.walk_transition not in ("weighted", "uniform"):
            raise ValidationError(f"unknown walk transition: {self.walk_transition!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer: {self.optimizer!r}")
        if self.lr_schedule not in ("linear", "constant"):
            raise ValidationError(f"unknown lr schedule: {self.lr_schedule!r}")
        if self.pair_window is not None and self.pair_window < 1:
            raise ValidationError("pair window must be >= 1 step")


@dataclass
class GnnModel:
    input_embeddings: np.ndarray  # (num_nodes, d)
    weights: list[np.ndarray]  # hops matrices of shape (d, 2d)
    config: GnnConfig


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: np.ndarray  # (num_nodes, d), unit rows
    n_macs: int

    @property
    def sample_vectors(self) -> np.ndarray:
        return self.vectors[self.n_macs :]

    @property
    def mac_vectors(self) -> np.ndarray:
        return self.vectors[: self.n_macs]


def init_model(graph: BipartiteGraph, config: GnnConfig, rng: np.random.Generator) -> GnnModel:
    d = config.dim
    inputs = rng.normal(0.0, 1.0 / math.sqrt(d), size=(graph.num_nodes, d))
    weights = [
        rng.normal(0.0, math.sqrt(2.0 / (3.0 * d)), size=(d, 2 * d))
        for _ in range(config.hops)
    ]
    return GnnModel(input_embeddings=inputs, weights=weights, config=config)


def sigmoid(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softplus(v: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, np.asarray(v, dtype=np.float64))


# ---------------------------------------------------------------------------
# Neighbor sampling
# ---------------------------------------------------------------------------

def _draw_edges(
    graph: BipartiteGraph, nodes: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Flat edge indices of ``count`` weight-proportional draws per node."""
    lo = graph.indptr[nodes]
    hi = graph.indptr[nodes + 1]
    base = graph.cum0[lo]
    total = graph.cum0[hi] - base
    targets = base[:, None] + rng.random((len(nodes), count)) * total[:, None]
    return np.searchsorted(graph.cum0, targets, side="right") - 1


def sample_neighbors(
    graph: BipartiteGraph, node: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """``count`` independent neighbor draws of ``node``, with replacement,
    each with probability proportional to the edge weight."""
    edge_idx = _draw_edges(graph, np.array([node], dtype=np.int64), count, rng)[0]
    return graph.adj[edge_idx]


def aggregate_weighted(
    graph: BipartiteGraph, target: int, neighbors, reps: np.ndarray
) -> np.ndarray:
    """Convex combination of neighbor representations with coefficients
    proportional to the target-neighbor edge weights (multiplicity counts)."""
    reps = np.asarray(reps, dtype=np.float64)
    w = np.empty(len(neighbors), dtype=np.float64)
    for t, nb in enumerate(neighbors):
        ew = graph.edge_weight(target, int(nb))
        if ew is None:
            raise ValidationError(f"{nb} is not a neighbor of {target}")
        w[t] = ew
    return (w / w.sum()) @ reps


def aggregate_uniform(
    graph: BipartiteGraph, target: int, neighbors, reps: np.ndarray
) -> np.ndarray:
    """Plain mean of neighbor representations (attention ablation)."""
    reps = np.asarray(reps, dtype=np.float64)
    return reps.mean(axis=0)


def freeze_neighborhoods(
    graph: BipartiteGraph, config: GnnConfig, rng: np.random.Generator
) -> dict[tuple[int, int], np.ndarray]:
    """One fixed neighbor draw per (hop, node); lets tests and finite
    differences evaluate the loss as a deterministic function of parameters."""
    frozen: dict[tuple[int, int], np.ndarray] = {}
    for k in range(1, config.hops + 1):
        for node in range(graph.num_nodes):
            frozen[(k, node)] = sample_neighbors(graph, node, config.fanout[k - 1], rng)
    return frozen


# ---------------------------------------------------------------------------
# Batched forward / backward
# ---------------------------------------------------------------------------

@dataclass
class _LayerCache:
    parents: np.ndarray
    coeff: np.ndarray  # (P, s)
    child_pos: np.ndarray  # (P, s) positions in the previous level
    self_pos: np.ndarray  # (P,)
    concat: np.ndarray  # (P, 2d)
    pos_mask: np.ndarray | None  # (P, d) relu derivative; None for the linear hop
    safe_norms: np.ndarray  # (P, 1)
    guard: np.ndarray  # (P,) zero-guard rows
    reps: np.ndarray  # (P, d)


@dataclass
class _BatchCache:
    levels: list[np.ndarray]
    layers: list[_LayerCache]


def _lookup_weights(graph: BipartiteGraph, node: int, ids: np.ndarray) -> np.ndarray:
    nbrs = graph.neighbors(node)
    wts = graph.weights(node)
    out = np.empty(len(ids), dtype=np.float64)
    for t, nb in enumerate(ids):
        hit = np.nonzero(nbrs == nb)[0]
        if len(hit) == 0:
            raise ValidationError(f"{nb} is not a neighbor of {node}")
        out[t] = wts[hit[0]]
    return out


def _forward_batch(
    model: GnnModel,
    graph: BipartiteGraph,
    nodes: np.ndarray,
    rng: np.random.Generator,
    frozen: dict[tuple[int, int], np.ndarray] | None = None,
) -> tuple[np.ndarray, _BatchCache]:
    """Representations r^K for ``nodes`` (must be sorted unique) plus the
    cache needed for the backward pass."""
    cfg = model.config
    K = cfg.hops
    d = cfg.dim

    levels: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * (K + 1)
    levels[K] = nodes
    draws: list[tuple[np.ndarray, np.ndarray]] = [None] * (K + 1)  # type: ignore[list-item]
    for k in range(K, 0, -1):
        parents = levels[k]
        s = cfg.fanout[k - 1]
        if frozen is None:
            edge_idx = _draw_edges(graph, parents, s, rng)
            child_ids = graph.adj[edge_idx]
            child_wts = graph.adj_w[edge_idx]
        else:
            child_ids = np.empty((len(parents), s), dtype=np.int64)
            child_wts = np.empty((len(parents), s), dtype=np.float64)
            for row, node in enumerate(parents):
                ids = np.asarray(frozen[(k, int(node))], dtype=np.int64)
                child_ids[row] = ids
                child_wts[row] = _lookup_weights(graph, int(node), ids)
        draws[k] = (child_ids, child_wts)
        levels[k - 1] = np.unique(np.concatenate([parents, child_ids.ravel()]))

    reps = model.input_embeddings[levels[0]]
    layer_caches: list[_LayerCache] = []
    for k in range(1, K + 1):
        parents = levels[k]
        child_ids, child_wts = draws[k]
        prev = levels[k - 1]
        child_pos = np.searchsorted(prev, child_ids)
        self_pos = np.searchsorted(prev, parents)
        child_reps = reps[child_pos]  # (P, s, d)
        if cfg.aggregator == "weighted":
            coeff = child_wts / child_wts.sum(axis=1, keepdims=True)
        else:
            coeff = np.full_like(child_wts, 1.0 / child_wts.shape[1])
        agg = np.einsum("ps,psd->pd", coeff, child_reps)
        concat = np.concatenate([reps[self_pos], agg], axis=1)
        z = concat @ model.weights[k - 1].T
        if k < K:
            # Hidden hops are rectified; the output hop stays linear so the
            # final representations can use the whole sphere.
            h = np.maximum(z, 0.0)
            pos_mask = h > 0
        else:
            h = z
            pos_mask = None
        norms = np.sqrt((h * h).sum(axis=1, keepdims=True))
        guard = norms[:, 0] < ZERO_GUARD_NORM
        safe_norms = np.where(guard[:, None], 1.0, norms)
        out = h / safe_norms
        if guard.any():
            out[guard] = 0.0
            out[guard, 0] = 1.0  # documented fallback: unit basis vector e1
        layer_caches.append(
            _LayerCache(
                parents=parents,
                coeff=coeff,
                child_pos=child_pos,
                self_pos=self_pos,
                concat=concat,
                pos_mask=pos_mask,
                safe_norms=safe_norms,
                guard=guard,
                reps=out,
            )
        )
        reps = out
    return reps, _BatchCache(levels=levels, layers=layer_caches)


def _scatter_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """out[idx] += rows with repeated indices accumulated.

    Sort-and-segment-sum is several times faster than ufunc.at here.
    """
    if len(idx) == 0:
        return
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.nonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])[0]
    sums = np.add.reduceat(rows[order], starts, axis=0)
    out[sorted_idx[starts]] += sums


def _backward_batch(
    model: GnnModel, cache: _BatchCache, grad_out: np.ndarray
) -> dict[str, object]:
    """Backpropagate d(loss)/d(r^K) through normalize, relu, the affine map,
    the aggregation, and down to the input table."""
    cfg = model.config
    d = cfg.dim
    grad_w = [np.zeros_like(w) for w in model.weights]
    grad = grad_out
    for k in range(cfg.hops, 0, -1):
        lc = cache.layers[k - 1]
        # r = h / |h|: project out the radial component, divide by the norm.
        radial = (grad * lc.reps).sum(axis=1, keepdims=True)
        dh = (grad - radial * lc.reps) / lc.safe_norms
        if lc.guard.any():
            dh[lc.guard] = 0.0  # guarded rows emit a constant vector
        dz = dh if lc.pos_mask is None else dh * lc.pos_mask
        grad_w[k - 1] += dz.T @ lc.concat
        dconcat = dz @ model.weights[k - 1]
        dagg = dconcat[:, d:]
        prev_grad = np.zeros((len(cache.levels[k - 1]), d), dtype=np.float64)
        _scatter_rows(prev_grad, lc.self_pos, dconcat[:, :d])
        dchild = lc.coeff[:, :, None] * dagg[:, None, :]
        _scatter_rows(prev_grad, lc.child_pos.ravel(), dchild.reshape(-1, d))
        grad = prev_grad
    grad_input = np.zeros_like(model.input_embeddings)
    grad_input[cache.levels[0]] = grad  # level-0 ids are unique
    return {"input_embeddings": grad_input, "weights": grad_w}


def forward(
    model: GnnModel,
    graph: BipartiteGraph,
    node: int,
    rng: np.random.Generator,
    frozen: dict[tuple[int, int], np.ndarray] | None = None,
) -> np.ndarray:
    """Unit-norm representation of one node with a freshly sampled
    neighborhood."""
    nodes = np.array([node], dtype=np.int64)
    reps, _ = _forward_batch(model, graph, nodes, rng, frozen)
    return reps[0]


def embed_all(
    model: GnnModel,
    graph: BipartiteGraph,
    rng: np.random.Generator,
    chunk: int = 2048,
) -> EmbeddingTable:
    """Final representations for every node, one fresh neighborhood each."""
    vectors = np.empty((graph.num_nodes, model.config.dim), dtype=np.float64)
    for start in range(0, graph.num_nodes, chunk):
        nodes = np.arange(start, min(start + chunk, graph.num_nodes), dtype=np.int64)
        reps, _ = _forward_batch(model, graph, nodes, rng)
        vectors[nodes] = reps
    return EmbeddingTable(vectors=vectors, n_macs=graph.n_macs)


# ---------------------------------------------------------------------------
# Random-walk corpus
# ---------------------------------------------------------------------------

def generate_walks(
    graph: BipartiteGraph, config: GnnConfig, rng: np.random.Generator
) -> np.ndarray:
    """``walks_per_node`` walks from every node, each of ``walk_length``
    steps; rows are node-id sequences of length walk_length + 1."""
    starts = np.repeat(
        np.arange(graph.num_nodes, dtype=np.int64), config.walks_per_node
    )
    walks = np.empty((len(starts), config.walk_length + 1), dtype=np.int64)
    walks[:, 0] = starts
    for step in range(1, config.walk_length + 1):
        cur = walks[:, step - 1]
        if config.walk_transition == "weighted":
            edge_idx = _draw_edges(graph, cur, 1, rng)[:, 0]
        else:
            deg = graph.indptr[cur + 1] - graph.indptr[cur]
            offs = (rng.random(len(cur)) * deg).astype(np.int64)
            edge_idx = graph.indptr[cur] + offs
        walks[:, step] = graph.adj[edge_idx]
    return walks


def walk_pairs(walks: np.ndarray, window: int | None = None) -> np.ndarray:
    """Unordered co-occurring pairs of distinct nodes within each walk, with
    multiplicity; ``window`` caps the step distance (None = whole walk)."""
    length = walks.shape[1]
    ii, jj = np.triu_indices(length, k=1)
    if window is not None:
        keep_cols = (jj - ii) <= window
        ii, jj = ii[keep_cols], jj[keep_cols]
    a = walks[:, ii].ravel()
    b = walks[:, jj].ravel()
    keep = a != b
    return np.stack([a[keep], b[keep]], axis=1)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def negative_cumulative(graph: BipartiteGraph) -> np.ndarray:
    """Cumulative weights of the degree^0.75 negative-sampling distribution."""
    return np.cumsum(graph.degrees().astype(np.float64) ** NEGATIVE_POWER)


def draw_negatives(
    graph: BipartiteGraph,
    shape: tuple[int, ...],
    rng: np.random.Generator,
    cumulative: np.ndarray | None = None,
) -> np.ndarray:
    if cumulative is None:
        cumulative = negative_cumulative(graph)
    targets = rng.random(shape) * cumulative[-1]
    return np.searchsorted(cumulative, targets, side="right").astype(np.int64)


def loss_and_grad(
    model: GnnModel,
    graph: BipartiteGraph,
    pairs: np.ndarray,
    rng: np.random.Generator,
    frozen: dict[tuple[int, int], np.ndarray] | None = None,
    negatives: np.ndarray | None = None,
    negative_cum: np.ndarray | None = None,
) -> tuple[float, dict[str, object]]:
    """Mean skip-gram negative-sampling loss over a batch of positive pairs,
    plus exact gradients for the input table and every weight matrix.

    Per pair (i, j): -log s(r_i.r_j) - sum over the negative draws z of
    log s(-r_i.r_z), with s the logistic function.  Passing ``frozen``
    neighborhoods and ``negatives`` makes the value a deterministic function
    of the parameters (used by the finite-difference harness).
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValidationError("empty batch of pairs")
    batch = len(pairs)
    d = model.config.dim
    if negatives is None:
        negatives = draw_negatives(
            graph, (batch, model.config.negatives), rng, negative_cum
        )
    negatives = np.asarray(negatives, dtype=np.int64)
    nodes = np.unique(np.concatenate([pairs.ravel(), negatives.ravel()]))
    reps, cache = _forward_batch(model, graph, nodes, rng, frozen)
    pos_i = np.searchsorted(nodes, pairs[:, 0])
    pos_j = np.searchsorted(nodes, pairs[:, 1])
    pos_z = np.searchsorted(nodes, negatives)
    ri = reps[pos_i]
    rj = reps[pos_j]
    rz = reps[pos_z]  # (B, tau, d)

    x = (ri * rj).sum(axis=1)
    y = np.einsum("bd,btd->bt", ri, rz)
    loss = float((softplus(-x).sum() + softplus(y).sum()) / batch)

    dx = -sigmoid(-x) / batch  # d(mean loss)/dx
    dy = sigmoid(y) / batch  # (B, tau)
    grad_reps = np.zeros_like(reps)
    _scatter_rows(grad_reps, pos_i, dx[:, None] * rj + np.einsum("bt,btd->bd", dy, rz))
    _scatter_rows(grad_reps, pos_j, dx[:, None] * ri)
    _scatter_rows(grad_reps, pos_z.ravel(), (dy[:, :, None] * ri[:, None, :]).reshape(-1, d))
    grads = _backward_batch(model, cache, grad_reps)
    return loss, grads


# ---------------------------------------------------------------------------
# Optimizers and training
# ---------------------------------------------------------------------------

class _Adam:
    def __init__(self, tensors: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(t) for t in tensors]
        self.v = [np.zeros_like(t) for t in tensors]
        self.t = 0

    def step(
        self, tensors: list[np.ndarray], grads: list[np.ndarray], scale: float = 1.0
    ) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        lr = scale * self.lr
        for tensor, grad, m, v in zip(tensors, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            tensor -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class _Sgd:
    def __init__(self, tensors: list[np.ndarray], lr: float):
        self.lr = lr

    def step(
        self, tensors: list[np.ndarray], grads: list[np.ndarray], scale: float = 1.0
    ) -> None:
        for tensor, grad in zip(tensors, grads):
            tensor -= scale * self.lr * grad


@dataclass
class TrainResult:
    model: GnnModel
    table: EmbeddingTable
    epoch_losses: list[float]


def train(
    graph: BipartiteGraph, config: GnnConfig, model: GnnModel | None = None
) -> TrainResult:
    """Train a model on walk pairs and emit the final embedding table.

    Everything is driven by one seeded generator, so a fixed (graph, config)
    reproduces the table bit for bit.  ``model`` overrides the default
    initialization (shapes must match the graph and config).
    """
    rng = np.random.default_rng([config.seed, 0x6E])
    if model is None:
        model = init_model(graph, config, rng)
    else:
        init_model(graph, config, rng)  # keep the rng stream position fixed
    walks = generate_walks(graph, config, rng)
    pairs = walk_pairs(walks, config.pair_window)
    if len(pairs) == 0:
        raise ValidationError("walk corpus produced no training pairs")
    negative_cum = negative_cumulative(graph)

    tensors = [model.input_embeddings] + model.weights
    opt_cls = _Adam if config.optimizer == "adam" else _Sgd
    optimizer = opt_cls(tensors, config.learning_rate)

    batches_per_epoch = (len(pairs) + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * batches_per_epoch
    step = 0
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(len(pairs))
        total = 0.0
        batches = 0
        for lo in range(0, len(pairs), config.batch_size):
            batch = pairs[perm[lo : lo + config.batch_size]]
            loss, grads = loss_and_grad(
                model, graph, batch, rng, negative_cum=negative_cum
            )
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {batches}"
                )
            grad_list = [grads["input_embeddings"]] + list(grads["weights"])
            if not config.trainable_inputs:
                grad_list[0] = np.zeros_like(grad_list[0])
            if config.lr_schedule == "linear":
                scale = (total_steps - step) / total_steps
            else:
                scale = 1.0
            optimizer.step(tensors, grad_list, scale)
            step += 1
            total += loss
            batches += 1
        epoch_losses.append(total / batches)
        logger.info("epoch %d mean loss %.6f", epoch, epoch_losses[-1])

    table = embed_all(model, graph, rng)
    return TrainResult(model=model, table=table, epoch_losses=epoch_losses)


# ---------------------------------------------------------------------------
# Embedding table I/O
# ---------------------------------------------------------------------------

def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Text matrix: header 'num_nodes dim n_macs', then one row per node."""
    with Path(path).open("w") as fh:
        n, d = table.vectors.shape
        fh.write(f"{n} {d} {table.n_macs}\n")
        for row in table.vectors:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_embeddings(path: str | Path) -> EmbeddingTable:
    with Path(path).open() as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValidationError(f"{path}: bad embedding header")
        n, d, n_macs = (int(v) for v in header)
        vectors = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if vectors.shape != (n, d):
        raise ValidationError(
            f"{path}: expected {n}x{d} matrix, got {vectors.shape}"
        )
    return EmbeddingTable(vectors=vectors, n_macs=n_macs)


def write_training_log(epoch_losses: list[float], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for epoch, loss in enumerate(epoch_losses):
            fh.write(f"{epoch} {loss!r}\n")
