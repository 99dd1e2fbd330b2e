"""Absorbing-mask discrete diffusion over scene graphs.

Every node attribute (category, feature code, action) and every unordered
node pair's relation is independently replaced by its MASK token with
probability m(t) = t / T. The denoiser predicts clean values (x0 logits);
sampling unmasks each still-masked attribute with probability
(m(t) - m(t-1)) / m(t) per reverse step, re-imposing anchors throughout.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    ACTION_MASK,
    INVERSE_TABLE,
    RELATION_MASK,
    Predicate,
    SceneGraph,
    get_scene_type,
)
from .neural import autodiff as ad
from .neural.model import GraphTransformer, ModelConfig, ModelInput
from .neural.train import OptimizerState, TrainConfig, train_step

logger = logging.getLogger(__name__)

_INV = np.asarray(INVERSE_TABLE, dtype=np.int64)
_NONE = int(Predicate.NONE)


class UntrainedModel(RuntimeError):
    pass


class AnchorsExceedNodeBudget(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteSchedule:
    T: int = 100

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")

    def mask_rate(self, t):
        """Closed-form marginal probability that an attribute is masked at step t."""
        return np.clip(np.asarray(t, dtype=np.float64) / self.T, 0.0, 1.0)

    def step_mask_prob(self, t):
        """q(masked at t | unmasked at t-1)."""
        t = np.asarray(t, dtype=np.float64)
        return 1.0 / (self.T - t + 1.0)

    def unmask_prob(self, t: int) -> float:
        """Reverse-step probability that a masked attribute at t is revealed at t-1."""
        m_t, m_prev = float(self.mask_rate(t)), float(self.mask_rate(t - 1))
        return 1.0 if m_t <= 0 else (m_t - m_prev) / m_t


@dataclass(frozen=True)
class GraphLossWeights:
    delta_c: float = 1.0
    delta_f: float = 1.0
    delta_e: float = 10.0
    switch_epoch: int = 1500

    def at(self, epoch: int) -> tuple[float, float, float]:
        if epoch >= self.switch_epoch:
            return 0.0, 0.0, self.delta_e
        return self.delta_c, self.delta_f, self.delta_e

    @classmethod
    def for_epochs(cls, epochs: int, fraction: float = 0.75) -> GraphLossWeights:
        """Switch after a fixed fraction of training, for shortened schedules."""
        return cls(switch_epoch=max(1, int(round(fraction * epochs))))


# ---------------------------------------------------------------- batches


@dataclass
class GraphBatch:
    """Padded arrays for B graphs; padding uses MASK values and valid=False."""

    categories: np.ndarray  # (B, n)
    features: np.ndarray
    actions: np.ndarray
    edges: np.ndarray  # (B, n, n)
    valid: np.ndarray  # (B, n) bool
    num_categories: int
    num_features: int

    @classmethod
    def from_graphs(cls, graphs: Sequence[SceneGraph], n_pad: int | None = None) -> GraphBatch:
        if not graphs:
            raise ValueError("no graphs")
        N, K = graphs[0].num_categories, graphs[0].num_features
        n = max(g.n for g in graphs) if n_pad is None else n_pad
        B = len(graphs)
        cat = np.full((B, n), N, dtype=np.int64)
        feat = np.full((B, n), K, dtype=np.int64)
        act = np.full((B, n), ACTION_MASK, dtype=np.int64)
        rel = np.full((B, n, n), RELATION_MASK, dtype=np.int64)
        valid = np.zeros((B, n), dtype=bool)
        for b, g in enumerate(graphs):
            k = g.n
            if k > n:
                raise ValueError(f"graph with {k} nodes does not fit padding {n}")
            cat[b, :k], feat[b, :k], act[b, :k] = g.categories, g.features, g.actions
            rel[b, :k, :k] = g.edges
            valid[b, :k] = True
        return cls(cat, feat, act, rel, valid, N, K)

    @property
    def B(self) -> int:
        return self.categories.shape[0]

    @property
    def n(self) -> int:
        return self.categories.shape[1]

    def take(self, idx) -> GraphBatch:
        idx = np.asarray(idx)
        n = max(int(self.valid[idx].sum(axis=1).max()), 1)
        return GraphBatch(
            self.categories[idx, :n], self.features[idx, :n], self.actions[idx, :n],
            self.edges[idx, :n, :n], self.valid[idx, :n], self.num_categories, self.num_features,
        )

    def graph(self, b: int) -> SceneGraph:
        k = int(self.valid[b].sum())
        return SceneGraph(
            self.categories[b, :k], self.features[b, :k], self.actions[b, :k], self.edges[b, :k, :k],
            self.num_categories, self.num_features,
        )

    def copy(self) -> GraphBatch:
        return GraphBatch(
            self.categories.copy(), self.features.copy(), self.actions.copy(), self.edges.copy(),
            self.valid.copy(), self.num_categories, self.num_features,
        )

    def mask_values(self) -> tuple[int, int, int, int]:
        return self.num_categories, self.num_features, ACTION_MASK, RELATION_MASK


def _as_batch(g) -> GraphBatch:
    return g if isinstance(g, GraphBatch) else GraphBatch.from_graphs([g])


@dataclass
class AnchorMask:
    """Which attributes are prompt-fixed and therefore never corrupted or resampled."""

    categories: np.ndarray
    features: np.ndarray
    actions: np.ndarray
    edges: np.ndarray

    @classmethod
    def none(cls, n: int) -> AnchorMask:
        z = np.zeros(n, dtype=bool)
        return cls(z.copy(), z.copy(), z.copy(), np.zeros((n, n), dtype=bool))

    @classmethod
    def of(cls, partial: SceneGraph) -> AnchorMask:
        """Anchors = every attribute of ``partial`` that is not its MASK value."""
        return cls(
            partial.categories != partial.num_categories,
            partial.features != partial.num_features,
            partial.actions != ACTION_MASK,
            partial.edges != RELATION_MASK,
        )


def corrupt_batch(batch: GraphBatch, t, rng: np.random.Generator, schedule: DiscreteSchedule, anchors=None) -> tuple[GraphBatch, dict]:
    """Mask each attribute with probability m(t); relation pairs are masked jointly.

    ``t`` is a scalar or a (B,) array. ``anchors`` is an optional list of
    AnchorMask (one per graph). Returns the corrupted batch and the boolean
    masked-position arrays used by the loss.
    """
    B, n = batch.B, batch.n
    m = np.broadcast_to(schedule.mask_rate(t), (B,)).astype(np.float64)
    mc = (rng.random((B, n)) < m[:, None]) & batch.valid
    mf = (rng.random((B, n)) < m[:, None]) & batch.valid
    ma = (rng.random((B, n)) < m[:, None]) & batch.valid
    upper = np.triu(rng.random((B, n, n)) < m[:, None, None], 1)
    me = (upper | upper.transpose(0, 2, 1)) & batch.valid[:, :, None] & batch.valid[:, None, :]
    if anchors is not None:
        for b, a in enumerate(anchors):
            if a is None:
                continue
            k = len(a.categories)
            mc[b, :k] &= ~a.categories
            mf[b, :k] &= ~a.features
            ma[b, :k] &= ~a.actions
            pair = a.edges | a.edges.T
            me[b, :k, :k] &= ~pair
    out = batch.copy()
    N, K, A, R = batch.mask_values()
    out.categories[mc] = N
    out.features[mf] = K
    out.actions[ma] = A
    out.edges[me] = R
    return out, {"category": mc, "feature": mf, "action": ma, "relation": me}


def corrupt_graph(G0: SceneGraph, t: int, rng: np.random.Generator, schedule: DiscreteSchedule | None = None, anchors: AnchorMask | None = None) -> SceneGraph:
    schedule = schedule or DiscreteSchedule()
    if not 0 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [0, {schedule.T}]")
    out, _ = corrupt_batch(GraphBatch.from_graphs([G0]), t, rng, schedule, [anchors] if anchors is not None else None)
    return out.graph(0)


# ---------------------------------------------------------------- loss


def _masked_ce(logits, target: np.ndarray, where: np.ndarray):
    count = int(where.sum())
    if count == 0:
        return None
    lp = ad.log_softmax(logits if isinstance(logits, ad.Tensor) else ad.Tensor(np.asarray(logits, dtype=np.float64)), axis=-1)
    safe = np.where(where, target, 0)
    picked = ad.take_along(lp, safe[..., None], axis=-1)
    w = (where.astype(lp.data.dtype) / count)[..., None]
    return ad.tsum(picked * w) * -1.0


def graph_loss(logits: dict, G0, Gt, weights=(1.0, 1.0, 10.0)):
    """Weighted x0 cross-entropy over masked positions.

    ``weights`` is (delta_c, delta_f, delta_e); the action term shares
    delta_f. Each family's loss is the mean negative log-likelihood over its
    masked positions (0 when nothing of that family is masked). Returns a
    scalar Tensor.
    """
    G0, Gt = _as_batch(G0), _as_batch(Gt)
    N, K, A, R = Gt.mask_values()
    valid = G0.valid
    pair_valid = valid[:, :, None] & valid[:, None, :] & ~np.eye(G0.n, dtype=bool)[None]
    dc, df, de = weights
    terms = [
        (dc, "category", G0.categories, (Gt.categories == N) & valid),
        (df, "feature", G0.features, (Gt.features == K) & valid),
        (df, "action", G0.actions, (Gt.actions == A) & valid),
        (de, "relation", G0.edges, (Gt.edges == R) & pair_valid),
    ]
    total = None
    for w, key, target, where in terms:
        if w == 0.0:
            continue
        ce = _masked_ce(logits[key], target, where)
        if ce is None:
            continue
        ce = ce * float(w)
        total = ce if total is None else total + ce
    if total is None:
        dtype = next(iter(logits.values())).data.dtype if isinstance(next(iter(logits.values())), ad.Tensor) else np.float64
        return ad.Tensor(np.zeros((), dtype=dtype))
    return total


# ---------------------------------------------------------------- model wrapper


@dataclass
class GraphDiffusionModel:
    config: ModelConfig
    params: dict | None
    scene_type: str
    count_hist: np.ndarray
    schedule: DiscreteSchedule = field(default_factory=DiscreteSchedule)
    train_info: dict = field(default_factory=dict)

    @property
    def trained(self) -> bool:
        return self.params is not None

    @property
    def net(self) -> GraphTransformer:
        return GraphTransformer(self.config)

    def header(self) -> dict:
        return {
            "kind": "graph",
            "model": self.config.to_dict(),
            "scene_type": self.scene_type,
            "T": self.schedule.T,
            "count_hist": [int(x) for x in self.count_hist],
            "train": self.train_info,
        }

    @classmethod
    def from_header(cls, header: dict, params: dict) -> GraphDiffusionModel:
        if header.get("kind") != "graph":
            raise ValueError(f"checkpoint holds a {header.get('kind')!r} model, expected 'graph'")
        return cls(
            ModelConfig(**header["model"]), params, header["scene_type"],
            np.asarray(header["count_hist"], dtype=np.int64), DiscreteSchedule(header["T"]), header.get("train", {}),
        )


def _model_input(state: GraphBatch, t, ctx: np.ndarray) -> ModelInput:
    B = state.B
    return ModelInput(
        state.categories, state.features, state.actions, state.edges, state.valid,
        np.broadcast_to(np.asarray(t, dtype=np.int64), (B,)).copy(), ctx,
    )


def train_graph_model(
    graphs: Sequence[SceneGraph],
    contexts: np.ndarray,
    scene_type: str,
    model_config: ModelConfig,
    train_config: TrainConfig,
    weights: GraphLossWeights | None = None,
    schedule: DiscreteSchedule | None = None,
    null_context_prob: float = 0.1,
    time_budget: float | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[GraphDiffusionModel, OptimizerState]:
    """Fit the graph denoiser; returns the model (EMA weights) and optimizer state.

    A fraction of prompts is replaced by the zero vector so the same network
    also serves unconditional sampling.
    """
    if len(graphs) == 0:
        raise ValueError("no training graphs")
    schedule = schedule or DiscreteSchedule(model_config.timesteps)
    weights = weights or GraphLossWeights.for_epochs(train_config.epochs)
    st = get_scene_type(scene_type)
    data = GraphBatch.from_graphs(list(graphs))
    contexts = np.asarray(contexts, dtype=np.float32)
    net = GraphTransformer(model_config)
    params = net.init_params(train_config.seed)
    state = OptimizerState.create(params)
    rng = np.random.default_rng(train_config.seed)
    hist = np.bincount([g.n for g in graphs], minlength=st.n_max + 1)[: st.n_max + 1]
    start = time.perf_counter()
    epoch = 0
    losses: list[float] = []
    for epoch in range(train_config.epochs):
        w = weights.at(epoch)
        order = rng.permutation(data.B)
        epoch_losses = []
        for s in range(0, data.B, train_config.batch_size):
            idx = order[s : s + train_config.batch_size]
            clean = data.take(idx)
            t = rng.integers(1, schedule.T + 1, size=len(idx))
            noisy, _ = corrupt_batch(clean, t, rng, schedule)
            ctx = contexts[idx].copy()
            ctx[rng.random(len(idx)) < null_context_prob] = 0.0
            inp = _model_input(noisy, t, ctx)

            def loss_fn(p, inp=inp, clean=clean, noisy=noisy):
                out = net.forward(p, inp, train=True, rng=rng)
                return graph_loss(out, clean, noisy, w)

            epoch_losses.append(train_step(params, loss_fn, state, train_config))
        losses.append(float(np.mean(epoch_losses)))
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
        if time_budget is not None and time.perf_counter() - start > time_budget:
            logger.warning("graph training stopped after %d epochs (time budget)", epoch + 1)
            break
    info = {"epochs": epoch + 1, "final_loss": losses[-1] if losses else None, "seconds": round(time.perf_counter() - start, 1)}
    return GraphDiffusionModel(model_config, state.ema, st.name, hist, schedule, info), state


# ---------------------------------------------------------------- sampling


def sample_node_count(hist: np.ndarray, n_anchor: int, n_max: int, rng: np.random.Generator, n_min: int = 1) -> int:
    if n_anchor > n_max:
        raise AnchorsExceedNodeBudget(f"{n_anchor} anchored objects exceed the budget of {n_max}")
    lo = max(n_anchor, n_min, 1)
    h = np.asarray(hist, dtype=np.float64)[: n_max + 1].copy()
    h[:lo] = 0.0
    if h.sum() <= 0:
        return lo
    return int(rng.choice(len(h), p=h / h.sum()))


def empty_anchor_graph(n: int, num_categories: int, num_features: int) -> SceneGraph:
    edges = np.full((n, n), RELATION_MASK, dtype=np.int64)
    np.fill_diagonal(edges, _NONE)
    return SceneGraph(
        np.full(n, num_categories), np.full(n, num_features), np.full(n, ACTION_MASK), edges, num_categories, num_features,
    )


def _draw(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=-1), probs.shape[-1] - 1)


def _softmax_no_mask(logits: np.ndarray) -> np.ndarray:
    z = logits[..., :-1].astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_graphs(
    model: GraphDiffusionModel,
    anchors: Sequence[SceneGraph],
    contexts: np.ndarray,
    rngs: Sequence[np.random.Generator],
) -> list[SceneGraph]:
    """Reverse diffusion from partially masked graphs; non-MASK entries are anchors.

    Every scene uses only its own generator, so results for one scene do not
    depend on which other scenes share the batch (up to float summation order).
    """
    if model is None or not model.trained:
        raise UntrainedModel("graph model has no trained parameters")
    if len(anchors) != len(rngs) or len(anchors) != len(contexts):
        raise ValueError("anchors, contexts and rngs must have equal length")
    if not anchors:
        return []
    net = model.net
    state = GraphBatch.from_graphs(list(anchors))
    for b, g in enumerate(anchors):
        k = g.n
        diag = np.arange(k)
        state.edges[b, diag, diag] = _NONE
    N, K, A, R = state.mask_values()
    ctx = np.asarray(contexts, dtype=np.float32)
    inv = _INV
    sched = model.schedule
    for t in range(sched.T, 0, -1):
        todo = (
            (state.categories == N) | (state.features == K) | (state.actions == A) | (state.edges == R).any(axis=2)
        ) & state.valid
        if not todo.any():
            break
        out = net.forward(model.params, _model_input(state, t, ctx))
        pc = _softmax_no_mask(out["category"].data)
        pf = _softmax_no_mask(out["feature"].data)
        pa = _softmax_no_mask(out["action"].data)
        pr = _softmax_no_mask(out["relation"].data)
        keep = sched.unmask_prob(t)
        for b, rng in enumerate(rngs):
            v = state.valid[b]
            for arr, probs, mval in ((state.categories, pc, N), (state.features, pf, K), (state.actions, pa, A)):
                pos = np.flatnonzero((arr[b] == mval) & v)
                if len(pos):
                    reveal = pos[rng.random(len(pos)) < keep]
                    if len(reveal):
                        arr[b, reveal] = _draw(probs[b, reveal], rng)
            k = int(v.sum())
            iu, ju = np.triu_indices(k, 1)
            masked = state.edges[b, iu, ju] == R
            if masked.any():
                iu, ju = iu[masked], ju[masked]
                sel = rng.random(len(iu)) < keep
                iu, ju = iu[sel], ju[sel]
                if len(iu):
                    p_ij = _draw(pr[b, iu, ju], rng)
                    p_ji = _draw(pr[b, ju, iu], rng)
                    conf_ij = pr[b, iu, ju, p_ij]
                    conf_ji = pr[b, ju, iu, p_ji]
                    fwd = np.where(conf_ij >= conf_ji, p_ij, inv[p_ji])
                    state.edges[b, iu, ju] = fwd
                    state.edges[b, ju, iu] = inv[fwd]
    return [state.graph(b) for b in range(state.B)]


def sample_graph(model: GraphDiffusionModel, anchor: SceneGraph, context: np.ndarray, rng: np.random.Generator) -> SceneGraph:
    return sample_graphs(model, [anchor], np.asarray(context)[None, :], [rng])[0]


def denoise_accuracy(
    model: GraphDiffusionModel, graphs: Sequence[SceneGraph], contexts: np.ndarray, t: int, rng: np.random.Generator, repeats: int = 1
) -> float:
    """Fraction of corrupted attributes whose argmax x0 prediction is correct."""
    clean = GraphBatch.from_graphs(list(graphs))
    ctx = np.asarray(contexts, dtype=np.float32)
    hits = total = 0
    for _ in range(repeats):
        noisy, masked = corrupt_batch(clean, t, rng, model.schedule)
        out = model.net.forward(model.params, _model_input(noisy, t, ctx))
        for key, target in (("category", clean.categories), ("feature", clean.features), ("action", clean.actions), ("relation", clean.edges)):
            where = masked[key]
            pred = out[key].data[..., :-1].argmax(-1)
            hits += int((pred[where] == target[where]).sum())
            total += int(where.sum())
    return hits / total if total else 1.0
