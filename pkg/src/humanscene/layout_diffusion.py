"""Gaussian diffusion over 8-parameter object layouts, conditioned on a clean scene graph.

Translations and sizes are z-scored with per-scene-type statistics; the
rotation pair is left as is. The network predicts clean layouts directly and
sampling follows the DDPM posterior q(x_{t-1} | x_t, x0_hat).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Layout, SceneGraph, get_scene_type
from .graph_diffusion import GraphBatch, UntrainedModel
from .neural import autodiff as ad
from .neural.model import LAYOUT_DIM, GraphTransformer, ModelConfig, ModelInput
from .neural.train import OptimizerState, TrainConfig, train_step

logger = logging.getLogger(__name__)

LAYOUT_CTX_DIM = 1  # the layout stage is not prompt-conditioned


@dataclass(frozen=True)
class LayoutSchedule:
    """Variance-preserving cosine schedule: x_t = alpha(t) x0 + sigma(t) eps."""

    T: int = 10
    offset: float = 0.008

    def alpha_bar(self, t):
        t = np.asarray(t, dtype=np.float64)
        f = np.cos((t / self.T + self.offset) / (1 + self.offset) * math.pi / 2) ** 2
        f0 = math.cos(self.offset / (1 + self.offset) * math.pi / 2) ** 2
        return np.clip(f / f0, 0.0, 1.0)

    def alpha(self, t):
        return np.sqrt(self.alpha_bar(t))

    def sigma(self, t):
        return np.sqrt(1.0 - self.alpha_bar(t))


@dataclass(frozen=True)
class LayoutNormalizer:
    t_mean: tuple
    t_std: tuple
    s_mean: tuple
    s_std: tuple

    @classmethod
    def fit(cls, layouts: Sequence[Sequence[Layout]]) -> LayoutNormalizer:
        vecs = np.array([lay.to_vector() for scene in layouts for lay in scene])
        if len(vecs) == 0:
            raise ValueError("no layouts to fit normalisation statistics")
        std = vecs.std(axis=0)
        std = np.where(std < 1e-3, 1.0, std)
        mean = vecs.mean(axis=0)
        return cls(tuple(mean[0:3]), tuple(std[0:3]), tuple(mean[3:6]), tuple(std[3:6]))

    def _arrays(self):
        mean = np.array([*self.t_mean, *self.s_mean, 0.0, 0.0])
        std = np.array([*self.t_std, *self.s_std, 1.0, 1.0])
        return mean, std

    def normalize(self, vecs: np.ndarray) -> np.ndarray:
        mean, std = self._arrays()
        return (np.asarray(vecs, dtype=np.float64) - mean) / std

    def denormalize(self, vecs: np.ndarray) -> np.ndarray:
        mean, std = self._arrays()
        return np.asarray(vecs, dtype=np.float64) * std + mean

    def to_dict(self) -> dict:
        return {k: [float(x) for x in getattr(self, k)] for k in ("t_mean", "t_std", "s_mean", "s_std")}

    @classmethod
    def from_dict(cls, d: dict) -> LayoutNormalizer:
        return cls(*(tuple(d[k]) for k in ("t_mean", "t_std", "s_mean", "s_std")))


def corrupt_layouts(L0: np.ndarray, t, rng: np.random.Generator, schedule: LayoutSchedule | None = None) -> np.ndarray:
    """Noise normalised layouts (..., 8); ``t`` broadcasts against the leading axis."""
    schedule = schedule or LayoutSchedule()
    L0 = np.asarray(L0, dtype=np.float64)
    a = np.asarray(schedule.alpha(t))
    s = np.asarray(schedule.sigma(t))
    while a.ndim < L0.ndim:
        a, s = a[..., None], s[..., None]
    return a * L0 + s * rng.standard_normal(L0.shape)


def layout_loss(pred, target, valid: np.ndarray | None = None):
    """Per-node squared error summed over t, s and r blocks, averaged over nodes.

    ``pred`` may be a Tensor (training) or an array; shapes are (..., n, 8).
    """
    target = np.asarray(target)
    if not isinstance(pred, ad.Tensor):
        pred = ad.Tensor(np.asarray(pred, dtype=np.float64))
    if valid is None:
        valid = np.ones(target.shape[:-1], dtype=bool)
    count = int(valid.sum())
    if count == 0:
        return ad.Tensor(np.zeros((), dtype=pred.data.dtype))
    diff = pred - target.astype(pred.data.dtype)
    w = (valid.astype(pred.data.dtype) / count)[..., None]
    return ad.tsum(diff * diff * w)


@dataclass
class LayoutDiffusionModel:
    config: ModelConfig
    params: dict | None
    scene_type: str
    normalizer: LayoutNormalizer
    schedule: LayoutSchedule = field(default_factory=LayoutSchedule)
    train_info: dict = field(default_factory=dict)

    @property
    def trained(self) -> bool:
        return self.params is not None

    @property
    def net(self) -> GraphTransformer:
        return GraphTransformer(self.config)

    def header(self) -> dict:
        return {
            "kind": "layout",
            "model": self.config.to_dict(),
            "scene_type": self.scene_type,
            "T": self.schedule.T,
            "normalizer": self.normalizer.to_dict(),
            "train": self.train_info,
        }

    @classmethod
    def from_header(cls, header: dict, params: dict) -> LayoutDiffusionModel:
        if header.get("kind") != "layout":
            raise ValueError(f"checkpoint holds a {header.get('kind')!r} model, expected 'layout'")
        return cls(
            ModelConfig(**header["model"]), params, header["scene_type"],
            LayoutNormalizer.from_dict(header["normalizer"]), LayoutSchedule(header["T"]), header.get("train", {}),
        )


def _layout_input(graphs: GraphBatch, x: np.ndarray, t) -> ModelInput:
    B = graphs.B
    return ModelInput(
        graphs.categories, graphs.features, graphs.actions, graphs.edges, graphs.valid,
        np.broadcast_to(np.asarray(t, dtype=np.int64), (B,)).copy(),
        np.zeros((B, LAYOUT_CTX_DIM), dtype=np.float32), x.astype(np.float32),
    )


def _layout_array(scenes: Sequence[Sequence[Layout]], n: int, normalizer: LayoutNormalizer) -> np.ndarray:
    out = np.zeros((len(scenes), n, LAYOUT_DIM))
    for b, scene in enumerate(scenes):
        if scene:
            out[b, : len(scene)] = normalizer.normalize(np.array([lay.to_vector() for lay in scene]))
    return out


def train_layout_model(
    graphs: Sequence[SceneGraph],
    layouts: Sequence[Sequence[Layout]],
    scene_type: str,
    model_config: ModelConfig,
    train_config: TrainConfig,
    schedule: LayoutSchedule | None = None,
    time_budget: float | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[LayoutDiffusionModel, OptimizerState]:
    if len(graphs) != len(layouts) or not graphs:
        raise ValueError("need one layout list per training graph")
    if model_config.kind != "layout" or model_config.ctx_dim != LAYOUT_CTX_DIM:
        raise ValueError(f"layout model needs kind='layout' and ctx_dim={LAYOUT_CTX_DIM}")
    schedule = schedule or LayoutSchedule(model_config.timesteps)
    st = get_scene_type(scene_type)
    normalizer = LayoutNormalizer.fit(layouts)
    data = GraphBatch.from_graphs(list(graphs))
    X = _layout_array(layouts, data.n, normalizer)
    net = GraphTransformer(model_config)
    params = net.init_params(train_config.seed)
    state = OptimizerState.create(params)
    rng = np.random.default_rng(train_config.seed)
    start = time.perf_counter()
    losses: list[float] = []
    epoch = 0
    for epoch in range(train_config.epochs):
        order = rng.permutation(data.B)
        epoch_losses = []
        for s in range(0, data.B, train_config.batch_size):
            idx = order[s : s + train_config.batch_size]
            g = data.take(idx)
            x0 = X[idx, : g.n]
            t = rng.integers(1, schedule.T + 1, size=len(idx))
            xt = corrupt_layouts(x0, t, rng, schedule)
            inp = _layout_input(g, xt, t)

            def loss_fn(p, inp=inp, x0=x0, valid=g.valid):
                return layout_loss(net.forward(p, inp, train=True, rng=rng)["layout"], x0, valid)

            epoch_losses.append(train_step(params, loss_fn, state, train_config))
        losses.append(float(np.mean(epoch_losses)))
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
        if time_budget is not None and time.perf_counter() - start > time_budget:
            logger.warning("layout training stopped after %d epochs (time budget)", epoch + 1)
            break
    info = {"epochs": epoch + 1, "final_loss": losses[-1] if losses else None, "seconds": round(time.perf_counter() - start, 1)}
    return LayoutDiffusionModel(model_config, state.ema, st.name, normalizer, schedule, info), state


def _to_layout(v: np.ndarray) -> Layout:
    return Layout.from_vector(v)  # clamps sizes at 1 mm and renormalises the rotation pair


def sample_layouts_batch(
    model: LayoutDiffusionModel,
    graphs: Sequence[SceneGraph],
    rngs: Sequence[np.random.Generator],
    frozen: Sequence[dict[int, Layout] | None] | None = None,
) -> list[list[Layout]]:
    """Ancestral sampling for several graphs; ``frozen[b]`` maps node index -> fixed layout."""
    if model is None or not model.trained:
        raise UntrainedModel("layout model has no trained parameters")
    if not graphs:
        return []
    for g in graphs:
        if not g.is_clean():
            raise ValueError("layout sampling needs a fully unmasked graph")
    frozen = list(frozen) if frozen is not None else [None] * len(graphs)
    batch = GraphBatch.from_graphs(list(graphs))
    B, n = batch.B, batch.n
    sched = model.schedule
    norm = model.normalizer
    known = np.zeros((B, n, LAYOUT_DIM))
    fixed = np.zeros((B, n), dtype=bool)
    for b, fz in enumerate(frozen):
        for i, lay in (fz or {}).items():
            known[b, i] = norm.normalize(lay.to_vector())
            fixed[b, i] = True
    sizes = [g.n for g in graphs]

    def noise() -> np.ndarray:
        # each scene draws only for its own nodes, so padding never shifts its stream
        out = np.zeros((B, n, LAYOUT_DIM))
        for b, rng in enumerate(rngs):
            out[b, : sizes[b]] = rng.standard_normal((sizes[b], LAYOUT_DIM))
        return out

    x = noise()
    net = model.net
    for t in range(sched.T, 0, -1):
        if fixed.any():
            noised = sched.alpha(t) * known + sched.sigma(t) * noise()
            x = np.where(fixed[..., None], noised, x)
        x0 = net.forward(model.params, _layout_input(batch, x, t))["layout"].data.astype(np.float64)
        ab_t, ab_prev = float(sched.alpha_bar(t)), float(sched.alpha_bar(t - 1))
        beta = 1.0 - ab_t / ab_prev if ab_prev > 0 else 1.0
        c0 = math.sqrt(ab_prev) * beta / (1.0 - ab_t)
        ct = math.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t)
        mean = c0 * x0 + ct * x
        var = beta * (1.0 - ab_prev) / (1.0 - ab_t)
        if t > 1 and var > 0:
            x = mean + math.sqrt(var) * noise()
        else:
            x = mean
    results = []
    for b, g in enumerate(graphs):
        raw = norm.denormalize(x[b, : g.n])
        fz = frozen[b] or {}
        results.append([fz[i] if i in fz else _to_layout(raw[i]) for i in range(g.n)])
    return results


def sample_layouts(
    model: LayoutDiffusionModel,
    graph: SceneGraph,
    rng: np.random.Generator,
    frozen: dict[int, Layout] | None = None,
) -> list[Layout]:
    return sample_layouts_batch(model, [graph], [rng], [frozen])[0]
