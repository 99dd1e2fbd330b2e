"""Prompt-to-scene synthesis: parse, infer actions, sample a graph, sample
layouts, retrieve assets, place humans, optimise.

The four zero-shot modes reuse the same two trained models and differ only in
what is anchored (graph stage) and what is frozen (layout stage):

======== =============================================== ====================
mode     anchored in the graph                           frozen layouts
======== =============================================== ====================
full     prompt objects, their actions and relations     none
uncond   nothing (null prompt)                           none
stylize  categories, actions, relations of the input     all
rearrange categories, features, actions of the input     none
complete every attribute of the input objects            the input objects
======== =============================================== ====================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .assembly import (
    AssetCatalog,
    FeatureCodebook,
    PoseLibrary,
    assemble_scene,
    fit_codebook,
    generate_catalog,
    style_vector,
)
from .core import (
    FunctionalGroups,
    HumanAction,
    Layout,
    OptimizerConfig,
    Scene,
    SceneGraph,
    get_scene_type,
    inverse_predicate,
)
from .evaluation import relation_matrix
from .graph_diffusion import GraphDiffusionModel, empty_anchor_graph, sample_graphs, sample_node_count
from .layout_diffusion import LayoutDiffusionModel, sample_layouts_batch
from .neural import load_checkpoint, save_checkpoint
from .neural.checkpoint import file_sha256
from .optimizer import OptimizationReport, load_groups, optimize_scene
from .prompt import EMBED_DIM, PartialGraph, TextCompletionClient, Triplet, embed_prompt, infer_actions, parse_prompt

logger = logging.getLogger(__name__)

MODES = ("full", "uncond", "stylize", "rearrange", "complete")
GRAPH_CKPT = "graph.ckpt"
LAYOUT_CKPT = "layout.ckpt"


class MissingInputScene(ValueError):
    pass


@dataclass
class Pipeline:
    graph_model: GraphDiffusionModel
    layout_model: LayoutDiffusionModel
    catalog: AssetCatalog
    codebook: FeatureCodebook
    poses: PoseLibrary | None = None
    groups: FunctionalGroups | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    action_client: TextCompletionClient | None = None
    k_top: int = 5

    @property
    def scene_type(self) -> str:
        return self.graph_model.scene_type

    def save(self, directory: str | Path) -> dict[str, str]:
        """Write both checkpoints; returns their SHA-256 digests by file name."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        codebook = {"codebook": self.codebook.to_list()}
        save_checkpoint(directory / GRAPH_CKPT, {**self.graph_model.header(), **codebook}, self.graph_model.params)
        save_checkpoint(directory / LAYOUT_CKPT, {**self.layout_model.header(), **codebook}, self.layout_model.params)
        return {name: file_sha256(directory / name) for name in (GRAPH_CKPT, LAYOUT_CKPT)}

    @classmethod
    def load(cls, directory: str | Path, catalog: AssetCatalog | None = None, **kwargs) -> Pipeline:
        directory = Path(directory)
        g_head, g_params, _ = load_checkpoint(directory / GRAPH_CKPT)
        l_head, l_params, _ = load_checkpoint(directory / LAYOUT_CKPT)
        graph = GraphDiffusionModel.from_header(g_head, g_params)
        layout = LayoutDiffusionModel.from_header(l_head, l_params)
        if graph.scene_type != layout.scene_type:
            raise ValueError(f"graph model is for {graph.scene_type!r}, layout model for {layout.scene_type!r}")
        codebook = FeatureCodebook(np.asarray(g_head["codebook"], dtype=np.float64))
        return cls(graph, layout, catalog if catalog is not None else generate_catalog(), codebook, **kwargs)


def default_codebook(catalog: AssetCatalog, seed: int = 0) -> FeatureCodebook:
    return fit_codebook(catalog.features(), seed=seed)


@dataclass
class SynthesisRequest:
    prompt: str = ""
    seed: int = 0
    mode: str = "full"
    input_scene: Scene | None = None
    skip_optimize: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.mode in ("stylize", "rearrange", "complete") and self.input_scene is None:
            raise MissingInputScene(f"mode {self.mode!r} needs an input scene")


@dataclass
class SynthesisResult:
    scene: Scene
    graph: SceneGraph
    triplets: list[Triplet]
    partial: PartialGraph
    report: OptimizationReport | None
    mode: str = "full"
    pinned: tuple[int, ...] = ()


@dataclass
class _Plan:
    anchor: SceneGraph
    context: np.ndarray
    frozen: dict[int, Layout]
    keep: int  # leading objects copied verbatim from the input scene
    triplets: list[Triplet]
    partial: PartialGraph
    pinned: tuple[int, ...] = ()  # objects the optimiser may not move or remove


def _code_for(adjectives: Sequence[str], codebook: FeatureCodebook) -> int | None:
    if not adjectives:
        return None
    return codebook.quantize(style_vector(list(adjectives)))


def _set_edge(edges: np.ndarray, i: int, j: int, pred) -> None:
    edges[i, j] = int(pred)
    edges[j, i] = int(inverse_predicate(pred))


def _plan(pipe: Pipeline, req: SynthesisRequest, rng: np.random.Generator) -> _Plan:
    st = get_scene_type(pipe.scene_type)
    vocab = st.vocabulary
    N, K = vocab.N, pipe.codebook.K
    prompt = "" if req.mode == "uncond" else (req.prompt or "")
    partial, triplets = parse_prompt(prompt, st.name) if prompt else (PartialGraph(), [])
    for issue in partial.issues:
        logger.warning("prompt: %s", issue)
    context = embed_prompt(prompt).vector if prompt else np.zeros(EMBED_DIM)
    hist = pipe.graph_model.count_hist
    lo = st.count_range[0]

    if req.mode in ("full", "uncond"):
        n = sample_node_count(hist, len(partial.nodes), st.n_max, rng, lo)
        g = empty_anchor_graph(n, N, K)
        actions = infer_actions(partial.categories, st.name, pipe.action_client)
        for i, (node, act) in enumerate(zip(partial.nodes, actions)):
            g.categories[i] = vocab.index(node.category)
            g.actions[i] = int(node.action if node.action is not None else act)
            code = node.feature_code if node.feature_code is not None else _code_for(node.adjectives, pipe.codebook)
            if code is not None:
                g.features[i] = code
        for i, j, p in partial.edges:
            _set_edge(g.edges, i, j, p)
        # objects the prompt asked for are never optimised away
        return _Plan(g, context, {}, 0, triplets, partial, tuple(range(len(partial.nodes))))

    scene = req.input_scene
    if get_scene_type(scene.scene_type).name != st.name:
        raise ValueError(f"input scene is a {scene.scene_type!r}, models are for {st.name!r}")
    objs = scene.objects
    m = len(objs)
    layouts = [o.layout for o in objs]

    if req.mode == "complete":
        extra = len(partial.nodes)
        need = m + extra
        # at least one new object whenever the budget allows
        n = sample_node_count(hist, need + 1, st.n_max, rng, lo) if need < st.n_max else sample_node_count(hist, need, st.n_max, rng, lo)
        g = empty_anchor_graph(n, N, K)
        rel = relation_matrix(layouts)
        for i, o in enumerate(objs):
            g.categories[i] = vocab.index(o.category)
            g.features[i] = o.feature_code
            g.actions[i] = int(o.action)
        g.edges[:m, :m] = rel
        actions = infer_actions(partial.categories, st.name, pipe.action_client)
        for k, (node, act) in enumerate(zip(partial.nodes, actions)):
            i = m + k
            g.categories[i] = vocab.index(node.category)
            g.actions[i] = int(act)
            code = _code_for(node.adjectives, pipe.codebook)
            if code is not None:
                g.features[i] = code
        for i, j, p in partial.edges:
            _set_edge(g.edges, m + i, m + j, p)
        return _Plan(g, context, dict(enumerate(layouts)), m, triplets, partial, tuple(range(need)))

    g = empty_anchor_graph(m, N, K)
    for i, o in enumerate(objs):
        g.categories[i] = vocab.index(o.category)
        g.actions[i] = int(o.action)
    if req.mode == "stylize":
        g.edges[:, :] = relation_matrix(layouts)
        styled = {node.category: _code_for(node.adjectives, pipe.codebook) for node in partial.nodes if node.adjectives}
        for i, o in enumerate(objs):
            if styled.get(o.category) is not None:
                g.features[i] = styled[o.category]
        return _Plan(g, context, dict(enumerate(layouts)), 0, triplets, partial)
    # rearrange: relations and layouts are resampled
    for i, o in enumerate(objs):
        g.features[i] = o.feature_code
    return _Plan(g, context, {}, 0, triplets, partial)


def _finish(pipe: Pipeline, req: SynthesisRequest, plan: _Plan, graph: SceneGraph, layouts: list[Layout]) -> SynthesisResult:
    st = get_scene_type(pipe.scene_type)
    meta = {"mode": req.mode, "prompt": req.prompt if req.mode != "uncond" else "", "seed": req.seed}
    scene = assemble_scene(graph, layouts, st.name, pipe.catalog, pipe.codebook, pipe.poses, pipe.k_top, meta)
    src = req.input_scene
    if req.mode == "stylize":
        # objects and actions are unchanged, so the input's humans still apply as they are
        scene = scene.with_objects(scene.objects, list(src.humans))
    elif req.mode == "rearrange":
        # same objects, new places: keep the chosen assets
        objects = [replace(o, asset_id=s.asset_id) for o, s in zip(scene.objects, src.objects)]
        scene = scene.with_objects(objects, scene.humans)
    elif req.mode == "complete" and plan.keep:
        objects = list(src.objects) + scene.objects[plan.keep :]
        humans = list(src.humans) + [h for h in scene.humans if h.contact_object_index >= plan.keep]
        scene = scene.with_objects(objects, humans)
    result = SynthesisResult(scene, graph, plan.triplets, plan.partial, None, req.mode, plan.pinned)
    return result if req.skip_optimize else optimize_result(pipe, result)


def optimize_result(pipe: Pipeline, result: SynthesisResult) -> SynthesisResult:
    """Apply the human-aware optimiser where the mode allows it.

    stylize and rearrange promise to leave everything but appearance or
    placement untouched, so they are returned as they are.
    """
    if result.report is not None or result.mode not in ("full", "uncond", "complete"):
        return result
    groups = pipe.groups if pipe.groups is not None else load_groups()
    scene, report = optimize_scene(result.scene, groups, pipe.optimizer, pinned=result.pinned)
    scene.meta["optimization"] = report.to_dict()
    return replace(result, scene=scene, report=report)


def synthesize_batch(pipe: Pipeline, requests: Sequence[SynthesisRequest]) -> list[SynthesisResult]:
    """Run several requests through the models in shared batches.

    Each request draws only from ``default_rng(request.seed)``, so its result
    does not depend on the other requests in the batch.
    """
    if not requests:
        return []
    rngs = [np.random.default_rng(r.seed) for r in requests]
    plans = [_plan(pipe, r, rng) for r, rng in zip(requests, rngs)]
    graphs = sample_graphs(pipe.graph_model, [p.anchor for p in plans], np.stack([p.context for p in plans]), rngs)
    layouts = sample_layouts_batch(pipe.layout_model, graphs, rngs, [p.frozen for p in plans])
    return [_finish(pipe, r, p, g, lay) for r, p, g, lay in zip(requests, plans, graphs, layouts)]


def synthesize(
    pipe: Pipeline,
    prompt: str = "",
    seed: int = 0,
    mode: str = "full",
    input_scene: Scene | None = None,
    skip_optimize: bool = False,
) -> SynthesisResult:
    return synthesize_batch(pipe, [SynthesisRequest(prompt, seed, mode, input_scene, skip_optimize)])[0]

