"""Graph transformer denoiser shared by the graph and layout diffusion heads.

Nodes carry category / feature-code / action embeddings plus a timestep
embedding. Self-attention is biased per head by the relation on each edge and
also mixes in a relation-dependent value, cross-attention reads the prompt
embedding, and a feed-forward block follows. Nothing depends on node order,
so the network is permutation equivariant.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..core import NUM_ACTIONS, NUM_PREDICATES
from . import autodiff as ad
from .autodiff import Tensor

LAYOUT_DIM = 8
_NEG = -1e9


@dataclass(frozen=True)
class ModelConfig:
    num_categories: int
    num_features: int
    kind: str = "graph"  # "graph" or "layout"
    layers: int = 2
    heads: int = 4
    width: int = 64
    ctx_dim: int = 512
    timesteps: int = 100
    dropout: float = 0.0
    ff_mult: int = 4

    def __post_init__(self):
        if self.kind not in ("graph", "layout"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.width % self.heads:
            raise ValueError("width must be divisible by heads")

    def to_dict(self) -> dict:
        return asdict(self)


PROFILES = {
    "paper": dict(layers=5, heads=8, width=512, dropout=0.1),
    "desk": dict(layers=2, heads=4, width=64, dropout=0.0),
}


@dataclass
class ModelInput:
    categories: np.ndarray  # (B, n) int
    features: np.ndarray  # (B, n) int
    actions: np.ndarray  # (B, n) int
    relations: np.ndarray  # (B, n, n) int
    valid: np.ndarray  # (B, n) bool
    t: np.ndarray  # (B,) int
    ctx: np.ndarray  # (B, D) float
    layout: np.ndarray | None = None  # (B, n, 8) float

    def __post_init__(self):
        B, n = self.categories.shape
        shapes = {
            "features": (self.features.shape, (B, n)),
            "actions": (self.actions.shape, (B, n)),
            "relations": (self.relations.shape, (B, n, n)),
            "valid": (self.valid.shape, (B, n)),
            "t": (np.shape(self.t), (B,)),
        }
        if self.layout is not None:
            shapes["layout"] = (self.layout.shape, (B, n, LAYOUT_DIM))
        for name, (got, want) in shapes.items():
            if tuple(got) != want:
                raise ValueError(f"{name} has shape {tuple(got)}, expected {want}")
        if self.ctx.ndim != 2 or self.ctx.shape[0] != B:
            raise ValueError(f"ctx has shape {self.ctx.shape}, expected ({B}, D)")


class GraphTransformer:
    def __init__(self, config: ModelConfig):
        self.config = config

    # ------------------------------------------------------------ params
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        c = self.config
        W, H, M = c.width, c.heads, NUM_PREDICATES + 1
        F = c.ff_mult * W
        shapes = {
            "emb.cat": (c.num_categories + 1, W),
            "emb.feat": (c.num_features + 1, W),
            "emb.act": (NUM_ACTIONS + 1, W),
            "emb.time": (c.timesteps + 1, W),
            "ctx.proj": (c.ctx_dim, W),
            "ctx.null": (1, 1, W),
        }
        if c.kind == "layout":
            shapes["emb.layout.w"] = (LAYOUT_DIM, W)
            shapes["emb.layout.b"] = (W,)
        for i in range(c.layers):
            p = f"l{i}."
            shapes.update(
                {
                    p + "rel.bias": (M, H),
                    p + "rel.value": (M, W),
                    p + "ln1.g": (W,), p + "ln1.b": (W,),
                    p + "attn.q": (W, W), p + "attn.k": (W, W), p + "attn.v": (W, W),
                    p + "attn.o": (W, W), p + "attn.ob": (W,),
                    p + "ln2.g": (W,), p + "ln2.b": (W,),
                    p + "cross.q": (W, W), p + "cross.k": (W, W), p + "cross.v": (W, W),
                    p + "cross.o": (W, W), p + "cross.ob": (W,),
                    p + "ln3.g": (W,), p + "ln3.b": (W,),
                    p + "ff.w1": (W, F), p + "ff.b1": (F,), p + "ff.w2": (F, W), p + "ff.b2": (W,),
                }
            )
        shapes["lnf.g"] = (W,)
        shapes["lnf.b"] = (W,)
        if c.kind == "graph":
            shapes.update(
                {
                    "head.cat.w": (W, c.num_categories + 1), "head.cat.b": (c.num_categories + 1,),
                    "head.feat.w": (W, c.num_features + 1), "head.feat.b": (c.num_features + 1,),
                    "head.act.w": (W, NUM_ACTIONS + 1), "head.act.b": (NUM_ACTIONS + 1,),
                    "head.edge.src": (W, W), "head.edge.dst": (W, W),
                    "head.edge.rel": (M, W), "head.edge.b0": (W,),
                    "head.edge.w": (W, M), "head.edge.b": (M,),
                }
            )
        else:
            shapes["head.layout.w"] = (W, LAYOUT_DIM)
            shapes["head.layout.b"] = (LAYOUT_DIM,)
        return shapes

    def init_params(self, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        out_scale = 1.0 / math.sqrt(2 * max(self.config.layers, 1))
        params = {}
        for name, shape in self.param_shapes().items():
            leaf = name.rsplit(".", 1)[-1]
            if name.endswith(".g"):
                arr = np.ones(shape)
            elif leaf in ("b", "ob", "b1", "b2", "b0") or name.endswith("layout.b"):
                arr = np.zeros(shape)
            elif name.startswith("emb.") and name != "emb.layout.w" or name.endswith("rel.value") or name == "head.edge.rel":
                arr = rng.normal(0.0, 0.5, shape)
            elif name.endswith("rel.bias") or name == "ctx.null":
                arr = rng.normal(0.0, 0.5, shape)
            else:
                arr = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
                if leaf in ("o", "w2"):
                    arr *= out_scale
                if name.startswith("head.") and leaf == "w":
                    arr *= 0.1
            params[name] = arr.astype(dtype)
        return params

    # ------------------------------------------------------------ forward
    def forward(self, params: dict, inp: ModelInput, train: bool = False, rng=None) -> dict[str, Tensor]:
        c = self.config
        P = {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in params.items()}
        dtype = P["emb.cat"].data.dtype
        B, n = inp.categories.shape
        W, H = c.width, c.heads
        dh = W // H
        scale = 1.0 / math.sqrt(dh)
        drop = c.dropout if train else 0.0
        if inp.ctx.shape[1] != c.ctx_dim:
            raise ValueError(f"ctx dim {inp.ctx.shape[1]} != model ctx dim {c.ctx_dim}")
        if inp.t.min() < 0 or inp.t.max() > c.timesteps:
            raise ValueError("timestep out of range")

        h = ad.embedding(P["emb.cat"], inp.categories)
        h = h + ad.embedding(P["emb.feat"], inp.features)
        h = h + ad.embedding(P["emb.act"], inp.actions)
        h = h + ad.reshape(ad.embedding(P["emb.time"], inp.t), (B, 1, W))
        if c.kind == "layout":
            if inp.layout is None:
                raise ValueError("layout model needs noisy layouts as input")
            h = h + ad.matmul(Tensor(inp.layout.astype(dtype)), P["emb.layout.w"]) + P["emb.layout.b"]

        key_bias = np.where(inp.valid, 0.0, _NEG).astype(dtype)[:, None, None, :]
        ctx = ad.reshape(ad.matmul(Tensor(inp.ctx.astype(dtype)), P["ctx.proj"]), (B, 1, W))
        null = ad.add(P["ctx.null"], np.zeros((B, 1, W), dtype=dtype))
        ctx_tokens = ad.concat([null, ctx], axis=1)  # (B, 2, W)

        def heads(x, length):
            return ad.transpose(ad.reshape(x, (B, length, H, dh)), (0, 2, 1, 3))

        def merge(x, length):
            return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (B, length, W))

        for i in range(c.layers):
            p = f"l{i}."
            x = ad.layer_norm(h, P[p + "ln1.g"], P[p + "ln1.b"])
            q = heads(ad.matmul(x, P[p + "attn.q"]), n)
            k = heads(ad.matmul(x, P[p + "attn.k"]), n)
            v = heads(ad.matmul(x, P[p + "attn.v"]), n)
            logits = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * scale
            rel_bias = ad.transpose(ad.embedding(P[p + "rel.bias"], inp.relations), (0, 3, 1, 2))
            attn = ad.softmax(logits + rel_bias + key_bias, axis=-1)
            attn = ad.dropout(attn, drop, rng)
            rel_val = ad.reshape(ad.embedding(P[p + "rel.value"], inp.relations), (B, n, n, H, dh))
            o = ad.matmul(attn, v) + ad.einsum("bhij,bijhd->bhid", attn, rel_val)
            o = ad.matmul(merge(o, n), P[p + "attn.o"]) + P[p + "attn.ob"]
            h = h + ad.dropout(o, drop, rng)

            x = ad.layer_norm(h, P[p + "ln2.g"], P[p + "ln2.b"])
            q = heads(ad.matmul(x, P[p + "cross.q"]), n)
            k = heads(ad.matmul(ctx_tokens, P[p + "cross.k"]), 2)
            v = heads(ad.matmul(ctx_tokens, P[p + "cross.v"]), 2)
            attn = ad.softmax(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * scale, axis=-1)
            o = ad.matmul(merge(ad.matmul(attn, v), n), P[p + "cross.o"]) + P[p + "cross.ob"]
            h = h + ad.dropout(o, drop, rng)

            x = ad.layer_norm(h, P[p + "ln3.g"], P[p + "ln3.b"])
            f = ad.gelu(ad.matmul(x, P[p + "ff.w1"]) + P[p + "ff.b1"])
            f = ad.matmul(f, P[p + "ff.w2"]) + P[p + "ff.b2"]
            h = h + ad.dropout(f, drop, rng)

        x = ad.layer_norm(h, P["lnf.g"], P["lnf.b"])
        if c.kind == "layout":
            return {"layout": ad.matmul(x, P["head.layout.w"]) + P["head.layout.b"]}

        out = {
            "category": ad.matmul(x, P["head.cat.w"]) + P["head.cat.b"],
            "feature": ad.matmul(x, P["head.feat.w"]) + P["head.feat.b"],
            "action": ad.matmul(x, P["head.act.w"]) + P["head.act.b"],
        }
        src = ad.reshape(ad.matmul(x, P["head.edge.src"]), (B, n, 1, W))
        dst = ad.reshape(ad.matmul(x, P["head.edge.dst"]), (B, 1, n, W))
        e = src + dst + ad.embedding(P["head.edge.rel"], inp.relations) + P["head.edge.b0"]
        out["relation"] = ad.matmul(ad.gelu(e), P["head.edge.w"]) + P["head.edge.b"]
        return out


def parameter_count(params: dict) -> int:
    return int(sum(v.size for v in params.values()))
