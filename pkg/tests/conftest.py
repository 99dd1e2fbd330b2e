from __future__ import annotations

import numpy as np
import pytest

from humanscene.corpus import GeneratorConfig, default_assets, generate_corpus
from humanscene.graph_diffusion import train_graph_model
from humanscene.layout_diffusion import LAYOUT_CTX_DIM, train_layout_model
from humanscene.neural import PROFILES, ModelConfig, TrainConfig
from humanscene.pipeline import Pipeline
from humanscene.prompt import embed_prompt


@pytest.fixture(scope="session")
def assets():
    return default_assets(0)


@pytest.fixture(scope="session")
def bedrooms():
    return generate_corpus(GeneratorConfig(seed=7), 120)


@pytest.fixture(scope="session")
def tiny_pipeline(bedrooms, assets):
    """A briefly trained pipeline: enough to exercise plumbing, not quality."""
    records = bedrooms.records
    graphs = [r.graph() for r in records]
    ctx = np.stack([embed_prompt(r.caption).vector for r in records])
    N = graphs[0].num_categories
    K = bedrooms.num_features
    gm, _ = train_graph_model(
        graphs, ctx, "bedroom", ModelConfig(N, K, "graph", **PROFILES["desk"]), TrainConfig(batch_size=64, epochs=3, learning_rate=1e-3)
    )
    lm, _ = train_layout_model(
        graphs, [r.layouts for r in records], "bedroom",
        ModelConfig(N, K, "layout", ctx_dim=LAYOUT_CTX_DIM, timesteps=10, **PROFILES["desk"]),
        TrainConfig(batch_size=64, epochs=3, learning_rate=1e-3),
    )
    catalog, codebook = assets
    return Pipeline(gm, lm, catalog, codebook)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name:>3} {'PASS' if ok else 'FAIL'}  {detail}")
