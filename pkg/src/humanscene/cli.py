"""Command-line entry point: ``humanscene {datagen,train,synth,eval,export-svg}``.

Settings come from an optional flat JSON file (``--config``) overridden by
flags. Every command writes into ``--run-dir`` and leaves a ``manifest.json``
listing the resolved config, seeds and the SHA-256 of every input and output.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import OptimizerConfig, Scene, dumps_fixed, get_scene_type
from .neural.checkpoint import file_sha256

logger = logging.getLogger("humanscene")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Bad or missing user input; reported with exit code 2."""


# training defaults per model profile: (graph epochs, layout epochs, learning rate)
PROFILE_TRAINING = {
    "desk": (60, 60, 1e-3),
    "paper": (2000, 2000, 1e-4),
}


@dataclass
class RunConfig:
    run_dir: str = "run"
    scene_type: str = "bedroom"
    seed: int = 0
    profile: str = "desk"
    # datagen
    count: int = 2300
    test_fraction: float = 0.1
    catalog_seed: int = 0
    # train
    corpus: str | None = None
    graph_epochs: int | None = None
    layout_epochs: int | None = None
    learning_rate: float | None = None
    batch_size: int = 128
    time_budget: float | None = None
    # synth / eval
    checkpoints: str | None = None
    catalog: str | None = None
    prompt: str = ""
    mode: str = "full"
    input_scene: str | None = None
    skip_optimize: bool = False
    svg: bool = False
    beta: float = 0.05
    k_top: int = 5
    llm_config: str | None = None
    split: str = "test"
    limit: int = 200
    # export-svg
    scene: str | None = None

    def validate(self) -> None:
        from .pipeline import MODES

        try:
            get_scene_type(self.scene_type)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        if self.profile not in PROFILE_TRAINING:
            raise ConfigError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILE_TRAINING)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {list(MODES)}")
        if self.split not in ("train", "test"):
            raise ConfigError("split must be 'train' or 'test'")
        if self.count < 1 or self.limit < 1 or self.batch_size < 1 or self.k_top < 1:
            raise ConfigError("count, limit, batch_size and k_top must be positive")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in [0, 1)")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")

    def training(self) -> tuple[int, int, float]:
        g, lay, lr = PROFILE_TRAINING[self.profile]
        return (
            self.graph_epochs if self.graph_epochs is not None else g,
            self.layout_epochs if self.layout_epochs is not None else lay,
            self.learning_rate if self.learning_rate is not None else lr,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def load_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    for k, v in data.items():
        if isinstance(v, (dict, list)):
            raise ConfigError(f"{path}: key {k!r} must be a scalar (flat config)")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- helpers


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"--{what.replace('_', '-')} is required")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what.replace('_', ' ')} not found: {p}")
    return p


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_manifest(cfg: RunConfig, command: str, inputs: dict, outputs: list[Path], extra: dict | None = None) -> Path:
    run = Path(cfg.run_dir)
    manifest = {
        "command": command,
        "version": __version__,
        "config": asdict(cfg),
        "seeds": {"seed": cfg.seed, "catalog_seed": cfg.catalog_seed},
        "inputs": {k: {"path": str(p), "sha256": file_sha256(p)} for k, p in inputs.items() if p is not None and Path(p).is_file()},
        "outputs": {str(p.relative_to(run) if p.is_relative_to(run) else p): file_sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    path = run / "manifest.json"
    _write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_catalog(cfg: RunConfig):
    from .assembly import AssetCatalog, generate_catalog

    if cfg.catalog:
        return AssetCatalog.load(_require_file(cfg.catalog, "catalog"))
    return generate_catalog(cfg.catalog_seed)


def _load_pipeline(cfg: RunConfig):
    from .pipeline import GRAPH_CKPT, LAYOUT_CKPT, Pipeline
    from .prompt import HTTPCompletionClient

    ckpt = Path(cfg.checkpoints) if cfg.checkpoints else Path(cfg.run_dir) / "checkpoints"
    for name in (GRAPH_CKPT, LAYOUT_CKPT):
        if not (ckpt / name).is_file():
            raise ConfigError(f"checkpoint not found: {ckpt / name} (run 'train' first or pass --checkpoints)")
    client = HTTPCompletionClient.from_config(_require_file(cfg.llm_config, "llm_config")) if cfg.llm_config else None
    pipe = Pipeline.load(ckpt, _load_catalog(cfg), optimizer=OptimizerConfig(beta=cfg.beta, seed=cfg.seed), action_client=client, k_top=cfg.k_top)
    if get_scene_type(cfg.scene_type).name != pipe.scene_type:
        raise ConfigError(f"checkpoints were trained for {pipe.scene_type!r}, not {cfg.scene_type!r}")
    hashes = {name: file_sha256(ckpt / name) for name in (GRAPH_CKPT, LAYOUT_CKPT)}
    return pipe, ckpt, hashes


# ---------------------------------------------------------------- commands


def cmd_datagen(cfg: RunConfig) -> Path:
    from .corpus import GeneratorConfig, generate_corpus, save_corpus

    gen = GeneratorConfig(
        scene_type=get_scene_type(cfg.scene_type).name, seed=cfg.seed, test_fraction=cfg.test_fraction, catalog_seed=cfg.catalog_seed
    )
    corpus = generate_corpus(gen, cfg.count)
    out = Path(cfg.corpus) if cfg.corpus else Path(cfg.run_dir) / "corpus.ndjson"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    counts = {s: len(corpus.split(s)) for s in ("train", "test")}
    _write_manifest(cfg, "datagen", {}, [out], {"records": counts})
    print(f"wrote {len(corpus.records)} records ({counts['train']} train / {counts['test']} test) to {out}")
    return out


def cmd_train(cfg: RunConfig) -> dict[str, str]:
    from .corpus import load_corpus
    from .graph_diffusion import GraphLossWeights, train_graph_model
    from .layout_diffusion import LAYOUT_CTX_DIM, LayoutSchedule, train_layout_model
    from .neural import PROFILES, ModelConfig, TrainConfig
    from .pipeline import Pipeline
    from .prompt import embed_prompt

    corpus_path = _require_file(cfg.corpus, "corpus")
    corpus = load_corpus(corpus_path)
    st = get_scene_type(corpus.scene_type)
    if st.name != get_scene_type(cfg.scene_type).name:
        raise ConfigError(f"corpus holds {st.name!r} scenes, config asks for {cfg.scene_type!r}")
    records = corpus.split("train")
    if not records:
        raise ConfigError(f"{corpus_path}: no training records")
    g_epochs, l_epochs, lr = cfg.training()
    arch = PROFILES[cfg.profile]
    graphs = [r.graph(corpus.num_features) for r in records]
    contexts = np.stack([embed_prompt(r.caption).vector for r in records])

    def progress(tag):
        return lambda e, loss: logger.info("%s epoch %d loss %.4f", tag, e + 1, loss)

    graph_model, _ = train_graph_model(
        graphs, contexts, st.name,
        ModelConfig(st.vocabulary.N, corpus.num_features, "graph", **arch),
        TrainConfig(batch_size=cfg.batch_size, learning_rate=lr, epochs=g_epochs, seed=cfg.seed),
        weights=GraphLossWeights() if cfg.profile == "paper" else GraphLossWeights.for_epochs(g_epochs),
        time_budget=cfg.time_budget, on_epoch=progress("graph"),
    )
    layout_model, _ = train_layout_model(
        graphs, [r.layouts for r in records], st.name,
        ModelConfig(st.vocabulary.N, corpus.num_features, "layout", ctx_dim=LAYOUT_CTX_DIM, timesteps=LayoutSchedule().T, **arch),
        TrainConfig(batch_size=cfg.batch_size, learning_rate=lr, epochs=l_epochs, seed=cfg.seed),
        time_budget=cfg.time_budget, on_epoch=progress("layout"),
    )
    ckpt = Path(cfg.checkpoints) if cfg.checkpoints else Path(cfg.run_dir) / "checkpoints"
    hashes = Pipeline(graph_model, layout_model, None, corpus.codebook).save(ckpt)
    outputs = [ckpt / name for name in sorted(hashes)]
    _write_manifest(
        cfg, "train", {"corpus": corpus_path}, outputs,
        {"checkpoints": hashes, "training": {"graph": graph_model.train_info, "layout": layout_model.train_info}},
    )
    print(f"wrote checkpoints to {ckpt}")
    return hashes


def cmd_synth(cfg: RunConfig) -> Path:
    from .pipeline import synthesize
    from .svg import export_svg

    pipe, _, hashes = _load_pipeline(cfg)
    source = None
    if cfg.mode in ("stylize", "rearrange", "complete"):
        path = _require_file(cfg.input_scene, "input_scene")
        try:
            source = Scene.from_json(path.read_text())
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: not a scene JSON ({exc})") from None
    result = synthesize(pipe, cfg.prompt, cfg.seed, cfg.mode, source, cfg.skip_optimize)
    for issue in result.partial.issues:
        print(f"warning: {issue}", file=sys.stderr)
    run = Path(cfg.run_dir)
    out = run / "scene.json"
    _write(out, result.scene.to_json() + "\n")
    outputs = [out]
    if cfg.svg:
        svg = run / "scene.svg"
        _write(svg, export_svg(result.scene))
        outputs.append(svg)
    _write_manifest(
        cfg, "synth", {"input_scene": cfg.input_scene, "catalog": cfg.catalog, "llm_config": cfg.llm_config}, outputs,
        {"checkpoints": hashes},
    )
    print(f"wrote {out} ({len(result.scene.objects)} objects, {len(result.scene.humans)} humans)")
    return out


def evaluate(pipe, records, seed: int = 0) -> dict:
    """iRecall and scene statistics over records, with and without optimisation.

    Both rows share the same sampled scenes; only the final optimisation step
    differs. iRecall is pooled over all prompt triplets.
    """
    from .evaluation import irecall, scene_stats
    from .pipeline import SynthesisRequest, optimize_result, synthesize_batch

    raw = synthesize_batch(pipe, [SynthesisRequest(r.caption, seed + i, skip_optimize=True) for i, r in enumerate(records)])
    rows = {}
    for name, results in (("optimized", [optimize_result(pipe, x) for x in raw]), ("skip_optimize", raw)):
        hits = total = 0
        coll = viol = removed = 0
        for r, x in zip(records, results):
            hits += irecall(r.triplets, x.scene) * len(r.triplets)
            total += len(r.triplets)
            st = scene_stats(x.scene)
            coll += st["collisions"]
            viol += st["human_object_violations"]
            removed += len(x.report.removed) if x.report else 0
        k = max(len(records), 1)
        rows[name] = {
            "irecall": hits / total if total else 1.0,
            "triplets": total,
            "scenes": len(records),
            "collisions_per_scene": coll / k,
            "human_violations_per_scene": viol / k,
            "removed_per_scene": removed / k,
        }
    return rows


def cmd_eval(cfg: RunConfig) -> dict:
    from .corpus import load_corpus
    from .evaluation import format_table

    pipe, _, hashes = _load_pipeline(cfg)
    corpus_path = _require_file(cfg.corpus, "corpus")
    corpus = load_corpus(corpus_path)
    records = corpus.split(cfg.split)[: cfg.limit]
    if not records:
        raise ConfigError(f"{corpus_path}: no {cfg.split} records")
    rows = evaluate(pipe, records, cfg.seed)
    run = Path(cfg.run_dir)
    out_json = run / "report.json"
    _write(out_json, dumps_fixed(rows) + "\n")
    table = format_table(
        [{"setting": k, **v} for k, v in rows.items()],
        ["setting", "irecall", "triplets", "collisions_per_scene", "human_violations_per_scene", "removed_per_scene"],
    )
    out_txt = run / "report.txt"
    _write(out_txt, table + "\n")
    _write_manifest(cfg, "eval", {"corpus": corpus_path}, [out_json, out_txt], {"checkpoints": hashes})
    print(table)
    return rows


def cmd_export_svg(cfg: RunConfig) -> Path:
    from .svg import export_svg

    path = _require_file(cfg.scene, "scene")
    try:
        scene = Scene.from_json(path.read_text())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: not a scene JSON ({exc})") from None
    out = Path(cfg.run_dir) / (path.stem + ".svg")
    _write(out, export_svg(scene))
    _write_manifest(cfg, "export-svg", {"scene": path}, [out])
    print(f"wrote {out}")
    return out


COMMANDS = {
    "datagen": cmd_datagen,
    "train": cmd_train,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "export-svg": cmd_export_svg,
}


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="humanscene", description="Human-aware indoor scene synthesis from text.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file with RunConfig keys; flags override it")
    common.add_argument("--run-dir", dest="run_dir")
    common.add_argument("--scene-type", dest="scene_type")
    common.add_argument("--seed", type=int)
    common.add_argument("--profile", choices=sorted(PROFILE_TRAINING))
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--count", type=int)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--catalog-seed", dest="catalog_seed", type=int)
    p.add_argument("--out", dest="corpus", help="corpus path (default RUN_DIR/corpus.ndjson)")

    p = sub.add_parser("train", parents=[common], help="train the graph and layout models")
    p.add_argument("--corpus")
    p.add_argument("--checkpoints", help="output directory (default RUN_DIR/checkpoints)")
    p.add_argument("--graph-epochs", dest="graph_epochs", type=int)
    p.add_argument("--layout-epochs", dest="layout_epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--time-budget", dest="time_budget", type=float, help="seconds per model")

    def synth_args(p):
        p.add_argument("--checkpoints")
        p.add_argument("--catalog", help="asset catalog JSON (default: bundled procedural catalog)")
        p.add_argument("--beta", type=float)
        p.add_argument("--k-top", dest="k_top", type=int)
        p.add_argument("--llm-config", dest="llm_config", help="JSON with the action LLM endpoint")
        p.add_argument("--skip-optimize", dest="skip_optimize", action="store_const", const=True)

    p = sub.add_parser("synth", parents=[common], help="synthesise one scene")
    synth_args(p)
    p.add_argument("--prompt")
    p.add_argument("--mode")
    p.add_argument("--input-scene", dest="input_scene")
    p.add_argument("--svg", action="store_const", const=True)

    p = sub.add_parser("eval", parents=[common], help="iRecall and scene statistics over a corpus split")
    synth_args(p)
    p.add_argument("--corpus")
    p.add_argument("--split")
    p.add_argument("--limit", type=int)

    p = sub.add_parser("export-svg", parents=[common], help="draw a scene JSON as a top-down SVG")
    p.add_argument("scene")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with code 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        logger.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
