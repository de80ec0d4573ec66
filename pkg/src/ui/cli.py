"""Command line interface for corpus generation, training, evaluation and inference."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from dotenv import load_dotenv

from src.config.run import (
    KnowledgeConfig,
    ResolvedConfig,
    RunConfigError,
    resolve_run_config,
    write_resolved_config,
)
from src.domain import STRIDE, Split
from src.knowledge.providers import ENDPOINT_ENV, KnowledgeProvider

LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
LOG_LEVEL_ENV = "PKNET_LOG_LEVEL"
MODES = ("none", "concat-text", "branch", "branch-kfm")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _image_size(value: str) -> int:
    try:
        size = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"image size must be an integer, got {value!r}") from exc
    if size < 2 * STRIDE or size % STRIDE:
        nearest = max(2 * STRIDE, round(size / STRIDE) * STRIDE)
        raise argparse.ArgumentTypeError(
            f"image size {size} is not a multiple of {STRIDE} (and at least {2 * STRIDE}); try {nearest}"
        )
    return size


def _non_empty(value: str) -> str:
    if not value.strip():
        raise argparse.ArgumentTypeError("must not be empty")
    return value


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Run configuration YAML (sections data/model/train/eval/knowledge).")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="SECTION.FIELD=VALUE",
        help="Override any configuration field; may be repeated.",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pknet", description="Knowledge-enhanced pathology visual grounding")
    parser.add_argument("--log-level", default=None, help=f"Logging level (default: ${LOG_LEVEL_ENV} or INFO).")
    subparsers = parser.add_subparsers(dest="command")
    subparsers.required = True

    gen = subparsers.add_parser("gen-data", help="Generate the synthetic grounding corpus")
    _add_config_args(gen)
    gen.add_argument("--out", help="Output corpus directory (data.root).")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--train-n", type=int)
    gen.add_argument("--test-n", type=int)
    gen.add_argument("--image-size", type=_image_size)
    gen.add_argument("--decoy-fraction", type=float)
    gen.add_argument("--workers", type=int)
    gen.set_defaults(func=_run_gen_data)

    expand = subparsers.add_parser("expand", help="Fill the knowledge field of a corpus")
    _add_config_args(expand)
    expand.add_argument("--data", help="Corpus directory (data.root).")
    source = expand.add_mutually_exclusive_group()
    source.add_argument("--glossary", help="Glossary JSON (term -> explanation).")
    source.add_argument("--endpoint", help="Remote knowledge endpoint URL.")
    expand.add_argument("--force", action="store_true", help="Re-expand samples that already carry knowledge.")
    expand.set_defaults(func=_run_expand)

    train = subparsers.add_parser("train", help="Train a grounding model")
    _add_config_args(train)
    train.add_argument("--data", help="Corpus directory (data.root).")
    train.add_argument("--mode", choices=MODES, help="Knowledge ablation mode.")
    train.add_argument("--out", help="Run directory (default: runs/<mode>-seed<seed>).")
    train.add_argument("--resume", help="Checkpoint to resume from.")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)
    train.set_defaults(func=_run_train)

    ev = subparsers.add_parser("eval", help="Evaluate a checkpoint or a predictions file")
    _add_config_args(ev)
    target = ev.add_mutually_exclusive_group(required=True)
    target.add_argument("--checkpoint")
    target.add_argument("--predictions")
    ev.add_argument("--data", help="Corpus directory (data.root).")
    ev.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)
    ev.add_argument("--out", help="Report directory (default: next to the checkpoint or predictions).")
    ev.set_defaults(func=_run_eval)

    infer = subparsers.add_parser("infer", help="Ground one expression in one image")
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--image", required=True)
    infer.add_argument("--expression", required=True, type=_non_empty)
    infer.add_argument("--knowledge", help="Knowledge text to use as is.")
    infer.add_argument("--glossary", help="Glossary JSON used to expand the expression.")
    infer.add_argument("--endpoint", help="Remote knowledge endpoint URL.")
    infer.add_argument("--overlay", help="Write a PNG with the predicted box drawn.")
    infer.set_defaults(func=_run_infer)

    stats = subparsers.add_parser("stats", help="Corpus statistics")
    stats.add_argument("--data", required=True)
    stats.add_argument("--top-k", type=int, default=100)
    stats.add_argument("--format", choices=("json", "markdown", "markdown-table"), default="json")
    stats.set_defaults(func=_run_stats)
    return parser


def configure_logging(level: Optional[str]) -> None:
    name = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format=LOG_FORMAT)


def _resolve(args: argparse.Namespace, flags: Dict[str, Any]) -> ResolvedConfig:
    return resolve_run_config(args.config, overrides=args.overrides, flags=flags)


def _run_gen_data(args: argparse.Namespace) -> int:
    from src.synth.generator import CorpusManifest, generate_corpus, split_counts

    resolved = _resolve(
        args,
        {
            "data.root": args.out,
            "data.seed": args.seed,
            "data.train_n": args.train_n,
            "data.test_n": args.test_n,
            "data.image_size": args.image_size,
            "data.decoy_fraction": args.decoy_fraction,
            "data.workers": args.workers,
        },
    )
    data = resolved.config.data
    manifest = CorpusManifest(
        seed=data.seed,
        counts=split_counts(data.train_n, data.test_n),
        image_size=data.image_size,
        decoy_fraction=data.decoy_fraction,
    )
    out = Path(data.root)
    write_resolved_config(resolved, out)
    generate_corpus(manifest, out, workers=data.workers)
    print(out)
    return EXIT_OK


def _run_expand(args: argparse.Namespace) -> int:
    from src.knowledge import expand_corpus
    from src.synth.corpus import load_corpus
    from src.synth.generator import ANNOTATIONS_FILE, GLOSSARY_FILE

    resolved = _resolve(
        args,
        {"data.root": args.data, "knowledge.glossary": args.glossary, "knowledge.endpoint": args.endpoint},
    )
    cfg = resolved.config
    root = Path(cfg.data.root)
    knowledge = cfg.knowledge
    if knowledge.glossary is None and knowledge.endpoint is None and (root / GLOSSARY_FILE).exists():
        knowledge = knowledge.model_copy(update={"glossary": str(root / GLOSSARY_FILE)})
    provider = _knowledge_provider(knowledge)
    samples = load_corpus(root)
    expanded = expand_corpus(provider, samples, annotations_path=root / ANNOTATIONS_FILE, force=args.force)
    filled = sum(1 for sample in expanded if sample.knowledge is not None)
    print(json.dumps({"samples": len(expanded), "with_knowledge": filled}))
    return EXIT_OK


def _knowledge_provider(knowledge: KnowledgeConfig) -> KnowledgeProvider:
    """Glossary first, then the remote endpoint."""
    from src.knowledge import GlossaryProvider, RemoteProvider, load_glossary

    if knowledge.glossary:
        return GlossaryProvider(load_glossary(knowledge.glossary))
    if not knowledge.endpoint:
        raise RunConfigError(f"No knowledge source: pass --glossary or --endpoint (or set {ENDPOINT_ENV})")
    return RemoteProvider(
        knowledge.endpoint,
        token=knowledge.token,
        model=knowledge.model,
        prompt_template=knowledge.prompt_template,
        cache_path=knowledge.cache,
    )


def _run_train(args: argparse.Namespace) -> int:
    from src.synth.corpus import load_corpus
    from src.train import train

    resolved = _resolve(
        args,
        {
            "data.root": args.data,
            "model.ablation_mode": args.mode.replace("-", "_") if args.mode else None,
            "train.epochs": args.epochs,
            "train.seed": args.seed,
        },
    )
    cfg = resolved.config
    out = Path(args.out or Path("runs") / f"{cfg.model.ablation_mode.cli_name}-seed{cfg.train.seed}")
    write_resolved_config(resolved, out)

    samples = load_corpus(cfg.data.root)
    test_samples = [s for s in samples if s.split is Split.TEST]
    result = train(
        samples,
        cfg.model,
        cfg.train,
        out,
        resume=args.resume,
        eval_samples=test_samples or None,
        eval_cfg=cfg.eval,
    )
    last = result.log.records[-1] if result.log.records else None
    print(
        json.dumps(
            {
                "checkpoint": str(result.checkpoint),
                "log": str(result.log.path),
                "epochs": len(result.log.records),
                "final_loss": last.loss if last else None,
            }
        )
    )
    return EXIT_OK


def _run_eval(args: argparse.Namespace) -> int:
    from src.eval import ReportFormat, evaluate, read_predictions, render_markdown, write_predictions, write_report
    from src.synth.corpus import load_corpus, select_split

    resolved = _resolve(args, {"data.root": args.data})
    cfg = resolved.config
    samples = select_split(load_corpus(cfg.data.root), args.split)
    if args.checkpoint:
        from src.model import load_checkpoint, predict_samples
        from src.train.loop import resolve_device

        checkpoint = load_checkpoint(args.checkpoint)
        model = checkpoint.build_model(resolve_device(cfg.train.device))
        predictions = predict_samples(model, samples, progress=True)
        out = Path(args.out or Path(args.checkpoint).resolve().parent.parent / f"eval-{args.split}")
        write_predictions(out / "predictions.jsonl", predictions)
    else:
        predictions = read_predictions(args.predictions)
        out = Path(args.out or Path(args.predictions).resolve().parent)
    write_resolved_config(resolved, out)
    report = evaluate(predictions, samples, cfg.eval)
    write_report(report, out / "report.json", "json")
    write_report(report, out / "report.md", ReportFormat.MARKDOWN)
    print(render_markdown(report), end="")
    return EXIT_OK


def _run_infer(args: argparse.Namespace) -> int:
    import numpy as np
    from PIL import Image, ImageDraw

    from src.geometry import to_corners
    from src.model import load_checkpoint

    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build_model("cpu")

    knowledge: Optional[str] = None
    if model.mode.requires_knowledge:
        if args.knowledge is not None:
            knowledge = args.knowledge
        else:
            sources = resolve_run_config(
                flags={"knowledge.glossary": args.glossary, "knowledge.endpoint": args.endpoint}
            ).config.knowledge
            if not (sources.glossary or sources.endpoint):
                raise RunConfigError(
                    f"Checkpoint mode '{model.mode.cli_name}' needs knowledge: pass --knowledge, --glossary or --endpoint"
                )
            knowledge = _knowledge_provider(sources).expand(args.expression).text

    with Image.open(args.image) as handle:
        rgb = handle.convert("RGB")
    array = np.ascontiguousarray(np.asarray(rgb, dtype=np.uint8).transpose(2, 0, 1))
    box = model.predict_image(array, args.expression, knowledge)
    print(json.dumps(box.to_json()))

    if args.overlay:
        corners = to_corners(box)
        width, height = rgb.size
        overlay = rgb.copy()
        ImageDraw.Draw(overlay).rectangle(
            [corners.x0 * width, corners.y0 * height, corners.x1 * width, corners.y1 * height],
            outline=(0, 255, 0),
            width=max(2, width // 128),
        )
        Path(args.overlay).parent.mkdir(parents=True, exist_ok=True)
        overlay.save(args.overlay, format="PNG")
    return EXIT_OK


def _run_stats(args: argparse.Namespace) -> int:
    from src.synth.corpus import corpus_stats, load_corpus
    from src.synth.generator import TERM_BANK_FILE
    from src.synth.terms import TermBank

    root = Path(args.data)
    bank = TermBank.from_file(root / TERM_BANK_FILE) if (root / TERM_BANK_FILE).exists() else None
    stats = corpus_stats(load_corpus(root, require_manifest=False), bank=bank, top_k=args.top_k)
    if args.format in ("markdown", "markdown-table"):
        print(stats.to_markdown(), end="")
    else:
        print(json.dumps(stats.to_json(), indent=2))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except RunConfigError as exc:
        LOGGER.error("%s", exc)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        LOGGER.error("%s failed: %s", args.command, exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
