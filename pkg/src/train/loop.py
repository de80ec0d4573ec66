"""Training loop: seeded shuffles, grounding loss, clipped AdamW steps, checkpoints."""
from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from src.domain import GroundingSample, Split
from src.eval.metrics import EvalConfig, EvalReport, evaluate
from src.geometry.losses import LossBreakdown, grounding_loss
from src.model.checkpoint import load_checkpoint, restore_rng_state, save_checkpoint
from src.model.config import ModelConfig
from src.model.data import GroundingDataset, collate, model_texts
from src.model.pknet import PKNet, predict_samples
from src.model.vocab import Vocabulary, build_vocabulary
from src.utils.text import derive_seed, mkhash

from .config import TrainConfig

LOGGER = logging.getLogger(__name__)

LOG_FILE = "train_log.jsonl"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "last.pt"


class TrainingError(RuntimeError):
    pass


def seed_everything(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)
    torch.backends.cudnn.benchmark = not deterministic
    torch.backends.cudnn.deterministic = deterministic
    if deterministic:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
    torch.use_deterministic_algorithms(deterministic, warn_only=True)


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    l1: float
    iou: float
    seconds: float
    lr: float
    samples: int
    eval: Optional[Dict[str, Any]] = None


@dataclass
class TrainLog:
    """Per-epoch records mirrored to a JSONL file, one epoch per line.

    A finished run appends a closing line holding ``final_checkpoint`` and ``final_epoch``.
    """

    path: Path
    config_hash: str
    records: List[EpochRecord] = field(default_factory=list)
    checkpoint: Optional[Path] = None

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise TrainingError(
                f"Epoch {record.epoch} does not follow logged epoch {self.records[-1].epoch}"
            )
        self.records.append(record)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"config_hash": self.config_hash, **asdict(record)}
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload) + "\n")

    def close(self, checkpoint: Path, epoch: int) -> None:
        self.checkpoint = checkpoint
        self.path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"config_hash": self.config_hash, "final_checkpoint": str(checkpoint), "final_epoch": epoch}
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload) + "\n")

    def truncate_after(self, epoch: int) -> None:
        """Drop records past ``epoch`` and any closing line (used when resuming from an older checkpoint)."""
        self.records = [r for r in self.records if r.epoch <= epoch]
        self.checkpoint = None
        lines = [json.dumps({"config_hash": self.config_hash, **asdict(r)}) + "\n" for r in self.records]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("".join(lines), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "TrainLog":
        path = Path(path)
        records: List[EpochRecord] = []
        config_hash = ""
        checkpoint: Optional[Path] = None
        if path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                payload = json.loads(line)
                config_hash = payload.pop("config_hash", config_hash)
                if "final_checkpoint" in payload:
                    checkpoint = Path(payload["final_checkpoint"])
                    continue
                records.append(EpochRecord(**payload))
        return cls(path=path, config_hash=config_hash, records=records, checkpoint=checkpoint)


@dataclass
class TrainResult:
    model: PKNet
    checkpoint: Path
    log: TrainLog


def run_hash(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    return mkhash(model_cfg.config_hash(), train_cfg.config_hash())[:16]


def evaluate_during_training(
    model: PKNet,
    samples: Sequence[GroundingSample],
    cfg: Optional[EvalConfig] = None,
    *,
    batch_size: int = 32,
) -> EvalReport:
    """Evaluate on ``samples``; the model's train/eval mode is restored afterwards."""
    return evaluate(predict_samples(model, samples, batch_size=batch_size), samples, cfg)


def _epoch_generator(seed: int, epoch: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, f"epoch-{epoch}") % 2**63)
    return generator


def _set_text_trainable(model: PKNet, trainable: bool) -> None:
    for param in model.text.parameters():
        param.requires_grad_(trainable)


def _check_knowledge(samples: Sequence[GroundingSample], model_cfg: ModelConfig) -> None:
    missing = []
    for sample in samples:
        try:
            model_texts(sample, model_cfg.ablation_mode)
        except ValueError:
            missing.append(sample.image_id)
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise TrainingError(
            f"Mode '{model_cfg.ablation_mode.value}' needs knowledge text; {len(missing)} samples lack it: {shown}"
        )


def train(
    samples: Sequence[GroundingSample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str | Path,
    *,
    vocab: Optional[Vocabulary] = None,
    resume: Optional[str | Path] = None,
    eval_samples: Optional[Sequence[GroundingSample]] = None,
    eval_cfg: Optional[EvalConfig] = None,
    stop_after: Optional[int] = None,
    progress: bool = True,
) -> TrainResult:
    """Train on the train split of ``samples``.

    ``stop_after`` ends the run early after that epoch (with a checkpoint),
    leaving the schedule to be finished through ``resume``.
    """
    out_dir = Path(out_dir)
    train_samples = [s for s in samples if s.split is Split.TRAIN]
    if not train_samples:
        raise TrainingError("The train split is empty")
    _check_knowledge(train_samples, model_cfg)
    if eval_samples is not None and train_cfg.eval_every:
        if not eval_samples:
            raise TrainingError("eval_every is set but the evaluation split is empty")
        _check_knowledge(eval_samples, model_cfg)

    seed_everything(train_cfg.seed, train_cfg.deterministic)
    device = resolve_device(train_cfg.device)

    checkpoint = None
    if resume is not None:
        checkpoint = load_checkpoint(resume, expected_config=model_cfg)
        vocab = checkpoint.vocab
        stored = checkpoint.extra.get("train_config_hash")
        if stored and stored != train_cfg.config_hash():
            raise TrainingError(f"Checkpoint {resume} was written with a different train config")
    vocab = vocab or build_vocabulary(train_samples)

    model = PKNet(model_cfg, vocab).to(device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    start_epoch = 1
    if checkpoint is not None:
        model.load_state_dict(checkpoint.state_dict)
        if checkpoint.optimizer_state is not None:
            optimizer.load_state_dict(checkpoint.optimizer_state)
        if checkpoint.rng_state is not None:
            restore_rng_state(checkpoint.rng_state)
        start_epoch = checkpoint.epoch + 1
        LOGGER.info("Resuming from %s at epoch %d", resume, start_epoch)

    log = TrainLog.read(out_dir / LOG_FILE) if checkpoint is not None else TrainLog(out_dir / LOG_FILE, "")
    log.config_hash = run_hash(model.cfg, train_cfg)
    if checkpoint is not None:
        log.truncate_after(checkpoint.epoch)
    else:
        (out_dir / LOG_FILE).unlink(missing_ok=True)

    dataset = GroundingDataset(train_samples, vocab, model.cfg.ablation_mode, model.cfg.max_text_tokens)
    last_epoch = min(train_cfg.epochs, stop_after) if stop_after else train_cfg.epochs
    ckpt_dir = out_dir / CHECKPOINT_DIR
    final_path = ckpt_dir / FINAL_CHECKPOINT
    extra = {"train_config_hash": train_cfg.config_hash(), "train_config": train_cfg.to_json()}
    LOGGER.info(
        "Training mode=%s on %d samples for epochs %d..%d (device=%s)",
        model.cfg.ablation_mode.value,
        len(train_samples),
        start_epoch,
        last_epoch,
        device,
    )

    for epoch in range(start_epoch, last_epoch + 1):
        model.train()
        _set_text_trainable(model, epoch > train_cfg.freeze_text_epochs)
        loader = DataLoader(
            dataset,
            batch_size=train_cfg.batch_size,
            shuffle=True,
            generator=_epoch_generator(train_cfg.seed, epoch),
            collate_fn=collate,
            num_workers=train_cfg.num_workers,
        )
        started = time.perf_counter()
        sums = {"l1": 0.0, "iou": 0.0}
        seen = 0
        for batch in tqdm(loader, desc=f"Epoch {epoch}", disable=not progress, leave=False):
            batch = batch.to(device)
            output = model(batch.images, batch.text, batch.knowledge)
            terms = grounding_loss(output.boxes, batch.boxes, train_cfg.loss)
            if not torch.isfinite(terms.total):
                raise TrainingError(
                    f"Non-finite loss at epoch {epoch} for samples: {', '.join(batch.image_ids)}"
                )
            optimizer.zero_grad(set_to_none=True)
            terms.total.backward()
            if train_cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            optimizer.step()

            size = len(batch.image_ids)
            seen += size
            sums["l1"] += float(terms.l1.detach()) * size
            sums["iou"] += float(terms.iou.detach()) * size

        report = None
        if eval_samples and train_cfg.eval_every and epoch % train_cfg.eval_every == 0:
            report = evaluate_during_training(model, eval_samples, eval_cfg).to_json()
        epoch_loss = LossBreakdown.compose(sums["l1"] / seen, sums["iou"] / seen, train_cfg.loss)
        record = EpochRecord(
            epoch=epoch,
            loss=epoch_loss.total,
            l1=epoch_loss.l1_term,
            iou=epoch_loss.iou_term,
            seconds=time.perf_counter() - started,
            lr=train_cfg.lr,
            samples=seen,
            eval=report,
        )
        log.append(record)
        LOGGER.info("epoch %d loss=%.4f l1=%.4f iou=%.4f (%.1fs)", epoch, record.loss, record.l1, record.iou, record.seconds)

        if train_cfg.checkpoint_every and epoch % train_cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.pt", model, epoch=epoch, optimizer=optimizer, extra=extra)

    final_epoch = max(start_epoch - 1, last_epoch)
    save_checkpoint(final_path, model, epoch=final_epoch, optimizer=optimizer, extra=extra)
    log.close(final_path, final_epoch)
    _set_text_trainable(model, True)
    return TrainResult(model=model, checkpoint=final_path, log=log)


__all__ = [
    "EpochRecord",
    "TrainLog",
    "TrainResult",
    "TrainingError",
    "evaluate_during_training",
    "resolve_device",
    "run_hash",
    "seed_everything",
    "train",
]
