"""Knowledge ablation experiment: every mode trained and evaluated over several seeds."""

from __future__ import annotations

import argparse
import json
import logging
import statistics
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from src.config.run import resolve_run_config, write_resolved_config
from src.domain import GroundingSample, Split
from src.eval import EvalReport, evaluate, write_predictions, write_report
from src.eval.report import render_table
from src.model import AblationMode, predict_samples
from src.synth.corpus import load_corpus
from src.train import train

LOGGER = logging.getLogger(__name__)

MODES: Tuple[AblationMode, ...] = (
    AblationMode.NONE,
    AblationMode.CONCAT_TEXT,
    AblationMode.BRANCH,
    AblationMode.BRANCH_KFM,
)
MIN_KFM_GAIN = 5.0


@dataclass(frozen=True)
class RunOutcome:
    mode: AblationMode
    seed: int
    report: EvalReport
    run_dir: Path


def check_ordering(mean_miou: Dict[AblationMode, float], min_gain: float = MIN_KFM_GAIN) -> List[str]:
    """Return the violated ordering conditions (empty when branch_kfm >= branch >= none holds).

    concat_text is reported but never constrained.
    """
    problems: List[str] = []
    full = mean_miou.get(AblationMode.BRANCH_KFM)
    branch = mean_miou.get(AblationMode.BRANCH)
    none = mean_miou.get(AblationMode.NONE)
    if full is None or branch is None or none is None:
        return ["ordering needs none, branch and branch_kfm runs"]
    if full < branch:
        problems.append(f"branch_kfm mIoU {full:.2f} < branch {branch:.2f}")
    if branch < none:
        problems.append(f"branch mIoU {branch:.2f} < none {none:.2f}")
    if full - none < min_gain:
        problems.append(f"branch_kfm gains {full - none:.2f} mIoU over none, below {min_gain:.2f}")
    return problems


def mean_miou(outcomes: Sequence[RunOutcome]) -> Dict[AblationMode, float]:
    grouped: Dict[AblationMode, List[float]] = {}
    for outcome in outcomes:
        if outcome.report.all.miou is not None:
            grouped.setdefault(outcome.mode, []).append(outcome.report.all.miou)
    return {mode: statistics.fmean(values) for mode, values in grouped.items()}


def run_one(
    samples: Sequence[GroundingSample],
    mode: AblationMode,
    seed: int,
    out_dir: Path,
    *,
    config_path: Optional[str] = None,
    overrides: Sequence[str] = (),
    epochs: Optional[int] = None,
) -> RunOutcome:
    resolved = resolve_run_config(
        config_path,
        overrides=overrides,
        flags={"model.ablation_mode": mode, "train.seed": seed, "train.epochs": epochs},
    )
    cfg = resolved.config
    run_dir = out_dir / f"{mode.cli_name}-seed{seed}"
    write_resolved_config(resolved, run_dir)

    result = train(samples, cfg.model, cfg.train, run_dir, progress=False)
    test = [s for s in samples if s.split is Split.TEST]
    predictions = predict_samples(result.model, test)
    write_predictions(run_dir / "predictions.jsonl", predictions)
    report = evaluate(predictions, test, cfg.eval)
    write_report(report, run_dir / "report.json", "json")
    write_report(report, run_dir / "report.md", "markdown")
    LOGGER.info("%s seed=%d: all mIoU=%s", mode.cli_name, seed, report.all.miou)
    return RunOutcome(mode=mode, seed=seed, report=report, run_dir=run_dir)


def run_ablation(
    data: Path,
    seeds: Sequence[int],
    out_dir: Path,
    *,
    modes: Sequence[AblationMode] = MODES,
    config_path: Optional[str] = None,
    overrides: Sequence[str] = (),
    epochs: Optional[int] = None,
) -> Path:
    samples = load_corpus(data)
    outcomes = [
        run_one(samples, mode, seed, out_dir, config_path=config_path, overrides=overrides, epochs=epochs)
        for mode in modes
        for seed in seeds
    ]

    means = mean_miou(outcomes)
    problems = check_ordering(means)
    table = render_table([(f"{o.mode.cli_name} / seed {o.seed}", o.report) for o in outcomes])
    lines = [table, "", "| mode | mean all mIoU |", "|---|---|"]
    lines += [f"| {mode.cli_name} | {value:.2f} |" for mode, value in means.items()]
    lines += ["", "Ordering holds." if not problems else "Ordering violated: " + "; ".join(problems), ""]
    (out_dir / "summary.md").write_text("\n".join(lines), encoding="utf-8")
    (out_dir / "summary.json").write_text(
        json.dumps(
            {
                "seeds": list(seeds),
                "mean_miou": {mode.value: value for mode, value in means.items()},
                "ordering_ok": not problems,
                "problems": problems,
                "runs": [
                    {"mode": o.mode.value, "seed": o.seed, "dir": str(o.run_dir), "report": o.report.to_json()}
                    for o in outcomes
                ],
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return out_dir / "summary.md"


def main() -> None:
    parser = argparse.ArgumentParser(description="Train and evaluate every knowledge mode over several seeds.")
    parser.add_argument("data", help="Corpus directory with knowledge already expanded.")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--modes", nargs="+", choices=[m.cli_name for m in MODES], default=[m.cli_name for m in MODES])
    parser.add_argument("--config", help="Run configuration YAML.")
    parser.add_argument("--set", action="append", default=[], dest="overrides", metavar="SECTION.FIELD=VALUE")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--out", help="Output directory (default: outputs/ablation/<timestamp>).")
    args = parser.parse_args()

    load_dotenv()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    data = Path(args.data)
    if not data.is_dir():
        raise SystemExit(f"Corpus not found: {data}")
    ts = datetime.now().strftime("%Y%m%d_%H%M%S")
    out_dir = Path(args.out) if args.out else Path("outputs") / "ablation" / ts
    summary = run_ablation(
        data,
        args.seeds,
        out_dir,
        modes=[AblationMode.parse(m) for m in args.modes],
        config_path=args.config,
        overrides=args.overrides,
        epochs=args.epochs,
    )
    print(f"Saved summary to: {summary}")


if __name__ == "__main__":
    main()
