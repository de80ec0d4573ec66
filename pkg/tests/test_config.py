from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from src.config import RESOLVED_CONFIG_FILE, RunConfigError, resolve_run_config, write_resolved_config
from src.config.run import load_config_file, parse_override
from src.model import AblationMode

PROJECT_ROOT = Path(__file__).resolve().parents[1]


def _write(path: Path, document: dict) -> Path:
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return path


def test_defaults_without_sources() -> None:
    resolved = resolve_run_config(env={})
    assert resolved.config.train.lr == pytest.approx(1e-4)
    assert resolved.config.model.ablation_mode is AblationMode.BRANCH_KFM
    assert resolved.source_of("train.lr") == "default"


def test_shipped_config_matches_defaults() -> None:
    shipped = resolve_run_config(PROJECT_ROOT / "configs" / "pknet.yaml", env={})
    assert shipped.config == resolve_run_config(env={}).config
    assert shipped.source_of("train.loss.lambda_l1") == "file"


def test_precedence_file_env_set_flag(tmp_path: Path) -> None:
    config = _write(
        tmp_path / "run.yaml",
        {"knowledge": {"endpoint": "http://file/x", "model": "file-model"}, "train": {"epochs": 5, "lr": 0.01}},
    )
    env = {"PKNET_KNOWLEDGE_ENDPOINT": "http://env/x", "PKNET_KNOWLEDGE_MODEL": "env-model"}

    resolved = resolve_run_config(
        config,
        overrides=["train.epochs=7", "knowledge.model=set-model"],
        flags={"train.epochs": 9, "model.ablation_mode": AblationMode.NONE, "train.seed": None},
        env=env,
    )
    cfg = resolved.config
    assert cfg.train.lr == pytest.approx(0.01)
    assert cfg.knowledge.endpoint == "http://env/x"
    assert cfg.knowledge.model == "set-model"
    assert cfg.train.epochs == 9
    assert cfg.model.ablation_mode is AblationMode.NONE
    assert cfg.train.seed == 0

    assert resolved.source_of("train.lr") == "file"
    assert resolved.source_of("knowledge.endpoint") == "env"
    assert resolved.source_of("knowledge.model") == "flag"
    assert resolved.source_of("train.seed") == "default"


def test_override_values_are_yaml_scalars() -> None:
    assert parse_override("train.lr=1e-3") == ("train.lr", 1e-3)
    assert parse_override("model.segment_embeddings=true") == ("model.segment_embeddings", True)
    assert parse_override("knowledge.glossary=") == ("knowledge.glossary", None)
    resolved = resolve_run_config(overrides=["train.loss.iou_variant=plain"], env={})
    assert resolved.config.train.loss.iou_variant.value == "plain"


@pytest.mark.parametrize("text", ["train.lr", "lr=1", "=3"])
def test_malformed_override(text: str) -> None:
    with pytest.raises(RunConfigError, match="section.field=value"):
        parse_override(text)


def test_unknown_section_and_field(tmp_path: Path) -> None:
    with pytest.raises(RunConfigError, match="Unknown config section 'optim'"):
        resolve_run_config(overrides=["optim.lr=1"], env={})
    with pytest.raises(RunConfigError, match="train.learning_rate"):
        resolve_run_config(overrides=["train.learning_rate=1"], env={})
    with pytest.raises(RunConfigError, match="Unknown sections in bad.yaml: extras"):
        load_config_file(_write(tmp_path / "bad.yaml", {"extras": {"a": 1}}))


def test_invalid_values_are_reported() -> None:
    with pytest.raises(RunConfigError, match="threshold_x40"):
        resolve_run_config(overrides=["eval.threshold_x40=1.5"], env={})
    with pytest.raises(RunConfigError, match="divisible by heads"):
        resolve_run_config(overrides=["model.c_v=30"], env={})


@pytest.mark.parametrize("size, hint", [(100, "try 96"), (48, "try 64"), (16, "try 64")])
def test_image_size_must_be_stride_multiple(size: int, hint: str) -> None:
    with pytest.raises(RunConfigError, match=hint):
        resolve_run_config(overrides=[f"data.image_size={size}"], env={})
    assert resolve_run_config(overrides=["data.image_size=96"], env={}).config.data.image_size == 96


def test_missing_and_empty_files(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        resolve_run_config(tmp_path / "absent.yaml", env={})
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert load_config_file(empty) == {}
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(RunConfigError, match="must be a mapping"):
        load_config_file(listing)


def test_resolved_config_redacts_token(tmp_path: Path) -> None:
    resolved = resolve_run_config(env={"PKNET_KNOWLEDGE_TOKEN": "s3cret"})
    assert resolved.config.knowledge.token == "s3cret"
    path = write_resolved_config(resolved, tmp_path / "run")
    assert path.name == RESOLVED_CONFIG_FILE
    text = path.read_text(encoding="utf-8")
    assert "s3cret" not in text
    document = yaml.safe_load(text)
    assert document["config"]["knowledge"]["token"] == "***"
    assert document["provenance"] == {"knowledge.token": "env"}
