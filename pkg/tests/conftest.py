"""Shared fixtures: project root on sys.path, a tiny generated corpus, small model configs."""
from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import List

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.domain import GroundingSample
from src.knowledge import GlossaryProvider, expand_corpus
from src.synth import default_manifest, default_term_bank, generate_corpus, load_corpus

SLOW_ENV = "PKNET_RUN_SLOW"


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", f"slow: long experiment, runs only with {SLOW_ENV}=1")


def pytest_collection_modifyitems(config: pytest.Config, items: List[pytest.Item]) -> None:
    if os.getenv(SLOW_ENV) == "1":
        return
    skip = pytest.mark.skip(reason=f"set {SLOW_ENV}=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """8 train + 4 test samples at 64x64, generated once per session. Do not modify."""
    out = tmp_path_factory.mktemp("corpus")
    generate_corpus(default_manifest(seed=7, train_n=8, test_n=4, image_size=64), out, progress=False)
    return out


@pytest.fixture
def corpus_copy(tiny_corpus_dir: Path, tmp_path: Path) -> Path:
    """A writable copy of the tiny corpus."""
    import shutil

    target = tmp_path / "corpus"
    shutil.copytree(tiny_corpus_dir, target)
    return target


@pytest.fixture(scope="session")
def tiny_samples(tiny_corpus_dir: Path) -> List[GroundingSample]:
    """The tiny corpus with knowledge expanded in memory from the default glossary."""
    provider = GlossaryProvider(default_term_bank().glossary())
    return expand_corpus(provider, load_corpus(tiny_corpus_dir), progress=False)


@pytest.fixture
def tiny_model_cfg():
    from src.model import ModelConfig

    return ModelConfig(
        c_v=32,
        c_e=32,
        c_p=32,
        visual_layers=1,
        text_layers=1,
        cfm_layers=1,
        heads=4,
        ffn_dim=64,
        dropout=0.0,
        max_text_tokens=64,
    )
