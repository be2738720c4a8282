"""Shared fixtures: tiny model configs and synthetic corpora.

Expensive trained-model fixtures live in test_acceptance directly so the
unit-test run stays fast.
"""

from __future__ import annotations

import pytest

from panelforge.data.synthetic import make_overfit_fixture, make_pair_fixture, make_synthetic_corpus
from panelforge.models.generator import PipelineConfig, build_model


def tiny_pipeline_config(**overrides) -> PipelineConfig:
    base = dict(
        buckets=((64, 64),),
        crop_size=32,
        patch_size=8,
        base_channels=16,
        channel_mult=(1, 2),
        cond_dim=32,
        key_dim=32,
        local_dim=32,
        global_dim=16,
        time_dim=32,
        adapter_inner_dim=32,
        adapter_layers=2,
        adapter_heads=4,
        lora_rank=4,
        n_q=2,
        n_c_cap=4,
        steps=6,
        seed=0,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="session")
def tiny_config() -> PipelineConfig:
    return tiny_pipeline_config()


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    model = build_model(tiny_config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_corpus")
    return make_synthetic_corpus(
        root, n_series=2, pages_per_series=5, panel_grid=(1, 2),
        panel_size=(64, 64), max_characters=2, seed=3,
    )


@pytest.fixture(scope="session")
def overfit_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit_corpus")
    return make_overfit_fixture(root, n_panels=10, panel_size=64)


@pytest.fixture(scope="session")
def pair_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("pair_corpus")
    return make_pair_fixture(root, n_pairs=20, panel_size=64)
