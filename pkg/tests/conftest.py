"""Shared fixtures: a small on-disk phantom dataset and tiny model configs.

Everything here is deliberately small so the unit tests stay fast; the
acceptance tests build their own full-size fixtures.
"""

import dataclasses

import pytest

from tadm.phantom import gen_dataset, load_dataset
from tadm.pipeline import TrainConfig


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """20 subjects, 3 scans each, 24px; shared read-only across tests."""
    root = tmp_path_factory.mktemp("phantom24")
    manifest = gen_dataset(n_subjects=20, scans_per_subject=3, size=24,
                           seed=5, out_dir=str(root), emit_masks=True)
    return load_dataset(manifest)


@pytest.fixture()
def tiny_config():
    """Smallest config that still exercises every code path."""
    return TrainConfig(
        seed=0,
        image_size=24,
        t_steps=8,
        steps=3,
        batch_size=2,
        lr=1e-3,
        lambda_bae=0.05,
        pretrain_steps=3,
        pretrain_batch=2,
        pretrain_lr=1e-3,
        enc_channels=8,
        enc_blocks=1,
        enc_growth=4,
        unet_base=8,
        emb_width=32,
        meta_dim=8,
        eval_batch=4,
    )


def clone_config(cfg: TrainConfig, **kwargs) -> TrainConfig:
    return dataclasses.replace(cfg, **kwargs)
