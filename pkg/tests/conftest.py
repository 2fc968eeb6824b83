import dataclasses

import pytest
import torch

torch.set_num_threads(2)

from ermv.config import load_config
from ermv.pipeline import cmd_gen_data, cmd_train

TINY_OVERRIDES = [
    "data.n_train=2",
    "data.n_holdout=1",
    "data.T=4",
    "data.N=2",
    "data.H=16",
    "data.W=16",
    "data.blur_substeps=1",
    "window.L_hist=2",
    "window.L_future=2",
    "window.N=2",
    "window.K_hist=2",
    "window.K_future=2",
    "model.image_size=16",
    "model.base_width=8",
    "model.level_widths=[8,12,16]",
    "model.token_width=16",
    "model.state_tokens=2",
    "model.m_samples=2",
    "model.time_dim=8",
    "model.t_max=8",
    "model.n_views_max=4",
    "schedule.t_steps=10",
    "schedule.beta_end=0.2",
    "train.steps=5",
    "train.batch_size=1",
    "train.lr=1e-3",
    "train.log_every=2",
    "rollout.trajectory=holdout_00",
]


def tiny_config(base_dir, extra=()):
    overrides = TINY_OVERRIDES + [
        f"dataset_root={base_dir}/dataset",
        f"out_dir={base_dir}/out",
        *extra,
    ]
    return load_config(None, overrides)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Tiny dataset + 5-step checkpoint shared by pipeline-level tests."""
    base = tmp_path_factory.mktemp("tiny_run")
    cfg = tiny_config(base)
    cmd_gen_data(cfg)
    ckpt = cmd_train(cfg)
    return cfg, ckpt
