"""Shared test fixtures: small, fast configurations."""
from __future__ import annotations

from dataclasses import is_dataclass, replace

import pytest

from lastmile.config import RunConfig
from lastmile.demand import DemandParams
from lastmile.world import EnvParams


def small_config(tmp_path=None, **overrides) -> RunConfig:
    """A three-wave, two-depot configuration that runs in milliseconds.

    High vehicle speed keeps most orders servable, tiny nets and batches keep
    the gradient steps cheap. Tests override individual fields as needed.
    """
    cfg = RunConfig()
    cfg.env = EnvParams(
        warehouse_count=2,
        episode_length=30.0,
        wave_period=10.0,
        vehicle_capacity=50,
        vehicle_speed=0.5,
        service_time=1.0,
        max_inventory=500,
    )
    cfg.demand = DemandParams(count_low=2, count_high=4, quantity_low=1, quantity_high=5)
    cfg.net.c2s_hidden = (8,)
    cfg.net.vrp_hidden = (8,)
    cfg.net.batch_size = 4
    cfg.net.buffer_capacity = 1000
    cfg.net.steps_per_wave = 1
    cfg.gae.hidden = 4
    cfg.gae.graphs = 6
    cfg.gae.epochs = 3
    cfg.train_episodes = 2
    cfg.train_seeds = (0,)
    cfg.eval_episodes = 2
    cfg.eval_seeds = (100,)
    cfg.figures = False
    if tmp_path is not None:
        cfg.output_dir = str(tmp_path)
    for key, value in overrides.items():
        current = getattr(cfg, key)
        if isinstance(value, dict) and is_dataclass(current):
            value = replace(current, **value)
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def tiny_cfg(tmp_path) -> RunConfig:
    return small_config(tmp_path)
