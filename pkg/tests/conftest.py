"""Shared fixtures: configs, AGC traces, and synthetic tick builders."""

import numpy as np
import pytest

from windbess.config import SystemConfig
from windbess.core import AgcTrace
from windbess.market_data import make_ticks


@pytest.fixture
def cfg() -> SystemConfig:
    return SystemConfig()


@pytest.fixture
def zero_agc(cfg) -> AgcTrace:
    return AgcTrace(np.zeros(cfg.agc_len))


@pytest.fixture
def full_raise_agc(cfg) -> AgcTrace:
    return AgcTrace(np.ones(cfg.agc_len))


@pytest.fixture
def full_lower_agc(cfg) -> AgcTrace:
    return AgcTrace(-np.ones(cfg.agc_len))


@pytest.fixture
def make_constant_ticks(cfg):
    """Factory for flat price/wind tick streams of a given length."""

    def _make(n, spot=50.0, rr=20.0, rl=10.0, wind=30.0, agc_seed=0, config=None):
        c = config if config is not None else cfg
        return make_ticks([spot] * n, [rr] * n, [rl] * n, [wind] * n, c, agc_seed=agc_seed)

    return _make
