"""Action decoding, observation building, shaped rewards, episode mechanics."""

import numpy as np
import pytest

from windbess.config import SystemConfig
from windbess.core import BessMode, WindBid, BessBid
from windbess.env import (
    BESS_ACTION_DIM,
    JointBiddingEnv,
    MODE_DEAD_ZONE,
    Scenario,
    bess_power_mask,
    bess_reward,
    build_bess_state,
    build_wind_state,
    decode_bess_action,
    decode_wind_action,
    wind_reward,
)

REL = 1e-6


# -------------------------------------------------------------------- decoding


def test_decode_wind_midpoint(cfg):
    bid = decode_wind_action([0.0, 0.0], Scenario.JOINT, cfg)
    assert bid.availability_mw == pytest.approx(33.5, rel=REL)
    assert bid.spot_fraction == pytest.approx(0.5, rel=REL)


def test_decode_wind_scenario_forces_spot_fraction(cfg):
    assert decode_wind_action([0.0, -1.0], Scenario.SPOT_ONLY, cfg).spot_fraction == 1.0
    assert decode_wind_action([0.0, 1.0], Scenario.REG_ONLY, cfg).spot_fraction == 0.0


def test_decode_wind_rejects_out_of_range(cfg):
    with pytest.raises(ValueError):
        decode_wind_action([1.5, 0.0], Scenario.JOINT, cfg)
    with pytest.raises(ValueError):
        decode_wind_action([0.0, 0.0, 0.0], Scenario.JOINT, cfg)


def test_decode_bess_rescales_over_rating(cfg):
    bid = decode_bess_action([-0.5, 0.0, 0.0, 0.0], Scenario.JOINT, True, cfg)
    assert bid.mode is BessMode.CHARGE
    # Three 5 MW heads rescale onto the 10 MW rating.
    for p in (bid.p_spot_mw, bid.p_reg_mw, bid.p_wc_mw):
        assert p == pytest.approx(10.0 / 3.0, rel=1e-9)
    assert bid.p_spot_mw + bid.p_reg_mw + bid.p_wc_mw <= cfg.p_bess_max


def test_decode_bess_discharge_zeroes_wc(cfg):
    bid = decode_bess_action([0.5, 0.0, -1.0, 1.0], Scenario.JOINT, True, cfg)
    assert bid.mode is BessMode.DISCHARGE
    assert bid.p_spot_mw == pytest.approx(5.0, rel=REL)
    assert bid.p_reg_mw == 0.0
    assert bid.p_wc_mw == 0.0


def test_decode_bess_dead_zone_boundaries(cfg):
    idle = decode_bess_action([0.05, 1.0, 1.0, 1.0], Scenario.JOINT, True, cfg)
    assert idle.mode is BessMode.IDLE
    assert idle.p_spot_mw == idle.p_reg_mw == idle.p_wc_mw == 0.0
    assert (
        decode_bess_action([MODE_DEAD_ZONE, 0.0, 0.0, 0.0], Scenario.JOINT, True, cfg).mode
        is BessMode.DISCHARGE
    )
    assert (
        decode_bess_action([-MODE_DEAD_ZONE, 0.0, 0.0, 0.0], Scenario.JOINT, True, cfg).mode
        is BessMode.CHARGE
    )


def test_decode_bess_clips_raw_values(cfg):
    bid = decode_bess_action([-2.0, 3.0, -3.0, -3.0], Scenario.JOINT, True, cfg)
    assert bid.mode is BessMode.CHARGE
    assert bid.p_spot_mw == pytest.approx(10.0, rel=REL)
    assert bid.p_reg_mw == 0.0 and bid.p_wc_mw == 0.0


def test_decode_bess_scenario_masks(cfg):
    spot_only = decode_bess_action([-0.5, 0.5, 0.5, -1.0], Scenario.SPOT_ONLY, True, cfg)
    assert spot_only.p_reg_mw == 0.0 and spot_only.p_spot_mw > 0.0
    reg_only = decode_bess_action([-0.5, 0.5, 0.5, -1.0], Scenario.REG_ONLY, True, cfg)
    assert reg_only.p_spot_mw == 0.0 and reg_only.p_reg_mw > 0.0
    uncoupled = decode_bess_action([-0.5, 0.5, 0.5, 0.5], Scenario.JOINT, False, cfg)
    assert uncoupled.p_wc_mw == 0.0


def test_power_mask_per_scenario():
    assert bess_power_mask(Scenario.JOINT, True).tolist() == [1.0, 1.0, 1.0]
    assert bess_power_mask(Scenario.SPOT_ONLY, True).tolist() == [1.0, 0.0, 1.0]
    assert bess_power_mask(Scenario.REG_ONLY, False).tolist() == [0.0, 1.0, 0.0]


# ---------------------------------------------------------------- observations


def test_wind_state_scaling(cfg):
    state = build_wind_state(33.5, 100.0, 25.0, cfg)
    assert state.tolist() == pytest.approx([0.5, 1.0, 0.5], rel=REL)


def test_bess_state_scaling(cfg):
    state = build_bess_state(4.75, 0.3, 33.5, 100.0, 25.0, 10.0, cfg)
    assert state.tolist() == pytest.approx([0.5, 0.3, 0.5, 1.0, 0.5, 0.2], rel=REL)


# --------------------------------------------------------------- shaped reward


def test_wind_reward_peaks_at_exact_forecast(cfg):
    bid = WindBid(33.5, 1.0)
    assert wind_reward(bid, 0.5, 100.0, 0.0, cfg) == pytest.approx(50.0, rel=REL)
    assert wind_reward(bid, 0.3, 100.0, 0.0, cfg) == pytest.approx(0.0, abs=1e-9)
    assert wind_reward(bid, 0.1, 100.0, 0.0, cfg) == pytest.approx(-50.0, rel=REL)


def test_bess_reward_spot_side_of_average(cfg):
    dis = BessBid(BessMode.DISCHARGE, 10.0, 0.0, 0.0)
    terms = bess_reward(dis, 1.0, 60.0, 50.0, 0.0, 0.0, 0.0, 0.0, cfg)
    assert terms.spot == pytest.approx(9.5, rel=REL)
    # Discharging below the average price is penalized symmetrically.
    terms = bess_reward(dis, 1.0, 40.0, 50.0, 0.0, 0.0, 0.0, 0.0, cfg)
    assert terms.spot == pytest.approx(-9.5, rel=REL)
    # At the average, sgn(0) = 0 pays nothing either way.
    terms = bess_reward(dis, 1.0, 50.0, 50.0, 0.0, 0.0, 0.0, 0.0, cfg)
    assert terms.spot == 0.0


def test_bess_reward_reg_capacity(cfg):
    cha = BessBid(BessMode.CHARGE, 0.0, 10.0, 0.0)
    terms = bess_reward(cha, 1.0, 50.0, 50.0, 0.0, 10.0, 0.0, 0.0, cfg)
    assert terms.reg == pytest.approx(10.0 / 0.95, rel=REL)
    dis = BessBid(BessMode.DISCHARGE, 0.0, 10.0, 0.0)
    terms = bess_reward(dis, 1.0, 50.0, 50.0, 20.0, 0.0, 0.0, 0.0, cfg)
    assert terms.reg == pytest.approx(20.0 * 0.95, rel=REL)


def test_bess_reward_wc_draw(cfg):
    cha = BessBid(BessMode.CHARGE, 0.0, 0.0, 3.0)
    terms = bess_reward(cha, 1.0, 100.0, 100.0, 0.0, 0.0, 0.5, 5.0, cfg)
    assert terms.wc == pytest.approx(1.5 * 100.0 * 0.3 * 0.5 / 0.95, rel=REL)
    assert terms.total == terms.spot + terms.reg + terms.wc


# ----------------------------------------------------------- episode mechanics


def _env(ticks, cfg, **kw):
    kw.setdefault("episode_len", len(ticks))
    return JointBiddingEnv(ticks, cfg, Scenario.JOINT, True, **kw)


def test_first_observation_has_no_history(cfg, make_constant_ticks):
    env = _env(make_constant_ticks(4), cfg)
    wind_state, bess_state = env.reset()
    assert wind_state.tolist() == [0.0, 0.0, 0.0]
    assert bess_state[0] == pytest.approx(cfg.e_mid / cfg.e_max, rel=REL)
    assert bess_state[1:].tolist() == [0.0, 0.0, 0.0, 0.0, 0.0]


def test_observations_come_from_previous_tick(cfg, make_constant_ticks):
    ticks = make_constant_ticks(4, spot=80.0, rr=20.0, rl=10.0, wind=33.5)
    env = _env(ticks, cfg)
    env.reset()
    out = env.step([0.0, 1.0], [0.0, 0.0, 0.0, 0.0])
    assert out.wind_state.tolist() == pytest.approx([0.5, 0.8, 0.4], rel=REL)
    assert out.bess_state[3] == pytest.approx(0.8, rel=REL)


def test_no_look_ahead_into_future_ticks(cfg, make_constant_ticks):
    base = make_constant_ticks(6, spot=50.0)
    alt = list(base[:3]) + list(make_constant_ticks(6, spot=500.0)[3:])
    env_a, env_b = _env(base, cfg), _env(alt, cfg)
    env_a.reset(), env_b.reset()
    wind_raw, bess_raw = [0.2, 0.4], [-0.6, 0.1, -0.3, 0.8]
    for _ in range(3):
        out_a = env_a.step(wind_raw, bess_raw)
        out_b = env_b.step(wind_raw, bess_raw)
        assert out_a.r_wind == out_b.r_wind
        assert out_a.settlement == out_b.settlement
    # The streams diverge only from the fourth interval on.
    out_a, out_b = env_a.step(wind_raw, bess_raw), env_b.step(wind_raw, bess_raw)
    assert out_a.settlement != out_b.settlement


def test_reset_recenters_battery_but_keeps_market_memory(cfg, make_constant_ticks):
    env = _env(make_constant_ticks(8, wind=40.0), cfg, episode_len=2)
    env.reset()
    env.step([1.0, 1.0], [-1.0, 1.0, -1.0, -1.0])  # full charge
    out = env.step([-1.0, 1.0], [0.0, 0.0, 0.0, 0.0])  # curtailment happens
    assert out.done
    assert env.battery.energy_mwh != cfg.e_mid
    _, bess_state = env.reset()
    assert env.battery.energy_mwh == cfg.e_mid
    assert env.ema.value is not None
    assert bess_state[1] > 0.0  # curtailment window survived the reset


def test_stream_end_without_cycle_is_terminal(cfg, make_constant_ticks):
    env = _env(make_constant_ticks(2), cfg, episode_len=10)
    env.reset()
    env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    out = env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    assert out.done and env.exhausted
    with pytest.raises(RuntimeError):
        env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0])


def test_cycle_wraps_and_marks_episode_end(cfg, make_constant_ticks):
    env = _env(make_constant_ticks(2), cfg, episode_len=10, cycle=True)
    env.reset()
    env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    out = env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    assert out.done and not env.exhausted
    env.reset()
    out = env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0])
    assert not out.done  # stream restarted cleanly


def test_episode_len_bounds_episode(cfg, make_constant_ticks):
    env = _env(make_constant_ticks(10), cfg, episode_len=3)
    env.reset()
    flags = [env.step([0.0, 0.0], [0.0, 0.0, 0.0, 0.0]).done for _ in range(3)]
    assert flags == [False, False, True]


def test_rejected_bess_bid_is_flagged(make_constant_ticks):
    tight = SystemConfig(e_min=4.9, e_max=5.1)
    ticks = make_constant_ticks(2, config=tight)
    env = JointBiddingEnv(ticks, tight, Scenario.JOINT, True, episode_len=2)
    env.reset()
    out = env.step([0.0, 0.0], [-1.0, 1.0, -1.0, -1.0])  # 10 MW charge, no room
    assert out.settlement.bess_zeroed
    assert out.settlement.mode is BessMode.IDLE
    assert env.battery.energy_mwh == 5.0
