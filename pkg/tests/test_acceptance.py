"""Release acceptance suite.

Each test exercises one shipping criterion end to end at its stated tolerance
and time budget, and prints a single [ACCEPTANCE] verdict line. The whole
suite runs on a desktop CPU from a fresh checkout.
"""

import json
import math
import time

import numpy as np
import pytest

from windbess.config import SystemConfig
from windbess.core import (
    AgcTrace,
    BatteryState,
    BessBid,
    BessMode,
    WindBid,
    bess_revenue_interval,
    degradation_cost_interval,
    energy_delta,
    settle_curtailment,
    settle_interval,
    step_battery,
    validate_bess_bid,
    wind_dispatch_outcome,
    wind_revenue_interval,
)
from windbess.env import (
    BESS_ACTION_DIM,
    WIND_ACTION_DIM,
    JointBiddingEnv,
    Scenario,
    bess_reward,
    decode_bess_action,
    decode_wind_action,
    wind_reward,
)
from windbess.harness import ExperimentSpec, build_ticks, gradient_report, run_experiment
from windbess.market_data import CurtailmentWindow, EmaTracker, agc_for_interval
from windbess.po import DpGrid, Forecast, brute_force_oracle, dp_optimize
from windbess.td3 import Batch, Td3Agent, Td3Config, capacity_penalty


def _verdict(n: int, ok: bool, elapsed: float, budget: float) -> None:
    """One verdict line per criterion; the asserts carry the diagnostics."""
    status = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"\n[ACCEPTANCE] criterion {n}: {status}")
    assert ok, f"criterion {n} failed its checks"
    assert elapsed < budget, f"criterion {n} took {elapsed:.1f}s, budget {budget}s"


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-12)


def _zeroed(net, final_bias: float = 0.0):
    flat = net.get_flat()
    net.set_flat(np.zeros_like(flat))
    net.biases[-1][0] = final_bias
    return net


# 1. Hand-evaluated settlement, dynamics, reward, and learner identities.
def test_criterion_1_hand_examples():
    t0 = time.perf_counter()
    cfg = SystemConfig()
    checks: list[tuple[float, float]] = []

    checks += zip(wind_dispatch_outcome(50.0, 60.0), (50.0, 10.0))
    checks += zip(settle_curtailment(8.0, 10.0, 50.0), (8.0, 58.0))

    zero_agc = AgcTrace([0.0] * cfg.agc_len)
    full_raise = AgcTrace([1.0] * cfg.agc_len)
    de = energy_delta(BessBid(BessMode.CHARGE, 10.0, 0.0, 0.0), zero_agc, 0.0, cfg)
    checks.append((de.spot, 10.0 / 12.0))
    de = energy_delta(BessBid(BessMode.DISCHARGE, 0.0, 10.0, 0.0), full_raise, 0.0, cfg)
    checks.append((de.reg, -10.0 / 12.0))

    checks.append((wind_revenue_interval(WindBid(50.0, 1.0), 50.0, 100.0, 0.0, cfg), 5000.0 / 12.0))
    checks.append((wind_revenue_interval(WindBid(40.0, 0.5), 30.0, 80.0, 40.0, cfg), 75.0))

    checks.append((bess_revenue_interval(BessBid(BessMode.DISCHARGE, 10.0, 0.0, 0.0), 100.0, 0.0, 0.0, cfg), 100.0 * 0.95 * 10.0 / 12.0))
    checks.append((bess_revenue_interval(BessBid(BessMode.CHARGE, 10.0, 0.0, 0.0), 100.0, 0.0, 0.0, cfg), -100.0 * 10.0 / 0.95 / 12.0))
    checks.append((bess_revenue_interval(BessBid(BessMode.CHARGE, 0.0, 10.0, 0.0), 0.0, 0.0, 20.0, cfg), 20.0 * 10.0 / 0.95 / 12.0))
    checks.append((degradation_cost_interval(BessBid(BessMode.DISCHARGE, 6.0, 4.0, 0.0), cfg), 10.0 / 12.0))

    state, accepted = step_battery(BatteryState(5.0), 10.0 / 12.0, cfg)
    checks.append((state.energy_mwh, 5.0 + 10.0 / 12.0))
    ok = accepted

    ema = EmaTracker(0.9)
    ema.update(50.0)
    checks.append((ema.update(100.0), 55.0))
    window = CurtailmentWindow(10)
    freq = 0.0
    for flag in [True, True, True] + [False] * 7:
        freq = window.push(flag)
    checks.append((freq, 0.3))

    checks.append((wind_reward(WindBid(33.5, 1.0), 0.5, 100.0, 0.0, cfg), 50.0))
    checks.append((wind_reward(WindBid(0.6 * 67.0, 1.0), 0.4, 100.0, 0.0, cfg), 10.0))

    terms = bess_reward(BessBid(BessMode.DISCHARGE, 5.0, 0.0, 0.0), 1.0, 100.0, 80.0, 0.0, 0.0, 0.0, 0.0, cfg)
    checks.append((terms.spot, 9.5))
    terms = bess_reward(BessBid(BessMode.CHARGE, 0.0, 5.0, 0.0), 1.0, 0.0, 0.0, 0.0, 20.0, 0.0, 0.0, cfg)
    checks.append((terms.reg, 0.5 * 20.0 / 0.95))
    terms = bess_reward(BessBid(BessMode.CHARGE, 0.0, 0.0, 5.0), 1.0, 100.0, 100.0, 0.0, 0.0, 0.3, 10.0, cfg)
    checks.append((terms.wc, 1.5 * 100.0 * 0.5 * 0.3 / 0.95))

    raw = np.array([[0.0, 0.0, 0.0, -0.6]])
    value, grad = capacity_penalty(raw, np.array([1.0, 1.0, 1.0]))
    checks.append((value, 1.2))
    checks += zip(grad[0], (0.0, 0.5, 0.5, 0.5))

    # with a zeroed first critic, the actor loss reduces to beta_l * penalty
    tcfg = Td3Config(hidden=(8, 8), batch_size=4, buffer_capacity=8, beta_l=10.0)
    agent = Td3Agent(3, 4, tcfg, seed=0, penalty_mask=np.ones(3))
    _zeroed(agent.q1)
    states = np.random.default_rng(0).normal(size=(4, 3))
    batch = Batch(states, np.zeros((4, 4)), np.zeros((4, 1)), states)
    actor_loss, _ = agent.actor_grads(batch)
    pen, _ = capacity_penalty(agent.actor.forward(states), np.ones(3))
    checks.append((actor_loss, 10.0 * pen))

    tcfg = Td3Config(hidden=(8, 8), batch_size=4, buffer_capacity=8, gamma=0.99, target_smoothing=False)
    agent = Td3Agent(3, 2, tcfg, seed=1)
    _zeroed(agent.target_q1, 2.0)
    _zeroed(agent.target_q2, 3.0)
    batch = Batch(np.zeros((1, 3)), np.zeros((1, 2)), np.array([[1.0]]), np.zeros((1, 3)))
    checks.append((float(agent.critic_target(batch)[0, 0]), 2.98))

    _zeroed(agent.q1, 0.02)
    loss, _ = agent.critic_grads(agent.q1, batch, np.zeros((1, 1)))
    checks.append((loss, 2e-4))

    tcfg = Td3Config(hidden=(4,), batch_size=4, buffer_capacity=8, tau=0.01)
    agent = Td3Agent(2, 2, tcfg, seed=2)
    agent.actor.set_flat(np.ones_like(agent.actor.get_flat()))
    agent.target_actor.set_flat(np.zeros_like(agent.target_actor.get_flat()))
    agent.target_soft_update()
    checks.append((float(agent.target_actor.get_flat()[0]), 0.01))

    ok = ok and all(_close(a, b) for a, b in checks)
    _verdict(1, ok, time.perf_counter() - t0, 1.0)


# 2. SoC bounds and energy conservation over 1e5 random environment steps.
def test_criterion_2_energy_conservation():
    t0 = time.perf_counter()
    cfg = SystemConfig()
    n_steps = 100_000
    ticks = build_ticks({"kind": "synthetic", "profile": "mean-reverting", "n": 2880, "seed": 21}, cfg)
    env = JointBiddingEnv(ticks, cfg, Scenario.JOINT, True, episode_len=n_steps + 1, cycle=True)
    rng = np.random.default_rng(22)
    wind_actions = rng.uniform(-1.0, 1.0, (n_steps, WIND_ACTION_DIM))
    bess_actions = rng.uniform(-1.0, 1.0, (n_steps, BESS_ACTION_DIM))
    env.reset()
    deltas = np.empty(n_steps)
    soc_min, soc_max = math.inf, -math.inf
    soc_final = 0.0
    for i in range(n_steps):
        out = env.step(wind_actions[i], bess_actions[i])
        soc_final = out.settlement.soc_after
        if soc_final < soc_min:
            soc_min = soc_final
        if soc_final > soc_max:
            soc_max = soc_final
        deltas[i] = out.settlement.de_total
    drift = soc_final - (cfg.e_mid + math.fsum(deltas))
    ok = (
        soc_min >= cfg.e_min
        and soc_max <= cfg.e_max
        and abs(drift) <= 1e-9 * max(1.0, abs(soc_final))
    )
    _verdict(2, ok, time.perf_counter() - t0, 10.0)


# 3. Every decoded random action is a valid bid; discharge never draws wind.
def test_criterion_3_constraint_properties():
    t0 = time.perf_counter()
    cfg = SystemConfig()
    n_steps = 100_000
    rng = np.random.default_rng(31)
    combos = [(sc, c) for sc in Scenario for c in (True, False)]
    agcs = [agc_for_interval(3, i, cfg.agc_len) for i in range(100)]
    battery = BatteryState(cfg.e_mid)
    wind_raws = rng.uniform(-1.0, 1.0, (n_steps, WIND_ACTION_DIM))
    bess_raws = rng.uniform(-1.0, 1.0, (n_steps, BESS_ACTION_DIM))
    prices = rng.uniform(0.0, 150.0, (n_steps, 3))
    winds = rng.uniform(0.0, cfg.p_wind_max, n_steps)
    ok = True
    for i in range(n_steps):
        scenario, coupled = combos[i % 6]
        wind_bid = decode_wind_action(wind_raws[i], scenario, cfg)
        bess_bid = decode_bess_action(bess_raws[i], scenario, coupled, cfg)
        ok = ok and 0.0 <= wind_bid.availability_mw <= cfg.p_wind_max
        ok = ok and 0.0 <= wind_bid.spot_fraction <= 1.0
        ok = ok and not validate_bess_bid(bess_bid, cfg)
        if scenario is Scenario.SPOT_ONLY:
            ok = ok and bess_bid.p_reg_mw == 0.0 and wind_bid.spot_fraction == 1.0
        elif scenario is Scenario.REG_ONLY:
            ok = ok and bess_bid.p_spot_mw == 0.0 and wind_bid.spot_fraction == 0.0
        if not coupled:
            ok = ok and bess_bid.p_wc_mw == 0.0
        res, battery = settle_interval(
            wind_bid, bess_bid, winds[i], prices[i, 0], prices[i, 1], prices[i, 2],
            agcs[i % 100], battery, cfg,
        )
        if res.mode is BessMode.DISCHARGE:
            ok = ok and res.p_wc_drawn == 0.0
        if not ok:
            break
    _verdict(3, ok, time.perf_counter() - t0, 10.0)


# 4. Analytic gradients match central finite differences on small nets.
def test_criterion_4_gradient_correctness():
    t0 = time.perf_counter()
    report = gradient_report(n_instances=100, seed=0)
    ok = (
        report["instances"] == 100
        and report["max_actor_rel_err"] <= 1e-4
        and report["max_critic_rel_err"] <= 1e-4
        and report["max_params"] <= 1000
    )
    _verdict(4, ok, time.perf_counter() - t0, 30.0)


# 5. Exhaustive search agrees exactly with the planner on small instances.
def test_criterion_5_planner_oracle_equivalence():
    t0 = time.perf_counter()
    cfg = SystemConfig()
    rng = np.random.default_rng(51)
    combos = [(sc, c) for sc in Scenario for c in (True, False)]
    ok = True
    for i in range(200):
        scenario, coupled = combos[i % 6]
        horizon = int(rng.integers(1, 4))
        grid = DpGrid(int(rng.integers(2, 6)), int(rng.integers(2, 4)))
        fc = Forecast(
            tuple(rng.uniform(-20.0, 150.0, horizon)),
            tuple(rng.uniform(0.0, 40.0, horizon)),
            tuple(rng.uniform(0.0, 40.0, horizon)),
            tuple(rng.uniform(0.0, cfg.p_wind_max, horizon)),
        )
        e0 = float(rng.uniform(cfg.e_min, cfg.e_max))
        plan_dp, value_dp = dp_optimize(fc, e0, scenario, coupled, grid, cfg)
        plan_bf, value_bf = brute_force_oracle(fc, e0, scenario, coupled, grid, cfg)
        ok = ok and plan_dp == plan_bf and value_dp == value_bf
        if not ok:
            break
    _verdict(5, ok, time.perf_counter() - t0, 60.0)


# 6. Planner dominance: wider market access never predicts less revenue.
def test_criterion_6_planner_dominance():
    t0 = time.perf_counter()
    cfg = SystemConfig()
    rng = np.random.default_rng(61)
    grid = DpGrid()
    ok = True
    for _ in range(50):
        horizon = 12
        fc = Forecast(
            tuple(rng.uniform(-20.0, 150.0, horizon)),
            tuple(rng.uniform(0.0, 40.0, horizon)),
            tuple(rng.uniform(0.0, 40.0, horizon)),
            tuple(rng.uniform(0.0, cfg.p_wind_max, horizon)),
        )
        e0 = float(rng.uniform(cfg.e_min, cfg.e_max))
        _, joint = dp_optimize(fc, e0, Scenario.JOINT, True, grid, cfg)
        _, spot = dp_optimize(fc, e0, Scenario.SPOT_ONLY, True, grid, cfg)
        _, reg = dp_optimize(fc, e0, Scenario.REG_ONLY, True, grid, cfg)
        _, uncoupled = dp_optimize(fc, e0, Scenario.JOINT, False, grid, cfg)
        ok = ok and joint >= max(spot, reg) and joint >= uncoupled
        if not ok:
            break
    _verdict(6, ok, time.perf_counter() - t0, 120.0)


# 7. The learner recovers most of the oracle's arbitrage value on a toy market.
def test_criterion_7_arbitrage_learning(tmp_path):
    t0 = time.perf_counter()
    base = dict(
        scenario="spot",
        coupled=False,
        train_ratio=0.8,
        eval_len=288,
        episode_len=288,
        outdir=str(tmp_path),
        data={
            "kind": "synthetic", "profile": "square-wave", "n": 1440, "seed": 11,
            "price_params": {"low": 20.0, "high": 100.0, "period": 2},
            "wind_params": {"mean": 0.0, "sigma": 0.0},
        },
    )
    td3_report, _ = run_experiment(ExperimentSpec(
        name="arb-td3", agent="td3", seeds=(0, 1, 2, 3, 4), train_steps=10_000,
        td3={"hidden": [64, 64], "batch_size": 256, "buffer_capacity": 20_000},
        **base,
    ))
    dp_report, _ = run_experiment(ExperimentSpec(
        name="arb-dp", agent="po", seeds=(0,), po={"method": "perfect"}, **base,
    ))
    learned = td3_report["aggregate"]["median_total_revenue"]
    oracle = dp_report["aggregate"]["median_total_revenue"]
    ok = oracle > 0.0 and learned >= 0.8 * oracle
    _verdict(7, ok, time.perf_counter() - t0, 600.0)


# 8. Coupling pays: the coupled learner absorbs curtailment without losing
# revenue versus the uncoupled learner on the same seeds.
def test_criterion_8_curtailment_absorption(tmp_path):
    t0 = time.perf_counter()
    base = dict(
        scenario="joint",
        train_steps=20_000,
        episode_len=48,
        eval_len=288,
        train_ratio=0.8,
        seeds=(0, 1, 2, 3, 4),
        outdir=str(tmp_path),
        data={
            "kind": "synthetic", "profile": "square-wave", "n": 1440, "seed": 5,
            "price_params": {"low": 100.0, "high": 100.0, "period": 2,
                             "rr_level": 0.0, "rl_level": 0.0},
            "wind_params": {"mean": 35.0, "sigma": 12.0, "phi": 0.7},
        },
        td3={"hidden": [64, 64], "batch_size": 256, "buffer_capacity": 30_000,
             "explore_noise": 0.2, "warmup_steps": 2000},
        system={"e_min": 2.0, "e_max": 8.0},
    )
    coupled_rep, _ = run_experiment(ExperimentSpec(name="wc-coupled", coupled=True, **base))
    uncoupled_rep, _ = run_experiment(ExperimentSpec(name="wc-uncoupled", coupled=False, **base))
    curtailed_fraction = coupled_rep["aggregate"]["median_curtailed_interval_fraction"]
    absorbed = coupled_rep["aggregate"]["median_curtailment_absorbed_mwh"]
    coupled_total = coupled_rep["aggregate"]["median_total_revenue"]
    uncoupled_total = uncoupled_rep["aggregate"]["median_total_revenue"]
    ok = (
        curtailed_fraction >= 0.3
        and absorbed > 0.0
        and coupled_total >= 0.98 * uncoupled_total
    )
    _verdict(8, ok, time.perf_counter() - t0, 1200.0)


# 9. Re-running a spec with the same seeds reproduces the report byte for byte.
def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    base = dict(
        name="repeat", agent="td3", scenario="joint", coupled=True, seeds=(0, 1),
        train_steps=300, episode_len=48, train_ratio=0.5,
        td3={"hidden": [8, 8], "batch_size": 32, "buffer_capacity": 500, "warmup_steps": 50},
        data={
            "kind": "synthetic", "profile": "square-wave", "n": 192, "seed": 2,
            "price_params": {"low": 20.0, "high": 100.0, "period": 2},
            "wind_params": {"mean": 30.0, "sigma": 8.0, "phi": 0.6},
        },
    )
    blobs = []
    for outdir in ("a", "b"):
        _, path = run_experiment(ExperimentSpec(outdir=str(tmp_path / outdir), **base))
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
        report.pop("timing")
        report["spec"].pop("outdir")
        blobs.append(json.dumps(report, sort_keys=True).encode())
    ok = blobs[0] == blobs[1]
    _verdict(9, ok, time.perf_counter() - t0, 300.0)
