"""Predict-and-optimize benchmark bidder.

Plans over a receding horizon by exact dynamic programming on a discretized
battery state-of-charge grid. The planner treats its forecast as truth:
regulation energy movement enters at its expectation under uniform AGC
signals, and curtailment available for charging is forecast wind minus the
planned availability. The wind-side decision is analytic: withholding exactly
the curtailment power the battery will draw costs nothing (absorbed energy is
settled as dispatched wind), so availability is forecast wind minus the
curtailment nomination and the spot fraction maximizes the blended price.

A memoless exhaustive search over the same discretized space serves as the
equivalence oracle for the DP.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SystemConfig
from .core import (
    IDLE_BID,
    POWER_SUM_TOL,
    BatteryState,
    BessBid,
    BessMode,
    SettlementResult,
    WindBid,
    bess_revenue_interval,
    degradation_cost_interval,
    settle_curtailment,
    settle_interval,
    wind_dispatch_outcome,
    wind_revenue_interval,
)
from .env import Scenario
from .market_data import EmaTracker, MarketTick

# Expected per-signal energy contribution in the enabled direction for
# s ~ U(-1, 1): E[s * 1(s >= 0)] = E[|s| * 1(s < 0)] = 1/4.
REG_ENABLEMENT = 0.25

BRUTE_FORCE_PLAN_LIMIT = 1_000_000

FORECAST_METHODS = ("persistence", "ema", "perfect")


@dataclass(frozen=True)
class Forecast:
    """Per-step price and wind expectations over a planning horizon."""

    rho_s: tuple[float, ...]
    rho_rr: tuple[float, ...]
    rho_rl: tuple[float, ...]
    wind_mw: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.rho_s)
        if not (len(self.rho_rr) == len(self.rho_rl) == len(self.wind_mw) == n):
            raise ValueError("forecast series must have equal length")

    def __len__(self) -> int:
        return len(self.rho_s)

    def step(self, t: int) -> tuple[float, float, float, float]:
        return self.rho_s[t], self.rho_rr[t], self.rho_rl[t], self.wind_mw[t]


@dataclass(frozen=True)
class DpGrid:
    """Discretization for the planner: SoC levels and per-channel power levels."""

    n_soc: int = 37
    n_power: int = 5

    def __post_init__(self) -> None:
        if self.n_soc < 2 or self.n_power < 2:
            raise ValueError("grid needs at least 2 SoC and 2 power levels")

    def soc_levels(self, cfg: SystemConfig) -> np.ndarray:
        return np.linspace(cfg.e_min, cfg.e_max, self.n_soc)

    def power_levels(self, cfg: SystemConfig) -> np.ndarray:
        return np.linspace(0.0, cfg.p_bess_max, self.n_power)

    def soc_spacing(self, cfg: SystemConfig) -> float:
        return (cfg.e_max - cfg.e_min) / (self.n_soc - 1)


def forecast(
    method: str, history: Sequence[MarketTick], horizon: int, tau: float = 0.9
) -> Forecast:
    """Build a flat forecast from observed ticks.

    persistence repeats the last observation; ema repeats the exponential
    moving average of each series. horizon 0 yields an empty forecast.
    """
    if method not in ("persistence", "ema"):
        raise ValueError(f"unknown forecast method: {method!r}")
    if not history:
        raise ValueError("forecast requires a non-empty history")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if method == "persistence":
        last = history[-1]
        values = (last.rho_s, last.rho_rr, last.rho_rl, last.p_wind_act)
    else:
        trackers = [EmaTracker(tau) for _ in range(4)]
        for tick in history:
            trackers[0].update(tick.rho_s)
            trackers[1].update(tick.rho_rr)
            trackers[2].update(tick.rho_rl)
            trackers[3].update(tick.p_wind_act)
        values = tuple(tr.value for tr in trackers)  # type: ignore[assignment]
    return Forecast(*((float(v),) * horizon for v in values))


def perfect_forecast(ticks: Sequence[MarketTick]) -> Forecast:
    """Forecast equal to the realized data (benchmark upper bound)."""
    return Forecast(
        tuple(t.rho_s for t in ticks),
        tuple(t.rho_rr for t in ticks),
        tuple(t.rho_rl for t in ticks),
        tuple(t.p_wind_act for t in ticks),
    )


def enumerate_candidates(
    grid: DpGrid, scenario: Scenario, coupled: bool, cfg: SystemConfig
) -> list[BessBid]:
    """All valid battery bids over the power grid, in tie-break preference
    order: Idle first, then ascending total power, Charge before Discharge."""
    powers = [float(p) for p in grid.power_levels(cfg)]
    pool = []
    for mode in (BessMode.CHARGE, BessMode.DISCHARGE):
        spot_levels = [0.0] if scenario is Scenario.REG_ONLY else powers
        reg_levels = [0.0] if scenario is Scenario.SPOT_ONLY else powers
        wc_levels = powers if (mode is BessMode.CHARGE and coupled) else [0.0]
        for p_spot in spot_levels:
            for p_reg in reg_levels:
                for p_wc in wc_levels:
                    if p_spot == 0.0 and p_reg == 0.0 and p_wc == 0.0:
                        continue
                    if p_spot + p_reg + p_wc > cfg.p_bess_max + POWER_SUM_TOL:
                        continue
                    pool.append(BessBid(mode, p_spot, p_reg, p_wc))
    mode_rank = {BessMode.CHARGE: 0, BessMode.DISCHARGE: 1}
    pool.sort(
        key=lambda b: (
            b.p_spot_mw + b.p_reg_mw + b.p_wc_mw,
            mode_rank[b.mode],
            b.p_spot_mw,
            b.p_reg_mw,
            b.p_wc_mw,
        )
    )
    return [IDLE_BID] + pool


def plan_wind_bid(bid: BessBid, wind_hat: float, rho_s: float, rho_rr: float, scenario: Scenario) -> WindBid:
    """Analytic wind decision given the battery's curtailment nomination."""
    if bid.p_wc_mw > 0.0:
        beta = wind_hat - bid.p_wc_mw
        if beta < 0.0:
            beta = 0.0
    else:
        beta = wind_hat
    if scenario is Scenario.SPOT_ONLY:
        v_w = 1.0
    elif scenario is Scenario.REG_ONLY:
        v_w = 0.0
    else:
        v_w = 1.0 if rho_s >= rho_rr else 0.0
    return WindBid(beta, v_w)


def _stage(
    bid: BessBid,
    rho_s: float,
    rho_rr: float,
    rho_rl: float,
    wind_hat: float,
    scenario: Scenario,
    cfg: SystemConfig,
) -> tuple[float, float, WindBid]:
    """Planned one-step value and energy delta for a candidate bid.

    Mirrors the realized settlement arithmetic exactly (same core ops, same
    operation order) with the forecast standing in for actuals and expected
    AGC enablement standing in for the realized trace.
    """
    wind_bid = plan_wind_bid(bid, wind_hat, rho_s, rho_rr, scenario)
    _, available = wind_dispatch_outcome(wind_bid.availability_mw, wind_hat)
    drawn, p_w_updated = settle_curtailment(bid.p_wc_mw, available, wind_bid.availability_mw)
    p_dis = wind_hat if wind_hat < p_w_updated else p_w_updated
    wind_rev = wind_revenue_interval(WindBid(p_w_updated, wind_bid.spot_fraction), p_dis, rho_s, rho_rr, cfg)
    bess_rev = bess_revenue_interval(bid, rho_s, rho_rr, rho_rl, cfg)
    deg = degradation_cost_interval(bid, cfg)
    value = (wind_rev + bess_rev) - deg
    if bid.mode is BessMode.CHARGE:
        de_spot = cfg.dt_hours * bid.p_spot_mw
        de_reg = (REG_ENABLEMENT * cfg.dt_hours) * bid.p_reg_mw
    elif bid.mode is BessMode.DISCHARGE:
        de_spot = -(cfg.dt_hours * bid.p_spot_mw)
        de_reg = -((REG_ENABLEMENT * cfg.dt_hours) * bid.p_reg_mw)
    else:
        de_spot = 0.0
        de_reg = 0.0
    de_wc = drawn * cfg.dt_hours
    de_total = de_spot + de_reg + de_wc
    return value, de_total, wind_bid


def _stage_table(
    fc: Forecast,
    candidates: Sequence[BessBid],
    scenario: Scenario,
    cfg: SystemConfig,
) -> list[list[tuple[float, float, WindBid]]]:
    return [
        [_stage(bid, *fc.step(t), scenario, cfg) for bid in candidates]
        for t in range(len(fc))
    ]


def _snap_index(e: float, e_min: float, spacing: float, n: int) -> int:
    """Nearest grid level, ties toward the floor.

    Rounding a midpoint up would credit the planner with stored energy it
    does not have, which receding-horizon execution then exploits; rounding
    ties down keeps the discretized dynamics pessimistic about stored energy.
    """
    idx = int(math.ceil((e - e_min) / spacing - 0.5))
    if idx < 0:
        return 0
    if idx > n - 1:
        return n - 1
    return idx


def dp_optimize(
    fc: Forecast,
    e0: float,
    scenario: Scenario,
    coupled: bool,
    grid: DpGrid,
    cfg: SystemConfig,
) -> tuple[list[tuple[WindBid, BessBid]], float]:
    """Exact backward induction over the SoC grid.

    Returns the optimal (wind bid, battery bid) sequence from the snapped
    initial SoC together with its predicted plant revenue. Ties resolve to the
    earliest candidate in preference order (Idle, then lower power).
    """
    horizon = len(fc)
    candidates = enumerate_candidates(grid, scenario, coupled, cfg)
    if horizon == 0:
        return [], 0.0
    soc = grid.soc_levels(cfg)
    spacing = grid.soc_spacing(cfg)
    n = soc.size
    stages = _stage_table(fc, candidates, scenario, cfg)
    values = np.zeros((horizon + 1, n))
    choice = np.full((horizon, n), -1, dtype=np.int64)
    for t in range(horizon - 1, -1, -1):
        best = np.full(n, -np.inf)
        best_i = np.full(n, -1, dtype=np.int64)
        v_next = values[t + 1]
        for i, (value, de, _) in enumerate(stages[t]):
            e_next = soc + de
            feasible = (e_next >= cfg.e_min) & (e_next <= cfg.e_max)
            nxt = np.ceil((e_next - cfg.e_min) / spacing - 0.5).astype(np.int64)
            np.clip(nxt, 0, n - 1, out=nxt)
            total = value + v_next[nxt]
            better = feasible & (total > best)
            best[better] = total[better]
            best_i[better] = i
        values[t] = best
        choice[t] = best_i
    k = _snap_index(min(max(e0, cfg.e_min), cfg.e_max), cfg.e_min, spacing, n)
    predicted = float(values[0][k])
    plan = []
    for t in range(horizon):
        i = int(choice[t][k])
        value, de, wind_bid = stages[t][i]
        plan.append((wind_bid, candidates[i]))
        k = _snap_index(float(soc[k]) + de, cfg.e_min, spacing, n)
    return plan, predicted


def brute_force_oracle(
    fc: Forecast,
    e0: float,
    scenario: Scenario,
    coupled: bool,
    grid: DpGrid,
    cfg: SystemConfig,
) -> tuple[list[tuple[WindBid, BessBid]], float]:
    """Memoless exhaustive search over the same discretized plan space.

    Must agree with dp_optimize exactly. Guarded to 1e6 enumerable plans.
    """
    horizon = len(fc)
    candidates = enumerate_candidates(grid, scenario, coupled, cfg)
    if len(candidates) ** horizon > BRUTE_FORCE_PLAN_LIMIT:
        raise ValueError("plan space exceeds the brute-force limit")
    if horizon == 0:
        return [], 0.0
    soc = grid.soc_levels(cfg)
    spacing = grid.soc_spacing(cfg)
    n = soc.size
    stages = _stage_table(fc, candidates, scenario, cfg)

    def best_from(t: int, k: int):
        if t == horizon:
            return 0.0, []
        e = float(soc[k])
        best_value = None
        best_plan = None
        for i, (value, de, wind_bid) in enumerate(stages[t]):
            e_next = e + de
            if e_next < cfg.e_min or e_next > cfg.e_max:
                continue
            sub_value, sub_plan = best_from(t + 1, _snap_index(e_next, cfg.e_min, spacing, n))
            total = value + sub_value
            if best_value is None or total > best_value:
                best_value = total
                best_plan = [(wind_bid, candidates[i])] + sub_plan
        return best_value, best_plan

    k0 = _snap_index(min(max(e0, cfg.e_min), cfg.e_max), cfg.e_min, spacing, n)
    value, plan = best_from(0, k0)
    return plan, float(value)


def run_po_bidder(
    ticks: Sequence[MarketTick],
    cfg: SystemConfig,
    scenario: Scenario,
    coupled: bool,
    grid: DpGrid | None = None,
    horizon: int = 12,
    method: str = "persistence",
    prior: MarketTick | None = None,
    start_energy: float | None = None,
) -> list[SettlementResult]:
    """Receding-horizon execution: re-plan each interval from the realized SoC
    and settle only the first planned bid against the realized tick.

    method "perfect" plans on the actual upcoming ticks; the history-based
    methods see data up to the previous interval only (the first interval uses
    `prior`, or falls back to the first tick as a documented cold-start).
    """
    if method not in FORECAST_METHODS:
        raise ValueError(f"unknown forecast method: {method!r}")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    grid = grid or DpGrid()
    battery = BatteryState(cfg.e_mid if start_energy is None else start_energy)
    history: list[MarketTick] = [] if prior is None else [prior]
    settlements = []
    for t, tick in enumerate(ticks):
        steps = min(horizon, len(ticks) - t)
        if method == "perfect":
            fc = perfect_forecast(ticks[t : t + steps])
        else:
            source = history if history else [ticks[0]]
            fc = forecast(method, source, steps, tau=cfg.tau_s)
        plan, _ = dp_optimize(fc, battery.energy_mwh, scenario, coupled, grid, cfg)
        wind_bid, bess_bid = plan[0]
        settlement, battery = settle_interval(
            wind_bid,
            bess_bid,
            tick.p_wind_act,
            tick.rho_s,
            tick.rho_rr,
            tick.rho_rl,
            tick.agc,
            battery,
            cfg,
        )
        settlements.append(settlement)
        history.append(tick)
    return settlements


def write_plan_csv(plan: Sequence[tuple[WindBid, BessBid]], path: str) -> None:
    """Dump a planned bid sequence for inspection."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval", "mode", "p_spot", "p_reg", "p_wc", "wind_avail", "v_w"])
        for t, (wind_bid, bess_bid) in enumerate(plan):
            writer.writerow(
                [
                    t,
                    bess_bid.mode.value,
                    repr(bess_bid.p_spot_mw),
                    repr(bess_bid.p_reg_mw),
                    repr(bess_bid.p_wc_mw),
                    repr(wind_bid.availability_mw),
                    repr(wind_bid.spot_fraction),
                ]
            )
