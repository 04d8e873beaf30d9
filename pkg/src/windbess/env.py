"""Coupled decision environments for the wind and battery bidding agents.

Both agents act once per dispatch interval on normalized observations built
strictly from the previous interval (no look-ahead). Raw actions live in
[-1, 1] per component and are decoded into market bids here; the environment
settles both bids jointly through the core model and returns shaped rewards
alongside the realized settlement.

Scenario masks restrict which markets each agent may touch; the coupling flag
controls whether the battery may draw curtailed wind at all.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SystemConfig
from .core import (
    BatteryState,
    BessBid,
    BessMode,
    SettlementResult,
    WindBid,
    settle_interval,
)
from .market_data import CurtailmentWindow, EmaTracker, MarketTick

# Mode head dead zone: |raw| below this decodes to Idle.
MODE_DEAD_ZONE = 0.1

WIND_ACTION_DIM = 2
BESS_ACTION_DIM = 4
WIND_STATE_DIM = 3
BESS_STATE_DIM = 6

# Fixed observation normalizers (running normalization would break replay
# reproducibility).
SPOT_DIVISOR = 100.0
FCAS_DIVISOR = 50.0


class Scenario(enum.Enum):
    """Market participation mask for an experiment."""

    SPOT_ONLY = "spot"
    REG_ONLY = "reg"
    JOINT = "joint"


def _sgn(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class BessRewardTerms:
    """Shaped battery reward split into its three incentive channels."""

    spot: float
    reg: float
    wc: float

    @property
    def total(self) -> float:
        return self.spot + self.reg + self.wc


def build_wind_state(
    prev_wind_act: float,
    prev_rho_s: float,
    prev_rho_rr: float,
    cfg: SystemConfig,
    spot_divisor: float = SPOT_DIVISOR,
    fcas_divisor: float = FCAS_DIVISOR,
) -> np.ndarray:
    """Wind agent observation: previous actual generation and prices, scaled."""
    return np.array(
        [
            prev_wind_act / cfg.p_wind_max,
            prev_rho_s / spot_divisor,
            prev_rho_rr / fcas_divisor,
        ],
        dtype=np.float64,
    )


def build_bess_state(
    prev_energy: float,
    prev_f_wc: float,
    prev_wind_act: float,
    prev_rho_s: float,
    prev_rho_rr: float,
    prev_rho_rl: float,
    cfg: SystemConfig,
    spot_divisor: float = SPOT_DIVISOR,
    fcas_divisor: float = FCAS_DIVISOR,
) -> np.ndarray:
    """Battery agent observation: stored energy, curtailment frequency, and
    the previous interval's generation and prices, scaled."""
    return np.array(
        [
            prev_energy / cfg.e_max,
            prev_f_wc,
            prev_wind_act / cfg.p_wind_max,
            prev_rho_s / spot_divisor,
            prev_rho_rr / fcas_divisor,
            prev_rho_rl / fcas_divisor,
        ],
        dtype=np.float64,
    )


def decode_wind_action(raw: Sequence[float], scenario: Scenario, cfg: SystemConfig) -> WindBid:
    """Map raw wind action [-1, 1]^2 to (availability, spot fraction).

    The spot fraction is forced to 1 under SPOT_ONLY and 0 under REG_ONLY.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape != (WIND_ACTION_DIM,):
        raise ValueError(f"wind action must have shape ({WIND_ACTION_DIM},)")
    if np.any(np.abs(arr) > 1.0 + 1e-12):
        raise ValueError("wind action components must lie in [-1, 1]")
    availability = (arr[0] + 1.0) / 2.0 * cfg.p_wind_max
    if scenario is Scenario.SPOT_ONLY:
        v_w = 1.0
    elif scenario is Scenario.REG_ONLY:
        v_w = 0.0
    else:
        v_w = (arr[1] + 1.0) / 2.0
    return WindBid(float(availability), float(v_w))


def decode_bess_action(
    raw: Sequence[float], scenario: Scenario, coupled: bool, cfg: SystemConfig
) -> BessBid:
    """Map raw battery action [-1, 1]^4 to a valid bid.

    Component 0 selects the mode through a dead zone; components 1..3 are the
    spot, regulation, and curtailment powers. Scenario and coupling masks zero
    forbidden channels, Idle and Discharge force their structural zeros, and
    an over-rating sum is rescaled proportionally onto the rating.
    """
    arr = np.clip(np.asarray(raw, dtype=np.float64), -1.0, 1.0)
    if arr.shape != (BESS_ACTION_DIM,):
        raise ValueError(f"bess action must have shape ({BESS_ACTION_DIM},)")
    m = arr[0]
    if m >= MODE_DEAD_ZONE:
        mode = BessMode.DISCHARGE
    elif m <= -MODE_DEAD_ZONE:
        mode = BessMode.CHARGE
    else:
        mode = BessMode.IDLE
    powers = (arr[1:] + 1.0) / 2.0 * cfg.p_bess_max
    p_spot, p_reg, p_wc = (float(p) for p in powers)
    if scenario is Scenario.SPOT_ONLY:
        p_reg = 0.0
    elif scenario is Scenario.REG_ONLY:
        p_spot = 0.0
    if not coupled:
        p_wc = 0.0
    if mode is BessMode.IDLE:
        p_spot = p_reg = p_wc = 0.0
    elif mode is BessMode.DISCHARGE:
        p_wc = 0.0
    total = p_spot + p_reg + p_wc
    if total > cfg.p_bess_max:
        scale = cfg.p_bess_max / total
        p_spot *= scale
        p_reg *= scale
        p_wc *= scale
        excess = (p_spot + p_reg + p_wc) - cfg.p_bess_max
        if excess > 0.0:
            # One-ulp shave so the invariant sum <= rating holds exactly.
            if p_spot >= p_reg and p_spot >= p_wc:
                p_spot -= excess
            elif p_reg >= p_wc:
                p_reg -= excess
            else:
                p_wc -= excess
    return BessBid(mode, p_spot, p_reg, p_wc)


def bess_power_mask(scenario: Scenario, coupled: bool) -> np.ndarray:
    """Static 0/1 mask over the (spot, reg, wc) power heads for a scenario.

    The capacity penalty in the learner applies this mask so structurally
    zeroed channels cannot contribute to a phantom violation.
    """
    spot = 0.0 if scenario is Scenario.REG_ONLY else 1.0
    reg = 0.0 if scenario is Scenario.SPOT_ONLY else 1.0
    wc = 1.0 if coupled else 0.0
    return np.array([spot, reg, wc], dtype=np.float64)


def wind_reward(
    bid: WindBid, a_act: float, rho_s: float, rho_rr: float, cfg: SystemConfig
) -> float:
    """Shaped wind reward on normalized quantities.

    Pays the blended price on the usable overlap between the bid availability
    and actual generation, and penalizes their mismatch at lambda. Uses the
    original bid, not the curtailment-updated availability, so the incentive
    is pure generation forecasting.
    """
    a_w = bid.availability_mw / cfg.p_wind_max
    blend = bid.spot_fraction * rho_s + (1.0 - bid.spot_fraction) * rho_rr
    overlap = a_w if a_w < a_act else a_act
    return blend * (overlap - cfg.lam * abs(a_w - a_act))


def bess_reward(
    bid: BessBid,
    v_w: float,
    rho_s: float,
    ema_value: float,
    rho_rr: float,
    rho_rl: float,
    f_wc: float,
    wc_available_mw: float,
    cfg: SystemConfig,
) -> BessRewardTerms:
    """Shaped battery reward for the executed bid.

    spot: pays |price - EMA| on the spot power when trading on the profitable
    side of the average and charges it on the wrong side (sgn(0) = 0).
    reg: capacity payment on the regulation power for the enabled direction.
    wc: pays the blended wind price on curtailment actually drawn (min of bid
    and availability, taken in MW and normalized by the battery rating),
    weighted by the recent curtailment frequency.
    """
    a_s = bid.p_spot_mw / cfg.p_bess_max
    a_reg = bid.p_reg_mw / cfg.p_bess_max
    gap = abs(rho_s - ema_value)
    if bid.mode is BessMode.CHARGE:
        r_spot = a_s * gap * _sgn(ema_value - rho_s) / cfg.eta_ch
        r_reg = a_reg * rho_rl / cfg.eta_ch
    elif bid.mode is BessMode.DISCHARGE:
        r_spot = a_s * gap * _sgn(rho_s - ema_value) * cfg.eta_dch
        r_reg = a_reg * cfg.eta_dch * rho_rr
    else:
        r_spot = 0.0
        r_reg = 0.0
    drawn = bid.p_wc_mw if bid.p_wc_mw < wc_available_mw else wc_available_mw
    blend = v_w * rho_s + (1.0 - v_w) * rho_rr
    r_wc = cfg.lam * blend * (drawn / cfg.p_bess_max) * f_wc / cfg.eta_ch
    return BessRewardTerms(r_spot, r_reg, r_wc)


@dataclass
class StepOutcome:
    """Everything one environment step produces."""

    wind_state: np.ndarray
    bess_state: np.ndarray
    r_wind: float
    r_bess: BessRewardTerms
    settlement: SettlementResult
    done: bool


class JointBiddingEnv:
    """Steps both agents through a tick stream, one dispatch interval at a time.

    Episodes are episode_len intervals; reset() re-centers the battery but the
    price EMA and curtailment window persist (they track the market, not the
    asset). With cycle=True the stream wraps for indefinite training.
    """

    def __init__(
        self,
        ticks: Sequence[MarketTick],
        cfg: SystemConfig,
        scenario: Scenario,
        coupled: bool = True,
        episode_len: int = 288,
        cycle: bool = False,
        spot_divisor: float = SPOT_DIVISOR,
        fcas_divisor: float = FCAS_DIVISOR,
    ):
        if not ticks:
            raise ValueError("tick stream must be non-empty")
        if episode_len < 1:
            raise ValueError("episode_len must be at least 1")
        self.ticks = list(ticks)
        self.cfg = cfg
        self.scenario = scenario
        self.coupled = coupled
        self.episode_len = episode_len
        self.cycle = cycle
        self.spot_divisor = spot_divisor
        self.fcas_divisor = fcas_divisor
        self.battery = BatteryState(cfg.e_mid)
        self.ema = EmaTracker(cfg.tau_s)
        self.window = CurtailmentWindow(cfg.m_window)
        self._pos = 0
        self._episode_steps = 0

    @property
    def exhausted(self) -> bool:
        return self._pos >= len(self.ticks)

    @property
    def power_mask(self) -> np.ndarray:
        return bess_power_mask(self.scenario, self.coupled)

    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        """Start a new episode: battery back to mid-range, stream continues."""
        self.battery = BatteryState(self.cfg.e_mid)
        self._episode_steps = 0
        return self._states()

    def _states(self) -> tuple[np.ndarray, np.ndarray]:
        if self._pos == 0:
            prev_wind = prev_s = prev_rr = prev_rl = 0.0
        else:
            prev = self.ticks[self._pos - 1]
            prev_wind, prev_s, prev_rr, prev_rl = prev.p_wind_act, prev.rho_s, prev.rho_rr, prev.rho_rl
        wind_state = build_wind_state(
            prev_wind, prev_s, prev_rr, self.cfg, self.spot_divisor, self.fcas_divisor
        )
        bess_state = build_bess_state(
            self.battery.energy_mwh,
            self.window.frequency,
            prev_wind,
            prev_s,
            prev_rr,
            prev_rl,
            self.cfg,
            self.spot_divisor,
            self.fcas_divisor,
        )
        return wind_state, bess_state

    def step(self, wind_raw: Sequence[float], bess_raw: Sequence[float]) -> StepOutcome:
        if self.exhausted:
            raise RuntimeError("tick stream exhausted; construct a new environment")
        tick = self.ticks[self._pos]
        wind_bid = decode_wind_action(wind_raw, self.scenario, self.cfg)
        bess_bid = decode_bess_action(bess_raw, self.scenario, self.coupled, self.cfg)
        settlement, self.battery = settle_interval(
            wind_bid,
            bess_bid,
            tick.p_wind_act,
            tick.rho_s,
            tick.rho_rr,
            tick.rho_rl,
            tick.agc,
            self.battery,
            self.cfg,
        )
        ema_value = self.ema.update(tick.rho_s)
        f_wc = self.window.push(settlement.p_wc_available > 0.0)
        a_act = tick.p_wind_act / self.cfg.p_wind_max
        r_wind = wind_reward(wind_bid, a_act, tick.rho_s, tick.rho_rr, self.cfg)
        executed = BessBid(
            settlement.mode, settlement.p_spot_mw, settlement.p_reg_mw, settlement.p_wc_mw
        )
        r_bess = bess_reward(
            executed,
            wind_bid.spot_fraction,
            tick.rho_s,
            ema_value,
            tick.rho_rr,
            tick.rho_rl,
            f_wc,
            settlement.p_wc_available,
            self.cfg,
        )
        self._pos += 1
        self._episode_steps += 1
        wrapped = self._pos >= len(self.ticks)
        if wrapped and self.cycle:
            self._pos = 0
        done = self._episode_steps >= self.episode_len or wrapped
        wind_state, bess_state = self._states()
        return StepOutcome(wind_state, bess_state, r_wind, r_bess, settlement, done)
