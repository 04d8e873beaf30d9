"""Single-interval settlement model for the co-located wind + BESS plant.

The plant bids into three concurrent markets each 5-minute dispatch interval:
the energy (spot) market, regulation raise FCAS, and regulation lower FCAS.
Regulation bids are paid as capacity reserve; only the AGC signal moves energy.
All revenue formulas apply conversion efficiencies, while the battery energy
balance deliberately does not (losses are priced, not modelled physically).

Sign conventions: positive energy delta charges the battery; revenues are
positive income, degradation is a positive cost.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import SystemConfig

# Tolerance on the rated-power sum so proportionally rescaled bids (sum equal
# to the rating up to one ulp) always validate.
POWER_SUM_TOL = 1e-9


class BessMode(enum.Enum):
    """Mutually exclusive battery operating mode for one dispatch interval."""

    DISCHARGE = "discharge"
    CHARGE = "charge"
    IDLE = "idle"


@dataclass(frozen=True)
class WindBid:
    """Wind offer for one interval.

    availability_mw: dispatch target (generation made available to the market).
    spot_fraction: share v_w of dispatched energy settled at the spot price;
    the remainder is settled at the regulation raise price.
    """

    availability_mw: float
    spot_fraction: float


@dataclass(frozen=True)
class BessBid:
    """Battery offer for one interval: mode plus per-market power nominations."""

    mode: BessMode
    p_spot_mw: float
    p_reg_mw: float
    p_wc_mw: float


IDLE_BID = BessBid(BessMode.IDLE, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class BatteryState:
    """Stored energy at a dispatch interval boundary."""

    energy_mwh: float


class AgcTrace:
    """Normalized AGC regulation signals for one dispatch interval.

    Signals lie in [-1, 1]; nonnegative values request raise (discharge energy
    leaves the battery), negative values request lower (charge energy enters).
    """

    __slots__ = ("signals",)

    def __init__(self, signals: Sequence[float] | np.ndarray):
        arr = np.asarray(signals, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("AGC trace must be one-dimensional")
        if arr.size and (arr.min() < -1.0 or arr.max() > 1.0):
            raise ValueError("AGC signals must lie in [-1, 1]")
        self.signals = arr

    def __len__(self) -> int:
        return int(self.signals.size)


@dataclass(frozen=True)
class EnergyDelta:
    """Battery energy movement over one interval, split by source."""

    spot: float
    reg: float
    wc: float
    total: float


@dataclass(frozen=True)
class SettlementResult:
    """Realized outcome of one dispatch interval.

    wind_avail_bid is the availability as bid; wind_avail_updated includes any
    curtailment drawn by the battery and is the settlement dispatch target.
    soc_after is the stored energy after the accepted energy delta.
    """

    mode: BessMode
    p_spot_mw: float
    p_reg_mw: float
    p_wc_mw: float
    wind_avail_bid: float
    wind_avail_updated: float
    v_w: float
    p_wind_act: float
    p_dis: float
    p_wc_available: float
    p_wc_drawn: float
    wind_revenue: float
    bess_revenue: float
    degradation_cost: float
    de_spot: float
    de_reg: float
    de_wc: float
    de_total: float
    soc_after: float
    bess_zeroed: bool


def validate_bess_bid(bid: BessBid, cfg: SystemConfig) -> list[str]:
    """Return violation codes for a battery bid, empty when the bid is valid.

    Checks per-channel power bounds, the rated-power sum, and the rule that a
    discharging battery cannot draw curtailed wind.
    """
    violations = []
    for power, code in (
        (bid.p_spot_mw, "spot-power-out-of-range"),
        (bid.p_reg_mw, "reg-power-out-of-range"),
        (bid.p_wc_mw, "wc-power-out-of-range"),
    ):
        if not (0.0 <= power <= cfg.p_bess_max + POWER_SUM_TOL):
            violations.append(code)
    if bid.p_spot_mw + bid.p_reg_mw + bid.p_wc_mw > cfg.p_bess_max + POWER_SUM_TOL:
        violations.append("sum-exceeds-rated-power")
    if bid.mode is BessMode.DISCHARGE and bid.p_wc_mw > 0.0:
        violations.append("discharge-precludes-wc-draw")
    return violations


def wind_dispatch_outcome(p_w: float, p_act: float) -> tuple[float, float]:
    """Dispatch a wind availability bid against actual generation.

    Returns (dispatched power, curtailment available to the battery). Actual
    generation above the bid is curtailed; below the bid it is a shortfall.
    """
    if p_w < 0.0 or p_act < 0.0:
        raise ValueError("wind powers must be nonnegative")
    p_dis = p_act if p_act < p_w else p_w
    surplus = p_act - p_w
    return p_dis, surplus if surplus > 0.0 else 0.0


def settle_curtailment(bid_p_wc: float, p_wc_available: float, p_w: float) -> tuple[float, float]:
    """Resolve the battery's curtailment draw against what is available.

    Returns (power drawn, updated wind availability). The drawn power is added
    back to the wind dispatch target, so absorbed curtailment is settled as
    dispatched wind energy. Caller must not pass a positive bid in Discharge
    mode (decode and validation enforce this upstream).
    """
    if bid_p_wc < 0.0 or p_wc_available < 0.0 or p_w < 0.0:
        raise ValueError("curtailment inputs must be nonnegative")
    drawn = bid_p_wc if bid_p_wc < p_wc_available else p_wc_available
    return drawn, p_w + drawn


def energy_delta(bid: BessBid, agc: AgcTrace, p_wc_drawn: float, cfg: SystemConfig) -> EnergyDelta:
    """Battery energy movement for one interval under the realized AGC trace.

    Spot energy moves at the nominated power for the whole interval. Regulation
    energy follows the AGC signals that point in the enabled direction only.
    Efficiencies do not appear here by design; they act on revenue instead.
    """
    if len(agc) != cfg.agc_len:
        raise ValueError(f"AGC trace has {len(agc)} signals, expected {cfg.agc_len}")
    signals = agc.signals
    if bid.mode is BessMode.CHARGE:
        de_spot = cfg.dt_hours * bid.p_spot_mw
        lower_abs_sum = float(-signals[signals < 0.0].sum())
        de_reg = (cfg.ds_hours * lower_abs_sum) * bid.p_reg_mw
    elif bid.mode is BessMode.DISCHARGE:
        de_spot = -(cfg.dt_hours * bid.p_spot_mw)
        raise_sum = float(signals[signals >= 0.0].sum())
        de_reg = -((cfg.ds_hours * raise_sum) * bid.p_reg_mw)
    else:
        de_spot = 0.0
        de_reg = 0.0
    de_wc = p_wc_drawn * cfg.dt_hours
    total = de_spot + de_reg + de_wc
    return EnergyDelta(de_spot, de_reg, de_wc, total)


def wind_revenue_interval(
    bid: WindBid, p_dis: float, rho_s: float, rho_rr: float, cfg: SystemConfig
) -> float:
    """Wind settlement for one interval: blended price on dispatched energy
    minus the deviation penalty against the availability target."""
    blend = bid.spot_fraction * rho_s + (1.0 - bid.spot_fraction) * rho_rr
    deviation = abs(p_dis - bid.availability_mw)
    return cfg.dt_hours * blend * (p_dis - cfg.lam * deviation)


def bess_revenue_interval(
    bid: BessBid, rho_s: float, rho_rr: float, rho_rl: float, cfg: SystemConfig
) -> float:
    """Battery settlement for one interval.

    Discharge sells spot energy and raise capacity scaled by the discharge
    efficiency. Charge buys spot energy scaled up by 1/eta_ch and is paid for
    lower capacity at the same scaling. Idle earns nothing.
    """
    if bid.mode is BessMode.DISCHARGE:
        gross = rho_s * cfg.eta_dch * bid.p_spot_mw + rho_rr * cfg.eta_dch * bid.p_reg_mw
    elif bid.mode is BessMode.CHARGE:
        gross = -(rho_s * bid.p_spot_mw / cfg.eta_ch) + rho_rl * bid.p_reg_mw / cfg.eta_ch
    else:
        gross = 0.0
    return cfg.dt_hours * gross


def degradation_cost_interval(bid: BessBid, cfg: SystemConfig) -> float:
    """Cycling cost: charged only on discharged power (spot plus regulation)."""
    if bid.mode is BessMode.DISCHARGE:
        return cfg.c_deg * cfg.dt_hours * (bid.p_spot_mw + bid.p_reg_mw)
    return 0.0


def step_battery(
    state: BatteryState, de_total: float, cfg: SystemConfig
) -> tuple[BatteryState, bool]:
    """Apply an energy delta if it keeps the battery within its limits.

    Returns (new state, accepted). A rejected delta leaves the state unchanged;
    callers zero the battery bid in that case.
    """
    e_new = state.energy_mwh + de_total
    if cfg.e_min <= e_new <= cfg.e_max:
        return BatteryState(e_new), True
    return state, False


def settle_interval(
    wind_bid: WindBid,
    bess_bid: BessBid,
    p_wind_act: float,
    rho_s: float,
    rho_rr: float,
    rho_rl: float,
    agc: AgcTrace,
    battery: BatteryState,
    cfg: SystemConfig,
) -> tuple[SettlementResult, BatteryState]:
    """Settle one dispatch interval end to end.

    Composes dispatch, curtailment draw, energy balance, the feasibility rule
    (an infeasible battery bid is zeroed and the interval re-settled), and all
    revenue terms. Battery bids must already be valid per validate_bess_bid.
    """
    p_dis_bid, available = wind_dispatch_outcome(wind_bid.availability_mw, p_wind_act)
    executed = bess_bid
    drawn, p_w_updated = settle_curtailment(executed.p_wc_mw, available, wind_bid.availability_mw)
    delta = energy_delta(executed, agc, drawn, cfg)
    new_battery, accepted = step_battery(battery, delta.total, cfg)
    zeroed = not accepted
    if zeroed:
        executed = IDLE_BID
        drawn, p_w_updated = settle_curtailment(0.0, available, wind_bid.availability_mw)
        delta = energy_delta(executed, agc, 0.0, cfg)
        new_battery, accepted = step_battery(battery, delta.total, cfg)

    p_dis = p_wind_act if p_wind_act < p_w_updated else p_w_updated
    settled_wind = WindBid(p_w_updated, wind_bid.spot_fraction)
    wind_rev = wind_revenue_interval(settled_wind, p_dis, rho_s, rho_rr, cfg)
    bess_rev = bess_revenue_interval(executed, rho_s, rho_rr, rho_rl, cfg)
    deg = degradation_cost_interval(executed, cfg)

    result = SettlementResult(
        mode=executed.mode,
        p_spot_mw=executed.p_spot_mw,
        p_reg_mw=executed.p_reg_mw,
        p_wc_mw=executed.p_wc_mw,
        wind_avail_bid=wind_bid.availability_mw,
        wind_avail_updated=p_w_updated,
        v_w=wind_bid.spot_fraction,
        p_wind_act=p_wind_act,
        p_dis=p_dis,
        p_wc_available=available,
        p_wc_drawn=drawn,
        wind_revenue=wind_rev,
        bess_revenue=bess_rev,
        degradation_cost=deg,
        de_spot=delta.spot,
        de_reg=delta.reg,
        de_wc=delta.wc,
        de_total=delta.total,
        soc_after=new_battery.energy_mwh,
        bess_zeroed=zeroed,
    )
    return result, new_battery


def joint_objective(settlements: Iterable[SettlementResult]) -> float:
    """Total plant objective: wind plus battery revenue minus degradation."""
    results = list(settlements)
    wind = math.fsum(r.wind_revenue for r in results)
    bess = math.fsum(r.bess_revenue for r in results)
    deg = math.fsum(r.degradation_cost for r in results)
    return wind + bess - deg
