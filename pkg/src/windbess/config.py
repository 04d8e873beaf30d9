"""System configuration for the co-located wind + BESS bidding laboratory.

All times are in hours, powers in MW, energies in MWh, prices in AU$/MWh.
Defaults correspond to a 67 MW wind farm paired with a 10 MW / 10 MWh battery
bidding into 5-minute energy and regulation FCAS markets.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class SystemConfig:
    """Market cadence, asset ratings, and shared coefficients.

    ds_hours (the AGC sub-interval) is derived as dt_hours / agc_len unless
    given explicitly; the two must always satisfy dt = agc_len * ds.
    """

    dt_hours: float = 5.0 / 60.0        # dispatch interval length
    agc_len: int = 75                   # AGC signals per dispatch interval
    ds_hours: float = field(default=0.0)  # AGC signal spacing, derived in __post_init__ if 0
    lam: float = 1.5                    # dispatch deviation penalty multiplier
    eta_dch: float = 0.95               # discharge efficiency
    eta_ch: float = 0.95                # charge efficiency
    c_deg: float = 1.0                  # degradation cost, AU$/MWh discharged
    p_wind_max: float = 67.0            # wind farm rating, MW
    p_bess_max: float = 10.0            # battery rating, MW
    e_min: float = 0.5                  # battery energy floor, MWh
    e_max: float = 9.5                  # battery energy ceiling, MWh
    m_window: int = 10                  # curtailment frequency window, intervals
    tau_s: float = 0.9                  # spot price EMA smoothing factor
    gamma: float = 0.99                 # discount factor
    beta_l: float = 10.0                # capacity penalty weight

    def __post_init__(self) -> None:
        if self.dt_hours <= 0:
            raise ValueError("dt_hours must be positive")
        if self.agc_len < 1:
            raise ValueError("agc_len must be at least 1")
        if self.ds_hours == 0.0:
            object.__setattr__(self, "ds_hours", self.dt_hours / self.agc_len)
        elif abs(self.agc_len * self.ds_hours - self.dt_hours) > 1e-9 * self.dt_hours:
            raise ValueError("dt_hours must equal agc_len * ds_hours")
        if not (0.0 < self.eta_dch <= 1.0 and 0.0 < self.eta_ch <= 1.0):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.e_min < 0 or self.e_max <= self.e_min:
            raise ValueError("need 0 <= e_min < e_max")
        if self.p_wind_max <= 0 or self.p_bess_max <= 0:
            raise ValueError("ratings must be positive")
        if self.m_window < 1:
            raise ValueError("m_window must be at least 1")
        if not 0.0 <= self.tau_s < 1.0:
            raise ValueError("tau_s must lie in [0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.lam < 0 or self.c_deg < 0 or self.beta_l < 0:
            raise ValueError("lam, c_deg and beta_l must be nonnegative")

    @property
    def e_mid(self) -> float:
        """Battery reset level at episode start."""
        return 0.5 * (self.e_min + self.e_max)
