"""Desk-scale laboratory for joint spot + regulation FCAS bidding by a wind
farm with a co-located battery: market settlement model, coupled decision
environments, a from-scratch actor-critic learner, an exact dynamic
programming benchmark bidder, and a reproducible experiment harness.
"""

from .config import SystemConfig
from .core import (
    AgcTrace,
    BatteryState,
    BessBid,
    BessMode,
    EnergyDelta,
    SettlementResult,
    WindBid,
    joint_objective,
    settle_interval,
    validate_bess_bid,
)
from .env import JointBiddingEnv, Scenario, StepOutcome, decode_bess_action, decode_wind_action
from .harness import (
    ExperimentSpec,
    MetricsReport,
    compare_reports,
    gradient_report,
    report_metrics,
    run_experiment,
)
from .market_data import MarketTick, load_market_csv, split_train_eval, write_market_csv
from .nn import Adam, Mlp, grad_check
from .po import DpGrid, Forecast, brute_force_oracle, dp_optimize, run_po_bidder
from .td3 import ReplayBuffer, Td3Agent, Td3Config, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AgcTrace",
    "BatteryState",
    "BessBid",
    "BessMode",
    "DpGrid",
    "EnergyDelta",
    "ExperimentSpec",
    "Forecast",
    "JointBiddingEnv",
    "MarketTick",
    "MetricsReport",
    "Mlp",
    "ReplayBuffer",
    "Scenario",
    "SettlementResult",
    "StepOutcome",
    "SystemConfig",
    "Td3Agent",
    "Td3Config",
    "WindBid",
    "brute_force_oracle",
    "compare_reports",
    "decode_bess_action",
    "decode_wind_action",
    "dp_optimize",
    "grad_check",
    "gradient_report",
    "joint_objective",
    "load_market_csv",
    "report_metrics",
    "run_experiment",
    "run_po_bidder",
    "settle_interval",
    "split_train_eval",
    "train",
    "validate_bess_bid",
    "write_market_csv",
    "__version__",
]
