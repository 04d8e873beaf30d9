"""Reproducible experiment driver.

An ExperimentSpec is resolved into data (synthetic or CSV), a chronological
train/eval split, an agent (learned, planning, or baseline), a deterministic
evaluation pass, and a versioned JSON report plus per-interval settlement CSVs
for external plotting. Under fixed seeds every report field except the
"timing" section is byte-stable across reruns.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .core import SettlementResult
from .env import (
    BESS_ACTION_DIM,
    BESS_STATE_DIM,
    WIND_ACTION_DIM,
    WIND_STATE_DIM,
    JointBiddingEnv,
    Scenario,
    bess_power_mask,
)
from .market_data import (
    CurtailmentWindow,
    MarketTick,
    gen_synthetic_prices,
    gen_synthetic_wind,
    load_market_csv,
    make_ticks,
    split_train_eval,
)
from .nn import grad_check
from .po import DpGrid, run_po_bidder
from .td3 import Batch, Td3Agent, Td3Config, capacity_penalty, train

REPORT_VERSION = 1

SETTLEMENT_SCHEMA = (
    "interval",
    "mode",
    "p_spot",
    "p_reg",
    "p_wc_drawn",
    "wind_avail",
    "v_w",
    "rho_s",
    "rho_rr",
    "rho_rl",
    "wind_rev",
    "bess_rev",
    "deg_cost",
    "soc",
)

AGENT_KINDS = ("td3", "po", "random", "idle")

SCENARIOS = {
    "spot": Scenario.SPOT_ONLY,
    "reg": Scenario.REG_ONLY,
    "joint": Scenario.JOINT,
}

OUTPUT_ROOT_ENV = "WINDBESS_OUTPUT_ROOT"

_PO_DEFAULTS = {"horizon": 12, "method": "persistence", "n_soc": 37, "n_power": 5}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to run one experiment deterministically."""

    name: str = "experiment"
    agent: str = "td3"
    scenario: str = "joint"
    coupled: bool = True
    seeds: tuple[int, ...] = (0,)
    train_steps: int = 20_000
    episode_len: int = 288
    eval_len: int | None = None
    train_ratio: float = 0.8
    outdir: str = "runs"
    checkpoint: str | None = None
    data: dict = field(default_factory=lambda: {"kind": "synthetic", "profile": "mean-reverting", "n": 1440, "seed": 7})
    td3: dict = field(default_factory=dict)
    po: dict = field(default_factory=dict)
    system: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise ValueError("spec field 'name': must be a non-empty string")
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"spec field 'agent': {self.agent!r} not in {AGENT_KINDS}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"spec field 'scenario': {self.scenario!r} not in {tuple(SCENARIOS)}")
        if not self.seeds:
            raise ValueError("spec field 'seeds': at least one seed required")
        if self.train_steps < 0:
            raise ValueError("spec field 'train_steps': must be nonnegative")
        if self.episode_len < 1:
            raise ValueError("spec field 'episode_len': must be at least 1")
        if self.eval_len is not None and self.eval_len < 1:
            raise ValueError("spec field 'eval_len': must be at least 1 when given")
        if not 0.0 <= self.train_ratio <= 1.0:
            raise ValueError("spec field 'train_ratio': must lie in [0, 1]")
        if not self.outdir:
            raise ValueError("spec field 'outdir': must be a non-empty path")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ValueError(f"unknown spec field(s): {unknown}")
        kwargs = dict(raw)
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        for key in ("train_steps", "episode_len"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        if "eval_len" in kwargs and kwargs["eval_len"] is not None:
            kwargs["eval_len"] = int(kwargs["eval_len"])
        if "train_ratio" in kwargs:
            kwargs["train_ratio"] = float(kwargs["train_ratio"])
        if "coupled" in kwargs:
            kwargs["coupled"] = bool(kwargs["coupled"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "agent": self.agent,
            "scenario": self.scenario,
            "coupled": self.coupled,
            "seeds": list(self.seeds),
            "train_steps": self.train_steps,
            "episode_len": self.episode_len,
            "eval_len": self.eval_len,
            "train_ratio": self.train_ratio,
            "outdir": self.outdir,
            "checkpoint": self.checkpoint,
            "data": dict(self.data),
            "td3": dict(self.td3),
            "po": dict(self.po),
            "system": dict(self.system),
        }


def _spawn_ints(seed: int, n: int) -> list[int]:
    """Deterministic child seeds; full 64-bit range so streams never collide."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(s.generate_state(1, np.uint64)[0]) for s in children]


def build_system_config(overrides: dict) -> SystemConfig:
    allowed = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ValueError(f"unknown system field(s): {unknown}")
    kwargs = dict(overrides)
    for key in ("agc_len", "m_window"):
        if key in kwargs:
            kwargs[key] = int(kwargs[key])
    return SystemConfig(**kwargs)


def build_td3_config(overrides: dict) -> Td3Config:
    allowed = {f.name for f in dataclasses.fields(Td3Config)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ValueError(f"unknown td3 field(s): {unknown}")
    kwargs = dict(overrides)
    for key in ("policy_delay", "batch_size", "buffer_capacity", "warmup_steps"):
        if key in kwargs:
            kwargs[key] = int(kwargs[key])
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(int(h) for h in kwargs["hidden"])
    return Td3Config(**kwargs)


def _po_options(overrides: dict) -> dict:
    unknown = sorted(set(overrides) - set(_PO_DEFAULTS))
    if unknown:
        raise ValueError(f"unknown po field(s): {unknown}")
    options = {**_PO_DEFAULTS, **overrides}
    options["horizon"] = int(options["horizon"])
    options["n_soc"] = int(options["n_soc"])
    options["n_power"] = int(options["n_power"])
    return options


def build_ticks(data: dict, cfg: SystemConfig) -> list[MarketTick]:
    """Materialize the data source of a spec into a tick stream."""
    d = dict(data)
    kind = d.pop("kind", "synthetic")
    if kind == "csv":
        market_csv = d.pop("market_csv", None)
        if not market_csv:
            raise ValueError("data field 'market_csv': required for kind 'csv'")
        agc_csv = d.pop("agc_csv", None)
        agc_seed = int(d.pop("agc_seed", 0))
        if d:
            raise ValueError(f"unknown data field(s): {sorted(d)}")
        return load_market_csv(market_csv, cfg, agc_seed=agc_seed, agc_csv=agc_csv)
    if kind == "synthetic":
        profile = d.pop("profile", "mean-reverting")
        n = int(d.pop("n", 1440))
        seed = int(d.pop("seed", 0))
        price_params = {k: float(v) if k != "period" else int(v) for k, v in dict(d.pop("price_params", {}) or {}).items()}
        wind_params = {k: float(v) for k, v in dict(d.pop("wind_params", {}) or {}).items()}
        start = d.pop("start", "2025-01-01T00:00:00")
        if d:
            raise ValueError(f"unknown data field(s): {sorted(d)}")
        price_seed, wind_seed, agc_seed = _spawn_ints(seed, 3)
        spot, rr, rl = gen_synthetic_prices(profile, n, price_seed, **price_params)
        wind = gen_synthetic_wind(n, cfg.p_wind_max, wind_seed, **wind_params)
        return make_ticks(spot, rr, rl, wind, cfg, agc_seed=agc_seed, start=start)
    raise ValueError(f"data field 'kind': unknown value {kind!r}")


# --------------------------------------------------------------------- agents


class RandomPolicy:
    """Uniform random bids; the cheap lower-bound baseline."""

    def __init__(self, action_dim: int, seed: int):
        self.action_dim = action_dim
        self._rng = np.random.default_rng(seed)

    def act(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, self.action_dim)


class IdleWindPolicy:
    """Persistence availability (bid the previous actual) at full spot share."""

    def act(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        return np.array([2.0 * float(state[0]) - 1.0, 1.0])


class IdleBessPolicy:
    """Battery stays idle: the all-zero raw action decodes to Idle."""

    def act(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        return np.zeros(BESS_ACTION_DIM)


def rollout(env: JointBiddingEnv, wind_policy, bess_policy) -> list[SettlementResult]:
    """Deterministic evaluation pass: no exploration, one full episode."""
    wind_state, bess_state = env.reset()
    settlements = []
    for _ in range(env.episode_len):
        a_wind = wind_policy.act(wind_state, False)
        a_bess = bess_policy.act(bess_state, False)
        out = env.step(a_wind, a_bess)
        settlements.append(out.settlement)
        wind_state, bess_state = out.wind_state, out.bess_state
        if out.done:
            break
    return settlements


# -------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated evaluation metrics for one run.

    Revenues in AU$, energies in MWh. charge_composition holds the (spot,
    regulation, curtailment) fractions of the total energy charged into the
    battery; the ratio string pairs whole-MWh absorbed/available curtailment.
    """

    n_intervals: int
    wind_revenue: float
    bess_revenue: float
    degradation_cost: float
    total_revenue: float
    curtailment_absorbed_mwh: float
    curtailment_available_mwh: float
    curtailment_ratio: str
    curtailed_interval_fraction: float
    charge_spot_mwh: float
    charge_reg_mwh: float
    charge_wc_mwh: float
    charge_composition: tuple[float, float, float]
    dispatch_mae_mw: float
    spot_price_quartiles: dict
    f_wc_quartiles: dict

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["charge_composition"] = list(self.charge_composition)
        return out


def _quartile_breakdown(values, settlements) -> dict:
    """Charging energy by source within each quartile of `values`.

    Boundaries are the 25/50/75 percent quantiles of the evaluated series; the
    four groups partition the intervals exactly once (closed on the left
    group, open-below elsewhere).
    """
    arr = np.asarray(values, dtype=np.float64)
    q1, q2, q3 = (float(np.quantile(arr, q)) for q in (0.25, 0.5, 0.75))
    selections = [
        arr <= q1,
        (arr > q1) & (arr <= q2),
        (arr > q2) & (arr <= q3),
        arr > q3,
    ]
    groups = []
    for sel in selections:
        members = [settlements[i] for i in np.flatnonzero(sel)]
        groups.append(
            {
                "n": len(members),
                "charge_spot_mwh": math.fsum(max(r.de_spot, 0.0) for r in members),
                "charge_reg_mwh": math.fsum(max(r.de_reg, 0.0) for r in members),
                "charge_wc_mwh": math.fsum(r.de_wc for r in members),
            }
        )
    return {"boundaries": [q1, q2, q3], "groups": groups}


def report_metrics(
    settlements: list[SettlementResult], ticks: list[MarketTick], cfg: SystemConfig
) -> MetricsReport:
    """Aggregate one evaluation window into a MetricsReport."""
    if len(settlements) != len(ticks):
        raise ValueError(
            f"settlements and ticks length mismatch: {len(settlements)} vs {len(ticks)}"
        )
    if not settlements:
        raise ValueError("cannot report on an empty evaluation window")
    n = len(settlements)
    wind = math.fsum(r.wind_revenue for r in settlements)
    bess = math.fsum(r.bess_revenue for r in settlements)
    deg = math.fsum(r.degradation_cost for r in settlements)
    total = wind + bess - deg
    absorbed = math.fsum(r.de_wc for r in settlements)
    available = math.fsum(r.p_wc_available * cfg.dt_hours for r in settlements)
    charge_spot = math.fsum(max(r.de_spot, 0.0) for r in settlements)
    charge_reg = math.fsum(max(r.de_reg, 0.0) for r in settlements)
    charge_wc = absorbed
    charge_total = charge_spot + charge_reg + charge_wc
    if charge_total > 0.0:
        composition = (charge_spot / charge_total, charge_reg / charge_total, charge_wc / charge_total)
    else:
        composition = (0.0, 0.0, 0.0)
    mae = math.fsum(abs(r.wind_avail_bid - r.p_wind_act) for r in settlements) / n
    window = CurtailmentWindow(cfg.m_window)
    f_wc = [window.push(r.p_wc_available > 0.0) for r in settlements]
    return MetricsReport(
        n_intervals=n,
        wind_revenue=wind,
        bess_revenue=bess,
        degradation_cost=deg,
        total_revenue=total,
        curtailment_absorbed_mwh=absorbed,
        curtailment_available_mwh=available,
        curtailment_ratio=f"{round(absorbed)}/{round(available)}",
        curtailed_interval_fraction=sum(1 for r in settlements if r.p_wc_available > 0.0) / n,
        charge_spot_mwh=charge_spot,
        charge_reg_mwh=charge_reg,
        charge_wc_mwh=charge_wc,
        charge_composition=composition,
        dispatch_mae_mw=mae,
        spot_price_quartiles=_quartile_breakdown([t.rho_s for t in ticks], settlements),
        f_wc_quartiles=_quartile_breakdown(f_wc, settlements),
    )


def write_settlement_csv(
    settlements: list[SettlementResult], ticks: list[MarketTick], path: str
) -> None:
    """Per-interval settlement record in the pinned schema. Floats use repr so
    report totals reconstruct bit for bit from the file."""
    if len(settlements) != len(ticks):
        raise ValueError(
            f"settlements and ticks length mismatch: {len(settlements)} vs {len(ticks)}"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SETTLEMENT_SCHEMA)
        for i, (r, t) in enumerate(zip(settlements, ticks)):
            writer.writerow(
                [
                    i,
                    r.mode.value,
                    repr(r.p_spot_mw),
                    repr(r.p_reg_mw),
                    repr(r.p_wc_drawn),
                    repr(r.wind_avail_bid),
                    repr(r.v_w),
                    repr(t.rho_s),
                    repr(t.rho_rr),
                    repr(t.rho_rl),
                    repr(r.wind_revenue),
                    repr(r.bess_revenue),
                    repr(r.degradation_cost),
                    repr(r.soc_after),
                ]
            )


def read_settlement_csv(path: str) -> list[dict]:
    """Load a settlement CSV back as typed row dicts (floats bit-exact)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SETTLEMENT_SCHEMA:
            raise ValueError(f"{path}: bad settlement header")
        rows = []
        for row in reader:
            if len(row) != len(SETTLEMENT_SCHEMA):
                raise ValueError(f"{path}: bad settlement row width")
            record: dict = {"interval": int(row[0]), "mode": row[1]}
            for name, text in zip(SETTLEMENT_SCHEMA[2:], row[2:]):
                record[name] = float(text)
            rows.append(record)
    return rows


# ------------------------------------------------------------------ execution


def _write_json(obj: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def _write_train_log(log, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "end_step", "steps", "wind_reward", "bess_reward"])
        for rec in log.episodes:
            writer.writerow(
                [rec.episode, rec.end_step, rec.steps, repr(rec.wind_reward), repr(rec.bess_reward)]
            )


def _run_one_seed(
    spec: ExperimentSpec,
    cfg: SystemConfig,
    scenario: Scenario,
    train_ticks: list[MarketTick],
    eval_ticks: list[MarketTick],
    seed: int,
    seed_dir: str,
) -> tuple[list[SettlementResult], float, float]:
    """Train (when applicable) and evaluate one seed. Returns settlements and
    (train seconds, eval seconds)."""
    t_start = time.perf_counter()
    if spec.agent == "td3":
        tcfg = build_td3_config(spec.td3)
        wind_seed, bess_seed, _ = _spawn_ints(seed, 3)
        wind_agent = Td3Agent(WIND_STATE_DIM, WIND_ACTION_DIM, tcfg, wind_seed)
        bess_agent = Td3Agent(
            BESS_STATE_DIM,
            BESS_ACTION_DIM,
            tcfg,
            bess_seed,
            penalty_mask=bess_power_mask(scenario, spec.coupled),
        )
        if spec.checkpoint:
            wind_agent.load_params(os.path.join(spec.checkpoint, "wind_agent.npz"))
            bess_agent.load_params(os.path.join(spec.checkpoint, "bess_agent.npz"))
        if spec.train_steps > 0:
            if not train_ticks:
                raise ValueError("spec field 'train_ratio': no training data for agent 'td3'")
            env_train = JointBiddingEnv(
                train_ticks, cfg, scenario, spec.coupled, episode_len=spec.episode_len, cycle=True
            )
            log = train(env_train, wind_agent, bess_agent, spec.train_steps)
            _write_train_log(log, os.path.join(seed_dir, "train_log.csv"))
        wind_agent.save(os.path.join(seed_dir, "wind_agent.npz"), {"seed": seed, "steps": spec.train_steps})
        bess_agent.save(os.path.join(seed_dir, "bess_agent.npz"), {"seed": seed, "steps": spec.train_steps})
        t_trained = time.perf_counter()
        env_eval = JointBiddingEnv(eval_ticks, cfg, scenario, spec.coupled, episode_len=len(eval_ticks))
        settlements = rollout(env_eval, wind_agent, bess_agent)
    elif spec.agent == "po":
        options = _po_options(spec.po)
        t_trained = time.perf_counter()
        settlements = run_po_bidder(
            eval_ticks,
            cfg,
            scenario,
            spec.coupled,
            grid=DpGrid(options["n_soc"], options["n_power"]),
            horizon=options["horizon"],
            method=options["method"],
            prior=train_ticks[-1] if train_ticks else None,
        )
    elif spec.agent == "random":
        wind_seed, bess_seed, _ = _spawn_ints(seed, 3)
        t_trained = time.perf_counter()
        env_eval = JointBiddingEnv(eval_ticks, cfg, scenario, spec.coupled, episode_len=len(eval_ticks))
        settlements = rollout(
            env_eval,
            RandomPolicy(WIND_ACTION_DIM, wind_seed),
            RandomPolicy(BESS_ACTION_DIM, bess_seed),
        )
    else:
        t_trained = time.perf_counter()
        env_eval = JointBiddingEnv(eval_ticks, cfg, scenario, spec.coupled, episode_len=len(eval_ticks))
        settlements = rollout(env_eval, IdleWindPolicy(), IdleBessPolicy())
    t_end = time.perf_counter()
    return settlements, t_trained - t_start, t_end - t_trained


_MEDIAN_KEYS = (
    "wind_revenue",
    "bess_revenue",
    "degradation_cost",
    "total_revenue",
    "curtailment_absorbed_mwh",
    "curtailment_available_mwh",
    "curtailed_interval_fraction",
    "dispatch_mae_mw",
)


def run_experiment(spec: ExperimentSpec) -> tuple[dict, str]:
    """Run one spec end to end and write its artifacts.

    Layout: <outdir>/<name>/report.json plus per-seed subdirectories holding
    settlement.csv, and for the learned agent train_log.csv and checkpoints.
    Returns (report dict, report path).
    """
    cfg = build_system_config(spec.system)
    ticks = build_ticks(spec.data, cfg)
    train_ticks, eval_ticks = split_train_eval(ticks, spec.train_ratio)
    if spec.eval_len is not None:
        if len(eval_ticks) < spec.eval_len:
            raise ValueError(
                f"spec field 'eval_len': wants {spec.eval_len} intervals, split holds {len(eval_ticks)}"
            )
        eval_ticks = eval_ticks[: spec.eval_len]
    if not eval_ticks:
        raise ValueError("spec field 'train_ratio': evaluation window is empty")
    scenario = SCENARIOS[spec.scenario]
    run_dir = os.path.join(spec.outdir, spec.name)
    os.makedirs(run_dir, exist_ok=True)
    per_seed = {}
    train_seconds = {}
    eval_seconds = {}
    for seed in spec.seeds:
        seed_dir = os.path.join(run_dir, f"seed{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        settlements, t_train, t_eval = _run_one_seed(
            spec, cfg, scenario, train_ticks, eval_ticks, seed, seed_dir
        )
        write_settlement_csv(settlements, eval_ticks, os.path.join(seed_dir, "settlement.csv"))
        metrics = report_metrics(settlements, eval_ticks, cfg)
        per_seed[str(seed)] = metrics.to_dict()
        train_seconds[str(seed)] = t_train
        eval_seconds[str(seed)] = t_eval
    aggregate = {
        f"median_{key}": statistics.median(per_seed[s][key] for s in per_seed)
        for key in _MEDIAN_KEYS
    }
    report = {
        "report_version": REPORT_VERSION,
        "name": spec.name,
        "spec": spec.to_dict(),
        "eval_window": {
            "n_intervals": len(eval_ticks),
            "first_timestamp": eval_ticks[0].timestamp,
            "last_timestamp": eval_ticks[-1].timestamp,
        },
        "per_seed": per_seed,
        "aggregate": aggregate,
        "timing": {"train_seconds": train_seconds, "eval_seconds": eval_seconds},
    }
    report_path = os.path.join(run_dir, "report.json")
    _write_json(report, report_path)
    return report, report_path


# ----------------------------------------------------------------- comparison


def boost_percent(a: float, b: float) -> int:
    """Relative improvement (a - b) / b as a whole percent."""
    if b == 0:
        raise ValueError("cannot compute a boost against a zero baseline")
    return round((a - b) / b * 100.0)


def compare_reports(reports: list[dict]) -> dict:
    """Side-by-side comparison of completed runs; the first is the baseline.

    All runs must share the evaluation window. Returns row data plus a
    rendered text table with total-revenue boost percentages.
    """
    if len(reports) < 2:
        raise ValueError("need at least 2 completed runs to compare")
    window = reports[0].get("eval_window")
    for rep in reports[1:]:
        if rep.get("eval_window") != window:
            raise ValueError(
                f"mismatched eval windows: {rep.get('eval_window')} vs {window}"
            )
    names = []
    for rep in reports:
        name = str(rep.get("name", f"run{len(names)}"))
        while name in names:
            name += "'"
        names.append(name)
    rows = {}
    for key in _MEDIAN_KEYS:
        rows[f"median_{key}"] = [rep["aggregate"][f"median_{key}"] for rep in reports]
    baseline_total = reports[0]["aggregate"]["median_total_revenue"]
    boosts: list[int | None] = [0]
    for rep in reports[1:]:
        boosts.append(boost_percent(rep["aggregate"]["median_total_revenue"], baseline_total))
    width = max(len(n) for n in names) + 2
    label_width = max(len(k) for k in rows) + 2
    lines = ["".ljust(label_width) + "".join(n.rjust(width) for n in names)]
    for key, values in rows.items():
        lines.append(key.ljust(label_width) + "".join(f"{v:.2f}".rjust(width) for v in values))
    boost_cells = ["baseline"] + [f"{b:+d}%" for b in boosts[1:]]
    lines.append("total_boost".ljust(label_width) + "".join(c.rjust(width) for c in boost_cells))
    return {
        "names": names,
        "eval_window": window,
        "rows": rows,
        "total_boost_pct": boosts,
        "table": "\n".join(lines),
    }


# ----------------------------------------------------- gradient verification


def _min_preactivation_margin(net, x: np.ndarray) -> float:
    """Smallest |pre-activation| over the hidden layers for a batch.

    Finite differences step weights by ~1e-5, so an instance whose hidden
    units all sit clear of the ReLU kink checks cleanly.
    """
    a = np.atleast_2d(x)
    margin = math.inf
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w + b
        if z.size:
            margin = min(margin, float(np.abs(z).min()))
        a = np.maximum(z, 0.0)
    return margin


def gradient_report(n_instances: int = 100, seed: int = 0, h: float = 1e-5) -> dict:
    """Verify analytic actor/critic gradients against central differences.

    Builds small random agents (well under 1e3 parameters), random batches,
    and compares the backpropagated gradients of the exact training losses
    (critic Bellman loss; actor loss including the capacity penalty) with
    finite differences. Instances whose batch sits within 1e-3 of a ReLU kink
    or of the penalty threshold are redrawn, since the losses are only
    piecewise smooth there. Returns the worst relative errors.
    """
    rng = np.random.default_rng(seed)
    worst_actor = 0.0
    worst_critic = 0.0
    max_params = 0
    checked = 0
    attempts = 0
    while checked < n_instances:
        attempts += 1
        if attempts > 50 * n_instances:
            raise RuntimeError("could not find enough smooth gradient-check instances")
        state_dim = int(rng.integers(2, 6))
        action_dim = int(rng.integers(2, 5))
        hidden = (int(rng.integers(4, 10)), int(rng.integers(4, 10)))
        tcfg = Td3Config(
            gamma=float(rng.uniform(0.8, 0.99)),
            hidden=hidden,
            batch_size=8,
            buffer_capacity=16,
            beta_l=10.0,
        )
        mask = np.ones(action_dim - 1)
        agent = Td3Agent(state_dim, action_dim, tcfg, int(rng.integers(2**31)), penalty_mask=mask)
        n = 8
        batch = Batch(
            rng.normal(size=(n, state_dim)),
            rng.uniform(-1.0, 1.0, (n, action_dim)),
            rng.normal(size=(n, 1)),
            rng.normal(size=(n, state_dim)),
        )
        targets = agent.critic_target(batch)
        actions = agent.actor.forward(batch.states)
        x_data = np.concatenate([batch.states, batch.actions], axis=1)
        x_policy = np.concatenate([batch.states, actions], axis=1)
        margin = min(
            _min_preactivation_margin(agent.q1, x_data),
            _min_preactivation_margin(agent.q1, x_policy),
            _min_preactivation_margin(agent.actor, batch.states),
        )
        head_sum = ((actions[:, 1:] + 1.0) / 2.0) @ mask
        margin = min(margin, float(np.abs(head_sum - 1.0).min()))
        if margin < 1e-3:
            continue

        _, critic_grads = agent.critic_grads(agent.q1, batch, targets)
        critic_flat = np.concatenate([g.ravel() for g in critic_grads])

        def critic_loss(net) -> float:
            err = net.forward(x_data) - targets
            return float(0.5 * np.mean(err * err))

        worst_critic = max(worst_critic, grad_check(agent.q1, critic_loss, critic_flat, h=h))

        _, actor_grads = agent.actor_grads(batch)
        actor_flat = np.concatenate([g.ravel() for g in actor_grads])

        def actor_loss(net) -> float:
            acts = net.forward(batch.states)
            q = agent.q1.forward(np.concatenate([batch.states, acts], axis=1))
            loss = -float(np.mean(q))
            pen, _ = capacity_penalty(acts, mask)
            return loss + tcfg.beta_l * pen

        worst_actor = max(worst_actor, grad_check(agent.actor, actor_loss, actor_flat, h=h))
        for net in agent.nets().values():
            max_params = max(max_params, net.n_params())
        checked += 1
    return {
        "instances": checked,
        "max_actor_rel_err": worst_actor,
        "max_critic_rel_err": worst_critic,
        "max_params": max_params,
    }
