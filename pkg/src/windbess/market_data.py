"""Market data plumbing: synthetic generators, CSV ingestion, and trackers.

A data stream is a list of MarketTick records at dispatch-interval cadence.
Each tick carries the three market prices, actual wind generation, and the
AGC regulation trace for that interval. AGC traces are reproducible: they are
derived from a per-run seed and the interval index, so the same (seed, index)
pair always yields the same trace regardless of visit order.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

from .config import SystemConfig
from .core import AgcTrace

SCHEMA = ("timestamp", "spot_price", "rr_price", "rl_price", "wind_mw")


class MarketCsvError(ValueError):
    """Raised when a market or AGC CSV fails schema or range validation."""


@dataclass(frozen=True)
class MarketTick:
    """One dispatch interval of market data."""

    index: int
    timestamp: str
    rho_s: float
    rho_rr: float
    rho_rl: float
    p_wind_act: float
    agc: AgcTrace


def gen_agc_trace(rng: np.random.Generator, length: int) -> AgcTrace:
    """Draw one interval of AGC signals uniformly from [-1, 1]."""
    return AgcTrace(rng.uniform(-1.0, 1.0, size=length))


def agc_for_interval(agc_seed: int, index: int, length: int) -> AgcTrace:
    """Deterministic per-interval AGC trace keyed by (seed, interval index)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(agc_seed), int(index)]))
    return gen_agc_trace(rng, length)


def gen_synthetic_prices(
    profile: str, n: int, seed: int, **params: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate (spot, raise, lower) price series of length n.

    Profiles:
      constant        flat at `level` for all three series
      square-wave     spot alternates `low`/`high` with cycle length `period`;
                      FCAS series flat at `rr_level` / `rl_level`
      mean-reverting  AR(1) spot around `mean` with occasional upward spikes;
                      FCAS series are their own AR(1) processes clipped at 0
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    if profile == "constant":
        level = float(params.pop("level", 50.0))
        _reject_unknown(params)
        flat = np.full(n, level)
        return flat, flat.copy(), flat.copy()
    if profile == "square-wave":
        low = float(params.pop("low", 20.0))
        high = float(params.pop("high", 100.0))
        period = int(params.pop("period", 2))
        rr_level = float(params.pop("rr_level", 0.0))
        rl_level = float(params.pop("rl_level", 0.0))
        _reject_unknown(params)
        if period < 2 or period % 2:
            raise ValueError("period must be a positive even interval count")
        phase = np.arange(n) % period
        spot = np.where(phase < period // 2, low, high).astype(np.float64)
        return spot, np.full(n, rr_level), np.full(n, rl_level)
    if profile == "mean-reverting":
        mean = float(params.pop("mean", 60.0))
        phi = float(params.pop("phi", 0.9))
        sigma = float(params.pop("sigma", 8.0))
        spike_prob = float(params.pop("spike_prob", 0.02))
        spike_scale = float(params.pop("spike_scale", 250.0))
        rr_mean = float(params.pop("rr_mean", 25.0))
        rl_mean = float(params.pop("rl_mean", 15.0))
        fcas_sigma = float(params.pop("fcas_sigma", 3.0))
        _reject_unknown(params)
        spot = _ar1(rng, n, mean, phi, sigma)
        spikes = rng.uniform(0.5, 1.5, size=n) * spike_scale
        spot = spot + np.where(rng.uniform(size=n) < spike_prob, spikes, 0.0)
        rr = np.maximum(_ar1(rng, n, rr_mean, phi, fcas_sigma), 0.0)
        rl = np.maximum(_ar1(rng, n, rl_mean, phi, fcas_sigma), 0.0)
        return spot, rr, rl
    raise ValueError(f"unknown price profile: {profile!r}")


def _ar1(rng: np.random.Generator, n: int, mean: float, phi: float, sigma: float) -> np.ndarray:
    out = np.empty(n)
    level = mean
    for i in range(n):
        level = mean + phi * (level - mean) + rng.normal(0.0, sigma)
        out[i] = level
    return out


def _reject_unknown(params: dict) -> None:
    if params:
        raise ValueError(f"unknown profile parameters: {sorted(params)}")


def gen_synthetic_wind(
    n: int,
    p_wind_max: float,
    seed: int,
    mean: float | None = None,
    phi: float = 0.8,
    sigma: float | None = None,
) -> np.ndarray:
    """Bounded AR(1) wind generation trace clipped to [0, p_wind_max]."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    mu = 0.5 * p_wind_max if mean is None else mean
    sd = 0.15 * p_wind_max if sigma is None else sigma
    trace = _ar1(rng, n, mu, phi, sd)
    return np.clip(trace, 0.0, p_wind_max)


def make_ticks(
    spot: Sequence[float],
    rr: Sequence[float],
    rl: Sequence[float],
    wind: Sequence[float],
    cfg: SystemConfig,
    agc_seed: int = 0,
    start: str = "2025-01-01T00:00:00",
) -> list[MarketTick]:
    """Assemble aligned price/wind series into a tick stream with AGC traces."""
    n = len(spot)
    if not (len(rr) == len(rl) == len(wind) == n):
        raise ValueError("price and wind series must have equal length")
    t0 = datetime.fromisoformat(start)
    step = timedelta(hours=cfg.dt_hours)
    ticks = []
    for i in range(n):
        ticks.append(
            MarketTick(
                index=i,
                timestamp=(t0 + i * step).isoformat(),
                rho_s=float(spot[i]),
                rho_rr=float(rr[i]),
                rho_rl=float(rl[i]),
                p_wind_act=float(wind[i]),
                agc=agc_for_interval(agc_seed, i, cfg.agc_len),
            )
        )
    return ticks


def write_market_csv(ticks: Iterable[MarketTick], path: str) -> None:
    """Write ticks in the canonical schema. Floats use repr so a reload
    reproduces prices and wind bit for bit."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCHEMA)
        for t in ticks:
            writer.writerow([t.timestamp, repr(t.rho_s), repr(t.rho_rr), repr(t.rho_rl), repr(t.p_wind_act)])


def load_market_csv(
    path: str,
    cfg: SystemConfig,
    agc_seed: int = 0,
    agc_csv: str | None = None,
) -> list[MarketTick]:
    """Load a tick stream from the canonical CSV schema.

    Validates the header, numeric parsing, finiteness, timestamp monotonicity,
    and the wind range [0, p_wind_max]. AGC traces are synthesized from
    agc_seed unless an explicit AGC CSV override is given.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MarketCsvError(f"{path}: empty file, expected header {','.join(SCHEMA)}") from None
        if tuple(header) != SCHEMA:
            missing = [c for c in SCHEMA if c not in header]
            extra = [c for c in header if c not in SCHEMA]
            detail = []
            if missing:
                detail.append(f"missing column(s) {missing}")
            if extra:
                detail.append(f"unexpected column(s) {extra}")
            if not detail:
                detail.append("columns out of order")
            raise MarketCsvError(f"{path}: bad header: {'; '.join(detail)}")
        rows = []
        prev_ts: datetime | None = None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(SCHEMA):
                raise MarketCsvError(f"{path} row {lineno}: expected {len(SCHEMA)} fields, got {len(row)}")
            ts_text = row[0]
            try:
                ts = datetime.fromisoformat(ts_text)
            except ValueError:
                raise MarketCsvError(f"{path} row {lineno}: bad timestamp {ts_text!r}") from None
            if prev_ts is not None and ts <= prev_ts:
                raise MarketCsvError(f"{path} row {lineno}: timestamps must be strictly increasing")
            prev_ts = ts
            values = []
            for col, text in zip(SCHEMA[1:], row[1:]):
                try:
                    value = float(text)
                except ValueError:
                    raise MarketCsvError(f"{path} row {lineno}: column {col}: not a number: {text!r}") from None
                if not math.isfinite(value):
                    raise MarketCsvError(f"{path} row {lineno}: column {col}: non-finite value")
                values.append(value)
            wind = values[3]
            if not 0.0 <= wind <= cfg.p_wind_max:
                raise MarketCsvError(
                    f"{path} row {lineno}: wind_mw {wind} outside [0, {cfg.p_wind_max}]"
                )
            rows.append((ts_text, values))

    traces = None
    if agc_csv is not None:
        traces = load_agc_csv(agc_csv, cfg)
        if len(traces) < len(rows):
            raise MarketCsvError(
                f"{agc_csv}: {len(traces)} AGC rows cover fewer intervals than {len(rows)} market rows"
            )
    ticks = []
    for i, (ts_text, values) in enumerate(rows):
        agc = traces[i] if traces is not None else agc_for_interval(agc_seed, i, cfg.agc_len)
        ticks.append(MarketTick(i, ts_text, values[0], values[1], values[2], values[3], agc))
    return ticks


def agc_csv_header(cfg: SystemConfig) -> list[str]:
    return ["interval_index"] + [f"signal_{i}" for i in range(cfg.agc_len)]


def write_agc_csv(traces: Sequence[AgcTrace], path: str, cfg: SystemConfig) -> None:
    """Write per-interval AGC traces as interval_index,signal_0..signal_{L-1}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(agc_csv_header(cfg))
        for i, trace in enumerate(traces):
            writer.writerow([i] + [repr(float(s)) for s in trace.signals])


def load_agc_csv(path: str, cfg: SystemConfig) -> list[AgcTrace]:
    """Load explicit AGC traces; row i must carry interval_index i and exactly
    agc_len signals in [-1, 1]."""
    expected = agc_csv_header(cfg)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MarketCsvError(f"{path}: empty AGC file") from None
        if header != expected:
            raise MarketCsvError(
                f"{path}: bad AGC header, expected interval_index plus {cfg.agc_len} signal columns"
            )
        traces = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise MarketCsvError(f"{path} row {lineno}: expected {len(expected)} fields, got {len(row)}")
            try:
                idx = int(row[0])
                signals = [float(x) for x in row[1:]]
            except ValueError:
                raise MarketCsvError(f"{path} row {lineno}: non-numeric value") from None
            if idx != lineno - 2:
                raise MarketCsvError(f"{path} row {lineno}: interval_index {idx} out of sequence")
            try:
                traces.append(AgcTrace(signals))
            except ValueError as exc:
                raise MarketCsvError(f"{path} row {lineno}: {exc}") from None
    return traces


def split_train_eval(
    ticks: Sequence[MarketTick], ratio: float
) -> tuple[list[MarketTick], list[MarketTick]]:
    """Chronological split: first floor(n * ratio) ticks train, rest evaluate.

    The floor is taken with a tiny epsilon guard so ratios like 11/12 of 12
    intervals land on the intended integer.
    """
    if not ticks:
        raise ValueError("cannot split an empty tick stream")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    n_train = int(math.floor(len(ticks) * ratio + 1e-9))
    return list(ticks[:n_train]), list(ticks[n_train:])


class EmaTracker:
    """Exponential moving average with spec smoothing: v <- tau*v + (1-tau)*x.

    The first observation initializes the average directly.
    """

    __slots__ = ("tau", "value")

    def __init__(self, tau: float):
        if not 0.0 <= tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        self.tau = tau
        self.value: float | None = None

    def update(self, x: float) -> float:
        if self.value is None:
            self.value = float(x)
        else:
            self.value = self.tau * self.value + (1.0 - self.tau) * x
        return self.value


class CurtailmentWindow:
    """Curtailment occurrence frequency over the latest m intervals.

    During warm-up the denominator is the number of intervals seen so far.
    """

    __slots__ = ("flags",)

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("window length must be at least 1")
        self.flags: deque[bool] = deque(maxlen=m)

    def push(self, occurred: bool) -> float:
        self.flags.append(bool(occurred))
        return sum(self.flags) / len(self.flags)

    @property
    def frequency(self) -> float:
        if not self.flags:
            return 0.0
        return sum(self.flags) / len(self.flags)
