"""Series/text ingestion, chronological splits, channel-independent sliding
windows with per-window normalization, and a seeded synthetic generator.

Leakage rules: a window's text rows and normalization statistics only read
values at or before the end of its lookback; targets are stored raw and
never enter the statistics.
"""

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import textenc

FREQUENCIES = ("monthly", "weekly", "daily", "none")

# horizon sets used per sampling frequency
HORIZON_SETS = {
    "monthly": (6, 8, 10, 12),
    "weekly": (12, 24, 36, 48),
    "daily": (48, 96, 192, 336),
}

STD_FALLBACK_THRESHOLD = 1e-8


class DataError(ValueError):
    """Malformed input data (exit code 2 at the CLI)."""


class ConfigError(ValueError):
    """Invalid configuration (exit code 2 at the CLI)."""


@dataclass
class SeriesTable:
    timestamps: np.ndarray                  # int64, strictly increasing
    channels: "dict[str, np.ndarray]"       # name -> float64 series
    frequency: str = "none"

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.timestamps.size > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DataError("SeriesTable: timestamps must be strictly increasing")
        if self.frequency not in FREQUENCIES:
            raise DataError(f"SeriesTable: unknown frequency tag {self.frequency!r}")
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=np.float64)
            if values.shape != self.timestamps.shape:
                raise DataError(
                    f"SeriesTable: channel {name!r} length {values.size} != "
                    f"{self.timestamps.size} timestamps")
            self.channels[name] = values

    @property
    def n_rows(self):
        return self.timestamps.size

    def slice_rows(self, start, stop):
        return SeriesTable(
            self.timestamps[start:stop],
            {k: v[start:stop] for k, v in self.channels.items()},
            self.frequency,
        )


def load_csv(path, frequency="none"):
    """Parse a series CSV: header row, first column "ts" (integer), the
    remaining columns numeric channels. Empty cells are forward-filled,
    leading gaps back-filled."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0].strip() != "ts":
            raise DataError(f"{path}: first header column must be 'ts', got {header[:1]}")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise DataError(f"{path}: no channel columns")
        ts, columns = [], [[] for _ in names]
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise DataError(f"{path}: row {row_num}: expected {len(names) + 1} cells")
            try:
                ts.append(int(row[0]))
            except ValueError:
                raise DataError(
                    f"{path}: row {row_num}: non-integer timestamp {row[0]!r}") from None
            for i, cell in enumerate(row[1:]):
                cell = cell.strip()
                if cell == "":
                    columns[i].append(np.nan)
                    continue
                try:
                    columns[i].append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_num}: non-numeric cell {cell!r} "
                        f"in column {names[i]!r}") from None
    if not ts:
        raise DataError(f"{path}: no data rows")
    ts = np.asarray(ts, dtype=np.int64)
    if ts.size > 1 and not np.all(np.diff(ts) > 0):
        bad = int(np.argmax(np.diff(ts) <= 0)) + 2
        raise DataError(f"{path}: row {bad + 1}: non-monotonic timestamp")
    channels = {}
    for name, col in zip(names, columns):
        values = _fill_gaps(np.asarray(col, dtype=np.float64))
        if np.isnan(values).any():
            raise DataError(f"{path}: column {name!r} is entirely empty")
        channels[name] = values
    return SeriesTable(ts, channels, frequency)


def _fill_gaps(values):
    # forward fill, then back-fill anything left at the head
    out = values.copy()
    last = np.nan
    for i, v in enumerate(out):
        if np.isnan(v):
            out[i] = last
        else:
            last = v
    mask = np.isnan(out)
    if mask.any() and not mask.all():
        first = out[~mask][0]
        out[mask] = first
    return out


def save_csv(table, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        names = list(table.channels)
        writer.writerow(["ts"] + names)
        for i in range(table.n_rows):
            writer.writerow([int(table.timestamps[i])]
                            + [repr(float(table.channels[n][i])) for n in names])


def split(table, ratios=(0.7, 0.1, 0.2), min_rows=None):
    """Chronological contiguous train/val/test split. With `min_rows` set
    (normally L+H), segments too short to hold one window are rejected."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"split: ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split: ratios must sum to 1, got {sum(ratios)}")
    n = table.n_rows
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    bounds = {
        "train": (0, n_train),
        "val": (n_train, n_train + n_val),
        "test": (n_train + n_val, n),
    }
    segments = {}
    for name, (a, b) in bounds.items():
        if min_rows is not None and b - a < min_rows:
            raise ConfigError(
                f"split: {name} segment has {b - a} rows, needs at least {min_rows}")
        segments[name] = table.slice_rows(a, b)
    return segments["train"], segments["val"], segments["test"]


@dataclass
class MultimodalWindow:
    """One training sample: normalized lookback, raw target, aligned text
    rows, and the statistics needed to undo the normalization."""

    channel: str
    lookback: np.ndarray        # normalized, length L
    target: np.ndarray          # raw, length H
    text: np.ndarray            # [L x d_lm]
    norm_mean: float
    norm_std: float
    timestamps: np.ndarray      # lookback timestamps, length L

    @property
    def stats(self):
        return (self.norm_mean, self.norm_std)

    @property
    def target_norm(self):
        return (self.target - self.norm_mean) / self.norm_std


def window_count(segment_len, lookback, horizon, stride=1):
    """Windows per channel in a segment."""
    if segment_len < lookback + horizon:
        return 0
    return (segment_len - lookback - horizon) // stride + 1


def compute_global_stats(table):
    """Per-channel mean/std over a (training) table, with the constant-series
    fallback, for the global normalization mode."""
    stats = {}
    for name, values in table.channels.items():
        mean = float(values.mean())
        std = float(values.std())
        if std < STD_FALLBACK_THRESHOLD:
            std = 1.0
        stats[name] = (mean, std)
    return stats


def make_windows(table, records, lookback, horizon, d_lm, stride=1,
                 norm_mode="instance", global_stats=None):
    """Channel-independent sliding windows over one table segment.

    Lookbacks are stored z-normalized (instance statistics by default,
    train-split statistics in global mode); targets stay raw. Text rows are
    carry-forward aligned using only records at or before each step.
    """
    if stride < 1:
        raise ConfigError(f"make_windows: stride must be >= 1, got {stride}")
    if norm_mode not in ("instance", "global"):
        raise ConfigError(f"make_windows: unknown normalization mode {norm_mode!r}")
    if norm_mode == "global" and global_stats is None:
        raise ConfigError("make_windows: global normalization needs global_stats")
    n = table.n_rows
    if n < lookback + horizon:
        raise DataError(
            f"make_windows: segment of {n} rows cannot hold a "
            f"{lookback}+{horizon} window")
    windows = []
    for name, values in table.channels.items():
        for pos in range(0, n - lookback - horizon + 1, stride):
            raw = values[pos : pos + lookback]
            target = values[pos + lookback : pos + lookback + horizon].copy()
            if norm_mode == "instance":
                mean = float(raw.mean())
                std = float(raw.std())
                if std < STD_FALLBACK_THRESHOLD:
                    std = 1.0
            else:
                mean, std = global_stats[name]
            ts = table.timestamps[pos : pos + lookback]
            windows.append(MultimodalWindow(
                channel=name,
                lookback=(raw - mean) / std,
                target=target,
                text=textenc.align_texts_to_window(records, ts, d_lm),
                norm_mean=mean,
                norm_std=std,
                timestamps=ts.copy(),
            ))
    return windows


def denormalize(pred, stats):
    """Undo window normalization: pred * std + mean."""
    mean, std = stats
    return np.asarray(pred, dtype=np.float64) * std + mean


# ---- synthetic generator ----------------------------------------------------


@dataclass
class SynthSpec:
    """Generator recipe: a sum of sinusoids (periods expressed as frequency
    bins of a reference window), one band optionally amplitude-toggled by a
    hidden square-wave regime whose changes emit that regime's vocabulary
    tokens, plus Gaussian noise."""

    length: int
    bands: list                      # [{"bin": int, "base_amp": float}, ...]
    regime: Optional[dict] = None    # {"bin": int, "factor": float, "period": int}
    noise_sigma: float = 0.0
    vocab: dict = field(default_factory=dict)   # regime state -> token string
    window: int = 24                 # reference window for bin periods
    channels: int = 1

    @classmethod
    def from_json(cls, obj):
        try:
            spec = cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"synth spec: {exc}") from exc
        spec.validate()
        return spec

    def validate(self):
        if self.length < 1:
            raise ConfigError("synth spec: length: must be positive")
        if self.window < 2:
            raise ConfigError("synth spec: window: must be >= 2")
        if self.channels < 1:
            raise ConfigError("synth spec: channels: must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("synth spec: noise_sigma: must be >= 0")
        if not self.bands:
            raise ConfigError("synth spec: bands: at least one band required")
        for i, band in enumerate(self.bands):
            if set(band) != {"bin", "base_amp"}:
                raise ConfigError(f"synth spec: bands[{i}]: expected keys bin, base_amp")
        if self.regime is not None:
            if set(self.regime) != {"bin", "factor", "period"}:
                raise ConfigError("synth spec: regime: expected keys bin, factor, period")
            if self.regime["period"] < 1:
                raise ConfigError("synth spec: regime.period: must be >= 1")
            if self.regime["bin"] not in [b["bin"] for b in self.bands]:
                raise ConfigError("synth spec: regime.bin: must match one of bands[].bin")
            for state in ("low", "high"):
                if state not in self.vocab:
                    raise ConfigError(f"synth spec: vocab.{state}: required with a regime")


def synth_generate(spec, seed=0):
    """Build (SeriesTable, texts) from a SynthSpec, deterministically for a
    given seed. Texts are (timestamp, string) pairs emitted at t=0 and at
    every regime change."""
    rng = np.random.default_rng(seed)
    t = np.arange(spec.length, dtype=np.float64)
    if spec.regime is not None:
        period = int(spec.regime["period"])
        state = (np.arange(spec.length) // period) % 2   # 0 low, 1 high
    else:
        state = np.zeros(spec.length, dtype=np.int64)

    channels = {}
    for c in range(spec.channels):
        y = np.zeros(spec.length, dtype=np.float64)
        for band in spec.bands:
            phase = rng.uniform(0, 2 * np.pi)
            amp = np.full(spec.length, float(band["base_amp"]))
            if spec.regime is not None and band["bin"] == spec.regime["bin"]:
                amp = amp * np.where(state == 1, float(spec.regime["factor"]), 1.0)
            y += amp * np.sin(2 * np.pi * band["bin"] * t / spec.window + phase)
        if spec.noise_sigma > 0:
            y += rng.normal(0.0, spec.noise_sigma, spec.length)
        channels[f"ch{c}"] = y

    texts = []
    if spec.regime is not None:
        names = {0: "low", 1: "high"}
        texts.append((0, spec.vocab[names[int(state[0])]]))
        for i in range(1, spec.length):
            if state[i] != state[i - 1]:
                texts.append((int(i), spec.vocab[names[int(state[i])]]))
    table = SeriesTable(np.arange(spec.length, dtype=np.int64), channels)
    return table, texts
