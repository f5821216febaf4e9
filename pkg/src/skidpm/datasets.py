"""Idle-period datasets: synthetic generators, trace ingestion and JSONL files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

DEFAULT_PERIODS = 10_000
DEFAULT_TARGET_MEAN = 2.0

# seconds per unit
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}


class DatasetError(ValueError):
    pass


@dataclass
class IdleDataset:
    lengths: np.ndarray
    predictions: Optional[np.ndarray] = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        if np.any(self.lengths < 0) or not np.all(np.isfinite(self.lengths)):
            raise DatasetError("idle lengths must be finite and non-negative")
        if self.predictions is not None:
            self.predictions = np.asarray(self.predictions, dtype=float)
            if self.predictions.shape != self.lengths.shape:
                raise DatasetError("predictions must align with lengths")
            if np.any(self.predictions < 0):
                raise DatasetError("predictions must be non-negative")

    def __len__(self):
        return len(self.lengths)


def gen_uniform(n: int = DEFAULT_PERIODS, hi: float = 4.0, seed: int = 0) -> IdleDataset:
    if n < 0 or hi <= 0:
        raise DatasetError("need n >= 0 and hi > 0")
    rng = np.random.default_rng(seed)
    return IdleDataset(rng.uniform(0.0, hi, n), source={"generator": "uniform", "hi": hi, "seed": seed})


def extract_idle(timestamps) -> np.ndarray:
    """Gaps between consecutive requests, dropping zero gaps."""
    ts = np.asarray(timestamps, dtype=float)
    if np.any(np.diff(ts) < 0):
        raise DatasetError("timestamps must be sorted")
    gaps = np.diff(ts)
    return gaps[gaps > 0]


def rescale(gaps, target_mean: float = DEFAULT_TARGET_MEAN) -> np.ndarray:
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        return gaps
    mean = gaps.mean()
    if mean <= 0:
        raise DatasetError("cannot rescale gaps with zero mean")
    return gaps * (target_mean / mean)


def load_trace(path, delimiter: Optional[str] = ",", column: int = 0, unit: str = "s",
               skip_rows: int = 0) -> np.ndarray:
    """Timestamps in seconds from a delimited text file, sorted.

    ``delimiter=None`` splits on whitespace. Blank lines and lines starting
    with ``#`` are ignored; ``skip_rows`` drops header lines.
    """
    if unit not in TIME_UNITS:
        raise DatasetError(f"unknown time unit {unit!r}; expected one of {sorted(TIME_UNITS)}")
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if lineno <= skip_rows:
                continue
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split() if delimiter is None else text.split(delimiter)
            try:
                values.append(float(fields[column]))
            except (IndexError, ValueError):
                raise DatasetError(f"{path}:{lineno}: cannot read timestamp from column {column}: {text!r}")
    if not values:
        raise DatasetError(f"{path}: no timestamps found")
    return np.sort(np.array(values)) * TIME_UNITS[unit]


def trace_dataset(path, delimiter: Optional[str] = ",", column: int = 0, unit: str = "s",
                  target_mean: float = DEFAULT_TARGET_MEAN, skip_rows: int = 0) -> IdleDataset:
    gaps = extract_idle(load_trace(path, delimiter, column, unit, skip_rows))
    scaled = rescale(gaps, target_mean)
    factor = float(scaled[0] / gaps[0]) if gaps.size else 1.0
    return IdleDataset(scaled, source={"generator": "trace", "file": str(path), "unit": unit,
                                       "scale_factor": factor, "target_mean": target_mean})


def save_jsonl(dataset: IdleDataset, path) -> None:
    """One header line with metadata, then one record per period."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": dataset.source, "n": len(dataset)}) + "\n")
        preds = dataset.predictions
        for i, length in enumerate(dataset.lengths):
            rec = {"length": float(length)}
            if preds is not None:
                rec["prediction"] = float(preds[i])
            fh.write(json.dumps(rec) + "\n")


def load_jsonl(path) -> IdleDataset:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(x) for x in lines[1:] if x.strip()]
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: malformed JSONL ({exc})")
    if "header" not in header:
        raise DatasetError(f"{path}: first line must be the header record")
    lengths = [r["length"] for r in records]
    with_pred = [("prediction" in r) for r in records]
    if any(with_pred) and not all(with_pred):
        raise DatasetError(f"{path}: predictions present for only some periods")
    preds = [r["prediction"] for r in records] if records and all(with_pred) else None
    return IdleDataset(np.array(lengths, dtype=float), None if preds is None else np.array(preds),
                       header["header"])
