"""PAPR, CCDF and bit-error measurement with mergeable accumulators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, ShapeError

DEFAULT_THRESHOLDS_DB = np.round(np.arange(0.0, 12.0 + 1e-9, 0.1), 10)


def papr(block) -> float:
    """Peak-to-average power ratio (linear) of one block of samples."""
    p = np.abs(np.asarray(block)) ** 2
    if p.size == 0:
        raise DegenerateInputError("empty block")
    mean = p.mean()
    if mean == 0:
        raise DegenerateInputError("all-zero block has no PAPR")
    return float(p.max() / mean)


def papr_columns(blocks: np.ndarray) -> np.ndarray:
    """PAPR of every column of an ``(N, blocks)`` array."""
    p = np.abs(np.asarray(blocks)) ** 2
    mean = p.mean(axis=0)
    if np.any(mean == 0):
        raise DegenerateInputError("all-zero block has no PAPR")
    return p.max(axis=0) / mean


def to_db(x):
    return 10.0 * np.log10(x)


@dataclass
class PaprSamples:
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)

    def __len__(self) -> int:
        return self.values.size

    def merge(self, other: "PaprSamples") -> "PaprSamples":
        return PaprSamples(np.concatenate([self.values, other.values]))

    def quantile_db(self, prob: float) -> float:
        """Threshold (dB) at which the empirical CCDF equals ``prob``."""
        return float(to_db(np.quantile(self.values, 1.0 - prob)))


@dataclass(frozen=True)
class CcdfCurve:
    thresholds_db: np.ndarray
    prob: np.ndarray
    n_samples: int

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["threshold_db", "prob", "n"])
            for t, p in zip(self.thresholds_db, self.prob):
                w.writerow([f"{t:.2f}", repr(float(p)), self.n_samples])


def ccdf(samples: PaprSamples | np.ndarray, thresholds_db=DEFAULT_THRESHOLDS_DB) -> CcdfCurve:
    """Empirical ``P(PAPR > threshold)`` at each threshold (dB)."""
    values = samples.values if isinstance(samples, PaprSamples) else np.asarray(samples, float)
    if values.size == 0:
        raise DegenerateInputError("CCDF needs at least one sample")
    thr = np.asarray(thresholds_db, dtype=float)
    with np.errstate(over="ignore"):
        lin = 10.0 ** (thr / 10.0)
    sorted_vals = np.sort(values)
    exceed = values.size - np.searchsorted(sorted_vals, lin, side="right")
    return CcdfCurve(thr, exceed / values.size, int(values.size))


@dataclass(frozen=True)
class BerStats:
    bit_errors: int = 0
    bits_total: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total if self.bits_total else float("nan")

    def std_error(self) -> float:
        """Binomial standard error of the BER estimate."""
        p = self.ber
        return float(np.sqrt(p * (1 - p) / self.bits_total)) if self.bits_total else float("nan")

    def __add__(self, other: "BerStats") -> "BerStats":
        return BerStats(self.bit_errors + other.bit_errors, self.bits_total + other.bits_total)

    merge = __add__


def ber(bits, bits_hat) -> BerStats:
    a, b = np.asarray(bits).reshape(-1), np.asarray(bits_hat).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"bit streams differ in length: {a.size} vs {b.size}")
    return BerStats(int(np.count_nonzero(a != b)), int(a.size))


def write_ber_csv(path: str | Path, rows: list[tuple[float, BerStats, int]]) -> None:
    """``rows`` holds ``(ebn0_db, stats, channels_averaged)``."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ebn0_db", "ber", "bits", "errors", "channels_averaged"])
        for ebn0, stats, n_ch in rows:
            w.writerow([f"{ebn0:g}", repr(float(stats.ber)), stats.bits_total,
                        stats.bit_errors, n_ch])


def concentration(A: np.ndarray, top: int = 4) -> float:
    """Mean over columns of the energy fraction held by the ``top`` largest entries."""
    e = np.abs(np.asarray(A)) ** 2
    total = e.sum(axis=0)
    if np.any(total == 0):
        raise DegenerateInputError("zero column has no energy distribution")
    return float(np.mean(np.sort(e, axis=0)[-top:].sum(axis=0) / total))


def time_concentration(Q: np.ndarray, top: int = 4) -> float:
    """Energy fraction of each waveform in its ``top`` strongest samples."""
    return concentration(Q, top)


def frequency_concentration(Q: np.ndarray, top: int = 4) -> float:
    """Energy fraction of each waveform in its ``top`` strongest DFT bins."""
    return concentration(np.fft.fft(Q, axis=0), top)
