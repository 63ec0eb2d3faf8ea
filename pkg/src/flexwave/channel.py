"""Tapped-delay-line multipath channels, convolution and AWGN."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DomainError
from .numerics import Tensor, ops

NORMALIZE_MODES = ("per-realization", "ensemble")


@dataclass(frozen=True)
class TdlProfile:
    """Power-delay profile with delays in units of the RMS delay spread."""

    name: str
    delays: np.ndarray
    powers_db: np.ndarray

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        powers = np.asarray(self.powers_db, dtype=float)
        if delays.ndim != 1 or delays.size == 0 or delays.shape != powers.shape:
            raise ConfigError(f"profile {self.name!r}: need matching non-empty delay/power lists")
        if np.any(delays < 0):
            raise ConfigError(f"profile {self.name!r}: negative delay")
        order = np.argsort(delays, kind="stable")
        object.__setattr__(self, "delays", delays[order])
        object.__setattr__(self, "powers_db", powers[order])

    @property
    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (self.powers_db / 10.0)
        return p / p.sum()

    def rms_delay_spread(self) -> float:
        """RMS delay spread of the profile in normalized units."""
        return rms_delay_spread(self.delays, self.linear_powers)


def rms_delay_spread(delays, powers) -> float:
    delays = np.asarray(delays, dtype=float)
    w = np.asarray(powers, dtype=float)
    w = w / w.sum()
    mean = np.sum(w * delays)
    return float(np.sqrt(max(np.sum(w * delays**2) - mean**2, 0.0)))


def load_profile(path: str | Path) -> TdlProfile:
    """Read a ``delay_norm,power_db`` CSV."""
    path = Path(path)
    try:
        with path.open(newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or set(reader.fieldnames) != {"delay_norm", "power_db"}:
                raise ConfigError(f"{path}: header must be 'delay_norm,power_db'")
            rows = [(float(r["delay_norm"]), float(r["power_db"])) for r in reader]
    except FileNotFoundError as exc:
        raise ConfigError(f"profile file not found: {path}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no taps")
    d, p = zip(*rows)
    return TdlProfile(path.stem, np.array(d), np.array(p))


def tdl_a() -> TdlProfile:
    """The bundled TDL-A normalized profile."""
    ref = resources.files("flexwave") / "data" / "tdl_a.csv"
    with resources.as_file(ref) as path:
        prof = load_profile(path)
    return TdlProfile("tdl-a", prof.delays, prof.powers_db)


def exponential_profile(n_taps: int = 12) -> TdlProfile:
    """Synthetic profile: unit-spaced taps with power proportional to ``exp(-delay)``."""
    d = np.arange(n_taps, dtype=float)
    return TdlProfile("exponential", d, 10.0 * np.log10(np.exp(-d)))


BUILTIN_PROFILES = {"tdl-a": tdl_a, "exponential": exponential_profile}


def get_profile(name_or_path: str) -> TdlProfile:
    if name_or_path in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name_or_path]()
    return load_profile(name_or_path)


@dataclass(frozen=True)
class ChannelRealization:
    """Sample-spaced complex tap gains; ``taps[l]`` acts at delay ``l`` samples."""

    taps: np.ndarray
    rms_ds: float
    sample_rate: float

    @property
    def length(self) -> int:
        return len(self.taps)

    @classmethod
    def identity(cls, sample_rate: float = 1e6) -> "ChannelRealization":
        return cls(np.array([1.0 + 0j]), 0.0, sample_rate)

    def frequency_response(self, n: int) -> np.ndarray:
        """``H_k = sum_l taps[l] exp(-2j pi l k / n)``."""
        return np.fft.fft(self.taps, n)


def sample_channel(
    profile: TdlProfile,
    rms_ds: float,
    sample_rate: float,
    rng: np.random.Generator,
    max_len: int | None = None,
    normalize: str = "per-realization",
) -> ChannelRealization:
    """Draw one Rayleigh realization of ``profile`` scaled to ``rms_ds`` seconds.

    Every path gets an independent circular Gaussian gain whose variance is its
    linear power. Path delays are rounded to the nearest sample; paths landing
    on the same sample add.

    Args:
        max_len: longest allowed tap vector (typically the cyclic-prefix length).
        normalize: ``"per-realization"`` rescales every draw to unit energy;
            ``"ensemble"`` keeps the raw draw (unit energy only on average).

    Raises:
        ConfigError: the discretized channel is longer than ``max_len``, or an
            unknown normalize mode.
    """
    if sample_rate <= 0:
        raise DomainError(f"sample_rate must be positive, got {sample_rate}")
    if rms_ds < 0:
        raise DomainError(f"rms_ds must be non-negative, got {rms_ds}")
    if normalize not in NORMALIZE_MODES:
        raise ConfigError(f"normalize must be one of {NORMALIZE_MODES}, got {normalize!r}")
    powers = profile.linear_powers
    gains = np.sqrt(powers / 2.0) * (rng.standard_normal(powers.size)
                                     + 1j * rng.standard_normal(powers.size))
    sample_delays = np.rint(profile.delays * rms_ds * sample_rate).astype(int)
    length = int(sample_delays.max()) + 1
    if max_len is not None and length > max_len:
        raise ConfigError(
            f"channel spans {length} samples at rms_ds={rms_ds:g} s, "
            f"sample_rate={sample_rate:g} Hz, but cp_len allows {max_len}"
        )
    taps = np.zeros(length, dtype=np.complex128)
    np.add.at(taps, sample_delays, gains)
    if normalize == "per-realization":
        taps = taps / np.sqrt(np.sum(np.abs(taps) ** 2))
    return ChannelRealization(taps, float(rms_ds), float(sample_rate))


def convolution_matrix(taps: np.ndarray, n: int) -> np.ndarray:
    """Lower-triangular Toeplitz matrix of the truncated linear convolution."""
    m = np.zeros((n, n), dtype=np.complex128)
    for lag, a in enumerate(np.asarray(taps)[:n]):
        m += a * np.eye(n, k=-lag)
    return m


def circulant(taps: np.ndarray, n: int) -> np.ndarray:
    """``C[i, k] = taps[(i - k) mod n]`` for taps shorter than ``n``."""
    col = np.zeros(n, dtype=np.complex128)
    col[: len(taps)] = taps
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def apply_channel(xt, h: ChannelRealization):
    """Linear convolution with the taps, truncated to the input length.

    Works on 1-D sample streams (array or tensor). Arrays may also be 2-D, in
    which case each column is filtered independently.
    """
    if isinstance(xt, Tensor):
        return ops.matmul(convolution_matrix(h.taps, xt.shape[0]), xt)
    xt = np.asarray(xt)
    return lfilter(h.taps, [1.0], xt.astype(np.complex128), axis=0)


@dataclass(frozen=True)
class NoiseSpec:
    ebn0_db: float
    N0: float
    Es: float


def noise_from_ebn0(ebn0_db: float, M: int, Es: float = 1.0) -> NoiseSpec:
    """``N0 = Es / (M * Eb/N0)`` with Eb/N0 given in dB."""
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    if Es <= 0:
        raise DomainError(f"Es must be positive, got {Es}")
    return NoiseSpec(float(ebn0_db), Es / (M * 10.0 ** (ebn0_db / 10.0)), float(Es))


def complex_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circular complex Gaussian samples with the given total variance."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_awgn(y, N0: float, rng: np.random.Generator):
    """Add circular AWGN of variance ``N0`` per sample."""
    if N0 < 0:
        raise DomainError(f"N0 must be non-negative, got {N0}")
    noise = complex_gaussian(rng, np.shape(y.data if isinstance(y, Tensor) else y), N0)
    if isinstance(y, Tensor):
        return y + noise
    return np.asarray(y) + noise
