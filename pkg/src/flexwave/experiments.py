"""Experiment drivers shared by the CLI and the acceptance tests.

Every unit of work draws its randomness from ``derived_rng(seed, label, key)``
so that results do not depend on which worker ran it or in what order.
Pools return results in submission order and accumulators are merged in
that order, which keeps CSV outputs byte-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import ChannelRealization, get_profile, noise_from_ebn0, sample_channel
from .config import ExperimentConfig
from .link import basis_papr, linear_link_ber, ofdm_link_ber, scfde_link_ber, scfde_papr
from .metrics import (BerStats, CcdfCurve, ccdf, frequency_concentration,
                      time_concentration)
from .modem import Constellation, qam
from .optimizer import OptimResult, optimize_for_channel
from .seeding import derived_rng
from .transceiver import idft_matrix


def rms_key(rms_ns: float) -> int:
    """Integer stream key for a delay spread (picosecond resolution)."""
    return int(round(rms_ns * 1000))


def ebn0_key(ebn0_db: float) -> int:
    return int(round(ebn0_db * 1000))


def constellation(cfg: ExperimentConfig) -> Constellation:
    return qam(cfg.modem.M)


def draw_channel(cfg: ExperimentConfig, rms_ns: float, *keys) -> ChannelRealization:
    """One realization at ``rms_ns``; must fit inside the cyclic prefix."""
    return sample_channel(
        get_profile(cfg.channel.profile), rms_ns * 1e-9, cfg.frame.sample_rate,
        derived_rng(cfg.run.seed, "channel", *keys), max_len=cfg.frame.cp_len + 1,
        normalize=cfg.channel.normalize,
    )


def learn(cfg: ExperimentConfig, h: ChannelRealization, *keys) -> OptimResult:
    seed = int(derived_rng(cfg.run.seed, "optim", *keys).integers(2**62))
    optim = dataclasses.replace(cfg.optim, seed=seed)
    return optimize_for_channel(h, cfg.frame.frame(1), optim, constellation(cfg))


def run_pool(fn: Callable, items: Sequence, workers: int) -> list:
    """``[fn(item) for item in items]``, optionally across processes, in order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- PAPR CCDF


@dataclass
class CcdfItem:
    rms_ns: float
    curves: dict[str, CcdfCurve]
    quantiles_db: dict[str, float]
    learned: OptimResult | None


def ccdf_item(args: tuple[ExperimentConfig, float]) -> CcdfItem:
    cfg, rms_ns = args
    c = constellation(cfg)
    key = rms_key(rms_ns)
    n = cfg.run.ccdf_blocks
    samples, learned = {}, None
    for scheme in cfg.run.schemes:
        # learned and OFDM bases see the same symbols, so their gap is paired
        label = "scfde" if scheme == "scfde" else "basis"
        rng = derived_rng(cfg.run.seed, "ccdf", label, key)
        if scheme == "learned":
            learned = learn(cfg, draw_channel(cfg, rms_ns, key), key)
            samples[scheme] = basis_papr(learned.Q, n, rng, c)
        elif scheme == "ofdm":
            samples[scheme] = basis_papr(idft_matrix(cfg.frame.N), n, rng, c)
        else:
            samples[scheme] = scfde_papr(cfg.frame.frame(1), n, rng, c)
    return CcdfItem(
        rms_ns,
        {s: ccdf(v) for s, v in samples.items()},
        {s: v.quantile_db(0.1) for s, v in samples.items()},
        learned,
    )


def papr_ccdf(cfg: ExperimentConfig) -> list[CcdfItem]:
    items = [(cfg, r) for r in cfg.channel.rms_ds_ns]
    return run_pool(ccdf_item, items, cfg.run.workers)


# ---------------------------------------------------------------- BER sweep


@dataclass
class BerItem:
    rms_ns: float
    stats: dict[str, list[BerStats]]  # per scheme, one entry per Eb/N0 point
    learned: OptimResult | None = None


def ber_item(args: tuple[ExperimentConfig, int]) -> BerItem:
    """All schemes and Eb/N0 points on channel realization ``index``."""
    cfg, index = args
    c = constellation(cfg)
    lo, hi = cfg.channel.rms_range_ns
    rms_ns = float(derived_rng(cfg.run.seed, "ber-rms", index).uniform(lo, hi))
    h = draw_channel(cfg, rms_ns, "ber", index)
    frame = cfg.frame.frame()
    learned = learn(cfg, h, "ber", index) if "learned" in cfg.run.schemes else None
    stats: dict[str, list[BerStats]] = {s: [] for s in cfg.run.schemes}
    for ebn0 in cfg.noise.ebn0_db:
        N0 = noise_from_ebn0(ebn0, cfg.modem.M).N0
        for scheme in cfg.run.schemes:
            rng = derived_rng(cfg.run.seed, "ber", scheme, index, ebn0_key(ebn0))
            if scheme == "learned":
                s = linear_link_ber(learned.Q, learned.q, h, frame, N0, rng, c)
            elif scheme == "ofdm":
                s = ofdm_link_ber(h, frame, N0, rng, c)
            else:
                s = scfde_link_ber(h, frame, N0, rng, c)
            stats[scheme].append(s)
    return BerItem(rms_ns, stats, learned)


def merge_ber(items: Iterable[BerItem], schemes: Sequence[str], n_points: int):
    """Sum per-channel statistics in item order."""
    total = {s: [BerStats() for _ in range(n_points)] for s in schemes}
    for item in items:
        for s in schemes:
            total[s] = [a + b for a, b in zip(total[s], item.stats[s])]
    return total


def ber_sweep(cfg: ExperimentConfig) -> tuple[dict[str, list[BerStats]], list[BerItem]]:
    items = run_pool(ber_item, [(cfg, i) for i in range(cfg.run.ber_channels)],
                     cfg.run.workers)
    return merge_ber(items, cfg.run.schemes, len(cfg.noise.ebn0_db)), items


# ---------------------------------------------------------------- waveforms


@dataclass
class WaveformItem:
    rms_ns: float
    Q: np.ndarray
    eps_db: float
    time_conc: float
    freq_conc: float


def waveform_item(args: tuple[ExperimentConfig, float]) -> WaveformItem:
    cfg, rms_ns = args
    key = rms_key(rms_ns)
    res = learn(cfg, draw_channel(cfg, rms_ns, key), key)
    return WaveformItem(rms_ns, res.Q, res.eps_db, time_concentration(res.Q),
                        frequency_concentration(res.Q))


def waveform_report(cfg: ExperimentConfig) -> list[WaveformItem]:
    items = [(cfg, r) for r in cfg.channel.rms_ds_ns]
    return run_pool(waveform_item, items, cfg.run.workers)
