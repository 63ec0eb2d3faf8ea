"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line with the measured
numbers. The optimization runs are shared through module-scoped fixtures, so
the whole module takes roughly 20 minutes on one core.
"""

import time

import numpy as np
import pytest

from flexwave import cli
from flexwave.channel import ChannelRealization, apply_channel, noise_from_ebn0
from flexwave.config import ExperimentConfig
from flexwave.experiments import ber_sweep, papr_ccdf
from flexwave.link import ofdm_link_ber
from flexwave.metrics import time_concentration
from flexwave.modem import qam, qam_ber_awgn
from flexwave.transceiver import FrameConfig, effective_channel, matched_filter, modulate

from conftest import crandn
from oracles import full_chain_error, smooth_instance

RMS_NS = (10.0, 130.0, 250.0, 580.0)
C16 = qam(4)


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return report


@pytest.fixture(scope="module")
def ccdf_runs():
    """Desk-scale CCDF runs at the four delay spreads (S = 64, 500 steps, seed 0)."""
    cfg = ExperimentConfig().replace(channel__rms_ds_ns=list(RMS_NS),
                                     run__schemes=["learned", "ofdm"])
    assert cfg.optim.batch_size == 64 and cfg.optim.steps == 500
    return papr_ccdf(cfg)


@pytest.fixture(scope="module")
def ber_runs():
    """Eb/N0 = 20 dB over 100 channels from the default delay-spread mixture."""
    cfg = ExperimentConfig().replace(noise__ebn0_db=[20.0], run__schemes=["learned", "ofdm"])
    assert cfg.run.ber_channels == 100
    return ber_sweep(cfg)


def test_criterion_1_gradient(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2025)
    errors = [full_chain_error(*smooth_instance(rng, 8)) for _ in range(20)]
    elapsed = time.perf_counter() - start
    worst = max(errors)
    verdict(1, worst < 1e-5 and elapsed < 60,
            f"max relative error {worst:.2e} over 20 instances at N=8, {elapsed:.1f} s")


def test_criterion_2_chain_equivalence(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for N in (4, 8, 16):
        frame = FrameConfig(N, N // 4, 1)
        for _ in range(100):
            Q = crandn(rng, N, N)
            taps = crandn(rng, rng.integers(1, frame.cp_len + 2))
            h = ChannelRealization(taps, 0.0, 1e6)
            x = crandn(rng, N)
            chain = matched_filter(apply_channel(modulate(Q, x, frame), h), Q, frame)
            worst = max(worst, np.max(np.abs(chain - effective_channel(Q, h, frame) @ x)))
    verdict(2, worst < 1e-9, f"max deviation {worst:.2e} over 300 draws")


def test_criterion_3_ofdm_special_case(verdict):
    frame = FrameConfig(32, 8, 7813)
    h = ChannelRealization.identity()
    lines, ok = [], True
    for ebn0 in (6.0, 10.0, 14.0):
        stats = ofdm_link_ber(h, frame, noise_from_ebn0(ebn0, 4).N0,
                              np.random.default_rng(int(ebn0)), C16)
        p = qam_ber_awgn(ebn0)
        sigma = np.sqrt(p * (1 - p) / stats.bits_total)
        ok &= stats.bits_total >= 1_000_000 and abs(stats.ber - p) <= 3 * sigma
        lines.append(f"{ebn0:g} dB: {stats.ber:.3e} vs {p:.3e} ({(stats.ber - p) / sigma:+.1f} sigma)")
    verdict(3, ok, "; ".join(lines))


def test_criterion_4_power_every_step(verdict, ccdf_runs):
    traces = [b for item in ccdf_runs for b in item.learned.trace]
    worst = max(abs(b.power - 32) for b in traces)
    stage1 = sum(b.stage == 1 for b in ccdf_runs[0].learned.trace)
    verdict(4, worst <= 1e-9 and stage1 == 500,
            f"max |trace - N| = {worst:.1e} over {len(traces)} steps")


def test_criterion_5_papr(verdict, ccdf_runs):
    gaps = {item.rms_ns: item.quantiles_db["ofdm"] - item.quantiles_db["learned"]
            for item in ccdf_runs}
    ok = gaps[10.0] >= 1.0 and all(g > 0 for g in gaps.values())
    detail = ", ".join(f"{r:g} ns: {ccdf_runs[i].quantiles_db['learned']:.2f} vs "
                       f"{ccdf_runs[i].quantiles_db['ofdm']:.2f} dB"
                       for i, r in enumerate(gaps))
    verdict(5, ok, f"PAPR at 1e-1 learned vs OFDM: {detail}")


def test_criterion_6_delay_spread_adaptation(verdict, ccdf_runs):
    conc = {item.rms_ns: time_concentration(item.learned.Q) for item in ccdf_runs}
    verdict(6, conc[10.0] > conc[580.0],
            f"time concentration {conc[10.0]:.4f} at 10 ns vs {conc[580.0]:.4f} at 580 ns")


def test_criterion_7_reliability(verdict, ber_runs):
    totals, _ = ber_runs
    learned, ofdm = totals["learned"][0], totals["ofdm"][0]
    sigma = np.sqrt(sum(s.ber * (1 - s.ber) / s.bits_total for s in (learned, ofdm)))
    verdict(7, learned.ber <= ofdm.ber + 2 * sigma,
            f"BER at 20 dB learned {learned.ber:.3e} vs OFDM {ofdm.ber:.3e}, "
            f"2 sigma = {2 * sigma:.1e}, {learned.bits_total} bits")


def test_criterion_8_bounds(verdict, ccdf_runs, ber_runs):
    cfg = ExperimentConfig().optim
    results = [i.learned for i in ccdf_runs] + [i.learned for i in ber_runs[1]]
    bad = 0
    for res in results:
        for b in res.trace:
            lo, hi = cfg.eps_bounds if b.stage == 1 else cfg.fine_tune_eps_bounds
            bad += not lo <= b.eps_db <= hi
            bad += not all(-10 <= s <= 10 for s in (b.sigma_R, b.sigma_P, b.sigma_T))
    steps = sum(len(r.trace) for r in results)
    verdict(8, bad == 0 and (cfg.eps_bounds, cfg.fine_tune_eps_bounds) == ((2, 8), (2, 6)),
            f"{bad} violations over {len(results)} runs, {steps} steps")


def test_criterion_9_determinism(verdict, tmp_path):
    outs = {}
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        assert cli.main(["papr-ccdf", "--seed", "17", "--workers", str(workers),
                         "--out-dir", str(out)]) == 0
        outs[workers] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
    same = outs[1] == outs[8] and len(outs[1]) == 12
    verdict(9, same, f"{len(outs[1])} CSVs compared byte for byte")
