"""Monte-Carlo link runs for the learned scheme and the two baselines."""

from __future__ import annotations

import numpy as np

from .channel import ChannelRealization, add_awgn, apply_channel
from .metrics import BerStats, PaprSamples, ber, papr_columns
from .modem import Constellation, demap_llr, hard_decisions, map_bits, random_bits
from .scfde import rrc_taps, scfde_reference, scfde_transmit
from .transceiver import FrameConfig, detect, idft_matrix, matched_filter, modulate, ofdm_reference

SCHEMES = ("learned", "ofdm", "scfde")


def basis_papr(Q: np.ndarray, n_blocks: int, rng: np.random.Generator, c: Constellation,
               chunk: int = 4096, cp_len: int = 0) -> PaprSamples:
    """PAPR of ``n_blocks`` random bodies ``Q x``.

    With ``cp_len > 0`` the cyclic prefix is prepended before measuring, so
    the mean power includes the repeated tail samples.
    """
    N = Q.shape[0]
    out = []
    for start in range(0, n_blocks, chunk):
        n = min(chunk, n_blocks - start)
        X = map_bits(random_bits(rng, (N, n, c.bits_per_symbol)), c)
        body = Q @ X
        if cp_len:
            body = np.concatenate([body[N - cp_len:], body])
        out.append(papr_columns(body))
    return PaprSamples(np.concatenate(out))


def scfde_papr(cfg: FrameConfig, n_blocks: int, rng: np.random.Generator, c: Constellation,
               chunk: int = 1024) -> PaprSamples:
    g = rrc_taps()
    out = []
    for start in range(0, n_blocks, chunk):
        n = min(chunk, n_blocks - start)
        frame = FrameConfig(cfg.N, cfg.cp_len, n, cfg.sample_rate)
        x = map_bits(random_bits(rng, (n * cfg.N, c.bits_per_symbol)), c)
        out.append(scfde_transmit(x, frame, g)[1])
    return PaprSamples(np.concatenate(out))


def linear_link_ber(Q: np.ndarray, q: np.ndarray, h: ChannelRealization, cfg: FrameConfig,
                    N0: float, rng: np.random.Generator, c: Constellation) -> BerStats:
    """One frame through modulate -> channel -> AWGN -> matched filter -> detector.

    Hard decisions come from the sign of the exact LLRs computed with the
    nominal post-detection variance ``N0 |q_n|^2``.
    """
    bits = random_bits(rng, (cfg.blocks * cfg.N, c.bits_per_symbol))
    xt = modulate(Q, map_bits(bits, c), cfg)
    y = add_awgn(apply_channel(xt, h), N0, rng)
    x_hat = detect(matched_filter(y, Q, cfg), q)
    noise_var = np.tile(N0 * np.abs(q) ** 2, cfg.blocks)
    llr = demap_llr(x_hat, np.maximum(noise_var, 1e-300), c)
    return ber(bits, hard_decisions(llr))


def ofdm_link_ber(h, cfg, N0, rng, c) -> BerStats:
    Q, q = ofdm_reference(cfg, h, N0)
    return linear_link_ber(Q, q, h, cfg, N0, rng, c)


def scfde_link_ber(h, cfg, N0, rng, c) -> BerStats:
    bits = random_bits(rng, (cfg.blocks * cfg.N, c.bits_per_symbol))
    bits_hat, _ = scfde_reference(bits, cfg, h, N0, rng, c)
    return ber(bits, bits_hat)


