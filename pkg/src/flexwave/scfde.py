"""Single-carrier block transmission with frequency-domain equalization.

Symbols are framed into CP-prefixed blocks at the symbol rate, pulse shaped
with a root-raised-cosine filter at ``sps`` samples per symbol, passed through
the channel (tap delays scaled to the oversampled rate), matched filtered,
downsampled and equalized per block with a one-tap MMSE per DFT bin.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .channel import ChannelRealization, complex_gaussian
from .errors import ShapeError
from .modem import Constellation, bits_to_indices
from .transceiver import FrameConfig, ZF_FLOOR

ROLLOFF = 0.15
OVERSAMPLING = 2
SPAN = 8


def rrc_taps(rolloff: float = ROLLOFF, span: int = SPAN, sps: int = OVERSAMPLING) -> np.ndarray:
    """Root-raised-cosine impulse response, ``span * sps + 1`` taps, unit energy."""
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    h = np.empty_like(t)
    b = rolloff
    for i, ti in enumerate(t):
        if np.isclose(ti, 0.0):
            h[i] = 1.0 - b + 4.0 * b / np.pi
        elif b > 0 and np.isclose(abs(ti), 1.0 / (4.0 * b)):
            h[i] = (b / np.sqrt(2.0)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                         + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
        else:
            h[i] = (np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))) / (
                np.pi * ti * (1 - (4 * b * ti) ** 2))
    return h / np.linalg.norm(h)


def _frame_symbols(symbols: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    blocks = symbols.reshape(cfg.blocks, cfg.N)
    return np.concatenate([blocks[:, cfg.N - cfg.cp_len:], blocks], axis=1).reshape(-1)


def scfde_transmit(symbols: np.ndarray, cfg: FrameConfig, g: np.ndarray | None = None,
                   sps: int = OVERSAMPLING) -> tuple[np.ndarray, np.ndarray]:
    """Oversampled transmit signal and the PAPR (linear) of each block body."""
    symbols = np.asarray(symbols)
    if symbols.shape != (cfg.blocks * cfg.N,):
        raise ShapeError(f"expected {cfg.blocks * cfg.N} symbols, got {symbols.shape}")
    g = rrc_taps(sps=sps) if g is None else g
    up = np.zeros(cfg.blocks * cfg.block_len * sps, dtype=np.complex128)
    up[::sps] = _frame_symbols(symbols, cfg)
    tx = np.convolve(up, g)
    delay = (len(g) - 1) // 2
    starts = delay + sps * (np.arange(cfg.blocks) * cfg.block_len + cfg.cp_len)
    bodies = tx[starts[:, None] + np.arange(sps * cfg.N)[None, :]]
    power = np.abs(bodies) ** 2
    return tx, power.max(axis=1) / power.mean(axis=1)


def scfde_receive(rx: np.ndarray, cfg: FrameConfig, h: ChannelRealization, N0: float,
                  g: np.ndarray | None = None, sps: int = OVERSAMPLING) -> np.ndarray:
    """Matched filter, downsample and MMSE-equalize; returns unbiased symbol estimates."""
    g = rrc_taps(sps=sps) if g is None else g
    z = np.convolve(rx, g[::-1].conj())
    first = len(g) - 1  # cascaded delay of the two filters
    y = z[first: first + sps * cfg.blocks * cfg.block_len: sps]
    Y = np.fft.fft(y.reshape(cfg.blocks, cfg.block_len)[:, cfg.cp_len:], axis=1)
    H = h.frequency_response(cfg.N)
    W = np.conj(H) / (np.abs(H) ** 2 + max(N0, ZF_FLOOR))
    bias = np.mean(W * H).real
    return (np.fft.ifft(W * Y, axis=1) / bias).reshape(-1)


def nearest_labels(x: np.ndarray, c: Constellation) -> np.ndarray:
    idx = np.argmin(np.abs(x[:, None] - c.points[None, :]), axis=1)
    return c.labels[idx]


def scfde_reference(bits: np.ndarray, cfg: FrameConfig, h: ChannelRealization, N0: float,
                    rng: np.random.Generator, c: Constellation) -> tuple[np.ndarray, np.ndarray]:
    """Run one SC/FDE frame.

    Args:
        bits: ``(blocks * N, M)`` bit array.

    Returns:
        ``(bits_hat, papr)``: hard-decided bits with the shape of ``bits`` and
        the linear PAPR of every oversampled block body.
    """
    bits = np.asarray(bits)
    symbols = c.points[bits_to_indices(bits, c.bits_per_symbol)]
    g = rrc_taps()
    tx, papr = scfde_transmit(symbols, cfg, g)
    h_os = np.zeros(OVERSAMPLING * (h.length - 1) + 1, dtype=np.complex128)
    h_os[::OVERSAMPLING] = h.taps
    rx = lfilter(h_os, [1.0], tx)
    rx = rx + complex_gaussian(rng, rx.shape, N0)
    x_hat = scfde_receive(rx, cfg, h, N0, g)
    return nearest_labels(x_hat, c), papr
