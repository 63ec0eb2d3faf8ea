"""Discrete signal chain for a learned waveform basis, plus the OFDM reference.

A frame is a 1-D stream of ``blocks`` transmit blocks. Each block carries
``N`` symbols on the columns of the waveform matrix ``Q`` and is preceded by a
cyclic prefix of ``cp_len`` samples. All chain functions accept numpy arrays
or tensors; with tensors the computation is recorded for differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, circulant
from .errors import ConfigError, ContractError, ShapeError
from .numerics import Tensor, ops, value_of

ZF_FLOOR = 1e-12


@dataclass(frozen=True)
class FrameConfig:
    N: int = 32
    cp_len: int = 8
    blocks: int = 1
    sample_rate: float = 1e6

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if not 0 <= self.cp_len < self.N:
            raise ConfigError(f"cp_len must satisfy 0 <= cp_len < N, got {self.cp_len}")
        if self.blocks < 1:
            raise ConfigError(f"blocks must be >= 1, got {self.blocks}")

    @property
    def block_len(self) -> int:
        return self.N + self.cp_len


def idft_matrix(n: int) -> np.ndarray:
    """Unitary inverse DFT matrix; column ``k`` is the tone ``exp(2j pi n k / N) / sqrt(N)``."""
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def _finish(out: Tensor, *inputs):
    return out if any(isinstance(a, Tensor) for a in inputs) else out.numpy()


def cp_rows(cfg: FrameConfig) -> np.ndarray:
    """Row selection that turns an N-sample body into [CP, body]."""
    return np.concatenate([np.arange(cfg.N - cfg.cp_len, cfg.N), np.arange(cfg.N)])


def modulate(Q, x, cfg: FrameConfig):
    """Map ``blocks * N`` symbols to ``blocks * (N + cp_len)`` time samples."""
    if value_of(x).shape != (cfg.blocks * cfg.N,):
        raise ShapeError(f"expected {cfg.blocks * cfg.N} symbols, got shape {value_of(x).shape}")
    X = ops.transpose(ops.reshape(x, (cfg.blocks, cfg.N)))  # (N, blocks)
    body = ops.matmul(Q, X)
    framed = ops.take(body, cp_rows(cfg), axis=0)
    return _finish(ops.reshape(ops.transpose(framed), (-1,)), Q, x)


def matched_filter(y, Q, cfg: FrameConfig):
    """Strip each block's CP and project the body onto the basis with ``Q^H``."""
    if value_of(y).shape != (cfg.blocks * cfg.block_len,):
        raise ShapeError(
            f"expected {cfg.blocks * cfg.block_len} samples, got shape {value_of(y).shape}"
        )
    Y = ops.transpose(ops.reshape(y, (cfg.blocks, cfg.block_len)))
    body = ops.getitem(Y, slice(cfg.cp_len, None))
    R = ops.matmul(ops.conj(ops.transpose(Q)), body)
    return _finish(ops.reshape(ops.transpose(R), (-1,)), y, Q)


def effective_channel(Q, h: ChannelRealization, cfg: FrameConfig):
    """``Q^H C Q`` with ``C`` the circulant matrix of the channel taps.

    Raises:
        ContractError: the channel is longer than the cyclic prefix can absorb.
    """
    if h.length - 1 > cfg.cp_len:
        raise ContractError(
            f"channel delay {h.length - 1} samples exceeds cp_len={cfg.cp_len}"
        )
    C = circulant(h.taps, cfg.N)
    Qt = ops.as_tensor(Q)
    return _finish(ops.matmul(ops.conj(ops.transpose(Qt)), ops.matmul(C, Qt)), Q)


def detect(r, q):
    """One-tap detection ``x_hat_n = r_n q_n`` applied block by block."""
    n = value_of(q).shape[0]
    if value_of(r).shape[0] % n:
        raise ShapeError(f"stream length {value_of(r).shape[0]} is not a multiple of N={n}")
    R = ops.reshape(r, (-1, n))
    return _finish(ops.reshape(R * ops.as_tensor(q), (-1,)), r, q)


def mmse_taps(H: np.ndarray, N0: float, unbiased: bool = True) -> np.ndarray:
    """Per-subcarrier one-tap MMSE coefficients.

    The plain MMSE tap is ``H* / (|H|^2 + N0)``, with ``N0`` floored at
    ``ZF_FLOOR``. It shrinks the detected symbol by
    ``|H|^2 / (|H|^2 + N0)``; ``unbiased=True`` removes that shrink so a
    demapper referencing the nominal constellation sees an unbiased symbol.
    """
    H = np.asarray(H)
    p = np.abs(H) ** 2
    if unbiased:
        return np.conj(H) / np.maximum(p, ZF_FLOOR)
    return np.conj(H) / (p + max(N0, ZF_FLOOR))


def ofdm_reference(cfg: FrameConfig, h: ChannelRealization, N0: float, unbiased: bool = True):
    """IDFT basis and per-subcarrier MMSE taps for channel ``h``."""
    Q = idft_matrix(cfg.N)
    H = h.frequency_response(cfg.N)
    return Q, mmse_taps(H, N0, unbiased=unbiased)


def post_detection_noise_var(q, N0, Q=None):
    """Variance of the noise term in ``x_hat`` per symbol.

    Without ``Q`` this is ``N0 |q_n|^2`` (orthonormal basis assumed). With
    ``Q`` each term is scaled by the squared norm of column ``n``, which is the
    exact noise variance after matched filtering.
    """
    var = ops.abs2(q)
    if Q is not None:
        var = var * ops.sum(ops.abs2(Q), axis=0)
    return var * N0
