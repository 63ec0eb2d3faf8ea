"""Gray-labelled square QAM, exact soft demapping and the bit-wise BCE loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import DomainError, ShapeError
from .numerics import Tensor, ops, value_of

LLR_CLAMP = 30.0


def gray_code(n_bits: int) -> np.ndarray:
    """Reflected binary Gray sequence of length ``2**n_bits``."""
    i = np.arange(1 << n_bits)
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Unit-energy square QAM with a fixed Gray labelling.

    ``points[i]`` carries the label whose MSB-first bit pattern is the binary
    expansion of ``i``; ``labels[i]`` is that bit pattern. The first half of
    the bits select the in-phase level, the second half the quadrature level.
    On each axis, reflected Gray code ``g`` is placed at the ``k``-th level
    counted from the most positive amplitude, so label 0 sits in the
    (+, +) corner.
    """

    bits_per_symbol: int
    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol

    def bit_index_sets(self) -> tuple[np.ndarray, np.ndarray]:
        """Point indices whose m-th bit is 0 (resp. 1), shape (M, order/2)."""
        zeros = np.stack([np.flatnonzero(self.labels[:, m] == 0)
                          for m in range(self.bits_per_symbol)])
        ones = np.stack([np.flatnonzero(self.labels[:, m] == 1)
                         for m in range(self.bits_per_symbol)])
        return zeros, ones


def qam(bits_per_symbol: int) -> Constellation:
    if bits_per_symbol < 2 or bits_per_symbol % 2:
        raise DomainError(f"square QAM needs an even bits_per_symbol >= 2, got {bits_per_symbol}")
    half = bits_per_symbol // 2
    side = 1 << half
    # level position (0 = most positive) of each axis label
    position = np.empty(side, dtype=int)
    position[gray_code(half)] = np.arange(side)
    amplitude = (side - 1) - 2.0 * position

    idx = np.arange(1 << bits_per_symbol)
    i_label = idx >> half
    q_label = idx & (side - 1)
    points = amplitude[i_label] + 1j * amplitude[q_label]
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    labels = (idx[:, None] >> np.arange(bits_per_symbol - 1, -1, -1)) & 1
    return Constellation(bits_per_symbol, points, labels.astype(np.int8))


def bits_to_indices(bits: np.ndarray, M: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != M:
        raise ShapeError(f"bit rows have width {bits.shape[-1]}, constellation needs {M}")
    weights = 1 << np.arange(M - 1, -1, -1)
    return bits.astype(np.int64) @ weights


def map_bits(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Symbols for a bit array whose last axis holds the M bits of each symbol."""
    return c.points[bits_to_indices(bits, c.bits_per_symbol)]


def random_bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.int8)


def demap_llr(x_hat, noise_var, c: Constellation, clamp: float = LLR_CLAMP):
    """Exact log-sum-exp LLRs, positive when bit 0 is more likely.

    Args:
        x_hat: detected symbols (array or tensor), any shape.
        noise_var: circular noise variance per symbol, broadcastable to
            ``x_hat``.
        c: reference constellation.
        clamp: LLR magnitudes are clipped to this value.

    Returns:
        LLRs of shape ``x_hat.shape + (M,)``; a tensor when any input is one.

    Raises:
        DomainError: any ``noise_var <= 0``.
    """
    if np.any(value_of(noise_var) <= 0):
        raise DomainError("noise_var must be positive")
    as_array = not isinstance(x_hat, Tensor) and not isinstance(noise_var, Tensor)
    x = ops.reshape(x_hat, value_of(x_hat).shape + (1,))
    nv = ops.as_tensor(noise_var)
    nv = ops.reshape(nv, nv.shape + (1,))
    metric = -ops.abs2(x - c.points) / nv  # (..., order)
    zeros, ones = c.bit_index_sets()
    axis = metric.ndim - 1
    llr = (ops.logsumexp(ops.take(metric, zeros, axis=axis), axis=-1)
           - ops.logsumexp(ops.take(metric, ones, axis=axis), axis=-1))
    llr = ops.clip(llr, -clamp, clamp)
    return llr.numpy() if as_array else llr


def hard_decisions(llr) -> np.ndarray:
    return (value_of(llr) < 0).astype(np.int8)


def bce_loss(llr, bits) -> Tensor:
    """Mean binary cross-entropy in bits: ``-mean(log2 P(b | llr))``."""
    bits = np.asarray(bits)
    if value_of(llr).shape != bits.shape:
        raise ShapeError(f"llr shape {value_of(llr).shape} != bits shape {bits.shape}")
    sign = 1.0 - 2.0 * bits  # +1 for bit 0
    # -log P(b) = softplus(-sign * llr)
    return ops.mean(ops.softplus(-(ops.as_tensor(llr) * sign))) / np.log(2.0)


def qam_ber_awgn(ebn0_db, bits_per_symbol: int = 4):
    """Uncoded Gray square-QAM bit error rate on AWGN with threshold decisions.

    Evaluated exactly per axis: for every sent/decided level pair the Gaussian
    probability mass of the decision interval is weighted by the number of
    differing label bits.
    """
    ebn0 = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    half = bits_per_symbol // 2
    side = 1 << half
    n0 = 1.0 / (bits_per_symbol * ebn0)
    # half distance between neighbouring levels at unit symbol energy
    d = np.sqrt(3.0 / (2.0 * (side**2 - 1)))
    sigma = np.sqrt(n0 / 2.0)

    def exceed(t):
        return 0.5 * erfc(t * d / (sigma * np.sqrt(2.0)))

    amps = (side - 1) - 2.0 * np.arange(side)  # in units of d, level 0 most positive
    labels = gray_code(half)
    total = 0.0
    for k in range(side):
        for j in range(side):
            hi = amps[j] + 1.0 if j > 0 else np.inf
            lo = amps[j] - 1.0 if j < side - 1 else -np.inf
            p = exceed(lo - amps[k]) - exceed(hi - amps[k])
            total = total + p * bin(int(labels[k] ^ labels[j])).count("1")
    return total / (side * half)
