"""Per-channel gradient descent on the joint detection / PAPR objective.

The trainable state for one channel realization is the raw waveform matrix,
the one-tap detector, a PAPR threshold (dB, squashed into a fixed interval)
and three log-variance weights balancing the loss terms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .channel import ChannelRealization, circulant
from .errors import ConfigError, DegenerateInputError, NumericFailure
from .modem import Constellation, bce_loss, demap_llr, map_bits, qam, random_bits
from .numerics import Tape, Tensor, backward, ops, value_of
from .seeding import derived_rng
from .transceiver import FrameConfig, effective_channel, idft_matrix, mmse_taps

LN10_OVER_10 = np.log(10.0) / 10.0
SIGMA_NAMES = ("sigma_R", "sigma_P", "sigma_T")
WEIGHTING_MODES = ("uncertainty", "fixed")
NOISE_MODELS = ("nominal", "column")


@dataclass(frozen=True)
class OptimConfig:
    steps: int = 500
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    ebn0_range: tuple[float, float] = (0.0, 25.0)
    eps_bounds: tuple[float, float] = (2.0, 8.0)
    eps_init_db: float = 5.0
    fine_tune_steps: int = 100
    fine_tune_batch_size: int = 64
    fine_tune_lr: float = 1e-4
    fine_tune_ebn0_range: tuple[float, float] = (20.0, 25.0)
    fine_tune_eps_bounds: tuple[float, float] = (2.0, 6.0)
    weighting: str = "uncertainty"
    # alpha, beta, gamma for weighting="fixed"; unit values are a neutral choice
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    sigma_clip: float = 10.0
    init_perturbation: float = 0.01
    noise_model: str = "nominal"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1 or self.fine_tune_batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0 or self.fine_tune_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.steps < 0 or self.fine_tune_steps < 0:
            raise ConfigError("step counts must be non-negative")
        if self.weighting not in WEIGHTING_MODES:
            raise ConfigError(f"weighting must be one of {WEIGHTING_MODES}, got {self.weighting!r}")
        if self.noise_model not in NOISE_MODELS:
            raise ConfigError(f"noise_model must be one of {NOISE_MODELS}, got {self.noise_model!r}")
        for name in ("ebn0_range", "eps_bounds", "fine_tune_ebn0_range", "fine_tune_eps_bounds"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: lower bound {lo} above upper bound {hi}")
        for name in ("eps_bounds", "fine_tune_eps_bounds"):
            lo, hi = getattr(self, name)
            if lo >= hi:
                raise ConfigError(f"{name} must be a non-empty interval")
        lo, hi = self.eps_bounds
        if not lo < self.eps_init_db < hi:
            raise ConfigError(f"eps_init_db={self.eps_init_db} outside open interval {self.eps_bounds}")


@dataclass(frozen=True)
class LossBreakdown:
    step: int
    stage: int
    R: float
    P: float
    Theta: float
    total: float
    eps_db: float
    sigma_R: float
    sigma_P: float
    sigma_T: float
    power: float  # trace(Q Q^H) after normalization
    papr_db_mean: float
    papr_db_max: float


@dataclass
class OptimResult:
    Q: np.ndarray
    q: np.ndarray
    eps_db: float
    params: dict[str, np.ndarray]
    trace: list[LossBreakdown] = field(default_factory=list)


# ---------------------------------------------------------------- loss terms


def normalize_power(Q_raw):
    """Scale ``Q_raw`` so that ``trace(Q Q^H) = N``.

    Raises:
        DegenerateInputError: ``Q_raw`` is all zeros.
    """
    energy = ops.sum(ops.abs2(Q_raw))
    if not float(energy.data) > 0:
        raise DegenerateInputError("cannot normalize an all-zero waveform matrix")
    n = value_of(Q_raw).shape[0]
    out = ops.mul(Q_raw, ops.sqrt(n / energy))
    return out if isinstance(Q_raw, Tensor) else out.numpy()


def eps_from_raw(eps_raw, bounds: tuple[float, float]):
    lo, hi = bounds
    return lo + (hi - lo) * ops.sigmoid(eps_raw)


def raw_from_eps(eps_db: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    u = np.clip((eps_db - lo) / (hi - lo), 1e-6, 1 - 1e-6)
    return float(np.log(u / (1.0 - u)))


def papr_loss(bodies, eps_db) -> Tensor:
    """Mean hinge ``max(p[n] / mean(p) - eps_lin, 0)`` over samples and blocks.

    Args:
        bodies: ``(N, S)`` time-domain block bodies, one block per column.
        eps_db: threshold in dB (scalar).
    """
    p = ops.abs2(bodies)
    mean_p = ops.mean(p, axis=0, keepdims=True)
    if np.any(value_of(mean_p) == 0):
        raise DegenerateInputError("all-zero block in PAPR loss")
    eps_lin = ops.exp(ops.as_tensor(eps_db) * LN10_OVER_10)
    return ops.mean(ops.relu(p / mean_p - eps_lin))


def threshold_loss(eps_db) -> Tensor:
    """Mean threshold in dB (a single shared threshold returns itself)."""
    return ops.mean(ops.as_tensor(eps_db))


def total_loss(R, P, Theta, sigmas=None, weights=None) -> Tensor:
    """Uncertainty-weighted sum (``sigmas`` given) or fixed weighted sum."""
    if sigmas is not None:
        s_r, s_p, s_t = sigmas
        return (ops.exp(-ops.as_tensor(s_r)) * R + ops.exp(-ops.as_tensor(s_p)) * P
                + ops.exp(-ops.as_tensor(s_t)) * Theta + s_r + s_p + s_t)
    if weights is None:
        raise ConfigError("total_loss needs sigmas or fixed weights")
    alpha, beta, gamma = weights
    return ops.mul(R, alpha) + ops.mul(P, beta) + ops.mul(Theta, gamma)


# ---------------------------------------------------------------- batches


@dataclass(frozen=True)
class Batch:
    bits: np.ndarray  # (N, S, M)
    X: np.ndarray  # (N, S) symbols, one block per column
    W: np.ndarray  # (N, S) unit-variance circular noise
    N0: np.ndarray  # (S,)


def draw_batch(rng: np.random.Generator, N: int, S: int, c: Constellation,
               ebn0_range: tuple[float, float]) -> Batch:
    bits = random_bits(rng, (N, S, c.bits_per_symbol))
    X = map_bits(bits, c)
    W = (rng.standard_normal((N, S)) + 1j * rng.standard_normal((N, S))) / np.sqrt(2.0)
    ebn0_db = rng.uniform(*ebn0_range, size=S)
    N0 = 1.0 / (c.bits_per_symbol * 10.0 ** (ebn0_db / 10.0))
    return Batch(bits, X, W, N0)


# ---------------------------------------------------------------- objective


def chain_loss(params: Mapping[str, Tensor], batch: Batch, h: ChannelRealization,
               cfg: OptimConfig, c: Constellation,
               eps_bounds: tuple[float, float] | None = None) -> tuple[Tensor, dict]:
    """Full differentiable chain for one batch.

    normalize_power -> Q x -> Q^H C Q x + Q^H n -> one-tap detector -> exact
    LLRs -> BCE; the PAPR hinge is evaluated on the ``Q x`` bodies.

    Returns:
        ``(total, parts)`` where ``parts`` maps ``R``, ``P``, ``Theta``,
        ``eps_db``, ``Q`` and ``bodies`` to tensors.
    """
    eps_bounds = eps_bounds or cfg.eps_bounds
    N = batch.X.shape[0]
    Q = normalize_power(ops.as_tensor(params["Q_raw"]))
    q = ops.as_tensor(params["q"])
    QH = ops.conj(ops.transpose(Q))
    bodies = ops.matmul(Q, batch.X)
    lam = ops.matmul(QH, ops.matmul(circulant(h.taps, N), Q))
    r = ops.matmul(lam, batch.X) + ops.matmul(QH, batch.W * np.sqrt(batch.N0))
    q_col = ops.reshape(q, (N, 1))
    x_hat = r * q_col
    noise_var = ops.abs2(q_col)
    if cfg.noise_model == "column":
        noise_var = noise_var * ops.reshape(ops.sum(ops.abs2(Q), axis=0), (N, 1))
    noise_var = noise_var * batch.N0
    R = bce_loss(demap_llr(x_hat, noise_var, c), batch.bits)

    eps_db = eps_from_raw(params["eps_raw"], eps_bounds)
    P = papr_loss(bodies, eps_db)
    Theta = threshold_loss(eps_db)
    if cfg.weighting == "uncertainty":
        total = total_loss(R, P, Theta, sigmas=[params[k] for k in SIGMA_NAMES])
    else:
        total = total_loss(R, P, Theta, weights=cfg.weights)
    return total, {"R": R, "P": P, "Theta": Theta, "eps_db": eps_db, "Q": Q, "bodies": bodies}


# ---------------------------------------------------------------- Adam


class Adam:
    """Adaptive-moment descent; complex parameters update as (re, im) pairs."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    @staticmethod
    def _real_view(a: np.ndarray) -> np.ndarray:
        return a.view(np.float64) if np.iscomplexobj(a) else a

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update of ``params`` given complex ``d/dre + 1j d/dim`` grads."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = np.asarray(grads[k], dtype=p.dtype)
            pv = self._real_view(p)
            gv = self._real_view(np.array(g))
            if k not in self.m:
                self.m[k] = np.zeros_like(pv)
                self.v[k] = np.zeros_like(pv)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gv
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gv * gv
            pv -= (self.lr / bc1) * self.m[k] / (np.sqrt(self.v[k] / bc2) + self.eps)


# ---------------------------------------------------------------- driver


def initial_params(h: ChannelRealization, N: int, cfg: OptimConfig) -> dict[str, np.ndarray]:
    """OFDM starting point: perturbed IDFT basis and unbiased per-subcarrier taps."""
    rng = derived_rng(cfg.seed, "init")
    noise = cfg.init_perturbation * (rng.standard_normal((N, N))
                                     + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    params = {
        "Q_raw": idft_matrix(N) + noise,
        "q": mmse_taps(h.frequency_response(N), 0.0, unbiased=True).astype(np.complex128),
        "eps_raw": np.array(raw_from_eps(cfg.eps_init_db, cfg.eps_bounds)),
    }
    for k in SIGMA_NAMES:
        params[k] = np.array(0.0)
    return params


def _breakdown(step, stage, total, parts, params, cfg) -> LossBreakdown:
    Q = parts["Q"].data
    pw = np.abs(parts["bodies"].data) ** 2
    papr_db = 10.0 * np.log10(pw.max(axis=0) / pw.mean(axis=0))
    return LossBreakdown(
        step=step, stage=stage,
        R=float(parts["R"].data), P=float(parts["P"].data), Theta=float(parts["Theta"].data),
        total=float(total.data), eps_db=float(parts["eps_db"].data),
        sigma_R=float(params["sigma_R"]), sigma_P=float(params["sigma_P"]),
        sigma_T=float(params["sigma_T"]),
        power=float(np.sum(np.abs(Q) ** 2).real),
        papr_db_mean=float(papr_db.mean()), papr_db_max=float(papr_db.max()),
    )


def _run_stage(params, h, frame, cfg, c, *, stage, steps, lr, batch_size, ebn0_range,
               eps_bounds, trace, step_offset):
    adam = Adam(lr, cfg.adam_betas, cfg.adam_eps)
    trainable = [k for k in params if cfg.weighting == "uncertainty" or k not in SIGMA_NAMES]
    for i in range(steps):
        step = step_offset + i
        batch = draw_batch(derived_rng(cfg.seed, "step", stage, i), frame.N, batch_size, c,
                           ebn0_range)
        tape = Tape()
        tensors = {k: tape.param(v, k) for k, v in params.items()}
        total, parts = chain_loss(tensors, batch, h, cfg, c, eps_bounds)
        grads = backward(total, tape)
        record = _breakdown(step, stage, total, parts, params, cfg)
        bad = [k for k, g in grads.items() if not (np.all(np.isfinite(g.re))
                                                    and np.all(np.isfinite(g.im)))]
        if not np.isfinite(record.total) or bad:
            raise NumericFailure(
                f"non-finite loss or gradient at stage {stage} step {i}",
                dump={"breakdown": asdict(record), "non_finite_grads": bad,
                      "param_norms": {k: float(np.linalg.norm(v)) for k, v in params.items()}},
            )
        trace.append(record)
        adam.step({k: params[k] for k in trainable},
                  {k: grads[k].as_complex() for k in trainable})
        for k in SIGMA_NAMES:
            params[k] = np.array(np.clip(params[k], -cfg.sigma_clip, cfg.sigma_clip))


def optimize_for_channel(h: ChannelRealization, frame: FrameConfig, cfg: OptimConfig,
                         c: Constellation | None = None,
                         init: Mapping[str, np.ndarray] | None = None) -> OptimResult:
    """Learn ``(Q, q, eps)`` for a single channel realization.

    Runs ``cfg.steps`` Adam steps, then ``cfg.fine_tune_steps`` more with the
    fine-tune learning rate, Eb/N0 range and threshold interval. Each step's
    bits and noise come from an RNG derived from ``(seed, stage, step)``.

    Raises:
        ContractError: channel longer than the cyclic prefix.
        NumericFailure: a loss or gradient became non-finite; ``dump`` holds
            the offending step.
    """
    c = c or qam(4)
    effective_channel(np.eye(frame.N), h, frame)  # validates channel length
    params = {k: np.array(v) for k, v in (init or initial_params(h, frame.N, cfg)).items()}
    for k in SIGMA_NAMES:
        params[k] = np.array(np.clip(params[k], -cfg.sigma_clip, cfg.sigma_clip))
    trace: list[LossBreakdown] = []
    _run_stage(params, h, frame, cfg, c, stage=1, steps=cfg.steps, lr=cfg.learning_rate,
               batch_size=cfg.batch_size, ebn0_range=cfg.ebn0_range,
               eps_bounds=cfg.eps_bounds, trace=trace, step_offset=0)
    bounds = cfg.eps_bounds
    if cfg.fine_tune_steps:
        eps = float(eps_from_raw(params["eps_raw"], cfg.eps_bounds).data)
        lo, hi = cfg.fine_tune_eps_bounds
        params["eps_raw"] = np.array(raw_from_eps(min(max(eps, lo), hi), cfg.fine_tune_eps_bounds))
        bounds = cfg.fine_tune_eps_bounds
        _run_stage(params, h, frame, cfg, c, stage=2, steps=cfg.fine_tune_steps,
                   lr=cfg.fine_tune_lr, batch_size=cfg.fine_tune_batch_size,
                   ebn0_range=cfg.fine_tune_ebn0_range, eps_bounds=bounds,
                   trace=trace, step_offset=cfg.steps)
    Q = normalize_power(params["Q_raw"])
    eps_db = float(eps_from_raw(params["eps_raw"], bounds).data)
    return OptimResult(Q=Q, q=params["q"].copy(), eps_db=eps_db, params=params, trace=trace)
