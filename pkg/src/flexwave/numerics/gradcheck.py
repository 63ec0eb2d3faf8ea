"""Central finite differences as an independent check on recorded gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..errors import DomainError, OracleInvalidError
from .tensor import Tape, Tensor, backward

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


def _evaluate(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> float:
    return float(loss_fn({k: Tensor(v) for k, v in params.items()}).data)


def finite_diff(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    step: float = 1e-6,
    floor: float = 1e-9,
) -> float:
    """Worst relative disagreement between backward and central differences.

    Each real and imaginary component of every parameter is perturbed by
    ``+-step``. The per-component error is ``|fd - g| / max(|fd|, |g|)``;
    components whose absolute disagreement is at most ``floor`` count as
    exact, so gradients that are zero in both routes do not divide by zero.

    Args:
        loss_fn: maps a dict of named tensors to a real scalar tensor. Must be
            deterministic (fix any seed inside it).
        params: named parameter values (real or complex arrays).
        step: perturbation size, > 0.
        floor: absolute-error floor.

    Returns:
        The maximum relative error over all components.

    Raises:
        DomainError: ``step <= 0``.
        OracleInvalidError: ``loss_fn`` returns different values for the same
            input.
    """
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    params = {k: np.array(v, dtype=np.complex128 if np.iscomplexobj(v) else np.float64)
              for k, v in params.items()}

    tape = Tape()
    tensors = {k: tape.param(v, k) for k, v in params.items()}
    loss = loss_fn(tensors)
    grads = backward(loss, tape)
    base = float(loss.data)
    again = _evaluate(loss_fn, params)
    if again != base:
        raise OracleInvalidError(
            f"loss_fn is not deterministic: {base!r} then {again!r}"
        )

    worst = 0.0
    for name, value in params.items():
        parts = (1.0, 1j) if np.iscomplexobj(value) else (1.0,)
        for idx in np.ndindex(value.shape):
            for part in parts:
                shifted = dict(params)
                plus = value.copy()
                plus[idx] += step * part
                minus = value.copy()
                minus[idx] -= step * part
                shifted[name] = plus
                f_plus = _evaluate(loss_fn, shifted)
                shifted[name] = minus
                f_minus = _evaluate(loss_fn, shifted)
                fd = (f_plus - f_minus) / (2.0 * step)
                g = grads[name].re[idx] if part == 1.0 else grads[name].im[idx]
                diff = abs(fd - g)
                if diff <= floor:
                    continue
                worst = max(worst, diff / max(abs(fd), abs(g)))
    return worst
