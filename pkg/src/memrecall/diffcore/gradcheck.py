"""Finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as _t
from .errors import ContractError
from .tensor import Tensor, grad


class _FreezeTape:
    """Records stop-gradient outputs once, then replays them in call order."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.recording = True
        self.cursor = 0

    def next(self, value: np.ndarray) -> np.ndarray:
        if self.recording:
            self.values.append(np.array(value, copy=True))
            return value
        if self.cursor >= len(self.values):
            raise ContractError("function performed more stop_gradient calls than on the reference pass")
        out = self.values[self.cursor]
        self.cursor += 1
        return out

    def rewind(self) -> None:
        self.recording = False
        self.cursor = 0


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float
    frozen_branches: int = 0
    analytic: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    numeric: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def grad_check(fn: Callable[[], Tensor], inputs: dict[str, Tensor] | Sequence[Tensor],
               h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn()`` with central differences.

    ``fn`` takes no arguments and reads the input tensors by closure; their
    ``data`` is perturbed in place.  Stop-gradient outputs are frozen at their
    reference values while perturbing, so only live branches are measured.
    """
    if not isinstance(inputs, dict):
        inputs = {f"input{i}": t for i, t in enumerate(inputs)}
    passive = [n for n, t in inputs.items() if not t.requires_grad]
    if passive:
        raise ContractError(f"inputs {passive} do not require gradients")
    prev = getattr(_t._state, "sg_replay", None)
    tape = _FreezeTape()
    _t._state.sg_replay = tape
    try:
        loss = fn()
        if loss.data.size != 1:
            raise ContractError(f"grad_check needs a scalar function, got shape {loss.shape}")
        ref = float(loss.data)
        analytic = dict(zip(inputs, grad(loss, list(inputs.values()))))
        tape.rewind()
        again = float(fn().data)
        if again != ref:
            raise ContractError(f"function is not deterministic: {ref!r} != {again!r}")

        def evaluate() -> float:
            tape.rewind()
            return float(fn().data)

        numeric = {}
        errors = {}
        for name, t in inputs.items():
            flat = t.data.reshape(-1)
            num = np.zeros(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = evaluate()
                flat[i] = orig - h
                fm = evaluate()
                flat[i] = orig
                num[i] = (fp - fm) / (2.0 * h)
            numeric[name] = num.reshape(t.shape)
            errors[name] = float(relative_error(analytic[name], numeric[name]).max(initial=0.0))
    finally:
        _t._state.sg_replay = prev
    return GradCheckReport(errors, tol, len(tape.values), analytic, numeric)
