"""Adaptive-moment optimizer and finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..errors import GraphError
from .autodiff import Tensor, backward


class ParamSet:
    """Named parameters with optimizer state, stable iteration order."""

    def __init__(self, params: Mapping[str, Tensor]):
        self.params: dict[str, Tensor] = dict(params)
        self.first_moment = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.second_moment = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.step_count = 0

    def names(self) -> list[str]:
        return list(self.params)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    def copy_data(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_data(self, snapshot: Mapping[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            t.data = snapshot[k].copy()


def optimizer_step(
    p: ParamSet,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected adaptive-moment update; grads are zeroed afterwards."""
    if any(t.grad is None for t in p.params.values()):
        missing = [k for k, t in p.params.items() if t.grad is None]
        raise GraphError(f"optimizer_step before backward populated grads: {missing[:3]}")
    p.step_count += 1
    t = p.step_count
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for name, param in p.params.items():
        g = param.grad
        m = p.first_moment[name]
        v = p.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    p.zero_grads()


def grad_check(
    f: Callable[[], Tensor],
    p: ParamSet,
    h: float = 1e-5,
    n_probes: int = 50,
    seed: int = 0,
) -> float:
    """Worst relative error of analytic grads vs central finite differences.

    f must rebuild the forward graph from the current parameter values
    on every call and return the scalar loss. Probes are uniform over
    all parameter coordinates; the relative-error denominator floors at
    1e-8 so near-zero gradients do not blow up the ratio.
    """
    p.zero_grads()
    loss = f()
    backward(loss)
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in p.params.items()}
    p.zero_grads()

    names = p.names()
    sizes = np.array([p.params[k].data.size for k in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, total, size=n_probes)

    worst = 0.0
    boundaries = np.cumsum(sizes)
    for flat_index in picks:
        which = int(np.searchsorted(boundaries, flat_index, side="right"))
        local = int(flat_index - (boundaries[which - 1] if which else 0))
        tensor = p.params[names[which]]
        flat = tensor.data.reshape(-1)
        original = flat[local]

        flat[local] = original + h
        up = float(f().data)
        flat[local] = original - h
        down = float(f().data)
        flat[local] = original

        numeric = (up - down) / (2.0 * h)
        a = float(analytic[names[which]].reshape(-1)[local])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
