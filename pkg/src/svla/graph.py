"""Named-graph wrapper over the autodiff tape, plus gradient checking.

A Graph pairs a pure build function with a named parameter set. The build
function re-records the tape on every evaluation (define-by-run), which
keeps the wrapper trivial while still giving the named evaluate/backward
surface the rest of the workbench uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import GraphError, Tensor


@dataclass
class Diagnostics:
    nan_nodes: list = field(default_factory=list)

    @property
    def clean(self):
        return not self.nan_nodes


class Graph:
    """build_fn(params: dict[str, Tensor], inputs: dict[str, Tensor]) -> dict[str, Tensor]."""

    def __init__(self, build_fn, params: dict):
        self.build_fn = build_fn
        self.params = {
            name: p if isinstance(p, Tensor) else Tensor(p, requires_grad=True)
            for name, p in params.items()
        }
        for p in self.params.values():
            p.requires_grad = True
        self.diagnostics = Diagnostics()

    def evaluate(self, inputs: dict, check_nan: bool = True) -> dict:
        """Forward pass; NaN/Inf outputs are flagged in `self.diagnostics`."""
        wrapped = {
            k: v if isinstance(v, Tensor) else Tensor(v) for k, v in inputs.items()
        }
        self.diagnostics = Diagnostics()
        if check_nan:
            autodiff._nan_watch = self.diagnostics.nan_nodes
        try:
            outputs = self.build_fn(self.params, wrapped)
        finally:
            autodiff._nan_watch = None
        return outputs

    def backward(self, loss: Tensor) -> dict:
        """Gradients for every parameter; zeros where the loss does not reach."""
        if loss.size != 1:
            raise GraphError("backward: loss must be scalar")
        for p in self.params.values():
            p.zero_grad()
        autodiff.backward(loss)
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    per_param: dict
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def grad_check(
    graph: Graph,
    inputs: dict,
    tolerance: float = 1e-6,
    loss_name: str = "loss",
    fd_step: float = 1e-5,
    max_samples_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic parameter gradients against central finite differences.

    Runs in whatever dtype the parameters carry; callers wanting the 1e-6
    contract must supply float64 parameters. The error metric is
    |analytic - fd| / max(|analytic|, |fd|, 1e-4): relative for gradients of
    ordinary magnitude, absolute below the 1e-4 floor so that near-zero
    gradients are not swamped by finite-difference noise.

    `max_samples_per_param` caps the number of elements probed per parameter
    (deterministically subsampled); None probes every element.
    """
    rng = np.random.default_rng(seed)
    outputs = graph.evaluate(inputs, check_nan=False)
    loss = outputs[loss_name]
    analytic = graph.backward(loss)

    def loss_value():
        return float(graph.evaluate(inputs, check_nan=False)[loss_name].item())

    floor = 1e-4
    per_param = {}
    worst = ("", 0.0)
    for name, p in graph.params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_samples_per_param is not None and n > max_samples_per_param:
            idxs = rng.choice(n, size=max_samples_per_param, replace=False)
        else:
            idxs = np.arange(n)
        a_flat = analytic[name].reshape(-1)
        max_err = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + fd_step
            f_plus = loss_value()
            flat[i] = orig - fd_step
            f_minus = loss_value()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * fd_step)
            a = float(a_flat[i])
            err = abs(a - fd) / max(abs(a), abs(fd), floor)
            if err > max_err:
                max_err = err
        per_param[name] = max_err
        if max_err > worst[1]:
            worst = (name, max_err)
    return GradCheckReport(
        max_rel_error=worst[1],
        worst_param=worst[0],
        per_param=per_param,
        tolerance=tolerance,
    )
