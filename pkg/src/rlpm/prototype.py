"""Class prototypes by gradient ascent on a regularized log-probability.

The objective is ``log p_c(x) - l2_penalty * ||x||^2``; each step takes the
ascent direction and backtracks (halving the step, at most 20 times) until
the objective does not decrease, so the returned trace is non-decreasing
by construction. ``log p_c`` uses the log-sum-exp form and stays finite
wherever the logits are.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericsError
from .graph import NetworkGraph, backprop, forward_with_trace, presoftmax
from .layers import softmax_lastaxis
from .tensor import frozen

INIT_ZEROS = "zeros"
INIT_GAUSSIAN = "gaussian"

MAX_HALVINGS = 20


@dataclass(frozen=True)
class PrototypeConfig:
    target_class: int
    l2_penalty: float = 0.01
    steps: int = 200
    step_size: float = 0.5
    init: str = INIT_ZEROS
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.target_class < 0:
            raise InputError(f"target_class must be >= 0, got {self.target_class}")
        if self.l2_penalty < 0:
            raise InputError(f"l2_penalty must be >= 0, got {self.l2_penalty}")
        if self.steps < 0:
            raise InputError(f"steps must be >= 0, got {self.steps}")
        if not self.step_size > 0:
            raise InputError(f"step_size must be > 0, got {self.step_size}")
        if self.init not in (INIT_ZEROS, INIT_GAUSSIAN):
            raise InputError(
                f"init must be '{INIT_ZEROS}' or '{INIT_GAUSSIAN}', got '{self.init}'"
            )
        if self.sigma <= 0:
            raise InputError(f"sigma must be > 0, got {self.sigma}")


def _objective_and_gradient(net: NetworkGraph, x: np.ndarray, cfg: PrototypeConfig):
    _, trace = forward_with_trace(net, x)
    logits, feed = presoftmax(net, trace)
    if not 0 <= cfg.target_class < logits.shape[0]:
        raise InputError(
            f"target class {cfg.target_class} out of range for {logits.shape[0]} classes"
        )
    shifted = logits - logits.max()
    log_p = shifted[cfg.target_class] - np.log(np.exp(shifted).sum())
    objective = float(log_p - cfg.l2_penalty * np.sum(x * x))
    seed = -softmax_lastaxis(logits)
    seed[cfg.target_class] += 1.0
    d_input, _, _ = backprop(net, trace, seed, feed)
    return objective, d_input - 2.0 * cfg.l2_penalty * x


def _objective(net: NetworkGraph, x: np.ndarray, cfg: PrototypeConfig) -> float:
    _, trace = forward_with_trace(net, x)
    logits, _ = presoftmax(net, trace)
    shifted = logits - logits.max()
    log_p = shifted[cfg.target_class] - np.log(np.exp(shifted).sum())
    return float(log_p - cfg.l2_penalty * np.sum(x * x))


def initial_input(net: NetworkGraph, cfg: PrototypeConfig) -> np.ndarray:
    if cfg.init == INIT_ZEROS:
        return np.zeros(net.input_shape)
    rng = np.random.default_rng(cfg.seed)
    return rng.normal(0.0, cfg.sigma, size=net.input_shape)


def activation_maximize(
    net: NetworkGraph, cfg: PrototypeConfig
) -> tuple[np.ndarray, list[float]]:
    """Search for an input maximizing the regularized class log-probability.

    Returns the final input and the objective value at the start plus
    after each of the ``cfg.steps`` iterations (length steps + 1). A step
    that cannot improve even after all halvings leaves the input as-is.
    """
    x = initial_input(net, cfg)
    objective, grad = _objective_and_gradient(net, x, cfg)
    if not np.isfinite(objective):
        raise NumericsError(f"objective is {objective} at the initial input")
    trace = [objective]
    for _ in range(cfg.steps):
        step = cfg.step_size
        for _ in range(MAX_HALVINGS + 1):
            candidate = x + step * grad
            value = _objective(net, candidate, cfg)
            if np.isfinite(value) and value >= objective:
                x = candidate
                objective, grad = _objective_and_gradient(net, x, cfg)
                break
            step *= 0.5
        trace.append(objective)
    return frozen(x), trace
