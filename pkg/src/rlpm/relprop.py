"""Backward relevance propagation through a traced forward pass.

Rules: LRP-0 and LRP-eps redistribute relevance proportionally to each
input's share ``x_j w_jk`` of the pre-activation; the z+, z^B and w^2
rules substitute the numerator (positive weights only, bound-anchored
weights, squared weights). ``deep_taylor_unbounded``/``deep_taylor_bounded``
bundle the standard presets: z+ for hidden layers, w^2 or z^B at the
input layer. ``gradient_times_input`` is the baseline method.

All propagation is linear in the injected output relevance, so relevance
maps scale exactly with the start value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .errors import InputError, ShapeError, UnsupportedRuleError
from .graph import (
    ActivationTrace,
    LayerRecord,
    NetworkGraph,
    forward_with_trace,
    gradient,
    presoftmax,
)
from .tensor import as_tensor, frozen, require_finite

LRP0 = "lrp0"
LRP_EPS = "lrp-eps"
ZPLUS = "zplus"
ZB = "zb"
WSQUARE = "wsquare"
GRADIENT_TIMES_INPUT = "gxi"

RULES = frozenset({LRP0, LRP_EPS, ZPLUS, ZB, WSQUARE, GRADIENT_TIMES_INPUT})

ADD_STABILIZER = 1e-9


@dataclass(frozen=True, eq=False)
class RuleConfig:
    """A single propagation rule plus its parameters.

    ``epsilon`` is the denominator stabilizer (LRP-eps only, must be > 0
    there). ``input_bounds`` is a (low, high) pair, scalar or per-channel,
    required by and exclusive to the z^B rule.
    """

    rule: str
    epsilon: float = 0.0
    input_bounds: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise InputError(f"unknown rule '{self.rule}', expected one of {sorted(RULES)}")
        if self.epsilon < 0:
            raise InputError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.rule == LRP_EPS and not self.epsilon > 0:
            raise InputError("the epsilon-stabilized rule needs epsilon > 0")
        if self.rule != LRP_EPS and self.epsilon:
            raise InputError(f"epsilon applies only to '{LRP_EPS}'")
        if self.rule == ZB:
            if self.input_bounds is None:
                raise InputError("the bounded-input rule needs input_bounds=(low, high)")
            low = frozen(np.atleast_1d(self.input_bounds[0]))
            high = frozen(np.atleast_1d(self.input_bounds[1]))
            if not np.all(low < high):
                raise InputError("input_bounds must satisfy low < high")
            object.__setattr__(self, "input_bounds", (low, high))
        elif self.input_bounds is not None:
            raise InputError(f"input_bounds applies only to '{ZB}'")


@dataclass(frozen=True)
class DeepTaylorPreset:
    """Per-depth rule assignment: input layer vs all other linear layers."""

    input_rule: RuleConfig
    hidden_rule: RuleConfig = RuleConfig(ZPLUS)

    def __post_init__(self):
        if self.input_rule.rule not in (ZB, WSQUARE):
            raise InputError(
                f"preset input rule must be '{ZB}' or '{WSQUARE}', got '{self.input_rule.rule}'"
            )
        if self.hidden_rule.rule != ZPLUS:
            raise InputError(f"preset hidden rule must be '{ZPLUS}'")


def deep_taylor_unbounded() -> DeepTaylorPreset:
    return DeepTaylorPreset(input_rule=RuleConfig(WSQUARE))


def deep_taylor_bounded(low, high) -> DeepTaylorPreset:
    return DeepTaylorPreset(input_rule=RuleConfig(ZB, input_bounds=(low, high)))


@dataclass(frozen=True, eq=False)
class RelevanceMap:
    """Input-shaped relevance values plus the provenance of the run."""

    values: np.ndarray
    start_value: float
    rule_used: RuleConfig | DeepTaylorPreset
    target_class: int

    def __post_init__(self):
        object.__setattr__(self, "values", frozen(self.values))
        require_finite(self.values, "relevance map")


@dataclass(frozen=True)
class ConservationReport:
    sum_in: float
    start_value: float
    leak: float


def conservation_report(m: RelevanceMap) -> ConservationReport:
    """How much of the injected relevance reached the input.

    leak > 0 is expected whenever the stabilizer or layer biases absorb
    relevance; it is a diagnostic, not an error.
    """
    total = float(np.sum(m.values))
    leak = (m.start_value - total) / max(abs(m.start_value), 1e-12)
    return ConservationReport(sum_in=total, start_value=m.start_value, leak=leak)


# ---------------------------------------------------------------------------
# rule steps


def _safe_share(R_out: np.ndarray, z: np.ndarray, epsilon: float) -> np.ndarray:
    """R_out / z with the epsilon stabilizer; zero denominators contribute 0."""
    if epsilon:
        denom = z + epsilon * np.where(z >= 0.0, 1.0, -1.0)
        return R_out / denom
    out = np.zeros_like(R_out)
    np.divide(R_out, z, out=out, where=(z != 0.0))
    return out


def _bounds_like(cfg: RuleConfig, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    low, high = cfg.input_bounds
    try:
        return (
            np.broadcast_to(low, x.shape).astype(np.float64),
            np.broadcast_to(high, x.shape).astype(np.float64),
        )
    except ValueError:
        raise ShapeError(
            f"input_bounds of shape {low.shape} do not broadcast to input {x.shape}"
        ) from None


def step_linear(x, w, R_out, cfg: RuleConfig, bias=None) -> np.ndarray:
    """Propagate through one dense map per the configured rule.

    The bias, when given, joins the denominator of the plain rules but
    receives no relevance itself; its share is absorbed (leak).
    """
    x = as_tensor(x)
    w = as_tensor(w)
    R_out = as_tensor(R_out)
    if w.ndim != 2 or x.shape != (w.shape[0],) or R_out.shape != (w.shape[1],):
        raise ShapeError(
            f"step_linear shapes inconsistent: x {x.shape}, w {w.shape}, R_out {R_out.shape}"
        )
    rule = cfg.rule
    if rule in (LRP0, LRP_EPS):
        z = x @ w
        if bias is not None:
            z = z + bias
        s = _safe_share(R_out, z, cfg.epsilon)
        return x * (w @ s)
    if rule == ZPLUS:
        wp = np.maximum(w, 0.0)
        s = _safe_share(R_out, x @ wp, 0.0)
        return x * (wp @ s)
    if rule == WSQUARE:
        w2 = w * w
        s = _safe_share(R_out, w2.sum(axis=0), 0.0)
        return w2 @ s
    if rule == ZB:
        wp = np.maximum(w, 0.0)
        wm = np.minimum(w, 0.0)
        low, high = _bounds_like(cfg, x)
        z = x @ w - low @ wp - high @ wm
        s = _safe_share(R_out, z, 0.0)
        return x * (w @ s) - low * (wp @ s) - high * (wm @ s)
    raise UnsupportedRuleError(f"rule '{rule}' has no linear step")


def _step_conv(spec: L.LayerSpec, x: np.ndarray, R_out: np.ndarray, cfg: RuleConfig) -> np.ndarray:
    """Conv layers reuse the convolution kernels: forward with substituted
    weights gives the denominators, the input VJP of the per-output shares
    distributes them over each receptive field."""
    stride = int(spec.params.get("stride", 1))
    padding = spec.params.get("padding", "valid")
    w = spec.weights

    def back(s, wv):
        return L.conv2d_backward_input(s, x.shape, wv, stride, padding)

    rule = cfg.rule
    if rule in (LRP0, LRP_EPS):
        z = L.conv2d_forward(x, w, spec.bias, stride, padding)
        s = _safe_share(R_out, z, cfg.epsilon)
        return x * back(s, w)
    if rule == ZPLUS:
        wp = np.maximum(w, 0.0)
        z = L.conv2d_forward(x, wp, None, stride, padding)
        return x * back(_safe_share(R_out, z, 0.0), wp)
    if rule == WSQUARE:
        w2 = w * w
        z = L.conv2d_forward(np.ones_like(x), w2, None, stride, padding)
        return back(_safe_share(R_out, z, 0.0), w2)
    if rule == ZB:
        wp = np.maximum(w, 0.0)
        wm = np.minimum(w, 0.0)
        low, high = _bounds_like(cfg, x)
        z = (
            L.conv2d_forward(x, w, None, stride, padding)
            - L.conv2d_forward(low, wp, None, stride, padding)
            - L.conv2d_forward(high, wm, None, stride, padding)
        )
        s = _safe_share(R_out, z, 0.0)
        return x * back(s, w) - low * back(s, wp) - high * back(s, wm)
    raise UnsupportedRuleError(f"rule '{rule}' has no convolution step")


def _step_affine(spec: L.LayerSpec, x: np.ndarray, R_out: np.ndarray, cfg: RuleConfig) -> np.ndarray:
    """Folded batch norm: a per-channel diagonal linear map."""
    scale = spec.weights
    rule = cfg.rule
    if rule in (LRP0, LRP_EPS):
        z = x * scale + spec.bias
        return x * scale * _safe_share(R_out, z, cfg.epsilon)
    if rule == ZPLUS:
        sp = np.maximum(scale, 0.0)
        z = x * sp
        return z * _safe_share(R_out, z, 0.0)
    if rule == WSQUARE:
        s2 = np.broadcast_to(scale * scale, x.shape)
        return s2 * _safe_share(R_out, s2, 0.0)
    if rule == ZB:
        sp = np.maximum(scale, 0.0)
        sm = np.minimum(scale, 0.0)
        low, high = _bounds_like(cfg, x)
        z = x * scale - low * sp - high * sm
        return z * _safe_share(R_out, z, 0.0)
    raise UnsupportedRuleError(f"rule '{rule}' has no affine step")


def step_pool(record: LayerRecord, R_out, spec: L.LayerSpec) -> np.ndarray:
    """Max pooling: winner-take-all to the window argmax (first index on
    ties). Average pooling: equal split over the window. Both coincide
    with the pooling gradient applied to the output relevance."""
    x = record.inputs[0]
    R_out = as_tensor(R_out)
    window, stride, padding = L.pool_params(spec)
    if spec.kind == L.MAXPOOL2D:
        return L.maxpool_backward(x, R_out, window, stride, padding)
    if spec.kind == L.AVGPOOL2D:
        return L.avgpool_backward(x, R_out, window, stride, padding)
    raise UnsupportedRuleError(f"layer '{spec.id}' is not a pooling layer")


def step_add(a, b, R_out, epsilon: float = ADD_STABILIZER) -> tuple[np.ndarray, np.ndarray]:
    """Split skip-connection relevance proportionally to the branch values."""
    a = as_tensor(a)
    b = as_tensor(b)
    R_out = as_tensor(R_out)
    z = a + b
    s = _safe_share(R_out, z, epsilon)
    return a * s, b * s


# ---------------------------------------------------------------------------
# whole-graph propagation


def _rule_for(spec: L.LayerSpec, config: RuleConfig | DeepTaylorPreset) -> RuleConfig:
    if isinstance(config, DeepTaylorPreset):
        return config.input_rule if not spec.inputs else config.hidden_rule
    return config


def explain(
    net: NetworkGraph,
    x,
    target_class: int,
    config: RuleConfig | DeepTaylorPreset,
) -> RelevanceMap:
    """Relevance of every input element for the target class's logit.

    The forward pass is traced, the pre-softmax logit of ``target_class``
    is injected as start relevance at the classifier output, and every
    layer redistributes its output relevance onto its inputs in reverse
    topological order. Fan-out contributions sum.
    """
    if isinstance(config, RuleConfig) and config.rule == GRADIENT_TIMES_INPUT:
        return gradient_times_input(net, x, target_class)
    x = as_tensor(x)
    _, trace = forward_with_trace(net, x)
    logits, feed_id = presoftmax(net, trace)
    if logits.ndim != 1:
        raise ShapeError(
            f"classifier output must be rank-1 to explain a class, got {logits.shape}"
        )
    if not 0 <= target_class < logits.shape[0]:
        raise InputError(
            f"target class {target_class} out of range for {logits.shape[0]} classes"
        )
    start = float(logits[target_class])
    seed = np.zeros_like(logits)
    seed[target_class] = start

    rel: dict[str, np.ndarray] = {feed_id: seed}
    r_input = np.zeros(net.input_shape)
    by_id = {rec.layer_id: rec for rec in trace.records}
    for spec in reversed(net.layers):
        R_out = rel.pop(spec.id, None)
        if R_out is None:
            continue
        rec = by_id[spec.id]
        kind = spec.kind
        if kind == L.SOFTMAX:
            raise UnsupportedRuleError(
                f"softmax layer '{spec.id}' inside the graph cannot receive relevance"
            )
        if kind == L.DENSE:
            cfg = _rule_for(spec, config)
            bias = spec.bias if cfg.rule in (LRP0, LRP_EPS) else None
            r_ins = (step_linear(rec.inputs[0], spec.weights, R_out, cfg, bias=bias),)
        elif kind == L.CONV2D:
            r_ins = (_step_conv(spec, rec.inputs[0], R_out, _rule_for(spec, config)),)
        elif kind == L.BATCHNORM:
            r_ins = (_step_affine(spec, rec.inputs[0], R_out, _rule_for(spec, config)),)
        elif kind == L.RELU:
            r_ins = (np.where(rec.output > 0.0, R_out, 0.0),)
        elif kind == L.FLATTEN:
            r_ins = (R_out.reshape(rec.inputs[0].shape),)
        elif kind in (L.MAXPOOL2D, L.AVGPOOL2D):
            r_ins = (step_pool(rec, R_out, spec),)
        elif kind == L.ADD:
            r_ins = step_add(rec.inputs[0], rec.inputs[1], R_out)
        else:
            raise UnsupportedRuleError(
                f"layer '{spec.id}' of kind '{kind}' has no relevance rule"
            )
        sources = spec.inputs or ("",)
        for src, r in zip(sources, r_ins):
            if not spec.inputs:
                r_input = r_input + r
            elif src in rel:
                rel[src] = rel[src] + r
            else:
                rel[src] = r
    return RelevanceMap(
        values=r_input, start_value=start, rule_used=config, target_class=target_class
    )


def gradient_times_input(net: NetworkGraph, x, target_class: int) -> RelevanceMap:
    """Baseline attribution: input elementwise times the logit gradient."""
    x = as_tensor(x)
    _, trace = forward_with_trace(net, x)
    logits, _ = presoftmax(net, trace)
    if not 0 <= target_class < logits.shape[0]:
        raise InputError(
            f"target class {target_class} out of range for {logits.shape[0]} classes"
        )
    g = gradient(net, x, target_class)
    return RelevanceMap(
        values=x * g,
        start_value=float(logits[target_class]),
        rule_used=RuleConfig(GRADIENT_TIMES_INPUT),
        target_class=target_class,
    )
