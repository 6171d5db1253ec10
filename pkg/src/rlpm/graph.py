"""Network graphs: validation, forward inference, tracing and gradients.

A :class:`NetworkGraph` is an immutable, topologically ordered DAG of
:class:`~rlpm.layers.LayerSpec`. Exactly one layer reads the network input
and exactly one layer's output is left unconsumed (the network output).
Forward passes and gradients are pure functions and safe to run
concurrently on a shared graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import layers as L
from .errors import ArityError, NumericsError, ShapeError
from .tensor import as_tensor, frozen, require_finite, require_shape

INPUT = "__input__"  # sentinel source id for layers with no upstream layer


@dataclass(frozen=True)
class NetworkGraph:
    layers: tuple[L.LayerSpec, ...]
    input_shape: tuple[int, ...]
    output_classes: int
    name: str = ""

    def layer(self, layer_id: str) -> L.LayerSpec:
        for spec in self.layers:
            if spec.id == layer_id:
                return spec
        raise KeyError(layer_id)

    @property
    def output_id(self) -> str:
        consumed = {i for spec in self.layers for i in spec.inputs}
        for spec in self.layers:
            if spec.id not in consumed:
                return spec.id
        raise ShapeError("graph has no output layer")


def validate_graph(net: NetworkGraph) -> dict[str, tuple[int, ...]]:
    """Check all structural invariants; return the shape of every layer."""
    if not net.layers:
        raise ShapeError("graph has no layers")
    ids = [spec.id for spec in net.layers]
    if len(set(ids)) != len(ids):
        raise ShapeError("duplicate layer ids")
    seen: set[str] = set()
    entries = [spec.id for spec in net.layers if not spec.inputs]
    if len(entries) != 1:
        raise ShapeError(f"graph must have exactly one entry layer, found {entries}")
    consumed = {i for spec in net.layers for i in spec.inputs}
    outputs = [i for i in ids if i not in consumed]
    if len(outputs) != 1:
        raise ShapeError(f"graph must have exactly one output layer, found {outputs}")
    shapes: dict[str, tuple[int, ...]] = {}
    for spec in net.layers:
        for src in spec.inputs:
            if src not in seen:
                raise ShapeError(
                    f"layer '{spec.id}' input '{src}' does not precede it"
                )
        in_shapes = [shapes[s] for s in spec.inputs] or [tuple(net.input_shape)]
        shapes[spec.id] = L.output_shape(spec, in_shapes)
        seen.add(spec.id)
    out_shape = shapes[outputs[0]]
    if out_shape[-1] != net.output_classes:
        raise ShapeError(
            f"output layer '{outputs[0]}' has {out_shape[-1]} classes on its last "
            f"axis, graph declares {net.output_classes}"
        )
    return shapes


def infer_shapes(net: NetworkGraph) -> dict[str, tuple[int, ...]]:
    return validate_graph(net)


def with_input_shape(net: NetworkGraph, input_shape: tuple[int, ...]) -> NetworkGraph:
    """Same layers over a different input shape (revalidated)."""
    out = replace(net, input_shape=tuple(int(v) for v in input_shape))
    validate_graph(out)
    return out


def ancestors(net: NetworkGraph, layer_id: str) -> set[str]:
    by_id = {spec.id: spec for spec in net.layers}
    todo, seen = list(by_id[layer_id].inputs), set()
    while todo:
        cur = todo.pop()
        if cur in seen:
            continue
        seen.add(cur)
        todo.extend(by_id[cur].inputs)
    return seen


# ---------------------------------------------------------------------------
# construction


class GraphBuilder:
    """Incrementally build a validated NetworkGraph.

    Each ``add_*`` method returns the new layer's id; by default a layer
    consumes the previously added one. Weights passed in (or created by
    ``rng``-seeded init) are frozen read-only.
    """

    def __init__(self, input_shape, rng: np.random.Generator | None = None):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.rng = rng
        self._specs: list[L.LayerSpec] = []
        self._count: dict[str, int] = {}

    def _auto_id(self, kind: str) -> str:
        n = self._count.get(kind, 0)
        self._count[kind] = n + 1
        return f"{kind}{n}"

    def _resolve(self, inputs) -> tuple[str, ...]:
        if inputs is None:
            return (self._specs[-1].id,) if self._specs else ()
        if isinstance(inputs, str):
            inputs = (inputs,)
        return tuple(inputs)

    def extend(self, specs) -> str:
        """Append pre-built layer specs; returns the last layer's id."""
        self._specs.extend(specs)
        return self._specs[-1].id

    def add(self, kind, params=None, *, inputs=None, weights=None, bias=None, id=None):
        layer_id = id or self._auto_id(kind)
        spec = L.LayerSpec(
            id=layer_id,
            kind=kind,
            params=dict(params or {}),
            inputs=self._resolve(inputs),
            weights=None if weights is None else frozen(weights),
            bias=None if bias is None else frozen(bias),
        )
        self._specs.append(spec)
        return layer_id

    def _he_init(self, shape, fan_in):
        if self.rng is None:
            raise ShapeError("GraphBuilder needs an rng to initialize weights")
        return self.rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

    def conv2d(self, out_channels, kernel, *, stride=1, padding="valid",
               weights=None, bias="zeros", inputs=None, id=None):
        kh, kw = L._pair(kernel)
        in_ch = self._shape_of(inputs)[-1]
        if weights is None:
            weights = self._he_init((kh, kw, in_ch, out_channels), kh * kw * in_ch)
        b = np.zeros(out_channels) if isinstance(bias, str) and bias == "zeros" else bias
        return self.add(
            L.CONV2D,
            {"out_channels": int(out_channels), "kernel": [kh, kw],
             "stride": int(stride), "padding": padding},
            weights=weights, bias=b, inputs=inputs, id=id,
        )

    def dense(self, units, *, weights=None, bias="zeros", inputs=None, id=None):
        in_features = self._shape_of(inputs)[0]
        if weights is None:
            weights = self._he_init((in_features, units), in_features)
        b = np.zeros(units) if isinstance(bias, str) and bias == "zeros" else bias
        return self.add(L.DENSE, {"units": int(units)},
                        weights=weights, bias=b, inputs=inputs, id=id)

    def relu(self, inputs=None, id=None):
        return self.add(L.RELU, inputs=inputs, id=id)

    def maxpool(self, window, *, stride=None, padding="valid", inputs=None, id=None):
        ph, pw = L._pair(window)
        params = {"window": [ph, pw], "padding": padding}
        if stride is not None:
            params["stride"] = int(stride)
        return self.add(L.MAXPOOL2D, params, inputs=inputs, id=id)

    def avgpool(self, window, *, stride=None, padding="valid", inputs=None, id=None):
        ph, pw = L._pair(window)
        params = {"window": [ph, pw], "padding": padding}
        if stride is not None:
            params["stride"] = int(stride)
        return self.add(L.AVGPOOL2D, params, inputs=inputs, id=id)

    def flatten(self, inputs=None, id=None):
        return self.add(L.FLATTEN, inputs=inputs, id=id)

    def softmax(self, inputs=None, id=None):
        return self.add(L.SOFTMAX, inputs=inputs, id=id)

    def add_join(self, a, b, id=None):
        return self.add(L.ADD, inputs=(a, b), id=id)

    def batchnorm(self, scale=None, shift=None, inputs=None, id=None):
        c = self._shape_of(inputs)[-1]
        scale = np.ones(c) if scale is None else scale
        shift = np.zeros(c) if shift is None else shift
        return self.add(L.BATCHNORM, weights=scale, bias=shift, inputs=inputs, id=id)

    def _shape_of(self, inputs) -> tuple[int, ...]:
        # shape feeding the layer about to be added
        resolved = self._resolve(inputs)
        if not resolved:
            return self.input_shape
        shapes: dict[str, tuple[int, ...]] = {}
        for spec in self._specs:
            in_shapes = [shapes[s] for s in spec.inputs] or [self.input_shape]
            shapes[spec.id] = L.output_shape(spec, in_shapes)
        return shapes[resolved[0]]

    def build(self, name: str = "", output_classes: int | None = None) -> NetworkGraph:
        if output_classes is None:
            shapes: dict[str, tuple[int, ...]] = {}
            for spec in self._specs:
                in_shapes = [shapes[s] for s in spec.inputs] or [self.input_shape]
                shapes[spec.id] = L.output_shape(spec, in_shapes)
            consumed = {i for s in self._specs for i in s.inputs}
            (out_id,) = [s.id for s in self._specs if s.id not in consumed]
            output_classes = shapes[out_id][-1]
        net = NetworkGraph(
            layers=tuple(self._specs),
            input_shape=self.input_shape,
            output_classes=int(output_classes),
            name=name,
        )
        validate_graph(net)
        return net


# ---------------------------------------------------------------------------
# forward


@dataclass(frozen=True)
class LayerRecord:
    layer_id: str
    inputs: tuple[np.ndarray, ...]
    pre_activation: np.ndarray
    output: np.ndarray


@dataclass(frozen=True)
class ActivationTrace:
    records: tuple[LayerRecord, ...] = field(default_factory=tuple)

    @property
    def final_output(self) -> np.ndarray:
        return self.records[-1].output

    def record(self, layer_id: str) -> LayerRecord:
        for rec in self.records:
            if rec.layer_id == layer_id:
                return rec
        raise KeyError(layer_id)


def forward_with_trace(net: NetworkGraph, x) -> tuple[np.ndarray, ActivationTrace]:
    """Run the forward pass, recording every layer's activations."""
    x = as_tensor(x)
    require_shape(x, net.input_shape, "network input")
    require_finite(x, "network input")
    values: dict[str, np.ndarray] = {}
    records: list[LayerRecord] = []
    out_id = net.output_id
    for spec in net.layers:
        ins = tuple(values[s] for s in spec.inputs) if spec.inputs else (x,)
        try:
            pre, out = L.forward_layer(spec, ins)
        except ShapeError:
            raise
        except ValueError as exc:
            raise ShapeError(f"layer '{spec.id}': {exc}") from None
        if not np.all(np.isfinite(out)):
            raise NumericsError(f"non-finite activation at layer '{spec.id}'")
        values[spec.id] = out
        records.append(LayerRecord(spec.id, ins, pre, out))
    return values[out_id], ActivationTrace(tuple(records))


def forward(net: NetworkGraph, x) -> np.ndarray:
    out, _ = forward_with_trace(net, x)
    return out


def softmax(z) -> np.ndarray:
    """Stable softmax of a rank-1 vector of at least two logits."""
    z = as_tensor(z)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ArityError(f"softmax needs a rank-1 vector of length >= 2, got shape {z.shape}")
    require_finite(z, "softmax input")
    return L.softmax_lastaxis(z)


# ---------------------------------------------------------------------------
# gradients


def presoftmax(net: NetworkGraph, trace: ActivationTrace) -> tuple[np.ndarray, str]:
    """Logits feeding the terminal softmax (or the raw output) and the id of
    the layer producing them."""
    out_id = net.output_id
    terminal = net.layer(out_id)
    if terminal.kind == L.SOFTMAX:
        if not terminal.inputs:
            raise ShapeError("softmax cannot be the entry layer")
        src = terminal.inputs[0]
        return trace.record(src).output, src
    return trace.record(out_id).output, out_id


def backprop(
    net: NetworkGraph,
    trace: ActivationTrace,
    seed: np.ndarray,
    start_layer_id: str,
    want_weight_grads: bool = False,
):
    """Reverse-mode pass from ``start_layer_id`` (seeded with ``seed``) back
    to the network input. Returns (d_input, weight_grads, bias_grads)."""
    cot: dict[str, np.ndarray] = {start_layer_id: np.asarray(seed, dtype=np.float64)}
    wgrads: dict[str, np.ndarray] = {}
    bgrads: dict[str, np.ndarray] = {}
    d_input = np.zeros(net.input_shape)
    by_id = {rec.layer_id: rec for rec in trace.records}
    for spec in reversed(net.layers):
        g = cot.pop(spec.id, None)
        if g is None:
            continue
        rec = by_id[spec.id]
        d_ins, dw, db = L.backward_layer(spec, rec.inputs, rec.output, g)
        if want_weight_grads:
            if dw is not None:
                wgrads[spec.id] = wgrads.get(spec.id, 0.0) + dw
            if db is not None:
                bgrads[spec.id] = bgrads.get(spec.id, 0.0) + db
        sources = spec.inputs or (INPUT,)
        for src, d in zip(sources, d_ins):
            if src == INPUT:
                d_input = d_input + d
            elif src in cot:
                cot[src] = cot[src] + d
            else:
                cot[src] = d
    return d_input, wgrads, bgrads


def _check_class(net: NetworkGraph, logits: np.ndarray, class_index: int) -> None:
    if logits.ndim != 1:
        raise ShapeError(
            f"classifier output must be rank-1 to take a class gradient, got {logits.shape}"
        )
    if not 0 <= class_index < logits.shape[0]:
        raise IndexError(
            f"class index {class_index} out of range for {logits.shape[0]} classes"
        )


def gradient(net: NetworkGraph, x, class_index: int) -> np.ndarray:
    """d(pre-softmax logit of ``class_index``) / d(input), shaped like the input."""
    _, trace = forward_with_trace(net, x)
    logits, start = presoftmax(net, trace)
    _check_class(net, logits, class_index)
    seed = np.zeros_like(logits)
    seed[class_index] = 1.0
    d_input, _, _ = backprop(net, trace, seed, start)
    return d_input


def _discrete_signature(net: NetworkGraph, trace: ActivationTrace):
    """ReLU on/off masks and pool argmax choices: the structure that must not
    change between the two sides of a central difference."""
    sig = []
    for spec in net.layers:
        rec = trace.record(spec.id)
        if spec.kind == L.RELU:
            sig.append(rec.pre_activation > 0.0)
        elif spec.kind == L.MAXPOOL2D:
            (ph, pw), stride, padding = L.pool_params(spec)
            pads, _, _ = L._conv_geometry(rec.inputs[0].shape, ph, pw, stride, padding)
            xp = L._pad2d(rec.inputs[0], pads, value=-np.inf)
            win = np.lib.stride_tricks.sliding_window_view(xp, (ph, pw), axis=(0, 1))
            win = win[::stride, ::stride]
            sig.append(win.reshape(win.shape[:3] + (-1,)).argmax(axis=3))
    return sig


def finite_difference_gradient(
    net: NetworkGraph, x, class_index: int, step: float = 1e-5
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient of the class logit plus a boolean mask of
    kink coordinates (where a ReLU flips or a pool argmax moves between the
    two evaluation points)."""
    x = as_tensor(x)
    if step <= 0:
        raise ValueError("step must be positive")
    grad = np.zeros_like(x)
    kinks = np.zeros(x.shape, dtype=bool)
    flat = x.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy(); xp[i] += step
        xm = flat.copy(); xm[i] -= step
        _, tp = forward_with_trace(net, xp.reshape(x.shape))
        _, tm = forward_with_trace(net, xm.reshape(x.shape))
        lp, _ = presoftmax(net, tp)
        lm, _ = presoftmax(net, tm)
        _check_class(net, lp, class_index)
        grad.reshape(-1)[i] = (lp[class_index] - lm[class_index]) / (2.0 * step)
        sp = _discrete_signature(net, tp)
        sm = _discrete_signature(net, tm)
        if any(not np.array_equal(a, b) for a, b in zip(sp, sm)):
            kinks.reshape(-1)[i] = True
    return grad, kinks


def check_gradient(net: NetworkGraph, x, class_index: int, step: float = 1e-5) -> float:
    """Max relative deviation between the analytic gradient and central finite
    differences, skipping kink coordinates."""
    analytic = gradient(net, x, class_index)
    fd, kinks = finite_difference_gradient(net, x, class_index, step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-12)
    rel = np.abs(analytic - fd) / denom
    rel[kinks] = 0.0
    return float(rel.max()) if rel.size else 0.0
