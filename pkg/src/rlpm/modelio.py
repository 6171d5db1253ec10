"""Bit-exact model container: JSON manifest plus little-endian float32 blob.

``save(net, "m")`` writes ``m.json`` and ``m.bin``. The manifest is
canonical JSON (sorted keys, no insignificant whitespace) so that
save-load-save is byte-identical. The blob is the concatenation of all
weight and bias arrays, row-major float32, in layer order; the manifest
records byte offsets, lengths, shapes and a CRC32 (IEEE) of the blob.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers as L
from .blocks import shortcut_kind
from .errors import CorruptionError, FormatError, IoError, RlpmError, ShapeError
from .graph import NetworkGraph, infer_shapes, validate_graph
from .tensor import frozen

MAGIC = "RLPM1"

_INT_KEYS = {"out_channels", "stride", "units"}


def _manifest_layer(spec: L.LayerSpec, offset: int) -> tuple[dict, list[np.ndarray], int]:
    arrays = []
    entry = {
        "id": spec.id,
        "kind": spec.kind,
        "params": {k: spec.params[k] for k in sorted(spec.params)},
        "inputs": list(spec.inputs),
    }
    for name, arr in (("weight", spec.weights), ("bias", spec.bias)):
        if arr is None:
            entry[f"{name}_offset"] = 0
            entry[f"{name}_len"] = 0
            entry[f"{name}_shape"] = None
        else:
            data = np.ascontiguousarray(arr, dtype="<f4")
            entry[f"{name}_offset"] = offset
            entry[f"{name}_len"] = data.nbytes
            entry[f"{name}_shape"] = list(arr.shape)
            arrays.append(data)
            offset += data.nbytes
    return entry, arrays, offset


def _canonical(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def save(net: NetworkGraph, path) -> None:
    """Write ``<path>.json`` and ``<path>.bin``; weights stored as float32."""
    validate_graph(net)
    base = Path(path)
    offset = 0
    layer_entries = []
    chunks: list[np.ndarray] = []
    for spec in net.layers:
        entry, arrays, offset = _manifest_layer(spec, offset)
        layer_entries.append(entry)
        chunks.extend(arrays)
    blob = b"".join(a.tobytes() for a in chunks)
    manifest = {
        "magic": MAGIC,
        "name": net.name,
        "input_shape": list(net.input_shape),
        "output_classes": net.output_classes,
        "layers": layer_entries,
        "blob_checksum": zlib.crc32(blob) & 0xFFFFFFFF,
    }
    try:
        base.with_name(base.name + ".json").write_bytes(_canonical(manifest))
        base.with_name(base.name + ".bin").write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write model '{base}': {exc}") from None


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise FormatError(message)


def _read_array(blob: bytes, entry: dict, which: str, layer_id: str) -> np.ndarray | None:
    shape = entry[f"{which}_shape"]
    off = entry[f"{which}_offset"]
    length = entry[f"{which}_len"]
    _require(
        isinstance(off, int) and isinstance(length, int) and off >= 0 and length >= 0,
        f"layer '{layer_id}': {which} offset/length must be non-negative integers",
    )
    if shape is None:
        _require(length == 0, f"layer '{layer_id}': {which} has no shape but non-zero span")
        return None
    _require(isinstance(shape, list), f"layer '{layer_id}': {which} shape must be a list")
    shape = tuple(int(v) for v in shape)
    _require(all(v > 0 for v in shape), f"layer '{layer_id}': non-positive {which} extent")
    _require(off % 4 == 0, f"layer '{layer_id}': {which} offset {off} not 4-byte aligned")
    expected = int(np.prod(shape)) * 4
    _require(
        length == expected,
        f"layer '{layer_id}': {which} span {length} bytes does not match shape {shape}",
    )
    if off + length > len(blob):
        raise CorruptionError(
            f"layer '{layer_id}': {which} span [{off}, {off + length}) exceeds blob "
            f"of {len(blob)} bytes"
        )
    data = np.frombuffer(blob, dtype="<f4", count=expected // 4, offset=off)
    return frozen(data.astype(np.float64).reshape(shape))


def load(path) -> NetworkGraph:
    """Read and fully validate a model container."""
    base = Path(path)
    jpath = base.with_name(base.name + ".json")
    bpath = base.with_name(base.name + ".bin")
    try:
        raw = jpath.read_bytes()
        blob = bpath.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read model '{base}': {exc}") from None
    try:
        manifest = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from None
    _require(isinstance(manifest, dict), "manifest must be a JSON object")
    if manifest.get("magic") != MAGIC:
        raise FormatError(f"bad magic {manifest.get('magic')!r}, expected {MAGIC!r}")
    for key in ("input_shape", "output_classes", "layers", "blob_checksum"):
        _require(key in manifest, f"manifest missing '{key}'")
    checksum = zlib.crc32(blob) & 0xFFFFFFFF
    if checksum != manifest["blob_checksum"]:
        raise CorruptionError(
            f"blob checksum {checksum:#010x} does not match manifest "
            f"{int(manifest['blob_checksum']):#010x}"
        )
    _require(isinstance(manifest["layers"], list) and manifest["layers"],
             "manifest must list at least one layer")

    spans: list[tuple[int, int, str]] = []
    specs = []
    for entry in manifest["layers"]:
        _require(isinstance(entry, dict), "layer entries must be JSON objects")
        for key in ("id", "kind", "params", "inputs",
                    "weight_offset", "weight_len", "weight_shape",
                    "bias_offset", "bias_len", "bias_shape"):
            _require(key in entry, f"layer entry missing '{key}'")
        lid = str(entry["id"])
        _require(entry["kind"] in L.LAYER_KINDS, f"layer '{lid}': unknown kind '{entry['kind']}'")
        params = entry["params"]
        _require(isinstance(params, dict), f"layer '{lid}': params must be an object")
        _require(isinstance(entry["inputs"], list), f"layer '{lid}': inputs must be a list")
        for k in _INT_KEYS & params.keys():
            _require(isinstance(params[k], int), f"layer '{lid}': param '{k}' must be an integer")
        weights = _read_array(blob, entry, "weight", lid)
        bias = _read_array(blob, entry, "bias", lid)
        for which in ("weight", "bias"):
            if entry[f"{which}_len"]:
                spans.append((int(entry[f"{which}_offset"]), int(entry[f"{which}_len"]), lid))
        specs.append(
            L.LayerSpec(
                id=lid,
                kind=str(entry["kind"]),
                params=dict(params),
                inputs=tuple(str(s) for s in entry["inputs"]),
                weights=weights,
                bias=bias,
            )
        )
    spans.sort()
    for (o1, l1, id1), (o2, _, id2) in zip(spans, spans[1:]):
        _require(o1 + l1 <= o2, f"weight spans of '{id1}' and '{id2}' overlap")

    try:
        net = NetworkGraph(
            layers=tuple(specs),
            input_shape=tuple(int(v) for v in manifest["input_shape"]),
            output_classes=int(manifest["output_classes"]),
            name=str(manifest.get("name", "")),
        )
        validate_graph(net)  # raises ShapeError naming the offending layer
    except RlpmError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        # malformed fields in an untrusted manifest (missing kernel, odd types)
        raise FormatError(f"invalid manifest field: {exc!r}") from None
    return net


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    text: str
    problems: tuple[str, ...] = field(default_factory=tuple)


def _param_count(spec: L.LayerSpec) -> int:
    n = 0
    if spec.weights is not None:
        n += spec.weights.size
    if spec.bias is not None:
        n += spec.bias.size
    return n


def validate(path) -> ValidationReport:
    """Describe a model container; problems are reported, not raised."""
    lines: list[str] = []
    try:
        net = load(path)
    except RlpmError as exc:
        kind = type(exc).__name__
        return ValidationReport(
            ok=False,
            text=f"status: INVALID ({kind}: {exc})\n",
            problems=(f"{kind}: {exc}",),
        )
    shapes = infer_shapes(net)
    lines.append(f"model: {net.name or '(unnamed)'}")
    lines.append(f"input shape: {'x'.join(map(str, net.input_shape))}")
    lines.append(f"output classes: {net.output_classes}")
    lines.append("layers:")
    total = 0
    for spec in net.layers:
        n = _param_count(spec)
        total += n
        shape = "x".join(map(str, shapes[spec.id]))
        detail = ""
        if spec.kind == L.CONV2D:
            kh, kw = spec.params["kernel"]
            detail = f" {kh}x{kw}/s{spec.params.get('stride', 1)} {spec.params.get('padding', 'valid')}"
        elif spec.kind in (L.MAXPOOL2D, L.AVGPOOL2D):
            (ph, pw), stride, padding = L.pool_params(spec)
            detail = f" {ph}x{pw}/s{stride} {padding}"
        lines.append(f"  {spec.id:<24} {spec.kind:<16}{detail:<16} -> {shape:<12} params={n}")
    lines.append(f"total parameters: {total}")
    adds = [spec.id for spec in net.layers if spec.kind == L.ADD]
    if adds:
        kinds = ", ".join(f"{a}={shortcut_kind(net, a)}" for a in adds)
        lines.append(f"residual units: {len(adds)} ({kinds})")
    lines.append("status: OK")
    return ValidationReport(ok=True, text="\n".join(lines) + "\n")
