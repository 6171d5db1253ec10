"""Command-line front end.

Subcommands: infer, explain, flip, compare, prototype, convert, validate.
Exit codes: 0 success, 1 usage error, 2 data or model error, 3 numerics
error. Every run logs its fully resolved configuration (defaults
expanded) to standard error; standard output is deterministic for
identical invocations, so runs can be compared byte for byte.

Model paths name the container base: ``--model m`` reads ``m.json`` and
``m.bin`` (a trailing .json or .bin on the argument is ignored). Images
are PGM (P2/P5) or raw32; single-channel images are replicated across the
model's input channels when needed.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import flipping, imageio, modelio, relprop, render
from .errors import CliUsageError, InputError, NumericsError, RlpmError, ShapeError
from .graph import NetworkGraph, forward
from .layers import SOFTMAX, softmax_lastaxis
from .prototype import PrototypeConfig, activation_maximize
from .tensor import as_tensor
from .wholeimage import (
    HeadConfig,
    PatchClassifier,
    build_whole_image_classifier,
    dense_to_conv,
    effective_stride,
)

DEFAULT_EPSILON = 1e-6

RULE_CHOICES = (
    "lrp0",
    "lrp-eps",
    "zplus",
    "zb",
    "wsquare",
    "deep-taylor",
    "gxi",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # route argparse's usage failures through the exit-code contract
        raise CliUsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _log_config(args: argparse.Namespace) -> None:
    for key in sorted(vars(args)):
        if key in ("func", "command"):
            continue
        print(f"config: {key}={getattr(args, key)}", file=sys.stderr)


def _model_base(path: str) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p


def _load_model(path: str) -> NetworkGraph:
    return modelio.load(_model_base(path))


def _load_image(net: NetworkGraph, path: str, fmt: str | None) -> np.ndarray:
    if fmt == "raw32" or (fmt is None and str(path).endswith(imageio.RAW32_SUFFIX)):
        arr = imageio.read_raw32(path)
    else:
        arr = imageio.read_pgm(path)
    return fit_image(net, arr)


def fit_image(net: NetworkGraph, arr: np.ndarray) -> np.ndarray:
    """Match an image array to the model's input shape: add or replicate
    the channel axis, or flatten for vector models."""
    target = tuple(net.input_shape)
    arr = as_tensor(arr)
    if len(target) == 3:
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise InputError(f"expected an image, got shape {arr.shape}")
        if arr.shape[2] == 1 and target[2] > 1:
            arr = np.repeat(arr, target[2], axis=2)
        if arr.shape != target:
            raise ShapeError(f"image shape {arr.shape} does not match model input {target}")
        return arr
    if len(target) == 1:
        flat = arr.reshape(-1)
        if flat.shape[0] != target[0]:
            raise ShapeError(
                f"image has {flat.shape[0]} values, model input needs {target[0]}"
            )
        return flat
    raise ShapeError(f"unsupported model input shape {target}")


def _probabilities(net: NetworkGraph, x: np.ndarray) -> np.ndarray:
    out = forward(net, x)
    if net.layer(net.output_id).kind != SOFTMAX:
        out = softmax_lastaxis(out)
    if out.ndim == 3 and out.shape[0] == out.shape[1] == 1:
        out = out[0, 0]
    if out.ndim != 1:
        raise InputError(
            f"model emits a {out.shape} map, not class probabilities; "
            "use a classifier model"
        )
    return out


def _config_from_flags(rule: str, epsilon: float | None, bounds: str | None):
    parsed = None
    if bounds is not None:
        parts = bounds.split(",")
        if len(parts) != 2:
            raise CliUsageError(f"--bounds must be LO,HI, got '{bounds}'")
        try:
            parsed = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise CliUsageError(f"--bounds must be numeric, got '{bounds}'") from None
    try:
        if rule == "lrp0":
            return relprop.RuleConfig(relprop.LRP0)
        if rule == "lrp-eps":
            if epsilon is None:
                epsilon = DEFAULT_EPSILON
                print(f"config: epsilon defaulted to {epsilon}", file=sys.stderr)
            return relprop.RuleConfig(relprop.LRP_EPS, epsilon=epsilon)
        if rule == "zplus":
            return relprop.RuleConfig(relprop.ZPLUS)
        if rule == "wsquare":
            return relprop.RuleConfig(relprop.WSQUARE)
        if rule == "gxi":
            return relprop.RuleConfig(relprop.GRADIENT_TIMES_INPUT)
        if rule == "zb":
            if parsed is None:
                raise CliUsageError("rule 'zb' needs --bounds LO,HI")
            return relprop.RuleConfig(relprop.ZB, input_bounds=parsed)
        if rule == "deep-taylor":
            if parsed is None:
                return relprop.deep_taylor_unbounded()
            return relprop.deep_taylor_bounded(*parsed)
    except InputError as exc:
        raise CliUsageError(str(exc)) from None
    raise CliUsageError(f"unknown rule '{rule}'")


# ---------------------------------------------------------------------------
# relevance-map CSV interchange


def write_map_csv(path, values: np.ndarray) -> None:
    """Columns row,col,channel,value; vector inputs use col=channel=0."""
    grid = values if values.ndim == 3 else values.reshape(-1, 1, 1)
    lines = ["row,col,channel,value"]
    h, w, c = grid.shape
    for r in range(h):
        for col in range(w):
            for ch in range(c):
                lines.append(f"{r},{col},{ch},{float(grid[r, col, ch])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_map_csv(path, shape: tuple[int, ...]) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read map '{path}': {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "row,col,channel,value":
        raise InputError(f"map '{path}' missing 'row,col,channel,value' header")
    grid_shape = shape if len(shape) == 3 else (shape[0], 1, 1)
    grid = np.full(grid_shape, np.nan)
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise InputError(f"bad map line '{ln}'")
        try:
            r, c, ch = int(parts[0]), int(parts[1]), int(parts[2])
            value = float(parts[3])
        except ValueError:
            raise InputError(f"bad map line '{ln}'") from None
        if not (0 <= r < grid_shape[0] and 0 <= c < grid_shape[1] and 0 <= ch < grid_shape[2]):
            raise InputError(f"map position {(r, c, ch)} outside {grid_shape}")
        grid[r, c, ch] = value
    if np.isnan(grid).any():
        raise InputError(f"map '{path}' does not cover every input position")
    return grid.reshape(shape)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_infer(args) -> int:
    net = _load_model(args.model)
    x = _load_image(net, args.image, args.format)
    probs = _probabilities(net, x)
    print("class,probability")
    for i, p in enumerate(probs):
        print(f"{i},{float(p)!r}")
    return 0


def _cmd_explain(args) -> int:
    net = _load_model(args.model)
    x = _load_image(net, args.image, args.format)
    config = _config_from_flags(args.rule, args.epsilon, args.bounds)
    m = relprop.explain(net, x, args.target_class, config)
    write_map_csv(args.out, m.values)
    if args.png_out:
        render.render_relevance(m, args.png_out)
    report = relprop.conservation_report(m)
    print("start_value,sum,leak")
    print(f"{report.start_value!r},{report.sum_in!r},{report.leak!r}")
    return 0


def _cmd_flip(args) -> int:
    net = _load_model(args.model)
    x = _load_image(net, args.image, args.format)
    values = read_map_csv(args.map, x.shape)
    target = args.target_class
    if target is None:
        target = int(np.argmax(_probabilities(net, x)))
        print(f"config: class defaulted to predicted {target}", file=sys.stderr)
    curve = flipping.pixel_flip_curve(
        net, x, values, args.policy, args.batch, target_class=target
    )
    print("fraction,score")
    for f, s in zip(curve.fractions, curve.scores):
        print(f"{f!r},{s!r}")
    print(f"auc,{curve.auc:.6f}")
    return 0


def _cmd_compare(args) -> int:
    net = _load_model(args.model)
    folder = Path(args.images)
    if not folder.is_dir():
        raise InputError(f"--images '{folder}' is not a directory")
    paths = sorted(
        p for p in folder.iterdir() if p.suffix in (".pgm", imageio.RAW32_SUFFIX)
    )
    if not paths:
        raise InputError(f"no .pgm or .raw32 images in '{folder}'")
    images = [(p.stem, _load_image(net, str(p), None)) for p in paths]
    methods = {}
    for name in args.rules.split(","):
        name = name.strip()
        if not name:
            continue
        methods[name] = _config_from_flags(name, args.epsilon, args.bounds)
    if not methods:
        raise CliUsageError("--rules must list at least one rule")
    table = flipping.compare_methods(
        net, images, methods, args.policy, args.batch, seed=args.seed
    )
    print("method,image_id,auc")
    for row in table.rows:
        print(f"{row.method},{row.image_id},{row.auc:.6f}")
    for s in table.summaries:
        print(f"{s.method},mean,{s.mean_auc:.6f}")
        print(f"{s.method},std,{s.std_auc:.6f}")
    return 0


def _cmd_prototype(args) -> int:
    net = _load_model(args.model)
    cfg = PrototypeConfig(
        target_class=args.target_class,
        l2_penalty=args.l2_penalty,
        steps=args.steps,
        step_size=args.step_size,
        init=args.init,
        sigma=args.sigma,
        seed=args.seed,
    )
    x_star, trace = activation_maximize(net, cfg)
    plane = x_star
    if plane.ndim == 3:
        plane = plane.sum(axis=2)
    elif plane.ndim == 1:
        plane = plane.reshape(1, -1)
    render.to_image(render.normalize_relevance(plane), render.ColorScale(), args.out)
    print("step,objective")
    for i, value in enumerate(trace):
        print(f"{i},{value!r}")
    return 0


def _cmd_convert(args) -> int:
    net = _load_model(args.patch_model)
    patch = PatchClassifier(net)
    fconv = dense_to_conv(patch)
    p, q, _ = fconv.input_shape
    if args.image_size:
        parts = [int(v) for v in args.image_size.split(",")]
        r, s = (parts[0], parts[0]) if len(parts) == 1 else (parts[0], parts[1])
    else:
        r, s = 2 * p, 2 * q
        print(f"config: image_size defaulted to {r},{s}", file=sys.stderr)
    whole = build_whole_image_classifier(
        fconv,
        (r, s),
        HeadConfig(pool_window=args.pool, hidden_widths=(args.hidden,)),
        rng=np.random.default_rng(args.seed),
    )
    out = _model_base(args.out)
    modelio.save(whole, out)
    print(f"patch,{p}x{q}")
    print(f"image,{r}x{s}")
    print(f"stride,{effective_stride(fconv)}")
    print(modelio.validate(out).text, end="")
    return 0


def _cmd_validate(args) -> int:
    report = modelio.validate(_model_base(args.model))
    print(report.text, end="")
    return 0 if report.ok else 2


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rlpm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common_model(p, flag="--model"):
        p.add_argument(flag, required=True, help="model container base path")

    def common_image(p):
        p.add_argument("--image", required=True, help="input image (.pgm or .raw32)")
        p.add_argument("--format", choices=("pgm", "raw32"), default=None,
                       help="force the image format (default: by suffix)")

    p = sub.add_parser("infer", help="print class probabilities for an image")
    common_model(p)
    common_image(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("explain", help="write a relevance map for one class")
    common_model(p)
    common_image(p)
    p.add_argument("--class", dest="target_class", type=int, required=True)
    p.add_argument("--rule", choices=RULE_CHOICES, required=True)
    p.add_argument("--epsilon", type=float, default=None,
                   help="stabilizer for lrp-eps (default 1e-6)")
    p.add_argument("--bounds", default=None, help="LO,HI input bounds for zb/deep-taylor")
    p.add_argument("--out", required=True, help="relevance map CSV path")
    p.add_argument("--png-out", default=None, help="optional rendered heatmap (.ppm)")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("flip", help="pixel-flipping curve for a saved map")
    common_model(p)
    common_image(p)
    p.add_argument("--map", required=True, help="relevance map CSV from 'explain'")
    p.add_argument("--policy", choices=flipping.POLICIES, default=flipping.ZERO)
    p.add_argument("--batch", type=float, default=flipping.DEFAULT_BATCH_FRACTION,
                   help="fraction of pixels flipped per step")
    p.add_argument("--class", dest="target_class", type=int, default=None,
                   help="class to track (default: the model's prediction)")
    p.set_defaults(func=_cmd_flip)

    p = sub.add_parser("compare", help="flip-AUC table over an image directory")
    common_model(p)
    p.add_argument("--images", required=True, help="directory of .pgm/.raw32 images")
    p.add_argument("--rules", required=True, help="comma-separated rule list")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--bounds", default=None)
    p.add_argument("--policy", choices=flipping.POLICIES, default=flipping.ZERO)
    p.add_argument("--batch", type=float, default=flipping.DEFAULT_BATCH_FRACTION)
    p.add_argument("--seed", type=int, default=0, help="random-baseline seed")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("prototype", help="activation-maximization prototype image")
    common_model(p)
    p.add_argument("--class", dest="target_class", type=int, required=True)
    p.add_argument("--lambda", dest="l2_penalty", type=float, default=0.01,
                   help="l2 regulator weight")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--init", choices=("zeros", "gaussian"), default="zeros")
    p.add_argument("--sigma", type=float, default=0.1, help="gaussian init scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="prototype image path (.pgm)")
    p.set_defaults(func=_cmd_prototype)

    p = sub.add_parser("convert", help="patch model to whole-image classifier")
    p.add_argument("--patch-model", required=True, help="5-class patch model base path")
    p.add_argument("--out", required=True, help="output model base path")
    p.add_argument("--image-size", default=None, help="R or R,S (default: twice the patch)")
    p.add_argument("--pool", type=int, default=2, help="head pooling window")
    p.add_argument("--hidden", type=int, default=64, help="head hidden width")
    p.add_argument("--seed", type=int, default=0, help="head weight init seed")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("validate", help="check and describe a model container")
    common_model(p)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    _log_config(args)
    try:
        return args.func(args)
    except CliUsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return 3
    except RlpmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
