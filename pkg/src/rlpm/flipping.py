"""Heatmap quality by pixel flipping.

Perturb the most relevant input elements first, in batches, and track the
classifier's softmax score for the target class; a faster decay (lower
area under the curve) means the map ranked truly influential pixels
higher. ``compare_methods`` runs several rules plus a seeded random
baseline over an image set.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import fmean, pstdev

import numpy as np

from .errors import InputError, ShapeError
from .graph import NetworkGraph, forward_with_trace, presoftmax
from .layers import softmax_lastaxis
from .relprop import DeepTaylorPreset, RelevanceMap, RuleConfig, explain
from .tensor import as_tensor

ZERO = "zero"
IMAGE_MEAN = "mean"
POLICIES = (ZERO, IMAGE_MEAN)

RANDOM_BASELINE = "random"

DEFAULT_BATCH_FRACTION = 0.01


def worker_count() -> int:
    """Worker cap from the RLPM_THREADS environment variable (0 or 1 means
    sequential)."""
    raw = os.environ.get("RLPM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"RLPM_THREADS must be an integer, got {raw!r}") from None
    return max(0, n)


def class_probability(net: NetworkGraph, x, target_class: int) -> float:
    """Softmax probability of the target class for one input."""
    _, trace = forward_with_trace(net, x)
    logits, _ = presoftmax(net, trace)
    if not 0 <= target_class < logits.shape[0]:
        raise InputError(
            f"target class {target_class} out of range for {logits.shape[0]} classes"
        )
    return float(softmax_lastaxis(logits)[target_class])


def auc(fractions, scores) -> float:
    """Area under the score curve by the trapezoidal rule."""
    fractions = as_tensor(fractions)
    scores = as_tensor(scores)
    if fractions.ndim != 1 or fractions.shape != scores.shape:
        raise InputError(
            f"fractions and scores must be equal-length vectors, got "
            f"{fractions.shape} and {scores.shape}"
        )
    if fractions.shape[0] < 2:
        raise InputError("need at least two curve points")
    if np.any(np.diff(fractions) <= 0):
        raise InputError("fractions must be strictly increasing")
    return float(np.trapezoid(scores, fractions))


@dataclass(frozen=True, eq=False)
class FlipCurve:
    fractions: tuple[float, ...]
    scores: tuple[float, ...]
    auc: float
    flip_value_policy: str
    batch_fraction: float


def pixel_flip_curve(
    net: NetworkGraph,
    x,
    relevance: RelevanceMap | np.ndarray,
    policy: str = ZERO,
    batch_fraction: float = DEFAULT_BATCH_FRACTION,
    target_class: int | None = None,
) -> FlipCurve:
    """Flip input elements to the policy value in descending-relevance
    order (row-major tie-break) and record the score after each batch.

    ``target_class`` defaults to the class recorded in the relevance map.
    """
    x = as_tensor(x)
    if isinstance(relevance, RelevanceMap):
        values = relevance.values
        if target_class is None:
            target_class = relevance.target_class
    else:
        values = as_tensor(relevance)
    if target_class is None:
        raise InputError("target_class required when relevance is a bare tensor")
    if values.shape != x.shape:
        raise ShapeError(
            f"relevance shape {values.shape} does not match input {x.shape}"
        )
    if policy not in POLICIES:
        raise InputError(f"policy must be one of {POLICIES}, got '{policy}'")
    if not 0 < batch_fraction <= 1:
        raise InputError(f"batch_fraction must be in (0, 1], got {batch_fraction}")

    fill = 0.0 if policy == ZERO else float(x.mean())
    total = x.size
    batch = math.ceil(batch_fraction * total)
    # argsort of the negated map: descending, stable, row-major on ties
    order = np.argsort(-values.reshape(-1), kind="stable")

    flat = x.reshape(-1).copy()
    fractions = [0.0]
    scores = [class_probability(net, x, target_class)]
    done = 0
    while done < total:
        take = min(batch, total - done)
        flat[order[done : done + take]] = fill
        done += take
        fractions.append(done / total)
        scores.append(class_probability(net, flat.reshape(x.shape), target_class))
    return FlipCurve(
        fractions=tuple(fractions),
        scores=tuple(scores),
        auc=auc(fractions, scores),
        flip_value_policy=policy,
        batch_fraction=batch_fraction,
    )


def random_relevance(shape, seed: int, image_index: int) -> np.ndarray:
    """Uniform random map; the stream is keyed by (seed, image index) so
    each image gets its own reproducible draw."""
    rng = np.random.default_rng([seed, image_index])
    return rng.random(shape)


@dataclass(frozen=True)
class MethodScore:
    method: str
    image_id: str
    auc: float


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean_auc: float
    std_auc: float


@dataclass(frozen=True, eq=False)
class MethodComparison:
    rows: tuple[MethodScore, ...]
    summaries: tuple[MethodSummary, ...]

    def summary(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)


def _predicted_class(net: NetworkGraph, x) -> int:
    _, trace = forward_with_trace(net, x)
    logits, _ = presoftmax(net, trace)
    return int(np.argmax(logits))


def compare_methods(
    net: NetworkGraph,
    images,
    methods: dict[str, RuleConfig | DeepTaylorPreset],
    policy: str = ZERO,
    batch_fraction: float = DEFAULT_BATCH_FRACTION,
    seed: int = 0,
    include_random: bool = True,
) -> MethodComparison:
    """Per-image flip AUC for every method plus the random baseline.

    Images may be a list of arrays or of (image_id, array) pairs; ids
    default to the zero-padded position. The target class of each image
    is the model's own prediction. Rows come back sorted by (method,
    image_id) no matter how the work was scheduled.
    """
    if RANDOM_BASELINE in methods:
        raise InputError(f"method name '{RANDOM_BASELINE}' is reserved for the baseline")
    named: list[tuple[str, np.ndarray]] = []
    for index, item in enumerate(images):
        if isinstance(item, tuple):
            named.append((str(item[0]), as_tensor(item[1])))
        else:
            named.append((f"{index:04d}", as_tensor(item)))
    if not named:
        raise InputError("need at least one image")

    def score_one(index: int) -> list[MethodScore]:
        image_id, x = named[index]
        target = _predicted_class(net, x)
        out = []
        for name, config in methods.items():
            m = explain(net, x, target, config)
            curve = pixel_flip_curve(net, x, m, policy, batch_fraction)
            out.append(MethodScore(name, image_id, curve.auc))
        if include_random:
            values = random_relevance(x.shape, seed, index)
            curve = pixel_flip_curve(
                net, x, values, policy, batch_fraction, target_class=target
            )
            out.append(MethodScore(RANDOM_BASELINE, image_id, curve.auc))
        return out

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(score_one, range(len(named))))
    else:
        chunks = [score_one(i) for i in range(len(named))]
    rows = sorted(
        (s for chunk in chunks for s in chunk), key=lambda s: (s.method, s.image_id)
    )
    summaries = []
    for method in sorted({s.method for s in rows}):
        aucs = [s.auc for s in rows if s.method == method]
        summaries.append(MethodSummary(method, fmean(aucs), pstdev(aucs)))
    return MethodComparison(rows=tuple(rows), summaries=tuple(summaries))
