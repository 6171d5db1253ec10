"""From-scratch CNN inference with relevance-propagation explanations.

The package provides forward inference over a small layer zoo, analytic
gradients, layer-wise relevance propagation (plus the Taylor-decomposition
rule family), pixel-flipping evaluation of saliency maps, activation
maximization, patch-to-whole-image classifier conversion, heatmap
rendering, and a bit-exact model container, all behind one CLI.
"""
from .blocks import BlockSpec, build_resnet_block, shortcut_kind
from .errors import (
    ArityError,
    CliUsageError,
    ConversionError,
    CorruptionError,
    FormatError,
    InputError,
    IoError,
    NumericsError,
    RlpmError,
    ShapeError,
    UnsupportedRuleError,
)
from .flipping import FlipCurve, auc, compare_methods, pixel_flip_curve
from .graph import (
    ActivationTrace,
    GraphBuilder,
    NetworkGraph,
    check_gradient,
    forward,
    forward_with_trace,
    gradient,
    infer_shapes,
    softmax,
    with_input_shape,
)
from .layers import LayerSpec
from .modelio import load, save, validate
from .prototype import PrototypeConfig, activation_maximize
from .relprop import (
    DeepTaylorPreset,
    RelevanceMap,
    RuleConfig,
    conservation_report,
    deep_taylor_bounded,
    deep_taylor_unbounded,
    explain,
    gradient_times_input,
)
from .render import ColorScale, normalize_relevance, to_image
from .train import accuracy, train_toy
from .wholeimage import (
    HeadConfig,
    PatchClassifier,
    WholeImageHeatmap,
    build_whole_image_classifier,
    classify_whole,
    dense_to_conv,
    effective_stride,
    heatmap,
)

__all__ = [
    "ActivationTrace",
    "ArityError",
    "BlockSpec",
    "CliUsageError",
    "ColorScale",
    "ConversionError",
    "CorruptionError",
    "DeepTaylorPreset",
    "FlipCurve",
    "FormatError",
    "GraphBuilder",
    "HeadConfig",
    "InputError",
    "IoError",
    "LayerSpec",
    "NetworkGraph",
    "NumericsError",
    "PatchClassifier",
    "PrototypeConfig",
    "RelevanceMap",
    "RlpmError",
    "RuleConfig",
    "ShapeError",
    "UnsupportedRuleError",
    "WholeImageHeatmap",
    "accuracy",
    "activation_maximize",
    "auc",
    "build_resnet_block",
    "build_whole_image_classifier",
    "check_gradient",
    "classify_whole",
    "compare_methods",
    "conservation_report",
    "deep_taylor_bounded",
    "deep_taylor_unbounded",
    "dense_to_conv",
    "effective_stride",
    "explain",
    "forward",
    "forward_with_trace",
    "gradient",
    "gradient_times_input",
    "heatmap",
    "infer_shapes",
    "load",
    "normalize_relevance",
    "pixel_flip_curve",
    "save",
    "shortcut_kind",
    "softmax",
    "to_image",
    "train_toy",
    "validate",
    "with_input_shape",
]
