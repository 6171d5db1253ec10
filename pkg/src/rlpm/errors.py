"""Exception types shared across the package."""


class RlpmError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeError(RlpmError):
    """Tensor or layer shapes are inconsistent; message names the layer."""


class NumericsError(RlpmError):
    """A NaN or Inf appeared where finite values are required."""


class ArityError(RlpmError):
    """An operation received a vector of unusable length."""


class InputError(RlpmError):
    """Invalid argument values (empty dataset, non-monotone curve, ...)."""


class IoError(RlpmError):
    """File could not be read or written."""


class FormatError(RlpmError):
    """A model container violates the RLPM1 format."""


class CorruptionError(RlpmError):
    """Model container bytes do not match their checksum or length."""


class ConversionError(RlpmError):
    """Patch classifier cannot be rewritten into an all-convolutional net."""


class UnsupportedRuleError(RlpmError):
    """The chosen relevance rule cannot handle a layer in the graph."""


class CliUsageError(RlpmError):
    """Bad command line; maps to exit code 1."""
