"""Exception hierarchy shared by every xsep module."""


class XsepError(Exception):
    """Base class for all library errors."""


class ShapeError(XsepError, ValueError):
    pass


class GeometryError(XsepError, ValueError):
    """A convolution or pooling geometry yields an empty output."""


class ParameterError(XsepError, ValueError):
    pass


class SizeError(XsepError, ValueError):
    pass


class FormatError(XsepError, ValueError):
    """Bad magic bytes, version or truncated payload in a binary file."""


class DataError(XsepError, ValueError):
    pass


class ConfigError(XsepError, ValueError):
    pass


class NonFiniteLossError(XsepError, FloatingPointError):
    pass
