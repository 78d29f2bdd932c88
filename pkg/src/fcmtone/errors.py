"""Exception types shared across the engine."""


class FcmtoneError(Exception):
    """Base class for all engine errors."""


class FormatError(FcmtoneError):
    """Malformed or unsupported byte stream (image codec or weight file)."""


class DegenerateInputError(FcmtoneError):
    """Well-formed input image that the pipeline cannot process (e.g. all zero)."""


class ConfigError(FcmtoneError):
    """Parameter outside its documented domain."""


class DivergenceError(FcmtoneError):
    """Non-finite value appeared during optimization."""
