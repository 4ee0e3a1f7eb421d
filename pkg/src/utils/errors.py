"""
Exception hierarchy shared by the simulation, analysis and optics packages
"""
from typing import Optional


class BiprismError(Exception):
    """Base class for every error raised by the toolkit"""

    # Pipelines set this to the stage that failed
    stage: Optional[str] = None


class ParameterDomainError(BiprismError, ValueError):
    """A parameter is outside its allowed domain"""


class UndefinedAlphaError(BiprismError):
    """alpha cannot be evaluated because one path recorded no counts"""


class InsufficientDataError(BiprismError):
    """Not enough runs or samples for the requested statistic"""


class FitFailureError(BiprismError):
    """A nonlinear fit did not converge or the data has no usable structure"""

    def __init__(self, message: str, last_residual: Optional[float] = None):
        super().__init__(message)
        self.last_residual = last_residual


class ClippingError(BiprismError):
    """The sampling grid cuts off a significant part of the beam"""


class SamplingError(BiprismError):
    """The grid cannot hold the propagated field without aliasing"""

    def __init__(self, message: str, required_points: Optional[int] = None):
        super().__init__(message)
        self.required_points = required_points


class NoFringeError(BiprismError):
    """The intensity pattern has fewer than three extrema"""


class UnidentifiableZError(BiprismError):
    """The SSE landscape is flat over the scanned distances"""


class SupportError(BiprismError):
    """The intensity pattern does not cover the camera sensor"""


class ConfigError(BiprismError):
    """Invalid or unknown configuration key"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class ArtifactError(BiprismError):
    """An artifact file could not be read, parsed or written"""
