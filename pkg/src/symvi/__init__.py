"""Black-box variational inference with location-scale families, plus the
diagnostics needed to check when it recovers the mean and correlations of a
target exactly."""

__version__ = "0.1.0"
