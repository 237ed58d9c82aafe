"""Exception hierarchy mapped to CLI exit codes (see cli module)."""


class MosvoxError(Exception):
    """Base class for all package errors."""


class ConfigError(MosvoxError):
    """Invalid configuration value or unparseable config file."""


class ManifestError(MosvoxError):
    """Inconsistent run inputs (missing files, scan/pose count mismatch)."""


class FormatError(MosvoxError):
    """Malformed scan, pose, or label data."""


class EvaluationError(MosvoxError):
    """Prediction/ground-truth mismatch during scoring."""
