"""User-facing parameters and the flat key = value config file format.

All fields are optional in the file; defaults follow the single shared
configuration used for every dataset: sigma_o equal to the voxel size,
p_min 0.99, kernel size 5, otsu_min 3, windows w_l=3 / w_d=100 / w_g=300.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

MODES = ("online", "delayed")


@dataclass
class Config:
    delta: float = 0.25
    sigma_o: float | None = None  # defaults to delta
    p_min: float = 0.99
    kernel_size: int = 5
    otsu_min: int = 3
    w_local: int = 3
    w_dynamic: int = 100
    w_global: int = 300
    r_max: float = 20.0
    dilation_radius: int = 1
    mode: str = "online"
    self_transition: float = 0.99
    edf_truncation: float | None = None  # defaults to 3 * sigma_o
    min_range: float = 0.5

    def __post_init__(self):
        if self.sigma_o is None:
            self.sigma_o = self.delta
        if self.edf_truncation is None:
            self.edf_truncation = 3.0 * self.sigma_o
        self.validate()

    def validate(self):
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.sigma_o <= 0:
            raise ConfigError(f"sigma_o must be positive, got {self.sigma_o}")
        if not 0.0 < self.p_min < 1.0:
            raise ConfigError(f"p_min must lie in (0, 1), got {self.p_min}")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ConfigError(
                f"kernel_size must be an odd integer >= 3, got {self.kernel_size}"
            )
        if self.otsu_min < 0:
            raise ConfigError(f"otsu_min must be non-negative, got {self.otsu_min}")
        if self.w_local < 1:
            raise ConfigError(f"w_local must be >= 1, got {self.w_local}")
        if self.w_dynamic < self.w_local:
            raise ConfigError("w_dynamic must be >= w_local")
        if self.w_global < self.w_dynamic:
            raise ConfigError("w_global must be >= w_dynamic")
        if self.r_max <= 0:
            raise ConfigError(f"r_max must be positive, got {self.r_max}")
        if self.dilation_radius < 0:
            raise ConfigError("dilation_radius must be non-negative")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.self_transition < 1.0:
            raise ConfigError("self_transition must lie in (0, 1)")
        # Below 3 sigma the Gaussian tail still carries ~1% likelihood mass;
        # truncating earlier would distort free-space evidence.
        if self.edf_truncation < 3.0 * self.sigma_o:
            raise ConfigError("edf_truncation must be >= 3 * sigma_o")
        if self.min_range < 0:
            raise ConfigError("min_range must be non-negative")


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}
_INT_FIELDS = {
    "kernel_size",
    "otsu_min",
    "w_local",
    "w_dynamic",
    "w_global",
    "dilation_radius",
}


def load_config(path) -> Config:
    """Parse a flat ``key = value`` file ('#' starts a comment)."""
    text = Path(path).read_text()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key == "mode":
                values[key] = value
            elif key in _INT_FIELDS:
                values[key] = int(value)
            else:
                values[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return Config(**values)
