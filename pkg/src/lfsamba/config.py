"""Run configuration: one JSON document covering model geometry, optimizer,
supervision mode, loss constants, and paths.  Unknown keys are rejected."""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # model geometry
    image_size: int = 64
    patch_size: int = 8
    channels: int = 64
    state_size: int = 8
    adapter_groups: int = 4
    adapter_ratio: int = 4
    encoder_blocks: int = 4
    mlp_ratio: int = 4
    decoder_stages: int = 3
    # optimizer
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    steps: int = 500
    seed: int = 0
    checkpoint_interval: int = 0  # 0 = checkpoint only at the end
    # supervision
    mode: str = "full"
    # loss constants
    lambda_lsc: float = 0.3
    lambda_smooth: float = 0.3
    bce_pool_window: int = 31
    bce_weight_gain: float = 5.0
    lsc_radius: int = 5
    lsc_sigma_xy: float = 3.0
    lsc_sigma_rgb: float = 0.1
    smooth_alpha: float = 10.0
    # paths
    dataset: str = ""
    out: str = ""

    _NONNEGATIVE = ("steps", "seed", "checkpoint_interval")
    _STRINGS = ("mode", "dataset", "out")

    def validate(self) -> "RunConfig":
        for field in dataclasses.fields(self):
            if field.name in self._STRINGS:
                continue
            value = getattr(self, field.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"config field {field.name} must be numeric")
            if isinstance(field.default, int) and not isinstance(value, int):
                raise ConfigError(f"config field {field.name} must be an integer")
            if field.name in self._NONNEGATIVE:
                if value < 0:
                    raise ConfigError(f"config field {field.name} must be >= 0")
            elif value <= 0:
                raise ConfigError(f"config field {field.name} must be positive")
        if self.mode not in ("full", "weak"):
            raise ConfigError(f"mode must be full|weak, got {self.mode!r}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        grid = self.image_size // self.patch_size
        if grid * (2 ** self.decoder_stages) != self.image_size:
            raise ConfigError(
                f"decoder_stages {self.decoder_stages} cannot map grid {grid} "
                f"back to image_size {self.image_size}"
            )
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw).validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a single JSON object")
        return cls.from_dict(raw)

    def loss_kwargs(self) -> dict:
        return dict(
            lambda_lsc=self.lambda_lsc,
            lambda_smooth=self.lambda_smooth,
            pool_window=self.bce_pool_window,
            weight_gain=self.bce_weight_gain,
            lsc_radius=self.lsc_radius,
            lsc_sigma_xy=self.lsc_sigma_xy,
            lsc_sigma_rgb=self.lsc_sigma_rgb,
            smooth_alpha=self.smooth_alpha,
        )
