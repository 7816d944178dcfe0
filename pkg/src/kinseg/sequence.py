"""Sequence containers shared by the preprocessing, geometry and data modules.

Two channel layouts are supported:

* ``open_surgery_6sensor`` -- six electromagnetic sensors, three per hand,
  each contributing (x, y, z, e1, e2, e3): positions in mm and intrinsic
  ZYX Euler angles in degrees.  36 channels total.
* ``robotic_2psm`` -- two patient-side manipulators, each contributing
  (x, y, z, e1, e2, e3, gripper).  14 channels total.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Layout:
    name: str
    sensor_count: int
    block: int  # channels per sensor
    left: tuple[int, ...]  # sensor indices (0-based) of the left hand
    right: tuple[int, ...]

    @property
    def n_channels(self) -> int:
        return self.sensor_count * self.block

    def position_cols(self, sensor: int) -> slice:
        return slice(sensor * self.block, sensor * self.block + 3)

    def euler_cols(self, sensor: int) -> slice:
        return slice(sensor * self.block + 3, sensor * self.block + 6)

    def angular_mask(self) -> np.ndarray:
        """Boolean mask over channels: True for Euler-angle channels."""
        mask = np.zeros(self.n_channels, dtype=bool)
        for s in range(self.sensor_count):
            mask[self.euler_cols(s)] = True
        return mask

    def channel_names(self) -> list[str]:
        parts = ["x", "y", "z", "e1", "e2", "e3", "grip"][: self.block]
        return [f"s{i + 1}_{p}" for i in range(self.sensor_count) for p in parts]


LAYOUTS = {
    "open_surgery_6sensor": Layout("open_surgery_6sensor", 6, 6, (0, 1, 2), (3, 4, 5)),
    "robotic_2psm": Layout("robotic_2psm", 2, 7, (0,), (1,)),
}


def get_layout(name: str) -> Layout:
    if name not in LAYOUTS:
        raise ValueError(f"unknown layout {name!r}; expected one of {sorted(LAYOUTS)}")
    return LAYOUTS[name]


@dataclass
class SensorSequence:
    """Raw pose series: T x (block * S) channels plus per-frame labels."""

    channels: np.ndarray  # (T, n_channels) float64
    labels: np.ndarray  # (T,) int
    rate_hz: float
    layout: str = "open_surgery_6sensor"
    name: str = ""
    participant: str = ""

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n_frames(self) -> int:
        return self.channels.shape[0]

    @property
    def layout_info(self) -> Layout:
        return get_layout(self.layout)

    def positions(self, sensor: int) -> np.ndarray:
        return self.channels[:, self.layout_info.position_cols(sensor)]

    def eulers(self, sensor: int) -> np.ndarray:
        return self.channels[:, self.layout_info.euler_cols(sensor)]

    def copy(self) -> "SensorSequence":
        return replace(self, channels=self.channels.copy(), labels=self.labels.copy())

    def validate(self) -> None:
        lay = self.layout_info
        if self.channels.ndim != 2 or self.channels.shape[1] != lay.n_channels:
            raise ValueError(
                f"layout {self.layout!r} expects {lay.n_channels} channels, "
                f"got shape {self.channels.shape}"
            )
        if self.labels.shape != (self.n_frames,):
            raise ValueError("labels length must equal the number of frames")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if not np.all(np.isfinite(self.channels)):
            raise ValueError("non-finite channel values")


@dataclass
class FeatureSequence:
    """T x M feature matrix (velocities, optionally standardized) plus labels."""

    features: np.ndarray  # (T, M) float64
    labels: np.ndarray  # (T,) int
    rate_hz: float = 30.0
    name: str = ""
    standardized: bool = False
    zero_variance_channels: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]
