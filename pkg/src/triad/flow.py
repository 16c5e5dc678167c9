"""Dense 2D displacement fields with a per-pixel validity mask.

A flow field stores, for each keyframe pixel, the displacement to its
corresponding pixel in an adjacent frame. On disk (see fileio.read_flow)
invalid pixels carry components with magnitude above INVALID_FLOW_THRESHOLD;
in memory they are tracked with an explicit boolean mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

INVALID_FLOW = 1e10
INVALID_FLOW_THRESHOLD = 1e9


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement (H, W, 2) plus validity mask (H, W)."""

    vectors: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        val = np.asarray(self.valid, dtype=bool)
        if vec.ndim != 3 or vec.shape[2] != 2:
            raise InputError(f"flow vectors must have shape (H, W, 2), got {vec.shape}")
        if val.shape != vec.shape[:2]:
            raise InputError("validity mask shape must match the flow field")
        if not np.all(np.isfinite(vec[val])):
            raise InputError("flow must be finite on valid pixels")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "valid", val)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_raster(cls, raster: np.ndarray) -> "FlowField":
        """Interpret a raw (H, W, 2) raster, treating huge components as invalid."""
        vec = np.asarray(raster, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            valid = np.all(np.abs(vec) <= INVALID_FLOW_THRESHOLD, axis=2)
        valid &= np.all(np.isfinite(vec), axis=2)
        return cls(np.where(valid[..., None], vec, 0.0), valid)

    def to_raster(self) -> np.ndarray:
        """Raw float32 raster with the invalid-pixel sentinel filled in."""
        out = np.where(self.valid[..., None], self.vectors, INVALID_FLOW)
        return out.astype(np.float32)
