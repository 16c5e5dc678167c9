"""Per-pixel depth triangulation from dense flow, with confidence scores.

For a keyframe pixel with camera-normalized homogeneous coordinates
m = [x', y', 1] and observations in frames k with unit rays s_k and poses
(R_k, p_k) taking keyframe coordinates into frame k, the scalar depth d
minimizes

    cost(d) = sum_k || s_k x (R_k m d + p_k) ||^2
            = H d^2 + 2 beta d + gamma

with a_k = s_k x (R_k m), b_k = s_k x p_k, H = sum a_k.a_k,
beta = sum a_k.b_k, gamma = sum b_k.b_k. The closed-form minimizer is
d = -beta / H; H (the scalar curvature of the cost) and the residual norm
sqrt(cost(d)) become the two confidence channels of the initial depth map.

Pixels with H below h_eps (no baseline) or a minimizer outside (0, d_max]
(cheirality violation) are degenerate and must be masked invalid, never
clamped. Per-pixel reductions always run in the given observation order, so
results are bit-identical however the pixels are partitioned across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .flow import FlowField
from .geometry import Intrinsics, RelativePose, normalized_grid

DEFAULT_H_EPS = 1e-12
DEFAULT_D_MAX = 100.0


@dataclass(frozen=True)
class TriangulationInput:
    """Keyframe intrinsics plus one (flow field, relative pose) per adjacent frame."""

    intrinsics: Intrinsics
    observations: tuple[tuple[FlowField, RelativePose], ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        if not self.observations:
            raise InputError("need at least one adjacent frame")
        for flow_field, _ in self.observations:
            if (flow_field.height, flow_field.width) != (self.intrinsics.height, self.intrinsics.width):
                raise InputError(
                    f"flow field is {flow_field.width}x{flow_field.height}, "
                    f"intrinsics expect {self.intrinsics.width}x{self.intrinsics.height}"
                )


@dataclass(frozen=True)
class InitialDepth:
    """Triangulated depth with its two confidence channels and validity mask.

    conf_h is the square root of the per-pixel cost curvature (large when the
    baseline-to-depth ratio conditions the problem well); conf_r is the norm
    of the residual at the minimizer (large when the observations disagree).
    Invalid pixels are NaN in all three channels.
    """

    depth: np.ndarray
    conf_h: np.ndarray
    conf_r: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        shape = self.depth.shape
        for name in ("conf_h", "conf_r", "valid"):
            if getattr(self, name).shape != shape:
                raise InputError(f"{name} shape {getattr(self, name).shape} != depth shape {shape}")
        v = self.valid
        for name in ("depth", "conf_h", "conf_r"):
            channel = getattr(self, name)
            if not np.all(np.isfinite(channel[v])):
                raise InputError(f"{name} must be finite on valid pixels")
            if not np.all(np.isnan(channel[~v])):
                raise InputError(f"{name} must be NaN on invalid pixels")
        if np.any(self.depth[v] <= 0) or np.any(self.conf_h[v] <= 0) or np.any(self.conf_r[v] < 0):
            raise InputError("valid pixels need depth > 0, conf_h > 0, conf_r >= 0")


def triangulate_pixel(
    m,
    observations,
    h_eps: float = DEFAULT_H_EPS,
    d_max: float = DEFAULT_D_MAX,
):
    """Solve the scalar least squares for one pixel.

    ``m`` is the keyframe direction as [x', y', 1] (camera-normalized, z = 1,
    so the recovered depth is the +z coordinate); ``observations`` is a
    sequence of (ray, pose) pairs whose rays are unit-normalized internally.
    Returns (depth, hessian, residual), or None when the pixel is degenerate
    (no baseline, or the minimizer violates cheirality / exceeds d_max).
    """
    m = np.asarray(getattr(m, "direction", m), dtype=np.float64)
    if not observations:
        raise InputError("need at least one observation")
    h_acc = 0.0
    beta = 0.0
    gamma = 0.0
    for ray, pose in observations:
        s = np.asarray(getattr(ray, "direction", ray), dtype=np.float64)
        s = s / np.linalg.norm(s)
        a = np.cross(s, pose.rotation @ m)
        b = np.cross(s, pose.translation)
        h_acc += float(a @ a)
        beta += float(a @ b)
        gamma += float(b @ b)
    if h_acc < h_eps:
        return None
    depth = -beta / h_acc
    if not (0.0 < depth <= d_max):
        return None
    residual = np.sqrt(max(0.0, gamma - beta * beta / h_acc))
    return depth, h_acc, residual


def _accumulate_rows(inp: TriangulationInput, m_grid: np.ndarray, rows: slice):
    """Per-pixel cost coefficients for a band of rows, frames in input order."""
    k = inp.intrinsics
    shape = m_grid[rows].shape[:2]
    h_acc = np.zeros(shape)
    beta = np.zeros(shape)
    gamma = np.zeros(shape)
    n_obs = np.zeros(shape, dtype=np.int64)
    xs = np.arange(k.width, dtype=np.float64)[None, :]
    ys = np.arange(k.height, dtype=np.float64)[rows, None]
    for flow_field, pose in inp.observations:
        valid = flow_field.valid[rows]
        u = xs + np.where(valid, flow_field.vectors[rows, :, 0], 0.0)
        v = ys + np.where(valid, flow_field.vectors[rows, :, 1], 0.0)
        s = np.empty(shape + (3,), dtype=np.float64)
        s[..., 0] = (u - k.cx) / k.fx
        s[..., 1] = (v - k.cy) / k.fy
        s[..., 2] = 1.0
        s /= np.linalg.norm(s, axis=-1, keepdims=True)
        rm = m_grid[rows] @ pose.rotation.T
        a = np.cross(s, rm)
        b = np.cross(s, np.broadcast_to(pose.translation, s.shape))
        h_acc += np.where(valid, np.einsum("...i,...i->...", a, a), 0.0)
        beta += np.where(valid, np.einsum("...i,...i->...", a, b), 0.0)
        gamma += np.where(valid, np.einsum("...i,...i->...", b, b), 0.0)
        n_obs += valid
    return h_acc, beta, gamma, n_obs


def _row_bands(height: int, workers: int) -> list[slice]:
    workers = max(1, min(int(workers), height))
    if workers == 1:
        return [slice(0, height)]
    edges = np.linspace(0, height, workers + 1, dtype=int)
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def triangulate_map(
    inp: TriangulationInput,
    h_eps: float = DEFAULT_H_EPS,
    d_max: float = DEFAULT_D_MAX,
    workers: int = 1,
) -> InitialDepth:
    """Triangulate every keyframe pixel from all usable observations.

    Observations with invalid flow are dropped per pixel; pixels with no
    usable observation or a degenerate solve come back invalid (NaN), never
    clamped. The per-pixel math is identical in every row band, so output is
    bit-identical for any worker count.
    """
    k = inp.intrinsics
    h, w = k.height, k.width
    m_grid = normalized_grid(k)
    h_acc = np.empty((h, w))
    beta = np.empty((h, w))
    gamma = np.empty((h, w))
    n_obs = np.empty((h, w), dtype=np.int64)

    bands = _row_bands(h, workers)
    if len(bands) == 1:
        results = [_accumulate_rows(inp, m_grid, bands[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(bands)) as pool:
            results = list(pool.map(lambda rows: _accumulate_rows(inp, m_grid, rows), bands))
    for rows, (hb, bb, gb, nb) in zip(bands, results):
        h_acc[rows] = hb
        beta[rows] = bb
        gamma[rows] = gb
        n_obs[rows] = nb

    solvable = (n_obs >= 1) & (h_acc >= h_eps)
    safe_h = np.where(solvable, h_acc, 1.0)
    depth = -beta / safe_h
    valid = solvable & (depth > 0.0) & (depth <= d_max)
    residual = np.sqrt(np.maximum(0.0, gamma - beta * beta / safe_h))
    nan = np.float64(np.nan)
    return InitialDepth(
        depth=np.where(valid, depth, nan),
        conf_h=np.where(valid, np.sqrt(safe_h), nan),
        conf_r=np.where(valid, residual, nan),
        valid=valid,
    )


def _normalized_target_rays(flow_field: FlowField, k: Intrinsics) -> np.ndarray:
    """Unit observation rays for every pixel; arbitrary (finite) where invalid."""
    xs = np.arange(k.width, dtype=np.float64)[None, :]
    ys = np.arange(k.height, dtype=np.float64)[:, None]
    u = xs + np.where(flow_field.valid, flow_field.vectors[..., 0], 0.0)
    v = ys + np.where(flow_field.valid, flow_field.vectors[..., 1], 0.0)
    s = np.empty((k.height, k.width, 3), dtype=np.float64)
    s[..., 0] = (u - k.cx) / k.fx
    s[..., 1] = (v - k.cy) / k.fy
    s[..., 2] = 1.0
    return s / np.linalg.norm(s, axis=-1, keepdims=True)


def epipolar_loss(
    flow_field: FlowField,
    pose: RelativePose,
    gt_depth: np.ndarray,
    k: Intrinsics,
) -> tuple[float, np.ndarray]:
    """Flow-quality loss: residual of the true depth under the observed rays.

    Substituting ground-truth depth into the per-pixel cost measures the flow
    error in every direction, including the component perpendicular to the
    epipolar line that depth alone cannot see. Returns the scalar sum over
    valid pixels (fixed row-major order) and the per-pixel map, NaN where the
    flow is invalid or the ground truth is not finite.
    """
    gt = np.asarray(gt_depth, dtype=np.float64)
    if gt.shape != (k.height, k.width):
        raise InputError(f"gt depth shape {gt.shape} != image size {(k.height, k.width)}")
    valid = flow_field.valid & np.isfinite(gt)
    m_grid = normalized_grid(k)
    s = _normalized_target_rays(flow_field, k)
    safe_gt = np.where(valid, gt, 1.0)
    transformed = (m_grid @ pose.rotation.T) * safe_gt[..., None] + pose.translation
    residual = np.cross(s, transformed)
    per_pixel = np.einsum("...i,...i->...", residual, residual)
    total = float(np.sum(np.where(valid, per_pixel, 0.0)))
    return total, np.where(valid, per_pixel, np.nan)
