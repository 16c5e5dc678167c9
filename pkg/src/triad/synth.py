"""Synthetic scenes, trajectories, exact flow rendering, and controlled corruption.

Everything downstream of the flow network is testable against these
generators: the scene provides ground-truth depth, the renderer produces the
exact displacement field implied by that depth and a relative pose, and the
noise model corrupts it in a controlled, seeded way. All generators are pure
given their seed; per-pixel rendering is vectorized and independent of any
partitioning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .flow import FlowField
from .geometry import Intrinsics, RelativePose, Trajectory, normalized_grid


@dataclass(frozen=True)
class SyntheticScene:
    """A textured depth surface over the keyframe image.

    Depth is a base plane plus a sum of Gaussian bumps, clipped to
    [depth_min, depth_max]; the texture is a band-limited random field in
    [0, 1]. Identical seeds produce identical scenes.
    """

    width: int
    height: int
    base_depth: float
    bump_centers: np.ndarray  # (G, 2) pixel coordinates (x, y)
    bump_sigmas: np.ndarray  # (G,) pixels
    bump_amplitudes: np.ndarray  # (G,) meters, signed
    texture: np.ndarray  # (H, W) in [0, 1]
    depth_min: float
    depth_max: float
    seed: int

    def __post_init__(self):
        if not (0 < self.depth_min <= self.depth_max):
            raise InputError("need 0 < depth_min <= depth_max")
        if self.texture.shape != (self.height, self.width):
            raise InputError("texture shape must match the scene size")

    def depth_map(self) -> np.ndarray:
        """Ground-truth depth for every keyframe pixel, shape (H, W), meters."""
        xs = np.arange(self.width, dtype=np.float64)[None, :]
        ys = np.arange(self.height, dtype=np.float64)[:, None]
        depth = np.full((self.height, self.width), self.base_depth)
        for (cx, cy), sigma, amp in zip(self.bump_centers, self.bump_sigmas, self.bump_amplitudes):
            r2 = (xs - cx) ** 2 + (ys - cy) ** 2
            depth += amp * np.exp(-r2 / (2.0 * sigma * sigma))
        return np.clip(depth, self.depth_min, self.depth_max)


@dataclass(frozen=True)
class NoiseModel:
    """Seeded flow corruption: i.i.d. Gaussian noise plus uniform outliers."""

    sigma_flow: float = 0.0  # pixels, per component
    outlier_rate: float = 0.0
    outlier_span: float = 8.0  # pixels, uniform replacement range
    seed: int = 0

    def __post_init__(self):
        if self.sigma_flow < 0:
            raise InputError("sigma_flow must be nonnegative")
        if not (0.0 <= self.outlier_rate <= 1.0):
            raise InputError("outlier_rate must be in [0, 1]")
        if self.outlier_span < 0:
            raise InputError("outlier_span must be nonnegative")


def _bandlimited_field(height: int, width: int, rng: np.random.Generator, cutoff: float) -> np.ndarray:
    """Low-pass filtered white noise, rescaled to [0, 1]."""
    noise = rng.standard_normal((height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    lowpass = np.exp(-(fx * fx + fy * fy) / (2.0 * cutoff * cutoff))
    field = np.fft.ifft2(np.fft.fft2(noise) * lowpass).real
    span = np.ptp(field)
    if span == 0.0:
        return np.full((height, width), 0.5)
    return (field - field.min()) / span


def make_scene(
    width: int,
    height: int,
    seed: int,
    n_bumps: int = 5,
    base_depth: float = 2.0,
    bump_amplitude: float = 0.15,
    bump_sigma_lo: float = 0.12,
    bump_sigma_hi: float = 0.3,
    depth_min: float = 0.25,
    depth_max: float = 50.0,
    texture_cutoff: float = 0.06,
) -> SyntheticScene:
    """Draw a random scene from a 64-bit seed.

    Bump sigmas are fractions of the smaller image dimension. The defaults
    give a gently sloped desk-scale surface; larger amplitudes with wider
    sigma ranges produce room-scale depth spreads.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform([0, 0], [width, height], size=(n_bumps, 2))
    sigmas = rng.uniform(bump_sigma_lo, bump_sigma_hi, size=n_bumps) * min(width, height)
    amplitudes = rng.uniform(-bump_amplitude, bump_amplitude, size=n_bumps)
    texture = _bandlimited_field(height, width, rng, texture_cutoff)
    return SyntheticScene(
        width=width,
        height=height,
        base_depth=base_depth,
        bump_centers=centers,
        bump_sigmas=sigmas,
        bump_amplitudes=amplitudes,
        texture=texture,
        depth_min=depth_min,
        depth_max=depth_max,
        seed=seed,
    )


def render_flow(
    scene: SyntheticScene,
    k: Intrinsics,
    pose_k: RelativePose,
    z_eps: float = 1e-6,
) -> FlowField:
    """Exact keyframe -> adjacent-frame flow implied by the scene depth and pose.

    Each keyframe pixel is back-projected with its ground-truth depth,
    transformed by ``pose_k`` (keyframe coordinates into the adjacent frame),
    and reprojected. Pixels landing behind the camera (z <= z_eps) or outside
    the image are marked invalid rather than raising.
    """
    if (k.width, k.height) != (scene.width, scene.height):
        raise InputError("intrinsics size must match the scene")
    depth = scene.depth_map()
    points = normalized_grid(k) * depth[..., None]
    transformed = points @ pose_k.rotation.T + pose_k.translation
    z = transformed[..., 2]
    in_front = z > z_eps
    safe_z = np.where(in_front, z, 1.0)
    u = k.fx * transformed[..., 0] / safe_z + k.cx
    v = k.fy * transformed[..., 1] / safe_z + k.cy
    # pixel-footprint bounds: pixel centers live on [0, n-1], footprints on [-0.5, n-0.5]
    in_bounds = (u >= -0.5) & (u <= k.width - 0.5) & (v >= -0.5) & (v <= k.height - 0.5)
    valid = in_front & in_bounds
    xs = np.arange(k.width, dtype=np.float64)[None, :]
    ys = np.arange(k.height, dtype=np.float64)[:, None]
    vectors = np.stack([u - xs, v - ys], axis=-1)
    return FlowField(np.where(valid[..., None], vectors, 0.0), valid)


def corrupt_flow(flow: FlowField, model: NoiseModel) -> FlowField:
    """Apply the noise model to valid pixels; invalid pixels pass through untouched."""
    rng = np.random.default_rng(model.seed)
    shape = flow.vectors.shape
    out = flow.vectors.copy()
    if model.sigma_flow > 0:
        out = out + rng.normal(0.0, model.sigma_flow, size=shape)
    if model.outlier_rate > 0:
        outliers = rng.random(shape[:2]) < model.outlier_rate
        replacement = rng.uniform(-model.outlier_span, model.outlier_span, size=shape)
        out = np.where(outliers[..., None], replacement, out)
    out = np.where(flow.valid[..., None], out, flow.vectors)
    return FlowField(out, flow.valid)


def _yaw_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def constant_velocity_trajectory(
    n_frames: int,
    velocity=(0.05, 0.0, 0.0),
    dt: float = 1.0,
    yaw_rate: float = 0.0,
) -> Trajectory:
    """Camera translating by ``velocity`` meters per frame (optionally yawing)."""
    if n_frames < 1:
        raise InputError("need at least one frame")
    v = np.asarray(velocity, dtype=np.float64)
    poses = [
        RelativePose(_yaw_matrix(yaw_rate * i), i * v)
        for i in range(n_frames)
    ]
    return Trajectory(dt * np.arange(n_frames), tuple(poses))


def stop_and_go_trajectory(
    n_frames: int,
    velocity=(0.05, 0.0, 0.0),
    move: int = 1,
    dwell: int = 3,
    dt: float = 1.0,
) -> Trajectory:
    """Camera advancing for ``move`` frames then holding pose for ``dwell`` frames."""
    if n_frames < 1:
        raise InputError("need at least one frame")
    if move < 1 or dwell < 0:
        raise InputError("need move >= 1 and dwell >= 0")
    v = np.asarray(velocity, dtype=np.float64)
    cycle = move + dwell
    poses = []
    steps = 0
    for i in range(n_frames):
        if i > 0 and (i - 1) % cycle < move:
            steps += 1
        poses.append(RelativePose(np.eye(3), steps * v))
    return Trajectory(dt * np.arange(n_frames), tuple(poses))


def orbit_trajectory(n_frames: int, radius: float, dt: float = 1.0) -> Trajectory:
    """Camera on a circle of given radius, yawing by 2*pi/n_frames per step."""
    if n_frames < 1:
        raise InputError("need at least one frame")
    poses = []
    for i in range(n_frames):
        phi = 2.0 * math.pi * i / n_frames
        position = np.array([radius * math.sin(phi), 0.0, radius * (1.0 - math.cos(phi))])
        poses.append(RelativePose(_yaw_matrix(phi), position))
    return Trajectory(dt * np.arange(n_frames), tuple(poses))


def make_trajectory(kind: str, n_frames: int, params: dict | None = None) -> Trajectory:
    """Dispatch on trajectory kind: constant_velocity, stop_and_go, or orbit."""
    params = dict(params or {})
    if kind == "constant_velocity":
        return constant_velocity_trajectory(n_frames, **params)
    if kind == "stop_and_go":
        return stop_and_go_trajectory(n_frames, **params)
    if kind == "orbit":
        return orbit_trajectory(n_frames, **params)
    raise InputError(f"unknown trajectory kind {kind!r}")
