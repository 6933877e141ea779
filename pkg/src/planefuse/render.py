"""Depth rendering of synthetic planar scenes."""

from __future__ import annotations

import numpy as np

from .camera import CameraIntrinsics, DepthFrame, Pose
from .scene import SyntheticScene, points_in_polygon

_RAY_EPS = 1e-9


def render_depth(
    scene: SyntheticScene,
    intrinsics: CameraIntrinsics,
    pose: Pose,
    noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> DepthFrame:
    """Render per-pixel z-depth and ground-truth plane ids.

    For every pixel the nearest ray/polygon intersection wins; depth stores
    the third camera coordinate of the hit (z-depth, not ray length). Misses
    are encoded in-band as depth 0 and id -1. Optional Gaussian noise on
    z-depth models sensor error and is applied after visibility resolution.
    """
    h, w = intrinsics.height, intrinsics.width
    rays_cam = intrinsics.pixel_rays().reshape(-1, 3)
    rays_world = rays_cam @ pose.rotation.T
    origin = pose.translation

    depth = np.full(h * w, np.inf)
    ids = np.full(h * w, -1, dtype=np.int32)

    for plane in scene.planes:
        denom = rays_world @ plane.normal
        num = -(float(origin @ plane.normal) + plane.offset)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = num / denom
        valid = np.abs(denom) > _RAY_EPS
        valid &= s > _RAY_EPS
        valid &= s < depth
        if not np.any(valid):
            continue
        pts = origin + s[valid, None] * rays_world[valid]
        inside = points_in_polygon(plane.to_plane_coords(pts), plane._poly2d)
        sel = np.flatnonzero(valid)[inside]
        depth[sel] = s[sel]
        ids[sel] = plane.id

    miss = ~np.isfinite(depth)
    depth[miss] = 0.0
    if noise_sigma > 0.0:
        rng = np.random.default_rng(noise_seed)
        hit = ~miss
        depth[hit] = np.maximum(depth[hit] + rng.normal(0.0, noise_sigma, hit.sum()), 1e-4)

    return DepthFrame(
        intrinsics=intrinsics,
        pose=pose,
        depth=depth.reshape(h, w).astype(np.float64),
        gt_plane_id=ids.reshape(h, w),
    )


def render_sequence(
    scene: SyntheticScene,
    intrinsics: CameraIntrinsics,
    poses: list[Pose],
    noise_sigma: float = 0.0,
    seed: int = 0,
):
    """Yield a DepthFrame per pose; noise streams are seeded per frame."""
    for k, pose in enumerate(poses):
        frame = render_depth(
            scene, intrinsics, pose, noise_sigma=noise_sigma, noise_seed=seed * 100003 + k
        )
        frame.index = k
        yield frame
