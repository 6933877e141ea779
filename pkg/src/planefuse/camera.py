"""Pinhole camera model, rigid poses, and depth-frame containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels.

    Pixel (row i, col j) has its center at (j + 0.5, i + 0.5); the
    corresponding viewing ray in the camera frame is
    ((j + 0.5 - cx) / fx, (i + 0.5 - cy) / fy, 1), unnormalized, so that the
    third camera coordinate of a point along the ray equals its z-depth.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ValueError("principal point must lie strictly inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def pixel_rays(self) -> np.ndarray:
        """Unnormalized camera-frame ray directions, shape (height, width, 3)."""
        j = np.arange(self.width, dtype=np.float64) + 0.5
        i = np.arange(self.height, dtype=np.float64) + 0.5
        x = (j - self.cx) / self.fx
        y = (i - self.cy) / self.fy
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = x[None, :]
        rays[..., 1] = y[:, None]
        rays[..., 2] = 1.0
        return rays

    def corner_rays(self) -> np.ndarray:
        """Rays through the four image-boundary corners, shape (4, 3)."""
        corners = np.array(
            [[0.0, 0.0], [self.width, 0.0], [0.0, self.height], [self.width, self.height]]
        )
        rays = np.empty((4, 3))
        rays[:, 0] = (corners[:, 0] - self.cx) / self.fx
        rays[:, 1] = (corners[:, 1] - self.cy) / self.fy
        rays[:, 2] = 1.0
        return rays

    def project(self, points_cam: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project camera-frame points to (col, row) pixel indices.

        Returns (cols, rows, in_front) where in_front marks points with
        positive depth. Indices are rounded to the nearest pixel center and
        may fall outside the image.
        """
        z = points_cam[..., 2]
        in_front = z > 1e-12
        zs = np.where(in_front, z, 1.0)
        cols = np.rint(points_cam[..., 0] / zs * self.fx + self.cx - 0.5).astype(np.int64)
        rows = np.rint(points_cam[..., 1] / zs * self.fy + self.cy - 0.5).astype(np.int64)
        return cols, rows, in_front


def intrinsics_from_fov(width: int, height: int, hfov_deg: float) -> CameraIntrinsics:
    """Square-pixel intrinsics with the given horizontal field of view."""
    fx = (width / 2.0) / np.tan(np.deg2rad(hfov_deg) / 2.0)
    return CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: p_world = rotation @ p_cam + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        return points_cam @ self.rotation.T + self.translation

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        return (points_world - self.translation) @ self.rotation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 matrix")
        return cls(rotation=m[:3, :3].copy(), translation=m[:3, 3].copy())


def rotation_angle(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Angle in radians of the relative rotation between two matrices.

    The arccos argument is clamped to [-1, 1] so near-identity relative
    rotations never produce NaN.
    """
    rel = r_a.T @ r_b
    c = (np.trace(rel) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def translation_distance(pose_a: Pose, pose_b: Pose) -> float:
    return float(np.linalg.norm(pose_a.translation - pose_b.translation))


def look_at(eye: np.ndarray, forward: np.ndarray) -> Pose:
    """Pose whose camera +z axis points along `forward` (x right, y down).

    World up is +z; `forward` must not be parallel to it.
    """
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(f, up)
    n = np.linalg.norm(right)
    if n < 1e-12:
        raise ValueError("forward direction may not be parallel to world up")
    right /= n
    down = np.cross(f, right)
    rot = np.column_stack([right, down, f])
    return Pose(rotation=rot, translation=np.asarray(eye, dtype=np.float64))


@dataclass
class DepthFrame:
    """A posed z-depth image; 0 marks invalid pixels.

    gt_plane_id, when present, labels each pixel with the id of the scene
    plane it observes (-1 for misses).
    """

    intrinsics: CameraIntrinsics
    pose: Pose
    depth: np.ndarray
    gt_plane_id: np.ndarray | None = None
    index: int = field(default=-1, compare=False)

    def __post_init__(self):
        expected = (self.intrinsics.height, self.intrinsics.width)
        if self.depth.shape != expected:
            raise ValueError(f"depth shape {self.depth.shape} != intrinsics size {expected}")
        if np.any(self.depth < 0):
            raise ValueError("depth values must be non-negative")
        if self.gt_plane_id is not None and self.gt_plane_id.shape != expected:
            raise ValueError("gt_plane_id shape does not match intrinsics size")

    def backproject(self) -> np.ndarray:
        """World-frame points of all valid pixels, shape (N, 3)."""
        valid = self.depth > 0
        rays = self.intrinsics.pixel_rays()[valid]
        pts_cam = rays * self.depth[valid][:, None]
        return self.pose.to_world(pts_cam)
