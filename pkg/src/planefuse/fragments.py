"""Keyframe selection and fragment bounding volumes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .camera import DepthFrame, rotation_angle
from .voxels import BoundingCube


@dataclass
class Fragment:
    """A group of consecutive keyframes processed as one volumetric unit."""

    index: int
    keyframes: list[DepthFrame]

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("fragment index must be non-negative")
        if not self.keyframes:
            raise ValueError("fragment must contain at least one keyframe")

    def camera_centers(self) -> np.ndarray:
        return np.stack([f.pose.translation for f in self.keyframes])


def select_keyframes(
    stream: Iterable[DepthFrame],
    t_max: float = 0.1,
    r_max: float = np.deg2rad(15.0),
    n_k: int = 9,
) -> Iterator[Fragment]:
    """Stream frames into fragments of up to n_k keyframes.

    The first frame is always a keyframe; afterwards a frame is admitted iff
    its translation from the last keyframe exceeds t_max or its rotation
    angle exceeds r_max. A trailing partial group is emitted as a final
    short fragment when the stream ends.
    """
    if t_max <= 0 or r_max <= 0:
        raise ValueError("keyframe thresholds must be positive")
    if n_k < 2:
        raise ValueError("fragments need at least 2 keyframes per group")

    pending: list[DepthFrame] = []
    last_kf: DepthFrame | None = None
    frag_index = 0
    for frame in stream:
        if last_kf is None:
            is_kf = True
        else:
            dt = float(np.linalg.norm(frame.pose.translation - last_kf.pose.translation))
            dr = rotation_angle(last_kf.pose.rotation, frame.pose.rotation)
            is_kf = dt > t_max or dr > r_max
        if not is_kf:
            continue
        pending.append(frame)
        last_kf = frame
        if len(pending) == n_k:
            yield Fragment(index=frag_index, keyframes=pending)
            pending = []
            frag_index += 1
    if pending:
        yield Fragment(index=frag_index, keyframes=pending)


def fragment_bounds(fragment: Fragment, d_min: float = 0.1, d_max: float = 4.0) -> BoundingCube:
    """Smallest axis-aligned cube enclosing every keyframe's view frustum.

    Each frustum is represented by its 8 corners: the four image-boundary
    rays at z-depths d_min and d_max.
    """
    if not (0 < d_min < d_max):
        raise ValueError("need 0 < d_min < d_max")
    corners = []
    for frame in fragment.keyframes:
        rays = frame.intrinsics.corner_rays()
        for depth in (d_min, d_max):
            corners.append(frame.pose.to_world(rays * depth))
    pts = np.concatenate(corners)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = float(np.max(hi - lo))
    center = (lo + hi) / 2.0
    return BoundingCube(origin=center - side / 2.0, side=side)
