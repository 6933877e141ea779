"""Truncated signed-distance fusion and the sparse occupancy hierarchy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fragments import Fragment
from .voxels import (
    BoundingCube,
    SparseVoxelGrid,
    dilate,
    pack,
    sort_by_coord,
    unpack,
    voxel_centers,
    world_to_voxel,
)


@dataclass
class FusedSurface:
    """Weight-averaged TSDF over the finest lattice plus surface samples.

    coords/tsdf/weight cover every voxel touched by at least one observation
    (|tsdf| clamped to lam). candidate_mask marks surface candidates: voxels
    with weight > 0, |tsdf| < lam, and a back-projected depth point within
    lam + one voxel diagonal. points/normals hold one zero-crossing estimate
    per candidate voxel where the TSDF gradient is usable; point_voxel maps
    each sample back to its row in coords.
    """

    voxel_size: float
    lam: float
    bounds: BoundingCube
    coords: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    tsdf: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weight: np.ndarray = field(default_factory=lambda: np.zeros(0))
    candidate_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    point_voxel: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def candidate_coords(self) -> np.ndarray:
        return self.coords[self.candidate_mask]


def _candidate_voxels(frames, bounds: BoundingCube, voxel_size: float, lam: float):
    """Voxels near any back-projected depth point, clipped to the cube."""
    pts_list = [f.backproject() for f in frames]
    pts = (
        np.concatenate([p for p in pts_list if len(p)])
        if any(len(p) for p in pts_list)
        else np.zeros((0, 3))
    )
    if len(pts) == 0:
        return np.zeros((0, 3), dtype=np.int64), pts
    radius = int(np.ceil(lam / voxel_size))
    coords = dilate(world_to_voxel(pts, voxel_size), radius)
    centers = voxel_centers(coords, voxel_size)
    keep = bounds.contains(centers)
    return coords[keep], pts


def fuse_depth(
    fragment: Fragment,
    bounds: BoundingCube,
    finest_voxel: float = 0.04,
    lam: float | None = None,
) -> FusedSurface:
    """Fuse the fragment's keyframe depths into a truncated SDF.

    Standard projective fusion: for each voxel center and frame, the signed
    distance is (pixel depth - voxel z-depth), truncated at +-lam; samples
    behind the surface by more than lam are treated as occluded and skipped.
    Frames are integrated sequentially in stream order, so the result is
    deterministic. All-invalid depth yields an empty surface.
    """
    if finest_voxel <= 0:
        raise ValueError("voxel size must be positive")
    if lam is None:
        lam = 3.0 * finest_voxel
    if lam < finest_voxel:
        raise ValueError("truncation distance must be at least one voxel")

    coords, surf_pts = _candidate_voxels(fragment.keyframes, bounds, finest_voxel, lam)
    surface = FusedSurface(voxel_size=finest_voxel, lam=lam, bounds=bounds)
    if len(coords) == 0:
        return surface

    coords = sort_by_coord(coords)[0]
    centers = voxel_centers(coords, finest_voxel)
    tsdf_acc = np.zeros(len(coords))
    weight = np.zeros(len(coords))

    for frame in fragment.keyframes:
        cam = frame.pose.to_camera(centers)
        cols, rows, in_front = frame.intrinsics.project(cam)
        ok = (
            in_front
            & (cols >= 0)
            & (cols < frame.intrinsics.width)
            & (rows >= 0)
            & (rows < frame.intrinsics.height)
        )
        if not np.any(ok):
            continue
        d = frame.depth[rows[ok], cols[ok]]
        sdf = d - cam[ok, 2]
        integ = (d > 0) & (sdf > -lam)
        idx = np.flatnonzero(ok)[integ]
        tsdf_acc[idx] += np.minimum(sdf[integ], lam)
        weight[idx] += 1.0

    observed = weight > 0
    coords = coords[observed]
    centers = centers[observed]
    tsdf = tsdf_acc[observed] / weight[observed]
    weight = weight[observed]

    surface.coords = coords
    surface.tsdf = tsdf
    surface.weight = weight

    # Surface candidates: strictly inside the truncation band and close to an
    # actual depth point (trims grazing-angle projective artifacts).
    near = np.abs(tsdf) < lam
    if np.any(near):
        from scipy.spatial import cKDTree

        tree = cKDTree(surf_pts)
        dist, _ = tree.query(centers[near], k=1, workers=-1)
        limit = lam + finest_voxel * np.sqrt(3.0)
        near[np.flatnonzero(near)[dist > limit]] = False
    surface.candidate_mask = near

    _extract_surface_samples(surface, fragment)
    return surface


def _extract_surface_samples(surface: FusedSurface, fragment: Fragment) -> None:
    """Zero-crossing point and gradient normal per candidate voxel."""
    cand = np.flatnonzero(surface.candidate_mask)
    if len(cand) == 0:
        return
    keys = pack(surface.coords)
    v = surface.voxel_size
    grad = np.zeros((len(cand), 3))
    for axis in range(3):
        for sign, col in ((1, 0), (-1, 1)):
            nb = surface.coords[cand].copy()
            nb[:, axis] += sign
            pos = np.searchsorted(keys, pack(nb))
            pos = np.clip(pos, 0, len(keys) - 1)
            found = keys[pos] == pack(nb)
            if col == 0:
                fwd_val = np.where(found, surface.tsdf[pos], np.nan)
                fwd_ok = found
            else:
                bwd_val = np.where(found, surface.tsdf[pos], np.nan)
                bwd_ok = found
        center_val = surface.tsdf[cand]
        both = fwd_ok & bwd_ok
        grad[both, axis] = (fwd_val[both] - bwd_val[both]) / (2.0 * v)
        only_f = fwd_ok & ~bwd_ok
        grad[only_f, axis] = (fwd_val[only_f] - center_val[only_f]) / v
        only_b = bwd_ok & ~fwd_ok
        grad[only_b, axis] = (center_val[only_b] - bwd_val[only_b]) / v

    mag = np.linalg.norm(grad, axis=1)
    usable = mag > 0.1
    if not np.any(usable):
        return
    cand = cand[usable]
    grad = grad[usable]
    mag = mag[usable]
    normals = grad / mag[:, None]
    centers = voxel_centers(surface.coords[cand], v)
    step = surface.tsdf[cand] / mag
    points = centers - step[:, None] * normals

    # The gradient points from occupied space toward free space, i.e. toward
    # the cameras; flip any stragglers by majority vote over the keyframes.
    cams = fragment.camera_centers()
    votes = np.zeros(len(points))
    for c in cams:
        votes += np.sign(np.einsum("ij,ij->i", normals, c[None, :] - points))
    normals[votes < 0] *= -1.0

    surface.points = points
    surface.normals = normals
    surface.point_voxel = cand


def build_grid_hierarchy(surface: FusedSurface, theta: float = 0.5) -> list[SparseVoxelGrid]:
    """Three-level sparse occupancy pyramid from the fused surface.

    The finest level scores surface candidates by band proximity
    (1 - |tsdf| / lam, which is the weight-normalized surface evidence of the
    fused field); each coarser voxel takes the max over its 8 children, and
    voxels scoring below theta are removed at every level. Level voxel sizes
    are finest*4, finest*2, finest for levels 0, 1, 2.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")

    v = surface.voxel_size
    cand = surface.candidate_mask
    coords = surface.coords[cand]
    scores = 1.0 - np.abs(surface.tsdf[cand]) / surface.lam
    keep = scores >= theta
    coords, scores = coords[keep], scores[keep]
    coords, scores = sort_by_coord(coords, scores)

    cube = surface.bounds
    grids = [
        SparseVoxelGrid(
            level=2, voxel_size=v, origin=cube.origin, side=cube.side, coords=coords, scores=scores
        )
    ]
    for level, factor in ((1, 2), (0, 4)):
        parent = np.floor_divide(grids[-1].coords, 2)
        keys = pack(parent)
        uniq, inv = np.unique(keys, return_inverse=True)
        pooled = np.zeros(len(uniq))
        np.maximum.at(pooled, inv, grids[-1].scores)
        grids.append(
            SparseVoxelGrid(
                level=level,
                voxel_size=v * factor,
                origin=cube.origin,
                side=cube.side,
                coords=unpack(uniq),
                scores=pooled,
            )
        )
    grids.reverse()  # coarsest first
    return grids
