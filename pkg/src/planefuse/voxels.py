"""Sparse voxel lattice utilities shared by fusion, primitives, and tracking.

All voxel coordinates are integers on a single world-aligned lattice
(coord = floor(point / voxel_size)), so coordinates from different fragments
index the same cells and support sets can be compared across fragments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BIAS = 1 << 20  # supports coordinates in (-2^20, 2^20)


def pack(coords: np.ndarray) -> np.ndarray:
    """Encode (N, 3) integer coordinates as sortable int64 keys."""
    c = np.asarray(coords, dtype=np.int64)
    if np.any(np.abs(c) >= _BIAS):
        raise ValueError("voxel coordinates out of packable range")
    return ((c[..., 0] + _BIAS) << 42) | ((c[..., 1] + _BIAS) << 21) | (c[..., 2] + _BIAS)


def unpack(keys: np.ndarray) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64)
    out = np.empty(k.shape + (3,), dtype=np.int64)
    out[..., 0] = (k >> 42) - _BIAS
    out[..., 1] = ((k >> 21) & ((1 << 21) - 1)) - _BIAS
    out[..., 2] = (k & ((1 << 21) - 1)) - _BIAS
    return out


def world_to_voxel(points: np.ndarray, voxel_size: float) -> np.ndarray:
    return np.floor(np.asarray(points) / voxel_size).astype(np.int64)


def voxel_centers(coords: np.ndarray, voxel_size: float) -> np.ndarray:
    return (np.asarray(coords, dtype=np.float64) + 0.5) * voxel_size


def dilate(coords: np.ndarray, radius: int) -> np.ndarray:
    """L-inf dilation of a voxel set, separably along each axis with dedup."""
    keys = np.unique(pack(coords))
    coords = unpack(keys)
    offsets = np.arange(-radius, radius + 1, dtype=np.int64)
    for axis in range(3):
        grown = np.repeat(coords, len(offsets), axis=0)
        grown[:, axis] += np.tile(offsets, len(coords))
        keys = np.unique(pack(grown))
        coords = unpack(keys)
    return coords


def ball_offsets(radius_voxels: float) -> np.ndarray:
    """Integer offsets within a Euclidean ball of the given radius (in voxels)."""
    r = int(np.floor(radius_voxels))
    rng = np.arange(-r, r + 1, dtype=np.int64)
    oi, oj, ok = np.meshgrid(rng, rng, rng, indexing="ij")
    offs = np.column_stack([oi.ravel(), oj.ravel(), ok.ravel()])
    keep = (offs * offs).sum(axis=1) <= radius_voxels * radius_voxels
    return offs[keep]


@dataclass(frozen=True)
class BoundingCube:
    """Axis-aligned cube given by its minimum corner and side length."""

    origin: np.ndarray
    side: float

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        o.flags.writeable = False
        object.__setattr__(self, "origin", o)
        if self.side <= 0:
            raise ValueError("cube side must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        rel = np.asarray(points) - self.origin
        return np.all((rel >= -1e-9) & (rel <= self.side + 1e-9), axis=-1)


@dataclass
class SparseVoxelGrid:
    """One level of the sparse occupancy hierarchy.

    level 0 is the coarsest; coords live on the world lattice of this level's
    voxel_size. Scores are in [0, 1] and are all >= the threshold that built
    the grid. origin/side describe the owning fragment cube.
    """

    level: int
    voxel_size: float
    origin: np.ndarray
    side: float
    coords: np.ndarray  # (N, 3) int64
    scores: np.ndarray  # (N,) float64

    def __len__(self) -> int:
        return len(self.coords)

    def centers(self) -> np.ndarray:
        return voxel_centers(self.coords, self.voxel_size)

    def as_dict(self) -> dict[tuple[int, int, int], float]:
        return {tuple(map(int, c)): float(s) for c, s in zip(self.coords, self.scores)}


def sort_by_coord(coords: np.ndarray, *arrays: np.ndarray):
    """Sort voxel-indexed arrays lexicographically by coordinate."""
    order = np.argsort(pack(coords), kind="stable")
    return (coords[order], *[a[order] for a in arrays])
