"""Per-voxel plane evidence: normals as anchor + residual, offsets, and votes.

Two estimators produce the same primitive layout: an oracle that reads the
synthetic scene directly (used to validate everything downstream) and a
geometric estimator built on local PCA over the fused surface plus
coplanarity-gated vote diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .scene import SyntheticScene
from .tsdf import FusedSurface
from .voxels import SparseVoxelGrid, ball_offsets, pack, sort_by_coord, voxel_centers

DESCRIPTOR_DIM = 7


@dataclass(frozen=True)
class AnchorSet:
    """Six canonical unit normals used to quantize estimated normals."""

    vectors: np.ndarray  # (6, 3)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.shape != (6, 3):
            raise ValueError("anchor set must contain six 3-vectors")
        if np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > 1e-9:
            raise ValueError("anchors must be unit length")
        if len({tuple(np.round(a, 12)) for a in v}) != 6:
            raise ValueError("anchors must be pairwise distinct")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)


def make_anchor_set(up_axis: np.ndarray) -> AnchorSet:
    """Anchors {h1, h2, -h1, -h2, up, -up} with h1, h2 horizontal and 90 deg apart.

    For up = +z this is exactly {+x, +y, -x, -y, +z, -z}.
    """
    up = np.asarray(up_axis, dtype=np.float64)
    if abs(np.linalg.norm(up) - 1.0) > 1e-9:
        raise ValueError("up axis must be unit length")
    ref = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(ref, up)) > 0.99:
        ref = np.array([0.0, 1.0, 0.0])
    h1 = ref - np.dot(ref, up) * up
    h1 /= np.linalg.norm(h1)
    h2 = np.cross(up, h1)
    return AnchorSet(np.stack([h1, h2, -h1, -h2, up, -up]))


def classify_anchor(normal: np.ndarray, anchors: AnchorSet) -> tuple[int, np.ndarray]:
    """Nearest anchor by dot product (ties to the lowest index) and residual.

    The residual is normal - anchor, so normalize(anchor + residual)
    reconstructs the input exactly.
    """
    scores = anchors.vectors @ np.asarray(normal, dtype=np.float64)
    idx = int(np.argmax(scores))  # argmax returns the first (lowest) index on ties
    return idx, np.asarray(normal, dtype=np.float64) - anchors.vectors[idx]


def classify_anchors(normals: np.ndarray, anchors: AnchorSet) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized classify_anchor over (N, 3) normals."""
    scores = normals @ anchors.vectors.T
    idx = np.argmax(scores, axis=1)
    return idx, normals - anchors.vectors[idx]


def plane_offset(x: np.ndarray, normal: np.ndarray, distance) -> tuple[np.ndarray, np.ndarray]:
    """Foot point and plane offset from a voxel center and signed distance.

    x_tilde = x + D * n lies on the plane, and d = -<x_tilde, n> completes
    the plane equation <n, p> + d = 0. Works elementwise on batched input.
    """
    x = np.asarray(x, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    d_arr = np.asarray(distance, dtype=np.float64)
    x_tilde = x + d_arr[..., None] * normal if x.ndim > 1 else x + d_arr * normal
    d = -np.einsum("...i,...i->...", x_tilde, normal)
    return x_tilde, d


@dataclass
class PrimitiveSet:
    """Columnar batch of per-voxel plane primitives (one row per voxel)."""

    voxel_size: float
    cube_origin: np.ndarray
    cube_side: float
    coords: np.ndarray       # (N, 3) int64 lattice coordinates
    centers: np.ndarray      # (N, 3) voxel centers x
    normals: np.ndarray      # (N, 3) unit normals n
    distances: np.ndarray    # (N,) signed distance D along n to the plane
    offsets: np.ndarray      # (N,) plane offset d
    votes: np.ndarray        # (N, 3) displacement toward the instance centroid
    anchor_idx: np.ndarray   # (N,) int
    residuals: np.ndarray    # (N, 3) n - anchor
    descriptors: np.ndarray  # (N, DESCRIPTOR_DIM)

    def __len__(self) -> int:
        return len(self.coords)

    def shifted(self) -> np.ndarray:
        """Vote-shifted positions x' = x + dx."""
        return self.centers + self.votes

    def foot_points(self) -> np.ndarray:
        """On-plane positions x~ = x + D * n."""
        return self.centers + self.distances[:, None] * self.normals

    def take(self, idx: np.ndarray) -> "PrimitiveSet":
        return PrimitiveSet(
            voxel_size=self.voxel_size,
            cube_origin=self.cube_origin,
            cube_side=self.cube_side,
            coords=self.coords[idx],
            centers=self.centers[idx],
            normals=self.normals[idx],
            distances=self.distances[idx],
            offsets=self.offsets[idx],
            votes=self.votes[idx],
            anchor_idx=self.anchor_idx[idx],
            residuals=self.residuals[idx],
            descriptors=self.descriptors[idx],
        )


def _descriptors(normals, offsets, targets, cube_origin, cube_side) -> np.ndarray:
    """Hand-crafted 7-d descriptor: (n, d normalized by the cube diagonal,
    vote target normalized by the cube). Stands in for learned features."""
    diag = cube_side * np.sqrt(3.0)
    rel = (targets - cube_origin) / cube_side
    return np.column_stack([normals, offsets / diag, rel])


def _assemble(grid, coords, centers, normals, distances, votes, anchors) -> PrimitiveSet:
    anchor_idx, residuals = classify_anchors(normals, anchors)
    _, offsets = plane_offset(centers, normals, distances)
    desc = _descriptors(normals, offsets, centers + votes, grid.origin, _cube_side(grid))
    return PrimitiveSet(
        voxel_size=grid.voxel_size,
        cube_origin=np.asarray(grid.origin, dtype=np.float64),
        cube_side=_cube_side(grid),
        coords=coords,
        centers=centers,
        normals=normals,
        distances=distances,
        offsets=offsets,
        votes=votes,
        anchor_idx=anchor_idx,
        residuals=residuals,
        descriptors=desc,
    )


def _cube_side(grid: SparseVoxelGrid) -> float:
    return float(grid.side)


def estimate_primitives_oracle(
    grid: SparseVoxelGrid,
    scene: SyntheticScene,
    lam: float | None = None,
) -> PrimitiveSet:
    """Ground-truth primitives: each voxel inherits its nearest scene plane.

    Nearness is measured to the bounded polygon, so coplanar but disjoint
    surfaces resolve to distinct instances; ties go to the lower plane id.
    Voxels farther than 2 * lam from every plane are dropped. Votes point at
    the per-instance centroid of the supporting voxels' foot points, so all
    shifted positions of one instance coincide.
    """
    if lam is None:
        lam = 3.0 * grid.voxel_size
    coords, _ = sort_by_coord(grid.coords, grid.scores)
    centers = voxel_centers(coords, grid.voxel_size)
    n_vox = len(coords)
    if n_vox == 0:
        return _empty_set(grid)

    dists = np.full((n_vox, len(scene.planes)), np.inf)
    for c, plane in enumerate(scene.planes):
        dists[:, c] = plane.distance_to_polygon(centers)
    ids = np.array([p.id for p in scene.planes])
    order = np.argsort(ids, kind="stable")
    dists = dists[:, order]
    planes = [scene.planes[k] for k in order]

    best = np.argmin(dists, axis=1)  # first minimum = lowest plane id on ties
    keep = dists[np.arange(n_vox), best] <= 2.0 * lam
    coords, centers, best = coords[keep], centers[keep], best[keep]
    if len(coords) == 0:
        return _empty_set(grid)

    normals = np.stack([planes[b].normal for b in best])
    plane_d = np.array([planes[b].offset for b in best])
    distances = -(np.einsum("ij,ij->i", centers, normals) + plane_d)
    foot = centers + distances[:, None] * normals

    votes = np.zeros_like(centers)
    for b in np.unique(best):
        members = best == b
        votes[members] = foot[members].mean(axis=0) - centers[members]

    anchors = make_anchor_set(np.array([0.0, 0.0, 1.0]))
    return _assemble(grid, coords, centers, normals, distances, votes, anchors)


def estimate_primitives_geometric(
    grid: SparseVoxelGrid,
    surface: FusedSurface,
    radius: float = 0.10,
    vote_iters: int = 10,
    min_neighbors: int = 8,
    angle_gate_deg: float = 30.0,
    offset_gate_voxels: float = 2.0,
) -> PrimitiveSet:
    """Estimate primitives from fused geometry alone.

    Normals come from the smallest principal axis of the covariance of
    surface points within `radius` of each voxel center, with orientation
    inherited from the camera-facing fused normals. The signed distance D is
    taken to the local least-squares plane. Votes are vote_iters rounds of
    averaging over coplanarity-gated lattice neighbors (normals within the
    angle gate, offsets within the voxel gate), which drives each voxel
    toward the centroid of its connected coplanar component. Voxels with
    fewer than min_neighbors surface points in range are excluded.
    """
    if radius < 2.0 * grid.voxel_size:
        raise ValueError("radius must be at least two voxels")
    if vote_iters < 1:
        raise ValueError("vote_iters must be at least 1")

    coords, _ = sort_by_coord(grid.coords, grid.scores)
    centers = voxel_centers(coords, grid.voxel_size)
    if len(coords) == 0 or len(surface.points) == 0:
        return _empty_set(grid)

    tree = cKDTree(surface.points)
    neighbor_lists = tree.query_ball_point(centers, radius, workers=-1, return_sorted=True)
    counts = np.fromiter((len(nb) for nb in neighbor_lists), dtype=np.int64, count=len(coords))
    reliable = counts >= min_neighbors
    coords, centers = coords[reliable], centers[reliable]
    neighbor_lists = [neighbor_lists[i] for i in np.flatnonzero(reliable)]
    counts = counts[reliable]
    if len(coords) == 0:
        return _empty_set(grid)

    # Batched covariance via flattened gathers.
    idx = np.concatenate(neighbor_lists)
    offs = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=offs[1:])
    pts = surface.points[idx]
    nrm = surface.normals[idx]
    sums = np.add.reduceat(pts, offs[:-1], axis=0)
    means = sums / counts[:, None]
    second = np.add.reduceat(pts[:, :, None] * pts[:, None, :], offs[:-1], axis=0)
    cov = second / counts[:, None, None] - means[:, :, None] * means[:, None, :]
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]  # eigenvector of the smallest eigenvalue

    # Orient along the fused (camera-facing) normals of the neighborhood.
    ref = np.add.reduceat(nrm, offs[:-1], axis=0)
    flip = np.einsum("ij,ij->i", normals, ref) < 0
    normals[flip] *= -1.0

    distances = np.einsum("ij,ij->i", means - centers, normals)
    _, offsets = plane_offset(centers, normals, distances)

    votes = _diffuse_votes(
        coords,
        centers,
        normals,
        offsets,
        voxel_size=grid.voxel_size,
        radius=radius,
        iters=vote_iters,
        angle_gate_deg=angle_gate_deg,
        offset_gate=offset_gate_voxels * grid.voxel_size,
    )

    anchors = make_anchor_set(np.array([0.0, 0.0, 1.0]))
    return _assemble(grid, coords, centers, normals, distances, votes, anchors)


def _diffuse_votes(coords, centers, normals, offsets, voxel_size, radius, iters, angle_gate_deg, offset_gate):
    """Iterated neighbor averaging over the coplanarity-gated lattice graph."""
    n = len(coords)
    keys = pack(coords)
    cos_gate = np.cos(np.deg2rad(angle_gate_deg))
    rows, cols = [np.arange(n)], [np.arange(n)]  # self loops keep rows stochastic
    for off in ball_offsets(radius / voxel_size):
        if (off == 0).all():
            continue
        nb_keys = pack(coords + off)
        pos = np.searchsorted(keys, nb_keys)
        pos = np.clip(pos, 0, n - 1)
        hit = keys[pos] == nb_keys
        src = np.flatnonzero(hit)
        dst = pos[hit]
        agree = np.einsum("ij,ij->i", normals[src], normals[dst]) >= cos_gate
        agree &= np.abs(offsets[src] - offsets[dst]) <= offset_gate
        rows.append(src[agree])
        cols.append(dst[agree])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    inv_deg = 1.0 / np.asarray(adj.sum(axis=1)).ravel()
    walk = sparse.diags(inv_deg) @ adj
    targets = centers.copy()
    for _ in range(iters):
        targets = walk @ targets
    return targets - centers


def _empty_set(grid: SparseVoxelGrid) -> PrimitiveSet:
    z3 = np.zeros((0, 3))
    return PrimitiveSet(
        voxel_size=grid.voxel_size,
        cube_origin=np.asarray(grid.origin, dtype=np.float64),
        cube_side=_cube_side(grid),
        coords=np.zeros((0, 3), dtype=np.int64),
        centers=z3,
        normals=z3.copy(),
        distances=np.zeros(0),
        offsets=np.zeros(0),
        votes=z3.copy(),
        anchor_idx=np.zeros(0, dtype=np.int64),
        residuals=z3.copy(),
        descriptors=np.zeros((0, DESCRIPTOR_DIM)),
    )
