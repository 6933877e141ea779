"""Mean-shift grouping of voxel primitives into per-fragment plane instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .primitives import PrimitiveSet
from .voxels import pack


@dataclass
class ClusterConfig:
    """Bandwidths and stopping rules for the flat-kernel mean shift.

    The joint feature space is (x' / bandwidth_pos, n / bandwidth_normal)
    with a flat kernel of unit radius; the plane offset is deliberately not
    part of the feature. With use_votes=False (the voting ablation) the
    feature space switches to plane parameters (n / bandwidth_normal,
    d / bandwidth_offset), which reproduces the merge of far-apart coplanar
    surfaces that voting exists to prevent.

    seed_quantization > 0 runs the shift on cell-averaged representatives
    (cell edge = seed_quantization * kernel radius) instead of literally
    every primitive; 0 restores one seed per primitive.
    """

    bandwidth_pos: float = 0.4
    bandwidth_normal: float = 0.3
    bandwidth_offset: float = 0.15
    max_iter: int = 50
    tol: float = 1e-4
    min_cluster_size: int = 20
    use_votes: bool = True
    seed_quantization: float = 0.25

    def __post_init__(self):
        for name in ("bandwidth_pos", "bandwidth_normal", "bandwidth_offset", "max_iter", "tol", "min_cluster_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.seed_quantization < 0:
            raise ValueError("seed_quantization must be non-negative")


@dataclass
class VoxelCluster:
    members: np.ndarray        # indices into the primitive set
    mode: np.ndarray           # converged mode in normalized feature space


@dataclass
class ClusterResult:
    primitives: PrimitiveSet
    clusters: list[VoxelCluster]
    outliers: np.ndarray
    config: ClusterConfig = field(repr=False, default_factory=ClusterConfig)


def shift_voxels(primitives: PrimitiveSet) -> np.ndarray:
    """Vote-shifted positions x' = x + dx."""
    return primitives.shifted()


def _features(primitives: PrimitiveSet, config: ClusterConfig) -> np.ndarray:
    if config.use_votes:
        return np.column_stack(
            [
                primitives.shifted() / config.bandwidth_pos,
                primitives.normals / config.bandwidth_normal,
            ]
        )
    return np.column_stack(
        [
            primitives.normals / config.bandwidth_normal,
            primitives.offsets / config.bandwidth_offset,
        ]
    )


def mean_shift_step(feats: np.ndarray, weights: np.ndarray, tree: cKDTree, seeds: np.ndarray) -> np.ndarray:
    """One flat-kernel step: each seed moves to the weighted mean of the
    points within unit radius. Exposed so the fixed-point property of
    reported modes can be checked directly."""
    out = seeds.copy()
    neighbor_lists = tree.query_ball_point(seeds, 1.0, workers=-1, return_sorted=True)
    for s, nb in enumerate(neighbor_lists):
        if nb:
            w = weights[nb]
            out[s] = (feats[nb] * w[:, None]).sum(axis=0) / w.sum()
    return out


def mean_shift_cluster(primitives: PrimitiveSet, config: ClusterConfig | None = None) -> ClusterResult:
    """Group primitives by flat-kernel mean shift in the joint feature space.

    Primitives are processed in voxel-coordinate order, every mode trajectory
    is run to convergence (step < tol) or max_iter, converged modes within
    half a kernel radius are merged single-linkage, and members inherit their
    own trajectory's merged mode. Clusters below min_cluster_size are
    returned as outliers. Deterministic for identical inputs and config.
    """
    if config is None:
        config = ClusterConfig()
    if len(primitives) == 0:
        raise ValueError("cannot cluster an empty primitive set")

    order = np.argsort(pack(primitives.coords), kind="stable")
    prims = primitives.take(order)
    feats = _features(prims, config)
    n = len(prims)

    # Representatives: cell means of the quantized feature lattice. With
    # quantization 0 every primitive is its own representative.
    if config.seed_quantization > 0:
        cell_keys = np.floor(feats / config.seed_quantization)
        _, rep_of, counts = np.unique(
            cell_keys, axis=0, return_inverse=True, return_counts=True
        )
        rep_of = rep_of.ravel()
        n_reps = len(counts)
        reps = np.zeros((n_reps, feats.shape[1]))
        np.add.at(reps, rep_of, feats)
        reps /= counts[:, None]
        weights = counts.astype(np.float64)
    else:
        reps = feats.copy()
        rep_of = np.arange(n)
        weights = np.ones(n)
        n_reps = n

    tree = cKDTree(reps)
    modes = reps.copy()
    active = np.arange(n_reps)
    for _ in range(config.max_iter):
        if len(active) == 0:
            break
        moved = mean_shift_step(reps, weights, tree, modes[active])
        step = np.linalg.norm(moved - modes[active], axis=1)
        modes[active] = moved
        active = active[step >= config.tol]

    # Single-linkage merge of converged modes within half a kernel radius.
    mode_tree = cKDTree(modes)
    parent = np.arange(n_reps)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    pairs = mode_tree.query_pairs(0.5, output_type="ndarray")
    for a, b in pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(int(r)) for r in range(n_reps)])

    member_root = roots[rep_of]
    uniq_roots, member_group = np.unique(member_root, return_inverse=True)

    clusters: list[VoxelCluster] = []
    outlier_chunks: list[np.ndarray] = []
    for g, root in enumerate(uniq_roots):
        members = np.flatnonzero(member_group == g)
        if len(members) < config.min_cluster_size:
            outlier_chunks.append(members)
            continue
        # Representative mode: the merged group's heaviest rep (first on
        # ties), stepped until it is a true fixed point of the kernel.
        grp_reps = np.flatnonzero(roots == root)
        heavy = grp_reps[np.argmax(weights[grp_reps])]
        mode = modes[heavy].copy()
        for _ in range(config.max_iter):
            nxt = mean_shift_step(reps, weights, tree, mode[None, :])[0]
            if np.linalg.norm(nxt - mode) < config.tol:
                break  # mode is a fixed point of the step within tol
            mode = nxt
        clusters.append(VoxelCluster(members=members, mode=mode))

    clusters.sort(key=lambda c: int(c.members[0]))
    outliers = (
        np.sort(np.concatenate(outlier_chunks)) if outlier_chunks else np.zeros(0, dtype=np.int64)
    )
    return ClusterResult(primitives=prims, clusters=clusters, outliers=outliers, config=config)
