"""Synthetic piecewise-planar scenes and smooth camera trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Pose, look_at

_PLANE_TOL = 1e-9


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis spanning the plane orthogonal to `normal`."""
    ref = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(ref, normal)) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    e1 = ref - np.dot(ref, normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return e1, e2


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorized crossing-number test for 2-D points against a simple polygon."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass
class ScenePlane:
    """A bounded planar surface: unit normal n, offset d with <n, p> + d = 0.

    The boundary polygon is simple, has at least three vertices, and every
    vertex satisfies the plane equation to 1e-9 m.
    """

    normal: np.ndarray
    offset: float
    boundary: np.ndarray
    id: int
    _e1: np.ndarray = field(init=False, repr=False)
    _e2: np.ndarray = field(init=False, repr=False)
    _poly2d: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.boundary = np.asarray(self.boundary, dtype=np.float64)
        if abs(np.linalg.norm(self.normal) - 1.0) > _PLANE_TOL:
            raise ValueError("plane normal must be unit length")
        if self.boundary.ndim != 2 or self.boundary.shape[0] < 3 or self.boundary.shape[1] != 3:
            raise ValueError("boundary must be an (n>=3, 3) polygon")
        if self.id < 0:
            raise ValueError("plane id must be non-negative")
        res = self.boundary @ self.normal + self.offset
        if np.max(np.abs(res)) > _PLANE_TOL:
            raise ValueError("boundary vertices must satisfy the plane equation")
        self._e1, self._e2 = _plane_basis(self.normal)
        origin = self.boundary[0]
        rel = self.boundary - origin
        self._poly2d = np.column_stack([rel @ self._e1, rel @ self._e2])
        if not self._is_simple():
            raise ValueError("boundary polygon must be simple")

    def _is_simple(self) -> bool:
        poly = self._poly2d
        n = len(poly)
        for a in range(n):
            for b in range(a + 1, n):
                # Skip adjacent edges (they share a vertex).
                if b == a + 1 or (a == 0 and b == n - 1):
                    continue
                if _segments_intersect(poly[a], poly[(a + 1) % n], poly[b], poly[(b + 1) % n]):
                    return False
        return True

    def area(self) -> float:
        p = self._poly2d
        x, y = p[:, 0], p[:, 1]
        return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)

    def to_plane_coords(self, points: np.ndarray) -> np.ndarray:
        rel = points - self.boundary[0]
        return np.column_stack([rel @ self._e1, rel @ self._e2])

    def from_plane_coords(self, pts2d: np.ndarray) -> np.ndarray:
        return self.boundary[0] + np.outer(pts2d[:, 0], self._e1) + np.outer(pts2d[:, 1], self._e2)

    def contains_projected(self, points: np.ndarray) -> np.ndarray:
        """True for world points whose in-plane projection lies inside the boundary."""
        return points_in_polygon(self.to_plane_coords(points), self._poly2d)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal + self.offset

    def distance_to_polygon(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from world points to the bounded polygon."""
        pts = np.atleast_2d(points)
        sd = self.signed_distance(pts)
        inside = self.contains_projected(pts)
        dist = np.abs(sd)
        outside = ~inside
        if np.any(outside):
            p_out = pts[outside]
            best = np.full(p_out.shape[0], np.inf)
            verts = self.boundary
            for k in range(len(verts)):
                a = verts[k]
                b = verts[(k + 1) % len(verts)]
                ab = b - a
                denom = float(ab @ ab)
                t = np.clip((p_out - a) @ ab / denom, 0.0, 1.0)
                closest = a + t[:, None] * ab
                best = np.minimum(best, np.linalg.norm(p_out - closest, axis=1))
            dist[outside] = best
        return dist


@dataclass
class SyntheticScene:
    """A set of bounded planes inside an axis-aligned box."""

    planes: list[ScenePlane]
    bounds: np.ndarray  # (2, 3): min corner, max corner

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        ids = [p.id for p in self.planes]
        if len(ids) != len(set(ids)):
            raise ValueError("plane ids must be unique")
        lo, hi = self.bounds[0] - 1e-9, self.bounds[1] + 1e-9
        for p in self.planes:
            if np.any(p.boundary < lo) or np.any(p.boundary > hi):
                raise ValueError(f"plane {p.id} extends outside the scene bounds")

    def center(self) -> np.ndarray:
        return self.bounds.mean(axis=0)

    def total_area(self) -> float:
        return sum(p.area() for p in self.planes)


@dataclass(frozen=True)
class RoomSpec:
    """Closed box room plus optional interior planes.

    Interior planes are table tops spread evenly along the room's x axis at
    table_height; with tilt=True the last one is replaced by a panel leaning
    30 degrees from vertical.
    """

    width: float
    depth: float
    height: float
    extra_planes: int = 0
    tilt: bool = False
    table_height: float = 0.7
    table_size: float = 0.8

    def __post_init__(self):
        if self.width <= 0 or self.depth <= 0 or self.height <= 0:
            raise ValueError("room dimensions must be positive")
        if self.extra_planes < 0:
            raise ValueError("extra plane count must be non-negative")


def _rect(center, e1, e2, half1, half2) -> np.ndarray:
    c = np.asarray(center, dtype=np.float64)
    return np.array(
        [
            c - half1 * e1 - half2 * e2,
            c + half1 * e1 - half2 * e2,
            c + half1 * e1 + half2 * e2,
            c - half1 * e1 + half2 * e2,
        ]
    )


def build_room_scene(spec: RoomSpec, seed: int = 0) -> SyntheticScene:
    """Construct the box room described by `spec`.

    Walls, floor, and ceiling carry ids 0-5 with inward-facing normals; the
    extra planes get ids 6 onward. Deterministic for a fixed seed (the seed
    only perturbs the tilted panel's yaw).
    """
    w, d, h = spec.width, spec.depth, spec.height
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])

    planes = [
        # floor / ceiling
        ScenePlane(ez, 0.0, _rect([w / 2, d / 2, 0.0], ex, ey, w / 2, d / 2), 0),
        ScenePlane(-ez, h, _rect([w / 2, d / 2, h], ex, ey, w / 2, d / 2), 1),
        # walls x=0, x=w, y=0, y=d
        ScenePlane(ex, 0.0, _rect([0.0, d / 2, h / 2], ey, ez, d / 2, h / 2), 2),
        ScenePlane(-ex, w, _rect([w, d / 2, h / 2], ey, ez, d / 2, h / 2), 3),
        ScenePlane(ey, 0.0, _rect([w / 2, 0.0, h / 2], ex, ez, w / 2, h / 2), 4),
        ScenePlane(-ey, d, _rect([w / 2, d, h / 2], ex, ez, w / 2, h / 2), 5),
    ]

    rng = np.random.default_rng(seed)
    half = spec.table_size / 2.0
    margin = 0.1
    n_extra = spec.extra_planes
    for k in range(n_extra):
        pid = 6 + k
        tilted = spec.tilt and k == n_extra - 1
        if n_extra == 1:
            cx = w / 2.0
        else:
            lo, hi = margin + half, w - margin - half
            cx = lo + (hi - lo) * k / (n_extra - 1)
        center = np.array([cx, d / 2.0, spec.table_height])
        if tilted:
            # Panel leaning 30 degrees from vertical, yaw drawn from the seed.
            yaw = rng.uniform(0.0, np.pi)
            a1 = np.array([np.cos(yaw), np.sin(yaw), 0.0])
            tilt_rad = np.deg2rad(30.0)
            a2 = np.array(
                [-np.sin(yaw) * np.sin(tilt_rad), np.cos(yaw) * np.sin(tilt_rad), np.cos(tilt_rad)]
            )
            normal = np.cross(a1, a2)
            normal /= np.linalg.norm(normal)
            boundary = _rect(center, a1, a2, half, half)
            offset = -float(np.dot(normal, center))
            planes.append(ScenePlane(normal, offset, boundary, pid))
        else:
            # Horizontal table top: same (n, d) for every table at this height.
            offset = -spec.table_height
            planes.append(ScenePlane(ez, offset, _rect(center, ex, ey, half, half), pid))

    bounds = np.array([[0.0, 0.0, 0.0], [w, d, h]])
    return SyntheticScene(planes=planes, bounds=bounds)


def generate_trajectory(
    scene: SyntheticScene,
    n_frames: int,
    seed: int = 0,
    orbits: float = 2.0,
    pitch_amplitude_deg: float = 15.0,
) -> list[Pose]:
    """Smooth orbit of poses inside the scene looking across its center.

    The camera rides a horizontal ring around the scene center with a gentle
    seeded pitch oscillation so floor and ceiling are covered. Step sizes are
    clamped so consecutive poses differ by at most 0.15 m and 20 degrees.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    if not scene.planes:
        raise ValueError("scene has no planes")

    center = scene.center()
    extent = scene.bounds[1] - scene.bounds[0]
    rng = np.random.default_rng(seed)

    # Ring radius: inside the bounds with margin, limited so the per-step arc
    # stays below the 0.15 m smoothness bound.
    yaw_step = min(np.deg2rad(15.0), orbits * 2.0 * np.pi / max(n_frames, 1))
    r_room = max(0.05, min(extent[0], extent[1]) / 2.0 - 0.6)
    r_step = 0.995 * 0.15 / max(yaw_step, 1e-9)
    radius = min(r_room, r_step)

    total_yaw = yaw_step * (n_frames - 1)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    pitch_cycles = max(1.0, round(n_frames / 36.0))
    pitch_amp = np.deg2rad(pitch_amplitude_deg)
    # Keep the combined per-step rotation under 20 degrees.
    if n_frames > 1:
        max_pitch_step = pitch_amp * 2.0 * np.pi * pitch_cycles / (n_frames - 1)
        combined = np.hypot(yaw_step, max_pitch_step)
        if combined > np.deg2rad(19.5):
            pitch_amp *= np.deg2rad(19.5) / combined

    poses = []
    for k in range(n_frames):
        ang = phase0 + (total_yaw * k / max(n_frames - 1, 1))
        eye = center + np.array([radius * np.cos(ang), radius * np.sin(ang), 0.0])
        pitch = pitch_amp * np.sin(2.0 * np.pi * pitch_cycles * k / max(n_frames - 1, 1))
        inward = np.array([-np.cos(ang), -np.sin(ang), 0.0])
        forward = inward * np.cos(pitch) + np.array([0.0, 0.0, 1.0]) * np.sin(pitch)
        poses.append(look_at(eye, forward))
    return poses


@dataclass
class OrientedPoints:
    """Columnar set of oriented, optionally labeled points."""

    positions: np.ndarray
    normals: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.positions.shape != self.normals.shape:
            raise ValueError("positions and normals must have the same shape")
        if self.labels is not None and len(self.labels) != len(self.positions):
            raise ValueError("labels length mismatch")

    def __len__(self) -> int:
        return len(self.positions)


def _triangulate_fan(poly2d: np.ndarray) -> list[tuple[int, int, int]]:
    # Convex fan is enough for the rectangles produced here; general simple
    # polygons go through meshing.triangulate_polygon when needed.
    return [(0, k, k + 1) for k in range(1, len(poly2d) - 1)]


def sample_gt_points(scene: SyntheticScene, density: float, seed: int = 0) -> OrientedPoints:
    """Uniform surface samples on every plane, labeled with plane ids.

    Each plane contributes round(density * area) points drawn uniformly over
    its polygon, so the total count tracks density * total_area exactly up to
    rounding. Deterministic for a fixed seed.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    rng = np.random.default_rng(seed)
    pos_chunks, nrm_chunks, lab_chunks = [], [], []
    for plane in scene.planes:
        area = plane.area()
        n_pts = int(round(density * area))
        if n_pts == 0:
            continue
        poly = plane._poly2d
        tris = _triangulate_fan(poly)
        tri_area = np.array(
            [
                abs(np.cross(poly[b] - poly[a], poly[c] - poly[a])) / 2.0
                for a, b, c in tris
            ]
        )
        choice = rng.choice(len(tris), size=n_pts, p=tri_area / tri_area.sum())
        u = rng.random(n_pts)
        v = rng.random(n_pts)
        flip = u + v > 1.0
        u[flip] = 1.0 - u[flip]
        v[flip] = 1.0 - v[flip]
        tri_idx = np.array(tris)[choice]
        a, b, c = poly[tri_idx[:, 0]], poly[tri_idx[:, 1]], poly[tri_idx[:, 2]]
        pts2d = a + u[:, None] * (b - a) + v[:, None] * (c - a)
        pos_chunks.append(plane.from_plane_coords(pts2d))
        nrm_chunks.append(np.tile(plane.normal, (n_pts, 1)))
        lab_chunks.append(np.full(n_pts, plane.id, dtype=np.int64))
    if not pos_chunks:
        empty = np.zeros((0, 3))
        return OrientedPoints(empty, empty.copy(), np.zeros(0, dtype=np.int64))
    return OrientedPoints(
        np.concatenate(pos_chunks),
        np.concatenate(nrm_chunks),
        np.concatenate(lab_chunks),
    )
