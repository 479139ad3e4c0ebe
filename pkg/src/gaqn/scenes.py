"""Procedural room scenes and a deterministic ray-cast renderer.

Geometry conventions (all invented constants, fixed here once):
    * Right-handed coordinates, z up. The room is the axis-aligned cube
      [-half, half]^3 centred at the origin; the floor is the z = -half face,
      the other five faces are walls.
    * A camera pose is (x, y, z, yaw, pitch) with the forward direction
      (cos pitch * cos yaw, cos pitch * sin yaw, sin pitch).
      right = forward x world_up, up = right x forward.
    * Pixel rays (row i from the top, column j, square fov): with
      t = tan(fov/2), u = (2*(j+0.5)/W - 1) * t and v = (1 - 2*(i+0.5)/H) * t,
      direction = normalize(forward + u * right + v * up).
    * Shading is Lambertian with a single directional light:
      shade = 0.3 + 0.7 * max(0, n . light_dir), colour = albedo * shade,
      where light_dir points from the surface toward the light.

Rendering is pure: identical (spec, pose) gives bit-identical frames.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .data import IMAGE_SIZE, PoseRaw, SceneRecord, wrap_angle, write_dataset
from .ppm import write_ppm

SHAPES = ("sphere", "cube", "icosahedron")

AMBIENT = 0.3
DIFFUSE = 0.7
_EPS = 1e-9
_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class ObjectSpec:
    shape: str
    center: tuple[float, float, float]
    scale: float
    albedo: tuple[float, float, float]


@dataclass(frozen=True)
class CameraRingConfig:
    """Ring of cameras around the room centre (the look-at point)."""

    radius: float = 3.0
    height: float = 1.0
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov_deg: float = 60.0


@dataclass(frozen=True)
class SceneGenConfig:
    """Sampling ranges for procedural scenes.

    Object centres are confined to a pillbox around the room centre
    (|x|,|y| <= object_spread, z in object_z_range) so that every object
    stays clear of the camera ring and inside the view frustum.
    """

    room_half_extent: float = 4.0
    min_objects: int = 1
    max_objects: int = 3
    scale_min: float = 0.2
    scale_max: float = 1.0
    object_spread: float = 1.5
    object_z_range: tuple[float, float] = (-1.0, 0.5)
    ring: CameraRingConfig = field(default_factory=CameraRingConfig)


@dataclass(frozen=True)
class SceneSpec:
    room_half_extent: float
    wall_albedo: tuple[float, float, float]
    floor_albedo: tuple[float, float, float]
    objects: tuple[ObjectSpec, ...]
    light_dir: tuple[float, float, float]
    seed: int


def validate_scene_spec(spec: SceneSpec) -> None:
    """Check the invariants a sampled scene must satisfy."""
    if not 1 <= len(spec.objects) <= 3:
        raise ValueError(f"scene must have 1..3 objects, has {len(spec.objects)}")
    for rgb in (spec.wall_albedo, spec.floor_albedo):
        if not all(0.0 <= v <= 1.0 for v in rgb):
            raise ValueError(f"albedo {rgb} outside [0,1]")
    norm = math.sqrt(sum(v * v for v in spec.light_dir))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"light_dir norm {norm} != 1")
    for obj in spec.objects:
        if obj.shape not in SHAPES:
            raise ValueError(f"unknown shape {obj.shape!r}")
        if not 0.2 <= obj.scale <= 1.0:
            raise ValueError(f"object scale {obj.scale} outside [0.2, 1.0]")
        if not all(0.0 <= v <= 1.0 for v in obj.albedo):
            raise ValueError(f"object albedo {obj.albedo} outside [0,1]")
        margin = spec.room_half_extent - obj.scale
        if any(abs(c) > margin for c in obj.center):
            raise ValueError(f"object at {obj.center} breaches the room margin")


def sample_scene_spec(seed: int, config: SceneGenConfig = SceneGenConfig()) -> SceneSpec:
    """Deterministically sample a room scene from a 64-bit seed."""
    rng = np.random.default_rng(np.uint64(seed))
    wall = tuple(rng.uniform(0.2, 0.9, size=3))
    floor = tuple(rng.uniform(0.2, 0.9, size=3))
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    elevation = rng.uniform(math.radians(30.0), math.radians(75.0))
    light = (
        math.cos(elevation) * math.cos(azimuth),
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
    )
    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects = []
    for _ in range(n_objects):
        shape = SHAPES[int(rng.integers(0, len(SHAPES)))]
        scale = float(rng.uniform(config.scale_min, config.scale_max))
        cx, cy = rng.uniform(-config.object_spread, config.object_spread, size=2)
        cz = float(rng.uniform(*config.object_z_range))
        albedo = tuple(rng.uniform(0.2, 1.0, size=3))
        objects.append(
            ObjectSpec(shape, (float(cx), float(cy), cz), scale, albedo)
        )
    spec = SceneSpec(
        room_half_extent=config.room_half_extent,
        wall_albedo=wall,
        floor_albedo=floor,
        objects=tuple(objects),
        light_dir=light,
        seed=int(np.uint64(seed)),
    )
    validate_scene_spec(spec)
    return spec


# --- ray/primitive intersections (all vectorized over N rays) ---------------


def camera_rays(pose: PoseRaw, fov_deg: float = 60.0, size: int = IMAGE_SIZE):
    """Origin and per-pixel unit ray directions (size*size, 3) for a pose."""
    forward = np.array(
        [
            math.cos(pose.pitch) * math.cos(pose.yaw),
            math.cos(pose.pitch) * math.sin(pose.yaw),
            math.sin(pose.pitch),
        ]
    )
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    t = math.tan(math.radians(fov_deg) / 2.0)
    j = (2.0 * (np.arange(size) + 0.5) / size - 1.0) * t
    i = (1.0 - 2.0 * (np.arange(size) + 0.5) / size) * t
    u, v = np.meshgrid(j, i)  # u varies along columns, v along rows
    dirs = forward + u[..., None] * right + v[..., None] * up
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return pose.position(), dirs.reshape(-1, 3)


def intersect_sphere(origin, dirs, center, radius) -> np.ndarray:
    """Nearest positive ray parameter per ray; inf on miss."""
    oc = origin - np.asarray(center, dtype=np.float64)
    b = dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - c
    t = np.full(len(dirs), np.inf)
    hit = disc >= 0.0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t_best = np.where(t_near > _EPS, t_near, t_far)
    valid = hit & (t_best > _EPS)
    t[valid] = t_best[valid]
    return t


def sphere_normal(point, center) -> np.ndarray:
    n = point - np.asarray(center, dtype=np.float64)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def intersect_box(origin, dirs, lo, hi):
    """Entry intersection with an axis-aligned box: (t, normals); inf on miss."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    t1 = np.nan_to_num(t1, nan=-np.inf, posinf=np.inf, neginf=-np.inf)
    t2 = np.nan_to_num(t2, nan=np.inf, posinf=np.inf, neginf=-np.inf)
    t_near_ax = np.minimum(t1, t2)
    t_far_ax = np.maximum(t1, t2)
    t_near = t_near_ax.max(axis=1)
    t_far = t_far_ax.min(axis=1)
    hit = (t_near <= t_far) & (t_near > _EPS)
    t = np.where(hit, t_near, np.inf)
    # entry face = axis achieving t_near; normal opposes the ray on that axis
    axis = t_near_ax.argmax(axis=1)
    normals = np.zeros_like(dirs)
    rows = np.arange(len(dirs))
    normals[rows, axis] = -np.sign(dirs[rows, axis])
    return t, normals


def icosahedron_triangles(center, scale) -> np.ndarray:
    """(20, 3, 3) triangle vertices of an icosahedron with circumradius `scale`."""
    p = _GOLDEN
    verts = np.array(
        [
            (-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
            (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
            (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1),
        ],
        dtype=np.float64,
    )
    verts *= scale / math.sqrt(1.0 + p * p)
    verts += np.asarray(center, dtype=np.float64)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return verts[np.array(faces)]


def intersect_triangles(origin, dirs, triangles):
    """Nearest hit against a triangle soup: (t, normals); inf on miss.

    Moller-Trumbore, vectorized over rays x triangles. Normals are face
    normals flipped to oppose the ray.
    """
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    pvec = np.cross(dirs[:, None, :], e2[None, :, :])  # (N, F, 3)
    det = np.einsum("fk,nfk->nf", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = np.where(np.abs(det) > _EPS, 1.0 / det, 0.0)
    tvec = origin[None, None, :] - v0[None, :, :]
    u = np.einsum("nfk,nfk->nf", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("nk,nfk->nf", dirs, qvec) * inv_det
    t_all = np.einsum("fk,nfk->nf", e2, qvec) * inv_det
    ok = (
        (np.abs(det) > _EPS)
        & (u >= 0.0)
        & (v >= 0.0)
        & (u + v <= 1.0)
        & (t_all > _EPS)
    )
    t_all = np.where(ok, t_all, np.inf)
    face = t_all.argmin(axis=1)
    t = t_all[np.arange(len(dirs)), face]
    n = np.cross(e1, e2)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    normals = n[face]
    flip = np.einsum("nk,nk->n", normals, dirs) > 0.0
    normals[flip] *= -1.0
    return t, normals


def room_exit(origin, dirs, half_extent):
    """Distance to the room shell from inside: (t, face_axis, face_sign)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pos = (half_extent - origin) / dirs
        t_neg = (-half_extent - origin) / dirs
    t_face = np.where(dirs > 0.0, t_pos, t_neg)
    t_face = np.where(np.abs(dirs) < _EPS, np.inf, t_face)
    axis = t_face.argmin(axis=1)
    rows = np.arange(len(dirs))
    t = t_face[rows, axis]
    sign = np.sign(dirs[rows, axis]).astype(np.int64)
    return t, axis, sign


def trace_rays(spec: SceneSpec, origin: np.ndarray, dirs: np.ndarray):
    """Nearest-hit trace: per-ray (t, normal, albedo) over objects and room shell."""
    n_rays = len(dirs)
    t_room, axis, sign = room_exit(origin, dirs, spec.room_half_extent)
    normals = np.zeros((n_rays, 3))
    rows = np.arange(n_rays)
    normals[rows, axis] = -sign  # inward face normal
    albedo = np.broadcast_to(np.asarray(spec.wall_albedo), (n_rays, 3)).copy()
    floor_hit = (axis == 2) & (sign < 0)
    albedo[floor_hit] = np.asarray(spec.floor_albedo)
    best_t = t_room

    for obj in spec.objects:
        center = np.asarray(obj.center, dtype=np.float64)
        if obj.shape == "sphere":
            t_obj = intersect_sphere(origin, dirs, center, obj.scale)
            closer = t_obj < best_t
            if closer.any():
                pts = origin + t_obj[closer, None] * dirs[closer]
                normals[closer] = sphere_normal(pts, center)
        elif obj.shape == "cube":
            t_obj, n_obj = intersect_box(
                origin, dirs, center - obj.scale, center + obj.scale
            )
            closer = t_obj < best_t
            normals[closer] = n_obj[closer]
        else:  # icosahedron
            tris = icosahedron_triangles(center, obj.scale)
            t_obj, n_obj = intersect_triangles(origin, dirs, tris)
            closer = t_obj < best_t
            normals[closer] = n_obj[closer]
        albedo[closer] = np.asarray(obj.albedo)
        best_t = np.where(closer, t_obj, best_t)

    return best_t, normals, albedo


def render_view(spec: SceneSpec, pose: PoseRaw, fov_deg: float = 60.0) -> np.ndarray:
    """Render a 64x64x3 float32 frame in [0,1] for a camera inside the room."""
    half = spec.room_half_extent
    if max(abs(pose.x), abs(pose.y), abs(pose.z)) >= half:
        raise ValueError("camera outside room")
    origin, dirs = camera_rays(pose, fov_deg=fov_deg, size=IMAGE_SIZE)
    _, normals, albedo = trace_rays(spec, origin, dirs)
    light = np.asarray(spec.light_dir, dtype=np.float64)
    shade = AMBIENT + DIFFUSE * np.maximum(0.0, normals @ light)
    rgb = albedo * shade[:, None]
    frame = rgb.reshape(IMAGE_SIZE, IMAGE_SIZE, 3)
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


def export_frame_ppm(path, frame: np.ndarray) -> None:
    """Export a single rendered frame as binary PPM (P6, maxval 255)."""
    write_ppm(path, frame)


# --- dataset generation ------------------------------------------------------


@dataclass(frozen=True)
class DatasetSummary:
    path: str
    n_scenes: int
    views_per_scene: int
    n_bytes: int
    checksum: int


def _scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def ring_poses(config: CameraRingConfig, n_views: int, phase: float = 0.0) -> list[PoseRaw]:
    """n_views poses at uniformly spaced ring angles, yaw/pitch aimed at the
    look-at point (the room centre)."""
    look = np.asarray(config.look_at, dtype=np.float64)
    poses = []
    for k in range(n_views):
        theta = phase + 2.0 * math.pi * k / n_views
        eye = np.array(
            [
                config.radius * math.cos(theta),
                config.radius * math.sin(theta),
                config.height,
            ]
        )
        d = look - eye
        yaw = wrap_angle(math.atan2(d[1], d[0]))
        pitch = math.atan2(d[2], math.hypot(d[0], d[1]))
        poses.append(PoseRaw(eye[0], eye[1], eye[2], yaw, pitch))
    return poses


def generate_dataset(
    n_scenes: int,
    views_per_scene: int,
    seed: int,
    out_path,
    config: SceneGenConfig = SceneGenConfig(),
) -> DatasetSummary:
    """Sample n_scenes rooms, render K ring views each, write the dataset file."""
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    if views_per_scene < 2:
        raise ValueError("views_per_scene must be >= 2")
    if config.ring.radius >= config.room_half_extent:
        raise ValueError("camera ring must lie inside the room")
    records = []
    for i in range(n_scenes):
        scene_seed = _scene_seed(seed, i)
        spec = sample_scene_spec(scene_seed, config)
        phase = float(np.random.default_rng(np.uint64(scene_seed)).uniform(0.0, 2.0 * math.pi))
        poses = ring_poses(config.ring, views_per_scene, phase)
        frames = np.stack([render_view(spec, p, config.ring.fov_deg) for p in poses])
        records.append(SceneRecord(poses, frames))
    checksum = write_dataset(records, out_path)
    return DatasetSummary(
        path=str(out_path),
        n_scenes=n_scenes,
        views_per_scene=views_per_scene,
        n_bytes=os.path.getsize(out_path),
        checksum=checksum,
    )
