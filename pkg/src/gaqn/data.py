"""On-disk dataset format, camera pose encoding and batch sampling.

File format (little-endian):
    magic ``GQNDSET1`` (8 bytes), then uint32 n_scenes, K, H=64, W=64, C=3
    (28-byte header). Per scene, K view records of
    [pose: 5 x float32 (x, y, z, yaw, pitch)] followed by [H*W*C uint8,
    row-major RGB]. One view is 20 + 12288 = 12308 bytes.

Pixels are stored as uint8 and mapped to [0,1] floats by /255 on read.
Angles are wrapped/clamped on construction so every `PoseRaw` satisfies
yaw in [-pi, pi) and pitch in [-pi/2, pi/2] even after float32 rounding.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"GQNDSET1"
IMAGE_SIZE = 64
CHANNELS = 3
HEADER_FMT = "<8s5I"
HEADER_BYTES = struct.calcsize(HEADER_FMT)  # 28
POSE_BYTES = 5 * 4
FRAME_BYTES = IMAGE_SIZE * IMAGE_SIZE * CHANNELS
VIEW_BYTES = POSE_BYTES + FRAME_BYTES  # 12308


class DatasetFormatError(Exception):
    """Raised on malformed dataset files or inconsistent records."""


def wrap_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class PoseRaw:
    """Raw camera pose: position in room units, yaw/pitch in radians."""

    x: float
    y: float
    z: float
    yaw: float
    pitch: float

    def __post_init__(self):
        yaw = self.yaw
        if not (-math.pi <= yaw < math.pi):
            yaw = wrap_angle(yaw)
        pitch = min(max(self.pitch, -math.pi / 2), math.pi / 2)
        object.__setattr__(self, "yaw", float(yaw))
        object.__setattr__(self, "pitch", float(pitch))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


def encode_pose(p: PoseRaw) -> np.ndarray:
    """Encode a pose as (x, y, z, sin yaw, cos yaw, sin pitch, cos pitch)."""
    return np.array(
        [
            p.x,
            p.y,
            p.z,
            math.sin(p.yaw),
            math.cos(p.yaw),
            math.sin(p.pitch),
            math.cos(p.pitch),
        ],
        dtype=np.float64,
    )


@dataclass
class SceneRecord:
    """K posed views of one scene: poses plus (K,64,64,3) float frames in [0,1]."""

    poses: list[PoseRaw]
    frames: np.ndarray

    def __post_init__(self):
        if len(self.poses) < 2:
            raise DatasetFormatError("a scene needs at least 2 views")
        self.frames = np.asarray(self.frames, dtype=np.float32)
        expected = (len(self.poses), IMAGE_SIZE, IMAGE_SIZE, CHANNELS)
        if self.frames.shape != expected:
            raise DatasetFormatError(
                f"frames shape {self.frames.shape}, expected {expected}"
            )

    @property
    def n_views(self) -> int:
        return len(self.poses)


def _quantize(frames: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(frames * 255.0), 0, 255).astype(np.uint8)


def write_dataset(records: list[SceneRecord], path) -> int:
    """Write records to `path`; returns the CRC32 of the payload (post-header bytes)."""
    if not records:
        raise DatasetFormatError("empty dataset")
    k = records[0].n_views
    for i, rec in enumerate(records):
        if rec.n_views != k:
            raise DatasetFormatError(
                f"scene {i} has {rec.n_views} views, expected {k}"
            )
    header = struct.pack(
        HEADER_FMT, MAGIC, len(records), k, IMAGE_SIZE, IMAGE_SIZE, CHANNELS
    )
    payload = bytearray()
    for rec in records:
        pixels = _quantize(rec.frames)
        for v, pose in enumerate(rec.poses):
            payload += struct.pack(
                "<5f", pose.x, pose.y, pose.z, pose.yaw, pose.pitch
            )
            payload += pixels[v].tobytes()
    checksum = zlib.crc32(bytes(payload))
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
    return checksum


def read_dataset(path) -> list[SceneRecord]:
    """Read a dataset file; lossless inverse of write_dataset (pixels via /255)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < HEADER_BYTES:
        raise DatasetFormatError("file shorter than header")
    magic, n_scenes, k, h, w, c = struct.unpack_from(HEADER_FMT, data, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if (h, w, c) != (IMAGE_SIZE, IMAGE_SIZE, CHANNELS):
        raise DatasetFormatError(f"unsupported geometry {h}x{w}x{c}")
    if k < 2:
        raise DatasetFormatError(f"K={k} below minimum of 2")
    records = []
    pos = HEADER_BYTES
    for i in range(n_scenes):
        scene_bytes = k * VIEW_BYTES
        if len(data) - pos < scene_bytes:
            raise DatasetFormatError(f"file truncated in scene {i}")
        poses = []
        frames = np.empty((k, IMAGE_SIZE, IMAGE_SIZE, CHANNELS), dtype=np.float32)
        for v in range(k):
            x, y, z, yaw, pitch = struct.unpack_from("<5f", data, pos)
            poses.append(PoseRaw(x, y, z, wrap_angle(yaw), pitch))
            pos += POSE_BYTES
            pix = np.frombuffer(data, dtype=np.uint8, count=FRAME_BYTES, offset=pos)
            frames[v] = pix.reshape(IMAGE_SIZE, IMAGE_SIZE, CHANNELS) / np.float32(255.0)
            pos += FRAME_BYTES
        records.append(SceneRecord(poses, frames))
    if pos != len(data):
        raise DatasetFormatError(f"{len(data) - pos} trailing bytes after scene data")
    return records


@dataclass
class Batch:
    """A training batch of (context views, query pose, target image) tuples.

    All batch elements share the context size N; the query view is never a
    member of its own context set (see query_indices/context_indices).
    """

    context_frames: np.ndarray  # (B, N, 64, 64, 3) float32
    context_poses: np.ndarray  # (B, N, 7) float32
    query_pose: np.ndarray  # (B, 7) float32
    target: np.ndarray  # (B, 64, 64, 3) float32
    scene_indices: np.ndarray = field(repr=False, default=None)
    query_indices: np.ndarray = field(repr=False, default=None)
    context_indices: np.ndarray = field(repr=False, default=None)

    @property
    def batch_size(self) -> int:
        return self.context_frames.shape[0]

    @property
    def n_context(self) -> int:
        return self.context_frames.shape[1]


def sample_batch(
    records: list[SceneRecord],
    batch_size: int,
    rng,
    max_context: int = 4,
) -> Batch:
    """Sample a batch: per element a scene, a uniform query view, and a context
    of N views drawn without replacement from the remaining ones. The context
    size N is drawn once per batch, uniform in [1, max_context].

    `rng` is an integer seed or a numpy Generator (advanced in place).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not records:
        raise ValueError("no records to sample from")
    for i, rec in enumerate(records):
        if max_context > rec.n_views - 1:
            raise ValueError(
                f"max_context={max_context} exceeds K-1={rec.n_views - 1} for scene {i}"
            )
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    n_ctx = int(rng.integers(1, max_context + 1))
    ctx_frames = np.empty(
        (batch_size, n_ctx, IMAGE_SIZE, IMAGE_SIZE, CHANNELS), dtype=np.float32
    )
    ctx_poses = np.empty((batch_size, n_ctx, 7), dtype=np.float32)
    query_pose = np.empty((batch_size, 7), dtype=np.float32)
    target = np.empty((batch_size, IMAGE_SIZE, IMAGE_SIZE, CHANNELS), dtype=np.float32)
    scene_idx = np.empty(batch_size, dtype=np.int64)
    query_idx = np.empty(batch_size, dtype=np.int64)
    ctx_idx = np.empty((batch_size, n_ctx), dtype=np.int64)

    for b in range(batch_size):
        s = int(rng.integers(0, len(records)))
        rec = records[s]
        k = rec.n_views
        q = int(rng.integers(0, k))
        others = np.delete(np.arange(k), q)
        chosen = rng.choice(others, size=n_ctx, replace=False)
        scene_idx[b] = s
        query_idx[b] = q
        ctx_idx[b] = chosen
        for j, v in enumerate(chosen):
            ctx_frames[b, j] = rec.frames[v]
            ctx_poses[b, j] = encode_pose(rec.poses[v])
        query_pose[b] = encode_pose(rec.poses[q])
        target[b] = rec.frames[q]

    return Batch(
        context_frames=ctx_frames,
        context_poses=ctx_poses,
        query_pose=query_pose,
        target=target,
        scene_indices=scene_idx,
        query_indices=query_idx,
        context_indices=ctx_idx,
    )
