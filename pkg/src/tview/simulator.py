"""Synthetic multi-camera capture: camera rigs, random 17-joint skeletons and
noisy/outlier-corrupted 2D labels.

World frame is z-up. Rigs are centred on ``(0, 0, height)``; every camera
sits at that height and looks horizontally at the centre. Sampled subjects
fit inside the 2 m cube around the rig centre.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camera import Camera, project_perspective
from .errors import PointBehindCamera

RIG_KINDS = ("four_ring", "two_same_side", "two_antipodal", "custom")

_RIG_AZIMUTHS = {
    "four_ring": (0.0, 90.0, 180.0, 270.0),
    "two_same_side": (0.0, 30.0),
    "two_antipodal": (0.0, 180.0),
}

# Human3.6M 17-joint order
JOINT_NAMES = (
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "spine", "thorax", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
)
PELVIS_INDEX = 0
PARENTS = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
# offset of each joint from its parent in the rest pose (metres); the subject
# faces +y with its left side towards +x
BONE_OFFSETS = np.array([
    [0.0, 0.0, 0.0],
    [-0.13, 0.0, 0.0], [0.0, 0.0, -0.45], [0.0, 0.0, -0.44],
    [0.13, 0.0, 0.0], [0.0, 0.0, -0.45], [0.0, 0.0, -0.44],
    [0.0, 0.0, 0.23], [0.0, 0.0, 0.25], [0.0, 0.03, 0.12], [0.0, 0.0, 0.12],
    [0.16, 0.0, 0.0], [0.0, 0.0, -0.28], [0.0, 0.0, -0.25],
    [-0.16, 0.0, 0.0], [0.0, 0.0, -0.28], [0.0, 0.0, -0.25],
])

# (x, y, z) Euler ranges in radians for the rotation applied at each joint.
# Flexion is about x; positive x-rotation swings a downward bone forward.
_BASE_RANGES = {
    1: ((-0.4, 0.9), (-0.3, 0.2), (-0.3, 0.3)),
    4: ((-0.4, 0.9), (-0.2, 0.3), (-0.3, 0.3)),
    2: ((-1.6, 0.0), (0.0, 0.0), (0.0, 0.0)),
    5: ((-1.6, 0.0), (0.0, 0.0), (0.0, 0.0)),
    7: ((-0.2, 0.5), (-0.25, 0.25), (-0.4, 0.4)),
    8: ((-0.15, 0.15), (-0.15, 0.15), (-0.2, 0.2)),
    9: ((-0.4, 0.4), (-0.3, 0.3), (-0.6, 0.6)),
    11: ((-0.6, 2.6), (-0.2, 1.4), (-0.5, 0.5)),
    14: ((-0.6, 2.6), (-1.4, 0.2), (-0.5, 0.5)),
    12: ((0.0, 2.3), (0.0, 0.0), (0.0, 0.0)),
    15: ((0.0, 2.3), (0.0, 0.0), (0.0, 0.0)),
}

# pose styles narrow the base ranges; these become the evaluation groups
POSE_STYLES = {
    "Stand": {1: ((-0.1, 0.2),), 4: ((-0.1, 0.2),), 2: ((-0.3, 0.0),), 5: ((-0.3, 0.0),),
              11: ((-0.3, 0.6),), 14: ((-0.3, 0.6),)},
    "Walk": {1: ((-0.4, 0.6),), 4: ((-0.4, 0.6),), 2: ((-1.0, 0.0),), 5: ((-1.0, 0.0),),
             11: ((-0.6, 0.6),), 14: ((-0.6, 0.6),)},
    "Sit": {1: ((1.2, 1.6),), 4: ((1.2, 1.6),), 2: ((-1.7, -1.3),), 5: ((-1.7, -1.3),),
            7: ((0.0, 0.3),)},
    "Reach": {11: ((1.5, 2.6),), 14: ((1.5, 2.6),), 12: ((0.0, 0.8),), 15: ((0.0, 0.8),)},
}

CUBE_HALF = 1.0


@dataclass(frozen=True)
class RigSpec:
    kind: str = "four_ring"
    radius: float = 4.0
    height: float = 1.0
    focal_px: float = 280.0
    image_size: tuple = (256, 256)
    azimuths_deg: tuple | None = None

    def __post_init__(self):
        if self.kind not in RIG_KINDS:
            raise ValueError(f"unknown rig kind {self.kind!r}; expected one of {RIG_KINDS}")
        if not self.radius > 0 or not self.focal_px > 0:
            raise ValueError("radius and focal_px must be positive")
        if self.kind == "custom" and not self.azimuths_deg:
            raise ValueError("custom rigs need azimuths_deg")
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if self.azimuths_deg is not None:
            object.__setattr__(self, "azimuths_deg", tuple(float(a) for a in self.azimuths_deg))

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.height])


@dataclass(frozen=True)
class NoiseSpec:
    """Inlier Gaussian pixel noise plus uniform outliers.

    ``outlier_box`` is ``(u_min, v_min, u_max, v_max)`` in pixels; None means
    the full image.
    """

    pixel_sigma: float = 0.0
    outlier_rate: float = 0.0
    outlier_box: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.pixel_sigma >= 0:
            raise ValueError("pixel_sigma must be non-negative")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError("outlier_rate must lie in [0, 1]")
        if self.outlier_box is not None:
            box = tuple(float(v) for v in self.outlier_box)
            if len(box) != 4 or box[2] < box[0] or box[3] < box[1]:
                raise ValueError("outlier_box must be (u_min, v_min, u_max, v_max)")
            object.__setattr__(self, "outlier_box", box)


@dataclass(eq=False)
class Frame:
    gt: np.ndarray            # (K, 3)
    observations: np.ndarray  # (C, K, 2)
    valid: np.ndarray         # (C, K) bool
    outlier: np.ndarray       # (C, K) bool
    action: str = ""

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.action == other.action
            and np.array_equal(self.gt, other.gt)
            and np.array_equal(self.observations, other.observations, equal_nan=True)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.outlier, other.outlier)
        )


@dataclass(eq=True)
class Scene:
    cameras: list
    frames: list
    skeleton_names: tuple = JOINT_NAMES
    pelvis_index: int = PELVIS_INDEX
    noise: NoiseSpec | None = None
    rig: RigSpec | None = None

    @property
    def n_keypoints(self) -> int:
        return len(self.skeleton_names)


def build_rig(spec: RigSpec) -> list[Camera]:
    """Cameras on a horizontal circle around the rig centre, all facing it.

    ``two_same_side`` cameras are 30 degrees apart, ``two_antipodal`` face
    each other along the world x axis.
    """
    azimuths = spec.azimuths_deg if spec.kind == "custom" else _RIG_AZIMUTHS[spec.kind]
    w, h = spec.image_size
    pp = (w / 2.0, h / 2.0)
    cams = []
    for i, az in enumerate(azimuths):
        a = np.deg2rad(az)
        center = spec.center + spec.radius * np.array([np.cos(a), np.sin(a), 0.0])
        cams.append(Camera.look_at(f"cam{i}", center, spec.center, spec.focal_px, pp))
    return cams


def _euler(rx, ry, rz):
    cx, sx, cy, sy, cz, sz = np.cos(rx), np.sin(rx), np.cos(ry), np.sin(ry), np.cos(rz), np.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def forward_kinematics(root, root_rot, local_rots) -> np.ndarray:
    """Joint positions for a rest skeleton posed by per-joint rotations."""
    K = len(PARENTS)
    pos = np.zeros((K, 3))
    glob = [None] * K
    pos[0] = root
    glob[0] = root_rot @ local_rots[0]
    for j in range(1, K):
        p = PARENTS[j]
        pos[j] = pos[p] + glob[p] @ BONE_OFFSETS[j]
        glob[j] = glob[p] @ local_rots[j]
    return pos


def bone_lengths(pose) -> np.ndarray:
    pose = np.asarray(pose)
    return np.array([np.linalg.norm(pose[j] - pose[PARENTS[j]]) for j in range(1, len(PARENTS))])


def sample_pose(rng: np.random.Generator, style: str | None = None, center=(0.0, 0.0, 1.0)) -> np.ndarray:
    """One random skeleton (17 x 3) inside the 2 m cube around ``center``.

    Bone lengths are fixed; joint rotations are drawn uniformly within
    per-joint ranges (narrowed by ``style``); the pelvis position is the
    sampled root translation.
    """
    center = np.asarray(center, dtype=float)
    ranges = dict(_BASE_RANGES)
    for j, override in POSE_STYLES.get(style, {}).items():
        ranges[j] = override + ranges[j][len(override):]
    while True:
        local = [np.eye(3)] * len(PARENTS)
        for j, rng_xyz in sorted(ranges.items()):
            angles = [rng.uniform(lo, hi) for lo, hi in rng_xyz]
            local[j] = _euler(*angles)
        yaw = rng.uniform(-np.pi, np.pi)
        tilt = rng.uniform(-0.1, 0.1, size=2)
        root_rot = _euler(tilt[0], tilt[1], yaw)
        rel = forward_kinematics(np.zeros(3), root_rot, local)
        lo = rel.min(axis=0)
        hi = rel.max(axis=0)
        if np.all(hi - lo < 2 * CUBE_HALF):
            break
    root = rng.uniform(center - CUBE_HALF - lo, center + CUBE_HALF - hi)
    return root + rel


def observe(gt_frames, cameras: Sequence[Camera], noise: NoiseSpec, rng: np.random.Generator | None = None, image_size=(256, 256)):
    """Noisy 2D labels for a sequence of ``(K, 3)`` keypoint sets.

    Returns ``(observations, valid, outlier)`` with shapes ``(F, C, K, 2)``,
    ``(F, C, K)``, ``(F, C, K)``. Keypoints behind a camera are marked invalid
    and get NaN labels.
    """
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    box = noise.outlier_box or (0.0, 0.0, float(image_size[0]), float(image_size[1]))
    gt_frames = np.asarray(gt_frames, dtype=float)
    F, K = gt_frames.shape[:2]
    C = len(cameras)
    obs = np.full((F, C, K, 2), np.nan)
    valid = np.zeros((F, C, K), dtype=bool)
    out = np.zeros((F, C, K), dtype=bool)
    for f in range(F):
        for c, cam in enumerate(cameras):
            # draws happen for every (camera, keypoint) so the stream layout
            # does not depend on visibility
            is_out = rng.random(K) < noise.outlier_rate
            uniform = np.column_stack([rng.uniform(box[0], box[2], K), rng.uniform(box[1], box[3], K)])
            gauss = rng.standard_normal((K, 2)) * noise.pixel_sigma
            for k in range(K):
                try:
                    px = project_perspective(cam, gt_frames[f, k])
                except PointBehindCamera:
                    continue
                valid[f, c, k] = True
                out[f, c, k] = is_out[k]
                obs[f, c, k] = uniform[k] if is_out[k] else px + gauss[k]
    return obs, valid, out


def simulate_scene(rig: RigSpec, n_frames: int, noise: NoiseSpec, styles: Sequence[str] | None = None) -> Scene:
    """Generate a full scene from a single RNG stream seeded by ``noise.seed``.

    Frames cycle through ``styles`` (default: all pose styles).
    """
    rng = np.random.default_rng(noise.seed)
    cams = build_rig(rig)
    styles = tuple(styles) if styles else tuple(POSE_STYLES)
    frames = []
    for i in range(n_frames):
        style = styles[i % len(styles)]
        gt = sample_pose(rng, style, rig.center)
        obs, valid, out = observe(gt[None], cams, noise, rng, rig.image_size)
        frames.append(Frame(gt=gt, observations=obs[0], valid=valid[0], outlier=out[0], action=style))
    return Scene(cameras=cams, frames=frames, noise=noise, rig=rig)
