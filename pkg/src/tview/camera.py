"""Pinhole cameras and the affine (para-perspective) projection used to push
3D distributions onto image planes.

Conventions
-----------
Extrinsics map world to camera coordinates, ``x_cam = R @ x_world + t``.
The camera looks down its +z axis, image x grows to the right and image y
grows downwards. A rotation of +90 degrees about z therefore sends the world
x axis to the camera y axis: ``world_to_camera`` of ``(1, 0, 0)`` is
``(0, 1, 0)`` when ``R = Rz(pi/2)`` and ``t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAnchor, PointBehindCamera

EPS_DEPTH = 1e-6

PROJECTION_MODES = ("norm", "tangent", "anchored")


@dataclass(frozen=True, eq=False)
class Camera:
    """Calibrated pinhole camera without distortion.

    Parameters
    ----------
    id : str
        Camera name, unique within a rig.
    intrinsics : ndarray, shape (3, 3)
        ``[[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`` in pixels.
    rotation : ndarray, shape (3, 3)
        World-to-camera rotation.
    translation : ndarray, shape (3,)
        World-to-camera translation.
    """

    id: str
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    _proj: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.array(self.intrinsics, dtype=float).reshape(3, 3)
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError(f"camera {self.id!r}: non-finite parameters")
        if np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9 or abs(np.linalg.det(R) - 1.0) >= 1e-9:
            raise ValueError(f"camera {self.id!r}: rotation is not a proper orthonormal matrix")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError(f"camera {self.id!r}: focal lengths must be positive")
        if K[0, 1] != 0 or np.any(K[2] != (0.0, 0.0, 1.0)) or K[1, 0] != 0:
            raise ValueError(f"camera {self.id!r}: intrinsics must be zero-skew upper triangular")
        for name, arr in (("intrinsics", K), ("rotation", R), ("translation", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        P = K @ np.hstack([R, t[:, None]])
        P.setflags(write=False)
        object.__setattr__(self, "_proj", P)

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        return float(self.intrinsics[1, 2])

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        """Unit viewing direction in world coordinates."""
        return self.rotation[2].copy()

    def projection_matrix(self) -> np.ndarray:
        """3x4 matrix ``K [R | t]``."""
        return self._proj

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.intrinsics, other.intrinsics)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None

    @classmethod
    def look_at(cls, id, center, target, focal_px, principal_point, up=(0.0, 0.0, 1.0)):
        """Camera at ``center`` whose optical axis passes through ``target``.

        Image y points along ``-up`` projected onto the image plane.
        """
        center = np.asarray(center, dtype=float)
        z = np.asarray(target, dtype=float) - center
        z /= np.linalg.norm(z)
        up = np.asarray(up, dtype=float)
        x = np.cross(z, up)
        if np.linalg.norm(x) < 1e-12:
            raise ValueError("viewing direction is parallel to the up vector")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        # re-orthonormalise to keep the rotation check at machine precision
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        t = -R @ center
        fx, fy = (focal_px, focal_px) if np.isscalar(focal_px) else focal_px
        K = np.array([[fx, 0.0, principal_point[0]], [0.0, fy, principal_point[1]], [0.0, 0.0, 1.0]])
        return cls(id=id, intrinsics=K, rotation=R, translation=t)


@dataclass(frozen=True)
class ParaPerspectiveMap:
    """Affine map ``x -> A @ x + b`` from world points to pixels."""

    A: np.ndarray
    b: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.A.T + self.b


def world_to_camera(cam: Camera, x_world):
    """Camera-frame coordinates ``R x + t``; accepts ``(3,)`` or ``(..., 3)``."""
    x = np.asarray(x_world, dtype=float)
    return x @ cam.rotation.T + cam.translation


def project_perspective(cam: Camera, x_world):
    """Pinhole projection to pixels.

    Raises
    ------
    PointBehindCamera
        If any point has camera depth ``<= EPS_DEPTH``.
    """
    xc = world_to_camera(cam, x_world)
    z = xc[..., 2]
    if np.any(z <= EPS_DEPTH):
        raise PointBehindCamera(f"point behind camera {cam.id!r} (depth {np.min(z):.3g})")
    u = cam.fx * xc[..., 0] / z + cam.cx
    v = cam.fy * xc[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def para_perspective_at(cam: Camera, mu_world, mode: str = "norm") -> ParaPerspectiveMap:
    """Affine approximation of the camera projection, anchored at ``mu_world``.

    ``mode="norm"`` scales the first two camera coordinates by ``1/||mu_c||``
    (distance from the camera centre to the anchor). This agrees with the
    pinhole projection only for anchors on the optical axis: for ``mu_c =
    (3, 0, 4)`` under unit intrinsics the anchor maps to ``(0.6, 0)`` while
    the pinhole image is ``(0.75, 0)``.

    ``mode="tangent"`` is the first-order expansion of the pinhole projection
    at the anchor, so the anchor maps exactly onto its pinhole image and the
    approximation error is quadratic in the offset from the anchor.

    ``mode="anchored"`` keeps the ``1/||mu_c||`` linear part of ``"norm"`` but
    shifts the map so the anchor lands on its pinhole image. The offset
    direction along the anchor's viewing ray is invisible, as in ``"norm"``.

    Raises
    ------
    DegenerateAnchor
        If ``||mu_c|| <= EPS_DEPTH`` (or, outside ``"norm"``, the anchor depth is).
    """
    mu_c = world_to_camera(cam, mu_world)
    n = float(np.linalg.norm(mu_c))
    if n <= EPS_DEPTH:
        raise DegenerateAnchor(f"anchor at distance {n:.3g} from camera {cam.id!r}")
    K2 = np.diag([cam.fx, cam.fy])
    pp = np.array([cam.cx, cam.cy])
    if mode == "norm":
        B = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]) / n
        A = K2 @ B @ cam.rotation
        b = K2 @ B @ cam.translation + pp
    elif mode == "tangent":
        x, y, z = mu_c
        if z <= EPS_DEPTH:
            raise DegenerateAnchor(f"anchor depth {z:.3g} in camera {cam.id!r}")
        B = np.array([[1.0 / z, 0.0, -x / z**2], [0.0, 1.0 / z, -y / z**2]])
        A = K2 @ B @ cam.rotation
        # chosen so the anchor lands on its pinhole image
        b = K2 @ np.array([x / z, y / z]) + pp - A @ np.asarray(mu_world, dtype=float)
    elif mode == "anchored":
        x, y, z = mu_c
        if z <= EPS_DEPTH:
            raise DegenerateAnchor(f"anchor depth {z:.3g} in camera {cam.id!r}")
        A = K2 @ np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]) @ cam.rotation / n
        b = K2 @ np.array([x / z, y / z]) + pp - A @ np.asarray(mu_world, dtype=float)
    else:
        raise ValueError(f"unknown projection mode {mode!r}; expected one of {PROJECTION_MODES}")
    A.setflags(write=False)
    b.setflags(write=False)
    return ParaPerspectiveMap(A=A, b=b)
