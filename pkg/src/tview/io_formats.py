"""Versioned JSON files for scenes and keypoint estimates.

Floats are written with Python's shortest round-trip ``repr``, so reading a
file back reproduces every value bit for bit. Non-finite numbers, which
strict JSON cannot hold, are written as ``null`` (NaN) or the strings
``"Infinity"`` / ``"-Infinity"``. See ``docs/formats.md``.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .camera import Camera
from .errors import IntegrityError, ParseError, SchemaVersionMismatch
from .estimator import FitConfig, KeypointEstimate, ScaleChol, materialize_sigma
from .simulator import Frame, NoiseSpec, RigSpec, Scene
from .tdist import MvtDist3
from .triangulation import TriangulationResult

SCENE_SCHEMA_VERSION = 1
ESTIMATES_SCHEMA_VERSION = 1
SIGMA_TOL = 1e-9


# ---------------------------------------------------------------------------
# number encoding


def _num(x):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return x


def _nums(a):
    return [_num(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _dec(v, where):
    if v is None:
        return math.nan
    if v == "Infinity":
        return math.inf
    if v == "-Infinity":
        return -math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _decs(v, n, where):
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(f"{where}: expected a list of {n} numbers")
    return np.array([_dec(x, f"{where}[{i}]") for i, x in enumerate(v)])


def _get(obj, key, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in obj:
        raise ParseError(f"{where}: missing field '{key}'")
    return obj[key]


# ---------------------------------------------------------------------------
# file plumbing


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a sibling temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_KEY = re.compile(r'"([^"\\]+)"\s*:')


def _load(path, expected_version):
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        keys = _KEY.findall(text, 0, exc.pos)
        field = f" (inside field '{keys[-1]}')" if keys else ""
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}{field}: {exc.msg}") from exc
    version = _get(obj, "schema_version", "root")
    if version != expected_version:
        raise SchemaVersionMismatch(f"{path}: schema_version {version!r}, expected {expected_version}")
    return obj


# ---------------------------------------------------------------------------
# cameras and scenes


def camera_to_dict(cam: Camera) -> dict:
    return {
        "id": cam.id,
        "intrinsics": _nums(cam.intrinsics),
        "rotation": _nums(cam.rotation),
        "translation": _nums(cam.translation),
    }


def camera_from_dict(d, where="camera") -> Camera:
    try:
        return Camera(
            id=str(_get(d, "id", where)),
            intrinsics=_decs(_get(d, "intrinsics", where), 9, f"{where}.intrinsics").reshape(3, 3),
            rotation=_decs(_get(d, "rotation", where), 9, f"{where}.rotation").reshape(3, 3),
            translation=_decs(_get(d, "translation", where), 3, f"{where}.translation"),
        )
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{where}: {exc}") from exc


def _rig_to_dict(rig: RigSpec | None):
    if rig is None:
        return None
    return {
        "kind": rig.kind,
        "radius": _num(rig.radius),
        "height": _num(rig.height),
        "focal_px": _num(rig.focal_px),
        "image_size": [int(v) for v in rig.image_size],
        "azimuths_deg": None if rig.azimuths_deg is None else _nums(rig.azimuths_deg),
    }


def _rig_from_dict(d):
    if d is None:
        return None
    az = _get(d, "azimuths_deg", "rig")
    return RigSpec(
        kind=_get(d, "kind", "rig"),
        radius=_dec(_get(d, "radius", "rig"), "rig.radius"),
        height=_dec(_get(d, "height", "rig"), "rig.height"),
        focal_px=_dec(_get(d, "focal_px", "rig"), "rig.focal_px"),
        image_size=tuple(int(v) for v in _get(d, "image_size", "rig")),
        azimuths_deg=None if az is None else tuple(float(v) for v in az),
    )


def _noise_to_dict(noise: NoiseSpec | None):
    if noise is None:
        return None
    return {
        "pixel_sigma": _num(noise.pixel_sigma),
        "outlier_rate": _num(noise.outlier_rate),
        "outlier_box": None if noise.outlier_box is None else _nums(noise.outlier_box),
        "seed": int(noise.seed),
    }


def _noise_from_dict(d):
    if d is None:
        return None
    box = _get(d, "outlier_box", "noise_spec")
    return NoiseSpec(
        pixel_sigma=_dec(_get(d, "pixel_sigma", "noise_spec"), "noise_spec.pixel_sigma"),
        outlier_rate=_dec(_get(d, "outlier_rate", "noise_spec"), "noise_spec.outlier_rate"),
        outlier_box=None if box is None else tuple(float(v) for v in box),
        seed=int(_get(d, "seed", "noise_spec")),
    )


def scene_to_dict(scene: Scene) -> dict:
    return {
        "schema_version": SCENE_SCHEMA_VERSION,
        "skeleton": {"names": list(scene.skeleton_names), "pelvis_index": int(scene.pelvis_index)},
        "rig": _rig_to_dict(scene.rig),
        "noise_spec": _noise_to_dict(scene.noise),
        "cameras": [camera_to_dict(c) for c in scene.cameras],
        "frames": [
            {
                "action": f.action,
                "gt_keypoints": [_nums(p) for p in f.gt],
                "observations": [[_nums(px) for px in cam_obs] for cam_obs in f.observations],
                "valid": [[bool(v) for v in row] for row in f.valid],
                "outlier": [[bool(v) for v in row] for row in f.outlier],
            }
            for f in scene.frames
        ],
    }


def _bool_grid(v, C, K, where):
    if not isinstance(v, list) or len(v) != C or any(not isinstance(r, list) or len(r) != K for r in v):
        raise ParseError(f"{where}: expected a {C}x{K} grid of booleans")
    if any(not isinstance(x, bool) for r in v for x in r):
        raise ParseError(f"{where}: non-boolean entry")
    return np.array(v, dtype=bool).reshape(C, K)


def scene_from_dict(obj) -> Scene:
    skel = _get(obj, "skeleton", "root")
    names = tuple(_get(skel, "names", "skeleton"))
    pelvis = int(_get(skel, "pelvis_index", "skeleton"))
    cams = [camera_from_dict(c, f"cameras[{i}]") for i, c in enumerate(_get(obj, "cameras", "root"))]
    C, K = len(cams), len(names)
    frames = []
    for n, f in enumerate(_get(obj, "frames", "root")):
        where = f"frames[{n}]"
        gt = _get(f, "gt_keypoints", where)
        if not isinstance(gt, list) or len(gt) != K:
            raise ParseError(f"{where}.gt_keypoints: expected {K} points")
        obs = _get(f, "observations", where)
        if not isinstance(obs, list) or len(obs) != C or any(not isinstance(r, list) or len(r) != K for r in obs):
            raise ParseError(f"{where}.observations: expected a {C}x{K} grid of pixels")
        frames.append(Frame(
            gt=np.array([_decs(p, 3, f"{where}.gt_keypoints[{k}]") for k, p in enumerate(gt)]).reshape(K, 3),
            observations=np.array([
                [_decs(px, 2, f"{where}.observations[{c}][{k}]") for k, px in enumerate(row)]
                for c, row in enumerate(obs)
            ]).reshape(C, K, 2),
            valid=_bool_grid(_get(f, "valid", where), C, K, f"{where}.valid"),
            outlier=_bool_grid(_get(f, "outlier", where), C, K, f"{where}.outlier"),
            action=str(_get(f, "action", where)),
        ))
    return Scene(
        cameras=cams,
        frames=frames,
        skeleton_names=names,
        pelvis_index=pelvis,
        noise=_noise_from_dict(_get(obj, "noise_spec", "root")),
        rig=_rig_from_dict(_get(obj, "rig", "root")),
    )


def scene_to_text(scene: Scene) -> str:
    return _dump(scene_to_dict(scene))


def write_scene(scene: Scene, path) -> None:
    write_atomic(path, scene_to_text(scene))


def read_scene(path) -> Scene:
    """Parse a scene file.

    Raises
    ------
    ParseError
        Malformed JSON (with line and column) or a missing/invalid field
        (with its path in the document).
    SchemaVersionMismatch
        Unknown ``schema_version``.
    """
    return scene_from_dict(_load(path, SCENE_SCHEMA_VERSION))


# ---------------------------------------------------------------------------
# estimates


def _tri_to_dict(tri: TriangulationResult | None):
    if tri is None:
        return None
    return {
        "point": _nums(tri.point),
        "smallest_singular_value": _num(tri.smallest_singular_value),
        "condition_ratio": _num(tri.condition_ratio),
        "degenerate": tri.degenerate,
    }


def _tri_from_dict(d, where):
    if d is None:
        return None
    return TriangulationResult(
        point=_decs(_get(d, "point", where), 3, f"{where}.point"),
        smallest_singular_value=_dec(_get(d, "smallest_singular_value", where), where),
        condition_ratio=_dec(_get(d, "condition_ratio", where), where),
    )


def estimate_to_dict(est: KeypointEstimate) -> dict:
    return {
        "mu": None if est.dist is None else _nums(est.dist.mu),
        "L_raw": None if est.chol is None else _nums(est.chol.as_vector()),
        "sigma": None if est.dist is None else _nums(est.dist.sigma),
        "final_loss": _num(est.final_loss),
        "iterations": int(est.iterations),
        "converged": bool(est.converged),
        "degenerate": bool(est.degenerate),
        "error": est.error,
        "triangulation": _tri_to_dict(est.triangulation),
    }


def estimate_from_dict(d, nu: float, where="estimate") -> KeypointEstimate:
    mu, sigma, raw = (_get(d, key, where) for key in ("mu", "sigma", "L_raw"))
    chol = None if raw is None else ScaleChol.from_vector(_decs(raw, 6, f"{where}.L_raw"))
    dist = None
    if mu is not None:
        if sigma is None or chol is None:
            raise ParseError(f"{where}: 'mu' present without 'sigma' and 'L_raw'")
        S = _decs(sigma, 9, f"{where}.sigma").reshape(3, 3)
        gap = np.max(np.abs(S - materialize_sigma(chol)))
        if not gap <= SIGMA_TOL:
            raise IntegrityError(f"{where}: sigma differs from materialize_sigma(L_raw) by {gap:.3g}")
        try:
            dist = MvtDist3(_decs(mu, 3, f"{where}.mu"), S, nu)
        except ValueError as exc:
            raise IntegrityError(f"{where}: {exc}") from exc
    return KeypointEstimate(
        dist=dist,
        final_loss=_dec(_get(d, "final_loss", where), f"{where}.final_loss"),
        iterations=int(_get(d, "iterations", where)),
        triangulation=_tri_from_dict(_get(d, "triangulation", where), f"{where}.triangulation"),
        converged=bool(_get(d, "converged", where)),
        chol=chol,
        error=_get(d, "error", where),
    )


def _config_to_dict(cfg: FitConfig) -> dict:
    return {
        "nu": _num(cfg.nu),
        "max_iters": int(cfg.max_iters),
        "step_size": _num(cfg.step_size),
        "rel_tol": _num(cfg.rel_tol),
        "init_scale": None if cfg.init_scale is None else _num(cfg.init_scale),
        "projection": cfg.projection,
        "floor_fraction": _num(cfg.floor_fraction),
    }


def _config_from_dict(d) -> FitConfig:
    w = "config"
    init = _get(d, "init_scale", w)
    return FitConfig(
        nu=_dec(_get(d, "nu", w), "config.nu"),
        max_iters=int(_get(d, "max_iters", w)),
        step_size=_dec(_get(d, "step_size", w), "config.step_size"),
        rel_tol=_dec(_get(d, "rel_tol", w), "config.rel_tol"),
        init_scale=None if init is None else _dec(init, "config.init_scale"),
        projection=str(_get(d, "projection", w)),
        floor_fraction=_dec(_get(d, "floor_fraction", w), "config.floor_fraction"),
    )


def estimates_to_dict(frames, cfg: FitConfig) -> dict:
    return {
        "schema_version": ESTIMATES_SCHEMA_VERSION,
        "config": _config_to_dict(cfg),
        "n_frames": len(frames),
        "n_keypoints": len(frames[0]) if frames else 0,
        "frames": [[estimate_to_dict(e) for e in ests] for ests in frames],
    }


def estimates_from_dict(obj):
    cfg = _config_from_dict(_get(obj, "config", "root"))
    raw = _get(obj, "frames", "root")
    n = _get(obj, "n_frames", "root")
    if not isinstance(raw, list) or n != len(raw):
        raise ParseError(f"root.n_frames: {n!r} does not match {len(raw) if isinstance(raw, list) else '?'} frames")
    frames = []
    for i, ests in enumerate(raw):
        if not isinstance(ests, list):
            raise ParseError(f"frames[{i}]: expected a list of estimates")
        frames.append([estimate_from_dict(e, cfg.nu, f"frames[{i}][{k}]") for k, e in enumerate(ests)])
    return frames, cfg


def write_estimates(frames, path, cfg: FitConfig = FitConfig()) -> None:
    """Write per-frame lists of :class:`KeypointEstimate`."""
    write_atomic(path, _dump(estimates_to_dict(frames, cfg)))


def read_estimates(path):
    """Returns ``(frames, config)``.

    Raises
    ------
    ParseError, SchemaVersionMismatch
        As for :func:`read_scene`.
    IntegrityError
        A stored ``sigma`` is not ``materialize_sigma(L_raw)`` to 1e-9.
    """
    return estimates_from_dict(_load(path, ESTIMATES_SCHEMA_VERSION))
