"""Pose-error and calibration metrics, and their aggregation into tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IndexOutOfRange
from .estimator import KeypointEstimate
from .tdist import confidence_radius2

DEFAULT_LEVELS = (0.5, 0.9, 0.95)
MM_PER_UNIT = 1000.0


def _aligned_errors(pred, gt, pelvis_index):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ValueError(f"expected matching (K, 3) arrays, got {pred.shape} and {gt.shape}")
    K = pred.shape[0]
    if not -K <= pelvis_index < K:
        raise IndexOutOfRange(f"pelvis index {pelvis_index} out of range for {K} joints")
    rel_pred = pred - pred[pelvis_index]
    rel_gt = gt - gt[pelvis_index]
    return np.linalg.norm(rel_pred - rel_gt, axis=1)


def mpjpe(pred, gt, pelvis_index: int = 0) -> float:
    """Mean per-joint position error after subtracting each set's pelvis.

    The pelvis itself stays in the mean (it contributes zero).
    """
    return float(np.mean(_aligned_errors(pred, gt, pelvis_index)))


def coverage(estimates: Sequence[KeypointEstimate], gt, level: float) -> float:
    """Fraction of ground-truth points inside their estimate's ``level``
    confidence ellipsoid. Failed estimates count as misses."""
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    if len(estimates) != len(gt):
        raise ValueError("estimates and ground truth differ in length")
    if len(gt) == 0:
        return float("nan")
    hits = sum(_covered(e, g, level) for e, g in zip(estimates, gt))
    return hits / len(gt)


def _covered(est: KeypointEstimate, g, level) -> bool:
    if est.dist is None:
        return False
    return bool(est.dist.mahalanobis2(g) <= confidence_radius2(est.dist, level))


@dataclass
class FrameMetrics:
    """Per-frame evaluation record; ``joint_errors`` holds NaN for joints
    excluded from the error."""

    joint_errors: np.ndarray
    covered: dict
    n_keypoints: int
    n_degenerate: int
    group: str = ""

    @property
    def mpjpe(self) -> float:
        e = self.joint_errors[np.isfinite(self.joint_errors)]
        return float(np.mean(e)) if e.size else float("nan")


def frame_metrics(estimates: Sequence[KeypointEstimate], gt, pelvis_index: int = 0,
                  levels: Sequence[float] = DEFAULT_LEVELS, include_degenerate: bool = True,
                  group: str = "") -> FrameMetrics:
    gt = np.asarray(gt, dtype=float)
    if len(estimates) != len(gt):
        raise ValueError("estimates and ground truth differ in length")
    pred = np.array([e.mu for e in estimates])
    errors = _aligned_errors(pred, gt, pelvis_index)
    degenerate = np.array([e.degenerate for e in estimates])
    if not include_degenerate:
        errors = np.where(degenerate, np.nan, errors)
    covered = {lv: int(sum(_covered(e, g, lv) for e, g in zip(estimates, gt))) for lv in levels}
    return FrameMetrics(errors, covered, len(gt), int(degenerate.sum()), group)


@dataclass
class MetricsReport:
    """Aggregated metrics. Lengths are reported in millimetres assuming
    metre scene units.

    The ``n_*`` and ``*_sum`` fields are the accumulators needed to merge
    reports exactly.
    """

    mpjpe_mm: float
    per_keypoint_mpjpe: np.ndarray
    coverage_at: dict
    n_frames: int
    degenerate_fraction: float
    mpjpe_se_mm: float = float("nan")
    n_mpjpe_frames: int = 0
    n_keypoint_frames: int = 0
    per_keypoint_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    mpjpe_sq_mm: float = float("nan")


def summarize_frames(frames: Sequence[FrameMetrics]) -> MetricsReport:
    """Frame-weighted aggregate of per-frame metrics."""
    if not frames:
        raise ValueError("need at least one frame")
    per_frame = np.array([f.mpjpe for f in frames]) * MM_PER_UNIT
    finite = per_frame[np.isfinite(per_frame)]
    n = finite.size
    mean = float(np.mean(finite)) if n else float("nan")
    sq = float(np.mean(finite**2)) if n else float("nan")
    errs = np.array([f.joint_errors for f in frames]) * MM_PER_UNIT
    counts = np.sum(np.isfinite(errs), axis=0)
    with np.errstate(invalid="ignore"):
        per_kp = np.nansum(errs, axis=0) / np.where(counts > 0, counts, np.nan)
    n_kf = sum(f.n_keypoints for f in frames)
    levels = frames[0].covered.keys()
    cov = {lv: sum(f.covered[lv] for f in frames) / n_kf for lv in levels}
    return MetricsReport(
        mpjpe_mm=mean,
        per_keypoint_mpjpe=per_kp,
        coverage_at=cov,
        n_frames=len(frames),
        degenerate_fraction=sum(f.n_degenerate for f in frames) / n_kf,
        mpjpe_se_mm=_se(mean, sq, n),
        n_mpjpe_frames=n,
        n_keypoint_frames=n_kf,
        per_keypoint_counts=counts,
        mpjpe_sq_mm=sq,
    )


def _se(mean, sq, n):
    if n < 2:
        return float("nan")
    var = max(sq - mean * mean, 0.0) * n / (n - 1)
    return float(np.sqrt(var / n))


def merge_reports(a: MetricsReport, b: MetricsReport) -> MetricsReport:
    """Frame-weighted combination of two reports over disjoint frame sets."""
    def wmean(x, nx, y, ny):
        if nx + ny == 0:
            return float("nan")
        if nx == 0:
            return y
        if ny == 0:
            return x
        return (nx * x + ny * y) / (nx + ny)

    n = a.n_mpjpe_frames + b.n_mpjpe_frames
    mean = wmean(a.mpjpe_mm, a.n_mpjpe_frames, b.mpjpe_mm, b.n_mpjpe_frames)
    sq = wmean(a.mpjpe_sq_mm, a.n_mpjpe_frames, b.mpjpe_sq_mm, b.n_mpjpe_frames)
    counts = a.per_keypoint_counts + b.per_keypoint_counts
    with np.errstate(invalid="ignore"):
        per_kp = (
            np.nan_to_num(a.per_keypoint_mpjpe) * a.per_keypoint_counts
            + np.nan_to_num(b.per_keypoint_mpjpe) * b.per_keypoint_counts
        ) / np.where(counts > 0, counts, np.nan)
    nk = a.n_keypoint_frames + b.n_keypoint_frames
    cov = {lv: wmean(a.coverage_at[lv], a.n_keypoint_frames, b.coverage_at[lv], b.n_keypoint_frames) for lv in a.coverage_at}
    return MetricsReport(
        mpjpe_mm=mean,
        per_keypoint_mpjpe=per_kp,
        coverage_at=cov,
        n_frames=a.n_frames + b.n_frames,
        degenerate_fraction=wmean(a.degenerate_fraction, a.n_keypoint_frames, b.degenerate_fraction, b.n_keypoint_frames),
        mpjpe_se_mm=_se(mean, sq, n),
        n_mpjpe_frames=n,
        n_keypoint_frames=nk,
        per_keypoint_counts=counts,
        mpjpe_sq_mm=sq,
    )


def summarize(frames: Sequence[FrameMetrics], groups: Sequence[str] | None = None):
    """Overall and per-group reports plus CSV rows.

    Parameters
    ----------
    frames : sequence of FrameMetrics
    groups : sequence of str, optional
        Group label per frame; defaults to each frame's ``group``.

    Returns
    -------
    overall : MetricsReport
        Frame-weighted over all frames (the ``Avg`` row).
    by_group : dict[str, MetricsReport]
        In order of first appearance.
    rows : list of tuple
        ``(group, metric, value, n)`` rows; see :func:`report_rows`.
    """
    if not frames:
        raise ValueError("need at least one frame")
    labels = list(groups) if groups is not None else [f.group for f in frames]
    if len(labels) != len(frames):
        raise ValueError("one group label per frame required")
    order = list(dict.fromkeys(labels))
    by_group = {g: summarize_frames([f for f, lab in zip(frames, labels) if lab == g]) for g in order}
    overall = summarize_frames(frames)
    return overall, by_group, report_rows(overall, by_group)


def group_weighted_mpjpe(by_group: dict) -> float:
    vals = [r.mpjpe_mm for r in by_group.values() if np.isfinite(r.mpjpe_mm)]
    return float(np.mean(vals)) if vals else float("nan")


def report_rows(overall: MetricsReport, by_group: dict) -> list[tuple]:
    """Long-format rows. ``Avg`` is frame-weighted, ``AvgGroups`` weights
    every group equally."""
    rows = []

    def add(group, rep):
        rows.append((group, "mpjpe_mm", rep.mpjpe_mm, rep.n_mpjpe_frames))
        rows.append((group, "mpjpe_se_mm", rep.mpjpe_se_mm, rep.n_mpjpe_frames))
        for lv, val in rep.coverage_at.items():
            rows.append((group, f"coverage@{lv:g}", val, rep.n_keypoint_frames))
        rows.append((group, "degenerate_fraction", rep.degenerate_fraction, rep.n_keypoint_frames))

    add("Avg", overall)
    rows.append(("AvgGroups", "mpjpe_mm", group_weighted_mpjpe(by_group), len(by_group)))
    for g, rep in by_group.items():
        add(g, rep)
    return rows


def format_value(v: float) -> str:
    return f"{v:.6g}"


def rows_to_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "metric", "value", "n"])
    for g, m, v, n in rows:
        w.writerow([g, m, format_value(v), n])
    return buf.getvalue()


def evaluate_frames(estimates_per_frame, gt_frames, groups=None, pelvis_index: int = 0,
                    levels: Sequence[float] = DEFAULT_LEVELS, include_degenerate: bool = True):
    """Frame metrics for matching sequences of estimates and ground truth."""
    if len(estimates_per_frame) != len(gt_frames):
        raise ValueError("frame counts differ")
    groups = groups if groups is not None else [""] * len(gt_frames)
    return [
        frame_metrics(ests, gt, pelvis_index, levels, include_degenerate, grp)
        for ests, gt, grp in zip(estimates_per_frame, gt_frames, groups)
    ]
