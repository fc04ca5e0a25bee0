"""Tracking and segmentation evaluation.

CLEAR-MOT accounting with sticky-then-optimal frame matching, and
COCO-style average precision over mask IoU.  Both evaluators are pure
and re-entrant; MOT evaluation is sequential over frames (the sticky
correspondence is stateful) but independent across videos, and AP
evaluation is independent per (category, threshold) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import geometry
from .errors import SchemaError, UndefinedMetricError
from .formats import CocoDataset, image_frame_map
from .geometry import Segmentation
from .tracking import DetectionRecord, Track

IOU_THRESHOLDS = tuple(0.5 + 0.05 * i for i in range(10))
AREA_RANGES = {
    "all": (0.0, math.inf),
    "small": (0.0, 32.0 ** 2),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, math.inf),
}
RECALL_POINTS = tuple(i / 100.0 for i in range(101))


@dataclass(frozen=True)
class MotConfig:
    """Matching threshold and the accounting denominator.

    ``denominator`` selects what normalizes the error total: the number
    of ground-truth objects summed over frames (the standard choice) or
    the number of frames, which some reported figures use for
    fixed-population videos.
    """

    iou_threshold: float = 0.5
    denominator: str = "gt_objects"

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.denominator not in ("gt_objects", "frames"):
            raise ValueError(f"denominator must be 'gt_objects' or 'frames', got {self.denominator!r}")


@dataclass(frozen=True)
class MotFrameLog:
    frame: int
    matches: tuple[tuple[str, str, float], ...]  # (gt_id, pred_label, iou)
    misses: tuple[str, ...]
    false_positives: tuple[str, ...]
    switches: tuple[str, ...]


@dataclass(frozen=True)
class MotReport:
    false_negatives: int
    id_switches: int
    false_positives: int
    n_gt: int
    mota: float
    motp: float
    per_frame_log: tuple[MotFrameLog, ...]

    @property
    def n_frames(self) -> int:
        return len(self.per_frame_log)


@dataclass(frozen=True)
class ApRow:
    """Per-category average precision columns; None marks an empty area range."""

    name: str
    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None

    def values(self) -> tuple[float | None, ...]:
        return (self.ap, self.ap50, self.ap75, self.ap_small, self.ap_medium, self.ap_large)


@dataclass(frozen=True)
class ApReport:
    rows: tuple[ApRow, ...]


# ---------------------------------------------------------------------------
# assignment


def _min_cost(mat: list[list[float]], rows: list[int], cols: list[int]) -> float:
    """Minimal assignment cost covering every row (len(rows) <= len(cols)).

    Shortest-augmenting-path formulation with dual potentials, O(n^2 m).
    """
    n, m = len(rows), len(cols)
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: 1-based row index assigned to column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [math.inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = math.inf
            j1 = -1
            crow = mat[rows[i0 - 1]]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = crow[cols[j - 1]] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    total = 0.0
    for j in range(1, m + 1):
        if p[j]:
            total += mat[rows[p[j] - 1]][cols[j - 1]]
    return total


def hungarian(cost: Sequence[Sequence[float]]) -> dict[int, int]:
    """Minimum-cost assignment covering min(rows, cols) pairs.

    Among equal-cost optima the result is canonical: row 0 takes the
    lowest column index it can hold in any optimal assignment, then row
    1, and so on.  Rectangular inputs are padded internally with
    zero-cost dummy columns, which drop out of the returned map.
    """
    mat = [[float(v) for v in row] for row in cost]
    n_rows = len(mat)
    if n_rows == 0:
        return {}
    n_real = len(mat[0])
    if any(len(row) != n_real for row in mat):
        raise ValueError("cost matrix must be rectangular")
    if n_real == 0:
        return {}
    for row in mat:
        for v in row:
            if not math.isfinite(v):
                raise ValueError(f"cost matrix entries must be finite, got {v}")
    n_cols = n_real
    if n_rows > n_real:
        for row in mat:
            row.extend(0.0 for _ in range(n_rows - n_real))
        n_cols = n_rows

    scale = 1.0 + max(abs(v) for row in mat for v in row) * max(n_rows, n_cols)
    tol = 1e-9 * scale
    remaining = list(range(n_cols))
    assignment: dict[int, int] = {}
    for r in range(n_rows):
        sub_rows = list(range(r + 1, n_rows))
        totals = []
        for c in remaining:
            rest = [x for x in remaining if x != c]
            completion = _min_cost(mat, sub_rows, rest) if sub_rows else 0.0
            totals.append(mat[r][c] + completion)
        best = min(totals)
        pick = next(i for i, t in enumerate(totals) if t <= best + tol)
        assignment[r] = remaining.pop(pick)
    return {r: c for r, c in assignment.items() if c < n_real}


# ---------------------------------------------------------------------------
# CLEAR-MOT


def mota(fn: int, ids: int, fp: int, n_gt: int) -> float:
    """1 - (FN + IDS + FP) / N_GT."""
    if n_gt <= 0:
        raise UndefinedMetricError(f"n_gt must be positive, got {n_gt}")
    return 1.0 - (fn + ids + fp) / n_gt


def event_rates(count: int, n_frames: int) -> float:
    """Event count as a percentage of frames."""
    if n_frames <= 0:
        raise UndefinedMetricError(f"n_frames must be positive, got {n_frames}")
    return 100.0 * count / n_frames


def match_frame(
    gt: Sequence[tuple[str, Segmentation]],
    preds: Sequence[tuple[str, Segmentation]],
    prev: Mapping[str, str],
    cfg: MotConfig | None = None,
    frame: int = 0,
) -> MotFrameLog:
    """Match one frame's predictions to its ground-truth objects.

    Previous correspondences are kept while their IoU stays at or above
    the threshold (sticky rule); the remainder is assigned by minimum
    total (1 - IoU) cost, discarding below-threshold pairs.  A matched
    ground-truth object whose prediction label differs from its most
    recent matched label counts as an identity switch.
    """
    cfg = cfg or MotConfig()
    gt_ids = [g[0] for g in gt]
    if len(set(gt_ids)) != len(gt_ids):
        raise ValueError(f"duplicate ground-truth ids in frame {frame}")
    pred_index = {label: j for j, (label, _) in enumerate(preds)}
    if len(pred_index) != len(preds):
        raise ValueError(f"duplicate prediction labels in frame {frame}")

    cache: dict[tuple[int, int], float] = {}

    def iou(gi: int, pj: int) -> float:
        key = (gi, pj)
        if key not in cache:
            cache[key] = geometry.segmentation_iou(gt[gi][1], preds[pj][1])
        return cache[key]

    thr = cfg.iou_threshold
    matches: dict[int, int] = {}
    used_preds: set[int] = set()

    # sticky step; if two objects share a previous label, higher IoU wins
    claims: dict[int, list[tuple[float, int]]] = {}
    for gi, gid in enumerate(gt_ids):
        label = prev.get(gid)
        if label is None or label not in pred_index:
            continue
        pj = pred_index[label]
        v = iou(gi, pj)
        if v >= thr:
            claims.setdefault(pj, []).append((-v, gi))
    for pj, cands in claims.items():
        cands.sort()
        matches[cands[0][1]] = pj
        used_preds.add(pj)

    rem_gt = [gi for gi in range(len(gt)) if gi not in matches]
    rem_pred = [pj for pj in range(len(preds)) if pj not in used_preds]
    if rem_gt and rem_pred:
        cost = [[1.0 - iou(gi, pj) for pj in rem_pred] for gi in rem_gt]
        for ri, ci in hungarian(cost).items():
            gi, pj = rem_gt[ri], rem_pred[ci]
            if iou(gi, pj) >= thr:
                matches[gi] = pj
                used_preds.add(pj)

    rows = []
    switches = []
    for gi in sorted(matches):
        gid = gt_ids[gi]
        label = preds[matches[gi]][0]
        rows.append((gid, label, iou(gi, matches[gi])))
        if gid in prev and prev[gid] != label:
            switches.append(gid)
    misses = tuple(gt_ids[gi] for gi in range(len(gt)) if gi not in matches)
    fps = tuple(preds[pj][0] for pj in range(len(preds)) if pj not in used_preds)
    return MotFrameLog(
        frame=frame,
        matches=tuple(rows),
        misses=misses,
        false_positives=fps,
        switches=tuple(switches),
    )


def _states_by_frame(tracks: Sequence[Track]) -> dict[int, list[tuple[str, Segmentation]]]:
    by_frame: dict[int, list[tuple[str, Segmentation]]] = {}
    for track in sorted(tracks, key=lambda t: t.label):
        for s in track.states:
            if s.present and s.segmentation is not None:
                by_frame.setdefault(s.frame, []).append((track.label, s.segmentation))
    return by_frame


def evaluate_mot(
    gt_tracks: Sequence[Track],
    pred_tracks: Sequence[Track],
    cfg: MotConfig | None = None,
) -> MotReport:
    """Fold frame matching over the whole sequence and accumulate the error counts.

    States without a stored mask (e.g. interpolated ones) do not take
    part in matching.  ``n_gt`` follows the configured denominator.
    """
    cfg = cfg or MotConfig()
    gt_frames = _states_by_frame(gt_tracks)
    pred_frames = _states_by_frame(pred_tracks)
    total_gt = sum(len(v) for v in gt_frames.values())
    if total_gt == 0:
        raise UndefinedMetricError("no ground-truth objects to evaluate")
    frames = sorted(set(gt_frames) | set(pred_frames))

    prev: dict[str, str] = {}
    logs = []
    fn = fp = ids = 0
    iou_sum = 0.0
    n_matches = 0
    for f in frames:
        log = match_frame(gt_frames.get(f, []), pred_frames.get(f, []), prev, cfg, frame=f)
        logs.append(log)
        fn += len(log.misses)
        fp += len(log.false_positives)
        ids += len(log.switches)
        for gid, label, v in log.matches:
            prev[gid] = label
            iou_sum += v
            n_matches += 1
    n_gt = total_gt if cfg.denominator == "gt_objects" else len(frames)
    return MotReport(
        false_negatives=fn,
        id_switches=ids,
        false_positives=fp,
        n_gt=n_gt,
        mota=mota(fn, ids, fp, n_gt),
        motp=iou_sum / n_matches if n_matches else 0.0,
        per_frame_log=tuple(logs),
    )


# ---------------------------------------------------------------------------
# COCO average precision


def _average_precision(scored: list[tuple[float, int, bool, bool]], n_gt: int) -> float:
    """101-point interpolated AP from per-detection (score, idx, tp, ignored) rows."""
    ordered = sorted(scored, key=lambda t: (-t[0], t[1]))
    tp_cum = []
    fp_cum = []
    tp = fp = 0
    for _, _, is_tp, ignored in ordered:
        if ignored:
            continue
        tp += 1 if is_tp else 0
        fp += 0 if is_tp else 1
        tp_cum.append(tp)
        fp_cum.append(fp)
    if not tp_cum:
        return 0.0
    recall = [t / n_gt for t in tp_cum]
    precision = [t / (t + f) for t, f in zip(tp_cum, fp_cum)]
    for i in range(len(precision) - 2, -1, -1):  # monotone envelope
        precision[i] = max(precision[i], precision[i + 1])
    total = 0.0
    k = 0
    for r in RECALL_POINTS:
        while k < len(recall) and recall[k] < r:
            k += 1
        if k < len(recall):
            total += precision[k]
    return total / len(RECALL_POINTS)


def evaluate_coco_ap(
    gt: CocoDataset,
    preds: Sequence[DetectionRecord],
    max_dets: int = 100,
) -> ApReport:
    """COCO-protocol mask AP per category.

    Detections map onto ground-truth images via the frame number; per
    image and category only the ``max_dets`` highest-scoring detections
    are evaluated.  Matching is greedy in score order against the
    unmatched ground truth with the highest IoU at or above each
    threshold in 0.50..0.95.  Area-restricted columns ignore
    out-of-range ground truth (and the detections consumed by it, plus
    unmatched detections outside the range) following the reference
    protocol; ranges with no ground truth render as None.
    """
    frames = image_frame_map(gt)
    cat_id_of = {c.name: c.id for c in gt.categories}
    unknown = sorted({d.label for d in preds if d.label not in cat_id_of})
    if unknown:
        raise SchemaError(f"unknown categories in predictions: {unknown}")
    bad_frames = sorted({d.frame for d in preds if d.frame not in frames})
    if bad_frames:
        raise SchemaError(f"prediction frames without a matching image: {bad_frames}")

    gts_by_key: dict[tuple[int, int], list] = {}
    for ann in gt.annotations:
        gts_by_key.setdefault((ann.image_id, ann.category_id), []).append(ann)
    dets_by_key: dict[tuple[int, int], list[tuple[int, DetectionRecord]]] = {}
    for idx, det in enumerate(preds):
        key = (frames[det.frame].id, cat_id_of[det.label])
        dets_by_key.setdefault(key, []).append((idx, det))
    for lst in dets_by_key.values():
        lst.sort(key=lambda t: (-t[1].score, t[0]))
        del lst[max_dets:]

    rows = []
    for cat in sorted(gt.categories, key=lambda c: c.id):
        units = []
        keys = {k for k in gts_by_key if k[1] == cat.id} | {k for k in dets_by_key if k[1] == cat.id}
        for key in sorted(keys):
            g = gts_by_key.get(key, [])
            d = dets_by_key.get(key, [])
            ious = [
                [geometry.segmentation_iou(det.segmentation, ann.segmentation) for ann in g]
                for _, det in d
            ]
            d_areas = [geometry.segmentation_area(det.segmentation) for _, det in d]
            units.append((g, d, ious, d_areas))

        def ap_at(threshold: float, lo: float, hi: float) -> float | None:
            n_gt = sum(1 for g, _, _, _ in units for ann in g if lo <= ann.area < hi)
            if n_gt == 0:
                return None
            scored: list[tuple[float, int, bool, bool]] = []
            for g, d, ious, d_areas in units:
                ignored_gt = [not lo <= ann.area < hi for ann in g]
                order = sorted(range(len(g)), key=lambda k: ignored_gt[k])
                taken = [False] * len(g)
                for (idx, det), iou_row, d_area in zip(d, ious, d_areas):
                    best = -1
                    best_iou = threshold
                    for k in order:
                        if taken[k]:
                            continue
                        if best > -1 and not ignored_gt[best] and ignored_gt[k]:
                            break  # only ignored candidates remain
                        if iou_row[k] < best_iou:
                            continue
                        best = k
                        best_iou = iou_row[k]
                    if best > -1:
                        taken[best] = True
                        scored.append((det.score, idx, not ignored_gt[best], ignored_gt[best]))
                    else:
                        scored.append((det.score, idx, False, not lo <= d_area < hi))
            return _average_precision(scored, n_gt)

        def mean_over_thresholds(lo: float, hi: float) -> float | None:
            vals = [ap_at(t, lo, hi) for t in IOU_THRESHOLDS]
            if vals[0] is None:
                return None
            return sum(vals) / len(vals)

        lo_all, hi_all = AREA_RANGES["all"]
        rows.append(
            ApRow(
                name=cat.name,
                ap=mean_over_thresholds(lo_all, hi_all),
                ap50=ap_at(IOU_THRESHOLDS[0], lo_all, hi_all),
                ap75=ap_at(IOU_THRESHOLDS[5], lo_all, hi_all),
                ap_small=mean_over_thresholds(*AREA_RANGES["small"]),
                ap_medium=mean_over_thresholds(*AREA_RANGES["medium"]),
                ap_large=mean_over_thresholds(*AREA_RANGES["large"]),
            )
        )
    return ApReport(rows=tuple(rows))
