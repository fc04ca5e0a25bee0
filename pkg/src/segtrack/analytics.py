"""Behavior statistics over tracks, plus report and plot emission.

All computations are per-track and pure; report emitters produce
deterministic bytes so identical inputs always yield identical files.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from . import geometry
from .errors import MissingDataError
from .geometry import Polygon, polygon_contains
from .metrics import ApReport, MotReport
from .tracking import Track

# label-stable colors for plots, one of twelve regardless of run
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
)

OUTSIDE_ZONE = "outside"


@dataclass(frozen=True)
class ZoneDefinition:
    name: str
    region: Polygon


class ZoneStats(NamedTuple):
    frames: int
    fraction: float


@dataclass(frozen=True)
class InteractionEvent:
    labels: tuple[str, str]
    start_frame: int
    end_frame: int
    criterion: str


@dataclass(frozen=True)
class TrajectoryStats:
    label: str
    distance_traveled: float
    frames_present: int
    mean_speed: float


# ---------------------------------------------------------------------------
# per-track measures


def distance_traveled(track: Track, px_per_unit: float = 1.0) -> float:
    """Total path length through present-state centroids.

    Absence gaps contribute the straight-line step across the gap, a
    conservative lower bound on the real path.
    """
    if px_per_unit <= 0:
        raise ValueError(f"px_per_unit must be > 0, got {px_per_unit}")
    pts = [s.centroid for s in track.present_states() if s.centroid is not None]
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        total += math.dist(a, b)
    return total / px_per_unit


def track_stats(track: Track, px_per_unit: float = 1.0) -> TrajectoryStats:
    """Distance, presence count, and mean speed over the active frame span."""
    present = track.present_frames()
    dist = distance_traveled(track, px_per_unit)
    span = present[-1] - present[0] if len(present) > 1 else 0
    return TrajectoryStats(
        label=track.label,
        distance_traveled=dist,
        frames_present=len(present),
        mean_speed=dist / span if span else 0.0,
    )


def zone_occupancy(track: Track, zones: Sequence[ZoneDefinition]) -> dict[str, ZoneStats]:
    """Frames and fraction of presence spent in each zone.

    A state counts toward the first listed zone containing its centroid
    (even-odd test); centroids in no zone land in the ``outside``
    bucket.  Fractions are over present frames and sum to 1.
    """
    counts = {z.name: 0 for z in zones}
    counts[OUTSIDE_ZONE] = counts.get(OUTSIDE_ZONE, 0)
    present = [s for s in track.present_states() if s.centroid is not None]
    for state in present:
        for zone in zones:
            if polygon_contains(zone.region, state.centroid):
                counts[zone.name] += 1
                break
        else:
            counts[OUTSIDE_ZONE] += 1
    n = len(present)
    return {name: ZoneStats(c, c / n if n else 0.0) for name, c in counts.items()}


def interaction_events(
    a: Track,
    b: Track,
    criterion: str = "centroid_distance",
    threshold: float = 0.1,
    min_duration: int = 1,
) -> list[InteractionEvent]:
    """Maximal runs of frames where two animals satisfy a closeness criterion.

    ``mask_iou`` requires stored segmentations on both tracks and fails
    naming the frames that lack them; ``centroid_distance`` compares
    centroid separation against the threshold in pixels.
    """
    if criterion not in ("mask_iou", "centroid_distance"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if criterion == "mask_iou" and not 0.0 < threshold <= 1.0:
        raise ValueError(f"mask_iou threshold must be in (0, 1], got {threshold}")
    if criterion == "centroid_distance" and threshold <= 0:
        raise ValueError(f"distance threshold must be > 0, got {threshold}")
    if min_duration < 1:
        raise ValueError(f"min_duration must be >= 1, got {min_duration}")
    if a.label == b.label:
        raise ValueError("tracks must carry distinct labels")

    common = sorted(set(a.present_frames()) & set(b.present_frames()))
    if criterion == "mask_iou":
        missing = [
            f for f in common
            if a.state_at(f).segmentation is None or b.state_at(f).segmentation is None
        ]
        if missing:
            raise MissingDataError(f"frames missing segmentation for mask IoU: {missing}")

    def holds(frame: int) -> bool:
        sa, sb = a.state_at(frame), b.state_at(frame)
        if criterion == "mask_iou":
            return geometry.segmentation_iou(sa.segmentation, sb.segmentation) >= threshold
        if sa.centroid is None or sb.centroid is None:
            return False
        return math.dist(sa.centroid, sb.centroid) <= threshold

    labels = tuple(sorted((a.label, b.label)))
    events = []
    run_start = None
    prev_frame = None
    for frame in common:
        ok = holds(frame)
        contiguous = prev_frame is not None and frame == prev_frame + 1
        if ok and run_start is not None and contiguous:
            prev_frame = frame
            continue
        if run_start is not None and prev_frame is not None:
            if prev_frame - run_start + 1 >= min_duration:
                events.append(InteractionEvent(labels, run_start, prev_frame, criterion))
            run_start = None
        if ok:
            run_start = frame
        prev_frame = frame
    if run_start is not None and prev_frame - run_start + 1 >= min_duration:
        events.append(InteractionEvent(labels, run_start, prev_frame, criterion))
    return events


# ---------------------------------------------------------------------------
# report emission


def _fmt(value, decimals=3) -> str:
    if value is None:
        return "-"
    return f"{value:.{decimals}f}"


def emit_report(rows, format: str = "csv", name: str = "-") -> bytes:
    """Serialize an evaluation report or stats table to CSV or JSON bytes.

    Numbers print with fixed precision (3 decimals for AP columns) and
    empty area ranges render as ``-``; output is byte-deterministic.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"unknown format {format!r}")

    if isinstance(rows, ApReport):
        if format == "csv":
            out = ["category,AP,AP50,AP75,APS,APM,APL"]
            for row in rows.rows:
                out.append(",".join([row.name] + [_fmt(v) for v in row.values()]))
            return ("\n".join(out) + "\n").encode("utf-8")
        payload = [
            {
                "category": r.name,
                "AP": r.ap, "AP50": r.ap50, "AP75": r.ap75,
                "APS": r.ap_small, "APM": r.ap_medium, "APL": r.ap_large,
            }
            for r in rows.rows
        ]
        return (json.dumps(payload, indent=2) + "\n").encode("utf-8")

    if isinstance(rows, MotReport):
        if format == "csv":
            header = "video,n_frames,n_gt,fn,fp,ids,mota,motp"
            line = ",".join(
                [
                    name,
                    str(rows.n_frames),
                    str(rows.n_gt),
                    str(rows.false_negatives),
                    str(rows.false_positives),
                    str(rows.id_switches),
                    f"{rows.mota:.6f}",
                    f"{rows.motp:.6f}",
                ]
            )
            return (header + "\n" + line + "\n").encode("utf-8")
        payload = {
            "video": name,
            "n_frames": rows.n_frames,
            "n_gt": rows.n_gt,
            "fn": rows.false_negatives,
            "fp": rows.false_positives,
            "ids": rows.id_switches,
            "mota": rows.mota,
            "motp": rows.motp,
        }
        return (json.dumps(payload, indent=2) + "\n").encode("utf-8")

    stats = list(rows)
    if not all(isinstance(s, TrajectoryStats) for s in stats):
        raise TypeError("rows must be an ApReport, a MotReport, or TrajectoryStats")
    if format == "csv":
        out = ["label,distance_traveled,frames_present,mean_speed"]
        for s in stats:
            out.append(f"{s.label},{s.distance_traveled:.3f},{s.frames_present},{s.mean_speed:.3f}")
        return ("\n".join(out) + "\n").encode("utf-8")
    payload = [
        {
            "label": s.label,
            "distance_traveled": s.distance_traveled,
            "frames_present": s.frames_present,
            "mean_speed": s.mean_speed,
        }
        for s in stats
    ]
    return (json.dumps(payload, indent=2) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# trajectory plotting


def label_color(label: str) -> str:
    return PALETTE[zlib.crc32(label.encode("utf-8")) % len(PALETTE)]


def plot_trajectories(tracks: Sequence[Track], width: int, height: int) -> bytes:
    """SVG 1.1 rendering of track centroids: one polyline (or dot) per track.

    Colors are a stable hash of the label, so the same animal keeps its
    color across runs and videos.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"plot dimensions must be positive, got {width}x{height}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    ordered = sorted(tracks, key=lambda t: t.label)
    for track in ordered:
        pts = [s.centroid for s in track.present_states() if s.centroid is not None]
        color = label_color(track.label)
        if len(pts) >= 2:
            coords = " ".join(f"{p.x:.2f},{p.y:.2f}" for p in pts)
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'
            )
        elif len(pts) == 1:
            parts.append(
                f'<circle cx="{pts[0].x:.2f}" cy="{pts[0].y:.2f}" r="2.5" fill="{color}"/>'
            )
    parts.append('<text x="6" y="14" font-size="12" fill="black">tracks</text>')
    for i, track in enumerate(ordered):
        parts.append(
            f'<text x="6" y="{28 + 14 * i}" font-size="11" '
            f'fill="{label_color(track.label)}">{track.label}</text>'
        )
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")
