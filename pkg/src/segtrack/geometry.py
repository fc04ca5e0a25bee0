"""Pixel-exact mask and polygon kernels.

Binary masks are dense boolean numpy arrays of shape ``(height, width)``
indexed ``[row, col]``; coordinates elsewhere are continuous image
coordinates with the origin at the top-left corner, x rightward, y
downward, so pixel ``(row, col)`` has its center at ``(col + 0.5,
row + 0.5)``.  Run-length encodings flatten the mask in column-major
order and always start with the length of the leading zero run
(possibly 0).

Rasterization uses the even-odd rule tested at pixel centers with a
half-open boundary convention: a center lying exactly on a left/top
edge is inside, on a right/bottom edge outside, so adjacent polygons
never claim the same pixel twice.

All functions are pure; nothing here holds global state, so every
operation is safe to call from concurrent threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .errors import (
    CorruptRleError,
    CorruptStringError,
    EmptySegmentationError,
    InvalidPolygonError,
)


class Point(NamedTuple):
    x: float
    y: float


class BoundingBox(NamedTuple):
    """Axis-aligned box as top-left corner plus extent."""

    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class Polygon:
    """Closed vertex ring; the edge from the last vertex back to the first is implicit.

    Self-intersecting rings are accepted (see :func:`has_self_intersection`
    to detect them); rings with fewer than 3 vertices or non-finite
    coordinates are rejected at construction.
    """

    points: tuple[Point, ...]

    def __post_init__(self) -> None:
        pts = tuple(Point(float(x), float(y)) for x, y in self.points)
        if len(pts) < 3:
            raise InvalidPolygonError(f"polygon needs >=3 vertices, got {len(pts)}")
        if not all(math.isfinite(p.x) and math.isfinite(p.y) for p in pts):
            raise InvalidPolygonError("polygon has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_xy(cls, coords: Iterable[Sequence[float]]) -> "Polygon":
        return cls(tuple(Point(float(c[0]), float(c[1])) for c in coords))

    def as_array(self) -> np.ndarray:
        """Vertices as an ``(n, 2)`` float64 array."""
        return np.asarray(self.points, dtype=np.float64)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(tuple(Point(p.x + dx, p.y + dy) for p in self.points))


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length mask: runs alternate zero/one, starting with zero."""

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        counts = self.counts
        if type(counts) is not tuple or (counts and type(counts[0]) is not int):
            counts = tuple(int(c) for c in counts)
            object.__setattr__(self, "counts", counts)
        if self.height <= 0 or self.width <= 0:
            raise CorruptRleError(f"bad dimensions {self.height}x{self.width}")
        total = 0
        for c in counts:
            if c < 0:
                raise CorruptRleError("negative run length")
            total += c
        if total != self.height * self.width:
            raise CorruptRleError(
                f"counts sum {total} != {self.height}x{self.width}"
                f" = {self.height * self.width}"
            )


# A segmentation is a single ring, several rings (union of parts of one
# instance), or a run-length mask.
Segmentation = Union[Polygon, tuple, RleMask]


# ---------------------------------------------------------------------------
# polygon kernels


def polygon_area(p: Polygon) -> float:
    """Unsigned area of the ring (shoelace formula); orientation-independent."""
    pts = p.as_array()
    x, y = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    return abs(float(np.sum(x * y2 - x2 * y))) / 2.0


def polygon_perimeter(p: Polygon) -> float:
    pts = p.as_array()
    d = np.roll(pts, -1, axis=0) - pts
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def polygon_bbox(p: Polygon) -> BoundingBox:
    """Tight axis-aligned bounds of the vertices."""
    pts = p.as_array()
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return BoundingBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


def polygon_contains(p: Polygon, point: Sequence[float]) -> bool:
    """Even-odd containment test, consistent with :func:`rasterize` boundaries."""
    px, py = float(point[0]), float(point[1])
    pts = p.points
    n = len(pts)
    crossings = 0
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if (y1 <= py < y2) or (y2 <= py < y1):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if xc <= px:
                crossings += 1
    return crossings % 2 == 1


def has_self_intersection(p: Polygon) -> bool:
    """True when two non-adjacent edges of the ring cross or overlap."""
    pts = [np.asarray(v, dtype=float) for v in p.points]
    n = len(pts)
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    for i in range(n):
        a1, a2 = edges[i]
        if np.array_equal(a1, a2):
            continue
        for j in range(i + 1, n):
            # skip adjacent edges (shared endpoint) and the wrap pair
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            b1, b2 = edges[j]
            if np.array_equal(b1, b2):
                continue
            o1, o2 = orient(a1, a2, b1), orient(a1, a2, b2)
            o3, o4 = orient(b1, b2, a1), orient(b1, b2, a2)
            if o1 != o2 and o3 != o4:
                return True
            if o1 == 0 and on_segment(a1, a2, b1):
                return True
            if o2 == 0 and on_segment(a1, a2, b2):
                return True
            if o3 == 0 and on_segment(b1, b2, a1):
                return True
            if o4 == 0 and on_segment(b1, b2, a2):
                return True
    return False


# ---------------------------------------------------------------------------
# rasterization


def rasterize(p: Polygon, height: int, width: int) -> np.ndarray:
    """Fill a ring onto a ``(height, width)`` grid.

    A pixel is set iff its center falls inside the ring under the
    even-odd rule, with centers exactly on left/top edges counted in
    and right/bottom edges counted out.  Geometry outside the grid is
    clipped.
    """
    if height <= 0 or width <= 0:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    mask = np.zeros((height, width), dtype=bool)
    pts = p.as_array()
    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    keep = y1 != y2  # horizontal edges never cross a scanline
    if not keep.any():
        return mask
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]

    ymin = float(min(y1.min(), y2.min()))
    ymax = float(max(y1.max(), y2.max()))
    r0 = max(0, math.ceil(ymin - 0.5))
    r1 = min(height - 1, math.ceil(ymax - 0.5) - 1)
    if r0 > r1:
        return mask

    ys = (np.arange(r0, r1 + 1, dtype=np.float64) + 0.5)[:, None]
    lo = np.minimum(y1, y2)[None, :]
    hi = np.maximum(y1, y2)[None, :]
    sel = (lo <= ys) & (ys < hi)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        xs = np.where(sel, x1[None, :] + (ys - y1[None, :]) * (x2 - x1)[None, :] / (y2 - y1)[None, :], np.nan)
    xs.sort(axis=1)  # NaN sorts last, leaving crossing pairs up front
    if xs.shape[1] % 2 == 1:  # crossing parity is even; a lone odd slot is NaN
        xs = np.pad(xs, ((0, 0), (0, 1)), constant_values=np.nan)

    xa = xs[:, 0::2]
    xb = xs[:, 1::2]
    valid = ~np.isnan(xb)
    if not valid.any():
        return mask
    # clamp to just outside the grid so infinite crossings from
    # near-degenerate edges cast cleanly; pairing is unaffected
    xa_f = np.clip(np.where(valid, xa, 0.0), -1.0, width + 1.0)
    xb_f = np.clip(np.where(valid, xb, 0.0), -1.0, width + 1.0)
    c0 = np.ceil(xa_f - 0.5).astype(np.int64)
    c1 = np.ceil(xb_f - 0.5).astype(np.int64) - 1
    c0 = np.maximum(c0, 0)
    c1 = np.minimum(c1, width - 1)
    rows = np.broadcast_to(np.arange(r0, r1 + 1)[:, None], xa.shape)
    ok = valid & (c0 <= c1)
    if not ok.any():
        return mask
    # even-odd spans never overlap within a row, so a +1/-1 difference
    # array followed by a cumulative sum marks exactly the filled pixels
    diff = np.zeros((height, width + 1), dtype=np.int32)
    np.add.at(diff, (rows[ok], c0[ok]), 1)
    np.add.at(diff, (rows[ok], c1[ok] + 1), -1)
    return np.cumsum(diff, axis=1)[:, :width] > 0


# ---------------------------------------------------------------------------
# run-length codecs


def mask_to_rle(mask: np.ndarray) -> RleMask:
    """Exact column-major run-length coding of a binary mask."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"expected a non-empty 2-d mask, got shape {m.shape}")
    h, w = m.shape
    flat = m.reshape(-1, order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(h, w, tuple(counts))


def rle_to_mask(r: RleMask) -> np.ndarray:
    counts = np.asarray(r.counts, dtype=np.int64)
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((r.height, r.width), order="F")


def rle_area(r: RleMask) -> int:
    """Number of set pixels (sum of the one-runs); cached on the mask."""
    area = getattr(r, "_area", None)
    if area is None:
        area = int(sum(r.counts[1::2]))
        object.__setattr__(r, "_area", area)
    return area


def rle_encode_string(r: RleMask) -> str:
    """Compressed counts string.

    Each count at index ``i >= 2`` is stored as the delta against the
    count two positions back; earlier counts are stored raw.  Every
    signed value is emitted little-endian in 6-bit groups: bits 0-4
    carry payload, bit 5 (value 32) flags a following group, and an
    extra group is emitted whenever the top payload bit of the final
    group would leave the sign ambiguous.  Groups map to ASCII by
    adding 48.
    """
    counts = r.counts
    out: list[str] = []
    for i, c in enumerate(counts):
        x = c - counts[i - 2] if i >= 2 else c
        while True:
            group = x & 0x1F
            x >>= 5
            more = (x != -1) if (group & 0x10) else (x != 0)
            if more:
                group |= 0x20
            out.append(chr(group + 48))
            if not more:
                break
    return "".join(out)


def rle_decode_string(s: str, height: int, width: int) -> RleMask:
    """Inverse of :func:`rle_encode_string`; validates the counts against the size."""
    counts: list[int] = []
    i, n = 0, len(s)
    while i < n:
        x = 0
        k = 0
        while True:
            if i >= n:
                raise CorruptStringError(
                    f"truncated continuation after {k} group(s) at offset {i}"
                )
            c = ord(s[i]) - 48
            if not 0 <= c <= 63:
                raise CorruptStringError(f"character {s[i]!r} at offset {i} outside [48, 111]")
            x |= (c & 0x1F) << (5 * k)
            i += 1
            k += 1
            if not c & 0x20:
                if c & 0x10:
                    x -= 1 << (5 * k)
                break
        if len(counts) >= 2:
            x += counts[-2]
        if x < 0:
            raise CorruptStringError(f"decoded negative run length {x}")
        counts.append(x)
    return RleMask(height, width, tuple(counts))


def _one_runs(r: RleMask) -> tuple[list[int], list[int]]:
    """Half-open [start, end) intervals of the one-runs in flat column-major order.

    Cached on the (immutable) mask after the first call.
    """
    runs = getattr(r, "_runs", None)
    if runs is None:
        starts: list[int] = []
        ends: list[int] = []
        pos = 0
        for i, c in enumerate(r.counts):
            if i % 2:
                starts.append(pos)
                ends.append(pos + c)
            pos += c
        runs = (starts, ends)
        object.__setattr__(r, "_runs", runs)
    return runs


def rle_iou(a: RleMask, b: RleMask, crowd: bool = False) -> float:
    """Mask intersection over union.

    With ``crowd`` set, the denominator is the area of ``a`` alone
    (COCO crowd semantics).  Two empty masks have IoU 0.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"dimension mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    area_a = rle_area(a)
    area_b = rle_area(b)
    if area_a == 0 or area_b == 0:
        return 0.0
    sa, ea = _one_runs(a)
    sb, eb = _one_runs(b)
    na, nb = len(sa), len(sb)
    i = j = 0
    inter = 0
    while i < na and j < nb:  # two-pointer sweep over sorted disjoint intervals
        lo = sa[i] if sa[i] > sb[j] else sb[j]
        hi = ea[i] if ea[i] < eb[j] else eb[j]
        if hi > lo:
            inter += hi - lo
        if ea[i] < eb[j]:
            i += 1
        else:
            j += 1
    denom = area_a if crowd else area_a + area_b - inter
    return inter / denom


def bbox_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Rectangle IoU; 0 whenever either box is degenerate."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    return inter / (aw * ah + bw * bh - inter)


# ---------------------------------------------------------------------------
# contour extraction

# Unit directions on the pixel-corner grid: right, down, left, up.
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
_LEFT_OF = {0: 3, 3: 2, 2: 1, 1: 0}
_RIGHT_OF = {v: k for k, v in _LEFT_OF.items()}


def _components4(m: np.ndarray) -> list[list[tuple[int, int]]]:
    """4-connected foreground components in row-major discovery order."""
    h, w = m.shape
    seen = np.zeros((h, w), dtype=bool)
    comps: list[list[tuple[int, int]]] = []
    for r0 in range(h):
        for c0 in range(w):
            if not m[r0, c0] or seen[r0, c0]:
                continue
            stack = [(r0, c0)]
            seen[r0, c0] = True
            comp = []
            while stack:
                r, c = stack.pop()
                comp.append((r, c))
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and m[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        stack.append((rr, cc))
            comps.append(comp)
    return comps


def _boundary_loops(comp: list[tuple[int, int]], m: np.ndarray) -> list[list[tuple[int, int]]]:
    """Closed corner-coordinate loops around a single component.

    Boundary sides are walked with the interior kept on a consistent
    side; at vertices where the boundary pinches (background touching
    itself diagonally) the walk prefers the right turn, hugging the
    interior corner, so the face boundary stays one loop instead of
    splitting at the pinch.
    """
    h, w = m.shape
    cells = set(comp)
    # vertex -> {direction: end vertex}
    outgoing: dict[tuple[int, int], dict[int, tuple[int, int]]] = {}

    def add(start: tuple[int, int], d: int) -> None:
        dx, dy = _DIRS[d]
        outgoing.setdefault(start, {})[d] = (start[0] + dx, start[1] + dy)

    for r, c in comp:
        if (r - 1, c) not in cells:
            add((c, r), 0)          # top side, rightward
        if (r, c + 1) not in cells:
            add((c + 1, r), 1)      # right side, downward
        if (r + 1, c) not in cells:
            add((c + 1, r + 1), 2)  # bottom side, leftward
        if (r, c - 1) not in cells:
            add((c, r + 1), 3)      # left side, upward

    loops: list[list[tuple[int, int]]] = []
    while outgoing:
        start = min(outgoing)
        d = min(outgoing[start])
        ring = [start]
        cur = start
        while True:
            nxt = outgoing[cur].pop(d)
            if not outgoing[cur]:
                del outgoing[cur]
            if nxt == start and nxt not in outgoing:
                break
            ring.append(nxt)
            options = outgoing[nxt]
            for cand in (_RIGHT_OF[d], d, _LEFT_OF[d]):
                if cand in options:
                    d = cand
                    break
            cur = nxt
        loops.append(ring)
    return loops


def _merge_collinear(ring: list[tuple[int, int]]) -> list[tuple[int, int]]:
    n = len(ring)
    out = []
    for i in range(n):
        px, py = ring[(i - 1) % n]
        cx, cy = ring[i]
        nx, ny = ring[(i + 1) % n]
        if (cx - px) * (ny - cy) - (cy - py) * (nx - cx) != 0:
            out.append(ring[i])
    return out if len(out) >= 3 else ring


def _ring_area2(ring: list[tuple[int, int]]) -> int:
    n = len(ring)
    s = 0
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return abs(s)


def mask_to_polygons(mask: np.ndarray) -> list[Polygon]:
    """Outer ring of every 4-connected foreground component.

    Rings run along pixel boundaries (integer corner coordinates);
    interior holes are dropped.  Rasterizing a returned ring reproduces
    the outer fill of its component exactly.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d mask, got shape {m.shape}")
    polys: list[Polygon] = []
    for comp in _components4(m):
        loops = _boundary_loops(comp, m)
        outer = max(loops, key=_ring_area2)
        ring = _merge_collinear(outer)
        polys.append(Polygon.from_xy(ring))
    return polys


# ---------------------------------------------------------------------------
# simplification


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to segment a-b (endpoint distance off the ends)."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(points[:, 0] - a[0], points[:, 1] - a[1])
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = points - proj
    return np.hypot(d[:, 0], d[:, 1])


def _rdp_keep(pts: np.ndarray, idx: list[int], epsilon: float) -> set[int]:
    """Indices (into the original ring) kept by Douglas-Peucker over one chain."""
    keep = {idx[0], idx[-1]}
    stack = [(0, len(idx) - 1)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        interior = pts[idx[a + 1:b]]
        d = _segment_distances(interior, pts[idx[a]], pts[idx[b]])
        k = int(np.argmax(d))
        if d[k] > epsilon:
            split = a + 1 + k
            keep.add(idx[split])
            stack.append((a, split))
            stack.append((split, b))
    return keep


def simplify_polygon(p: Polygon, epsilon: float) -> Polygon:
    """Douglas-Peucker on the closed ring.

    The ring is split at its two mutually farthest vertices and each
    half simplified independently; removed vertices deviate from the
    surviving chain by at most ``epsilon``.  At least 3 vertices are
    always kept, topping up with the most deviant removed vertex when
    simplification collapses the ring.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    pts = p.as_array()
    n = len(pts)
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    flat = int(np.argmax(d2))
    if d2.flat[flat] == 0.0:  # all vertices coincide
        return Polygon(p.points[:3])
    i, j = divmod(flat, n)
    if i > j:
        i, j = j, i

    chain1 = list(range(i, j + 1))
    chain2 = list(range(j, n)) + list(range(0, i + 1))
    kept = _rdp_keep(pts, chain1, epsilon) | _rdp_keep(pts, chain2, epsilon)
    if len(kept) < 3:
        removed = [k for k in range(n) if k not in kept]
        d = _segment_distances(pts[removed], pts[i], pts[j])
        kept.add(removed[int(np.argmax(d))])
    order = sorted(kept)
    return Polygon(tuple(p.points[k] for k in order))


# ---------------------------------------------------------------------------
# centroids and segmentation helpers


def _rle_centroid(r: RleMask) -> Point:
    cached = getattr(r, "_centroid", None)
    if cached is not None:
        return cached
    area = rle_area(r)
    if area == 0:
        raise EmptySegmentationError("cannot take the centroid of an empty mask")
    starts, ends = _one_runs(r)
    h = r.height
    half_rows = h * (h - 1) // 2

    # closed forms for sum_{k<n} k // h and k % h over flat indices,
    # so runs never need to be expanded pixel by pixel
    def div_sum(n: int) -> int:
        q, rem = divmod(n, h)
        return h * (q * (q - 1) // 2) + q * rem

    def mod_sum(n: int) -> int:
        q, rem = divmod(n, h)
        return q * half_rows + rem * (rem - 1) // 2

    col_sum = 0
    row_sum = 0
    for s, e in zip(starts, ends):
        col_sum += div_sum(e) - div_sum(s)
        row_sum += mod_sum(e) - mod_sum(s)
    point = Point(col_sum / area + 0.5, row_sum / area + 0.5)
    object.__setattr__(r, "_centroid", point)
    return point


def _polygon_centroid(p: Polygon) -> Point:
    pts = p.as_array()
    x, y = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    cross = x * y2 - x2 * y
    a = float(np.sum(cross)) / 2.0
    if abs(a) < 1e-12:  # degenerate ring: fall back to the vertex mean
        return Point(float(np.mean(x)), float(np.mean(y)))
    cx = float(np.sum((x + x2) * cross)) / (6.0 * a)
    cy = float(np.sum((y + y2) * cross)) / (6.0 * a)
    return Point(cx, cy)


def centroid(seg: Segmentation) -> Point:
    """Centroid of a segmentation.

    Masks use the mean of set-pixel centers; rings use the
    area-weighted ring centroid (multi-ring segmentations weight each
    ring by its area).
    """
    if isinstance(seg, RleMask):
        return _rle_centroid(seg)
    if isinstance(seg, Polygon):
        return _polygon_centroid(seg)
    rings = tuple(seg)
    if not rings:
        raise EmptySegmentationError("empty segmentation")
    weights = [polygon_area(r) for r in rings]
    total = sum(weights)
    if total == 0.0:
        pts = np.concatenate([r.as_array() for r in rings])
        return Point(float(pts[:, 0].mean()), float(pts[:, 1].mean()))
    cs = [_polygon_centroid(r) for r in rings]
    return Point(
        sum(w * c.x for w, c in zip(weights, cs)) / total,
        sum(w * c.y for w, c in zip(weights, cs)) / total,
    )


def segmentation_area(seg: Segmentation) -> float:
    if isinstance(seg, RleMask):
        return float(rle_area(seg))
    if isinstance(seg, Polygon):
        return polygon_area(seg)
    return float(sum(polygon_area(r) for r in seg))


def segmentation_bbox(seg: Segmentation) -> BoundingBox:
    if isinstance(seg, Polygon):
        return polygon_bbox(seg)
    if isinstance(seg, RleMask):
        starts, ends = _one_runs(seg)
        if len(starts) == 0:
            return BoundingBox(0.0, 0.0, 0.0, 0.0)
        h = seg.height
        c_min, c_max = None, None
        r_min, r_max = None, None
        for s, e in zip(starts, ends):
            c0, c1 = s // h, (e - 1) // h
            r0 = s % h if c0 == c1 else 0
            r1 = (e - 1) % h if c0 == c1 else h - 1
            c_min = c0 if c_min is None else min(c_min, c0)
            c_max = c1 if c_max is None else max(c_max, c1)
            r_min = r0 if r_min is None else min(r_min, r0)
            r_max = r1 if r_max is None else max(r_max, r1)
        return BoundingBox(float(c_min), float(r_min), float(c_max - c_min + 1), float(r_max - r_min + 1))
    boxes = [polygon_bbox(r) for r in seg]
    x0 = min(b.x for b in boxes)
    y0 = min(b.y for b in boxes)
    x1 = max(b.x + b.w for b in boxes)
    y1 = max(b.y + b.h for b in boxes)
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def _seg_to_window(seg: Segmentation, x0: int, y0: int, h: int, w: int) -> np.ndarray:
    """Dense rendering of a segmentation inside an integer-offset window."""
    if isinstance(seg, RleMask):
        dense = rle_to_mask(seg)
        win = np.zeros((h, w), dtype=bool)
        r0, c0 = max(0, y0), max(0, x0)
        r1, c1 = min(seg.height, y0 + h), min(seg.width, x0 + w)
        if r1 > r0 and c1 > c0:
            win[r0 - y0:r1 - y0, c0 - x0:c1 - x0] = dense[r0:r1, c0:c1]
        return win
    rings = (seg,) if isinstance(seg, Polygon) else tuple(seg)
    win = np.zeros((h, w), dtype=bool)
    for ring in rings:
        win |= rasterize(ring.translated(-x0, -y0), h, w)
    return win


def segmentation_iou(a: Segmentation, b: Segmentation) -> float:
    """Pixel-exact IoU between any two segmentation forms.

    Polygon inputs are rasterized onto a shared integer-offset window
    covering both shapes, which preserves the pixel-center rule exactly.
    """
    if isinstance(a, RleMask) and isinstance(b, RleMask):
        return rle_iou(a, b)
    if isinstance(a, RleMask) or isinstance(b, RleMask):
        rle = a if isinstance(a, RleMask) else b
        x0, y0, h, w = 0, 0, rle.height, rle.width
    else:
        ba = segmentation_bbox(a)
        bb = segmentation_bbox(b)
        x0 = math.floor(min(ba.x, bb.x)) - 1
        y0 = math.floor(min(ba.y, bb.y)) - 1
        x1 = math.ceil(max(ba.x + ba.w, bb.x + bb.w)) + 1
        y1 = math.ceil(max(ba.y + ba.h, bb.y + bb.h)) + 1
        h, w = max(1, y1 - y0), max(1, x1 - x0)
    ma = _seg_to_window(a, x0, y0, h, w)
    mb = _seg_to_window(b, x0, y0, h, w)
    inter = int(np.count_nonzero(ma & mb))
    union = int(np.count_nonzero(ma | mb))
    return inter / union if union else 0.0
