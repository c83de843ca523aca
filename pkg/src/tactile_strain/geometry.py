"""Contours, quadrilaterals and control-point grids.

Points are ``(x, y)`` pairs with ``x`` the column and ``y`` the row, so a
positive shoelace area means clockwise on screen (y axis pointing down).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateError, GridDegenerateError, InvalidInputError
from .imaging import connected_components, image_moments, orientation_from_moments

# (dy, dx), clockwise on screen starting east
_DIRS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_DIR_INDEX = {d: k for k, d in enumerate(_DIRS)}
_WEST = 4


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------


def _trace_outer(fg, y0, x0):
    """Outer border following (Suzuki & Abe) from the topmost-leftmost pixel."""
    def on(y, x):
        return fg[y + 1, x + 1]  # fg is padded by one pixel

    first = None
    for k in range(8):
        d = (_WEST + k) % 8
        dy, dx = _DIRS[d]
        if on(y0 + dy, x0 + dx):
            first = (y0 + dy, x0 + dx)
            break
    if first is None:
        return [(x0, y0)]
    out = []
    p2, p3 = first, (y0, x0)
    while True:
        d = _DIR_INDEX[(p2[0] - p3[0], p2[1] - p3[1])]
        p4 = None
        for k in range(1, 9):
            dd = (d - k) % 8
            dy, dx = _DIRS[dd]
            if on(p3[0] + dy, p3[1] + dx):
                p4 = (p3[0] + dy, p3[1] + dx)
                break
        out.append((p3[1], p3[0]))
        if p4 == (y0, x0) and p3 == first:
            break
        p2, p3 = p3, p4
    return out


def find_contours(img) -> list[np.ndarray]:
    """Outer border of every 8-connected foreground component.

    Each contour is an ``(N, 2)`` int array of ``(x, y)`` pixel positions,
    starting at the component's topmost-leftmost pixel. Contours are ordered
    by that start pixel in row-major order.
    """
    mask = np.asarray(img).astype(bool)
    labels, n = connected_components(mask)
    if n == 0:
        return []
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    starts = sorted(int(f) for i, f in zip(ids, first) if i > 0)
    padded = np.pad(mask, 1)
    w = mask.shape[1]
    return [np.array(_trace_outer(padded, s // w, s % w), dtype=np.int64) for s in starts]


def shoelace(points) -> float:
    """Signed polygon area."""
    P = np.asarray(points, dtype=np.float64)
    if len(P) < 3:
        return 0.0
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def perimeter(points, closed: bool = True) -> float:
    P = np.asarray(points, dtype=np.float64)
    if len(P) < 2:
        return 0.0
    seg = np.diff(np.vstack([P, P[:1]]) if closed else P, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def _point_segment_dist(P, a, b):
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0:
        return np.hypot(*(P - a).T)
    t = np.clip(((P - a) @ ab) / L2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(P - proj).T)


def _rdp_open(P, epsilon):
    """Indices kept by Ramer-Douglas-Peucker on an open polyline."""
    keep = np.zeros(len(P), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(P) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        d = _point_segment_dist(P[i + 1:j], P[i], P[j])
        k = int(np.argmax(d))
        if d[k] > epsilon:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return np.flatnonzero(keep)


def approx_polygon(contour, epsilon: float) -> np.ndarray:
    """Douglas-Peucker simplification of a closed contour.

    The curve is split at two mutually distant points which are always kept,
    and each half is simplified separately. Every contour point lies within
    ``epsilon`` of the returned polygon.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    P = np.asarray(contour, dtype=np.float64)
    if len(P) <= 2:
        return P.copy()
    b = int(np.argmax(np.hypot(*(P - P[0]).T)))
    a = int(np.argmax(np.hypot(*(P - P[b]).T)))
    P = np.roll(P, -a, axis=0)
    b = (b - a) % len(P)
    if b == 0:
        return P[:1].copy()
    first = _rdp_open(P[: b + 1], epsilon)
    second = _rdp_open(np.vstack([P[b:], P[:1]]), epsilon) + b
    idx = np.concatenate([first, second[1:-1]])
    return P[idx]


# ---------------------------------------------------------------------------
# Quadrilaterals
# ---------------------------------------------------------------------------


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices with positive winding."""
    P = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(P) <= 2:
        return np.array(P, dtype=np.float64).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(P):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


@dataclass(frozen=True)
class Quadrilateral:
    corners: np.ndarray  # (4, 2), positive shoelace winding
    area: float
    solidity: float
    extent: float

    @property
    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def side_lengths(self) -> np.ndarray:
        d = np.roll(self.corners, -1, axis=0) - self.corners
        return np.hypot(d[:, 0], d[:, 1])


def make_quadrilateral(poly) -> Quadrilateral:
    P = np.asarray(poly, dtype=np.float64)
    if P.shape != (4, 2):
        raise InvalidInputError("a quadrilateral needs exactly four vertices")
    area = shoelace(P)
    if area < 0:
        P = P[::-1]
        area = -area
    # start at the vertex nearest the top-left for a stable corner order
    start = int(np.argmin(P[:, 0] + P[:, 1]))
    P = np.roll(P, -start, axis=0)
    hull_area = shoelace(convex_hull(P))
    solidity = area / hull_area if hull_area > 0 else 0.0
    span = P.max(axis=0) - P.min(axis=0)
    box = float(span[0] * span[1])
    extent = area / box if box > 0 else 0.0
    return Quadrilateral(P, area, solidity, extent)


def filter_quadrilaterals(polys, min_area: float = 30.0, max_area: float = 2000.0,
                          min_solidity: float = 0.85) -> list[Quadrilateral]:
    """Keep 4-vertex polygons with area in range and enough solidity."""
    if not min_area < max_area:
        raise InvalidInputError("min_area must be below max_area")
    if not 0 < min_solidity <= 1:
        raise InvalidInputError("min_solidity must lie in (0, 1]")
    out = []
    for poly in polys:
        if len(poly) != 4:
            continue
        q = make_quadrilateral(poly)
        if q.area <= 0 or not (min_area <= q.area <= max_area):
            continue
        if q.solidity < min_solidity:
            continue
        out.append(q)
    return out


# ---------------------------------------------------------------------------
# Shape classification
# ---------------------------------------------------------------------------


class ShapeClass(NamedTuple):
    label: str
    orientation: float
    aspect: float
    extent: float
    area: float


def fill_contour(contour, shape=None) -> np.ndarray:
    """Rasterize the region enclosed by a closed contour (boundary included).

    Returns a mask of ``shape`` (or just large enough to hold the contour).
    """
    C = np.asarray(contour, dtype=np.int64)
    if shape is None:
        shape = (int(C[:, 1].max()) + 1, int(C[:, 0].max()) + 1)
    mask = np.zeros(shape, dtype=bool)
    P = C.astype(np.float64)
    Q = np.roll(P, -1, axis=0)
    for y in range(int(C[:, 1].min()), int(C[:, 1].max()) + 1):
        y0, y1 = P[:, 1], Q[:, 1]
        cross = ((y0 <= y) & (y1 > y)) | ((y1 <= y) & (y0 > y))
        if not cross.any():
            continue
        t = (y - y0[cross]) / (y1[cross] - y0[cross])
        xs = np.sort(P[cross, 0] + t * (Q[cross, 0] - P[cross, 0]))
        for xa, xb in zip(xs[0::2], xs[1::2]):
            lo, hi = int(math.ceil(xa)), int(math.floor(xb))
            if hi >= lo:
                mask[y, max(lo, 0):min(hi, shape[1] - 1) + 1] = True
    mask[C[:, 1], C[:, 0]] = True
    return mask


def classify_shape(contour, square_aspect=(0.8, 1.25), min_extent: float = 0.85) -> ShapeClass:
    """Label a contour as square, rectangle or other.

    ``aspect`` is bounding-box width over height and ``extent`` the filled
    pixel count over the bounding-box pixel count. The orientation comes from
    the moments of the filled region.
    """
    C = np.asarray(contour, dtype=np.int64)
    if len(C) < 3 or shoelace(C) == 0:
        raise DegenerateError("contour encloses no area")
    x0, y0 = C.min(axis=0)
    local = C - [x0, y0]
    filled = fill_contour(local)
    h, w = filled.shape
    area = float(filled.sum())
    aspect = w / h
    extent = area / (w * h)
    if extent >= min_extent and square_aspect[0] <= aspect <= square_aspect[1]:
        label = "square"
    elif extent >= min_extent:
        label = "rectangle"
    else:
        label = "other"
    angle = orientation_from_moments(image_moments(filled)).angle
    return ShapeClass(label, angle, aspect, extent, area)


# ---------------------------------------------------------------------------
# Corners, midpoints and control points
# ---------------------------------------------------------------------------


class Segment(NamedTuple):
    start: tuple[float, float]
    end: tuple[float, float]
    quads: tuple[int, int]


def connect_corners(quads, max_dist: float) -> list[Segment]:
    """Join each pair of quadrilaterals at their closest corner pair.

    A segment is emitted for a pair ``(a, b)``, ``a < b``, when that closest
    distance is at most ``max_dist``. Ties between equally close corner pairs
    go to the pair with the lexicographically smallest points, so the result
    does not depend on the input order.
    """
    if max_dist <= 0:
        raise InvalidInputError("max_dist must be positive")
    corners = [np.asarray(q.corners if isinstance(q, Quadrilateral) else q, dtype=np.float64)
               for q in quads]
    out = []
    for a in range(len(corners)):
        for b in range(a + 1, len(corners)):
            diff = corners[a][:, None, :] - corners[b][None, :, :]
            d = np.hypot(diff[..., 0], diff[..., 1])
            dmin = d.min()
            if dmin > max_dist:
                continue
            ties = np.argwhere(d == dmin)
            # order-independent tie-break: the pair with the smallest point coordinates
            i, j = min(ties.tolist(),
                       key=lambda t: sorted([tuple(corners[a][t[0]]), tuple(corners[b][t[1]])]))
            out.append(Segment(tuple(corners[a][i]), tuple(corners[b][j]), (a, b)))
    return out


def midpoints(segments) -> np.ndarray:
    """Arithmetic midpoint of every segment, in input order."""
    if len(segments) == 0:
        return np.zeros((0, 2))
    starts = np.array([s[0] for s in segments], dtype=np.float64)
    ends = np.array([s[1] for s in segments], dtype=np.float64)
    return (starts + ends) / 2.0


def _corner_pairs(quads, max_dist: float):
    """Index pairs ``(i, j)``, ``i < j``, of corners from different quads within ``max_dist``."""
    if max_dist <= 0:
        raise InvalidInputError("max_dist must be positive")
    if len(quads) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros((0, 2), dtype=int)
    corners = np.vstack([q.corners for q in quads]).astype(np.float64)
    owner = np.repeat(np.arange(len(quads)), 4)
    pairs = cKDTree(corners).query_pairs(max_dist, output_type="ndarray")
    pairs = pairs[owner[pairs[:, 0]] != owner[pairs[:, 1]]] if len(pairs) else pairs.reshape(0, 2)
    return corners, owner, pairs


def corner_segments(quads, max_dist: float) -> list[Segment]:
    """Every pair of corners from different quadrilaterals within ``max_dist``."""
    corners, owner, pairs = _corner_pairs(quads, max_dist)
    pairs = sorted(map(tuple, pairs.tolist()))
    return [Segment(tuple(corners[i]), tuple(corners[j]), (int(owner[i]), int(owner[j])))
            for i, j in pairs]


class Junction(NamedTuple):
    point: np.ndarray  # mean of the link midpoints
    quads: tuple  # indices of the quads meeting here, ascending


def junction_clusters(quads, max_dist: float, min_corners: int = 4) -> list[Junction]:
    """Groups of quadrilateral corners that meet at one point.

    Corners from different quads closer than ``max_dist`` are linked,
    shortest links first, but two clusters are never joined if a quad
    already has a corner in both: a junction holds at most one corner per
    quad, so neighbouring junctions cannot chain together. Clusters touching
    fewer than ``min_corners`` quads are dropped. Sorted by ``(y, x)``.
    """
    corners, owner, pairs = _corner_pairs(quads, max_dist)
    if len(pairs) == 0:
        return []
    d = np.linalg.norm(corners[pairs[:, 0]] - corners[pairs[:, 1]], axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0], d))
    parent = np.arange(len(corners))
    quads_of = {k: {int(owner[k])} for k in range(len(corners))}

    def root(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for i, j in pairs[order]:
        a, b = root(i), root(j)
        if a == b or quads_of[a] & quads_of[b]:
            continue
        if b < a:
            a, b = b, a
        parent[b] = a
        quads_of[a] |= quads_of.pop(b)
    roots = np.array([root(k) for k in range(len(corners))])
    linked = roots[pairs[:, 0]] == roots[pairs[:, 1]]
    mids = 0.5 * (corners[pairs[linked, 0]] + corners[pairs[linked, 1]])
    link_root = roots[pairs[linked, 0]]
    out = [Junction(mids[link_root == r].mean(axis=0), tuple(sorted(quads_of[r])))
           for r in np.unique(link_root) if len(quads_of[r]) >= min_corners]
    out.sort(key=lambda j: (j.point[1], j.point[0]))
    return out


def junction_points(quads, max_dist: float, min_corners: int = 4) -> np.ndarray:
    """Control points where corners of neighbouring quadrilaterals meet.

    Each cluster from :func:`junction_clusters` yields the mean of the
    midpoints of its corner links.
    """
    clusters = junction_clusters(quads, max_dist, min_corners)
    if not clusters:
        return np.zeros((0, 2))
    return np.array([j.point for j in clusters])


def region_centroid(contour) -> np.ndarray:
    """Area centroid of the polygon traced by a closed contour.

    Degenerate (zero-area) contours fall back to the mean vertex.
    """
    P = np.asarray(contour, dtype=np.float64)
    Q = np.roll(P, -1, axis=0)
    cross = P[:, 0] * Q[:, 1] - Q[:, 0] * P[:, 1]
    a = cross.sum() / 2.0
    if abs(a) < 1e-12:
        return P.mean(axis=0)
    return np.array([((P[:, 0] + Q[:, 0]) * cross).sum(), ((P[:, 1] + Q[:, 1]) * cross).sum()]) / (6.0 * a)


def centroids_from_mask(mask) -> np.ndarray:
    """Centroid of each 8-connected component, in label order."""
    labels, n = connected_components(mask)
    if n == 0:
        return np.zeros((0, 2))
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    count = np.bincount(lab, minlength=n + 1)[1:]
    cx = np.bincount(lab, weights=xs, minlength=n + 1)[1:] / count
    cy = np.bincount(lab, weights=ys, minlength=n + 1)[1:] / count
    return np.column_stack([cx, cy])


# ---------------------------------------------------------------------------
# Control grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlGrid:
    points: np.ndarray  # (rows, cols, 2); NaN where invalid
    valid: np.ndarray  # (rows, cols) bool

    @property
    def rows(self) -> int:
        return self.points.shape[0]

    @property
    def cols(self) -> int:
        return self.points.shape[1]

    def valid_points(self) -> np.ndarray:
        return self.points[self.valid]

    def filled(self) -> np.ndarray:
        """Complete ``(rows, cols, 2)`` net with invalid cells interpolated."""
        return fill_invalid(self.points, self.valid)

    def to_dict(self) -> dict:
        cells = []
        for r in range(self.rows):
            for c in range(self.cols):
                ok = bool(self.valid[r, c])
                x, y = self.points[r, c]
                cells.append({"row": r, "col": c,
                              "x": float(x) if ok else None,
                              "y": float(y) if ok else None,
                              "valid": ok})
        return {"rows": self.rows, "cols": self.cols, "cells": cells}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlGrid":
        rows, cols = int(d["rows"]), int(d["cols"])
        pts = np.full((rows, cols, 2), np.nan)
        valid = np.zeros((rows, cols), dtype=bool)
        for cell in d["cells"]:
            if cell["valid"]:
                pts[cell["row"], cell["col"]] = (cell["x"], cell["y"])
                valid[cell["row"], cell["col"]] = True
        return cls(pts, valid)

    @classmethod
    def from_array(cls, points) -> "ControlGrid":
        P = np.asarray(points, dtype=np.float64)
        return cls(P.copy(), np.ones(P.shape[:2], dtype=bool))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "x", "y", "valid"])
            for cell in self.to_dict()["cells"]:
                w.writerow([cell["row"], cell["col"],
                            "" if cell["x"] is None else repr(cell["x"]),
                            "" if cell["y"] is None else repr(cell["y"]),
                            int(cell["valid"])])


def _assign_columns(xs, centers):
    """Order-preserving assignment of sorted ``xs`` to distinct column centres."""
    n, m = len(xs), len(centers)
    cost = np.abs(xs[:, None] - centers[None, :])
    # best[i][j]: min cost placing the first i points within the first j columns
    best = np.full((n + 1, m + 1), np.inf)
    best[0, :] = 0.0
    for i in range(1, n + 1):
        for j in range(i, m + 1):
            best[i, j] = min(best[i, j - 1], best[i - 1, j - 1] + cost[i - 1, j - 1])
    cols = []
    i, j = n, m
    while i > 0:
        if best[i, j] == best[i, j - 1] and j > i:
            j -= 1
        else:
            cols.append(j - 1)
            i -= 1
            j -= 1
    return cols[::-1]


def sort_into_grid(points, expected_cols: int | None = None, row_gap_factor: float = 0.5) -> ControlGrid:
    """Arrange scattered points into rows and columns.

    Points sorted by ``y`` start a new row wherever the gap to the previous
    point exceeds ``row_gap_factor`` times the median nearest-neighbour
    distance. Rows are sorted by ``x``; rows shorter than the modal row
    length (or ``expected_cols``) get invalid cells where their points do not
    reach the column centres measured on complete rows.
    """
    P = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(P) < 4:
        raise GridDegenerateError("need at least four points to form a grid")
    nn, _ = cKDTree(P).query(P, k=2)
    spacing = float(np.median(nn[:, 1]))
    if spacing <= 0:
        raise GridDegenerateError("points are not distinct")
    order = np.lexsort((P[:, 0], P[:, 1]))
    Ps = P[order]
    breaks = np.flatnonzero(np.diff(Ps[:, 1]) > row_gap_factor * spacing) + 1
    rows = [r[np.argsort(r[:, 0], kind="stable")] for r in np.split(Ps, breaks)]
    lengths = np.array([len(r) for r in rows])
    if len(rows) < 2 or lengths.max() < 2:
        raise GridDegenerateError("points collapse onto a single row or column")
    if expected_cols is None:
        values, counts = np.unique(lengths, return_counts=True)
        ncols = int(values[np.flatnonzero(counts == counts.max())].max())
    else:
        ncols = int(expected_cols)
    if lengths.max() > ncols:
        raise GridDegenerateError(f"a row holds {lengths.max()} points, more than {ncols} columns")
    full = [r for r in rows if len(r) == ncols]
    if not full:
        raise GridDegenerateError(f"no complete row with {ncols} points to define columns")
    centers = np.median(np.stack([r[:, 0] for r in full]), axis=0)
    grid = np.full((len(rows), ncols, 2), np.nan)
    valid = np.zeros((len(rows), ncols), dtype=bool)
    for r, row in enumerate(rows):
        cols = range(ncols) if len(row) == ncols else _assign_columns(row[:, 0], centers)
        for p, c in zip(row, cols):
            grid[r, c] = p
            valid[r, c] = True
    return ControlGrid(grid, valid)


def fill_invalid(points, valid) -> np.ndarray:
    """Fill invalid cells from valid neighbours.

    Interior gaps are linearly interpolated along rows and columns (averaged
    when both are available); cells with neighbours on one side only are
    linearly extrapolated. Passes repeat until the net is complete.
    """
    P = np.array(points, dtype=np.float64)
    ok = np.array(valid, dtype=bool)
    if not ok.any():
        raise GridDegenerateError("grid has no valid cells")
    rows, cols = ok.shape

    def along(line, okline, k):
        idx = np.flatnonzero(okline)
        lo = idx[idx < k]
        hi = idx[idx > k]
        if len(lo) and len(hi):
            a, b = lo[-1], hi[0]
            t = (k - a) / (b - a)
            return line[a] * (1 - t) + line[b] * t, True
        side = lo[-2:] if len(lo) >= 2 else hi[:2] if len(hi) >= 2 else None
        if side is None:
            return None, False
        a, b = side
        t = (k - a) / (b - a)
        return line[a] * (1 - t) + line[b] * t, False

    while not ok.all():
        newP, newok = P.copy(), ok.copy()
        for r in range(rows):
            for c in range(cols):
                if ok[r, c]:
                    continue
                inter, extra = [], []
                for val, interior in (along(P[r], ok[r], c), along(P[:, c], ok[:, c], r)):
                    if val is not None:
                        (inter if interior else extra).append(val)
                use = inter or extra
                if use:
                    newP[r, c] = np.mean(use, axis=0)
                    newok[r, c] = True
        if (newok == ok).all():
            # isolated cells with a single valid neighbour: copy it
            for r, c in zip(*np.nonzero(~ok)):
                nb = [(r + dr, c + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)
                      if 0 <= r + dr < rows and 0 <= c + dc < cols and ok[r + dr, c + dc]]
                if nb:
                    newP[r, c] = np.mean([P[i, j] for i, j in nb], axis=0)
                    newok[r, c] = True
        if (newok == ok).all():
            raise GridDegenerateError("cannot fill invalid cells")
        P, ok = newP, newok
    return P
