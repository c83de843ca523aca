"""Shear strain, force calibration, contact localization and edge direction.

All distances are in pixels. ``gamma_ss`` is the scaled sum of point-wise
Euclidean distances between a deformed and a reference sampled surface.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .bspline import SampledSurface
from .errors import DegenerateError, InvalidInputError, NoContactError
from .imaging import connected_components, dilate, largest_component, threshold

DEFAULT_ALPHA = 1.0 / 18000.0
DEFAULT_SLOPE = 3.09
DEFAULT_INTERCEPT = -1.14
DEFAULT_FORCE_RANGE = (1.0, 8.0)


def point_distance(p1, p2) -> float:
    """Euclidean distance between two points."""
    d = np.asarray(p1, dtype=np.float64) - np.asarray(p2, dtype=np.float64)
    return float(math.sqrt(float(np.dot(d, d))))


def _check_comparable(s: SampledSurface, s_ref: SampledSurface):
    if s.K != s_ref.K or tuple(s.shape) != tuple(s_ref.shape):
        raise InvalidInputError(f"surfaces sample different lattices: {s.shape} vs {s_ref.shape}")
    if not np.array_equal(s.params, s_ref.params):
        raise InvalidInputError("surfaces were sampled at different parameters")


def point_distances(s: SampledSurface, s_ref: SampledSurface) -> np.ndarray:
    """Per-sample distances ``||s_i - s_ref_i||``."""
    _check_comparable(s, s_ref)
    d = s.points - s_ref.points
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def total_distance(s: SampledSurface, s_ref: SampledSurface) -> float:
    return float(point_distances(s, s_ref).sum())


@dataclass
class StrainReport:
    gamma_ss: float
    per_point: np.ndarray
    total_distance: float
    alpha: float

    def to_dict(self, include_points: bool = False) -> dict:
        d = {"gamma_ss": self.gamma_ss, "total_distance": self.total_distance,
             "alpha": self.alpha, "K": int(len(self.per_point))}
        if include_points:
            d["per_point"] = [float(v) for v in self.per_point]
        return d


def shear_strain(s: SampledSurface, s_ref: SampledSurface, alpha: float = DEFAULT_ALPHA) -> StrainReport:
    """``gamma_ss = alpha * sum_i ||s_i - s_ref_i||``."""
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    per_point = point_distances(s, s_ref)
    total = float(per_point.sum())
    return StrainReport(alpha * total, per_point, total, alpha)


# ---------------------------------------------------------------------------
# Force calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationModel:
    slope: float = DEFAULT_SLOPE
    intercept: float = DEFAULT_INTERCEPT
    valid_range: tuple[float, float] = DEFAULT_FORCE_RANGE
    residual_rms: float = 0.0
    slope_stderr: float = 0.0
    intercept_stderr: float = 0.0

    def __post_init__(self):
        if not self.slope > 0:
            raise InvalidInputError("calibration slope must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["valid_range"] = list(self.valid_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationModel":
        return cls(float(d.get("slope", DEFAULT_SLOPE)),
                   float(d.get("intercept", DEFAULT_INTERCEPT)),
                   tuple(d.get("valid_range", DEFAULT_FORCE_RANGE)),
                   float(d.get("residual_rms", 0.0)),
                   float(d.get("slope_stderr", 0.0)),
                   float(d.get("intercept_stderr", 0.0)))


class ForceEstimate(NamedTuple):
    force: float
    in_range: bool


def force_from_strain(gamma: float, cal: CalibrationModel | None = None) -> ForceEstimate:
    """Linear force model; readings outside the valid range are flagged."""
    cal = cal or CalibrationModel()
    if gamma < 0:
        raise InvalidInputError("shear strain cannot be negative")
    force = cal.slope * gamma + cal.intercept
    lo, hi = cal.valid_range
    return ForceEstimate(force, bool(lo - 1e-9 <= force <= hi + 1e-9))


def fit_calibration(samples, valid_range=DEFAULT_FORCE_RANGE) -> CalibrationModel:
    """Ordinary least-squares line through ``(gamma, force)`` samples."""
    data = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    g, f = data[:, 0], data[:, 1]
    if len(np.unique(g)) < 2:
        raise DegenerateError("calibration needs at least two distinct strain values")
    n = len(g)
    gm, fm = g.mean(), f.mean()
    sxx = float(((g - gm) ** 2).sum())
    slope = float(((g - gm) * (f - fm)).sum() / sxx)
    intercept = float(fm - slope * gm)
    resid = f - (slope * g + intercept)
    rms = float(math.sqrt((resid ** 2).mean()))
    if n > 2:
        s2 = float((resid ** 2).sum() / (n - 2))
        se_slope = math.sqrt(s2 / sxx)
        se_icpt = math.sqrt(s2 * (1.0 / n + gm * gm / sxx))
    else:
        se_slope = se_icpt = 0.0
    return CalibrationModel(slope, intercept, tuple(valid_range), rms, se_slope, se_icpt)


# ---------------------------------------------------------------------------
# Distance fields
# ---------------------------------------------------------------------------


def displacement_map(s: SampledSurface, s_ref: SampledSurface) -> np.ndarray:
    """Per-sample distances arranged on the ``(K_u, K_v)`` parameter lattice."""
    return point_distances(s, s_ref).reshape(s.shape)


class Segmentation(NamedTuple):
    mask: np.ndarray
    contact: bool


def segment_contact(field, threshold_px: float) -> Segmentation:
    """Largest connected region where the field exceeds ``threshold_px``.

    The field is scaled linearly so that its maximum maps to 255, thresholded
    (strictly above), dilated once with a 3x3 square and reduced to its largest
    8-connected component.
    """
    if threshold_px <= 0:
        raise InvalidInputError("threshold must be positive")
    F = np.asarray(field, dtype=np.float64)
    fmax = float(F.max()) if F.size else 0.0
    empty = np.zeros(F.shape, dtype=bool)
    if fmax <= 0 or threshold_px >= fmax:
        return Segmentation(empty, False)
    scale = 255.0 / fmax
    img8 = np.clip(np.floor(F * scale + 0.5), 0, 255).astype(np.uint8)
    mask = threshold(img8, threshold_px * scale)
    if not mask.any():
        return Segmentation(empty, False)
    mask = dilate(mask, 3, 1)
    labels, _ = connected_components(mask)
    comp = largest_component(labels)
    return Segmentation(comp.mask, not comp.empty)


@dataclass(frozen=True)
class ContactEstimate:
    center: tuple[float, float]
    confidence: float


def localize_contact(field, positions, threshold_px: float = 0.5,
                     bounds: tuple[float, float] | None = None) -> ContactEstimate:
    """Distance-weighted centroid of the segmented contact region.

    ``positions`` maps lattice cells to image pixels: an array of shape
    ``(K_u, K_v, >=2)`` (typically the reference sampled surface) or a
    callable ``f(rows, cols) -> (x, y)``. ``bounds`` is the image
    ``(width, height)``; the centre is clipped into it when given.
    """
    F = np.asarray(field, dtype=np.float64)
    seg = segment_contact(F, threshold_px)
    if not seg.contact:
        raise NoContactError("no displacement above threshold")
    weights = np.where(seg.mask, F, 0.0)
    mass = float(weights.sum())
    if mass <= 0:
        raise NoContactError("segmented region carries no displacement")
    if callable(positions):
        rr, cc = np.nonzero(seg.mask)
        xs, ys = positions(rr, cc)
        w = F[rr, cc]
        cx = float(np.dot(w, xs) / mass)
        cy = float(np.dot(w, ys) / mass)
    else:
        pos = np.asarray(positions, dtype=np.float64)
        if pos.shape[:2] != F.shape:
            raise InvalidInputError("positions must match the field lattice")
        cx = float((weights * pos[..., 0]).sum() / mass)
        cy = float((weights * pos[..., 1]).sum() / mass)
    if bounds is not None:
        cx = min(max(cx, 0.0), bounds[0] - 1.0)
        cy = min(max(cy, 0.0), bounds[1] - 1.0)
    return ContactEstimate((cx, cy), mass / float(F.sum()))


@dataclass(frozen=True)
class EdgeEstimate:
    angle: float
    eigenvalue_ratio: float
    degenerate: bool = False
    n_points: int = field(default=0)


def principal_angle(points, groups=None) -> EdgeEstimate:
    """Direction of the dominant principal axis of a 2D point set, in [0, 180).

    With ``groups`` (one integer label per point) each group is centred on
    its own mean before the covariance is pooled, so the axis follows the
    shape of the groups rather than the line joining them.
    """
    P = np.asarray(points, dtype=np.float64)[:, :2]
    if len(P) < 2:
        raise InvalidInputError("need at least two points for a principal axis")
    if groups is None:
        D = P - P.mean(axis=0)
    else:
        g = np.unique(np.asarray(groups), return_inverse=True)[1].ravel()
        count = np.bincount(g)
        means = np.column_stack([np.bincount(g, P[:, k]) for k in range(2)]) / count[:, None]
        D = P - means[g]
    C = D.T @ D / len(P)
    evals, evecs = np.linalg.eigh(C)
    lo, hi = float(evals[0]), float(evals[1])
    if hi <= 0:
        return EdgeEstimate(0.0, 1.0, True, len(P))
    degenerate = abs(hi - lo) <= 1e-9 * hi
    ratio = math.inf if lo <= 1e-15 * hi else hi / lo
    vx, vy = evecs[:, 1]
    angle = math.degrees(math.atan2(vy, vx)) % 180.0
    if angle >= 180.0 - 1e-12:
        angle = 0.0
    return EdgeEstimate(angle, max(ratio, 1.0), degenerate, len(P))


def inscribed_disk(positions) -> tuple[np.ndarray, float]:
    """Centre and radius of a disk inside the area covered by a position lattice.

    The centre is the mean position; the radius is its distance to the
    nearest lattice boundary point.
    """
    G = np.asarray(positions, dtype=np.float64)[..., :2]
    center = G.reshape(-1, 2).mean(axis=0)
    rim = np.concatenate([G[0], G[-1], G[:, 0], G[:, -1]])
    return center, float(np.hypot(*(rim - center).T).min())


def edge_orientation_pca(field, positions, top_fraction: float = 0.1, aperture: bool = True,
                         pooled: bool = True) -> EdgeEstimate:
    """Principal direction of the most displaced lattice points.

    Points whose displacement is at least the ``1 - top_fraction`` quantile
    are kept and their image positions (``positions``, shape
    ``(K_u, K_v, >=2)``) go through a two-component PCA. With ``aperture``
    only points inside the disk inscribed in the lattice compete: a square
    sensing area clips the two displacement bands of an edge contact
    unevenly and would pull the axis towards its diagonals. With ``pooled``
    each 8-connected run of kept lattice points is centred separately: an
    edge produces two parallel bands, and when one band is only partly
    selected the line joining the band centres would otherwise tilt the
    axis. Angles are measured from the image x axis towards the y axis
    (clockwise on screen).
    """
    if not 0 < top_fraction <= 1:
        raise InvalidInputError("top_fraction must lie in (0, 1]")
    F = np.asarray(field, dtype=np.float64)
    pos = np.asarray(positions, dtype=np.float64)
    flat = F.ravel()
    P = pos.reshape(flat.size, -1)[:, :2]
    lattice = F.ndim == 2 and pos.ndim == 3
    inside = np.ones(flat.size, dtype=bool)
    if aperture and lattice:
        center, radius = inscribed_disk(pos)
        inside = np.hypot(*(P - center).T) <= radius
    if inside.sum() < 2:
        raise InvalidInputError("fewer than two lattice points available")
    n_keep = max(int(math.ceil(top_fraction * inside.sum())), 1)
    cut = np.sort(flat[inside])[::-1][n_keep - 1]
    keep = inside & (flat >= cut)
    if keep.sum() < 2:
        raise InvalidInputError("fewer than two points survive the top-fraction cut")
    groups = None
    if pooled and lattice:
        labels, _ = connected_components(keep.reshape(F.shape))
        groups = labels.ravel()[keep]
    return principal_angle(P[keep], groups)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def field_to_csv(field, path) -> None:
    F = np.asarray(field)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "distance"])
        for (a, b), v in np.ndenumerate(F):
            w.writerow([a, b, repr(float(v))])


def field_to_rgb(field) -> np.ndarray:
    """False-color rendering (black-red-yellow-white ramp) scaled to the field max."""
    F = np.asarray(field, dtype=np.float64)
    fmax = float(F.max()) if F.size else 0.0
    t = F / fmax if fmax > 0 else np.zeros_like(F)
    r = np.clip(3 * t, 0, 1)
    g = np.clip(3 * t - 1, 0, 1)
    b = np.clip(3 * t - 2, 0, 1)
    return np.clip(np.floor(np.stack([r, g, b], axis=-1) * 255 + 0.5), 0, 255).astype(np.uint8)


def report_to_json(payload: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
