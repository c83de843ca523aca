"""End-to-end extraction: tactile image -> control grid -> strain report."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from . import geometry, imaging
from .bspline import SampledSurface, sample_surface, surface_from_net
from .errors import IncompatibleInputsError, InvalidInputError, NoContactError, NoDetectionError
from .imaging import CameraModel
from .strain import (DEFAULT_ALPHA, CalibrationModel, displacement_map, edge_orientation_pca,
                     force_from_strain, localize_contact, shear_strain)

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    camera: CameraModel | None = None
    balance: float | None = None  # None keeps the camera's own intrinsics
    roi: tuple[int, int, int, int] | None = None  # x, y, width, height
    use_clahe: bool = False
    clahe_tile: int = 8
    clahe_clip: float = 2.0
    bilateral_radius: int = 4
    sigma_space: float = 75.0
    sigma_range: float = 75.0
    edge_threshold: int = 50
    close_kernel: int = 3
    close_iterations: int = 2
    epsilon_frac: float = 0.04
    min_area: float = 30.0
    max_area: float = 2000.0
    min_solidity: float = 0.85
    corner_max_dist: float | None = None  # None: derived from gap and side length
    junction_position: str = "centroid"  # or "corners"
    row_gap_factor: float = 0.5
    degree_u: int = 1
    degree_v: int = 1
    K_u: int = 100
    K_v: int = 100
    alpha: float = DEFAULT_ALPHA
    calibration: CalibrationModel = field(default_factory=CalibrationModel)
    segment_threshold: float = 2.5
    top_fraction: float = 0.1

    def __post_init__(self):
        if self.roi is not None:
            x, y, w, h = self.roi
            if x < 0 or y < 0 or w < 3 or h < 3:
                raise InvalidInputError(f"invalid roi {self.roi}")
        if self.alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        if self.junction_position not in ("centroid", "corners"):
            raise InvalidInputError("junction_position must be 'centroid' or 'corners'")
        if self.K_u < 2 or self.K_v < 2:
            raise InvalidInputError("K_u and K_v must be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("camera") is not None:
            d["camera"] = CameraModel.from_dict(d["camera"])
        if d.get("calibration") is not None:
            d["calibration"] = CalibrationModel.from_dict(d["calibration"])
        else:
            d.pop("calibration", None)
        if d.get("roi") is not None:
            d["roi"] = tuple(int(v) for v in d["roi"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["camera"] = None if self.camera is None else self.camera.to_dict()
        d["calibration"] = self.calibration.to_dict()
        d["roi"] = None if self.roi is None else list(self.roi)
        return d


@dataclass
class Extraction:
    grid: geometry.ControlGrid
    quads: list
    junctions: np.ndarray
    image: np.ndarray  # undistorted color image, full frame
    offset: tuple[int, int]  # roi origin added to all coordinates


def undistort(img, config: PipelineConfig) -> np.ndarray:
    if config.camera is None:
        return np.asarray(img)
    new_cam = None
    if config.balance is not None:
        h, w = img.shape[:2]
        new_cam = imaging.new_camera_matrix(config.camera, w, h, config.balance)
    return imaging.undistort_fisheye(img, config.camera, new_cam)


def crop_roi(img, roi):
    if roi is None:
        return img, (0, 0)
    x, y, w, h = roi
    H, W = img.shape[:2]
    if x + w > W or y + h > H:
        raise InvalidInputError(f"roi {roi} exceeds image of size {W}x{H}")
    return img[y:y + h, x:x + w], (x, y)


def edge_mask(gray, config: PipelineConfig) -> np.ndarray:
    """Grayscale -> (CLAHE) -> bilateral -> Sobel -> threshold -> closing."""
    if config.use_clahe:
        gray = imaging.clahe(gray, config.clahe_tile, config.clahe_clip)
    smooth = imaging.bilateral_filter(gray, config.bilateral_radius, config.sigma_space, config.sigma_range)
    edges = imaging.sobel_magnitude(smooth)
    mask = imaging.threshold(edges, config.edge_threshold)
    if config.close_iterations > 0:
        mask = imaging.morph_close(mask, config.close_kernel, config.close_iterations)
    return mask


def detect_quads(mask, config: PipelineConfig, with_contours: bool = False):
    """Quadrilaterals among the outer contours of ``mask``.

    With ``with_contours`` the matching contour of each quad is returned too.
    """
    quads, contours = [], []
    for contour in geometry.find_contours(mask):
        if len(contour) < 4:
            continue
        eps = config.epsilon_frac * geometry.perimeter(contour)
        if eps <= 0:
            continue
        poly = geometry.approx_polygon(contour, eps)
        kept = geometry.filter_quadrilaterals([poly], config.min_area, config.max_area, config.min_solidity)
        if kept:
            quads.append(kept[0])
            contours.append(contour)
    return (quads, contours) if with_contours else quads


def corner_distance(quads, config: PipelineConfig) -> float:
    """Linking radius for corners that meet at one junction.

    Corners across a gap sit about ``g`` apart (the typical distance to the
    nearest corner of another quad); the closest corner belonging to a
    different junction is at least ``hypot(g, side)`` away. The radius is
    the midpoint of the two, which tolerates local stretching of the gaps.
    """
    if config.corner_max_dist is not None:
        return float(config.corner_max_dist)
    side = float(np.median(np.concatenate([q.side_lengths for q in quads])))
    if len(quads) < 2:
        return 0.75 * side
    pts = np.concatenate([q.corners for q in quads]).astype(np.float64)
    owner = np.repeat(np.arange(len(quads)), 4)
    d, idx = cKDTree(pts).query(pts, k=min(len(pts), 8))
    other = owner[idx] != owner[:, None]
    nearest = np.where(other, d, np.inf).min(axis=1)
    nearest = nearest[np.isfinite(nearest)]
    if nearest.size == 0:
        return 0.75 * side
    g = float(np.median(nearest))
    return 0.5 * (g + float(np.hypot(g, side)))


def junctions(quads, contours, max_dist: float, config: PipelineConfig) -> np.ndarray:
    """Junction positions, ``(N, 2)`` sorted by ``(y, x)``.

    ``corners`` mode places each junction at the mean of its corner-link
    midpoints. ``centroid`` mode uses the mean of the region centroids of
    the four quads meeting there: equal to the gap centre on an undeformed
    grid, and far less sensitive to pixel quantization than single corners.
    """
    clusters = geometry.junction_clusters(quads, max_dist)
    if not clusters:
        return np.zeros((0, 2))
    if config.junction_position == "corners":
        return np.array([j.point for j in clusters])
    cache = {}

    def centroid(k):
        if k not in cache:
            cache[k] = geometry.region_centroid(contours[k])
        return cache[k]

    pts = np.array([np.mean([centroid(k) for k in j.quads], axis=0) for j in clusters])
    return pts[np.lexsort((pts[:, 0], pts[:, 1]))]


def extract(img, config: PipelineConfig | None = None) -> Extraction:
    """Control grid of quad junctions from a color tactile image.

    Raises :class:`NoDetectionError` when no quadrilateral (or too few
    junctions to form a grid) is found.
    """
    config = config or PipelineConfig()
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    und = undistort(img, config)
    roi, (ox, oy) = crop_roi(und, config.roi)
    gray = imaging.to_grayscale(roi)
    mask = edge_mask(gray, config)
    quads, contours = detect_quads(mask, config, with_contours=True)
    if not quads:
        raise NoDetectionError("no quadrilaterals detected")
    max_dist = corner_distance(quads, config)
    pts = junctions(quads, contours, max_dist, config)
    if len(pts) < 4:
        raise NoDetectionError(f"only {len(pts)} quad junctions found among {len(quads)} quads")
    pts = pts + [ox, oy]
    offset_quads = [geometry.Quadrilateral(q.corners + [ox, oy], q.area, q.solidity, q.extent) for q in quads]
    try:
        grid = geometry.sort_into_grid(pts, row_gap_factor=config.row_gap_factor)
    except geometry.GridDegenerateError as exc:
        raise NoDetectionError(str(exc)) from exc
    log.debug("extracted %d quads, %d junctions, grid %dx%d",
              len(quads), len(pts), grid.rows, grid.cols)
    return Extraction(grid, offset_quads, pts, und, (ox, oy))


def sample_grid(grid: geometry.ControlGrid, config: PipelineConfig) -> SampledSurface:
    surf = surface_from_net(grid.filled(), config.degree_u, config.degree_v)
    return sample_surface(surf, config.K_u, config.K_v)


def analyze(ref: Extraction, target: Extraction, config: PipelineConfig) -> dict:
    """Strain, force, contact location and edge direction between two grids."""
    if (ref.grid.rows, ref.grid.cols) != (target.grid.rows, target.grid.cols):
        raise IncompatibleInputsError(
            f"grid mismatch: reference {ref.grid.rows}x{ref.grid.cols}, "
            f"target {target.grid.rows}x{target.grid.cols}")
    s_ref = sample_grid(ref.grid, config)
    s = sample_grid(target.grid, config)
    report = shear_strain(s, s_ref, config.alpha)
    force = force_from_strain(report.gamma_ss, config.calibration)
    field_ = displacement_map(s, s_ref)
    positions = s_ref.grid()
    h, w = ref.image.shape[:2]
    out = {
        "grid": {"rows": ref.grid.rows, "cols": ref.grid.cols,
                 "valid_reference": int(ref.grid.valid.sum()),
                 "valid_target": int(target.grid.valid.sum())},
        "quads": {"reference": len(ref.quads), "target": len(target.quads)},
        "strain": report.to_dict(),
        "force": {"newtons": force.force, "in_range": force.in_range},
        "contact": None,
        "edge": None,
    }
    try:
        contact = localize_contact(field_, positions, config.segment_threshold, bounds=(w, h))
        out["contact"] = {"x": contact.center[0], "y": contact.center[1], "confidence": contact.confidence}
    except NoContactError:
        pass
    if float(field_.max()) > 0:
        try:
            edge = edge_orientation_pca(field_, positions, config.top_fraction)
            out["edge"] = {"angle": edge.angle, "eigenvalue_ratio": _finite(edge.eigenvalue_ratio),
                           "degenerate": edge.degenerate}
        except InvalidInputError:
            pass
    out["_field"] = field_
    return out


def _finite(x: float):
    return None if not np.isfinite(x) else float(x)


def strain_between(ref_img, target_img, config: PipelineConfig | None = None) -> dict:
    config = config or PipelineConfig()
    return analyze(extract(ref_img, config), extract(target_img, config), config)


def draw_overlay(ext: Extraction) -> np.ndarray:
    """Debug image: quad outlines in blue, control points in white."""
    img = ext.image.copy()
    h, w = img.shape[:2]

    def put(x, y, color):
        xi, yi = int(round(x)), int(round(y))
        if 0 <= xi < w and 0 <= yi < h:
            img[yi, xi] = color

    for q in ext.quads:
        c = q.corners
        for a, b in zip(c, np.roll(c, -1, axis=0)):
            n = int(max(abs(b - a).max(), 1))
            for t in np.linspace(0.0, 1.0, n + 1):
                put(*(a + t * (b - a)), (0, 0, 255))
    for x, y in ext.junctions:
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                put(x + dx, y + dy, (255, 255, 255))
    return img

