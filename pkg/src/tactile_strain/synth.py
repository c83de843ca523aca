"""Synthetic sensor images with known deformation.

A grid of colored quads is rendered, deformed by an analytic displacement
field, optionally passed through a forward lens model and noise. The exact
control-point motion is known, which gives a ground-truth strain that does
not depend on any image processing.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bspline import sample_surface, surface_from_net
from .errors import InvalidInputError
from .geometry import ControlGrid
from .imaging import CameraModel, round_to_u8, bilinear_sample
from .strain import DEFAULT_ALPHA, total_distance

YELLOW = (255, 255, 0)
RED = (255, 0, 0)


@dataclass(frozen=True)
class GridSpec:
    rows: int = 10
    cols: int = 10
    cell: int = 26
    gap: int = 14
    quad_color: tuple[int, int, int] = YELLOW
    bg_color: tuple[int, int, int] = RED
    margin: int = 20
    size: tuple[int, int] | None = None  # (width, height); grid is centred

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidInputError("grid needs at least one row and column")
        if not self.cell > self.gap >= 1:
            raise InvalidInputError("need cell > gap >= 1")
        if tuple(self.quad_color) == tuple(self.bg_color):
            raise InvalidInputError("quad and background colors must differ")
        object.__setattr__(self, "quad_color", tuple(int(c) for c in self.quad_color))
        object.__setattr__(self, "bg_color", tuple(int(c) for c in self.bg_color))
        if self.size is not None:
            object.__setattr__(self, "size", (int(self.size[0]), int(self.size[1])))
            w, h = self.extent
            if w > self.size[0] or h > self.size[1]:
                raise InvalidInputError("grid does not fit the requested image size")

    @property
    def pitch(self) -> int:
        return self.cell + self.gap

    @property
    def extent(self) -> tuple[int, int]:
        return (self.cols * self.cell + (self.cols - 1) * self.gap,
                self.rows * self.cell + (self.rows - 1) * self.gap)

    @property
    def image_size(self) -> tuple[int, int]:
        if self.size is not None:
            return self.size
        w, h = self.extent
        return w + 2 * self.margin, h + 2 * self.margin

    @property
    def origin(self) -> tuple[int, int]:
        """Top-left pixel of the first quad."""
        if self.size is None:
            return self.margin, self.margin
        w, h = self.extent
        return (self.size[0] - w) // 2, (self.size[1] - h) // 2

    def quad_boxes(self) -> np.ndarray:
        """``(rows, cols, 4)`` inclusive pixel boxes ``x0, y0, x1, y1``."""
        ox, oy = self.origin
        c = np.arange(self.cols)
        r = np.arange(self.rows)
        x0 = ox + c * self.pitch
        y0 = oy + r * self.pitch
        X0, Y0 = np.meshgrid(x0, y0)
        return np.stack([X0, Y0, X0 + self.cell - 1, Y0 + self.cell - 1], axis=-1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quad_color"] = list(self.quad_color)
        d["bg_color"] = list(self.bg_color)
        d["size"] = None if self.size is None else list(self.size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        d = dict(d)
        for key in ("quad_color", "bg_color", "size"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def render_grid(spec: GridSpec) -> np.ndarray:
    """Axis-aligned quads of ``quad_color`` on ``bg_color``."""
    w, h = spec.image_size
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = spec.bg_color
    for x0, y0, x1, y1 in spec.quad_boxes().reshape(-1, 4):
        img[y0:y1 + 1, x0:x1 + 1] = spec.quad_color
    return img


def reference_junctions(spec: GridSpec) -> ControlGrid:
    """Gap-crossing centres between every 2x2 block of quads.

    These are the control points the extraction pipeline recovers from an
    undeformed rendering: ``(rows - 1) x (cols - 1)`` junctions.
    """
    if spec.rows < 2 or spec.cols < 2:
        raise InvalidInputError("junctions need at least a 2x2 grid of quads")
    ox, oy = spec.origin
    off = spec.cell + (spec.gap - 1) / 2.0
    xs = ox + off + spec.pitch * np.arange(spec.cols - 1)
    ys = oy + off + spec.pitch * np.arange(spec.rows - 1)
    X, Y = np.meshgrid(xs, ys)
    return ControlGrid.from_array(np.stack([X, Y], axis=-1))


# ---------------------------------------------------------------------------
# Displacement fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisplacementField:
    """Analytic in-plane displacement.

    ``point``: radial, magnitude ``A (r/eps) exp(1/2 - r^2 / (2 eps^2))``
    pointing away from ``center`` (zero at the centre, peak ``A`` at
    ``r = eps``). ``edge``: the same profile of the signed distance to the
    line through ``center`` at ``angle`` degrees, directed along the line
    normal. ``uniform``: constant ``A (cos angle, sin angle)``. ``none``: zero.
    """

    kind: str = "none"
    center: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.0
    epsilon: float = 1.0
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "edge", "uniform", "none"):
            raise InvalidInputError(f"unknown field kind {self.kind!r}")
        if self.amplitude < 0:
            raise InvalidInputError("amplitude must be nonnegative")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DisplacementField":
        d = dict(d)
        if "center" in d:
            d["center"] = tuple(d["center"])
        return cls(**d)


def profile(t, amplitude: float, epsilon: float):
    """Odd radial profile ``A (t/eps) exp(1/2 - t^2/(2 eps^2))``."""
    t = np.asarray(t, dtype=np.float64)
    s = t / epsilon
    return amplitude * s * np.exp(0.5 - 0.5 * s * s)


def eval_field(f: DisplacementField, x, y):
    """Displacement ``(dx, dy)`` at pixel positions ``(x, y)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if f.kind == "none" or f.amplitude == 0:
        return np.zeros_like(x + y), np.zeros_like(x + y)
    if f.kind == "uniform":
        a = math.radians(f.angle)
        return (np.full_like(x + y, f.amplitude * math.cos(a)),
                np.full_like(x + y, f.amplitude * math.sin(a)))
    rx, ry = x - f.center[0], y - f.center[1]
    if f.kind == "point":
        # profile(r) * (rx, ry) / r without the 0/0 at the centre
        s2 = (rx * rx + ry * ry) / (f.epsilon * f.epsilon)
        g = f.amplitude / f.epsilon * np.exp(0.5 - 0.5 * s2)
        return g * rx, g * ry
    a = math.radians(f.angle)
    nx, ny = -math.sin(a), math.cos(a)
    d = rx * nx + ry * ny
    m = profile(d, f.amplitude, f.epsilon)
    return m * nx, m * ny


def displace_points(f: DisplacementField, points, iterations: int = 100, tol: float = 1e-12) -> np.ndarray:
    """Where material points land in an image produced by :func:`warp_image`.

    Backward warping shows source point ``p`` at the ``x`` solving
    ``x - f(x) = p``; solved by fixed-point iteration.
    """
    P = np.asarray(points, dtype=np.float64)
    X = P.copy()
    for _ in range(iterations):
        dx, dy = eval_field(f, X[..., 0], X[..., 1])
        nxt = P + np.stack([dx, dy], axis=-1)
        done = np.max(np.abs(nxt - X)) < tol if X.size else True
        X = nxt
        if done:
            break
    return X


def warp_image(img, f: DisplacementField, fill=None) -> np.ndarray:
    """Backward warp ``out(x) = img(x - f(x))`` with bilinear sampling.

    Samples falling outside the source take ``fill`` (default: the top-left
    pixel's color, which is the background for rendered grids).
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    if fill is None:
        fill = img[0, 0].astype(np.float64)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = eval_field(f, xs, ys)
    return round_to_u8(bilinear_sample(img, xs - dx, ys - dy, fill=fill))


def apply_fisheye(img, cam: CameraModel) -> np.ndarray:
    """Forward lens distortion: the inverse of ``undistort_fisheye`` with the same camera."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ux, uy = cam.undistort_points(xs, ys)
    return round_to_u8(bilinear_sample(img, ux, uy, fill=0))


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise InvalidInputError("noise sigma must be nonnegative")


def add_noise(img, noise: NoiseSpec) -> np.ndarray:
    """Additive Gaussian noise, reproducible from ``noise.seed``."""
    img = np.asarray(img)
    if noise.gaussian_sigma == 0:
        return img.copy()
    rng = np.random.default_rng(noise.seed)
    return round_to_u8(img + rng.normal(0.0, noise.gaussian_sigma, img.shape))


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def ground_truth_strain(f: DisplacementField, grid: ControlGrid, alpha: float = DEFAULT_ALPHA,
                        K_u: int = 100, K_v: int = 100, degree_u: int = 1, degree_v: int = 1) -> float:
    """Strain between the surface over ``grid`` and over its displaced points.

    No image processing is involved: control points move exactly as the
    rendered pattern does under :func:`warp_image`.
    """
    ref_net = grid.filled()
    moved = displace_points(f, ref_net)
    s_ref = sample_surface(surface_from_net(ref_net, degree_u, degree_v), K_u, K_v)
    s = sample_surface(surface_from_net(moved, degree_u, degree_v), K_u, K_v)
    return alpha * total_distance(s, s_ref)


@dataclass
class SyntheticPair:
    reference: np.ndarray
    target: np.ndarray
    sidecar: dict = field(default_factory=dict)


def make_pair(spec: GridSpec, f: DisplacementField, cam: CameraModel | None = None,
              noise: NoiseSpec | None = None, alpha: float = DEFAULT_ALPHA,
              K_u: int = 100, K_v: int = 100, target_seed: int | None = None) -> SyntheticPair:
    """Reference and deformed renderings plus a ground-truth sidecar.

    The reference gets noise from ``noise.seed``, the target from
    ``target_seed`` (default ``noise.seed + 1``).
    """
    noise = noise or NoiseSpec()
    base = render_grid(spec)
    ref, tgt = base, warp_image(base, f, fill=np.array(spec.bg_color, dtype=np.float64))
    if cam is not None:
        ref, tgt = apply_fisheye(ref, cam), apply_fisheye(tgt, cam)
    ref = add_noise(ref, noise)
    if target_seed is None:
        target_seed = noise.seed + 1
    tgt = add_noise(tgt, NoiseSpec(noise.gaussian_sigma, target_seed))
    grid = reference_junctions(spec)
    gamma = ground_truth_strain(f, grid, alpha, K_u, K_v)
    sidecar = {
        "grid": spec.to_dict(),
        "field": f.to_dict(),
        "camera": None if cam is None else cam.to_dict(),
        "noise": asdict(noise),
        "target_seed": target_seed,
        "alpha": alpha,
        "K_u": K_u,
        "K_v": K_v,
        "ground_truth_gamma": gamma,
    }
    return SyntheticPair(ref, tgt, sidecar)
