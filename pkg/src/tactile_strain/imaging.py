"""Pixel-level image primitives.

Images are plain numpy arrays:

* gray images are ``(H, W)`` ``uint8``,
* color images are ``(H, W, 3)`` ``uint8`` in RGB order,
* binary images are ``(H, W)`` ``bool``,
* label maps are ``(H, W)`` ``int32`` with 0 as background.

Every function is pure and deterministic. Convolution-type filters clamp
coordinates at the border (replicate); morphology treats out-of-bounds pixels
as background.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DegenerateError, InvalidInputError

_LUMA = (0.299, 0.587, 0.114)


def _check_gray(img, min_size=1, name="img"):
    img = np.asarray(img)
    if img.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2D array, got shape {img.shape}")
    if img.shape[0] < min_size or img.shape[1] < min_size:
        raise InvalidInputError(f"{name} must be at least {min_size}x{min_size}, got {img.shape}")
    return img


def _check_color(img, name="img"):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError(f"{name} is empty")
    return img


def round_to_u8(values):
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Camera model and fisheye remapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus four radial distortion coefficients.

    ``model`` selects how the undistorted normalized radius ``r`` becomes the
    distorted radius:

    * ``"radial"``: ``r_d = r (1 + k1 r^2 + k2 r^4 + k3 r^6 + k4 r^8)``; zero
      coefficients give the identity mapping.
    * ``"equidistant"``: ``theta = atan(r)`` and
      ``r_d = theta (1 + k1 theta^2 + ... + k4 theta^8)`` (the OpenCV fisheye
      convention).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    dist: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    model: str = "radial"

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if len(self.dist) != 4:
            raise InvalidInputError("dist must hold exactly four coefficients k1..k4")
        if self.model not in ("radial", "equidistant"):
            raise InvalidInputError(f"unknown camera model {self.model!r}")
        object.__setattr__(self, "dist", tuple(float(k) for k in self.dist))

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        if "dist" in d:
            dist = tuple(d["dist"])
        else:
            dist = tuple(float(d.get(k, 0.0)) for k in ("k1", "k2", "k3", "k4"))
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            dist=dist,
            model=d.get("model", "radial"),
        )

    def to_dict(self) -> dict:
        k1, k2, k3, k4 = self.dist
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "k1": k1, "k2": k2, "k3": k3, "k4": k4, "model": self.model,
        }

    @classmethod
    def identity(cls, width: int, height: int, focal: float | None = None) -> "CameraModel":
        """Camera centred on an image of the given size with no distortion."""
        f = float(focal) if focal is not None else float(max(width, height))
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    def scaled(self, fx: float, fy: float) -> "CameraModel":
        return replace(self, fx=fx, fy=fy)

    def _poly(self, t):
        k1, k2, k3, k4 = self.dist
        t2 = t * t
        return 1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)))

    def distort_radius(self, r):
        """Map undistorted normalized radius to distorted normalized radius."""
        r = np.asarray(r, dtype=np.float64)
        t = np.arctan(r) if self.model == "equidistant" else r
        return t * self._poly(t)

    def undistort_radius(self, rd, iterations: int = 20):
        """Invert :meth:`distort_radius` with Newton iterations."""
        rd = np.asarray(rd, dtype=np.float64)
        k1, k2, k3, k4 = self.dist
        t = rd.copy()
        for _ in range(iterations):
            t2 = t * t
            f = t * self._poly(t) - rd
            df = 1.0 + t2 * (3 * k1 + t2 * (5 * k2 + t2 * (7 * k3 + t2 * 9 * k4)))
            df = np.where(np.abs(df) < 1e-12, 1e-12, df)
            t = t - f / df
        if self.model == "equidistant":
            t = np.clip(t, 0.0, math.pi / 2 - 1e-9)
            return np.tan(t)
        return t

    def distort_points(self, x, y):
        """Undistorted pixel coordinates -> distorted pixel coordinates."""
        xn = (np.asarray(x, dtype=np.float64) - self.cx) / self.fx
        yn = (np.asarray(y, dtype=np.float64) - self.cy) / self.fy
        r = np.hypot(xn, yn)
        rd = self.distort_radius(r)
        scale = np.where(r > 1e-12, rd / np.where(r > 1e-12, r, 1.0), 1.0)
        return xn * scale * self.fx + self.cx, yn * scale * self.fy + self.cy

    def undistort_points(self, x, y):
        """Distorted pixel coordinates -> undistorted pixel coordinates."""
        xd = (np.asarray(x, dtype=np.float64) - self.cx) / self.fx
        yd = (np.asarray(y, dtype=np.float64) - self.cy) / self.fy
        rd = np.hypot(xd, yd)
        r = self.undistort_radius(rd)
        scale = np.where(rd > 1e-12, r / np.where(rd > 1e-12, rd, 1.0), 1.0)
        return xd * scale * self.fx + self.cx, yd * scale * self.fy + self.cy


def new_camera_matrix(cam: CameraModel, width: int, height: int, balance: float = 0.0) -> CameraModel:
    """Rescale focal lengths so the undistorted view keeps the valid region.

    ``balance`` 0 crops to the region that is valid everywhere (the inner
    extent of the undistorted image borders); 1 keeps the full field of view.
    """
    if not 0.0 <= balance <= 1.0:
        raise InvalidInputError("balance must lie in [0, 1]")
    xs = np.array([0, width - 1, cam.cx, cam.cx], dtype=np.float64)
    ys = np.array([cam.cy, cam.cy, 0, height - 1], dtype=np.float64)
    ux, uy = cam.undistort_points(xs, ys)
    # normalized half-extents after undistortion along each axis
    half_x = np.array([cam.cx - ux[0], ux[1] - cam.cx]) / cam.fx
    half_y = np.array([cam.cy - uy[2], uy[3] - cam.cy]) / cam.fy
    inner_x, outer_x = half_x.min(), half_x.max()
    inner_y, outer_y = half_y.min(), half_y.max()
    ext_x = inner_x + balance * (outer_x - inner_x)
    ext_y = inner_y + balance * (outer_y - inner_y)
    want_x = max(cam.cx, width - 1 - cam.cx)
    want_y = max(cam.cy, height - 1 - cam.cy)
    f = min(want_x / ext_x, want_y / ext_y)
    return CameraModel(f, f, cam.cx, cam.cy, (0.0, 0.0, 0.0, 0.0), cam.model)


def bilinear_sample(img, xs, ys, fill=0):
    """Sample ``img`` at float coordinates with bilinear interpolation.

    Coordinates outside ``[0, W-1] x [0, H-1]`` receive ``fill``. Returns a
    float64 array with shape ``xs.shape`` (+ channel axis for color input).
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    eps = 1e-9
    inside = (xs >= -eps) & (xs <= w - 1 + eps) & (ys >= -eps) & (ys <= h - 1 + eps)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    src = img.astype(np.float64)
    if src.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
        inside_b = inside[..., None]
    else:
        inside_b = inside
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    fill_arr = np.asarray(fill, dtype=np.float64)
    return np.where(inside_b, out, fill_arr)


def undistort_fisheye(img, cam: CameraModel, new_cam: CameraModel | None = None):
    """Remove lens distortion from a color (or gray) image.

    Each output pixel is treated as an undistorted pixel of ``new_cam``
    (``cam`` itself when omitted), projected forward through the distortion
    model of ``cam`` and bilinearly sampled from the source. Pixels that land
    outside the source are black.
    """
    img = np.asarray(img)
    if img.ndim not in (2, 3) or img.shape[0] == 0 or img.shape[1] == 0:
        raise InvalidInputError(f"cannot undistort image of shape {img.shape}")
    new_cam = cam if new_cam is None else new_cam
    h, w = img.shape[:2]
    sx, sy = undistort_map(cam, new_cam, h, w)
    return round_to_u8(bilinear_sample(img, sx, sy, fill=0))


@functools.lru_cache(maxsize=8)
def undistort_map(cam: CameraModel, new_cam: CameraModel, h: int, w: int):
    """Source coordinates ``(sx, sy)`` for every output pixel; cached, read-only."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # output pixel -> normalized undistorted -> pixel in cam's undistorted frame
    ux = (xs - new_cam.cx) / new_cam.fx * cam.fx + cam.cx
    uy = (ys - new_cam.cy) / new_cam.fy * cam.fy + cam.cy
    sx, sy = cam.distort_points(ux, uy)
    sx.flags.writeable = False
    sy.flags.writeable = False
    return sx, sy


# ---------------------------------------------------------------------------
# Color conversion and contrast
# ---------------------------------------------------------------------------


def to_grayscale(img):
    """Luma ``round(0.299 R + 0.587 G + 0.114 B)``."""
    img = _check_color(img).astype(np.float64)
    luma = img[..., 0] * _LUMA[0] + img[..., 1] * _LUMA[1] + img[..., 2] * _LUMA[2]
    return round_to_u8(luma)


def _tile_centers(n, size):
    starts = np.arange(0, n, size)
    ends = np.minimum(starts + size, n)
    return starts, ends, (starts + ends - 1) / 2.0


def _interp_index(coords, centers):
    """Neighbouring tile indices and weight for each pixel coordinate."""
    k = len(centers)
    if k == 1:
        zeros = np.zeros(len(coords), dtype=np.intp)
        return zeros, zeros, np.zeros(len(coords))
    i1 = np.searchsorted(centers, coords, side="right")
    i0 = np.clip(i1 - 1, 0, k - 1)
    i1 = np.clip(i1, 0, k - 1)
    span = centers[i1] - centers[i0]
    wgt = np.where(span > 0, (coords - centers[i0]) / np.where(span > 0, span, 1.0), 0.0)
    return i0, i1, np.clip(wgt, 0.0, 1.0)


def clahe(img, tile: int = 8, clip_limit: float | None = 2.0):
    """Contrast limited adaptive histogram equalization.

    The image is split into ``tile`` x ``tile`` pixel tiles (edge tiles are
    truncated). Each tile histogram is clipped at
    ``max(1, clip_limit * n_pixels / 256)`` with the excess spread evenly over
    all 256 bins, then mapped through ``(cdf - cdf_min) / (n - cdf_min)``.
    Mappings are blended bilinearly between tile centres. ``clip_limit=None``
    disables clipping. A tile holding a single level maps it to itself.
    """
    img = _check_gray(img)
    if tile < 1:
        raise InvalidInputError("tile must be >= 1")
    if clip_limit is not None and clip_limit < 1:
        raise InvalidInputError("clip_limit must be >= 1")
    h, w = img.shape
    ty, tx = min(tile, h), min(tile, w)
    y_starts, y_ends, y_centers = _tile_centers(h, ty)
    x_starts, x_ends, x_centers = _tile_centers(w, tx)
    identity = np.arange(256, dtype=np.float64)
    luts = np.empty((len(y_starts), len(x_starts), 256))
    for a, (y0, y1) in enumerate(zip(y_starts, y_ends)):
        for b, (x0, x1) in enumerate(zip(x_starts, x_ends)):
            block = img[y0:y1, x0:x1]
            n = block.size
            hist = np.bincount(block.ravel(), minlength=256).astype(np.float64)
            if np.count_nonzero(hist) == 1:
                luts[a, b] = identity
                continue
            if clip_limit is not None:
                limit = max(1.0, clip_limit * n / 256.0)
                excess = np.maximum(hist - limit, 0.0).sum()
                hist = np.minimum(hist, limit) + excess / 256.0
            cdf = np.cumsum(hist)
            cdf_min = cdf[np.flatnonzero(hist)[0]]
            if n - cdf_min <= 1e-12:
                luts[a, b] = identity
            else:
                luts[a, b] = np.clip((cdf - cdf_min) / (n - cdf_min), 0.0, 1.0) * 255.0
    iy0, iy1, wy = _interp_index(np.arange(h, dtype=np.float64), y_centers)
    ix0, ix1, wx = _interp_index(np.arange(w, dtype=np.float64), x_centers)
    wy = wy[:, None]
    wx = wx[None, :]
    v = img.astype(np.intp)
    out = (
        (1 - wy) * (1 - wx) * luts[iy0[:, None], ix0[None, :], v]
        + (1 - wy) * wx * luts[iy0[:, None], ix1[None, :], v]
        + wy * (1 - wx) * luts[iy1[:, None], ix0[None, :], v]
        + wy * wx * luts[iy1[:, None], ix1[None, :], v]
    )
    return round_to_u8(out)


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------


def bilateral_weights(radius: int, sigma_space: float, sigma_range: float):
    """Spatial kernel ``(2r+1, 2r+1)`` and range lookup table indexed by |dI|."""
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1].astype(np.float64)
    spatial = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma_space * sigma_space))
    diff = np.arange(256, dtype=np.float64)
    rng = np.exp(-(diff * diff) / (2.0 * sigma_range * sigma_range))
    return spatial, rng


def bilateral_filter(img, radius: int = 4, sigma_space: float = 75.0, sigma_range: float = 75.0):
    """Edge-preserving smoothing with Gaussian space and range weights.

    Window offsets are accumulated in row-major order ``(dy, dx)`` from
    ``(-r, -r)``; the result is rounded half up.
    """
    img = _check_gray(img)
    if radius < 1:
        raise InvalidInputError("radius must be >= 1")
    if sigma_space <= 0 or sigma_range <= 0:
        raise InvalidInputError("sigmas must be positive")
    spatial, rng = bilateral_weights(radius, sigma_space, sigma_range)
    h, w = img.shape
    padded = np.pad(img, radius, mode="edge").astype(np.int16)
    padded_f = padded.astype(np.float64)
    center = img.astype(np.int16) - 255
    # signed lookup: index diff + 255
    rng_signed = np.concatenate([rng[:0:-1], rng])
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    idx = np.empty((h, w), dtype=np.int16)
    for i in range(2 * radius + 1):
        for j in range(2 * radius + 1):
            np.subtract(padded[i:i + h, j:j + w], center, out=idx)
            wgt = np.take(rng_signed, idx)
            wgt *= spatial[i, j]
            num += wgt * padded_f[i:i + h, j:j + w]
            den += wgt
    return round_to_u8(num / den)


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.int32)
SOBEL_Y = SOBEL_X.T.copy()


def sobel_magnitude(img):
    """Combined Sobel response ``min(255, (|Gx| + |Gy|) // 2)``."""
    img = _check_gray(img, min_size=3)
    h, w = img.shape
    p = np.pad(img.astype(np.int32), 1, mode="edge")
    gx = np.zeros((h, w), dtype=np.int32)
    gy = np.zeros((h, w), dtype=np.int32)
    for i in range(3):
        for j in range(3):
            nb = p[i:i + h, j:j + w]
            if SOBEL_X[i, j]:
                gx += SOBEL_X[i, j] * nb
            if SOBEL_Y[i, j]:
                gy += SOBEL_Y[i, j] * nb
    return np.minimum(255, (np.abs(gx) + np.abs(gy)) // 2).astype(np.uint8)


def threshold(img, t: float):
    """Foreground where intensity is strictly greater than ``t``."""
    img = _check_gray(img)
    return img > t


# ---------------------------------------------------------------------------
# Morphology
# ---------------------------------------------------------------------------


def _check_kernel(k):
    if k < 3 or k % 2 == 0:
        raise InvalidInputError("kernel side must be odd and >= 3")
    return k // 2


def _shift_reduce(mask, half, op):
    h, w = mask.shape
    padded = np.pad(mask, half, mode="constant", constant_values=False)
    out = None
    for i in range(2 * half + 1):
        for j in range(2 * half + 1):
            view = padded[i:i + h, j:j + w]
            out = view.copy() if out is None else op(out, view)
    return out


def dilate(img, kernel: int = 3, iterations: int = 1):
    """Binary dilation with a ``kernel`` x ``kernel`` square."""
    mask = _check_gray(img).astype(bool)
    half = _check_kernel(kernel)
    for _ in range(iterations):
        mask = _shift_reduce(mask, half, np.logical_or)
    return mask


def erode(img, kernel: int = 3, iterations: int = 1):
    """Binary erosion; pixels whose window leaves the image are removed."""
    mask = _check_gray(img).astype(bool)
    half = _check_kernel(kernel)
    for _ in range(iterations):
        mask = _shift_reduce(mask, half, np.logical_and)
    return mask


def morph_close(img, kernel: int = 3, iterations: int = 1):
    """``iterations`` dilations followed by as many erosions."""
    return erode(dilate(img, kernel, iterations), kernel, iterations)


# ---------------------------------------------------------------------------
# Components and moments
# ---------------------------------------------------------------------------

_EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(img):
    """8-connected labeling.

    Labels run 1..N in order of each component's first pixel in a row-major
    scan. Returns ``(labels, n)``.
    """
    mask = _check_gray(img).astype(bool)
    raw, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return raw.astype(np.int32), 0
    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids > 0
    ids, first = ids[keep], first[keep]
    order = ids[np.argsort(first, kind="stable")]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order] = np.arange(1, n + 1, dtype=np.int32)
    return remap[raw], int(n)


class Component(NamedTuple):
    mask: np.ndarray
    label: int
    size: int

    @property
    def empty(self) -> bool:
        return self.size == 0


def largest_component(labels) -> Component:
    """Mask of the largest labelled component; ties go to the smaller label.

    An all-background label map yields an empty mask with ``size == 0``.
    """
    labels = np.asarray(labels)
    counts = np.bincount(labels.ravel(), minlength=1)
    if len(counts) <= 1 or counts[1:].max() == 0:
        return Component(np.zeros(labels.shape, dtype=bool), 0, 0)
    best = int(np.argmax(counts[1:])) + 1
    return Component(labels == best, best, int(counts[best]))


@dataclass(frozen=True)
class Moments:
    m00: float
    m10: float
    m01: float
    m20: float
    m02: float
    m11: float
    mu20: float = field(default=0.0)
    mu02: float = field(default=0.0)
    mu11: float = field(default=0.0)

    @property
    def centroid(self) -> tuple[float, float]:
        if self.m00 <= 0:
            raise DegenerateError("centroid undefined for an empty shape")
        return self.m10 / self.m00, self.m01 / self.m00


def image_moments(img) -> Moments:
    """Raw and central second-order moments of a binary mask (x = column)."""
    mask = _check_gray(img).astype(bool)
    ys, xs = np.nonzero(mask)
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    m00 = float(len(xs))
    m10, m01 = float(xs.sum()), float(ys.sum())
    m20, m02, m11 = float((xs * xs).sum()), float((ys * ys).sum()), float((xs * ys).sum())
    if m00 == 0:
        return Moments(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    # central moments from centred coordinates avoid cancellation
    dx = xs - m10 / m00
    dy = ys - m01 / m00
    return Moments(m00, m10, m01, m20, m02, m11,
                   float((dx * dx).sum()), float((dy * dy).sum()), float((dx * dy).sum()))


class Orientation(NamedTuple):
    angle: float
    degenerate: bool


def orientation_from_moments(m: Moments, tol: float = 1e-9) -> Orientation:
    """Principal-axis angle ``0.5 atan2(2 mu11, mu20 - mu02)`` in [0, 180)."""
    if m.m00 <= 0:
        raise DegenerateError("orientation undefined for an empty shape")
    scale = max(abs(m.mu20), abs(m.mu02), 1.0)
    degenerate = abs(m.mu20 - m.mu02) <= tol * scale and abs(m.mu11) <= tol * scale
    theta = 0.5 * math.degrees(math.atan2(2.0 * m.mu11, m.mu20 - m.mu02))
    theta %= 180.0
    if theta >= 180.0:
        theta = 0.0
    return Orientation(theta, degenerate)


def rgb_to_hsv(img):
    """Hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = _check_color(img).astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.zeros_like(mx)
    hue = np.where(mx == r, ((g - b) / safe) % 6.0, hue)
    hue = np.where((mx == g) & (mx != r), (b - r) / safe + 2.0, hue)
    hue = np.where((mx == b) & (mx != r) & (mx != g), (r - g) / safe + 4.0, hue)
    hue = np.where(delta > 0, hue * 60.0, 0.0)
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, sat, mx


def hsv_mask(img, hue_lo: float, hue_hi: float, sat_min: float = 0.3, val_min: float = 0.2):
    """Pixels whose hue lies in ``[hue_lo, hue_hi]`` with saturation and value
    strictly above the given minima."""
    if not 0 <= hue_lo < hue_hi <= 360:
        raise InvalidInputError("need 0 <= hue_lo < hue_hi <= 360")
    hue, sat, val = rgb_to_hsv(img)
    return (hue >= hue_lo) & (hue <= hue_hi) & (sat > sat_min) & (val > val_min)
