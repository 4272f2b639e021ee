"""Color statistics and kernel density estimates for image batches.

Everything works on float pixels normalized to [0, 1].  Saturation uses
the hexcone HSV definition (s = (max - min) / max, zero on black), and
contrast is the population standard deviation of the BT.601 grayscale
projection 0.299 r + 0.587 g + 0.114 b; an image is treated as the full
population of its pixels.  PNG loading goes through OpenCV and supports
8-bit and 16-bit depths, RGB and RGBA (alpha ignored), and grayscale
files (expanded to three equal channels).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateBandwidthError

log = logging.getLogger("pglab")

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

_RANGE_SLACK = 1e-9

_trapezoid = getattr(np, "trapezoid", None) or getattr(np, "trapz")


@dataclass(frozen=True)
class ImageRGB:
    """Float RGB image, channel-last, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ContractError(
                f"pixels: expected (height, width, 3), got {px.shape}"
            )
        if px.shape[0] * px.shape[1] < 1:
            raise ContractError("pixels: image must contain at least one pixel")
        if px.min() < -_RANGE_SLACK or px.max() > 1 + _RANGE_SLACK:
            raise ContractError(
                f"pixels: values outside [0, 1] (min {px.min()!r}, max {px.max()!r})"
            )
        px = np.clip(px, 0.0, 1.0)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def rgb_to_hsv(rgb):
    """Hexcone HSV conversion; accepts (..., 3) arrays in [0, 1].

    Returns an array of the same shape with hue in [0, 1), saturation and
    value in [0, 1].  Black has zero saturation; achromatic pixels have
    hue 0.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ContractError(f"rgb: last axis must be 3, got {rgb.shape}")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    lo = rgb.min(axis=-1)
    chroma = v - lo
    safe_v = np.where(v > 0, v, 1.0)
    s = np.where(v > 0, chroma / safe_v, 0.0)
    safe_c = np.where(chroma > 0, chroma, 1.0)
    hue = np.zeros_like(v)
    is_r = (v == r) & (chroma > 0)
    is_g = (v == g) & (chroma > 0) & ~is_r
    is_b = (chroma > 0) & ~is_r & ~is_g
    hue = np.where(is_r, ((g - b) / safe_c) % 6.0, hue)
    hue = np.where(is_g, (b - r) / safe_c + 2.0, hue)
    hue = np.where(is_b, (r - g) / safe_c + 4.0, hue)
    return np.stack([hue / 6.0, s, v], axis=-1)


def mean_saturation(image: ImageRGB) -> float:
    """Arithmetic mean of per-pixel hexcone saturation."""
    hsv = rgb_to_hsv(image.pixels)
    return float(hsv[..., 1].mean())


def rms_contrast(image: ImageRGB) -> float:
    # population std: an image is the full population of its pixels
    gray = image.pixels @ GRAY_WEIGHTS
    return float(gray.std())


@dataclass(frozen=True)
class DensityEstimate:
    """KDE curve: grid abscissae, density values, bandwidth used."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def mass(self) -> float:
        """Trapezoidal integral of the density over the grid."""
        return float(_trapezoid(self.density, self.grid))


def silverman_bandwidth(values: np.ndarray) -> float:
    """1.06 * std * n^(-1/5), the classic normal-reference rule."""
    values = np.asarray(values, dtype=np.float64)
    # ptp catches constant data exactly; std alone can come out as a few
    # ulps when the mean of identical values rounds
    spread = float(np.std(values, ddof=1))
    if spread == 0 or float(np.ptp(values)) == 0:
        raise DegenerateBandwidthError(
            "all values identical; pass an explicit bandwidth"
        )
    return 1.06 * spread * len(values) ** (-1.0 / 5.0)


def kde(values, bandwidth: float | None = None, grid_size: int = 512) -> DensityEstimate:
    """Gaussian-kernel density estimate on a uniform grid.

    The grid spans [min - 5h, max + 5h] so the estimate decays to ~zero at
    the edges and its integral stays within 2% of one.  Without an
    explicit bandwidth Silverman's rule is applied; constant data then
    raises, since the rule degenerates to zero width.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(values) < 2:
        raise ContractError(f"kde: need at least 2 values, got {len(values)}")
    if grid_size < 16:
        raise ContractError(f"grid_size: must be >= 16, got {grid_size!r}")
    if not np.isfinite(values).all():
        raise ContractError("kde: non-finite values")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(values)
    elif not bandwidth > 0:
        raise ContractError(f"bandwidth: must be > 0, got {bandwidth!r}")
    grid = np.linspace(
        values.min() - 5.0 * bandwidth, values.max() + 5.0 * bandwidth, grid_size
    )
    density = np.zeros(grid_size)
    norm = 1.0 / (len(values) * bandwidth * np.sqrt(2.0 * np.pi))
    # block the sample axis to bound the (grid x samples) work matrix
    block = 8192
    for lo in range(0, len(values), block):
        u = (grid[:, None] - values[None, lo:lo + block]) / bandwidth
        density += np.exp(-0.5 * u * u).sum(axis=1)
    return DensityEstimate(grid=grid, density=density * norm, bandwidth=float(bandwidth))


def load_image(path) -> ImageRGB:
    """Read a PNG (8/16-bit; gray, RGB, or RGBA) into normalized floats."""
    import cv2

    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ContractError(f"unreadable image file: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ContractError(f"unsupported pixel depth {raw.dtype} in {path}")
    arr = raw.astype(np.float64) / scale
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr], axis=-1)
    elif arr.shape[2] == 4:
        arr = arr[:, :, :3]
    elif arr.shape[2] != 3:
        raise ContractError(f"unsupported channel count {arr.shape[2]} in {path}")
    # OpenCV loads channel order blue-green-red
    return ImageRGB(pixels=arr[:, :, ::-1])


@dataclass(frozen=True)
class ColorReport:
    """Batch color metrics: per-image rows and their aggregates."""

    rows: tuple
    mean_saturation: float
    mean_contrast: float
    skipped: int = 0


def batch_color_report(images, labels=None) -> ColorReport:
    """Average saturation and contrast across a batch of images.

    ``images`` is a nonempty sequence of ImageRGB; ``labels`` (optional)
    names each row in the per-image output.
    """
    images = list(images)
    if not images:
        raise ContractError("batch_color_report: empty image list")
    if labels is None:
        labels = [str(i) for i in range(len(images))]
    rows = []
    for label, img in zip(labels, images):
        rows.append((label, mean_saturation(img), rms_contrast(img)))
    sats = [r[1] for r in rows]
    cons = [r[2] for r in rows]
    return ColorReport(
        rows=tuple(rows),
        mean_saturation=float(np.mean(sats)),
        mean_contrast=float(np.mean(cons)),
    )


def report_from_paths(paths) -> ColorReport:
    """Load images from disk and report; unreadable files are skipped.

    Every skipped file is logged as a warning and counted in the report.
    """
    images, labels, skipped = [], [], 0
    for path in paths:
        try:
            images.append(load_image(path))
            labels.append(str(path))
        except ContractError as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped += 1
    if not images:
        raise ContractError("no readable images in the batch")
    report = batch_color_report(images, labels)
    return ColorReport(
        rows=report.rows,
        mean_saturation=report.mean_saturation,
        mean_contrast=report.mean_contrast,
        skipped=skipped,
    )
