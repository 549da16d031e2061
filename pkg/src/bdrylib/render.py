"""Module containing the attribution heatmap renderer."""

from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from scipy.ndimage import gaussian_filter  # type: ignore

from bdrylib.logger import logger
from bdrylib.metrics import DPixelAttribution

if TYPE_CHECKING:
    from bdrylib.net import Tensor

# blur radius is given in pixels of a side of this size
REFERENCE_SIDE = 224
DEFAULT_BLUR = 10.0

Image = npt.NDArray[np.uint8]


def heatmap_values(
    values: npt.ArrayLike, blur: float = DEFAULT_BLUR
) -> "Tensor":
    """Get the normalized and blurred pixel map in [-1, 1].

    :param values: (H, W) or (C, H, W) attribution values
    :param blur: blur radius at the reference side, 0 disables blurring
    """
    pix = DPixelAttribution.from_values(values).values
    peak = float(np.max(np.abs(pix))) if pix.size else 0.0
    if peak > 0.0:
        pix = pix / peak
    if blur > 0.0:
        sigma = blur * max(pix.shape) / REFERENCE_SIDE
        pix = gaussian_filter(pix, sigma=sigma, mode="reflect")
    return np.clip(pix, -1.0, 1.0)


def colorize(heat: "Tensor") -> Image:
    """Map values in [-1, 1] to a red (positive) and blue (negative) scale.

    :param heat: normalized pixel map
    """
    pos = np.clip(heat, 0.0, 1.0)
    neg = np.clip(-heat, 0.0, 1.0)
    rgb = np.empty(heat.shape + (3,), dtype=np.float64)
    rgb[..., 0] = 128.0 * (1.0 - neg) + 127.0 * pos
    rgb[..., 1] = 128.0 * (1.0 - pos) * (1.0 - neg)
    rgb[..., 2] = 128.0 * (1.0 - pos) + 127.0 * neg
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def grayscale(heat: "Tensor") -> Image:
    """Map the magnitude of values in [-1, 1] to gray levels.

    :param heat: normalized pixel map
    """
    return np.clip(np.rint(255.0 * np.abs(heat)), 0, 255).astype(np.uint8)


def upscale(img: Image, scale: int) -> Image:
    """Upscale an image by pixel repetition.

    :param img: (H, W) or (H, W, 3) image
    :param scale: integer factor
    """
    assert scale >= 1
    out = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return out


def encode_pnm(img: Image) -> bytes:
    """Encode an image as binary PPM (RGB) or PGM (gray).

    :param img: (H, W, 3) or (H, W) image
    """
    magic = b"P6" if img.ndim == 3 else b"P5"
    height, width = img.shape[:2]
    hdr = magic + f"\n{width} {height}\n255\n".encode()
    return hdr + np.ascontiguousarray(img).tobytes()


def render_heatmap(
    values: npt.ArrayLike,
    path: str | Path,
    blur: float = DEFAULT_BLUR,
    scale: int = 1,
    gray: bool = False,
) -> Path:
    """Render an attribution map to a PPM or PGM file.

    :param values: (H, W) or (C, H, W) attribution values
    :param path: output path
    :param blur: blur radius at the reference side, 0 disables blurring
    :param scale: integer upscaling factor
    :param gray: write a grayscale magnitude map
    """
    heat = heatmap_values(values, blur)
    img = grayscale(heat) if gray else colorize(heat)
    path = Path(path)
    path.write_bytes(encode_pnm(upscale(img, scale)))
    logger.info("heatmap written to %s", path)
    return path
