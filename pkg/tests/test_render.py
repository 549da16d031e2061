import numpy as np
import pytest  # type: ignore

from bdrylib.render import (
    colorize,
    encode_pnm,
    grayscale,
    heatmap_values,
    render_heatmap,
    upscale,
)


def test_render_values():
    heat = heatmap_values([[2.0, -1.0], [0.0, 0.0]], blur=0.0)
    assert np.array_equal(heat, [[1.0, -0.5], [0.0, 0.0]])

    zero = heatmap_values(np.zeros((3, 3)), blur=0.0)
    assert np.array_equal(zero, np.zeros((3, 3)))

    # channels are summed first
    heat = heatmap_values(np.ones((3, 2, 2)), blur=0.0)
    assert np.array_equal(heat, np.ones((2, 2)))

    vals = np.zeros((16, 16))
    vals[8, 8] = 5.0
    blurred = heatmap_values(vals)
    assert blurred.shape == (16, 16)
    assert np.all(np.abs(blurred) <= 1.0)
    assert 0.0 < blurred[8, 8] < 1.0
    assert blurred[8, 9] > 0.0


def test_render_colors():
    heat = np.array([[1.0, -1.0, 0.0]])
    rgb = colorize(heat)
    assert rgb.dtype == np.uint8
    assert rgb.shape == (1, 3, 3)
    assert rgb[0, 0].tolist() == [255, 0, 0]
    assert rgb[0, 1].tolist() == [0, 0, 255]
    assert rgb[0, 2].tolist() == [128, 128, 128]

    gray = grayscale(np.array([[1.0, -0.5, 0.0]]))
    assert gray.tolist() == [[255, 128, 0]]


def test_render_upscale():
    img = np.array([[1, 2]], dtype=np.uint8)
    assert upscale(img, 2).tolist() == [[1, 1, 2, 2], [1, 1, 2, 2]]
    assert upscale(img, 1).tolist() == img.tolist()

    with pytest.raises(AssertionError):
        upscale(img, 0)


def test_render_pnm(tmp_path):
    gray = np.array([[0, 255], [7, 9]], dtype=np.uint8)
    assert encode_pnm(gray) == b"P5\n2 2\n255\n\x00\xff\x07\x09"

    path = render_heatmap(np.eye(4), tmp_path / "map.ppm", scale=3)
    data = path.read_bytes()
    hdr = b"P6\n12 12\n255\n"
    assert data.startswith(hdr)
    assert len(data) == len(hdr) + 12 * 12 * 3

    path = render_heatmap(np.eye(4), tmp_path / "map.pgm", gray=True)
    assert path.read_bytes().startswith(b"P5\n4 4\n255\n")
