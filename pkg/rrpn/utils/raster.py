"""
Overlay rendering to binary PPM (P6).

Boxes are drawn as 1-pixel rectangle outlines on an RGB uint8 array.
Coordinates are rounded to pixels only here.
"""

import re
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

GT_COLOR = (0, 255, 0)
PROPOSAL_COLOR = (255, 0, 0)
BACKGROUND_COLOR = (0, 0, 0)

Color = Tuple[int, int, int]


def blank_image(width: int, height: int, color: Color = BACKGROUND_COLOR) -> np.ndarray:
    return np.full((height, width, 3), color, dtype=np.uint8)


def draw_box(image: np.ndarray, box: Sequence[float], color: Color):
    """Draw the outline of [x1, y1, x2, y2]; edges outside the image are skipped."""
    height, width = image.shape[:2]
    x1, y1 = int(round(box[0])), int(round(box[1]))
    x2, y2 = int(round(box[2])) - 1, int(round(box[3])) - 1
    if x2 < x1 or y2 < y1:
        return

    cx1, cx2 = max(x1, 0), min(x2, width - 1)
    cy1, cy2 = max(y1, 0), min(y2, height - 1)
    if cx2 < cx1 or cy2 < cy1:
        return

    if 0 <= y1 < height:
        image[y1, cx1:cx2 + 1] = color
    if 0 <= y2 < height:
        image[y2, cx1:cx2 + 1] = color
    if 0 <= x1 < width:
        image[cy1:cy2 + 1, x1] = color
    if 0 <= x2 < width:
        image[cy1:cy2 + 1, x2] = color


def render_overlay(
    image: np.ndarray,
    gt_boxes: Iterable[Sequence[float]],
    proposal_boxes: Iterable[Sequence[float]]
) -> np.ndarray:
    """Proposals first, ground truth on top. Returns a new array."""
    out = image.copy()
    for box in proposal_boxes:
        draw_box(out, box, PROPOSAL_COLOR)
    for box in gt_boxes:
        draw_box(out, box, GT_COLOR)
    return out


def write_ppm(image: np.ndarray, path: Union[str, Path]):
    height, width = image.shape[:2]
    with open(path, 'wb') as f:
        f.write(f"P6\n{width} {height}\n255\n".encode('ascii'))
        f.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit binary PPM."""
    data = Path(path).read_bytes()
    header = re.match(rb"P6(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s", data)
    if header is None:
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = (int(g) for g in header.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=header.end())
    return pixels.reshape(height, width, 3).copy()
