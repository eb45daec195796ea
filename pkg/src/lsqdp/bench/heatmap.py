"""Heatmaps of released functions on a regular 2-d grid."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import write_csv


@dataclass(frozen=True, eq=False)
class HeatmapGrid:
    """Cell-center estimates; ``values[r, c]`` sits at
    ``(x0 + (c + 0.5) * cell_w, y0 + (r + 0.5) * cell_h)``, so rows ascend in y."""

    width: int
    height: int
    origin: tuple[float, float]
    cell_size: tuple[float, float]
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if vals.shape != (self.height, self.width):
            raise ValueError(f"values shape {vals.shape} does not match {self.height}x{self.width}")
        if not (self.cell_size[0] > 0 and self.cell_size[1] > 0):
            raise ValueError("cell size must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def centers(self) -> np.ndarray:
        return grid_centers(self.width, self.height, self.origin, self.cell_size)


def grid_centers(width, height, origin, cell_size) -> np.ndarray:
    """``(height * width, 2)`` cell centers, row-major with rows ascending in y."""
    cx = origin[0] + (np.arange(width) + 0.5) * cell_size[0]
    cy = origin[1] + (np.arange(height) + 0.5) * cell_size[1]
    gx, gy = np.meshgrid(cx, cy)
    return np.column_stack([gx.ravel(), gy.ravel()])


def parse_grid(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"grid must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise ValueError("grid dimensions must be positive")
    return w, h


def parse_bbox(text: str) -> tuple[float, float, float, float]:
    try:
        x0, y0, x1, y1 = (float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"bbox must look like x0,y0,x1,y1, got {text!r}") from None
    if not (x1 > x0 and y1 > y0):
        raise ValueError("bbox needs x1 > x0 and y1 > y0")
    return x0, y0, x1, y1


def emit_heatmap(estimate: Callable[[np.ndarray], np.ndarray], dim: int, width: int, height: int, bbox) -> HeatmapGrid:
    """Evaluate ``estimate`` at every cell center of the grid over ``bbox``."""
    if dim != 2:
        raise ValueError(f"heatmaps need a 2-d release, got d={dim}")
    x0, y0, x1, y1 = bbox
    cell = ((x1 - x0) / width, (y1 - y0) / height)
    P = grid_centers(width, height, (x0, y0), cell)
    vals = np.asarray(estimate(P), dtype=np.float64).reshape(height, width)
    return HeatmapGrid(width, height, (x0, y0), cell, vals)


def to_gray(values: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a constant map becomes mid-gray."""
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, values: np.ndarray) -> None:
    """Binary PGM (P5) with the highest row of ``values`` at the top."""
    img = to_gray(values)[::-1]
    h, w = img.shape
    with Path(path).open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError("only 8-bit binary PGM is supported")
    w, h = int(tokens[1]), int(tokens[2])
    # exactly one whitespace byte separates the header from the pixels
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1).reshape(h, w)


def write_heatmap(grid: HeatmapGrid, prefix) -> tuple[Path, Path]:
    """Write ``prefix.csv`` (rows ascending in y) and ``prefix.pgm``."""
    prefix = str(prefix)
    csv_path, pgm_path = Path(prefix + ".csv"), Path(prefix + ".pgm")
    write_csv(csv_path, None, [[repr(float(v)) for v in row] for row in grid.values])
    write_pgm(pgm_path, grid.values)
    return csv_path, pgm_path
