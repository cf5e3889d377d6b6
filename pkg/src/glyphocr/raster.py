"""Binary image primitives: connected components, projection profiles,
rotation and glyph standardization.

Images are 2D numpy arrays of shape (height, width) with values in {0, 1},
where 1 is ink. Coordinates follow the usual image convention: x runs along
columns, y along rows, y increasing downwards. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "BoundingBox",
    "Component",
    "as_binary_image",
    "connected_components",
    "component_crop",
    "row_ink_marginal",
    "rotate_binary",
    "scale_to_square",
]


def as_binary_image(img) -> np.ndarray:
    """Validate and return ``img`` as a 2D uint8 array with values in {0, 1}."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"binary image must be 2D, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("binary image must be non-empty")
    if a.dtype == bool:
        return a.astype(np.uint8)
    if not np.isin(a, (0, 1)).all():
        raise ValueError("binary image values must be 0 or 1")
    return a.astype(np.uint8, copy=False)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, inclusive-exclusive: pixels with x0 <= x < x1, y0 <= y < y1."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate bounding box {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(
            min(self.x0, other.x0),
            min(self.y0, other.y0),
            max(self.x1, other.x1),
            max(self.y1, other.y1),
        )

    def x_overlap(self, other: "BoundingBox") -> int:
        return max(0, min(self.x1, other.x1) - max(self.x0, other.x0))


@dataclass
class Component:
    """One connected blob of ink. ``pixels`` is an (n, 2) array of (x, y) pairs."""

    id: int
    pixels: np.ndarray
    bbox: BoundingBox

    @property
    def ink_count(self) -> int:
        return len(self.pixels)

    @property
    def centroid_y(self) -> float:
        return float(self.pixels[:, 1].mean())


def _row_runs(row: np.ndarray):
    """Maximal runs of consecutive ink pixels in a row as (start, end) pairs."""
    padded = np.empty(len(row) + 2, dtype=np.int8)
    padded[0] = padded[-1] = 0
    padded[1:-1] = row
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    return starts, ends


class _UnionFind:
    def __init__(self):
        self.parent = []

    def make(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def connected_components(img, connectivity: int = 4) -> list[Component]:
    """Label connected ink components via union-find over row runs.

    Returns components sorted by (bbox.x0, bbox.y0, discovery order), ids
    renumbered to match the sorted order. A blank image yields [].
    """
    img = as_binary_image(img)
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    # 8-connectivity also joins runs that merely touch diagonally.
    slack = 0 if connectivity == 4 else 1

    uf = _UnionFind()
    runs = []  # (y, start, end, label)
    prev = []  # indices into runs for the previous row
    for y in range(img.shape[0]):
        starts, ends = _row_runs(img[y])
        cur = []
        pi = 0
        for s, e in zip(starts, ends):
            label = uf.make()
            idx = len(runs)
            runs.append((y, int(s), int(e), label))
            cur.append(idx)
            while pi < len(prev):
                _, ps, pe, plabel = runs[prev[pi]]
                if pe + slack <= s:
                    pi += 1
                    continue
                if ps - slack >= e:
                    break
                uf.union(label, plabel)
                if pe + slack <= e:
                    pi += 1
                else:
                    break
        prev = cur
    if not runs:
        return []

    grouped: dict[int, list[tuple[int, int, int]]] = {}
    order: list[int] = []
    for y, s, e, label in runs:
        root = uf.find(label)
        if root not in grouped:
            grouped[root] = []
            order.append(root)
        grouped[root].append((y, s, e))

    comps = []
    for ordinal, root in enumerate(order):
        segs = grouped[root]
        xs = np.concatenate([np.arange(s, e) for _, s, e in segs])
        ys = np.concatenate([np.full(e - s, y) for y, s, e in segs])
        pixels = np.column_stack([xs, ys]).astype(np.int64)
        bbox = BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
        comps.append(Component(id=ordinal, pixels=pixels, bbox=bbox))

    comps.sort(key=lambda c: (c.bbox.x0, c.bbox.y0, c.id))
    for i, c in enumerate(comps):
        c.id = i
    return comps


def component_crop(comp: Component) -> np.ndarray:
    """Tight binary crop holding only this component's ink."""
    b = comp.bbox
    crop = np.zeros((b.height, b.width), dtype=np.uint8)
    crop[comp.pixels[:, 1] - b.y0, comp.pixels[:, 0] - b.x0] = 1
    return crop


def row_ink_marginal(img) -> np.ndarray:
    """Per-row ink counts (the projection profile driving line detection)."""
    return as_binary_image(img).sum(axis=1, dtype=np.int64)


def rotate_binary(img, angle: float) -> np.ndarray:
    """Rotate about the image centre by ``angle`` degrees, nearest-neighbour.

    The canvas grows (symmetrically, preserving parity) so the rotated
    footprint of the source fits; background fills with 0. |angle| <= 45.
    """
    img = as_binary_image(img)
    if abs(angle) > 45:
        raise ValueError(f"|angle| must be <= 45, got {angle}")
    if angle == 0:
        return img.copy()
    h, w = img.shape
    rad = math.radians(angle)
    c, s = math.cos(rad), math.sin(rad)
    grow_w = max(0, math.ceil((w * abs(c) + h * abs(s) - w) / 2))
    grow_h = max(0, math.ceil((h * abs(c) + w * abs(s) - h) / 2))
    out_h, out_w = h + 2 * grow_h, w + 2 * grow_w

    ys, xs = np.mgrid[0:out_h, 0:out_w]
    dx = xs - (out_w - 1) / 2.0
    dy = ys - (out_h - 1) / 2.0
    # inverse map: rotate output coords by -angle back into the source frame
    sx = np.rint(c * dx + s * dy + (w - 1) / 2.0).astype(np.int64)
    sy = np.rint(-s * dx + c * dy + (h - 1) / 2.0).astype(np.int64)
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    out[valid] = img[sy[valid], sx[valid]]
    return out


def scale_to_square(crop, side: int = 48) -> np.ndarray:
    """Scale a glyph crop into a side x side frame, preserving aspect ratio.

    The longer dimension maps to ``side``; the shorter one is scaled by the
    same factor and centred; sampling is nearest-neighbour; padding is
    background. Raises DataError on an empty (ink-free) crop.
    """
    crop = as_binary_image(crop)
    if crop.sum() == 0:
        raise DataError("cannot standardize an empty glyph crop")
    h, w = crop.shape
    f = side / max(h, w)
    oh = max(1, round(h * f))
    ow = max(1, round(w * f))
    src_r = np.clip(np.rint((np.arange(oh) + 0.5) * (h / oh) - 0.5).astype(np.int64), 0, h - 1)
    src_c = np.clip(np.rint((np.arange(ow) + 0.5) * (w / ow) - 0.5).astype(np.int64), 0, w - 1)
    scaled = crop[np.ix_(src_r, src_c)]
    if scaled.sum() == 0:
        # pathological thin strokes can fall between sample points; forward-map
        # the ink so the output is never blank
        ys, xs = np.nonzero(crop)
        scaled = np.zeros((oh, ow), dtype=np.uint8)
        scaled[np.clip((ys * f).astype(np.int64), 0, oh - 1),
               np.clip((xs * f).astype(np.int64), 0, ow - 1)] = 1
    out = np.zeros((side, side), dtype=np.uint8)
    r0 = (side - oh) // 2
    c0 = (side - ow) // 2
    out[r0:r0 + oh, c0:c0 + ow] = scaled
    return out
