"""Synthetic glyph alphabet, language and page generator.

Stands in for a font-rendering pipeline: each class is a deterministic
stroke recipe on the unit square, rendered with per-style jitter (scale,
aspect, slant, stroke width). Pages compose rendered glyphs onto baselines
with known ground truth, optional global skew, and ink-erasure cuts that
break glyphs into pieces. A ground-truth trigram language generates text so
the decoder has something learnable to lean on.

The generator deliberately shares nothing with the segmentation module
beyond the raster primitives, so it can serve as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .raster import connected_components, rotate_binary, scale_to_square

__all__ = [
    "AlphabetSpec",
    "GlyphDataset",
    "LanguageSpec",
    "PageLayout",
    "PageTruth",
    "make_alphabet",
    "render_glyph",
    "canonical_glyph",
    "gen_training_set",
    "split_indices",
    "save_dataset",
    "load_dataset",
    "make_language",
    "gen_corpus",
    "save_corpus",
    "load_corpus",
    "token_for",
    "save_token_map",
    "load_token_map",
    "gen_page",
    "save_page_truth",
    "load_page_truth",
]

# Stroke programs live on the unit square, x right, y down. Arcs are in
# degrees with 0 pointing right and 90 pointing down (screen convention).
# Long horizontal bars are deliberately absent: like the script this stands
# in for, row-ink mass should come from round and slanted forms, otherwise
# bar rows drown the baseline signal in the projection profile.
_SHAPES = [
    [("arc", 0.5, 0.5, 0.40, 0, 360)],                                     # ring
    [("line", 0.12, 0.1, 0.12, 0.55), ("line", 0.88, 0.1, 0.88, 0.55),
     ("arc", 0.5, 0.55, 0.38, 0, 180)],                                    # cup
    [("line", 0.12, 0.9, 0.12, 0.45), ("line", 0.88, 0.9, 0.88, 0.45),
     ("arc", 0.5, 0.45, 0.38, 180, 360)],                                  # arch
    [("line", 0.12, 0.1, 0.12, 0.9), ("line", 0.12, 0.1, 0.88, 0.9),
     ("line", 0.88, 0.1, 0.88, 0.9)],                                      # en
    [("arc", 0.5, 0.28, 0.22, 90, 315), ("arc", 0.5, 0.72, 0.22, 270, 495)],  # ess
    [("line", 0.1, 0.1, 0.5, 0.5), ("line", 0.9, 0.1, 0.5, 0.5),
     ("line", 0.5, 0.5, 0.5, 0.9)],                                        # wye
    [("line", 0.7, 0.1, 0.7, 0.6), ("arc", 0.41, 0.6, 0.29, 0, 120)],      # jay
    [("line", 0.1, 0.1, 0.9, 0.9), ("line", 0.9, 0.1, 0.1, 0.9)],          # cross
    [("line", 0.15, 0.1, 0.15, 0.9), ("line", 0.8, 0.1, 0.15, 0.55),
     ("line", 0.35, 0.42, 0.8, 0.9)],                                      # kay
    [("line", 0.2, 0.1, 0.2, 0.9), ("arc", 0.5, 0.4, 0.3, 180, 300)],      # arr
    [("line", 0.1, 0.5, 0.35, 0.2), ("line", 0.35, 0.2, 0.6, 0.8),
     ("line", 0.6, 0.8, 0.9, 0.4)],                                        # bolt
    [("line", 0.08, 0.1, 0.3, 0.9), ("line", 0.3, 0.9, 0.5, 0.35),
     ("line", 0.5, 0.35, 0.7, 0.9), ("line", 0.7, 0.9, 0.92, 0.1)],        # dub
    [("line", 0.15, 0.1, 0.85, 0.9), ("line", 0.5, 0.5, 0.15, 0.9)],       # lambda
    [("line", 0.1, 0.1, 0.5, 0.9), ("line", 0.5, 0.9, 0.9, 0.1)],          # vee
]


@dataclass
class AlphabetSpec:
    """Parametric synthetic alphabet: per-class stroke recipe and placement."""

    num_classes: int
    programs: list
    placements: list          # per class: "body" or "below"
    twin_pairs: list          # [(body_class, below_class), ...] sharing a shape
    body_height: int = 36     # canonical rendered glyph height in pixels
    stroke_width: int = 3
    scale_jitter: tuple = (0.88, 1.12)
    aspect_jitter: tuple = (0.85, 1.15)
    slant_jitter: tuple = (-0.18, 0.18)
    width_jitter: tuple = (2, 4)  # inclusive stroke-width range
    styles_per_class: int = 160


def make_alphabet(preset: str = "desk16") -> AlphabetSpec:
    """Build a named alphabet preset.

    "desk16": 14 distinct shapes; classes 12..15 form two twin pairs that
    share a shape with a body/below-baseline placement split, so location
    is the only separating signal. "large64" extends with procedurally
    generated stroke recipes.
    """
    if preset == "desk16":
        k = 16
        programs = [_SHAPES[i] for i in range(12)]
        programs += [_SHAPES[12], _SHAPES[12], _SHAPES[13], _SHAPES[13]]
        placements = ["body"] * 12 + ["body", "below", "body", "below"]
        twins = [(12, 13), (14, 15)]
    elif preset == "large64":
        k = 64
        programs = [_SHAPES[i] for i in range(12)]
        programs += _procedural_programs(12, 48, seed=2024)
        programs += [_SHAPES[12], _SHAPES[12], _SHAPES[13], _SHAPES[13]]
        placements = ["body"] * 60 + ["body", "below", "body", "below"]
        twins = [(60, 61), (62, 63)]
    else:
        raise DataError(f"unknown alphabet preset {preset!r}")
    return AlphabetSpec(num_classes=k, programs=programs,
                        placements=placements, twin_pairs=twins)


def _procedural_programs(existing_count, n, seed):
    """Generate ``n`` extra stroke recipes, rejecting look-alikes."""
    rng = np.random.default_rng(seed)
    grid = [0.1, 0.37, 0.63, 0.9]
    accepted = []
    rendered = [_render_program(p, 36, 36, 3, 0.0) for p in _SHAPES]
    while len(accepted) < n:
        n_strokes = int(rng.integers(2, 5))
        prog = []
        for _ in range(n_strokes):
            if rng.random() < 0.25:
                cx, cy = rng.choice(grid[1:3]), rng.choice(grid[1:3])
                a0 = float(rng.choice([0, 90, 180, 270]))
                prog.append(("arc", float(cx), float(cy), 0.3, a0, a0 + 180))
            else:
                x0, y0, x1, y1 = (float(rng.choice(grid)) for _ in range(4))
                if (x0, y0) == (x1, y1):
                    continue
                if y0 == y1 and abs(x1 - x0) > 0.3:
                    continue  # long horizontal bars distort the row marginal
                prog.append(("line", x0, y0, x1, y1))
        if not prog:
            continue
        img = _render_program(prog, 36, 36, 3, 0.0)
        if img.sum() < 60 or img.shape[1] < 12:
            continue
        if len(connected_components(img, 4)) != 1:
            continue
        if all(_pixel_difference(img, other) >= 0.05 for other in rendered):
            accepted.append(prog)
            rendered.append(img)
    return accepted


def _pixel_difference(a, b):
    """Fraction of the 48x48 frame where two standardized glyphs disagree."""
    sa = scale_to_square(a, 48).astype(np.int16)
    sb = scale_to_square(b, 48).astype(np.int16)
    return float(np.abs(sa - sb).mean())


def _bresenham(x0, y0, x1, y1):
    """Integer line pixels from (x0, y0) to (x1, y1), inclusive."""
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return pts


def _arc_points(cx, cy, r, deg0, deg1):
    """Unit-space sample points along an arc, fine enough to chain with lines."""
    span = deg1 - deg0
    steps = max(8, int(abs(span)))
    angles = np.radians(np.linspace(deg0, deg1, steps + 1))
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]


def _render_program(program, height, width, stroke_width, slant):
    """Rasterize a stroke recipe; returns the tight binary crop.

    Arcs are sampled parametrically in program space so junctions with line
    strokes stay exact under anisotropic scaling, then chained with
    Bresenham segments; the brush is a stroke_width square, keeping every
    stroke 4-connected.
    """
    m = stroke_width + 1
    h, w = height + 2 * m, width + 2 * m + int(abs(slant) * height) + 1
    canvas = np.zeros((h, w), dtype=np.uint8)
    xoff = int(abs(slant) * height) if slant < 0 else 0

    def to_px(x, y):
        px = m + xoff + x * (width - 1) + slant * (height - 1) * (1 - y)
        py = m + y * (height - 1)
        return int(round(px)), int(round(py))

    path = []
    for stroke in program:
        if stroke[0] == "line":
            _, x0, y0, x1, y1 = stroke
            path.extend(_bresenham(*to_px(x0, y0), *to_px(x1, y1)))
        elif stroke[0] == "arc":
            _, cx, cy, r, a0, a1 = stroke
            samples = [to_px(x, y) for x, y in _arc_points(cx, cy, r, a0, a1)]
            for p, q in zip(samples, samples[1:]):
                path.extend(_bresenham(*p, *q))
        else:
            raise ValueError(f"unknown stroke kind {stroke[0]!r}")

    lo = -(stroke_width // 2)
    offs = [(dx, dy) for dx in range(lo, lo + stroke_width)
            for dy in range(lo, lo + stroke_width)]
    xs = np.array([p[0] for p in path])
    ys = np.array([p[1] for p in path])
    for dx, dy in offs:
        canvas[np.clip(ys + dy, 0, h - 1), np.clip(xs + dx, 0, w - 1)] = 1

    rows = np.flatnonzero(canvas.any(axis=1))
    cols = np.flatnonzero(canvas.any(axis=0))
    return canvas[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


def render_glyph(alphabet: AlphabetSpec, cls: int, style_seed=None) -> np.ndarray:
    """Render one glyph crop; deterministic per (class, style_seed).

    style_seed None renders the canonical (jitter-free) glyph.
    """
    if not 0 <= cls < alphabet.num_classes:
        raise DataError(f"class {cls} outside alphabet of {alphabet.num_classes}")
    if style_seed is None:
        return _render_program(alphabet.programs[cls], alphabet.body_height,
                               alphabet.body_height, alphabet.stroke_width, 0.0)
    rng = np.random.default_rng([int(style_seed), cls, 917])
    scale = rng.uniform(*alphabet.scale_jitter)
    aspect = rng.uniform(*alphabet.aspect_jitter)
    slant = rng.uniform(*alphabet.slant_jitter)
    width = int(rng.integers(alphabet.width_jitter[0], alphabet.width_jitter[1] + 1))
    h = max(8, int(round(alphabet.body_height * scale)))
    w = max(8, int(round(alphabet.body_height * scale * aspect)))
    return _render_program(alphabet.programs[cls], h, w, width, slant)


def canonical_glyph(alphabet: AlphabetSpec, cls: int) -> np.ndarray:
    return render_glyph(alphabet, cls, None)


# canonical band used to synthesize location features for training glyphs;
# gen_page uses the same geometry so the two distributions agree
_CANONICAL_PITCH = 64
_BELOW_SHIFT_FRAC = 0.35  # twin "below" classes shift down by this * body height


def _placement_rows(alphabet, cls, glyph_height, base_row, jitter=0):
    """(top_row, bottom_row) of a glyph placed on a baseline at base_row."""
    if alphabet.placements[cls] == "body":
        bottom = base_row + jitter
    else:
        bottom = base_row + int(round(_BELOW_SHIFT_FRAC * alphabet.body_height)) + jitter
    return bottom - glyph_height + 1, bottom


@dataclass
class GlyphDataset:
    images: np.ndarray    # (n, 48, 48) uint8
    labels: np.ndarray    # (n,) int64
    offsets: np.ndarray   # (n, 2) float64: top_offset, base_offset

    def __len__(self):
        return len(self.labels)


def gen_training_set(alphabet: AlphabetSpec, styles_per_class=None, seed=0) -> GlyphDataset:
    """Balanced labelled dataset: exactly styles_per_class renderings per class.

    Location features are synthesized against the canonical band the page
    generator also uses, with the same small placement jitter.
    """
    spc = styles_per_class or alphabet.styles_per_class
    rng = np.random.default_rng([seed, 40427])
    images, labels, offsets = [], [], []
    pitch = _CANONICAL_PITCH
    top_line, base_line = 0, alphabet.body_height - 1
    for cls in range(alphabet.num_classes):
        for j in range(spc):
            crop = render_glyph(alphabet, cls, style_seed=seed * 1_000_003 + j)
            jit = int(rng.integers(-1, 2))
            top, bottom = _placement_rows(alphabet, cls, crop.shape[0], base_line, jit)
            images.append(scale_to_square(crop, 48))
            labels.append(cls)
            offsets.append(((top - top_line) / pitch, (bottom - base_line) / pitch))
    return GlyphDataset(np.stack(images), np.array(labels, dtype=np.int64),
                        np.array(offsets, dtype=np.float64))


def split_indices(labels, fractions=(0.8, 0.1, 0.1), seed=0):
    """Deterministic per-class train/valid/test index split."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    rng = np.random.default_rng([seed, 71993])
    labels = np.asarray(labels)
    train, valid, test = [], [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(fractions[0] * len(idx)))
        n_valid = int(round(fractions[1] * len(idx)))
        train.append(idx[:n_train])
        valid.append(idx[n_train:n_train + n_valid])
        test.append(idx[n_train + n_valid:])
    return (np.sort(np.concatenate(train)),
            np.sort(np.concatenate(valid)),
            np.sort(np.concatenate(test)))


def save_dataset(ds: GlyphDataset, outdir):
    """labels.tsv (file, class, top_offset, base_offset) + glyphs/*.pbm."""
    from . import netpbm
    import os

    gdir = os.path.join(outdir, "glyphs")
    os.makedirs(gdir, exist_ok=True)
    with open(os.path.join(outdir, "labels.tsv"), "w", encoding="utf-8") as fh:
        fh.write("file\tclass\ttop_offset\tbase_offset\n")
        for i in range(len(ds)):
            name = f"glyphs/g{i:06d}.pbm"
            netpbm.write_pbm(os.path.join(outdir, name), ds.images[i])
            fh.write(f"{name}\t{ds.labels[i]}\t{float(ds.offsets[i, 0])!r}\t{float(ds.offsets[i, 1])!r}\n")


def load_dataset(indir) -> GlyphDataset:
    from . import netpbm
    import os

    path = os.path.join(indir, "labels.tsv")
    if not os.path.exists(path):
        raise DataError(f"no labels.tsv under {indir}")
    images, labels, offsets = [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("file\t"):
            raise DataError("labels.tsv missing header")
        for line in fh:
            name, cls, top, base = line.rstrip("\n").split("\t")
            images.append(netpbm.read_pbm(os.path.join(indir, name)))
            labels.append(int(cls))
            offsets.append((float(top), float(base)))
    if not images:
        raise DataError(f"empty dataset under {indir}")
    return GlyphDataset(np.stack(images), np.array(labels, dtype=np.int64),
                        np.array(offsets, dtype=np.float64))


@dataclass
class LanguageSpec:
    """Ground-truth trigram over the alphabet; index K acts as BOS."""

    num_classes: int
    conditionals: np.ndarray  # (K+1, K+1, K): P(c | a, b), a/b may be BOS=K
    length_range: tuple = (6, 14)

    def conditional(self, a: int, b: int) -> np.ndarray:
        return self.conditionals[a, b]


def make_language(num_classes: int, seed=0, concentration=1.2, uniform_mix=0.25) -> LanguageSpec:
    """Random ergodic trigram: per-context softmax logits mixed with uniform."""
    rng = np.random.default_rng([seed, 60913])
    k = num_classes
    logits = rng.normal(0.0, concentration, size=(k + 1, k + 1, k))
    probs = np.exp(logits - logits.max(axis=2, keepdims=True))
    probs /= probs.sum(axis=2, keepdims=True)
    probs = (1 - uniform_mix) * probs + uniform_mix / k
    return LanguageSpec(num_classes=k, conditionals=probs)


def gen_corpus(lang: LanguageSpec, n_sentences: int, seed=0) -> list:
    """Sample sentences (lists of class ids) from the ground-truth trigram."""
    rng = np.random.default_rng([seed, 14009])
    k = lang.num_classes
    bos = k
    lo, hi = lang.length_range
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(lo, hi + 1))
        a, b = bos, bos
        sent = []
        for _ in range(length):
            c = int(rng.choice(k, p=lang.conditionals[a, b]))
            sent.append(c)
            a, b = b, c
        sentences.append(sent)
    return sentences


def token_for(cls: int) -> str:
    return f"g{cls:02d}"


def save_corpus(path, sentences):
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            fh.write(" ".join(token_for(c) for c in sent) + "\n")


def load_corpus(path, token_map=None) -> list:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if not toks:
                continue
            if token_map is not None:
                try:
                    sentences.append([token_map[t] for t in toks])
                except KeyError as e:
                    raise DataError(f"corpus token {e} missing from token map") from None
            else:
                sentences.append([int(t.lstrip("g")) for t in toks])
    return sentences


def save_token_map(path, num_classes):
    with open(path, "w", encoding="utf-8") as fh:
        for c in range(num_classes):
            fh.write(f"{token_for(c)}\t{c}\n")


def load_token_map(path) -> dict:
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tok, idx = line.split("\t")
            mapping[tok] = int(idx)
    if not mapping:
        raise DataError(f"empty token map {path}")
    return mapping


@dataclass
class PageLayout:
    pitch: int = _CANONICAL_PITCH
    margin: int = 48
    gap_range: tuple = (6, 14)   # horizontal pixels between glyph boxes


@dataclass
class PageTruth:
    """Everything the generator knows about a rendered page."""

    width: int
    height: int
    skew: float
    pitch: int
    lines: list                  # list[list[int]] class ids per line
    bands: list                  # per line: (sep_top, top_line, base_line, sep_bottom)
    boxes: list = field(default_factory=list)   # (line, j, x0, y0, x1, y1, cls)
    cuts: list = field(default_factory=list)    # (line, j, col, width, split_ok)

    @property
    def glyph_count(self) -> int:
        return sum(len(line) for line in self.lines)

    @property
    def tokens(self) -> list:
        return [list(line) for line in self.lines]


def _try_cut(page, x0, y0, x1, y1, rng, max_tries=10):
    """Erase a 1-2 px full-height column band; verify the glyph splits."""
    for _ in range(max_tries):
        wband = int(rng.integers(1, 3))
        col = int(rng.integers(x0 + 2, max(x0 + 3, x1 - 1 - wband)))
        saved = page[y0:y1, col:col + wband].copy()
        if saved.sum() == 0:
            continue
        page[y0:y1, col:col + wband] = 0
        pieces = connected_components(page[y0:y1, x0:x1], 4)
        if len(pieces) >= 2 and all(p.ink_count >= 3 for p in pieces):
            return col, wband, True
        page[y0:y1, col:col + wband] = saved
    return -1, 0, False


def gen_page(lines_tokens, alphabet: AlphabetSpec, layout: PageLayout = None,
             skew: float = 0.0, erasure_rate: float = 0.0, seed=0):
    """Compose text lines into a page image plus ground truth.

    erasure_rate is the fraction of glyphs that get a vertical erasure band
    cut through their ink (guaranteed to split them under 4-connectivity,
    with up to 10 retries, else recorded as un-split).
    """
    if not 0.0 <= erasure_rate <= 0.5:
        raise DataError("erasure_rate must be in [0, 0.5]")
    layout = layout or PageLayout()
    rng = np.random.default_rng([seed, 88811])
    pitch, margin = layout.pitch, layout.margin
    hb = alphabet.body_height

    rendered = []  # per line: list of (cls, crop)
    for line in lines_tokens:
        row = []
        for cls in line:
            crop = render_glyph(alphabet, cls, style_seed=int(rng.integers(0, 2**31)))
            row.append((cls, crop))
        rendered.append(row)

    widths = []
    for row in rendered:
        w = sum(c.shape[1] for _, c in row)
        w += sum(int(rng.integers(*layout.gap_range)) for _ in row)
        widths.append(w)
    page_w = 2 * margin + (max(widths) if widths else 0)
    page_h = 2 * margin + len(rendered) * pitch
    page = np.zeros((page_h, page_w), dtype=np.uint8)

    truth = PageTruth(width=page_w, height=page_h, skew=skew, pitch=pitch,
                      lines=[[cls for cls, _ in row] for row in rendered], bands=[])
    rng2 = np.random.default_rng([seed, 55501])
    for i, row in enumerate(rendered):
        base = margin + hb + i * pitch
        top_line = base - hb + 1
        sep_top = top_line - (pitch - hb) // 2
        truth.bands.append((sep_top, top_line, base, sep_top + pitch))
        x = margin
        for j, (cls, crop) in enumerate(row):
            gh, gw = crop.shape
            jit = int(rng2.integers(-1, 2))
            top, bottom = _placement_rows(alphabet, cls, gh, base, jit)
            page[top:top + gh, x:x + gw] |= crop
            truth.boxes.append((i, j, x, top, x + gw, top + gh, cls))
            x += gw + int(rng2.integers(*layout.gap_range))

    if erasure_rate > 0:
        for (i, j, x0, y0, x1, y1, cls) in truth.boxes:
            if rng2.random() < erasure_rate:
                col, wband, ok = _try_cut(page, x0, y0, x1, y1, rng2)
                truth.cuts.append((i, j, col, wband, ok))

    if skew != 0.0:
        page = rotate_binary(page, skew)
    return page, truth


def save_page_truth(path, truth: PageTruth):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"page {truth.width} {truth.height} skew {float(truth.skew)!r} pitch {truth.pitch}\n")
        for (st, tl, bl, sb), line in zip(truth.bands, truth.lines):
            fh.write(f"band {st} {tl} {bl} {sb}\n")
            fh.write("line " + " ".join(token_for(c) for c in line) + "\n")
        for (i, j, x0, y0, x1, y1, cls) in truth.boxes:
            fh.write(f"box {i} {j} {x0} {y0} {x1} {y1} {cls}\n")
        for (i, j, col, wband, ok) in truth.cuts:
            fh.write(f"cut {i} {j} {col} {wband} {int(ok)}\n")


def load_page_truth(path) -> PageTruth:
    truth = None
    bands, lines, boxes, cuts = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "page":
                truth = PageTruth(width=int(parts[1]), height=int(parts[2]),
                                  skew=float(parts[4]), pitch=int(parts[6]),
                                  lines=lines, bands=bands, boxes=boxes, cuts=cuts)
            elif parts[0] == "band":
                bands.append(tuple(int(v) for v in parts[1:5]))
            elif parts[0] == "line":
                lines.append([int(t.lstrip("g")) for t in parts[1:]])
            elif parts[0] == "box":
                boxes.append(tuple(int(v) for v in parts[1:]))
            elif parts[0] == "cut":
                i, j, col, wband, ok = (int(v) for v in parts[1:])
                cuts.append((i, j, col, wband, bool(ok)))
            else:
                raise DataError(f"bad truth line {raw!r}")
    if truth is None:
        raise DataError(f"no page header in {path}")
    return truth
