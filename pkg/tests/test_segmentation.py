import dataclasses

import numpy as np
import pytest

from glyphocr import synth
from glyphocr.errors import NumericError
from glyphocr.raster import rotate_binary
from glyphocr.segmentation import (
    LineBand,
    deskew,
    detect_lines,
    estimate_line_pitch,
    extract_glyphs,
    segment_page,
    write_segmentation_debug,
)


@pytest.fixture(scope="module")
def alphabet():
    return synth.make_alphabet("desk16")


@pytest.fixture(scope="module")
def language():
    lang = synth.make_language(16, seed=1)
    return dataclasses.replace(lang, length_range=(9, 13))


def make_page(alphabet, language, n_lines, seed, **kw):
    lines = synth.gen_corpus(language, n_lines, seed=seed)
    return synth.gen_page(lines, alphabet, seed=seed + 7000, **kw)


class TestDeskew:
    def test_straight_page_recovers_zero(self, alphabet, language):
        page, _ = make_page(alphabet, language, 5, seed=31)
        angle, _ = deskew(page)
        assert abs(angle) <= 0.25

    def test_known_rotation_recovered(self, alphabet, language):
        page, _ = make_page(alphabet, language, 5, seed=32, skew=2.0)
        angle, corrected = deskew(page, angle_range=5.0, step=0.25)
        assert abs(angle - 2.0) <= 0.25
        # the corrected page should measure straight
        angle2, _ = deskew(corrected)
        assert abs(angle2) <= 0.25

    def test_blank_page(self):
        blank = np.zeros((64, 64), dtype=np.uint8)
        angle, out = deskew(blank)
        assert angle == 0.0
        assert np.array_equal(out, blank)

    @pytest.mark.parametrize("theta", [-4.0, -1.5, 3.5])
    def test_roundtrip_property(self, alphabet, language, theta):
        page, _ = make_page(alphabet, language, 4, seed=33)
        skewed = rotate_binary(page, theta)
        angle, _ = deskew(skewed)
        assert abs(angle - theta) <= 0.25

    def test_parameter_validation(self):
        img = np.ones((8, 8), dtype=np.uint8)
        with pytest.raises(ValueError):
            deskew(img, angle_range=11)
        with pytest.raises(ValueError):
            deskew(img, step=0)


class TestEstimateLinePitch:
    def test_pure_cosine(self):
        rows = np.arange(600)
        marginal = 100 + 50 * np.cos(2 * np.pi * rows / 60.0)
        assert estimate_line_pitch(marginal) == pytest.approx(60.0)

    def test_dominant_harmonic_wins(self):
        rows = np.arange(600)
        marginal = (100 + 10 * np.cos(2 * np.pi * rows / 60.0)
                    + 3 * np.cos(2 * np.pi * rows / 30.0))
        assert estimate_line_pitch(marginal) == pytest.approx(60.0)

    def test_constant_marginal_rejected(self):
        with pytest.raises(NumericError):
            estimate_line_pitch(np.full(100, 7.0))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            estimate_line_pitch(np.arange(5))

    def test_synthetic_page_within_ten_percent(self, alphabet, language):
        lines = synth.gen_corpus(language, 8, seed=35)
        layout = synth.PageLayout(pitch=52)
        page, truth = synth.gen_page(lines, alphabet, layout=layout, seed=36)
        sp = segment_page(page)
        assert 47 <= sp.pitch <= 57


class TestDetectLines:
    def test_three_line_page_baselines_within_two_rows(self, alphabet, language):
        page, truth = make_page(alphabet, language, 3, seed=37)
        sp = segment_page(page)
        assert len(sp.bands) == 3
        for band, tb in zip(sp.bands, truth.bands):
            assert abs(band.base_line - tb[2]) <= 2

    def test_single_line_page(self, alphabet, language):
        page, truth = make_page(alphabet, language, 1, seed=38)
        sp = segment_page(page)
        assert len(sp.bands) == 1

    def test_blank_marginal(self):
        assert detect_lines(np.zeros(300), pitch=50.0) == []

    def test_pitch_validation(self):
        with pytest.raises(ValueError):
            detect_lines(np.ones(100), pitch=2.0)

    def test_band_invariants(self, alphabet, language):
        page, _ = make_page(alphabet, language, 6, seed=39)
        sp = segment_page(page)
        for band in sp.bands:
            assert band.sep_top <= band.top_line < band.base_line <= band.sep_bottom
        for a, b in zip(sp.bands, sp.bands[1:]):
            assert a.sep_bottom <= b.sep_top + 1  # ordered, disjoint half-open

    def test_line_band_validation(self):
        with pytest.raises(ValueError):
            LineBand(10, 9, 20, 30)


class TestExtractGlyphs:
    def test_isolated_glyphs_in_reading_order(self, alphabet):
        tokens = [[2, 5, 0, 7, 9, 3, 11]]
        page, truth = synth.gen_page(tokens, alphabet, seed=40)
        sp = segment_page(page)
        assert len(sp.glyphs) == 7
        xs = [g.bbox.x0 for g in sp.glyphs]
        assert xs == sorted(xs)
        # correspondence is translation-invariant (deskew may regrow the
        # canvas): consecutive gaps must match the truth's gap structure
        truth_xs = [x0 for (_, _, x0, _, _, _, _) in truth.boxes]
        got_gaps = np.diff(xs)
        want_gaps = np.diff(truth_xs)
        assert np.abs(got_gaps - want_gaps).max() <= 3

    def test_below_baseline_glyph_has_positive_base_offset(self, alphabet):
        body_cls, below_cls = alphabet.twin_pairs[0]
        page, _ = synth.gen_page([[body_cls, below_cls, body_cls]], alphabet, seed=41)
        sp = segment_page(page)
        assert len(sp.glyphs) == 3
        assert sp.glyphs[1].base_offset > 0.1
        assert abs(sp.glyphs[0].base_offset) < 0.08

    def test_blank_bands_no_extracts(self):
        img = np.zeros((100, 100), dtype=np.uint8)
        band = LineBand(10, 20, 50, 60)
        assert extract_glyphs(img, [band], pitch=50.0) == []

    def test_no_bands_no_extracts(self, alphabet):
        page, _ = synth.gen_page([[1, 2]], alphabet, seed=42)
        assert extract_glyphs(page, [], pitch=50.0) == []

    def test_every_ink_pixel_extracted_or_subthreshold(self, alphabet, language):
        page, _ = make_page(alphabet, language, 4, seed=43)
        sp = segment_page(page)
        extracted_ink = sum(g.ink_count for g in sp.glyphs)
        assert extracted_ink == sp.corrected.sum()  # clean page: no noise lost

    def test_standardized_images_are_48x48_nonempty(self, alphabet, language):
        page, _ = make_page(alphabet, language, 3, seed=44)
        sp = segment_page(page)
        for g in sp.glyphs:
            assert g.image.shape == (48, 48)
            assert g.image.sum() > 0


class TestEndToEndIdentity:
    def test_clean_page_recovers_truth_exactly(self, alphabet, language):
        # generator and segmentation are independent implementations; at zero
        # noise they must agree on line count, glyph count and reading order
        page, truth = make_page(alphabet, language, 5, seed=45)
        sp = segment_page(page)
        assert len(sp.bands) == len(truth.lines)
        assert len(sp.glyphs) == truth.glyph_count
        per_band = [sum(1 for g in sp.glyphs if g.band is b) for b in sp.bands]
        assert per_band == [len(line) for line in truth.lines]

    def test_small_random_page_sweep(self, alphabet, language):
        rng = np.random.default_rng(12)
        ok_lines = 0
        trials = 12
        for t in range(trials):
            n = int(rng.integers(3, 9))
            skew = float(rng.uniform(-3, 3))
            page, truth = make_page(alphabet, language, n, seed=400 + t, skew=skew)
            sp = segment_page(page)
            angle_err = abs(sp.skew - skew)
            assert angle_err <= 0.25 + 1e-9
            if len(sp.bands) == len(truth.lines):
                ok_lines += 1
        assert ok_lines >= trials - 1


def test_debug_dump_files(tmp_path, alphabet, language):
    page, _ = make_page(alphabet, language, 3, seed=46)
    sp = segment_page(page)
    prefix = str(tmp_path / "dbg")
    write_segmentation_debug(prefix, sp)
    csv = (tmp_path / "dbg_marginal.csv").read_text().splitlines()
    assert csv[0] == "row,ink"
    assert len(csv) == len(sp.marginal) + 1
    from glyphocr.netpbm import read_pgm
    overlay = read_pgm(tmp_path / "dbg_lines.pgm")
    assert overlay.shape == sp.corrected.shape
    assert (overlay == 90).any()  # baseline rows marked
