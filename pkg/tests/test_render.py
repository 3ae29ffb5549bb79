import numpy as np
import pytest

from paperecg.errors import ValidationError
from paperecg.render import (
    DEFAULT_LEAD_ORDER,
    DegradationSpec,
    PaperLayout,
    RasterImage,
    load_image,
    mm_to_px,
    plan_panels,
    render,
    render_scene,
    save_png,
)
from tests.conftest import flat_record


def test_page_dimensions():
    layout = PaperLayout(dpi=200.0)
    # 10 s at 25 mm/s plus two 10 mm margins; 3 rows + rhythm at 50 mm
    assert layout.page_width_mm == pytest.approx(270.0)
    assert layout.page_height_mm == pytest.approx(220.0)
    assert layout.width_px == round(270.0 * 200.0 / 25.4)
    assert layout.height_px == round(220.0 * 200.0 / 25.4)


@pytest.mark.parametrize("kwargs", [
    {"rows": 4, "cols": 4},
    {"segment_s": 2.0},
    {"dpi": 0.0},
    {"margin_mm": -1.0},
    {"large_grid_mm": 3.5},
    {"lead_order": ("I",) * 12},
    {"rhythm_lead": "X1"},
])
def test_layout_validation(kwargs):
    with pytest.raises(ValidationError):
        PaperLayout(**kwargs)


def test_layout_dict_round_trip():
    layout = PaperLayout(dpi=300.0, margin_mm=8.0)
    assert PaperLayout.from_dict(layout.to_dict()) == layout


@pytest.mark.parametrize("kwargs", [
    {"gaussian_noise_sigma": -1.0},
    {"rotation_deg": 5.5},
    {"trace_thickness_px": 0},
    {"grid_intensity": 300},
    {"grid_intensity": 50, "trace_intensity": 80},
])
def test_degradation_validation(kwargs):
    with pytest.raises(ValidationError):
        DegradationSpec(**kwargs)


def test_panel_plan_covers_all_leads(small_layout):
    placements = plan_panels(small_layout)
    assert len(placements) == 13
    segs = [p for p in placements if not p.is_rhythm]
    assert tuple(p.lead for p in segs) == DEFAULT_LEAD_ORDER
    rhythm = placements[-1]
    assert rhythm.is_rhythm and rhythm.lead == "II"
    assert rhythm.t1_s - rhythm.t0_s == pytest.approx(small_layout.rhythm_s)
    # segment columns tile the rhythm window
    for row in range(small_layout.rows):
        row_panels = [p for p in segs if p.row == row]
        assert [p.t0_s for p in row_panels] == pytest.approx(
            [c * small_layout.segment_s for c in range(4)])


def test_grid_mask_positions(small_layout):
    scene = render_scene(flat_record(duration_s=2.0), small_layout,
                         DegradationSpec(), seed=0)
    ppmm = small_layout.px_per_mm
    expected_cols = sorted({int(round(k * ppmm))
                            for k in range(int(small_layout.page_width_mm) + 1)
                            if int(round(k * ppmm)) < scene.image.width_px})
    grid_cols = np.flatnonzero(scene.grid_mask.all(axis=0))
    assert grid_cols.tolist() == expected_cols


def test_flat_record_traces_sit_on_baselines(small_layout):
    scene = render_scene(flat_record(duration_s=2.0), small_layout,
                         DegradationSpec(), seed=0)
    rows_with_ink = np.flatnonzero(scene.trace_mask.any(axis=1))
    assert len(rows_with_ink) == small_layout.rows + 1
    for y, center in zip(rows_with_ink, scene.row_centers_px):
        assert abs(y - center) <= 1.0


def test_constant_offset_shifts_trace(small_layout):
    # +1 mV at 10 mm/mV moves every trace up by 10 mm of pixels
    up = render_scene(flat_record(duration_s=2.0, level_mv=1.0), small_layout,
                      DegradationSpec(), seed=0)
    ref = render_scene(flat_record(duration_s=2.0), small_layout,
                       DegradationSpec(), seed=0)
    shift = small_layout.mm_per_mv * small_layout.px_per_mm
    ys_up = np.flatnonzero(up.trace_mask.any(axis=1))
    ys_ref = np.flatnonzero(ref.trace_mask.any(axis=1))
    assert np.allclose(ys_ref - ys_up, shift, atol=1.0)


def test_render_is_deterministic(small_record, small_layout):
    degrade = DegradationSpec(gaussian_noise_sigma=6.0, rotation_deg=1.0)
    a = render(small_record, small_layout, degrade, seed=5)
    b = render(small_record, small_layout, degrade, seed=5)
    c = render(small_record, small_layout, degrade, seed=6)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_render_returns_scene_image(small_record, small_layout):
    img = render(small_record, small_layout, DegradationSpec(), seed=2)
    scene = render_scene(small_record, small_layout, DegradationSpec(), seed=2)
    assert np.array_equal(img.pixels, scene.image.pixels)


def test_clean_page_intensities(small_scene):
    degrade = small_scene.degradation
    pixels = small_scene.image.pixels
    assert pixels[small_scene.trace_mask].max() == degrade.trace_intensity
    grid_only = small_scene.grid_mask & ~small_scene.trace_mask
    assert np.all(pixels[grid_only] == degrade.grid_intensity)
    background = ~small_scene.grid_mask & ~small_scene.trace_mask
    assert np.all(pixels[background] == 255)


def test_trace_thickness_grows_ink(small_record, small_layout):
    thin = render_scene(small_record, small_layout,
                        DegradationSpec(trace_thickness_px=1), seed=0)
    thick = render_scene(small_record, small_layout,
                         DegradationSpec(trace_thickness_px=3), seed=0)
    assert thick.trace_mask.sum() > 2 * thin.trace_mask.sum()
    # thickening only dilates: the thin trace survives inside the thick one
    assert np.all(thick.trace_mask[thin.trace_mask])


def test_rotation_keeps_shape_and_fills_white(small_record, small_layout):
    rot = render(small_record, small_layout,
                 DegradationSpec(rotation_deg=3.0), seed=0)
    ref = render(small_record, small_layout, DegradationSpec(), seed=0)
    assert rot.pixels.shape == ref.pixels.shape
    assert rot.pixels[0, 0] == 255 and rot.pixels[-1, -1] == 255
    assert not np.array_equal(rot.pixels, ref.pixels)


def test_render_requires_all_leads(small_layout):
    partial = flat_record(duration_s=2.0)
    partial = type(partial)(sampling_hz=partial.sampling_hz,
                            lead_names=partial.lead_names[:6],
                            samples=partial.samples[:6])
    with pytest.raises(ValidationError, match="missing lead"):
        render(partial, small_layout)


def test_render_requires_rhythm_duration(small_layout):
    with pytest.raises(ValidationError, match="needs"):
        render(flat_record(duration_s=1.0), small_layout)


def test_png_round_trip(tmp_path, small_scene):
    path = str(tmp_path / "page.png")
    save_png(small_scene.image, path)
    pixels, dpi = load_image(path)
    assert np.array_equal(pixels, small_scene.image.pixels)
    # PNG keeps resolution as integer pixels per meter, so dpi comes back
    # quantized to ~2e-6 relative
    assert dpi == pytest.approx(small_scene.layout.dpi, rel=1e-4)


def test_raster_image_validation():
    with pytest.raises(ValidationError):
        RasterImage(pixels=np.zeros((4, 4), dtype=np.float64))
    with pytest.raises(ValidationError):
        RasterImage(pixels=np.zeros((4, 4), dtype=np.uint8), dpi=0.0)


def test_mm_to_px():
    assert mm_to_px(25.4, 300.0) == pytest.approx(300.0)
