import numpy as np
import pytest

from copaint.errors import ConstraintViolationError
from copaint.types import (
    BLACK,
    BrushProfile,
    Canvas,
    Palette,
    PaintingSetting,
    StrokeParams,
    StrokePlan,
    acrylic4_setting,
    acrylic12_setting,
    marker_setting,
    plan_from_json,
    plan_to_json,
    setting_from_name,
    validate_stroke,
)


def stroke(**kw):
    base = dict(p0=(0.2, 0.2), p1=(0.5, 0.5), p2=(0.8, 0.8),
                width=0.05, color_index=0, opacity=1.0)
    base.update(kw)
    return StrokeParams(**base)


class TestBrushProfile:
    def test_valid(self):
        BrushProfile(0.01, 0.2, 0.5, "alpha_acrylic")

    @pytest.mark.parametrize("lo,hi", [(0.0, 0.1), (0.2, 0.1), (0.1, 0.3)])
    def test_bad_width_range(self, lo, hi):
        with pytest.raises(ConstraintViolationError):
            BrushProfile(lo, hi)

    def test_bad_spacing(self):
        with pytest.raises(ConstraintViolationError):
            BrushProfile(0.01, 0.1, stamp_spacing=0.0)


class TestPalette:
    def test_duplicate_colors_rejected(self):
        with pytest.raises(ConstraintViolationError):
            Palette(colors=((0, 0, 0), (0, 0, 0)))

    def test_size_limits(self):
        with pytest.raises(ConstraintViolationError):
            Palette(colors=tuple((i / 20, 0, 0) for i in range(13)))

    def test_nearest_index(self):
        pal = Palette(colors=((0, 0, 0), (1, 1, 1)))
        assert pal.nearest_index((0.9, 0.95, 1.0)) == 1
        assert pal.nearest_index((0.1, 0.0, 0.2)) == 0


class TestPaintingSetting:
    def test_marker_must_be_black(self):
        with pytest.raises(ConstraintViolationError):
            PaintingSetting(media="marker_black",
                            palette=Palette(colors=((1, 0, 0),)),
                            brush=BrushProfile(0.01, 0.1, blend_mode="opaque_marker"))

    def test_marker_needs_opaque_blend(self):
        with pytest.raises(ConstraintViolationError):
            PaintingSetting(media="marker_black",
                            palette=Palette(colors=(BLACK,)),
                            brush=BrushProfile(0.01, 0.1, blend_mode="alpha_acrylic"))

    def test_fixed4_needs_four_colors(self):
        with pytest.raises(ConstraintViolationError):
            PaintingSetting(media="acrylic_4_fixed",
                            palette=Palette(colors=((0, 0, 0), (1, 1, 1))),
                            brush=BrushProfile(0.01, 0.1))

    def test_adaptive_rejects_fixed_palette(self):
        with pytest.raises(ConstraintViolationError):
            PaintingSetting(media="acrylic_12_adaptive",
                            palette=Palette(colors=((0, 0, 0),), fixed=True),
                            brush=BrushProfile(0.01, 0.1))

    def test_factories(self):
        assert marker_setting().media == "marker_black"
        assert len(acrylic4_setting().palette) == 4
        assert not acrylic12_setting().palette.fixed
        assert setting_from_name("marker", stroke_budget=10).stroke_budget == 10
        with pytest.raises(ConstraintViolationError):
            setting_from_name("watercolor")


class TestValidateStroke:
    def test_in_range_marker_ok(self):
        assert validate_stroke(stroke(), marker_setting()) == []

    def test_out_of_bounds_point(self):
        out = validate_stroke(stroke(p0=(1.2, 0.5)), marker_setting())
        assert any(v.field == "p0" for v in out)

    def test_color_index_under_fixed4(self):
        out = validate_stroke(stroke(color_index=5), acrylic4_setting())
        assert any(v.field == "color_index" for v in out)

    def test_marker_opacity_rule(self):
        out = validate_stroke(stroke(opacity=0.5), marker_setting())
        assert any(v.field == "opacity" for v in out)

    def test_width_out_of_brush_range(self):
        setting = marker_setting()
        out = validate_stroke(stroke(width=setting.brush.max_width * 2), setting)
        assert any(v.field == "width" for v in out)


class TestCanvas:
    def test_blank(self):
        c = Canvas.blank(8, 4)
        assert c.pixels.shape == (4, 8, 3)
        assert np.all(c.pixels == 1.0)
        assert np.all(c.authorship == 0)

    def test_shape_validation(self):
        with pytest.raises(ConstraintViolationError):
            Canvas(4, 4, np.ones((4, 4, 3)), np.zeros((5, 4), dtype=np.uint8))

    def test_copy_is_deep(self):
        c = Canvas.blank(4, 4)
        d = c.copy()
        d.pixels[0, 0] = 0.0
        assert c.pixels[0, 0, 0] == 1.0


class TestStrokePlan:
    def test_budget_enforced(self):
        setting = marker_setting(stroke_budget=2)
        with pytest.raises(ConstraintViolationError):
            StrokePlan([stroke()] * 3, setting)

    def test_invalid_stroke_named_with_index(self):
        setting = marker_setting()
        with pytest.raises(ConstraintViolationError) as exc:
            StrokePlan([stroke(), stroke(opacity=0.3)], setting)
        assert any(v.field.startswith("strokes[1].") for v in exc.value.violations)

    def test_subset_preserves_order(self):
        plan = StrokePlan([stroke(width=0.02 + i / 100) for i in range(5)],
                          marker_setting())
        sub = plan.subset([4, 0, 2])
        assert [s.width for s in sub.strokes] == [plan.strokes[i].width for i in (0, 2, 4)]

    def test_json_round_trip(self):
        plan = StrokePlan([stroke(), stroke(p0=(0.11, 0.22), width=0.031)],
                          acrylic4_setting(), seed=42, source_tag="round-trip")
        text = plan_to_json(plan)
        back = plan_from_json(text)
        assert plan_to_json(back) == text
        assert back.seed == 42
        assert back.source_tag == "round-trip"
        assert back.setting == plan.setting
        assert back.strokes == plan.strokes

    def test_json_field_order_stable(self):
        plan = StrokePlan([stroke()], marker_setting(), seed=1, source_tag="x")
        text = plan_to_json(plan)
        assert text.index('"version"') < text.index('"setting"') < text.index(
            '"seed"') < text.index('"source_tag"') < text.index('"strokes"')

    def test_unsupported_version_rejected(self):
        plan = StrokePlan([stroke()], marker_setting())
        bad = plan_to_json(plan).replace('"version": 1', '"version": 99')
        with pytest.raises(ConstraintViolationError):
            plan_from_json(bad)
