from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tiledet.errors import DegenerateBoxError
from tiledet.geometry import (
    BoundingBox,
    FrameOrigin,
    area,
    intersection,
    iom,
    iou,
    to_global,
    to_local,
)

coords = st.integers(min_value=0, max_value=500)
sides = st.integers(min_value=1, max_value=300)


@st.composite
def boxes(draw) -> BoundingBox:
    x, y = draw(coords), draw(coords)
    return BoundingBox(x, y, x + draw(sides), y + draw(sides))


class TestArea:
    def test_square(self):
        assert area(BoundingBox(0, 0, 10, 10)) == 100

    def test_degenerate_width_is_zero(self):
        assert area(BoundingBox(5, 5, 5, 9)) == 0

    def test_translated_square(self):
        assert area(BoundingBox(2, 2, 8, 8)) == 36


class TestIou:
    def test_identical_boxes(self):
        b = BoundingBox(3, 4, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(BoundingBox(0, 0, 5, 5), BoundingBox(10, 10, 20, 20)) == 0.0

    def test_half_overlap(self):
        # 50 px^2 intersection over 150 px^2 union
        value = iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10))
        assert value == pytest.approx(1 / 3)

    def test_both_zero_area_rejected(self):
        z = BoundingBox(1, 1, 1, 1)
        with pytest.raises(DegenerateBoxError):
            iou(z, z)

    def test_one_zero_area_is_zero(self):
        assert iou(BoundingBox(1, 1, 1, 1), BoundingBox(0, 0, 5, 5)) == 0.0


class TestIom:
    def test_nested_box(self):
        assert iom(BoundingBox(2, 2, 8, 8), BoundingBox(0, 0, 10, 10)) == 1.0

    def test_disjoint_boxes(self):
        assert iom(BoundingBox(0, 0, 5, 5), BoundingBox(10, 10, 20, 20)) == 0.0

    def test_half_of_smaller(self):
        # 50 px^2 intersection over the smaller box's 100 px^2
        assert iom(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)) == 0.5

    def test_zero_area_rejected(self):
        with pytest.raises(DegenerateBoxError):
            iom(BoundingBox(1, 1, 1, 1), BoundingBox(0, 0, 5, 5))


class TestTransforms:
    def test_identity_origin(self):
        b = BoundingBox(0, 0, 10, 10)
        assert to_global(b, FrameOrigin(0, 0)) == b

    def test_translation(self):
        moved = to_global(BoundingBox(10, 20, 30, 40), FrameOrigin(764, 0))
        assert moved == BoundingBox(774, 20, 794, 40)

    @given(boxes(), coords, coords)
    def test_round_trip(self, b, ox, oy):
        origin = FrameOrigin(ox, oy)
        assert to_global(to_local(b, origin), origin) == b

    def test_negative_origin_rejected(self):
        with pytest.raises(ValueError):
            FrameOrigin(-1, 0)


class TestInvertedBox:
    def test_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(10, 0, 0, 10)


class TestRatioProperties:
    @given(boxes())
    def test_self_overlap_is_one(self, b):
        assert iou(b, b) == 1.0
        assert iom(b, b) == 1.0

    @given(boxes(), boxes())
    def test_symmetry(self, b1, b2):
        assert iou(b1, b2) == iou(b2, b1)
        assert iom(b1, b2) == iom(b2, b1)

    @given(boxes(), boxes())
    def test_iom_dominates_iou(self, b1, b2):
        assert iom(b1, b2) >= iou(b1, b2)

    @given(boxes(), boxes())
    def test_bounded(self, b1, b2):
        assert 0.0 <= iou(b1, b2) <= 1.0
        assert 0.0 <= iom(b1, b2) <= 1.0

    @given(boxes(), boxes())
    def test_iom_one_iff_nested(self, b1, b2):
        nested = intersection(b1, b2) in (b1, b2)
        assert (iom(b1, b2) == 1.0) == nested

    @given(boxes(), boxes(), coords, coords)
    def test_translation_invariance(self, b1, b2, dx, dy):
        origin = FrameOrigin(dx, dy)
        assert iou(to_global(b1, origin), to_global(b2, origin)) == pytest.approx(iou(b1, b2))
        assert iom(to_global(b1, origin), to_global(b2, origin)) == pytest.approx(iom(b1, b2))
