import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ivmask.errors import DimensionMismatch, MalformedRle
from ivmask.heatmap import (
    BBox,
    BinaryMask,
    Heatmap,
    ImageBuffer,
    Instruction,
    activated_bbox,
    area_ratio,
    mask_iou,
    resize_bilinear,
    rle_decode,
    rle_encode,
    rle_from_string,
    rle_to_string,
    threshold,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def heatmaps(max_side=12):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda hw: arrays(np.float64, hw, elements=unit).map(Heatmap)
    )


def masks(max_side=64):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda hw: arrays(np.bool_, hw).map(BinaryMask)
    )


def test_domain_types_validate():
    with pytest.raises(ValueError):
        Heatmap(np.array([[1.5]]))
    with pytest.raises(ValueError):
        Heatmap(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        BBox(2, 0, 2, 1)
    with pytest.raises(ValueError):
        Instruction("   ")
    h = Heatmap.from_flat([0.0, 0.5, 1.0, 0.25, 0.0, 0.0], width=3, height=2)
    assert h.shape == (2, 3) and h.values[1, 0] == 0.25
    with pytest.raises(ValueError):
        Heatmap.from_flat([0.0] * 5, width=3, height=2)
    with pytest.raises(ValueError):
        h.values[0, 0] = 1.0  # payload is read-only


def test_threshold_and_area_examples():
    h = Heatmap(np.array([[0.0, 0.2], [0.5, 1.0]]))
    assert threshold(h).popcount() == 3
    assert threshold(h, 0.2).popcount() == 2
    assert area_ratio(Heatmap(np.ones((4, 4)))) == 1.0
    assert area_ratio(Heatmap.zeros(4, 4)) == 0.0
    with pytest.raises(ValueError):
        threshold(h, 1.0)


def test_activated_bbox_examples():
    v = np.zeros((5, 6))
    v[1, 2] = v[3, 4] = 0.7
    assert activated_bbox(Heatmap(v)) == BBox(2, 1, 5, 4)
    assert activated_bbox(Heatmap.zeros(3, 3)) is None


def test_mask_iou_examples():
    a = BinaryMask(np.array([[1, 1, 0]], dtype=bool))
    b = BinaryMask(np.array([[0, 1, 1]], dtype=bool))
    assert mask_iou(a, b) == pytest.approx(1 / 3, abs=0)
    assert mask_iou(a, a) == 1.0
    assert mask_iou(a, BinaryMask(~a.bits)) == 0.0
    empty = BinaryMask(np.zeros((2, 2), dtype=bool))
    assert mask_iou(empty, empty) == 1.0
    with pytest.raises(DimensionMismatch):
        mask_iou(a, empty)


def test_rle_examples():
    assert rle_encode(BinaryMask(np.zeros((2, 2), dtype=bool))) == [4]
    assert rle_encode(BinaryMask(np.ones((2, 2), dtype=bool))) == [0, 4]
    # column-major: column 0 is (F, T), column 1 is (T, T)
    m = BinaryMask(np.array([[0, 1], [1, 1]], dtype=bool))
    assert rle_encode(m) == [1, 3]
    with pytest.raises(MalformedRle):
        rle_decode([1, 2], 2, 2)
    with pytest.raises(MalformedRle):
        rle_decode([5, -1], 2, 2)
    with pytest.raises(MalformedRle):
        rle_from_string("3 x")
    assert rle_from_string(rle_to_string([0, 4])) == [0, 4]


def brute_rle(bits):
    flat = [bool(b) for b in bits.T.ravel()]
    runs, cur, n = [], False, 0
    for b in flat:
        if b == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = b, 1
    runs.append(n)
    return runs


@given(masks())
def test_rle_roundtrip_and_oracle(m):
    runs = rle_encode(m)
    assert runs == brute_rle(m.bits)
    assert rle_decode(runs, m.width, m.height) == m


def test_resize_examples():
    h = Heatmap(np.random.default_rng(0).random((5, 7)))
    assert np.array_equal(resize_bilinear(h, 7, 5).values, h.values)
    c = resize_bilinear(Heatmap(np.full((3, 4), 0.3)), 9, 2)
    assert np.allclose(c.values, 0.3, atol=1e-15)


def scalar_bilinear_1d(row, n_out):
    n_in = len(row)
    out = []
    for j in range(n_out):
        s = min(max((j + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1)
        lo = math.floor(s)
        hi = min(lo + 1, n_in - 1)
        out.append(row[lo] * (1 - (s - lo)) + row[hi] * (s - lo))
    return out


def test_resize_ramp_matches_scalar_reference():
    out = resize_bilinear(Heatmap(np.array([[0.0, 1.0]])), 4, 1).values[0]
    assert np.allclose(out, [0.0, 0.25, 0.75, 1.0], atol=1e-15)
    assert np.allclose(out, scalar_bilinear_1d([0.0, 1.0], 4), atol=1e-15)
    assert np.all(np.diff(out) >= 0)


@given(heatmaps(), st.integers(1, 20), st.integers(1, 20))
def test_resize_preserves_bounds(h, w, hh):
    out = resize_bilinear(h, w, hh).values
    assert out.shape == (hh, w)
    assert out.min() >= h.values.min() - 1e-12
    assert out.max() <= h.values.max() + 1e-12


@given(heatmaps(), st.floats(0.0, 0.99))
def test_area_ratio_is_popcount_over_size(h, tau):
    assert area_ratio(h, tau) == threshold(h, tau).popcount() / (h.width * h.height)


@given(heatmaps(), st.floats(0.0, 0.99))
def test_bbox_complete_and_minimal(h, tau):
    bits = h.values > tau
    box = activated_bbox(h, tau)
    if not bits.any():
        assert box is None
        return
    inside = np.zeros_like(bits)
    inside[box.slices()] = True
    assert not np.any(bits & ~inside)
    sub = bits[box.slices()]
    assert sub[0].any() and sub[-1].any() and sub[:, 0].any() and sub[:, -1].any()


@given(masks(8), st.data())
def test_mask_iou_properties(a, data):
    b = BinaryMask(data.draw(arrays(np.bool_, a.bits.shape)))
    v = mask_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == mask_iou(b, a)
    if a.popcount():
        assert mask_iou(a, a) == 1.0


def test_image_buffer_channels():
    assert ImageBuffer(np.zeros((2, 3, 3), dtype=np.uint8)).channels == 3
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((2, 3, 2), dtype=np.uint8))
