from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from stereoattn.flops import (CSV_COLUMNS, ShapeSpec, empirical_count, flops_decomposed, flops_full_head,
                              reports_to_csv, with_empirical)

REFERENCE_SHAPE = ShapeSpec(b=1, f=13, h=15, w=20, d=128)


def test_full_head():
    assert flops_full_head(1, 1) == 4
    assert flops_full_head(7800, 128) == 31_150_080_000
    assert flops_full_head(20, 3) == 4 * flops_full_head(10, 3)
    with pytest.raises(ValueError):
        flops_full_head(0, 4)


def test_reference_shape():
    r = flops_decomposed(REFERENCE_SHAPE)
    assert REFERENCE_SHAPE.tokens == 7800
    assert r.analytic_full4d == 31_150_080_000
    assert r.analytic_3d == 15_575_040_000
    assert r.analytic_row == 39_936_000
    assert r.analytic_stereo_total == 15_614_976_000
    # rounded values quoted for this configuration: 3.115e10 and 1.561e10
    assert round(r.analytic_full4d / 1e10, 3) == 3.115
    assert round(r.analytic_stereo_total / 1e10, 3) == 1.561
    assert 1.99 <= r.ratio <= 2.0
    assert r.ratio == pytest.approx(1.995, abs=5e-4)


def test_unit_shape():
    r = flops_decomposed(ShapeSpec(1, 1, 1, 1, 1))
    assert (r.analytic_full4d, r.analytic_3d, r.analytic_row) == (16, 8, 4)
    assert r.analytic_stereo_total == 12


def test_invalid_shape():
    with pytest.raises(ValueError):
        ShapeSpec(1, 0, 1, 1, 1)


@settings(max_examples=100, deadline=None)
@given(*(st.integers(1, 64) for _ in range(5)))
def test_invariants(b, f, h, w, d):
    r = flops_decomposed(ShapeSpec(b, f, h, w, d))
    assert 2 * r.analytic_3d == r.analytic_full4d
    assert Fraction(r.analytic_row, r.analytic_full4d) == Fraction(1, 4 * f * h)
    assert r.analytic_stereo_total == r.analytic_3d + r.analytic_row
    assert r.analytic_row_grouped == 4 * r.analytic_row


def test_adjusted_columns_for_camera_dims():
    r = flops_decomposed(ShapeSpec(1, 1, 1, 1, 4), d_c=4)
    # L = 2: scores 2*2*2*(4+4) + values 2*2*2*4
    assert r.adjusted_full4d == 64 + 32
    assert flops_decomposed(ShapeSpec(1, 1, 1, 1, 4)).adjusted_full4d is None


def test_empirical_unit_shape():
    assert empirical_count(ShapeSpec(1, 1, 1, 1, 4), "full4d") == 64


@pytest.mark.parametrize("shape", [ShapeSpec(1, 2, 3, 4, 8), ShapeSpec(2, 1, 2, 3, 4), ShapeSpec(1, 3, 1, 5, 2)])
def test_empirical_matches_closed_forms_exactly(shape):
    r = with_empirical(flops_decomposed(shape))
    assert r.empirical_full4d == r.analytic_full4d
    assert r.empirical_3d == r.analytic_3d
    assert r.empirical_row == r.analytic_row_grouped
    assert r.empirical_stereo_total == r.analytic_3d + r.analytic_row_grouped
    assert empirical_count(shape, "stereo") == empirical_count(shape, "stereo", seed=5)


def test_empirical_with_camera_dims_matches_adjusted():
    s = ShapeSpec(1, 2, 2, 2, 4)
    r = flops_decomposed(s, d_c=8)
    assert empirical_count(s, "full4d", d_c=8) == r.adjusted_full4d
    assert empirical_count(s, "stereo", d_c=8) == r.adjusted_stereo_total


def test_csv_and_json_agree():
    import csv, io, json
    r = flops_decomposed(REFERENCE_SHAPE)
    rows = list(csv.DictReader(io.StringIO(reports_to_csv([r]))))
    assert tuple(rows[0]) == CSV_COLUMNS
    doc = json.loads(r.to_json())
    assert int(rows[0]["full4d"]) == doc["analytic_full4d"]
    assert int(rows[0]["stereo_total"]) == doc["analytic_stereo_total"]
    assert float(rows[0]["ratio"]) == doc["ratio"]
