import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdflow import (ConfigurationError, NumericError, PopulationField,
                       indicator_datum, make_grid, norms)


class TestMakeGrid:
    def test_corridor_cell_counts(self):
        g = make_grid((-8.0, -4.0, 8.0, 4.0), 0.025, 0.025)
        assert (g.nx, g.ny) == (640, 320)

    def test_unit_square_half_cells(self):
        g = make_grid((0.0, 0.0, 1.0, 1.0), 0.5, 0.5)
        assert (g.nx, g.ny) == (2, 2)

    def test_non_divisible_extent_names_axis(self):
        with pytest.raises(ConfigurationError, match="axis x"):
            make_grid((0.0, 0.0, 1.0, 1.0), 0.3, 0.5)
        with pytest.raises(ConfigurationError, match="axis y"):
            make_grid((0.0, 0.0, 1.0, 1.0), 0.5, 0.3)

    def test_cell_centers(self):
        g = make_grid((0.0, 0.0, 1.0, 1.0), 0.25, 0.25)
        assert np.allclose(g.xc, [0.125, 0.375, 0.625, 0.875])
        assert np.allclose(g.yc, [0.125, 0.375, 0.625, 0.875])

    def test_empty_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            make_grid((0.0, 0.0, 0.0, 1.0), 0.1, 0.1)

    def test_room_outside_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            make_grid((0.0, 0.0, 1.0, 1.0), 0.1, 0.1, room=(0.0, 0.0, 2.0, 1.0))

    def test_bad_exit_rejected(self):
        with pytest.raises(ConfigurationError):
            make_grid((0.0, 0.0, 1.0, 1.0), 0.1, 0.1,
                      exits=(("north", 0.0, 1.0),))
        with pytest.raises(ConfigurationError):
            make_grid((0.0, 0.0, 1.0, 1.0), 0.1, 0.1,
                      exits=(("left", 1.0, 0.0),))


class TestIndicatorDatum:
    def test_left_block_mass(self, corridor_grid):
        # 0.9 on a 3.2 x 4.8 block
        datum = indicator_datum(corridor_grid, 0.9, (-6.4, -2.4, -3.2, 2.4))
        mass = datum.sum() * corridor_grid.cell_area
        assert mass == pytest.approx(13.824, rel=1e-12)

    def test_half_value_mass(self, corridor_grid):
        datum = indicator_datum(corridor_grid, 0.5, (-6.4, -2.4, -3.2, 2.4))
        mass = datum.sum() * corridor_grid.cell_area
        assert mass == pytest.approx(7.68, rel=1e-12)

    def test_full_bounds_all_ones(self, unit_grid):
        datum = indicator_datum(unit_grid, 1.0, (0.0, 0.0, 1.0, 1.0))
        assert np.all(datum == 1.0)

    def test_rect_outside_bounds_rejected(self, unit_grid):
        with pytest.raises(ConfigurationError):
            indicator_datum(unit_grid, 1.0, (0.5, 0.5, 1.5, 1.0))

    @settings(max_examples=50, deadline=None)
    @given(x0=st.floats(0.01, 0.5), w=st.floats(0.05, 0.45),
           y0=st.floats(0.01, 0.5), h=st.floats(0.05, 0.45),
           v=st.floats(0.1, 2.0))
    def test_mass_exact_for_unaligned_rects(self, x0, w, y0, h, v):
        g = make_grid((0.0, 0.0, 1.0, 1.0), 1.0 / 32.0, 1.0 / 32.0)
        datum = indicator_datum(g, v, (x0, y0, x0 + w, y0 + h))
        mass = datum.sum() * g.cell_area
        assert mass == pytest.approx(v * w * h, rel=1e-12)


class TestNorms:
    def test_block_indicator_norms(self, corridor_grid):
        datum = indicator_datum(corridor_grid, 0.9, (-6.4, -2.4, -3.2, 2.4))
        fld = PopulationField.from_arrays(corridor_grid, datum)
        rec = norms(fld)
        assert rec.l1[0] == pytest.approx(13.824, abs=1e-9)
        # grid-aligned edges: discrete TV equals the perimeter integral
        assert rec.tv[0] == pytest.approx(2 * 0.9 * (3.2 + 4.8), rel=1e-6)
        assert rec.linf[0] == pytest.approx(0.9)

    def test_zero_field(self, unit_grid):
        rec = norms(PopulationField.zeros(unit_grid, 2))
        assert rec.l1_total == 0 and rec.linf_total == 0 and rec.tv_total == 0

    def test_constant_field(self, unit_grid):
        fld = PopulationField.from_arrays(
            unit_grid, np.full((unit_grid.nx, unit_grid.ny), 1.7))
        rec = norms(fld)
        assert rec.tv[0] == 0.0
        assert rec.linf[0] == pytest.approx(1.7)

    def test_nan_names_population(self, unit_grid):
        data = np.zeros((2, unit_grid.nx, unit_grid.ny))
        data[1, 3, 3] = np.nan
        with pytest.raises(NumericError, match="population 1"):
            norms(PopulationField(unit_grid, data))

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(0.0, 100.0))
    def test_positive_homogeneity(self, c):
        g = make_grid((0.0, 0.0, 1.0, 1.0), 0.125, 0.125)
        rng = np.random.default_rng(7)
        base = rng.random((1, g.nx, g.ny))
        r1 = norms(PopulationField(g, base))
        r2 = norms(PopulationField(g, c * base))
        assert r2.l1[0] == pytest.approx(c * r1.l1[0], rel=1e-12, abs=1e-12)
        assert r2.tv[0] == pytest.approx(c * r1.tv[0], rel=1e-12, abs=1e-12)
        assert r2.linf[0] == pytest.approx(c * r1.linf[0], rel=1e-12, abs=1e-12)

    def test_totals_sum_over_populations(self, unit_grid, rng):
        data = rng.random((3, unit_grid.nx, unit_grid.ny))
        rec = norms(PopulationField(unit_grid, data))
        assert rec.l1_total == pytest.approx(rec.l1.sum())
        assert rec.tv_total == pytest.approx(rec.tv.sum())
        assert rec.linf_total == pytest.approx(rec.linf.max())


class TestPopulationField:
    def test_shape_mismatch_rejected(self, unit_grid):
        with pytest.raises(ConfigurationError):
            PopulationField(unit_grid, np.zeros((1, 5, 5)))

    def test_mass(self, unit_grid):
        fld = PopulationField.from_arrays(
            unit_grid, np.full((unit_grid.nx, unit_grid.ny), 2.0))
        assert fld.mass()[0] == pytest.approx(2.0)
