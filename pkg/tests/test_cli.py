import os

import numpy as np
import pytest

from crowdflow import ConfigurationError, PopulationField, parse_config, preset
from crowdflow.cli import main, read_snapshot, write_snapshot
from crowdflow.grid import make_grid


class TestPreset:
    def test_crossing_parameters(self):
        cfg = preset("crossing")
        assert cfg.family == "deviation"
        assert cfg.populations[0].eps == (0.3, 0.7)
        assert cfg.populations[1].eps == (0.7, 0.3)
        assert cfg.populations[0].datum_value == 0.9
        assert cfg.populations[1].datum_value == 0.7
        assert cfg.delta_max == 0.8 and cfg.delta_r == 0.75
        assert cfg.dx == 0.025
        assert cfg.bounds == (-8.0, -4.0, 8.0, 4.0)
        assert cfg.room == (-8.0, -3.0, 8.0, 3.0)

    def test_evacuation_parameters(self):
        cfg = preset("evacuation")
        assert cfg.populations[0].eps == (0.0, 0.3)
        assert cfg.populations[1].eps == (0.3, 0.0)
        # population 2 has no geodesic drive
        assert cfg.populations[1].gx == 0.0 and cfg.populations[1].gy == 0.0
        for p in cfg.populations:
            assert p.datum_value == 0.5
            assert p.datum_rect == (-6.4, -2.4, -3.2, 2.4)

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError, match="crossing"):
            preset("bogus")

    def test_crossing_build_masses(self):
        cfg = preset("crossing").with_mesh(0.1)
        model, datum = cfg.build()
        assert datum.mass()[0] == pytest.approx(13.824, rel=1e-12)
        assert datum.mass()[1] == pytest.approx(0.7 * 3.2 * 4.8, rel=1e-12)


class TestParseConfig:
    def test_preset_passthrough(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[model]\npreset = crossing\n")
        assert parse_config(str(p)) == preset("crossing")

    def test_mesh_override(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[model]\npreset = crossing\n[grid]\nmesh = 0.1\n")
        cfg = parse_config(str(p))
        g = cfg.build_grid()
        assert (g.nx, g.ny) == (160, 80)

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[model]\npreset = crossing\ntmax = 1\ntmax = 2\n")
        with pytest.raises(ConfigurationError, match="parse error"):
            parse_config(str(p))

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[model]\npreset = crossing\nwibble = 3\n")
        with pytest.raises(ConfigurationError, match="wibble"):
            parse_config(str(p))

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[model]\npreset = crossing\n[physics]\ng = 9.81\n")
        with pytest.raises(ConfigurationError, match="physics"):
            parse_config(str(p))

    def test_population_override(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[model]\npreset = crossing\n"
                     "[population.2]\nvmax = 2\neps = 0.5 0.5\n")
        cfg = parse_config(str(p))
        assert cfg.populations[1].vmax == 2.0
        assert cfg.populations[1].eps == (0.5, 0.5)
        assert cfg.populations[0].vmax == 4.0

    def test_explicit_config(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text(
            "[grid]\nbounds = 0 0 1 1\nmesh = 0.125\n"
            "[model]\nfamily = deviation\ntmax = 0.1\n"
            "[population.1]\nvmax = 1\ngx = 1\ndatum = 0.4 0.25 0.25 0.75 0.75\n"
            "[kernel]\nhalf_width = 0.25\n")
        cfg = parse_config(str(p))
        model, datum = cfg.build()
        assert model.n == 1
        assert datum.mass()[0] == pytest.approx(0.4 * 0.25, rel=1e-12)

    def test_missing_file(self):
        with pytest.raises(ConfigurationError, match="cannot read"):
            parse_config("/nonexistent/file.ini")


class TestSnapshots:
    def test_zero_field_two_rows(self, tmp_path):
        g = make_grid((0.0, 0.0, 1.0, 1.0), 0.5, 0.5)
        state = PopulationField.zeros(g, 1)
        (path,) = write_snapshot(state, 0.0, str(tmp_path))
        lines = open(path).read().splitlines()
        assert lines[0] == "nx,ny,x0,y0,dx,dy,t"
        assert lines[2:] == ["0,0", "0,0"]

    def test_round_trip_full_precision(self, tmp_path, rng):
        g = make_grid((-1.0, -2.0, 3.0, 2.0), 0.25, 0.5)
        state = PopulationField(g, rng.random((2, g.nx, g.ny)))
        paths = write_snapshot(state, 0.125, str(tmp_path))
        for i, path in enumerate(paths):
            data, meta = read_snapshot(path)
            assert np.array_equal(data, state.data[i])
            assert meta["t"] == 0.125
            assert meta["dx"] == 0.25 and meta["dy"] == 0.5

    def test_crossing_t0_mass(self, tmp_path):
        cfg = preset("crossing").with_mesh(0.1)
        model, datum = cfg.build()
        (p1, _) = write_snapshot(datum, 0.0, str(tmp_path))
        data, meta = read_snapshot(p1)
        mass = data.sum() * meta["dx"] * meta["dy"]
        assert mass == pytest.approx(13.824, abs=1e-9)

    def test_file_names(self, tmp_path):
        g = make_grid((0.0, 0.0, 1.0, 1.0), 0.5, 0.5)
        state = PopulationField.zeros(g, 2)
        paths = write_snapshot(state, 0.5, str(tmp_path))
        assert [os.path.basename(p) for p in paths] \
            == ["pop1_t0.500.csv", "pop2_t0.500.csv"]


class TestMain:
    def test_run_crossing(self, tmp_path, capsys):
        code = main(["run", "--preset", "crossing", "--mesh", "0.2",
                     "--tmax", "0.2", "--out", str(tmp_path)])
        assert code == 0
        files = os.listdir(tmp_path)
        snaps = [f for f in files if f.startswith("pop")]
        assert len(snaps) >= 2
        assert "diagnostics.csv" in files
        header = open(tmp_path / "diagnostics.csv").readline().strip()
        assert header.split(",")[:2] == ["t", "dt"]
        assert "tv_bound_1" in header and "escaped_2" in header

    def test_bounds_command(self, tmp_path, capsys):
        code = main(["bounds", "--preset", "crossing", "--mesh", "0.2",
                     "--tmax", "0.2", "--out", str(tmp_path)])
        assert code == 0
        assert "bounds.csv" in os.listdir(tmp_path)
        rows = open(tmp_path / "bounds.csv").read().splitlines()
        assert rows[0].startswith("t,population,tv,tv_bound")
        assert len(rows) > 1

    def test_gateaux_command(self, tmp_path, capsys):
        code = main(["gateaux", "--mesh", "0.03125", "--tmax", "0.1",
                     "--out", str(tmp_path), "--hs", "0.2,0.1,0.05"])
        assert code == 0
        rows = open(tmp_path / "gateaux.csv").read().splitlines()[1:]
        ratios = [float(r.split(",")[2]) for r in rows]
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    def test_stability_identical_configs(self, tmp_path, capsys):
        code = main(["stability", "--preset", "crossing", "--mesh", "0.2",
                     "--tmax", "0.2", "--out", str(tmp_path),
                     "--perturb", "0"])
        assert code == 0
        rows = open(tmp_path / "stability.csv").read().splitlines()[1:]
        for row in rows:
            _, dist, bound, _ = row.split(",")
            assert float(dist) == 0.0
            assert float(bound) == 0.0

    def test_config_error_exit_code(self, capsys):
        assert main(["run", "--preset", "nope"]) == 1
        assert main(["run"]) == 1
        assert main(["frobnicate"]) == 1

    def test_determinism(self, tmp_path, capsys):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["run", "--preset", "crossing", "--mesh", "0.2",
                         "--tmax", "0.2", "--out", str(out)]) == 0
        for name in sorted(os.listdir(out1)):
            b1 = open(out1 / name, "rb").read()
            b2 = open(out2 / name, "rb").read()
            assert b1 == b2, name
