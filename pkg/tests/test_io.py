import json

import numpy as np
import pytest

from mtlunmix import io
from mtlunmix.core import Hyperparams, validate_cube
from mtlunmix.io import FormatError


def small_cube(P=3, W=4, H=2, seed=0, wavelengths=None):
    data = np.random.default_rng(seed).uniform(0, 1, (P, W * H)).astype(np.float32)
    return validate_cube(data.astype(np.float64), W, H, wavelengths)


class TestCube:
    def test_round_trip_is_exact_for_f32_values(self, tmp_path):
        cube = small_cube(wavelengths=[400.0, 500.0, 600.0])
        io.write_cube(cube, tmp_path / "c")
        back = io.read_cube(tmp_path / "c")
        np.testing.assert_array_equal(back.data, cube.data)
        assert (back.width, back.height) == (4, 2)
        np.testing.assert_array_equal(back.wavelengths, [400.0, 500.0, 600.0])

    def test_layout_is_band_sequential_little_endian(self, tmp_path):
        cube = validate_cube(np.arange(6.0).reshape(2, 3), 3, 1)
        io.write_cube(cube, tmp_path / "c")
        raw = (tmp_path / "c.raw").read_bytes()
        assert raw == np.arange(6, dtype="<f4").tobytes()
        hdr = json.loads((tmp_path / "c.json").read_text())
        assert hdr == {"width": 3, "height": 1, "bands": 2, "dtype": "f32",
                       "interleave": "bsq", "byte_order": "little"}

    def test_suffix_is_accepted(self, tmp_path):
        io.write_cube(small_cube(), tmp_path / "c")
        assert io.read_cube(tmp_path / "c.json").P == 3

    def test_truncated_raw(self, tmp_path):
        io.write_cube(small_cube(), tmp_path / "c")
        raw = tmp_path / "c.raw"
        raw.write_bytes(raw.read_bytes()[:-4])
        with pytest.raises(FormatError, match="96 bytes.*has 92"):
            io.read_cube(tmp_path / "c")

    @pytest.mark.parametrize("patch", [dict(bands=0), dict(dtype="f64"),
                                       dict(interleave="bil"), dict(byte_order="big"),
                                       dict(width="4"), dict(extra=1)])
    def test_bad_header(self, tmp_path, patch):
        io.write_cube(small_cube(), tmp_path / "c")
        hdr = json.loads((tmp_path / "c.json").read_text())
        hdr.update(patch)
        (tmp_path / "c.json").write_text(json.dumps(hdr))
        with pytest.raises(FormatError):
            io.read_cube(tmp_path / "c")

    def test_missing_header_key(self, tmp_path):
        io.write_cube(small_cube(), tmp_path / "c")
        hdr = json.loads((tmp_path / "c.json").read_text())
        del hdr["bands"]
        (tmp_path / "c.json").write_text(json.dumps(hdr))
        with pytest.raises(FormatError, match="bands"):
            io.read_cube(tmp_path / "c")

    def test_malformed_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(FormatError):
            io.read_cube(tmp_path / "c")


class TestLibrary:
    def write(self, tmp_path, text):
        p = tmp_path / "lib.csv"
        p.write_text(text)
        return p

    def test_sorted_by_wavelength(self, tmp_path):
        p = self.write(tmp_path, "wl,a,b\n600,0.3,0.4\n400,0.1,0.2\n500,0.5,0.6\n")
        wl, E = io.read_spectral_library(p)
        np.testing.assert_array_equal(wl, [400, 500, 600])
        np.testing.assert_array_equal(E, [[0.1, 0.2], [0.5, 0.6], [0.3, 0.4]])

    def test_duplicate_wavelength(self, tmp_path):
        p = self.write(tmp_path, "wl,a\n400,0.1\n400,0.2\n")
        with pytest.raises(FormatError, match="duplicate"):
            io.read_spectral_library(p)

    def test_ragged_row(self, tmp_path):
        p = self.write(tmp_path, "wl,a,b\n400,0.1,0.2\n500,0.3\n")
        with pytest.raises(FormatError, match="row 3"):
            io.read_spectral_library(p)

    def test_non_numeric(self, tmp_path):
        p = self.write(tmp_path, "wl,a\n400,abc\n")
        with pytest.raises(FormatError, match="non-numeric"):
            io.read_spectral_library(p)

    @pytest.mark.parametrize("text", ["", "wl,a\n", "wl\n400\n"])
    def test_empty_or_no_spectra(self, tmp_path, text):
        with pytest.raises(FormatError):
            io.read_spectral_library(self.write(tmp_path, text))

    def test_csv_round_trip(self, tmp_path):
        E = np.random.default_rng(0).uniform(0, 1, (5, 3))
        io.write_spectra_csv(E, tmp_path / "e.csv", wavelengths=[1, 2, 3, 4, 5])
        wl, back = io.read_spectral_library(tmp_path / "e.csv")
        np.testing.assert_array_equal(back, E)
        np.testing.assert_array_equal(wl, [1, 2, 3, 4, 5])


class TestPgm:
    def test_to_bytes(self):
        np.testing.assert_array_equal(io.to_bytes([0.0, 0.5, 1.0, -0.2, 1.7, 1 / 255]),
                                      [0, 128, 255, 0, 255, 1])

    def test_all_ones(self, tmp_path):
        p = io.write_pgm(io.to_bytes(np.ones((2, 3))), tmp_path / "a.pgm")
        blob = p.read_bytes()
        assert blob == b"P5\n3 2\n255\n" + b"\xff" * 6

    def test_round_trip(self, tmp_path):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        io.write_pgm(img, tmp_path / "a.pgm")
        np.testing.assert_array_equal(io.read_pgm(tmp_path / "a.pgm"), img)

    def test_maps_are_row_major(self, tmp_path):
        A = np.array([[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]])
        (p,) = io.write_abundance_maps(A, 3, 2, tmp_path)
        assert p.name == "abundance_0.pgm"
        np.testing.assert_array_equal(io.read_pgm(p), [[0, 255, 0], [255, 0, 0]])

    def test_map_size_mismatch(self, tmp_path):
        with pytest.raises(io.UnmixError):
            io.write_abundance_maps(np.ones((1, 5)), 3, 2, tmp_path)

    def test_not_pgm(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(FormatError):
            io.read_pgm(tmp_path / "x.pgm")


def cfg():
    hp = Hyperparams(widths_e=(4, 8), widths_a=(5,))
    return io.config_dict(hp, init="vca", seed=3, K=2, P=10, N=16, width=4, height=4)


class TestConfig:
    def test_round_trip(self, tmp_path):
        io.write_results(tmp_path / "r.json", cfg(), {"armse": None}, [], np.ones((10, 2)), 1.5)
        hp, rest = io.read_config(tmp_path / "r.json")
        assert hp == Hyperparams(widths_e=(4, 8), widths_a=(5,))
        assert rest == {"init": "vca", "seed": 3, "K": 2, "P": 10, "N": 16,
                        "width": 4, "height": 4}

    def test_missing_alpha_is_named(self):
        d = cfg()
        del d["alpha"]
        with pytest.raises(FormatError, match="alpha"):
            io.parse_config(d)

    def test_unknown_key(self):
        with pytest.raises(FormatError, match="gamma"):
            io.parse_config(dict(cfg(), gamma=1))

    def test_invalid_value(self):
        with pytest.raises(io.UnmixError):
            io.parse_config(dict(cfg(), activation="gelu"))

    def test_results_document(self, tmp_path):
        hist = [{"iter": 0, "j": 2.0, "j_e": 1.0}, {"iter": 1, "j": 1.5, "j_e": 0.7}]
        E = np.arange(6.0).reshape(3, 2)
        io.write_results(tmp_path / "r.json", cfg(), {}, hist, E, 0.25)
        doc = io.read_results(tmp_path / "r.json")
        assert doc["endmembers"] == [[0.0, 2.0, 4.0], [1.0, 3.0, 5.0]]
        assert doc["history"] == hist
        assert doc["timing_seconds"] == 0.25

    def test_empty_history_is_valid(self, tmp_path):
        io.write_results(tmp_path / "r.json", cfg(), {}, [], np.ones((2, 2)), 0.0)
        assert io.read_results(tmp_path / "r.json")["history"] == []

    def test_results_missing_key(self, tmp_path):
        (tmp_path / "r.json").write_text(json.dumps({"config": cfg()}))
        with pytest.raises(FormatError, match="metrics"):
            io.read_results(tmp_path / "r.json")
