import csv
from pathlib import Path

import numpy as np
import pytest

from woit.cli import main
from woit.metrics import image_rmse
from woit.ppm import decode_u8, read_ppm

DATA = Path(__file__).parent / "data"

TINY_SCENE = """
camera pos=0,0,0 forward=0,0,1 fov=60
plane d=1.0 alpha=0.25 transmission=0,0,0 radiance=0,0,0
opaque_backdrop d=2.0 color=0.85,0.45,0.12
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestGraph:
    def test_single_plane_curve_steps(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(["graph", "--scene", "single-plane", "--methods", "wavelet",
                     "--rank", "3", "--samples", "64", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["z", "truth", "wavelet"]
        body = [(float(z), float(t), float(w)) for z, t, w in rows[1:]]
        assert len(body) == 64
        for z, t, w in body:
            expect = 1.0 if z < 0.5 else 0.75
            assert t == pytest.approx(expect, abs=1e-6)
            if abs(z - 0.5) > 1.5 / 16:  # skip the interpolation ramp at the step
                assert w == pytest.approx(expect, abs=1e-3)
        # fixed 6-decimal formatting
        with open(out) as fh:
            line = fh.readlines()[1].strip()
        assert all(len(cell.split(".")[1]) == 6 for cell in line.split(","))

    def test_car_fog_truth_shape(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(["graph", "--scene", "car-fog", "--methods", "wavelet,mlab4",
                     "--samples", "256", "--out", str(out)]) == 0
        rows = read_rows(out)
        truth = np.array([float(r[1]) for r in rows[1:]])
        # exponential decay in fog, strictly below 1 early, big glass drops
        assert truth[0] > 0.97 and truth[-1] < 0.2
        drops = np.diff(truth)
        assert drops.min() < -0.1  # at least one sudden glass step
        assert np.all(drops <= 1e-9)  # visibility never increases

    def test_empty_pixel_truth_is_one(self, tmp_path):
        scene_file = tmp_path / "tiny.scene"
        scene_file.write_text(
            TINY_SCENE.replace("plane d=1.0", "plane extent=0.01,0.01 d=1.0"),
            encoding="utf-8")
        out = tmp_path / "curve.csv"
        assert main(["graph", "--scene", str(scene_file), "--pixel", "0,0",
                     "--samples", "32", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert all(float(r[1]) == 1.0 for r in rows[1:])
        assert all(float(r[2]) == 1.0 for r in rows[1:])

    def test_unknown_scene_usage_error(self, tmp_path, capsys):
        rc = main(["graph", "--scene", "nope", "--out", str(tmp_path / "x.csv")])
        assert rc == 2
        assert "valid presets" in capsys.readouterr().err

    def test_unknown_method_usage_error(self, tmp_path):
        rc = main(["graph", "--scene", "single-plane", "--methods", "magic",
                   "--out", str(tmp_path / "x.csv")])
        assert rc == 2


class TestRender:
    def test_ppm_output_and_determinism(self, tmp_path):
        a = tmp_path / "a.ppm"
        b = tmp_path / "b.ppm"
        args = ["render", "--scene", "smoke-fire", "--method", "wavelet",
                "--width", "32", "--height", "24", "--workers", "1"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        raw = a.read_bytes()
        assert raw.startswith(b"P6\n32 24\n255\n")
        img = read_ppm(a)
        assert img.shape == (24, 32, 3)

    def test_seed_override_changes_particles(self, tmp_path):
        a = tmp_path / "a.ppm"
        b = tmp_path / "b.ppm"
        args = ["render", "--scene", "smoke-fire", "--width", "24", "--height", "24",
                "--workers", "1"]
        assert main(args + ["--seed", "1", "--out", str(a)]) == 0
        assert main(args + ["--seed", "2", "--out", str(b)]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_io_failure_exit_code(self, tmp_path, capsys):
        rc = main(["render", "--scene", "single-plane", "--width", "8", "--height", "8",
                   "--out", str(tmp_path / "missing_dir" / "x.ppm")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_cli_method_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["render", "--scene", "single-plane", "--method", "magic",
                  "--out", str(tmp_path / "x.ppm")])
        assert exc.value.code == 2

    def test_matches_golden_abuffer_image(self, tmp_path):
        out = tmp_path / "g.ppm"
        assert main(["render", "--scene", "glass-stack", "--method", "abuffer",
                     "--width", "48", "--height", "48", "--workers", "1",
                     "--out", str(out)]) == 0
        got = read_ppm(out).astype(np.int16)
        want = read_ppm(DATA / "glass_stack_abuffer_48.ppm").astype(np.int16)
        # one code of slack: libm exp/log may differ across platforms by an ulp
        assert np.abs(got - want).max() <= 1

    def test_wavelet_near_golden(self, tmp_path):
        out = tmp_path / "w.ppm"
        assert main(["render", "--scene", "glass-stack", "--method", "wavelet",
                     "--rank", "3", "--normalize", "off", "--width", "48",
                     "--height", "48", "--workers", "1", "--out", str(out)]) == 0
        got = decode_u8(read_ppm(out))
        want = decode_u8(read_ppm(DATA / "glass_stack_abuffer_48.ppm"))
        assert image_rmse(got, want) < 0.02


class TestCompare:
    def test_table_with_self_compare(self, tmp_path):
        out = tmp_path / "table.csv"
        assert main(["compare", "--scene", "glass-stack",
                     "--methods", "abuffer,wavelet,wboit,mlab4",
                     "--width", "48", "--height", "48", "--normalize", "off",
                     "--workers", "1", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["method", "rmse_vs_abuffer", "psnr_db",
                           "curve_l1", "curve_l2", "curve_linf"]
        table = {r[0]: r[1:] for r in rows[1:]}
        assert set(table) == {"abuffer", "wavelet", "wboit", "mlab4"}
        assert float(table["abuffer"][0]) == 0.0
        assert table["abuffer"][1] == "inf"
        assert float(table["wavelet"][0]) < float(table["wboit"][0])

    def test_unknown_method_in_list(self, tmp_path):
        rc = main(["compare", "--scene", "glass-stack", "--methods", "wavelet,magic",
                   "--out", str(tmp_path / "t.csv")])
        assert rc == 2


class TestBench:
    @pytest.mark.parametrize("rank,touch,nbytes", [(0, 2, 8), (3, 5, 64), (4, 6, 128)])
    def test_accounting(self, rank, touch, nbytes, tmp_path, capsys):
        assert main(["bench", "--scene", "glass-stack", "--rank", str(rank),
                     "--width", "32", "--height", "32", "--workers", "1"]) == 0
        out = capsys.readouterr().out
        fields = dict(line.split(": ") for line in out.strip().splitlines())
        assert fields["touches_per_insert"] == str(touch)
        assert fields["touches_per_eval"] == str(touch)
        assert fields["bytes_per_pixel"] == str(nbytes)
        assert int(fields["fragments"]) > 0
        assert float(fields["wall_time_s"]) >= 0.0
