"""File-format round trips and the config grammar."""

import numpy as np
import pytest

from strf import imgio
from strf.config import parse_config
from strf.errors import DataError, UsageError


class TestImageFormats:
    def test_ppm_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(13, 17, 3))
        path = str(tmp_path / "x.ppm")
        imgio.write_ppm(path, img)
        quantized = imgio.to_uint8(img)
        again = imgio.read_ppm(path)
        np.testing.assert_array_equal(imgio.to_uint8(again), quantized)
        imgio.write_ppm(path, again)
        assert open(path, "rb").read() == open(path, "rb").read()

    def test_pfm_round_trip_preserves_floats(self, tmp_path):
        depth = np.linspace(0.5, 3.0, 7 * 9).reshape(7, 9)
        path = str(tmp_path / "d.pfm")
        imgio.write_pfm(path, depth)
        again = imgio.read_pfm(path)
        np.testing.assert_allclose(again, depth, rtol=1e-7)

    def test_flow_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        flow = rng.normal(scale=4.0, size=(6, 8, 2))
        path = str(tmp_path / "f.flo")
        imgio.write_flow(path, flow)
        again = imgio.read_flow(path)
        np.testing.assert_allclose(again, flow, atol=1e-6)

    def test_flow_magic_is_checked(self, tmp_path):
        path = tmp_path / "bad.flo"
        path.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(DataError):
            imgio.read_flow(str(path))

    def test_pgm_round_trip(self, tmp_path):
        img = np.linspace(0, 1, 30).reshape(5, 6)
        path = str(tmp_path / "p.pgm")
        imgio.write_pgm(path, img)
        again = imgio.read_pgm(path)
        np.testing.assert_allclose(again, np.round(img * 255) / 255, atol=1e-9)

    def test_truncated_ppm_rejected(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + b"\0" * 10)
        with pytest.raises(DataError):
            imgio.read_ppm(str(path))


class TestConfigGrammar:
    def test_sections_keys_comments(self):
        cfg = parse_config(
            "# top comment\n[scene]\nwidth = 32  # trailing\n\n[train]\nlr = 1e-3\nseed=4\n",
            path="t.cfg",
        )
        assert cfg.get_int("scene", "width") == 32
        assert cfg.get_float("train", "lr") == 1e-3
        assert cfg.get_int("train", "seed") == 4
        assert cfg.get("train", "missing") is None
        assert cfg.get_int("train", "missing", 7) == 7

    def test_repeated_keys_accumulate_in_order(self):
        cfg = parse_config("[scene]\nsphere = 1 2 3\nsphere = 4 5 6\n")
        assert cfg.get_all("scene", "sphere") == ["1 2 3", "4 5 6"]

    def test_float_list_values(self):
        cfg = parse_config("[scene]\nlight = 0.3 0.8 0.5\n")
        assert cfg.get_floats("scene", "light") == [0.3, 0.8, 0.5]

    def test_parse_errors_carry_line_numbers(self):
        with pytest.raises(UsageError, match="cfg:3"):
            parse_config("[a]\nx = 1\nbroken line\n", path="cfg")
        with pytest.raises(UsageError, match="cfg:2"):
            parse_config("[a]\nbad key! = 2\n", path="cfg")

    def test_typed_errors_carry_line_numbers(self):
        cfg = parse_config("[a]\nn = twelve\n", path="cfg")
        with pytest.raises(UsageError, match="cfg:2"):
            cfg.get_int("a", "n")

    def test_booleans(self):
        cfg = parse_config("[a]\nyes = true\nno = off\n")
        assert cfg.get_bool("a", "yes") is True
        assert cfg.get_bool("a", "no") is False


def test_env_var_sets_default_threads(monkeypatch, tmp_path):
    import torch

    from strf.cli import _set_threads

    monkeypatch.setenv("STRF_THREADS", "1")
    before = torch.get_num_threads()
    try:
        assert _set_threads(None) == 1
        assert torch.get_num_threads() == 1
    finally:
        torch.set_num_threads(before)
