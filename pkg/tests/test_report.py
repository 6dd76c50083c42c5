import numpy as np

from wasskern.report import format_cell, render_heatmap, write_csv, write_pgm


def test_csv_float_formatting_round_trips(tmp_path):
    path = tmp_path / "t.csv"
    value = 0.1 + 0.2  # not exactly 0.3
    write_csv(path, ["a", "b", "c"], [(1, value, None)])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    cells = lines[1].split(",")
    assert cells[0] == "1"
    assert float(cells[1]) == value
    assert cells[2] == ""


def test_format_cell_kinds():
    assert format_cell(None) == ""
    assert format_cell(3) == "3"
    assert format_cell("x") == "x"
    assert float(format_cell(1.0 / 3.0)) == 1.0 / 3.0


def test_pgm_linear_mapping(tmp_path):
    path = tmp_path / "m.pgm"
    write_pgm(path, np.array([[0.0, 0.5], [1.0, 0.25]]))
    raw = path.read_bytes()
    header, pixels = raw.rsplit(b"\n", 1)[0], raw[-4:]
    assert header.split(b"\n")[0] == b"P5"
    assert header.split(b"\n")[1] == b"2 2"
    assert list(pixels) == [0, 128, 255, 64]


def test_pgm_constant_matrix(tmp_path):
    path = tmp_path / "c.pgm"
    write_pgm(path, np.full((1, 3), 7.0))
    assert list(path.read_bytes()[-3:]) == [0, 0, 0]


def test_heatmap_renders_png(tmp_path):
    path = tmp_path / "h.png"
    render_heatmap(path, np.random.default_rng(0).random((5, 5)), title="t")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
