import json

import numpy as np

from pumpshape import io
from pumpshape.detection import CountMap
from pumpshape.field_optics import FarFieldMap
from pumpshape.shaper import TraceEntry
from pumpshape.turbulence import generate_screen

from conftest import lab_like


def test_screen_round_trip(tmp_path):
    s = generate_screen(lab_like(), 64, 12.5e-6, 4)
    io.write_screen(s, tmp_path / "screen.bin")
    data, meta = io.read_grid(tmp_path / "screen.bin")
    assert np.array_equal(data, s.phase.astype("<f4"))
    assert meta["seed"] == 4 and meta["dtype"] == "float32" and meta["layout"] == "row-major"
    assert meta["n"] == 64 and meta["lambda"] == 808e-9 and "scaling_note" in meta
    assert (tmp_path / "screen.bin").stat().st_size == 64 * 64 * 4


def test_pattern_sidecar(tmp_path):
    ffm = FarFieldMap(np.arange(16.0).reshape(4, 4), 2e-6, 0.3, 404e-9, origin=(1e-6, 0.0))
    io.write_pattern(ffm, tmp_path / "p.bin", {"beta": 0.7})
    data, meta = io.read_grid(tmp_path / "p.bin")
    assert np.array_equal(data, ffm.intensity)
    assert meta["pitch"] == 2e-6 and meta["origin"] == [1e-6, 0.0] and meta["beta"] == 0.7


def test_countmap_exports(tmp_path):
    cm = CountMap(np.array([[1, 2], [3, 4]]), np.array([0.0, 1.0]), np.array([5.0, 6.0]), 10.0,
                  seed=[3, 1])
    csv_path, bin_path = io.write_countmap(cm, tmp_path / "scan")
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "row,col,x,y,counts" and rows[2] == "0,1,1.0,5.0,2"
    data, meta = io.read_grid(bin_path)
    assert np.array_equal(data, cm.counts) and meta["corrected"] is False
    assert meta["seed"] == [3, 1] and meta["exposure"] == 10.0


def test_pgm_round_trip(tmp_path):
    img = np.linspace(-1, 1, 60).reshape(6, 10)
    io.write_pgm(img, tmp_path / "a.pgm")
    back = io.read_pgm(tmp_path / "a.pgm")
    assert back.shape == (6, 10) and back.min() == 0 and back.max() == 255
    assert np.array_equal(back, io.to_graymap(img))
    assert not np.any(io.to_graymap(np.ones((3, 3))))


def test_trace_csv(tmp_path):
    io.write_trace_csv([TraceEntry(0, 0, 0.0, 1.5), TraceEntry(1, 0, 1.25, 2.0)],
                       tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["measurement,iteration,probe_phase,value", "0,0,0.0,1.5", "1,0,1.25,2.0"]


def test_json_is_deterministic(tmp_path):
    obj = {"b": np.float64(1.5), "a": [np.int64(2), np.bool_(True)], "c": np.zeros(2)}
    io.dump_json(obj, tmp_path / "x.json")
    text = (tmp_path / "x.json").read_text()
    assert json.loads(text) == {"a": [2, True], "b": 1.5, "c": [0.0, 0.0]}
    assert text.index('"a"') < text.index('"b"') and text.endswith("\n")
