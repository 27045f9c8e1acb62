import csv
import struct

import numpy as np
import pytest

from quasicontact.hierarchy import CorrelationGrid, TorusGrid, solve_stationary
from quasicontact.hierarchy.io import MAGIC, read_binary, read_csv_values, write_binary, write_csv


@pytest.mark.parametrize("order,layout", [(1, "marks"), (2, "difference"), (3, "difference"),
                                          (2, "full")])
def test_binary_round_trip(tmp_path, order, layout):
    g = TorusGrid(1, 8.0, 8)
    shape = CorrelationGrid.shape_for(order, layout, 2, g)
    vals = np.random.default_rng(order).random(shape)
    k = CorrelationGrid(order, layout, vals, 2, g if layout != "marks" else None)
    write_binary(k, tmp_path / "k.chk")
    back = read_binary(tmp_path / "k.chk")
    assert back.order == order and back.representation == layout and back.n_marks == 2
    np.testing.assert_array_equal(back.values, vals)


def test_binary_header_layout(tmp_path):
    g = TorusGrid(2, 6.5, 8)
    k = CorrelationGrid(2, "difference", np.arange(8 * 8 * 1.0).reshape(8, 8, 1, 1), 1, g)
    write_binary(k, tmp_path / "k.chk")
    raw = (tmp_path / "k.chk").read_bytes()
    magic, n, d, npts, box, m = struct.unpack_from("<4siiidi", raw)
    assert (magic, n, d, npts, box, m) == (MAGIC, 2, 2, 8, 6.5, 1)
    payload = np.frombuffer(raw[struct.calcsize("<4siiidi"):], dtype="<f8")
    np.testing.assert_array_equal(payload, np.arange(64.0))


def test_bad_magic(tmp_path):
    (tmp_path / "bad.chk").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        read_binary(tmp_path / "bad.chk")


def test_csv_columns_and_values(tmp_path, marked_model):
    grids, _ = solve_stationary(marked_model, 2)
    write_csv(grids[1], tmp_path / "k2.csv")
    with open(tmp_path / "k2.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["u1", "s1", "s2", "value"]
    np.testing.assert_array_equal(read_csv_values(tmp_path / "k2.csv"), grids[1].values.ravel())


def test_csv_two_dimensional_columns(tmp_path):
    g = TorusGrid(2, 8.0, 8)
    k = CorrelationGrid(2, "full", np.zeros((8, 8, 8, 8, 1, 1)), 1, g)
    write_csv(k, tmp_path / "k.csv")
    with open(tmp_path / "k.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:4] == ["x1_0", "x1_1", "x2_0", "x2_1"]
