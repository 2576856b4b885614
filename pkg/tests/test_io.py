import numpy as np
import pytest

from topopt2d import BoundaryConditions, InputError
from topopt2d.io import (read_density_csv, read_density_file, read_pgm,
                         write_density_csv, write_pgm)


def test_pgm_format(tmp_path):
    field = np.array([[0.0, 0.5], [1.0, 0.25]])
    path = tmp_path / "x.pgm"
    write_pgm(path, field)
    text = path.read_text().splitlines()
    assert text[0] == "P2"
    assert text[1] == "2 2"
    assert text[2] == "255"
    assert text[3].split() == ["0", "128"]
    assert text[4].split() == ["255", "64"]


def test_pgm_round_trip_quantized(tmp_path):
    rng = np.random.default_rng(0)
    field = rng.uniform(0, 1, (4, 6))
    path = tmp_path / "x.pgm"
    write_pgm(path, field)
    back = read_pgm(path)
    assert back.shape == field.shape
    assert np.abs(back - field).max() <= 0.5 / 255 + 1e-12


def test_pgm_rejects_out_of_range(tmp_path):
    with pytest.raises(InputError):
        write_pgm(tmp_path / "x.pgm", np.array([[1.5]]))


def test_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(1)
    field = rng.uniform(0, 1, (5, 3))
    path = tmp_path / "x.csv"
    write_density_csv(path, field)
    assert np.array_equal(read_density_csv(path), field)


def test_read_density_file_dispatch(tmp_path):
    field = np.array([[0.0, 1.0]])
    write_density_csv(tmp_path / "a.csv", field)
    write_pgm(tmp_path / "a.pgm", field)
    assert np.array_equal(read_density_file(tmp_path / "a.csv"), field)
    assert np.array_equal(read_density_file(tmp_path / "a.pgm"), field)
    with pytest.raises(InputError):
        read_density_file(tmp_path / "a.txt")


def test_bc_json_round_trip(tmp_path):
    bc = BoundaryConditions([0, 1, 4], [9, 11], [-1.0, 0.5])
    path = tmp_path / "bc.json"
    bc.save_json(path)
    back = BoundaryConditions.load_json(path)
    assert np.array_equal(back.fixed_dofs, bc.fixed_dofs)
    assert np.array_equal(back.load_dofs, bc.load_dofs)
    assert np.array_equal(back.load_values, bc.load_values)


def test_bc_validation():
    with pytest.raises(InputError):
        BoundaryConditions([], [3], [1.0])
    with pytest.raises(InputError):
        BoundaryConditions([0], [], [])
    with pytest.raises(InputError):
        BoundaryConditions([0, 3], [3], [1.0])   # load on a fixed DOF
