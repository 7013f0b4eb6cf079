import numpy as np
import pytest

from rwrclab.conductance import ConductanceParams, conductances_from_heights
from rwrclab.errors import FormatError
from rwrclab.intensity import Box, IntensityParams, Model
from rwrclab.lattice import build_forest
from rwrclab.snapshot import read_conductance, read_environment, write_conductance, write_environment


@pytest.fixture(scope="module")
def forest():
    p = IntensityParams(Model.DIAGONAL, 10.0, 4, 2**63 + 5)
    _, anc, hf = build_forest(p, Box((-7, 3), 20, 13, 32))
    return p, anc, hf


def test_environment_round_trip(tmp_path, forest):
    p, anc, hf = forest
    path = tmp_path / "env.bin"
    write_environment(path, p.model.code, p.theta, p.n0, p.seed, hf, anc)
    hdr, hf2, anc2 = read_environment(path)
    assert hdr.box == hf.box and hdr.seed == p.seed and hdr.theta == p.theta and hdr.n0 == 4
    assert np.array_equal(hf2.h, hf.h) and np.array_equal(hf2.exact, hf.exact)
    assert np.array_equal(anc2.direction, anc.direction)
    # rewriting gives identical bytes
    path2 = tmp_path / "env2.bin"
    write_environment(path2, p.model.code, p.theta, p.n0, p.seed, hf2, anc2)
    assert path.read_bytes() == path2.read_bytes()


def test_conductance_round_trip(tmp_path, forest):
    p, anc, hf = forest
    cf = conductances_from_heights(hf, anc, ConductanceParams())
    path = tmp_path / "cond.bin"
    write_conductance(path, p.model.code, p.theta, p.n0, p.seed, cf)
    hdr, cf2 = read_conductance(path)
    assert hdr.magic == b"COND1"
    assert np.array_equal(cf2.logw_h, cf.logw_h) and np.array_equal(cf2.logw_v, cf.logw_v)


def test_bad_magic(tmp_path, forest):
    p, anc, hf = forest
    path = tmp_path / "env.bin"
    write_environment(path, 1, p.theta, p.n0, p.seed, hf, anc)
    with pytest.raises(FormatError, match="magic"):
        read_conductance(path)


def test_wrong_size(tmp_path, forest):
    p, anc, hf = forest
    path = tmp_path / "env.bin"
    write_environment(path, 1, p.theta, p.n0, p.seed, hf, anc)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(FormatError):
        read_environment(path)
    path.write_bytes(b"UMB")
    with pytest.raises(FormatError):
        read_environment(path)
