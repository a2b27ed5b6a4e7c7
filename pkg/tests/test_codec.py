import numpy as np
import pytest
from hypothesis import given, strategies as st

from safeplan import codec


def test_symlog_known_points():
    assert codec.symlog(0.0) == 0.0
    assert np.isclose(codec.symlog(np.e - 1), 1.0, rtol=1e-12)
    assert np.isclose(codec.symlog(-(np.e**2 - 1)), -2.0, rtol=1e-12)


def test_symexp_known_points():
    assert codec.symexp(0.0) == 0.0
    assert np.isclose(codec.symexp(1.0), np.e - 1, rtol=1e-12)


@pytest.mark.parametrize("v", [1e-6, -1e-6, 1.0, -1.0, 1e6, -1e6])
def test_symexp_inverts_symlog(v):
    assert np.isclose(codec.symexp(codec.symlog(v)), v, rtol=1e-9)


def test_symlog_rejects_nonfinite():
    with pytest.raises(ValueError):
        codec.symlog(np.nan)
    with pytest.raises(ValueError):
        codec.symexp(np.inf)


def test_symexp_overflow_guard():
    with pytest.raises(ValueError):
        codec.symexp(800.0)


@given(st.floats(min_value=-1e6, max_value=1e6))
def test_symlog_is_odd(x):
    assert codec.symlog(-x) == -codec.symlog(x)


@given(
    st.floats(min_value=-1e6, max_value=1e6),
    st.floats(min_value=1e-7, max_value=1e3),
)
def test_symlog_strictly_increasing(x, gap):
    gap *= max(1.0, abs(x))  # keep the gap resolvable after log compression
    assert codec.symlog(x + gap) > codec.symlog(x)


def test_twohot_exact_center():
    p = codec.twohot_encode(3.0)
    assert p[23] == 1.0
    assert np.count_nonzero(p) == 1


def test_twohot_interpolates():
    p = codec.twohot_encode(2.4)
    assert np.isclose(p[22], 0.6)
    assert np.isclose(p[23], 0.4)
    assert np.isclose(codec.twohot_decode(p), 2.4)


def test_twohot_clamps_out_of_range():
    hi = codec.twohot_encode(25.0)
    assert hi[-1] == 1.0
    lo = codec.twohot_encode(-25.0)
    assert lo[0] == 1.0


def test_twohot_at_most_two_adjacent_nonzero(rng):
    for x in rng.uniform(-25, 25, size=200):
        p = codec.twohot_encode(x)
        nz = np.nonzero(p)[0]
        assert 1 <= nz.size <= 2
        if nz.size == 2:
            assert nz[1] - nz[0] == 1
        assert p.sum() == 1.0


def test_twohot_roundtrip(rng):
    xs = rng.uniform(-20, 20, size=1000)
    for x in xs:
        assert abs(codec.twohot_decode(codec.twohot_encode(x)) - x) <= 1e-9


def test_twohot_batch_matches_scalar(rng):
    xs = rng.uniform(-25, 25, size=64)
    batch = codec.twohot_encode_batch(xs)
    for i, x in enumerate(xs):
        np.testing.assert_array_equal(batch[i], codec.twohot_encode(x))


def test_decode_onehot_and_uniform():
    lat = codec.DEFAULT_LATTICE
    onehot = np.zeros(lat.size)
    onehot[25] = 1.0  # center 5
    assert codec.twohot_decode(onehot) == 5.0
    uniform = np.full(lat.size, 1.0 / lat.size)
    assert abs(codec.twohot_decode(uniform)) < 1e-12


def test_decode_rejects_malformed():
    lat = codec.DEFAULT_LATTICE
    with pytest.raises(ValueError):
        codec.twohot_decode(np.full(lat.size, 0.5))
    bad = np.zeros(lat.size)
    bad[0], bad[1] = 1.5, -0.5
    with pytest.raises(ValueError):
        codec.twohot_decode(bad)


def test_lattice_validation():
    with pytest.raises(ValueError):
        codec.BinLattice(np.array([0.0, 1.0]))  # not symmetric
    with pytest.raises(ValueError):
        codec.BinLattice(np.array([1.0, -1.0]))  # not increasing
