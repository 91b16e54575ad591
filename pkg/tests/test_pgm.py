import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shepard_dp.geometry import BoxDomain, grid_nodes
from shepard_dp.pgm import PGMParseError, admissible_from_luminance, load_obstacle_map, parse_pgm, read_pgm, write_pgm

from conftest import DATA

MALFORMED = sorted((DATA / "malformed").glob("*.pgm"))


def test_two_by_two_example():
    mask = load_obstacle_map(DATA / "twin2x2_ascii.pgm")
    np.testing.assert_array_equal(mask.admissible, [[False, True], [True, False]])


def test_binary_twin_identical():
    a = load_obstacle_map(DATA / "twin2x2_ascii.pgm")
    b = load_obstacle_map(DATA / "twin2x2_binary.pgm")
    np.testing.assert_array_equal(a.admissible, b.admissible)


def test_archipelago_twins(archipelago_path):
    a, ma = read_pgm(archipelago_path)
    b, mb = read_pgm(archipelago_path.with_name("archipelago64_ascii.pgm"))
    assert a.shape == (64, 64) and ma == mb == 255
    np.testing.assert_array_equal(a, b)


def test_corpus_has_five_files():
    assert len(MALFORMED) == 5


@pytest.mark.parametrize("path", MALFORMED, ids=lambda p: p.stem)
def test_malformed_files_report_byte_offset(path):
    with pytest.raises(PGMParseError, match=r"at byte \d+$") as info:
        read_pgm(path)
    assert 0 <= info.value.offset <= path.stat().st_size


def test_specific_offsets():
    with pytest.raises(PGMParseError) as e:
        parse_pgm(b"P5\nx2 2\n255\n")
    assert e.value.offset == 3
    with pytest.raises(PGMParseError) as e:
        parse_pgm(b"P2\n2 2\n255\n0 300 0 0\n")
    assert e.value.offset == 13
    with pytest.raises(PGMParseError) as e:
        parse_pgm(b"P5\n2 2\n255\n\x00")
    assert "truncated" in str(e.value)


def test_comments_and_sixteen_bit():
    px, maxval = parse_pgm(b"P5 # c\n2 # w\n1\n65535\n\x01\x00\xff\xff")
    assert maxval == 65535 and px.tolist() == [[256, 65535]]
    assert admissible_from_luminance(px, maxval).tolist() == [[False, True]]


def test_threshold_is_128_of_255():
    assert admissible_from_luminance(np.array([127, 128]), 255).tolist() == [False, True]


@given(
    st.integers(1, 12),
    st.integers(1, 12),
    st.sampled_from([1, 15, 255, 1000, 65535]),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)
def test_write_read_roundtrip(tmp_path_factory, w, h, maxval, binary, seed):
    px = np.random.default_rng(seed).integers(0, maxval + 1, size=(h, w))
    path = tmp_path_factory.mktemp("pgm") / "x.pgm"
    write_pgm(path, px, maxval=maxval, binary=binary)
    got, mv = read_pgm(path)
    assert mv == maxval
    np.testing.assert_array_equal(got, px)


def test_map_geo_transform(archipelago_path):
    mask = load_obstacle_map(archipelago_path, origin=(-3.2, 3.2), pixel_size=(0.1, 0.1))
    nodes = grid_nodes(BoxDomain([-3.15, -3.15], [3.15, 3.15]), [64, 64], mask)
    assert nodes.n == int(mask.admissible.sum())
