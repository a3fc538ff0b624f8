import numpy as np
import pytest

from localizer_lab.lattice import (
    OffsetError,
    Pattern,
    Region,
    build_cubic_window,
    check_offset,
    load_pattern_csv,
    sites_in_ball,
)


def test_cubic_window_order_and_count():
    pat = build_cubic_window(2, 2)
    assert len(pat) == 25
    assert pat.d == 2
    # lexicographic order, first coordinate slowest
    assert np.array_equal(pat.sites[0], [-2, -2])
    assert np.array_equal(pat.sites[1], [-2, -1])
    assert np.array_equal(pat.sites[-1], [2, 2])
    order = np.lexsort(pat.sites.T[::-1])
    assert np.array_equal(order, np.arange(len(pat)))


def test_cubic_window_budget():
    with pytest.raises(ValueError):
        build_cubic_window(3, 200)  # 401^3 sites
    with pytest.raises(ValueError):
        build_cubic_window(2, 0)


def test_index_roundtrip():
    pat = build_cubic_window(2, 3)
    for i in (0, 7, len(pat) - 1):
        assert pat.index_of(pat.sites[i]) == i
    assert (0, 0) in pat._index
    assert [0, 0] in pat
    assert [9, 9] not in pat


def test_pattern_rejects_duplicates_and_bad_shape():
    with pytest.raises(ValueError):
        Pattern(d=2, sites=np.array([[0, 0], [0, 0]], dtype=float))
    with pytest.raises(ValueError):
        Pattern(d=2, sites=np.zeros((3, 3)))


def test_in_radius_center_and_offset():
    pat = build_cubic_window(2, 5)
    # bbox [-5,5]^2 padded by 0.5: in-radius from origin is 5.5
    assert pat.in_radius((0.0, 0.0)) == pytest.approx(5.5)
    assert pat.in_radius((0.5, 0.5)) == pytest.approx(5.0)
    assert pat.in_radius((4.0, 0.0)) == pytest.approx(1.5)


def test_ball_region_and_helper_agree():
    pat = build_cubic_window(2, 4)
    idx = sites_in_ball(pat, (0.5, 0.5), 2.0)
    reg = Region.ball((0.5, 0.5), 2.0).select(pat)
    assert np.array_equal(idx, reg)
    dist = np.linalg.norm(pat.sites[idx] - [0.5, 0.5], axis=1)
    assert dist.max() <= 2.0 + 1e-12
    outside = np.setdiff1d(np.arange(len(pat)), idx)
    dist_out = np.linalg.norm(pat.sites[outside] - [0.5, 0.5], axis=1)
    assert dist_out.min() > 2.0


def test_halfspace_and_explicit_regions():
    pat = build_cubic_window(2, 3)
    hs = Region.halfspace(0, 0.5).select(pat)
    assert np.all(pat.sites[hs, 0] >= 0.5)
    assert len(hs) == 3 * 7
    ex = Region.explicit([5, 2, 9]).select(pat)
    assert np.array_equal(ex, [2, 5, 9])  # pattern order, not given order
    assert np.array_equal(Region.all().select(pat), np.arange(len(pat)))


def test_region_contains_matches_select():
    pat = build_cubic_window(2, 3)
    for reg in (Region.ball((0.5, 0.5), 2.2), Region.halfspace(1, -0.5)):
        sel = set(reg.select(pat).tolist())
        mask = reg.contains(pat.sites)
        assert sel == set(np.flatnonzero(mask).tolist())


def test_offset_guard():
    pat = build_cubic_window(2, 3)
    z = check_offset(pat, (0.5, 0.5))
    assert np.array_equal(z, [0.5, 0.5])
    with pytest.raises(OffsetError):
        check_offset(pat, (0.05, 0.5))  # too close to the x1 = 0 plane
    with pytest.raises(OffsetError):
        check_offset(pat, (0.5, 1.0))
    with pytest.raises(OffsetError):
        check_offset(pat, (0.5,))  # wrong dimension


def test_offset_guard_is_per_coordinate_plane():
    # guard measures distance to occupied coordinate values, not to sites
    pat = Pattern(d=2, sites=np.array([[0, 0], [4, 4]], dtype=float))
    check_offset(pat, (2.0, 2.0))
    with pytest.raises(OffsetError):
        check_offset(pat, (3.95, 2.0))


def test_load_pattern_csv(tmp_path):
    path = tmp_path / "sites.csv"
    pts = np.array([[1.5, 0.0], [0.0, 0.0], [0.0, 2.5]])
    np.savetxt(path, pts, delimiter=",")
    pat = load_pattern_csv(path)
    assert pat.d == 2
    assert len(pat) == 3
    assert np.array_equal(pat.sites[0], [0.0, 0.0])  # re-sorted
    assert pat.min_distance == pytest.approx(1.5)
    bad = tmp_path / "dup.csv"
    np.savetxt(bad, np.array([[0.0, 0.0], [0.0, 0.0]]), delimiter=",")
    with pytest.raises(ValueError):
        load_pattern_csv(bad)


def test_fingerprint_stability():
    a = build_cubic_window(2, 3)
    b = build_cubic_window(2, 3)
    c = build_cubic_window(2, 4)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()
