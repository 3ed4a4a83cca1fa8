import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greygp.datasets import (COVERAGES, TRUE_PERIOD, DomainSpec, band_mask, coverage_band,
                             evaluation_grid, load_csv, sample_coverage, subset_coverage,
                             toy_surface, write_csv)
from greygp.errors import InvalidArgumentError


def test_toy_surface_examples():
    assert toy_surface(math.pi / 8, 4.0) == pytest.approx(2.0, rel=1e-15)
    assert toy_surface(0.0, -3.7) == 0.0
    assert toy_surface(2.3, 0.0) == 0.0
    np.testing.assert_array_equal(toy_surface(np.array([0.0, 1.0]), np.array([1.0, 0.0])), [0.0, 0.0])


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_toy_surface_is_odd_in_x1(x1, x2):
    assert toy_surface(-x1, x2) == -toy_surface(x1, x2)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_true_period(x1, x2):
    # exact in real arithmetic; floating-point shift error bounded by ulp(x1)
    assert toy_surface(x1 + TRUE_PERIOD, x2) == pytest.approx(toy_surface(x1, x2), abs=1e-12 * (1 + abs(x1)) * (1 + abs(x2)))


@pytest.mark.parametrize("pct, per_decile, n", [(100, 100, 1000), (20, 200, 400), (10, 100, 100)])
def test_sample_sizes(pct, per_decile, n):
    data = sample_coverage(DomainSpec(points_per_decile=per_decile), pct, 0)
    assert data.n == n
    assert data.coverage == pct


@pytest.mark.parametrize("pct", COVERAGES)
def test_samples_inside_band(pct):
    domain = DomainSpec()
    data = sample_coverage(domain, pct, pct)
    lo, hi = coverage_band(domain.x1_range, pct)
    assert np.all((data.X[:, 0] >= lo) & (data.X[:, 0] <= hi))
    assert np.all((data.X[:, 1] >= -5) & (data.X[:, 1] <= 5))
    # full x2 span in practice
    assert data.X[:, 1].min() < -4 and data.X[:, 1].max() > 4
    # exactly points_per_decile in each covered tenth
    counts = np.histogram(data.X[:, 0], bins=np.linspace(0, 10, 11))[0]
    assert list(counts[: pct // 10]) == [100] * (pct // 10)


def test_sample_is_deterministic():
    a = sample_coverage(DomainSpec(), 10, 42)
    b = sample_coverage(DomainSpec(), 10, 42)
    c = sample_coverage(DomainSpec(), 10, 43)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_noise_free_sampling_matches_surface():
    data = sample_coverage(DomainSpec(noise_sd=0.0), 30, 1)
    np.testing.assert_array_equal(data.y, toy_surface(data.X[:, 0], data.X[:, 1]))


@pytest.mark.parametrize("pct", [0, 15, 110, 10.5, True])
def test_invalid_coverage(pct):
    with pytest.raises(InvalidArgumentError):
        sample_coverage(DomainSpec(), pct, 0)


def test_domain_validation():
    with pytest.raises(InvalidArgumentError):
        DomainSpec(x1_range=(1.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        DomainSpec(x1_range=(0.0, 3.0))  # under three periods
    with pytest.raises(InvalidArgumentError):
        DomainSpec(noise_sd=-0.1)
    with pytest.raises(InvalidArgumentError):
        DomainSpec(grid_resolution=(0, 5))


def test_default_domain_period_count():
    span = DomainSpec().x1_range[1] - DomainSpec().x1_range[0]
    assert span / TRUE_PERIOD == pytest.approx(20 / math.pi)


def test_evaluation_grid_corners():
    domain = DomainSpec(x1_range=(0.0, 5.0), x2_range=(0.0, 1.0), grid_resolution=(2, 2))
    X, y = evaluation_grid(domain)
    np.testing.assert_array_equal(X, [[0, 0], [0, 1], [5, 0], [5, 1]])
    np.testing.assert_array_equal(y, toy_surface(X[:, 0], X[:, 1]))


def test_evaluation_grid_default():
    X, y = evaluation_grid(DomainSpec())
    assert X.shape == (2500, 2) and y.shape == (2500,)
    assert np.all(y[X[:, 1] == 0.0] == 0.0)


def test_band_mask():
    X = np.array([[0.0, 0], [2.0, 0], [2.01, 0], [10.0, 0]])
    np.testing.assert_array_equal(band_mask(X, (0.0, 10.0), 20), [True, True, False, False])
    assert band_mask(X, (0.0, 10.0), 100).all()


# -- CSV -------------------------------------------------------------------------


def write(tmp_path, text, name="d.csv", newline="\n"):
    path = tmp_path / name
    path.write_bytes(text.replace("\n", newline).encode())
    return path


def test_load_three_rows(tmp_path):
    data = load_csv(write(tmp_path, "x1,x2,y\n0,1,2\n0.5,1.5,2.5\n1,2,3\n"))
    assert data.n == 3 and data.coverage == "external"
    np.testing.assert_array_equal(data.y, [2, 2.5, 3])


def test_load_crlf_and_bom(tmp_path):
    path = tmp_path / "w.csv"
    path.write_bytes(b"\xef\xbb\xbfx1,x2,y\r\n0,1,2\r\n1,2,3\r\n")
    assert load_csv(path).n == 2


@pytest.mark.parametrize("text, needle", [
    ("x1,x2,y\n0,1,2\n0,abc,3\n", "line 3"),
    ("x1,x2,y\n0,1,2\n0,1\n", "line 3"),
    ("x1,x2,y\n0,1,2\n0,1,nan\n", "line 3"),
    ("a,b,c\n0,1,2\n1,2,3\n", "line 1"),
    ("x1,x2,y\n0,1,2\n", "at least 2"),
])
def test_load_errors(tmp_path, text, needle):
    with pytest.raises(InvalidArgumentError, match=needle):
        load_csv(write(tmp_path, text))


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv")


def test_external_coverage_uses_empirical_range(tmp_path):
    rows = "\n".join(f"{k / 10},0,{k}" for k in range(11))
    data = load_csv(write(tmp_path, "x1,x2,y\n" + rows + "\n"))
    sub = subset_coverage(data, 30)
    assert np.all(sub.X[:, 0] <= 0.3)
    assert sub.n == 4 and sub.coverage == 30


def test_csv_roundtrip(tmp_path):
    data = sample_coverage(DomainSpec(), 10, 5)
    path = tmp_path / "out.csv"
    write_csv(data, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.y, data.y)
    assert b"\r" not in path.read_bytes()
