import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import crps_by_quadrature
from rainkit.easyuq import DiscreteCDF
from rainkit.scoring import (
    AlignmentError,
    BIAS_LABELS,
    BiasHistogram,
    ScoreMap,
    bias_bin,
    bias_histogram,
    chi2_homogeneity,
    crps_map,
    f1_score,
    mae_map,
    prf1,
    read_histogram_csv,
    read_score_csv,
    skill_map,
    write_heatmap,
    write_histogram_csv,
    write_score_csv,
)

PUBLISHED_NWP = [43237, 9546, 24404, 32850, 39088, 76155]
PUBLISHED_UNET = [47820, 18540, 17525, 79252, 19671, 42472]


class TestMAE:
    def test_perfect(self, rng):
        y = rng.gamma(1, 2, size=(4, 3, 3))
        assert not mae_map(y, y).values.any()

    def test_constant_bias(self):
        y = np.zeros((1, 2, 3))
        assert np.all(mae_map(y + 2.0, y).values == 2.0)

    def test_nested_loops(self, rng):
        f, y = rng.normal(size=(5, 3, 4)), rng.normal(size=(5, 3, 4))
        got = mae_map(f, y).values
        for i in range(3):
            for j in range(4):
                assert got[i, j] == pytest.approx(sum(abs(f[t, i, j] - y[t, i, j]) for t in range(5)) / 5, abs=1e-12)

    def test_misaligned(self):
        with pytest.raises(AlignmentError):
            mae_map(np.zeros((2, 3, 3)), np.zeros((3, 3, 3)))

    def test_summary(self):
        s = ScoreMap(np.array([[1.0, 3.0]]))
        assert s.summary() == {"mean": 2.0, "sd": 1.0, "n_pixels": 2}


class TestCRPSMap:
    def test_point_masses_equal_mae(self, rng):
        f, y = rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 2))
        cdfs = [[[DiscreteCDF.point_mass(f[t, i, j]) for j in range(2)] for i in range(2)] for t in range(3)]
        np.testing.assert_array_equal(crps_map(cdfs, y).values, mae_map(f, y).values)

    def test_perfect_point_forecasts(self):
        y = np.arange(8.0).reshape(2, 2, 2)
        cdfs = [[[DiscreteCDF.point_mass(y[t, i, j]) for j in range(2)] for i in range(2)] for t in range(2)]
        assert not crps_map(cdfs, y).values.any()

    def test_ensembles_vs_quadrature(self, rng):
        members = rng.gamma(1, 2, size=(2, 6, 2, 2))
        y = rng.gamma(1, 2, size=(2, 2, 2))
        cdfs = [[[DiscreteCDF.from_samples(members[t, :, i, j]) for j in range(2)] for i in range(2)] for t in range(2)]
        got = crps_map(cdfs, y).values
        for i in range(2):
            for j in range(2):
                ref = np.mean([crps_by_quadrature(cdfs[t][i][j].atoms, cdfs[t][i][j].cum, y[t, i, j]) for t in range(2)])
                assert got[i, j] == pytest.approx(ref, abs=1e-4)

    def test_grid_mismatch(self):
        with pytest.raises(AlignmentError):
            crps_map([[[DiscreteCDF.point_mass(0)]]], np.zeros((1, 2, 2)))


class TestSkill:
    def test_self_is_zero(self, rng):
        clim = ScoreMap(rng.uniform(0.5, 3, size=(4, 4)))
        assert np.all(skill_map(clim, clim).skill.values == 0)

    def test_table_means(self):
        result = skill_map(ScoreMap(np.array([[2.71]])), ScoreMap(np.array([[2.98]])))
        assert result.skill.values[0, 0] == pytest.approx(0.0906, abs=1e-4)

    def test_half_and_double(self, rng):
        clim = ScoreMap(rng.uniform(0.5, 3, size=(4, 4)))
        assert np.allclose(skill_map(ScoreMap(clim.values / 2), clim).skill.values, 0.5, atol=1e-15)
        assert np.allclose(skill_map(ScoreMap(clim.values * 2), clim).skill.values, -1.0, atol=1e-15)

    def test_zero_reference_flagged(self):
        result = skill_map(ScoreMap(np.array([[1.0, 0.5]])), ScoreMap(np.array([[0.0, 1.0]])))
        assert result.flagged.tolist() == [[True, False]]
        assert math.isnan(result.skill.values[0, 0])
        assert result.skill.mean == 0.5
        assert result.ternary.tolist() == [[0, 1]]

    def test_ternary(self):
        result = skill_map(ScoreMap(np.array([[1.0, 2.0, 3.0]])), ScoreMap(np.array([[2.0, 2.0, 2.0]])))
        assert result.ternary.tolist() == [[1, 0, -1]]


class TestPRF1:
    def test_f1_from_pr(self):
        assert f1_score(0.45, 0.97) == pytest.approx(0.6148, abs=1e-4)
        assert f1_score(0.0, 0.0) == 0.0

    def test_crafted_counts(self):
        # one pixel, 6 dates: TP=3, FP=1, FN=2
        y = np.array([1, 1, 1, 1, 1, 0], float).reshape(6, 1, 1)
        f = np.array([1, 1, 1, 0, 0, 1], float).reshape(6, 1, 1)
        res = prf1(f, y, tau=0.5)
        assert (res.tp[0, 0], res.fp[0, 0], res.fn[0, 0]) == (3, 1, 2)
        assert res.P == 0.75 and res.R == 0.6 and res.F1 == pytest.approx(2 / 3)

    def test_perfect(self, rng):
        y = rng.gamma(0.5, 3, size=(10, 3, 3))
        res = prf1(y, y, tau=0.5)
        ok = (y > 0.5).any(axis=0)
        assert np.all(res.precision[ok] == 1) and np.all(res.recall[ok] == 1) and np.all(res.f1[ok] == 1)

    def test_undefined_excluded(self):
        y = np.zeros((3, 1, 2))
        y[:, 0, 1] = 5
        f = y.copy()
        res = prf1(f, y, tau=1.0)
        assert res.undefined == {"precision": 1, "recall": 1, "f1": 1}
        assert res.P == 1.0 and res.F1 == 1.0

    def test_threshold_is_strict(self):
        y = np.full((2, 1, 1), 0.5)
        res = prf1(y, y, tau=0.5)
        assert res.undefined["recall"] == 1  # 0.5 is not an event at tau 0.5

    def test_tau_positive(self):
        with pytest.raises(ValueError):
            prf1(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), 0.0)


class TestBias:
    def test_zero_bias_bin(self):
        assert bias_histogram(np.ones((2, 2, 2)), np.ones((2, 2, 2))).counts.tolist() == [0, 0, 8, 0, 0, 0]

    def test_direct_binning(self):
        b = np.array([-2, -0.5, 0.05, 3.0])
        assert np.bincount(bias_bin(b), minlength=6).tolist() == [1, 1, 0, 1, 0, 1]

    def test_edges_right_closed(self):
        assert bias_bin(np.array([-1.0, -0.1, 0.0, 0.1, 1.0])).tolist() == [0, 1, 2, 3, 4]

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
    def test_proportions_sum_to_one(self, values):
        b = np.array(values).reshape(-1, 1, 1)
        hist = bias_histogram(b, np.zeros_like(b))
        assert hist.proportions.sum() == pytest.approx(1.0)
        assert hist.total == len(values)


class TestChiSquare:
    def test_identical(self):
        assert chi2_homogeneity([5, 3, 2], [5, 3, 2]) == (0.0, 1.0)

    def test_two_bins(self):
        stat, _ = chi2_homogeneity([10, 0], [0, 10])
        assert stat == 20.0

    def test_published_counts(self):
        stat, p = chi2_homogeneity(PUBLISHED_UNET, PUBLISHED_NWP)
        assert stat == pytest.approx(39426.78, abs=0.5)
        assert p < 1e-100
        assert sum(PUBLISHED_NWP) == sum(PUBLISHED_UNET) == 55 * 64 * 64

    def test_symmetric(self):
        assert chi2_homogeneity(PUBLISHED_NWP, PUBLISHED_UNET)[0] == chi2_homogeneity(PUBLISHED_UNET, PUBLISHED_NWP)[0]

    def test_empty_bin_rejected(self):
        with pytest.raises(ValueError):
            chi2_homogeneity([1, 0], [2, 0])


class TestEmission:
    def test_score_csv_round_trip(self, tmp_path, rng):
        s = ScoreMap(rng.normal(size=(3, 4)))
        write_score_csv(s, tmp_path / "s.csv")
        np.testing.assert_array_equal(read_score_csv(tmp_path / "s.csv").values, s.values)

    def test_histogram_csv_round_trip(self, tmp_path):
        h = BiasHistogram(np.array(PUBLISHED_NWP))
        write_histogram_csv(h, tmp_path / "h.csv")
        assert read_histogram_csv(tmp_path / "h.csv").counts.tolist() == PUBLISHED_NWP
        with open(tmp_path / "h.csv", newline="") as fh:
            assert next(csv.reader(fh)) == ["bin", "count", "proportion"]
            assert next(csv.reader(fh))[0] == BIAS_LABELS[0]

    def test_heatmap(self, tmp_path):
        scale = write_heatmap(np.array([[0.0, 1.0], [np.nan, 0.5]]), tmp_path / "h.pgm")
        raw = (tmp_path / "h.pgm").read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        assert list(raw[-4:]) == [0, 255, 0, 128]
        assert scale == {"min": 0.0, "max": 1.0, "levels": 255}


PUBLISHED_PRF1 = [
    (0.45, 0.97, 0.61), (0.17, 0.02, 0.04), (0.49, 0.88, 0.62), (0.17, 0.08, 0.11), (0.60, 0.61, 0.61),
    (0.28, 0.21, 0.24), (0.62, 0.64, 0.63), (0.31, 0.26, 0.28), (0.51, 0.90, 0.65), (0.24, 0.12, 0.16),
]


@pytest.mark.parametrize("p,r,f1", PUBLISHED_PRF1)
def test_published_f1_within_rounding_interval(p, r, f1):
    # F1 is increasing in both arguments, so its range over the rounding box of (P, R) is [lo, hi]
    lo = f1_score(p - 0.005, r - 0.005)
    hi = f1_score(p + 0.005, r + 0.005)
    assert lo <= f1 + 0.005 and hi >= f1 - 0.005
