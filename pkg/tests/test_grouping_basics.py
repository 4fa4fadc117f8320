import json

import numpy as np
import pytest

from corrgroup import (
    AlgorithmParams,
    Correspondence,
    CorrespondenceSet,
    GroupingResult,
    HoughAccumulator,
    NonConvergenceError,
    group_nnsr,
    group_ss,
    otsu_threshold,
    principal_eigenvector,
)


def scored_set(similarities, nn=None, d2=None):
    n = len(similarities)
    nn = nn if nn is not None else [0.1] * n
    d2 = d2 if d2 is not None else [1.0] * n
    rng = np.random.default_rng(0)
    items = tuple(
        Correspondence(rng.normal(size=3), rng.normal(size=3), s, a, b)
        for s, a, b in zip(similarities, nn, d2)
    )
    return CorrespondenceSet(items, source_resolution_pr=1.0)


def otsu_oracle(values):
    """Exhaustive candidate search over the same 255 interior bin edges."""
    vals = np.asarray(values, dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    edges = np.linspace(lo, hi, 257)
    best_edge, best_var = None, -np.inf
    for edge in edges[1:256]:
        left = vals[vals < edge]
        right = vals[vals >= edge]
        if left.size == 0 or right.size == 0:
            continue
        var = left.size * right.size * (left.mean() - right.mean()) ** 2
        if var > best_var:
            best_var, best_edge = var, edge
    return best_edge


class TestOtsu:
    def test_bimodal_split(self):
        values = [0.1] * 5 + [0.9] * 5
        threshold, degenerate = otsu_threshold(values)
        assert not degenerate
        assert 0.1 < threshold < 0.9
        assert threshold == otsu_oracle(values)

    def test_all_equal_degenerate(self):
        threshold, degenerate = otsu_threshold([0.5, 0.5, 0.5])
        assert degenerate and threshold == 0.5

    def test_binary_split_matches_oracle(self):
        values = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]
        threshold, degenerate = otsu_threshold(values)
        assert not degenerate
        assert threshold == otsu_oracle(values)
        below = [v for v in values if v < threshold]
        assert below == [0.0, 0.0, 0.0]

    @pytest.mark.parametrize("seed", range(20))
    def test_random_sets_match_oracle(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.random(rng.integers(2, 60))
        threshold, degenerate = otsu_threshold(values)
        if not degenerate:
            assert threshold == otsu_oracle(values)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            otsu_threshold([])


class TestPrincipalEigenvector:
    def test_diagonal(self):
        vector, value = principal_eigenvector(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(vector, [1.0, 0.0], atol=1e-9)
        assert value == pytest.approx(2.0, abs=1e-9)

    def test_exchange_matrix(self):
        vector, value = principal_eigenvector(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(vector, np.full(2, 1 / np.sqrt(2)), atol=1e-9)
        assert value == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_dense_solver(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.random((10, 10))
        m = (m + m.T) / 2.0
        vector, value = principal_eigenvector(m)
        evals, evecs = np.linalg.eigh(m)
        expected = evecs[:, -1]
        expected = expected if expected[np.abs(expected).argmax()] > 0 else -expected
        assert value == pytest.approx(evals[-1], abs=1e-6)
        assert np.abs(vector - expected).max() < 1e-6
        assert (vector >= -1e-12).all()
        assert np.linalg.norm(vector) == pytest.approx(1.0, abs=1e-12)

    def test_zero_matrix(self):
        vector, value = principal_eigenvector(np.zeros((4, 4)))
        assert value == 0.0
        np.testing.assert_allclose(vector, 0.5)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            principal_eigenvector(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            principal_eigenvector(np.array([[0.0, -1.0], [-1.0, 0.0]]))

    def test_bipartite_star_does_not_converge(self):
        # Exactly symmetric +/- spectrum: power iteration oscillates.
        m = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(NonConvergenceError, match="eigen non-convergence"):
            principal_eigenvector(m)


class TestSimilarityScore:
    def test_adaptive_bimodal(self):
        cset = scored_set([0.9, 0.9, 0.85, 0.1, 0.12])
        result = group_ss(cset, AlgorithmParams())
        assert result.inlier_indices == (0, 1, 2)
        # adaptive cutoff agrees with the exhaustive search
        cutoff = otsu_oracle(cset.similarities)
        assert set(result.inlier_indices) == {i for i, s in enumerate(cset.similarities) if s >= cutoff}

    def test_adaptive_degenerate_keeps_all(self):
        cset = scored_set([0.5, 0.5, 0.5, 0.5])
        result = group_ss(cset, AlgorithmParams())
        assert result.inlier_indices == (0, 1, 2, 3)

    def test_fixed_cutoff(self):
        cset = scored_set([0.9, 0.7])
        result = group_ss(cset, AlgorithmParams(t_ss=0.8))
        assert result.inlier_indices == (0,)

    def test_fixed_cutoff_inclusive(self):
        cset = scored_set([0.8, 0.7])
        result = group_ss(cset, AlgorithmParams(t_ss=0.8))
        assert result.inlier_indices == (0,)

    def test_empty_set(self):
        cset = CorrespondenceSet((), source_resolution_pr=1.0)
        assert group_ss(cset, AlgorithmParams()).inlier_indices == ()

    def test_scores_cover_indices(self):
        cset = scored_set([0.9, 0.2, 0.85])
        result = group_ss(cset, AlgorithmParams(t_ss=0.5))
        assert set(result.scores) == set(result.inlier_indices)


class TestRatioTest:
    def test_strong_ratio_accepted(self):
        cset = scored_set([0.9], nn=[0.1], d2=[1.0])
        result = group_nnsr(cset, AlgorithmParams())
        assert result.inlier_indices == (0,)
        assert result.scores[0] == pytest.approx(0.9)

    def test_equal_distances_rejected(self):
        cset = scored_set([0.9], nn=[0.4], d2=[0.4])
        assert group_nnsr(cset, AlgorithmParams()).inlier_indices == ()

    def test_zero_distances_rejected(self):
        cset = scored_set([1.0], nn=[0.0], d2=[0.0])
        assert group_nnsr(cset, AlgorithmParams()).inlier_indices == ()

    def test_boundary_inclusive(self):
        cset = scored_set([0.9], nn=[0.2], d2=[1.0])
        assert group_nnsr(cset, AlgorithmParams(t_nnsr=0.8)).inlier_indices == (0,)

    def test_coordinates_do_not_matter(self):
        sims = [0.9, 0.3, 0.7, 0.95]
        nn = [0.1, 0.9, 0.3, 0.02]
        d2 = [1.0, 1.0, 1.0, 1.0]
        a = scored_set(sims, nn, d2)
        permuted_items = tuple(
            Correspondence(b.target_point, a_item.source_point, a_item.similarity,
                           a_item.nn_distance, a_item.second_nn_distance)
            for a_item, b in zip(a.items, reversed(a.items))
        )
        b = CorrespondenceSet(permuted_items, source_resolution_pr=1.0)
        params = AlgorithmParams()
        assert group_nnsr(a, params).inlier_indices == group_nnsr(b, params).inlier_indices
        assert group_ss(a, params).inlier_indices == group_ss(b, params).inlier_indices


class TestAlgorithmParams:
    def test_defaults(self):
        params = AlgorithmParams()
        assert params.t_ss is None
        assert params.t_nnsr == 0.8
        assert params.n_ransac == 10000
        assert params.d_ransac_pr == 5.0
        assert params.t_st == 0.6
        assert params.t_gc_pr == 3.0
        assert params.si_kappa == 250
        assert params.si_sigma == 0.9
        assert params.si_delta_pr == 5.0

    def test_json_roundtrip(self):
        params = AlgorithmParams(t_ss=0.7, n_ransac=50, rng_seed=99)
        again = AlgorithmParams.from_json(params.to_json())
        assert again == params

    def test_json_field_names(self):
        data = json.loads(AlgorithmParams().to_json())
        assert set(data) == {
            "t_ss", "t_nnsr", "n_ransac", "d_ransac_pr", "t_st", "t_gc_pr",
            "hough_bin_pr", "si_kappa", "si_sigma", "si_delta_pr", "rng_seed",
        }

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown parameter keys"):
            AlgorithmParams.from_json('{"t_ss": 0.5, "bogus": 1}')

    @pytest.mark.parametrize("bad", [
        {"t_nnsr": 1.5}, {"t_st": -0.1}, {"si_sigma": 2.0},
        {"n_ransac": 0}, {"si_kappa": 0}, {"d_ransac_pr": 0.0},
        {"t_gc_pr": -1.0}, {"hough_bin_pr": 0.0}, {"si_delta_pr": 0.0},
        {"t_ss": 0.0}, {"rng_seed": -1},
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            AlgorithmParams(**bad)


class TestGroupingResult:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError, match="sorted"):
            GroupingResult((2, 1))

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="unique"):
            GroupingResult((1, 1))

    def test_rejects_score_mismatch(self):
        with pytest.raises(ValueError, match="cover exactly"):
            GroupingResult((0, 1), scores={0: 1.0})


class TestHoughAccumulator:
    def test_bin_assignment_is_floor(self):
        acc = HoughAccumulator(bin_side=0.5)
        assert acc.cast(0, [0.49, -0.01, 1.0]) == (0, -1, 2)

    def test_peak_counts(self):
        acc = HoughAccumulator(1.0)
        for i in range(3):
            acc.cast(i, [0.1, 0.1, 0.1])
        acc.cast(3, [5.0, 5.0, 5.0])
        coord, members = acc.peak()
        assert coord == (0, 0, 0)
        assert members == [0, 1, 2]

    def test_peak_tie_lexicographic(self):
        acc = HoughAccumulator(1.0)
        acc.cast(0, [5.0, 0.0, 0.0])
        acc.cast(1, [0.0, 0.0, 0.0])
        coord, members = acc.peak()
        assert coord == (0, 0, 0)
        assert members == [1]

    def test_empty_peak(self):
        assert HoughAccumulator(1.0).peak() is None

    def test_requires_positive_bin(self):
        with pytest.raises(ValueError):
            HoughAccumulator(0.0)
