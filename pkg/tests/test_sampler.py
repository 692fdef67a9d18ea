import math

import numpy as np
import pytest

import uewkit as uk
from uewkit import sampler

X = 2.0 / 3.0


class TestStream:
    def test_pinned_vectors(self):
        # frozen Philox key test vectors; any change breaks every seeded result
        got = list(uk.stream(0, 0).integers(0, 2**63, 4))
        assert got == [
            106500010600983629,
            2227898105101312729,
            1027722119939102524,
            5205806038123207278,
        ]
        u = uk.stream(12345, 7).random(3)
        np.testing.assert_allclose(
            u,
            [0.040756218426129087, 0.33223724037244862, 0.3577593034840133],
            rtol=0,
            atol=0,
        )

    def test_task_splitting_independent(self):
        a = uk.stream(5, 0).random(4)
        b = uk.stream(5, 1).random(4)
        assert not np.allclose(a, b)

    def test_repeatable(self):
        assert np.array_equal(uk.stream(9, 3).random(8), uk.stream(9, 3).random(8))


class TestSampleProductState:
    def test_deterministic(self):
        a = uk.sample_product_state((2, 2), seed=0)
        b = uk.sample_product_state((2, 2), seed=0)
        np.testing.assert_array_equal(a.amplitudes, b.amplitudes)
        np.testing.assert_allclose(
            a.amplitudes[:2],
            [0.035869304074309466 + 0j, -0.09310888643449669 - 0.039885869408654989j],
            atol=0,
        )

    def test_bloch_uniformity(self):
        rng = uk.stream(2024)
        qubits = sampler._bloch_vectors(rng, 100000)
        mean_sz = float(np.mean(np.abs(qubits[:, 0]) ** 2 - np.abs(qubits[:, 1]) ** 2))
        assert abs(mean_sz) <= 0.01
        mean_pi1 = float(X * np.mean(np.abs(qubits[:, 1]) ** 2))
        assert mean_pi1 == pytest.approx(X / 2, abs=0.005)

    def test_higher_dimension_haar(self):
        st = uk.sample_product_state((3, 2), seed=4)
        assert st.factors[0].total_dim == 3
        assert np.linalg.norm(st.amplitudes) == pytest.approx(1.0, abs=1e-12)


class TestScatter:
    def test_range_and_ceiling(self, pair23):
        l_op, c_op = pair23
        pts = uk.scatter(l_op, c_op, 20000, seed=11)
        c, l = pts[:, 0], pts[:, 1]
        assert np.all(c >= -1e-12) and np.all(c <= 4 / 9 + 1e-12)
        assert np.all(l >= -1e-12) and np.all(l <= 4 / 9 + 1e-12)

    def test_below_separable_curve(self, pair23):
        l_op, c_op = pair23
        pts = uk.scatter(l_op, c_op, 2000, seed=11)
        for c, l in pts:
            assert l <= uk.semianalytic_pair_bound(X, c, refine=4001) + 1e-4

    def test_dense_near_optimum(self, pair23):
        l_op, c_op = pair23
        pts = uk.scatter(l_op, c_op, 100000, seed=11)
        assert pts[:, 1].max() >= 0.42

    def test_deterministic(self, pair23):
        l_op, c_op = pair23
        np.testing.assert_array_equal(
            uk.scatter(l_op, c_op, 100, seed=5), uk.scatter(l_op, c_op, 100, seed=5)
        )


class TestSimulateCounts:
    def test_maximally_mixed_cell(self, povm23):
        rho = uk.DensityMatrix((2, 2), np.eye(4) / 4)
        probs = sampler.joint_probabilities(rho, [povm23, povm23])
        assert probs[(1, 1)] == pytest.approx(1 / 9, abs=1e-12)
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)

    def test_vv_state_cells(self, povm23):
        rho = uk.pure_density(uk.PureState((2, 2), [0, 0, 0, 1]))
        probs = sampler.joint_probabilities(rho, [povm23, povm23])
        assert probs[(1, 1)] == pytest.approx(4 / 9, abs=1e-12)
        assert probs[(2, 2)] == pytest.approx(1 / 36, abs=1e-12)

    def test_frequencies_converge(self, povm23):
        rho = uk.pure_density(uk.PureState((2, 2), [0, 0, 0, 1]))
        counts = uk.simulate_counts(rho, [povm23, povm23], shots=10**6, seed=42)
        assert counts.total_shots == 10**6
        p = 4 / 9
        sigma = math.sqrt(p * (1 - p) / 10**6)
        assert abs(counts.frequency((1, 1)) - p) <= 5 * sigma

    def test_deterministic(self, povm23):
        rho = uk.DensityMatrix((2, 2), np.eye(4) / 4)
        a = uk.simulate_counts(rho, [povm23, povm23], shots=1000, seed=7)
        b = uk.simulate_counts(rho, [povm23, povm23], shots=1000, seed=7)
        assert a.outcome_counts == b.outcome_counts

    def test_povm_params_echo(self, povm23):
        rho = uk.DensityMatrix((2, 2), np.eye(4) / 4)
        counts = uk.simulate_counts(rho, [povm23, povm23], shots=100, seed=1)
        assert counts.povm_params == ((X, 0.0), (X, 0.0))

    def test_shots_validation(self, povm23):
        rho = uk.DensityMatrix((2, 2), np.eye(4) / 4)
        with pytest.raises(ValueError):
            uk.simulate_counts(rho, [povm23, povm23], shots=0, seed=1)


class TestEstimate:
    def test_binomial_errors(self):
        counts = uk.CountsTable((3, 3), {(1, 1): 111, (3, 3): 889}, 1000)
        est = uk.estimate(counts, (1, 1), (2, 2))
        assert est.c_hat == pytest.approx(0.111)
        assert est.sigma_c == pytest.approx(math.sqrt(0.111 * 0.889 / 1000), abs=1e-12)
        assert est.l_hat == 0.0 and est.sigma_l == 0.0

    def test_degenerate_cell(self):
        counts = uk.CountsTable((3, 3), {(2, 2): 500}, 500)
        est = uk.estimate(counts, (1, 1), (2, 2))
        assert est.l_hat == 1.0 and est.sigma_l == 0.0

    def test_optimal_state_forward_simulation(self, povm23):
        # the c=0 optimal entangled state reaches the entangled ceiling 5/12
        rho = uk.pure_density(uk.optimal_entangled_state(0.0, 0.0))
        counts = uk.simulate_counts(rho, [povm23, povm23], shots=10**6, seed=3)
        est = uk.estimate(counts, (1, 1), (2, 2))
        assert est.c_hat == 0.0
        assert abs(est.l_hat - 5 / 12) <= 5 * est.sigma_l

    def test_zero_shots(self):
        counts = uk.CountsTable((3, 3), {}, 0)
        with pytest.raises(ValueError):
            uk.estimate(counts, (1, 1), (2, 2))

    def test_bad_indices(self):
        counts = uk.CountsTable((3, 3), {(1, 1): 10}, 10)
        with pytest.raises(ValueError):
            uk.estimate(counts, (4, 1), (2, 2))


class TestWeightedEstimate:
    def test_single_term_matches_estimate(self):
        counts = uk.CountsTable((3, 3), {(2, 2): 300, (1, 1): 700}, 1000)
        val, sig = uk.weighted_estimate(counts, [(1.0, (2, 2))])
        est = uk.estimate(counts, (1, 1), (2, 2))
        assert val == pytest.approx(est.l_hat)
        assert sig == pytest.approx(est.sigma_l, abs=1e-12)

    def test_full_sum_has_zero_variance(self):
        # beta_i = 1 over all cells sums to exactly 1 with no fluctuation
        counts = uk.CountsTable((2, 2), {(1, 1): 10, (1, 2): 20, (2, 1): 30, (2, 2): 40}, 100)
        terms = [(1.0, (i, j)) for i in (1, 2) for j in (1, 2)]
        val, sig = uk.weighted_estimate(counts, terms)
        assert val == pytest.approx(1.0)
        assert sig == pytest.approx(0.0, abs=1e-6)


class TestBruteForceOracle:
    @pytest.mark.parametrize(
        "c,expected,tol",
        [(0.0, 1 / 3, 2e-3), (4 / 9, 1 / 36, 2e-3), (1 / 36, 4 / 9, 2e-3)],
    )
    def test_anchors(self, pair23, c, expected, tol):
        val = uk.brute_force_constrained_sup(pair23[0], pair23[1], c, resolution=200)
        assert val == pytest.approx(expected, abs=tol)

    def test_equal_operators_return_c(self, pair23):
        val = uk.brute_force_constrained_sup(pair23[1], pair23[1], 0.2, resolution=100)
        assert val == pytest.approx(0.2, abs=1e-6)

    def test_unattainable(self, pair23):
        with pytest.raises(ValueError):
            uk.brute_force_constrained_sup(pair23[0], pair23[1], 0.9)

    def test_dims_validation(self, pair23):
        with pytest.raises(ValueError):
            uk.brute_force_constrained_sup(uk.identity((2,)), uk.identity((2,)), 0.1)
        with pytest.raises(ValueError):
            uk.brute_force_constrained_sup(pair23[0], pair23[1], 0.1, resolution=1000)


def test_ppt_oracle_wrapper():
    assert uk.ppt_oracle(uk.DensityMatrix((2, 2), np.eye(4) / 4))
    bell = np.zeros((4, 4))
    bell[0, 0] = bell[0, 3] = bell[3, 0] = bell[3, 3] = 0.5
    assert not uk.ppt_oracle(uk.DensityMatrix((2, 2), bell))
    assert not uk.ppt_oracle(uk.pure_density(uk.optimal_entangled_state(0.0, 0.0)))


class TestCountsJson:
    def test_roundtrip(self, tmp_path, povm23):
        rho = uk.DensityMatrix((2, 2), np.eye(4) / 4)
        counts = uk.simulate_counts(rho, [povm23, povm23], shots=5000, seed=2)
        path = tmp_path / "counts.json"
        uk.save_counts(path, counts)
        back = uk.load_counts(path)
        assert back.outcome_counts == counts.outcome_counts
        assert back.total_shots == counts.total_shots
        assert back.outcomes_per_party == (3, 3)

    def test_omitted_cells_are_zero(self):
        table = sampler.counts_from_dict(
            {"shots": 10, "parties": 2, "outcomes_per_party": [3, 3], "counts": {"1,1": 10}}
        )
        assert table.frequency((2, 2)) == 0.0

    def test_rejects_missing_fields(self):
        with pytest.raises(ValueError):
            sampler.counts_from_dict({"shots": 10})

    def test_rejects_inconsistent_totals(self):
        with pytest.raises(ValueError):
            uk.CountsTable((3, 3), {(1, 1): 5}, 10)

    def test_rejects_bad_tuples(self):
        with pytest.raises(ValueError):
            uk.CountsTable((3, 3), {(1, 1, 1): 10}, 10)
        with pytest.raises(ValueError):
            uk.CountsTable((3, 3), {(0, 1): 10}, 10)
