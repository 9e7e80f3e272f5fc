import numpy as np
import pytest

from wta.data import DataValidationError
from wta.markov import (
    TransitionModel,
    computational_pvalue,
    fit_transitions,
    null_statistics,
    simulate_null_trial,
)
from wta.rng import stream
from wta.simulate import run_chain
from wta.weighted_logrank import weighted_logrank

from conftest import make_dataset, random_dataset


def test_identity_fit():
    ds = make_dataset([("0", [0, 0, 0]), ("1", [0, 0])], scale=(0, 2))
    np.testing.assert_array_equal(fit_transitions(ds).transition_matrix, np.eye(3))


def test_count_ratio():
    ds = make_dataset([("0", [0, 0, 0, 0, 1]), ("1", [0])], scale=(0, 2))
    model = fit_transitions(ds)
    np.testing.assert_allclose(model.transition_matrix[0], [0.75, 0.25, 0])
    assert model.transition_matrix[1, 1] == 1.0


def test_no_pairs():
    with pytest.raises(DataValidationError):
        fit_transitions(make_dataset([("0", [0]), ("1", [1])]))


def test_pooled_over_arms():
    ds = make_dataset([("0", [0, 1]), ("1", [0, 0])], scale=(0, 1))
    np.testing.assert_allclose(fit_transitions(ds).transition_matrix[0], [0.5, 0.5])


def test_model_validation():
    with pytest.raises(ValueError):
        TransitionModel(np.array([[0.5, 0.4], [0, 1]]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        TransitionModel(np.array([[1.5, -0.5], [0, 1]]), np.zeros((2, 2)))


def test_refit_recovers_matrix():
    truth = np.array([[0.80, 0.15, 0.05], [0.10, 0.70, 0.20], [0.05, 0.25, 0.70]])
    n, steps = 2000, 50
    draws = stream(99).random((n, steps))
    cum = np.broadcast_to(np.cumsum(truth, axis=1), (n, 3, 3))
    start = np.arange(n) % 3
    scores, lengths = run_chain(draws, cum, start, np.full(n, steps + 1), None)
    from wta.data import OrdinalScale, from_arrays
    ds = from_arrays(scores, lengths, ["0", "1"] * (n // 2), OrdinalScale(0, 2))
    fitted = fit_transitions(ds).transition_matrix
    assert np.abs(fitted - truth).max() <= 0.01


class TestNullSimulation:
    def test_identity_model(self, rng):
        ds = random_dataset(rng, n=20, start_zero=False)
        model = TransitionModel(np.eye(5), np.zeros((5, 5)))
        sim = simulate_null_trial(model, ds, seed=3)
        for a, b in zip(ds.trajectories, sim.trajectories):
            assert b.scores == (a.scores[0],) * len(a.scores)
            assert (a.arm, a.patient_id) == (b.arm, b.patient_id)

    def test_durations_preserved(self, rng):
        ds = random_dataset(rng, n=30)
        sim = simulate_null_trial(fit_transitions(ds), ds, seed=5)
        assert [t.censor_time for t in sim.trajectories] == [
            t.censor_time for t in ds.trajectories
        ]

    def test_absorbing_stops_early(self):
        ds = make_dataset([("0", [0, 1, 1, 1]), ("1", [0, 0, 1, 1])], scale=(0, 1),
                          censor_at_max=True)
        model = TransitionModel(np.array([[0.0, 1.0], [0.0, 1.0]]), np.zeros((2, 2)), True)
        sim = simulate_null_trial(model, ds, seed=1)
        assert [t.scores for t in sim.trajectories] == [(0, 1), (0, 1)]

    def test_deterministic(self, rng):
        ds = random_dataset(rng, n=30)
        model = fit_transitions(ds)
        assert simulate_null_trial(model, ds, 8, index=4) == simulate_null_trial(model, ds, 8, index=4)
        assert simulate_null_trial(model, ds, 8, index=4) != simulate_null_trial(model, ds, 8, index=5)

    def test_batched_matches_single(self, rng):
        ds = random_dataset(rng, n=24)
        model = fit_transitions(ds)
        batch = null_statistics(model, ds, 70, seed=11)
        single = []
        for k in range(70):
            res = weighted_logrank(simulate_null_trial(model, ds, 11, index=k))
            single.append(0.0 if res.degenerate else res.chi_square)
        np.testing.assert_allclose(batch, single, rtol=1e-10, atol=1e-12)

    def test_null_z_centered(self, rng):
        ds = random_dataset(rng, n=40)
        model = fit_transitions(ds)
        z = [weighted_logrank(simulate_null_trial(model, ds, 21, index=k)).z
             for k in range(1000)]
        assert abs(np.mean(z)) <= 3 / np.sqrt(1000)


class TestComputationalPValue:
    def test_lower_bound(self):
        rows = [("0", [0, 1, 2, 3])] * 5 + [("1", [0, 0, 0, 0])] * 5
        ds = make_dataset(rows, scale=(0, 3))
        model = TransitionModel(np.eye(4), np.zeros((4, 4)))
        res = computational_pvalue(ds, 100, seed=1, model=model)
        assert res.p_value == pytest.approx(1 / 101)

    def test_deterministic(self, rng):
        ds = random_dataset(rng, n=30)
        a = computational_pvalue(ds, 120, seed=4)
        b = computational_pvalue(ds, 120, seed=4)
        assert a == b
        assert set(a.extra) == {"n_sims", "seed", "null_quantiles"}

    def test_too_few_sims(self, rng):
        with pytest.raises(ValueError):
            computational_pvalue(random_dataset(rng), 50, seed=1)

    def test_degenerate(self):
        ds = make_dataset([("0", [0, 0]), ("1", [0, 0])])
        res = computational_pvalue(ds, 100, seed=1)
        assert res.degenerate and res.p_value == 1.0

    def test_p_in_range(self, rng):
        ds = random_dataset(rng, n=30)
        res = computational_pvalue(ds, 100, seed=2)
        assert 1 / 101 <= res.p_value <= 1
        assert res.method == "wta-sim"
