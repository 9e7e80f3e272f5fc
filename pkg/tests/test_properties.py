import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from wta.curve import ChangeTable, change_tables, change_values, max_identity_error, wta_curve
from wta.data import export_long_csv, export_wide_csv, ingest_long_csv, ingest_wide_csv
from wta.km import logrank_test
from wta.weighted_logrank import hypergeo_moments, weighted_contribution, weighted_logrank

from conftest import make_dataset
from oracles import enumerate_hypergeometric, rel_err


@st.composite
def datasets(draw, r=4):
    n = draw(st.integers(2, 12))
    rows = []
    for i in range(n):
        length = draw(st.integers(1, 8))
        scores = draw(st.lists(st.integers(0, r), min_size=length, max_size=length))
        rows.append((str(i % 2), scores))
    return make_dataset(rows, (0, r))


@st.composite
def change_table(draw):
    r = draw(st.integers(1, 2))
    size = 2 * r + 1
    n = draw(st.integers(2, 8))
    labels = draw(st.lists(st.integers(0, size - 1), min_size=n, max_size=n))
    n_a = draw(st.integers(0, n))
    a = np.bincount(labels[:n_a], minlength=size)
    b = np.bincount(labels[n_a:], minlength=size)
    return ChangeTable.from_counts(0, change_values(r), a.tolist(), b.tolist())


@given(datasets())
@settings(max_examples=60, deadline=None)
def test_csv_round_trips(ds):
    assert ingest_long_csv(export_long_csv(ds), ds.scale).trajectories == ds.trajectories
    assert ingest_wide_csv(export_wide_csv(ds), ds.scale).trajectories == ds.trajectories


@given(datasets())
@settings(max_examples=60, deadline=None)
def test_curve_identity(ds):
    for curve in wta_curve(ds).values():
        assert curve.u[0] == 1.0
        assert max_identity_error(curve) <= 1e-12
        baseline = sum(t.scores[0] for t in ds.arm(curve.arm))
        assert curve.u.max() <= 1 + baseline / curve.initial_weight + 1e-12


@given(datasets())
@settings(max_examples=60, deadline=None)
def test_relabel_symmetry(ds):
    a = weighted_logrank(ds, ("0", "1"))
    b = weighted_logrank(ds, ("1", "0"))
    assert abs(a.z + b.z) <= 1e-9
    k1, k2 = logrank_test(ds, 1, ("0", "1")), logrank_test(ds, 1, ("1", "0"))
    assert abs(k1.z + k2.z) <= 1e-9


@given(datasets())
@settings(max_examples=60, deadline=None)
def test_table_reconciliation(ds):
    scores, observed, _ = ds.dense()
    both = observed[:, 1:] & observed[:, :-1]
    for t in change_tables(ds):
        assert sum(t.margins) == both[:, t.time].sum()
        assert sum(t.counts_a) <= t.at_risk_a and sum(t.counts_b) <= t.at_risk_b


@given(change_table())
@settings(max_examples=80, deadline=None)
def test_moments_match_enumeration(table):
    m = hypergeo_moments(table)
    mean, cov = enumerate_hypergeometric(np.array(table.margins), table.at_risk_a)
    assert rel_err(m.expectations, mean) <= 1e-10
    assert rel_err(m.covariance, cov) <= 1e-10
    assert weighted_contribution(table)[2] >= -1e-12
