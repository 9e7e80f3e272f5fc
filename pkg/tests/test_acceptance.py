"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed together in the
terminal summary (see conftest.py). The Monte Carlo criteria use one fixed
root seed chosen up front, offset by the criterion number.
"""

import json
import math
import os

import numpy as np
import pytest
from scipy import stats

from wta.cli import main
from wta.curve import ChangeTable, change_values, max_identity_error, wta_curve
from wta.data import export_wide_csv
from wta.gee import fit_gee
from wta.km import logrank_test
from wta.markov import computational_pvalue, fit_transitions, simulate_null_trial
from wta.power import PowerGrid, run_power_study, smallest_n_reaching
from wta.simulate import (
    SchizophreniaSimConfig,
    ToxicitySimConfig,
    simulate,
    simulate_schizophrenia_trial,
    simulate_toxicity_trial,
)
from wta.weighted_logrank import hypergeo_moments, weighted_logrank

from conftest import ACCEPTANCE_LINES, make_dataset
from oracles import enumerate_hypergeometric, rel_err

ROOT_SEED = 20240101
WORKERS = int(os.environ.get("WTA_THREADS") or os.cpu_count() or 1)


def report(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def study(model, sizes, hrs, replicates, methods, criterion, n_sims=200):
    grid = PowerGrid(model, tuple(sizes), tuple(hrs), replicates, tuple(methods),
                     root_seed=ROOT_SEED + criterion, n_sims=n_sims)
    return run_power_study(grid, workers=WORKERS)


def test_01_hypergeometric_oracle():
    rng = np.random.default_rng(ROOT_SEED + 1)
    worst = 0.0
    count = 0
    while count < 250:
        r = int(rng.integers(1, 3))  # L = 3 or 5
        size = 2 * r + 1
        n = int(rng.integers(2, 9))
        labels = rng.integers(0, size, size=n)
        n_a = int(rng.integers(0, n + 1))
        a = np.bincount(labels[:n_a], minlength=size)
        b = np.bincount(labels[n_a:], minlength=size)
        table = ChangeTable.from_counts(0, change_values(r), a.tolist(), b.tolist())
        m = hypergeo_moments(table)
        mean, cov = enumerate_hypergeometric(a + b, n_a)
        worst = max(worst, rel_err(m.expectations, mean), rel_err(m.covariance, cov))
        count += 1
    report(1, "hypergeometric moments vs enumeration", worst <= 1e-10,
           f"{count} tables, max relative error {worst:.2e} (tol 1e-10)")


def test_02_logrank_reduction():
    rng = np.random.default_rng(ROOT_SEED + 2)
    worst = 0.0
    for _ in range(150):
        n = int(rng.integers(2, 51))
        rows = []
        for i in range(n):
            length = int(rng.integers(1, 20))
            event_at = int(rng.integers(1, 40))
            scores = [0] * length
            if event_at < length:
                scores = [0] * event_at + [1]
            rows.append((str(i % 2), scores))
        ds = make_dataset(rows, (0, 1))
        zw = weighted_logrank(ds).z
        zk = logrank_test(ds, 1).z
        worst = max(worst, abs(zw - zk))
    report(2, "weighted logrank reduces to logrank", worst <= 1e-12,
           f"150 binary absorbing datasets, max |dZ| {worst:.2e} (tol 1e-12)")


def test_03_curve_identities():
    worst = 0.0
    u0_ok = True
    bounded = True
    for k in range(40):
        ds = (simulate_toxicity_trial(ToxicitySimConfig(100, 1.0 + 0.02 * k), seed=k)
              if k % 2 == 0 else
              simulate_schizophrenia_trial(SchizophreniaSimConfig(100, 1.0 + 0.02 * k), seed=k))
        zero_baseline = all(t.scores[0] == 0 for t in ds.trajectories)
        for curve in wta_curve(ds).values():
            worst = max(worst, max_identity_error(curve))
            u0_ok &= curve.u[0] == 1.0
            if zero_baseline:
                bounded &= bool(np.all((curve.u >= 0) & (curve.u <= 1)))
    ok = worst <= 1e-12 and u0_ok and bounded
    report(3, "curve identities", ok,
           f"40 simulated trials, max iterative/cumulative gap {worst:.1e}, "
           f"U0 = 1: {u0_ok}, zero-baseline U in [0,1]: {bounded}")


@pytest.fixture(scope="module")
def toxicity_null():
    return study("toxicity", [200], [1.0], 1000, ["wta-analytic", "km", "gee"], 4)


def test_04_wta_type1_toxicity(toxicity_null):
    p = toxicity_null.power(200, 1.0, "wta-analytic")
    report(4, "analytic WTA Type I, toxicity", abs(p - 0.025) <= 0.015,
           f"rejection {p:.3f} (target 0.025 +/- 0.015)")


def test_05_wta_type1_schizophrenia():
    res = study("schizophrenia", [200], [1.0], 1000, ["wta-analytic"], 5)
    p = res.power(200, 1.0, "wta-analytic")
    report(5, "analytic WTA Type I, schizophrenia", abs(p - 0.037) <= 0.015,
           f"rejection {p:.3f} (target 0.037 +/- 0.015)")


def test_06_km_gee_calibration(toxicity_null):
    km = toxicity_null.power(200, 1.0, "km")
    gee = toxicity_null.power(200, 1.0, "gee")
    ok = abs(km - 0.05) <= 0.02 and abs(gee - 0.05) <= 0.02
    report(6, "KM and GEE null calibration", ok,
           f"KM {km:.3f}, GEE {gee:.3f} (target 0.05 +/- 0.02 each)")


def test_07_power_point():
    res = study("toxicity", [100], [1.4], 1000, ["wta-analytic"], 7)
    p = res.power(100, 1.4, "wta-analytic")
    report(7, "analytic WTA power, toxicity HR 1.4 n 100", abs(p - 0.80) <= 0.05,
           f"power {p:.3f} (target 0.80 +/- 0.05)")


def test_08_power_ordering():
    order = ["wta-computational", "wta-analytic", "gee", "km"]
    res = study("toxicity", [100, 200, 300], [1.4], 500, order, 8, n_sims=200)
    ok = True
    parts = []
    for n in (100, 200, 300):
        cells = [res.cell(n, 1.4, m) for m in order]
        for hi, lo in zip(cells, cells[1:]):
            slack = 2 * math.sqrt(hi.mc_se ** 2 + lo.mc_se ** 2)
            ok &= hi.power >= lo.power - slack
        parts.append(f"n={n}: " + " >= ".join(f"{c.power:.3f}" for c in cells))
    report(8, "power ordering comp >= analytic >= GEE >= KM", ok,
           "; ".join(parts) + " (2 MC SE slack)")


def test_09_half_sample_size():
    sizes = list(range(60, 301, 20))
    res = study("toxicity", sizes, [1.4], 500, ["wta-analytic", "km"], 9)
    n_wta = smallest_n_reaching(res, 1.4, "wta-analytic", 0.8)
    n_km = smallest_n_reaching(res, 1.4, "km", 0.8)
    km_max = res.power(300, 1.4, "km")
    if n_km is None:
        # KM below 0.8 across the grid means its required n exceeds 300
        ok = n_wta is not None and n_wta <= 300 / 2
        km_text = f"KM not reached by n=300 (power {km_max:.3f}), so n_KM > 300"
    else:
        ok = n_wta is not None and n_wta <= n_km / 2
        km_text = f"n_KM = {n_km}"
    report(9, "WTA needs at most half the KM sample size", ok,
           f"n_WTA = {n_wta}, {km_text}")


def test_10_pvalue_uniformity():
    template = simulate("toxicity", 100, 1.0, ROOT_SEED + 10)
    model = fit_transitions(template)
    pvals = []
    for k in range(200):
        outer = simulate_null_trial(model, template, ROOT_SEED + 10, index=k)
        pvals.append(computational_pvalue(outer, 200, seed=ROOT_SEED + 1000 + k).p_value)
    ks = stats.kstest(pvals, "uniform")
    report(10, "computational p-value uniformity", ks.pvalue > 0.01,
           f"200 outer x 200 sims, KS D={ks.statistic:.3f}, p={ks.pvalue:.3f} (> 0.01)")


def test_11_schizophrenia_beats_toxicity():
    scz = study("schizophrenia", [200], [1.2], 1000, ["wta-analytic"], 11)
    tox = study("toxicity", [200], [1.2], 1000, ["wta-analytic"], 11)
    ps = scz.power(200, 1.2, "wta-analytic")
    pt = tox.power(200, 1.2, "wta-analytic")
    report(11, "schizophrenia power exceeds toxicity", ps > pt,
           f"schizophrenia {ps:.3f} vs toxicity {pt:.3f} at HR 1.2, n 200")


def _run_cli_outputs(tmp_path, tag):
    out = tmp_path / tag
    out.mkdir()
    trial = out / "trial.csv"
    main(["simulate", "--model", "scz", "--n", "40", "--hr", "1.3", "--seed", "5",
          "--out", str(trial)])
    files = {"trial.csv": trial.read_bytes()}
    for method in ("km", "wta", "wta-sim", "gee"):
        dest = out / method
        main(["analyze", "--in", str(trial), "--method", method, "--threshold", "3",
              "--nsims", "120", "--seed", "9", "--censor-at-max", "--out", str(dest)])
        for p in sorted(dest.iterdir()):
            if p.name != "manifest.json":
                files[f"{method}/{p.name}"] = p.read_bytes()
    main(["power", "--model", "tox", "--n", "20,40", "--hr", "1.0,1.3", "--replicates", "6",
          "--methods", "km,wta-analytic,wta-computational,gee,logrank-on-binary",
          "--nsims", "100", "--seed", "4", "--threads", "2" if tag == "b" else "1",
          "--out", str(out / "power")])
    for p in sorted((out / "power").iterdir()):
        if p.name != "manifest.json":
            files[f"power/{p.name}"] = p.read_bytes()
    return files


def test_12_determinism(tmp_path):
    same = True
    for model in ("toxicity", "schizophrenia"):
        same &= export_wide_csv(simulate(model, 80, 1.2, 3)) == \
            export_wide_csv(simulate(model, 80, 1.2, 3))
    ds = simulate("toxicity", 80, 1.2, 3)
    for fn in (lambda: weighted_logrank(ds).to_json(),
               lambda: logrank_test(ds, 1).to_json(),
               lambda: fit_gee(ds).to_json(),
               lambda: computational_pvalue(ds, 150, seed=2).to_json()):
        same &= fn() == fn()
    a = _run_cli_outputs(tmp_path, "a")
    b = _run_cli_outputs(tmp_path, "b")
    same &= a == b
    grid = PowerGrid("toxicity", (20, 40), (1.0, 1.4), 8,
                     ("km", "wta-analytic", "wta-computational", "gee"), root_seed=1, n_sims=100)
    serial = run_power_study(grid, workers=1).to_csv()
    parallel = run_power_study(grid, workers=3).to_csv()
    same &= serial == parallel
    report(12, "determinism", same,
           f"simulators, 4 tests, {len(a)} CLI output files (1 vs 2 workers) "
           "and a power grid (1 vs 3 workers) byte-identical")
