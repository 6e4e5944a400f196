import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcmm.assemble import (
    NoisyMeasurement,
    answer_workload,
    evaluate,
    measure,
    plan_workload,
    reconstruct,
    rescale,
    true_answers,
    workload_variances,
)
from dcmm.data import DatasetHandle, marginal, synth
from dcmm.oracle import dense_answer, dense_cost, dense_variance, lift_mechanism, lift_query
from dcmm.schema import Schema
from dcmm.solvers import SolverConfig
from dcmm.workload import LinearQuery, Workload, WorkloadSpec, assign_random_weights, build_workload


def test_rescale_examples():
    assert rescale({(0,): 5.0}, 2) == {(0,): 0.5}
    out = rescale({(0,): 1.0, (1,): 4.0}, 1)
    assert out[(0,)] == pytest.approx(3) and out[(1,)] == pytest.approx(1.5)
    out = rescale({(i,): 7.0 for i in range(4)}, 1)
    assert all(v == pytest.approx(4) for v in out.values())
    with pytest.raises(ValueError):
        rescale({(0,): 0.0}, 1)
    with pytest.raises(ValueError):
        rescale({(0,): 1.0}, 0)


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20), st.floats(1e-3, 100))
def test_budget_identity(losses, rho):
    s2 = rescale({(i,): v for i, v in enumerate(losses)}, rho)
    assert sum(1 / v for v in s2.values()) == pytest.approx(rho, rel=1e-12)
    # the closed form minimizes Σ σ² L against a perturbed feasible split
    if len(losses) > 1:
        base = sum(s2[(i,)] * v for i, v in enumerate(losses))
        inv = np.array([1 / s2[(i,)] for i in range(len(losses))])
        inv = inv * np.linspace(0.9, 1.1, len(inv))
        inv *= rho / inv.sum()
        assert base <= sum(v / p for v, p in zip(losses, inv)) * (1 + 1e-12)


def worked_setup():
    s = Schema.from_sizes([2, 3])
    q = LinearQuery((0, 1), [0, 1, 1, 0, 0, 1])
    recs = [(i, j) for i in range(2) for j in range(3) for _ in range([[1, 2, 3], [4, 5, 6]][i][j])]
    return s, q, DatasetHandle(s, np.array(recs))


def test_worked_example_reconstruction_with_zero_noise():
    s, q, data = worked_setup()
    mech, _ = plan_workload(Workload(s, [q]))
    meas = measure(mech, data, seed=0)
    # replace the noisy answers with the clean ones
    clean = {k: NoisyMeasurement(k, p.apply(marginal(data, k).values), 0.0) for k, p in mech.plans.items()}
    ans, var = reconstruct(q, mech, clean)
    assert ans == pytest.approx(11, abs=1e-12)
    assert var > 0
    assert set(meas) == set(mech.plans)


def test_constant_query_uses_total_only():
    s = Schema.from_sizes([3, 2])
    wl = build_workload(s, WorkloadSpec("marginal", (1,)))
    mech, _ = plan_workload(wl)
    q = LinearQuery((0, 1), np.ones(6))
    ans, var = reconstruct(q, mech, {(): measure(mech, synth(s, 10, 0), 1)[()]})
    assert var == pytest.approx(mech.sigma2[()] * mech.plans[()].variance(np.ones((1, 1)))[0])


def test_missing_and_unmeasured():
    s, q, data = worked_setup()
    mech, _ = plan_workload(Workload(s, [q]))
    meas = measure(mech, data, 0)
    del meas[(0,)]
    with pytest.raises(KeyError):
        reconstruct(q, mech, meas)
    mech1, _ = plan_workload(build_workload(s, WorkloadSpec("marginal", (1,))))
    with pytest.raises(ValueError):
        reconstruct(q, mech1, measure(mech1, data, 0))


def test_measure_schema_mismatch():
    s, q, data = worked_setup()
    mech, _ = plan_workload(Workload(s, [q]))
    with pytest.raises(ValueError):
        measure(mech, synth(Schema.uniform(2, 2), 5, 0), 0)


def test_measure_deterministic_and_keyed():
    s = Schema.uniform(3, 3)
    data = synth(s, 100, 0)
    wl = build_workload(s, WorkloadSpec("prefix", (1, 2)))
    mech, _ = plan_workload(wl)
    a, b = measure(mech, data, 5), measure(mech, data, 5)
    assert all(np.array_equal(a[k].z, b[k].z) for k in a)
    # a smaller mechanism draws the same noise for the keys it shares
    mech1, _ = plan_workload(build_workload(s, WorkloadSpec("prefix", (1,))))
    c = measure(mech1, data, 5)
    for k in c:
        x = marginal(data, k).values
        za = (a[k].z - mech.plans[k].apply(x)) / np.sqrt(mech.noise(k))
        zc = (c[k].z - mech1.plans[k].apply(x)) / np.sqrt(mech1.noise(k))
        np.testing.assert_allclose(za, zc, rtol=1e-9)


def test_parallel_solve_bit_identical():
    s = Schema.from_sizes([4, 3, 3])
    wl = assign_random_weights(build_workload(s, WorkloadSpec("abs", (1, 2))), 2)
    m1, _ = plan_workload(wl, jobs=1)
    m4, _ = plan_workload(wl, jobs=4)
    for k in m1.plans:
        assert np.array_equal(m1.plans[k].strategy, m4.plans[k].strategy)
        assert m1.sigma2[k] == m4.sigma2[k]


def test_evaluate():
    s = Schema.uniform(4, 2)
    wl = build_workload(s, WorkloadSpec("range", (1, 2)))
    mech, subs = plan_workload(wl)
    ev = evaluate(wl, mech, subs)
    assert ev["rmse"] == ev["wrmse"]
    assert ev["rmse"] == pytest.approx(np.sqrt(ev["per_query"].mean()))
    wlw = assign_random_weights(wl, 1)
    ev2 = evaluate(wlw, plan_workload(wlw)[0])
    assert ev2["wrmse"] != ev2["rmse"]
    with pytest.raises(ValueError):
        evaluate(Workload(s, []), mech)


def test_single_query_matches_batch():
    s = Schema.uniform(3, 3)
    wl = build_workload(s, WorkloadSpec("affine", (1, 2)))
    mech, _ = plan_workload(wl)
    meas = measure(mech, synth(s, 30, 0), 0)
    ans, var = answer_workload(wl, mech, meas)
    for i in range(0, len(wl), 7):
        a, v = reconstruct(wl.queries[i], mech, meas)
        assert a == pytest.approx(ans[i], rel=1e-10, abs=1e-10)
        assert v == pytest.approx(var[i], rel=1e-10)


ORACLE_CASES = [
    (Schema.from_sizes([3, 4]), "range", "optimal"),
    (Schema.from_sizes([2, 3, 4]), "prefix", "optimal"),
    (Schema.from_sizes([3, 3, 3]), "affine", "optimal"),
    (Schema.from_sizes([4, 4]), "abs", "fourier"),
    (Schema.from_sizes([4, 3]), "circular", "fourier"),
    (Schema.from_sizes([3, 4]), "random", "fixed_basis"),
    (Schema.from_sizes([3, 2, 4], kinds=["categorical", "numeric", "numeric"]), "hybrid", "optimal"),
    (Schema.from_sizes([4, 4]), "marginal", "fixed_basis"),
]


@pytest.mark.parametrize("schema,family,solver", ORACLE_CASES)
def test_production_matches_dense_oracle(schema, family, solver):
    wl = assign_random_weights(build_workload(schema, WorkloadSpec(family, (1, 2))), 0)
    rho = 0.7
    mech, subs = plan_workload(wl, SolverConfig(kind=solver), rho)
    lifted = lift_mechanism(mech)
    assert dense_cost(lifted) <= rho + 1e-6
    assert dense_cost(lifted) == pytest.approx(rho, rel=1e-6)
    data = synth(schema, 200, 4)
    meas = measure(mech, data, 11)
    ans, var = answer_workload(wl, mech, meas, subs)
    z = np.concatenate([meas[k].z for k in mech.plans])
    for i, q in enumerate(wl.queries):
        qf = lift_query(q, schema)
        assert var[i] == pytest.approx(dense_variance(lifted, qf), rel=1e-8)
        assert ans[i] == pytest.approx(dense_answer(lifted, z, qf), rel=1e-8, abs=1e-8 * max(1, abs(ans[i])))


def test_unbiased_small_monte_carlo():
    s = Schema.uniform(3, 2)
    wl = build_workload(s, WorkloadSpec("prefix", (1, 2)))
    mech, _ = plan_workload(wl, rho=0.5)
    data = synth(s, 50, 0)
    ans, var = answer_workload(wl, mech, measure(mech, data, 3, trials=20_000))
    truth = true_answers(wl, data)
    se = np.sqrt(var / 20_000)
    assert np.all(np.abs(ans.mean(axis=1) - truth) <= 4.5 * se)
    np.testing.assert_allclose(ans.var(axis=1), var, rtol=0.06)
    np.testing.assert_allclose(workload_variances(wl, mech), var)
