import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rhclust.data import generate_three_cluster, generate_two_cluster
from rhclust.engine import RandomizationConfig, run_clustering
from rhclust.errors import DegenerateDataError, InvalidArgument
from rhclust.selection import alpha_sequence, estimate_k, resolve_size, select_k


def test_alpha_sequence_example():
    s = alpha_sequence(4, 0.05, 0.5)
    assert s.alphas == pytest.approx((0.02532, 0.01536, 0.00932), abs=5e-6)
    w = np.exp(-0.5 * np.arange(1, 4))
    assert np.allclose(s.alphas, 0.05 * w / w.sum(), rtol=1e-14)
    assert sum(s.alphas) == pytest.approx(0.05, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 500), st.floats(0.0, 1.0), st.floats(0.01, 5.0))
def test_property_alpha_sequence(n, total, decay):
    s = alpha_sequence(n, total, decay)
    assert len(s) == n - 1
    assert abs(sum(s.alphas) - total) <= 1e-12
    a = np.array(s.alphas)
    if total > 0 and n > 2:
        mask = a[1:] > 1e-300
        assert np.allclose(a[1:][mask] / a[:-1][mask], math.exp(-decay), rtol=1e-9)
        assert np.all(np.diff(a)[mask] < 0)


def test_alpha_sequence_errors():
    with pytest.raises(InvalidArgument):
        alpha_sequence(1)
    with pytest.raises(InvalidArgument):
        alpha_sequence(10, decay=0.0)
    with pytest.raises(InvalidArgument):
        alpha_sequence(10, alpha_total=-0.1)


def test_resolve_size():
    assert resolve_size(None, 30, 0.1) == 3
    assert resolve_size(None, 30, 0.4) == 12
    assert resolve_size(0.25, 107, 0.1) == 27
    assert resolve_size(10, 30, 0.1) == 10
    with pytest.raises(InvalidArgument):
        resolve_size(-1, 30, 0.1)
    with pytest.raises(InvalidArgument):
        resolve_size(2.5, 30, 0.1)


@pytest.fixture(scope="module")
def null_trace():
    X, _ = generate_two_cluster(30, 0.0, 1.0, p=2, rng_seed=0)
    return run_clustering(X, 1, RandomizationConfig(0.1, "complete", 0))


def steps_to_test(trace, n_min):
    return [t for t in range(1, len(trace) + 1)
            if min(len(trace.record(t).members_a), len(trace.record(t).members_b)) >= max(n_min, 2)]


def test_no_rejection_gives_one(null_trace):
    est = select_k(null_trace, lambda t: 1.0, alpha_sequence(30), 3, 12)
    assert est.k_hat == 1
    assert est.stop_step is None
    assert len(est.steps) == len(null_trace)
    tested = [s for s in est.steps if s.tested]
    assert [s.step for s in tested] == steps_to_test(null_trace, 3)
    assert all(not s.tested and s.alpha_used is None for s in est.steps if s.skipped_small)


def test_first_rejection_stops(null_trace):
    first = steps_to_test(null_trace, 3)[0]
    est = select_k(null_trace, lambda t: 0.0, alpha_sequence(30), 3, 12)
    assert est.stop_step == first
    assert est.k_hat == 30 - first + 1
    assert len(est.steps) == first
    assert sum(s.tested for s in est.steps) == 1


def test_alpha_accounting(null_trace):
    sched = alpha_sequence(30)
    est = select_k(null_trace, lambda t: 0.5, sched, 2, 12)
    used = [s.alpha_used for s in est.steps if s.tested]
    assert len(used) == len(set(used))
    assert set(used) <= set(sched.alphas)
    assert est.alpha_spent <= sched.total + 1e-15
    remaining = list(sched.alphas)
    for s in est.steps:
        if not s.tested:
            continue
        expect = min(remaining) if min(s.sizes) < 12 else max(remaining)
        assert s.alpha_used == expect
        remaining.remove(expect)


def test_all_large_merges_use_largest_alpha(null_trace):
    sched = alpha_sequence(30)
    est = select_k(null_trace, lambda t: 0.5, sched, 2, 0)
    used = [s.alpha_used for s in est.steps if s.tested]
    assert used == list(sched.alphas[:len(used)])


def test_degenerate_merge_skipped_without_alpha(null_trace):
    steps = steps_to_test(null_trace, 2)
    bad = steps[0]

    def pv(t):
        if t == bad:
            raise DegenerateDataError("flat")
        return 0.5

    sched = alpha_sequence(30)
    est = select_k(null_trace, pv, sched, 2, 0)
    rec = est.steps[bad - 1]
    assert not rec.tested and not rec.skipped_small and rec.alpha_used is None
    assert "flat" in rec.note
    assert est.steps[steps[1] - 1].alpha_used == sched.alphas[0]


def test_large_n_min_never_tests():
    X, _ = generate_two_cluster(20, 10.0, 1.0, p=2, rng_seed=1)
    est, trace = estimate_k(X, n_min=11, p_value_fn=lambda X, tr, t: 0.0)
    assert est.k_hat == 1
    assert not any(s.tested for s in est.steps)


def test_stub_uniform_p_values_control_fwer(null_trace):
    # independent uniform p-values: rejection rate must stay below alpha_total
    rng = np.random.default_rng(0)
    sched = alpha_sequence(30, 0.05)
    reps = 20_000
    hits = sum(select_k(null_trace, lambda t: rng.random(), sched, 3, 12).k_hat > 1
               for _ in range(reps))
    rate = hits / reps
    est = select_k(null_trace, lambda t: 1.0, sched, 3, 12)
    exact = 1 - np.prod([1 - s.alpha_used for s in est.steps if s.tested])
    se = math.sqrt(exact * (1 - exact) / reps)
    assert exact <= 0.05
    assert abs(rate - exact) <= 4 * se
    assert rate <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)


def test_zero_budget_never_rejects(null_trace):
    est = select_k(null_trace, lambda t: 0.0, alpha_sequence(30, 0.0), 3, 12)
    assert est.k_hat == 1


def test_k_hat_range(null_trace):
    first = steps_to_test(null_trace, 3)[0]
    for seed in range(20):
        rng = np.random.default_rng(seed)
        est = select_k(null_trace, lambda t: rng.random() ** 8, alpha_sequence(30), 3, 12)
        assert 1 <= est.k_hat <= 30 - first + 1


def test_schedule_too_short(null_trace):
    with pytest.raises(InvalidArgument):
        select_k(null_trace, lambda t: 1.0, alpha_sequence(10), 3, 12)


def test_estimate_k_three_clusters():
    X, _ = generate_three_cluster(30, 14.0, rng_seed=2)
    est, trace = estimate_k(X, rng_seed=2)
    assert est.k_hat == 3
    assert trace.n == 30 and len(trace) == 29
    doc = est.to_dict()
    assert doc["k_hat"] == 3 and doc["stop_step"] == 28


def test_estimate_k_reproducible():
    X, _ = generate_three_cluster(30, 5.0, rng_seed=3)
    a, _ = estimate_k(X, rng_seed=4, naive=True)
    b, _ = estimate_k(X, rng_seed=4, naive=True)
    assert a == b
