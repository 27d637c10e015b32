import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rhclust.errors import InvalidArgument, InvalidState
from rhclust.linkage import (LINKAGES, ClusterState, DissimilarityFamily, LinkageTracker,
                             candidate_merges, linkage_dissimilarity, pairwise_dissimilarity)


def line(*xs):
    return pairwise_dissimilarity(np.array(xs, dtype=float)[:, None])


def test_pairwise_examples():
    d = pairwise_dissimilarity(np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 4.0]]))
    assert d[0, 1] == 5.0
    assert d[1, 2] == 0.0
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)


def test_pairwise_matches_brute_force():
    X = np.random.default_rng(0).normal(size=(12, 3))
    brute = np.array([[np.sqrt(((x - y) ** 2).sum()) for y in X] for x in X])
    assert np.allclose(pairwise_dissimilarity(X), brute, atol=1e-12)


def test_homogeneity_of_distances():
    X = np.random.default_rng(1).normal(size=(10, 2))
    assert np.allclose(pairwise_dissimilarity(3 * X), 3 * pairwise_dissimilarity(X), rtol=1e-14)


@pytest.mark.parametrize("kind", LINKAGES)
def test_singletons_give_the_distance(kind):
    D = line(0, 2, 7)
    assert linkage_dissimilarity(kind, [0], [2], D) == 7.0


def test_cross_pair_examples():
    D = line(0, 2, 5)
    assert linkage_dissimilarity("complete", [0, 1], [2], D) == 5.0
    assert linkage_dissimilarity("single", [0, 1], [2], D) == 3.0
    assert linkage_dissimilarity("average", [0, 1], [2], D) == 4.0


def test_minimax_example():
    D = line(0, 1, 2)
    assert linkage_dissimilarity("minimax", [0, 2], [1], D) == 1.0
    assert linkage_dissimilarity("minimax", [0], [1, 2], D) == 1.0


def test_linkage_errors():
    D = line(0, 1, 2)
    with pytest.raises(InvalidArgument):
        linkage_dissimilarity("complete", [0, 1], [1, 2], D)
    with pytest.raises(InvalidArgument):
        linkage_dissimilarity("ward", [0], [1], D)
    with pytest.raises(InvalidArgument):
        linkage_dissimilarity("single", [], [1], D)


def test_candidate_counts():
    D = pairwise_dissimilarity(np.random.default_rng(2).normal(size=(30, 2)))
    state = ClusterState(30)
    assert len(candidate_merges(ClusterState(3), "complete", D[:3, :3])) == 3
    assert len(candidate_merges(state, "complete", D)) == 435
    state = state.merge(4, 9)
    assert len(candidate_merges(state, "complete", D)) == 406
    state = state.merge(0, 1)
    assert len(state.clusters) == 28
    assert len(candidate_merges(state, "complete", D)) == 378
    with pytest.raises(InvalidState):
        candidate_merges(ClusterState(3, [[0, 1, 2]]), "single", D[:3, :3])


def test_candidate_order_is_canonical():
    D = line(0, 1, 3, 7)
    state = ClusterState(4, [[3], [1, 2], [0]])
    cands = candidate_merges(state, "single", D)
    firsts = [(state.clusters[c.a][0], state.clusters[c.b][0]) for c in cands]
    assert firsts == sorted(firsts)
    assert firsts == [(0, 1), (0, 3), (1, 3)]


def test_cluster_state_validation():
    with pytest.raises(InvalidArgument):
        ClusterState(3, [[0, 1], [1, 2]])
    with pytest.raises(InvalidArgument):
        ClusterState(3, [[0, 1]])
    s = ClusterState(5).merge(0, 3).merge(0, 1)
    assert s.step == 2
    assert len(s.clusters) == 5 - s.step


def random_partition(rng, n, m):
    perm = rng.permutation(n)
    cuts = np.sort(rng.choice(np.arange(1, n), m - 1, replace=False))
    return [sorted(c.tolist()) for c in np.split(perm, cuts)]


def test_linkage_ordering_single_average_complete():
    rng = np.random.default_rng(3)
    for _ in range(50):
        X = rng.normal(size=(15, 2))
        D = pairwise_dissimilarity(X)
        state = ClusterState(15, random_partition(rng, 15, 5))
        s, a, c = (np.array([m.dissimilarity for m in candidate_merges(state, k, D)])
                   for k in ("single", "average", "complete"))
        assert np.all(s <= a + 1e-12)
        assert np.all(a <= c + 1e-12)


@pytest.mark.parametrize("kind", LINKAGES)
def test_linkage_homogeneity(kind):
    rng = np.random.default_rng(4)
    D = pairwise_dissimilarity(rng.normal(size=(12, 2)))
    state = ClusterState(12, random_partition(rng, 12, 4))
    base = np.array([m.dissimilarity for m in candidate_merges(state, kind, D)])
    for c in (0.01, 2.5, 1e4):
        scaled = np.array([m.dissimilarity for m in candidate_merges(state, kind, c * D)])
        assert np.allclose(scaled, c * base, rtol=1e-12, atol=0)


@pytest.mark.parametrize("kind", LINKAGES)
def test_incremental_matches_from_scratch(kind):
    rng = np.random.default_rng(5)
    n = 14
    D = pairwise_dissimilarity(rng.normal(size=(n, 3)))
    tracker = LinkageTracker(D, kind)
    state = ClusterState(n)
    while len(state.clusters) > 1:
        inc = tracker.values()[:, 0]
        ref = np.array([m.dissimilarity for m in candidate_merges(state, kind, D)])
        assert np.allclose(inc, ref, atol=1e-10, rtol=0)
        i, j = sorted(rng.choice(len(state.clusters), 2, replace=False))
        a, b = state.clusters[i][0], state.clusters[j][0]
        assert tracker.pair_position(a, b) == i * len(state.clusters) - i * (i + 1) // 2 + j - i - 1
        tracker.merge(a, b)
        state = state.merge(i, j)


@pytest.mark.parametrize("kind", LINKAGES)
def test_batched_tracker_matches_single(kind):
    rng = np.random.default_rng(6)
    n = 9
    Ds = [pairwise_dissimilarity(rng.normal(size=(n, 2))) for _ in range(4)]
    batch = LinkageTracker(np.stack(Ds, axis=-1), kind)
    singles = [LinkageTracker(D, kind) for D in Ds]
    for a, b in [(0, 5), (2, 3), (0, 2), (1, 8), (0, 7)]:
        for q, tr in enumerate(singles):
            assert np.allclose(batch.values()[:, q], tr.values()[:, 0], atol=1e-12)
        batch.merge(a, b)
        for tr in singles:
            tr.merge(a, b)


def test_tracker_rejects_bad_merge():
    tr = LinkageTracker(line(0, 1, 2), "complete")
    tr.merge(0, 1)
    with pytest.raises(InvalidState):
        tr.merge(1, 2)
    with pytest.raises(InvalidState):
        tr.merge(2, 2)


def test_dissimilarity_family_matches_pdist():
    rng = np.random.default_rng(7)
    comps = [rng.normal(size=(10, 3)) for _ in range(3)]
    fam = DissimilarityFamily(comps)
    coeffs = rng.normal(size=(5, 3))
    out = fam(coeffs)
    assert out.shape == (10, 10, 5)
    for q, c in enumerate(coeffs):
        X = sum(ck * M for ck, M in zip(c, comps))
        assert np.allclose(out[:, :, q], pairwise_dissimilarity(X), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 2), elements=st.floats(-100, 100)),
       st.floats(0.01, 100))
def test_property_homogeneity_and_symmetry(X, c):
    D = pairwise_dissimilarity(X)
    assert np.all(D >= 0)
    assert np.array_equal(D, D.T)
    assert np.allclose(pairwise_dissimilarity(c * X), c * D, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (7, 2), elements=st.floats(-10, 10)),
       st.sampled_from(LINKAGES))
def test_property_tracker_agrees_with_reference(X, kind):
    D = pairwise_dissimilarity(X)
    tracker = LinkageTracker(D, kind)
    state = ClusterState(7)
    while len(state.clusters) > 1:
        inc = tracker.values()[:, 0]
        ref = np.array([m.dissimilarity for m in candidate_merges(state, kind, D)])
        assert np.allclose(inc, ref, atol=1e-10, rtol=0)
        k = int(np.argmin(ref))
        i, j = tracker.pairs()
        tracker.merge(int(i[k]), int(j[k]))
        pos = [c[0] for c in state.clusters]
        state = state.merge(pos.index(int(i[k])), pos.index(int(j[k])))
