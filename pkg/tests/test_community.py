import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from netpsych.community import (
    CommunityPartition,
    canonical_labels,
    louvain,
    modularity,
    partition_from_sets,
    walktrap,
)


def blocks(sizes, within, between=0.0):
    n = sum(sizes)
    w = np.full((n, n), between)
    start = 0
    for s in sizes:
        w[start:start + s, start:start + s] = within
        start += s
    np.fill_diagonal(w, 0.0)
    return w


def planted(sizes):
    return tuple(c + 1 for c, s in enumerate(sizes) for _ in range(s))


def two_cliques_bridge():
    w = blocks([5, 5], 0.5)
    w[4, 5] = w[5, 4] = 0.05
    return w


def test_modularity_matches_loops_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(3, 9))
        a = rng.uniform(-1, 1, (n, n)) * (rng.random((n, n)) < 0.6)
        w = np.triu(a, 1) + np.triu(a, 1).T
        if not w.any():
            continue
        labels = rng.integers(0, 3, n)
        assert modularity(w, labels) == pytest.approx(oracles.modularity_loops(w, labels), abs=1e-12)


def test_modularity_single_community_is_zero():
    w = blocks([3, 4], 0.4, 0.1)
    assert modularity(w, [1] * 7) == pytest.approx(0.0, abs=1e-14)


def test_modularity_two_equal_disconnected_cliques():
    assert modularity(blocks([4, 4], 0.5), planted([4, 4])) == pytest.approx(0.5)


def test_modularity_planted_beats_random():
    w = blocks([6, 6, 6], 0.4, 0.02)
    q = modularity(w, planted([6, 6, 6]))
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert modularity(w, rng.integers(1, 4, 18)) < q


def test_modularity_mapping_and_incomplete():
    w = blocks([2, 2], 0.5)
    net = CommunityPartition(("a", "b", "c", "d"), (1, 1, 2, 2), 0.0)
    assert modularity(w, {"0": 1, "1": 1, "2": 2, "3": 2}) == pytest.approx(modularity(w, net.membership))
    with pytest.raises(ValueError):
        modularity(w, {"0": 1, "1": 1})
    with pytest.raises(ValueError):
        modularity(w, [1, 1, 2])


def test_planted_partition_locally_optimal():
    for sizes in ([6, 6, 6], [4, 5, 6]):
        w = blocks(sizes, 0.4, 0.02)
        lab = list(planted(sizes))
        q = modularity(w, lab)
        for i, c in itertools.product(range(len(lab)), (1, 2, 3)):
            if c == lab[i]:
                continue
            alt = lab.copy()
            alt[i] = c
            assert modularity(w, alt) <= q


def test_walktrap_disconnected_triangles():
    p = walktrap(blocks([3, 3], 0.5))
    assert p.membership == (1, 1, 1, 2, 2, 2)
    assert p.modularity == pytest.approx(0.5)


def test_walktrap_bridge_matches_brute_force():
    w = two_cliques_bridge()
    best = max((lab for lab in oracles.set_partitions(range(10)) if len(set(lab)) <= 3),
               key=lambda lab: oracles.modularity_loops(w, lab))
    p = walktrap(w)
    assert p.n_communities == 2
    assert p.membership == canonical_labels(best)


def test_walktrap_isolated_nodes_are_singletons():
    w = np.zeros((5, 5))
    w[:3, :3] = 0.5
    np.fill_diagonal(w, 0.0)
    p = walktrap(w)
    assert p.membership == (1, 1, 1, 2, 3)


def test_walktrap_never_merges_components():
    w = blocks([3, 2, 4], 0.3)
    for k in (1, 2):
        assert walktrap(w, n_communities=k).n_communities == 3


def test_walktrap_target_count():
    w = blocks([4, 4, 4], 0.5, 0.05)
    assert walktrap(w, n_communities=2).n_communities == 2
    assert walktrap(w, n_communities=3).membership == planted([4, 4, 4])


def test_walktrap_negative_weights_use_magnitude():
    w = blocks([3, 3], 0.5, 0.01)
    assert walktrap(w).membership == walktrap(-w).membership


def test_partition_contract():
    p = walktrap(blocks([3, 3, 2], 0.5, 0.02))
    assert sorted(set(p.membership)) == list(range(1, p.n_communities + 1))
    assert -0.5 <= p.modularity <= 1
    assert sum(len(v) for v in p.communities().values()) == len(p.nodes)


def test_louvain_single_node():
    p = louvain(np.zeros((1, 1)))
    assert p.n_communities == 1


def test_louvain_disconnected_triangles():
    assert louvain(blocks([3, 3], 0.5)).membership == (1, 1, 1, 2, 2, 2)


def test_louvain_planted_three_blocks():
    w = blocks([6, 6, 6], 0.4, 0.02)
    rng = np.random.default_rng(2)
    noise = rng.uniform(-0.01, 0.01, w.shape)
    w = np.clip(w + np.triu(noise, 1) + np.triu(noise, 1).T, 0, None)
    np.fill_diagonal(w, 0)
    p = louvain(w)
    assert p.membership == planted([6, 6, 6])


def test_louvain_deterministic():
    w = blocks([5, 5], 0.3, 0.05)
    assert louvain(w) == louvain(w)


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(12))), st.sampled_from(["walktrap", "louvain"]))
def test_relabeling_invariance(perm, algo):
    w = blocks([4, 5, 3], 0.45, 0.03)
    w[0, 1] = w[1, 0] = 0.6
    perm = np.array(perm)
    detect = walktrap if algo == "walktrap" else louvain
    a = detect(w).membership
    b = detect(w[np.ix_(perm, perm)]).membership
    # b[i] is the community of original node perm[i]
    back = np.empty(12, dtype=int)
    back[perm] = b
    assert canonical_labels(back.tolist()) == a


def test_partition_from_sets():
    p = partition_from_sets({"X": ["a", "c"], "Y": ["b"]}, ["a", "b", "c"])
    assert p.membership == (1, 2, 1)
    with pytest.raises(ValueError):
        partition_from_sets({"X": ["a"]}, ["a", "b"])
