import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netpsych.community import CommunityPartition
from netpsych.dataset import LikertMatrix
from netpsych.ega import (
    EgaConfig,
    EgaStageError,
    compare_partitions,
    factor_score_correlogram,
    jaccard,
    run_ega,
)
from netpsych.simulate import GeneratorSpec, block_spec, generate, planted_sets


def _same_partition(part, sets):
    return sorted(sorted(v) for v in part.communities().values()) == sorted(sorted(v) for v in sets.values())


def test_two_factor_recovered():
    spec = block_spec(2, 5, 0.7, 2000, seed=1)
    res = run_ega(generate(spec))
    assert res.n_communities == 2
    assert _same_partition(res.partition, planted_sets(spec))
    assert set(res.partition.nodes) == set(res.item_order)


def test_single_factor_is_one_community():
    res = run_ega(generate(block_spec(1, 10, 0.7, 2000, seed=2)))
    assert res.n_communities == 1
    assert res.method_metadata["unidimensional"]


def test_louvain_alternative_recovers_blocks():
    spec = block_spec(3, 4, 0.7, 2000, seed=3)
    res = run_ega(generate(spec), EgaConfig(algorithm="louvain"))
    assert _same_partition(res.partition, planted_sets(spec))


def test_run_ega_deterministic_and_metadata():
    m = generate(block_spec(2, 4, 0.6, 500, seed=4))
    a, b = run_ega(m), run_ega(m)
    assert np.array_equal(a.network.weights, b.network.weights)
    assert a.partition == b.partition
    meta = a.method_metadata
    for key in ("correlation_method", "lambda", "gamma", "steps", "algorithm"):
        assert key in meta
    assert meta["lambda"] == a.network.lambda_selected


def test_run_ega_target_count():
    spec = block_spec(3, 4, 0.7, 1500, seed=5)
    res = run_ega(generate(spec), n_communities=2)
    assert res.n_communities == 2


def test_stage_errors():
    with pytest.raises(EgaStageError):
        run_ega(LikertMatrix(np.array([[1, 2], [2, 1], [3, 3]]), ("a", "b")))
    v = np.ones((20, 3), dtype=int)
    v[:, 1] = np.arange(20) % 5 + 1
    v[:, 2] = (np.arange(20) * 2) % 5 + 1
    with pytest.raises(EgaStageError) as err:
        run_ega(LikertMatrix(v, ("a", "b", "c")))
    assert err.value.stage == "correlation"
    with pytest.raises(EgaStageError) as err:
        run_ega(generate(block_spec(1, 3, 0.5, 100)), EgaConfig(algorithm="nope", unidim_check=False))
    assert err.value.stage == "community"


def test_jaccard_examples():
    a = {"F1": ["a", "b"], "F2": ["c", "d"]}
    j = compare_partitions(a, a)
    assert np.array_equal(j.values, np.eye(2))
    b = {"G1": ["a", "c"], "G2": ["b", "d"]}
    assert compare_partitions(a, b).get("F1", "G1") == pytest.approx(1 / 3)
    assert jaccard({"x"}, {"y"}) == 0.0
    with pytest.raises(ValueError):
        compare_partitions(a, {"G": ["a", "b", "c"]})


def test_jaccard_partition_input():
    p = CommunityPartition(("a", "b", "c", "d"), (1, 1, 2, 2), 0.0)
    j = compare_partitions(p, {"X": ["a", "b", "c"], "Y": ["d"]})
    assert j.rows == ("EGA1", "EGA2")
    assert j.get("EGA1", "X") == pytest.approx(2 / 3)
    assert j.get("EGA2", "Y") == pytest.approx(0.5)


sets_strategy = st.lists(st.integers(0, 3), min_size=8, max_size=8)


@settings(max_examples=60, deadline=None)
@given(sets_strategy, sets_strategy)
def test_jaccard_symmetric(la, lb):
    items = [f"i{k}" for k in range(8)]
    a = {f"A{c}": [i for i, l in zip(items, la) if l == c] for c in set(la)}
    b = {f"B{c}": [i for i, l in zip(items, lb) if l == c] for c in set(lb)}
    ab, ba = compare_partitions(a, b), compare_partitions(b, a)
    assert np.allclose(ab.values, ba.values.T)
    assert np.all((ab.values >= 0) & (ab.values <= 1))


def test_factor_score_correlogram_self_diagonal():
    spec = block_spec(2, 3, 0.6, 400, seed=6)
    m = generate(spec)
    sets = planted_sets(spec)
    cc = factor_score_correlogram(m, sets, sets)
    assert np.allclose(np.diag(cc.tau), 1.0)


def test_factor_score_correlogram_independent_items():
    spec = GeneratorSpec({f"i{j}": (f"F{j}", 0.0) for j in range(6)}, 20000, seed=7)
    m = generate(spec)
    a = {"A1": ["i0", "i1"], "A2": ["i2"]}
    b = {"B1": ["i3", "i4"], "B2": ["i5"]}
    a_full = {**a, "rest": ["i3", "i4", "i5"]}
    b_full = {**b, "rest": ["i0", "i1", "i2"]}
    cc = factor_score_correlogram(m, a_full, b_full)
    assert np.all(np.abs(cc.tau[:2, :2]) < 0.05)
