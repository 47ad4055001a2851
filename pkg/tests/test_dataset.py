import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from netpsych.dataset import (
    DataError,
    LikertMatrix,
    LoadOptions,
    cohort_summaries,
    describe,
    factor_means,
    factor_scores,
    load_csv,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_minimal_file(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,4\n5,1\n")
    m, rep = load_csv(p)
    assert (m.n_respondents, m.n_items) == (3, 2)
    assert m.item_ids == ("a", "b")
    assert rep.n_rows_kept == 3 and rep.dropped_rows == []


def test_out_of_range_row_dropped(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,6\n5,1\n2,2\n")
    m, rep = load_csv(p)
    assert m.n_respondents == 3
    d = rep.to_dict()
    assert d["n_rows_dropped"] == 1
    assert d["dropped_rows"][0]["line"] == 3
    json.loads(rep.to_json())


def test_strict_policy_rejects(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,\n5,1\n2,2\n")
    with pytest.raises(DataError):
        load_csv(p, LoadOptions(missing="strict"))


def test_missing_cell_listwise(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,NA\n5,1\n2,2\n")
    m, rep = load_csv(p)
    assert m.n_respondents == 3 and len(rep.dropped_rows) == 1


def test_prefix_and_cohort(tmp_path):
    p = _write(tmp_path, "id,item1,item2,year\n1,1,2,A\n2,3,4,B\n3,5,1,A\n")
    m, _ = load_csv(p, LoadOptions(item_prefix="item", cohort_column="year"))
    assert m.item_ids == ("item1", "item2")
    assert m.cohorts == ("A", "B", "A")


def test_histogram_in_report(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n1,4\n5,1\n")
    _, rep = load_csv(p)
    h = rep.to_dict()["histograms"]["a"]
    assert h["1"] == 2 and h["5"] == 1 and h["3"] == 0


def test_empty_file_rejected(tmp_path):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, ""))


def test_single_item_rejected():
    with pytest.raises(DataError):
        LikertMatrix(np.ones((5, 1), dtype=int), ("a",))


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = LikertMatrix(rng.integers(1, 6, (30, 4)), ("a", "b", "c", "d"),
                     cohorts=tuple(rng.choice(["1", "2"], 30)))
    write_csv(m, tmp_path / "x.csv")
    back, _ = load_csv(tmp_path / "x.csv", LoadOptions(cohort_column="cohort"))
    assert np.array_equal(back.values, m.values)
    assert back.item_ids == m.item_ids and back.cohorts == m.cohorts


def test_describe_constant_and_hand_values():
    m = LikertMatrix(np.array([[3, 1, 1], [3, 2, 1], [3, 3, 5], [3, 4, 1], [3, 5, 1]]), ("c", "s", "t"))
    d = {x.item_id: x for x in describe(m)}
    assert (d["c"].mean, d["c"].sd, d["c"].median, d["c"].min, d["c"].max) == (3, 0, 3, 3, 3)
    assert d["s"].mean == 3 and d["s"].sd == pytest.approx(1.5811, abs=1e-4) and d["s"].median == 3
    m2 = LikertMatrix(np.array([[1, 1], [1, 2], [5, 3]]), ("x", "y"))
    d2 = describe(m2)[0]
    assert d2.mean == pytest.approx(2.3333, abs=1e-4) and d2.median == 1


def test_factor_scores_examples():
    m = LikertMatrix(np.ones((3, 23), dtype=int), tuple(f"i{k}" for k in range(1, 24)))
    assert factor_scores(m, {"all": m.item_ids})["all"].tolist() == [23, 23, 23]
    m = LikertMatrix(np.array([[2, 5, 5], [5, 5, 5], [1, 1, 1]]), ("i1", "i2", "i3"))
    assert factor_scores(m, {"f": ["i1", "i2"]})["f"][0] == 7
    assert factor_scores(m, {"f": ["i1", "i2", "i3"]})["f"][1] == 15


def test_factor_scores_unknown_item():
    m = LikertMatrix(np.ones((3, 2), dtype=int), ("a", "b"))
    with pytest.raises(DataError):
        factor_scores(m, {"f": ["a", "zz"]})


def test_cohort_summaries_constant_and_symmetric():
    m = LikertMatrix(np.full((4, 2), 2), ("a", "b"), cohorts=("x", "x", "x", "x"))
    s, rows = cohort_summaries(m, {"f": ["a", "b"]})
    assert len(s) == 1 and s[0].factor_means["f"] == 2.0
    assert len(rows) == 4
    v = np.array([[1, 2], [3, 4], [1, 2], [3, 4]])
    m = LikertMatrix(v, ("a", "b"), cohorts=("1", "1", "2", "2"))
    s, _ = cohort_summaries(m, {"f": ["a", "b"]})
    assert s[0].item_means == s[1].item_means and s[0].factor_means == s[1].factor_means


likert = arrays(np.int64, st.tuples(st.integers(3, 20), st.integers(2, 5)), elements=st.integers(1, 5))


@settings(max_examples=50, deadline=None)
@given(likert, st.randoms(use_true_random=False))
def test_describe_row_permutation_invariant(values, rnd):
    m = LikertMatrix(values, tuple(f"i{j}" for j in range(values.shape[1])))
    perm = list(range(values.shape[0]))
    rnd.shuffle(perm)
    a = describe(m)
    b = describe(m.take_rows(perm))
    for x, y in zip(a, b):
        assert x.mean == pytest.approx(y.mean) and x.sd == pytest.approx(y.sd)
        assert (x.median, x.min, x.max) == (y.median, y.min, y.max)


@settings(max_examples=50, deadline=None)
@given(likert)
def test_factor_scores_additive(values):
    ids = tuple(f"i{j}" for j in range(values.shape[1]))
    m = LikertMatrix(values, ids)
    a, b = list(ids[:1]), list(ids[1:])
    s = factor_scores(m, {"A": a, "B": b, "AB": a + b})
    assert np.array_equal(s["AB"], s["A"] + s["B"])
    means = factor_means(m, {"AB": a + b})["AB"]
    assert np.allclose(means * len(ids), s["AB"])


@settings(max_examples=25, deadline=None)
@given(likert)
def test_round_trip_property(tmp_path_factory, values):
    m = LikertMatrix(values, tuple(f"i{j}" for j in range(values.shape[1])))
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    write_csv(m, path)
    back, _ = load_csv(path)
    assert np.array_equal(back.values, m.values)
