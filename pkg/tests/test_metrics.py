
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from juris.corpus import QrelSet
from juris.errors import DataError
from juris.metrics import (HEADLINE, NoPositives, RankedList, average_precision, metrics_suite, mrr_at,
                           ndcg_at, query_metrics, read_run, significance_test, write_run)
from oracles import oracle_metrics, random_instance


def test_average_precision_examples():
    assert average_precision(["d1", "d2", "d3"], {"d1", "d3"}) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision(["a", "b", "c"], {"a", "b"}) == 1.0
    assert average_precision(["a", "b"], {"z"}) == 0.0
    with pytest.raises(NoPositives):
        average_precision(["a"], set())


def test_suite_examples():
    m = query_metrics(["d1", "d2", "d3"], {"d1", "d3"})
    assert m["P@3"] == pytest.approx(2 / 3) and m["R@3"] == 1.0 and m["Hits@3"] == 1.0
    assert mrr_at(["p", "x"], {"p"}, 5) == 1.0
    assert mrr_at([f"x{i}" for i in range(5)] + ["p"], {"p"}, 5) == 0.0


def test_oracle_agreement():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ranking, pos = random_instance(rng)
        got, want = query_metrics(ranking, pos), oracle_metrics(ranking, pos)
        for name in HEADLINE:
            assert abs(got[name] - want[name]) < 1e-9, name


@settings(max_examples=300, deadline=None)
@given(st.permutations([f"d{i}" for i in range(8)]), st.sets(st.sampled_from([f"d{i}" for i in range(10)]),
                                                              min_size=1))
def test_metric_invariants(ranking, pos):
    m = query_metrics(ranking, pos)
    assert all(0.0 <= v <= 1.0 for v in m.values())
    for k in (3, 5):
        if f"Hits@{k}" in m and f"R@{k}" in m:
            assert (m[f"Hits@{k}"] == 1.0) == (m[f"R@{k}"] > 0)
    assert round(m["P@3"] * 3) == sum(d in pos for d in ranking[:3])
    assert m["P@3"] * 3 == pytest.approx(sum(d in pos for d in ranking[:3]), abs=1e-12)


def test_ranked_list_ties_by_id():
    r = RankedList.from_scores("q", {"b": 1.0, "a": 1.0, "c": 2.0})
    assert r.doc_ids == ["c", "a", "b"]


def test_metrics_suite_excludes_queries_without_positives():
    qrels = QrelSet({("q1", "a"): 3, ("q1", "b"): 0, ("q2", "a"): 1}, 2)
    rankings = [RankedList.from_scores("q1", {"a": 0.2, "b": 0.9}),
                RankedList.from_scores("q2", {"a": 1.0})]
    rep = metrics_suite(rankings, qrels)
    assert rep.excluded == ["q2"] and rep.num_queries == 1
    assert rep.mean["MAP"] == 0.5 and rep.mean["MRR@5"] == 0.5
    assert 0 <= rep.mean["NDCG@5"] <= 1


def test_ndcg_graded():
    assert ndcg_at(["a", "b"], {"a": 3, "b": 1}, 5) == 1.0
    assert ndcg_at(["b", "a"], {"a": 3, "b": 1}, 5) < 1.0
    assert ndcg_at(["x"], {}, 5) == 0.0


def test_significance_examples():
    a = np.linspace(0, 1, 50)
    assert significance_test(a, a) == 1.0
    assert significance_test(a + 1.0, a, 10000, 0) < 0.01
    for x, y in [(0.3, 0.1), (1.0, 0.0), (0.5, 0.5)]:
        assert significance_test([x], [y], 2000, 1) >= 0.5
    with pytest.raises(ValueError):
        significance_test([1, 2], [1])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=20), st.integers(0, 10))
def test_significance_symmetric_and_deterministic(pairs, seed):
    a, b = zip(*pairs)
    p = significance_test(a, b, 500, seed)
    assert p == significance_test(b, a, 500, seed)
    assert p == significance_test(a, b, 500, seed)
    assert 0 < p <= 1


def test_single_pair_enumeration():
    # both sign flips reach |d|, so the exact p is 1; the estimate can only be near 1
    assert significance_test([0.9], [0.1], 1000, 0) == 1.0


def test_run_round_trip(tmp_path):
    runs = [RankedList.from_scores("q1", {"a": 0.5, "b": 1 / 3}), RankedList.from_scores("q2", {"c": 1.0})]
    write_run(tmp_path / "r.tsv", runs)
    assert read_run(tmp_path / "r.tsv") == runs


def test_read_run_errors(tmp_path):
    (tmp_path / "r.tsv").write_text("q a 1\nq a 2\n")
    with pytest.raises(DataError, match=":2"):
        read_run(tmp_path / "r.tsv")
    (tmp_path / "r.tsv").write_text("q a x\n")
    with pytest.raises(DataError):
        read_run(tmp_path / "r.tsv")
