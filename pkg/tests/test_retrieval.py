import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elvis.retrieval import (
    RankedList,
    RankingFormatError,
    average_precision,
    map_at_k,
    mean_average_precision,
    parse_metric,
    read_ground_truth,
    read_rankings,
    rerank,
    write_ground_truth,
    write_metric_report,
    write_rankings,
)

from oracles import naive_ap_at_k


def _list(q, ids, scores=None):
    scores = scores or [float(-i) for i in range(len(ids))]
    return RankedList(q, list(zip(ids, scores)))


def test_rerank_k1_only_rescores_first():
    lst = _list("q", ["a", "b", "c"])
    out = rerank(lst, 1, lambda q, ids: np.array([42.0]))
    assert out.entries == [("a", 42.0), ("b", -1.0), ("c", -2.0)]


def test_rerank_identity_scorer():
    lst = _list("q", ["a", "b", "c"], [3.0, 2.0, 1.0])
    lookup = dict(lst.entries)
    assert rerank(lst, 3, lambda q, ids: [lookup[i] for i in ids]).entries == lst.entries


def test_rerank_forced_reorder_and_tail_kept():
    lst = _list("q", ["a", "b", "p", "t"])
    out = rerank(lst, 3, lambda q, ids: np.array([0.1, 0.2, 0.9]))
    assert out.ids == ["p", "b", "a", "t"]
    assert out.entries[-1] == ("t", -3.0)
    with pytest.raises(ValueError):
        rerank(lst, 0, lambda q, ids: ids)


def test_rerank_stable_on_ties():
    lst = _list("q", ["a", "b", "c"])
    assert rerank(lst, 3, lambda q, ids: np.zeros(3)).ids == ["a", "b", "c"]


def test_duplicate_candidates_rejected():
    with pytest.raises(ValueError):
        _list("q", ["a", "a"])


def test_ap_hand_values():
    assert average_precision(["p1", "n", "p2"], {"p1", "p2"}) == pytest.approx(0.833333, abs=1e-6)
    assert average_precision(["p1", "p2", "n"], {"p1", "p2"}) == 1.0
    assert average_precision(["n1", "n2"], {"p"}) == 0.0
    with pytest.raises(ValueError):
        average_precision(["a"], set())


def test_map_at_k_cases():
    gt = {"q": {"p"}}
    assert map_at_k([_list("q", ["p", "n"])], gt, 100) == 1.0
    assert map_at_k([_list("q", ["n", "p"])], gt, 1) == 0.0


def test_map_three_query_bruteforce():
    lists = [_list("q1", ["a", "b", "c", "d"]), _list("q2", ["c", "a", "d", "b"]), _list("q3", ["d", "c", "b", "a"])]
    gt = {"q1": {"b", "d"}, "q2": {"a"}, "q3": {"a", "b", "c", "x"}}
    for k in (1, 2, 3, None):
        expect = np.mean([naive_ap_at_k(l.ids, gt[l.query_id], k) for l in lists])
        assert mean_average_precision(lists, gt, k) == pytest.approx(expect, abs=1e-12)


def test_map_two_query_hand_fixture():
    lists = [_list("q1", ["a", "b", "c"]), _list("q2", ["x", "y", "z"])]
    gt = {"q1": {"a", "c"}, "q2": {"y"}}
    # q1: (1 + 2/3) / 2, q2: 1/2
    assert mean_average_precision(lists, gt) == pytest.approx(((1 + 2 / 3) / 2 + 0.5) / 2, abs=1e-12)


def test_queries_without_positives_skipped():
    lists = [_list("q1", ["a"]), _list("q2", ["b"])]
    assert mean_average_precision(lists, {"q1": {"a"}, "q2": set()}) == 1.0
    with pytest.raises(ValueError):
        mean_average_precision(lists, {})


@given(st.permutations(list("abcdefgh")), st.sets(st.sampled_from(list("abcdefghij")), min_size=1),
       st.integers(1, 10))
def test_ap_matches_definition(order, positives, k):
    ap = mean_average_precision([_list("q", order)], {"q": positives}, k)
    assert ap == pytest.approx(naive_ap_at_k(order, positives, k), abs=1e-12)
    assert 0.0 <= ap <= 1.0


def test_parse_metric():
    assert parse_metric("map") is None
    assert parse_metric("map@100") == 100
    assert parse_metric("mAP@5") == 5
    for bad in ("map@0", "map@x", "ndcg"):
        with pytest.raises(ValueError):
            parse_metric(bad)


def test_jsonl_roundtrip(tmp_path):
    lists = [_list("q1", ["a", "b"], [0.5, 0.25]), _list("q2", [])]
    write_rankings(tmp_path / "r.jsonl", lists)
    assert read_rankings(tmp_path / "r.jsonl") == lists
    gt = {"q1": {"a", "c"}}
    write_ground_truth(tmp_path / "g.jsonl", gt)
    assert read_ground_truth(tmp_path / "g.jsonl") == gt


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text(json.dumps({"query": "q", "ranking": []}) + "\n{oops\n")
    with pytest.raises(RankingFormatError, match=":2:"):
        read_rankings(path)
    path.write_text('{"query": "q"}\n')
    with pytest.raises(RankingFormatError, match=":1:"):
        read_rankings(path)


def test_metric_report(tmp_path):
    write_metric_report(tmp_path / "m.csv", [("toy", "elvis", "map@100", 0.5)])
    assert (tmp_path / "m.csv").read_text().splitlines() == ["dataset,method,metric,value", "toy,elvis,map@100,0.500000"]
