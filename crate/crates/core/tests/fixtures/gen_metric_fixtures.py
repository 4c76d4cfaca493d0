#!/usr/bin/env python3
"""Writes metric_fixtures.json: small runs and qrels with MRR@k and nDCG@k
computed by a direct, independent implementation.

Conventions: gain 2^g - 1, discount log2(rank + 1), MRR skips queries with no
grade >= 1 judgment, nDCG skips queries whose ideal DCG is zero.

    python3 gen_metric_fixtures.py > metric_fixtures.json
"""
import json
import math


def dcg(grades):
    return sum((2 ** g - 1) / math.log2(i + 2) for i, g in enumerate(grades))


def mrr(run, qrels, k):
    total, n = 0.0, 0
    for q, judged in qrels.items():
        if not any(g >= 1 for g in judged.values()):
            continue
        n += 1
        for i, d in enumerate(run.get(q, [])[:k]):
            if judged.get(d, 0) >= 1:
                total += 1.0 / (i + 1)
                break
    return total / n


def ndcg(run, qrels, k):
    total, n = 0.0, 0
    for q, judged in qrels.items():
        ideal = dcg(sorted(judged.values(), reverse=True)[:k])
        if ideal == 0:
            continue
        n += 1
        total += dcg([judged.get(d, 0) for d in run.get(q, [])[:k]]) / ideal
    return total / n


CASES = [
    ("two_grades_swapped", 10,
     {"q": ["dB", "dA"]},
     {"q": {"dA": 3, "dB": 1}}),
    ("ideal_order", 10,
     {"q": ["a", "b", "c"]},
     {"q": {"a": 2, "b": 1, "c": 1}}),
    ("first_relevant_at_three", 10,
     {"q": ["x", "y", "r", "s"]},
     {"q": {"r": 1, "s": 2}}),
    ("relevant_beyond_cutoff", 3,
     {"q": ["a", "b", "c", "d"]},
     {"q": {"d": 3}}),
    ("two_queries_one_miss", 10,
     {"q1": ["a", "b"], "q2": ["c", "d"]},
     {"q1": {"b": 1}, "q2": {"e": 2}}),
    ("query_without_relevant_is_skipped", 10,
     {"q1": ["a"], "q2": ["b"]},
     {"q1": {"a": 1}, "q2": {"b": 0}}),
    ("missing_run_counts_as_zero", 10,
     {"q1": ["a", "b"]},
     {"q1": {"b": 2, "a": 1}, "q2": {"z": 1}}),
    ("graded_mix_cutoff_five", 5,
     {"q": ["d1", "d2", "d3", "d4", "d5", "d6"]},
     {"q": {"d2": 3, "d4": 2, "d6": 3, "d1": 0}}),
    ("three_queries_graded", 10,
     {"a": ["1", "2", "3"], "b": ["4", "5"], "c": ["6", "7", "8"]},
     {"a": {"3": 1, "9": 3}, "b": {"4": 2, "5": 2}, "c": {"7": 1, "8": 3}}),
]


def main():
    out = []
    for name, k, run, qrels in CASES:
        out.append({
            "name": name,
            "k": k,
            "run": run,
            "qrels": qrels,
            "mrr": round(mrr(run, qrels, k), 12),
            "ndcg": round(ndcg(run, qrels, k), 12),
        })
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
