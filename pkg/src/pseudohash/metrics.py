"""Ranked-retrieval quality measures over shared-label relevance.

All ranking metrics take the relevance sequence of one ranked list:
r(j) counts labels shared between the query and the item at rank j
(1-based), and p(j) = 1 when r(j) >= 1.  The average-precision family
normalizes by N, the number of relevant items in the whole corpus with
the query itself excluded, so a query with no relevant item anywhere is
skipped rather than scored.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .labelspace import LabelMatrix
from .retrieval import CodeStore, search

__all__ = [
    "METRIC_NAMES",
    "MetricsReport",
    "acg_at",
    "dcg_at",
    "ndcg_at",
    "ap_at",
    "wmap_at",
    "precision_at",
    "evaluate",
    "report_records",
    "write_records",
    "format_table",
]

METRIC_NAMES = ("acg", "ndcg", "map", "wmap", "precision")


def _prefix(seq, n: int, name: str) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if n < 1:
        raise ValueError(f"cutoff must be at least 1, got {n}")
    if arr.shape[0] < n:
        raise ValueError(f"{name} has {arr.shape[0]} entries, cutoff {n} needs more")
    if arr.size and arr.min() < 0.0:
        raise ValueError(f"{name} entries must be nonnegative")
    return arr


def acg_at(r, n: int) -> float:
    """Mean relevance over the top n ranks."""
    arr = _prefix(r, n, "relevance sequence")
    return float(np.sum(arr[:n]) / n)


def dcg_at(r, n: int) -> float:
    """Discounted cumulative gain: sum of (2^r - 1) / log2(rank + 1)."""
    arr = _prefix(r, n, "relevance sequence")
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float(np.sum((np.exp2(arr[:n]) - 1.0) / np.log2(ranks + 1.0)))


def ndcg_at(r, n: int) -> float:
    """DCG normalized by the best ordering of the full relevance multiset.

    The normalizer sorts every supplied relevance value (not only the
    top n) descending and truncates at n.  An all-zero multiset scores 0.
    """
    arr = _prefix(r, n, "relevance sequence")
    ideal = np.sort(arr)[::-1]
    z = dcg_at(ideal, n)
    if z == 0.0:
        return 0.0
    return dcg_at(arr, n) / z


def _indicator_prefix(p, n: int) -> np.ndarray:
    arr = _prefix(p, n, "relevance indicator sequence")
    if arr.size and not np.isin(arr, (0.0, 1.0)).all():
        raise ValueError("relevance indicators must be 0 or 1")
    return arr


def ap_at(p, total_relevant: int, n: int) -> float | None:
    """Average precision at n against the corpus-wide relevant count.

    Returns None when no relevant item exists at all, marking the query
    skipped; such queries must not contribute to a mean.  The sum is
    accumulated as exact rationals, so the result is the correctly
    rounded value rather than a rounding-order accident.
    """
    arr = _indicator_prefix(p, n)
    if total_relevant < 0:
        raise ValueError("relevant count must be nonnegative")
    if total_relevant == 0:
        return None
    hits = 0
    acc = Fraction(0)
    for rank, flag in enumerate(arr[:n], start=1):
        if flag:
            hits += 1
            acc += Fraction(hits, rank)
    return float(acc / total_relevant)


def wmap_at(r, p, total_relevant: int, n: int) -> float | None:
    """Average-cumulative-gain-weighted precision at n; None when nothing is relevant.

    Accumulates exact rationals like ``ap_at`` (each float relevance is
    itself a rational), returning the correctly rounded result.
    """
    rr = _prefix(r, n, "relevance sequence")
    arr = _indicator_prefix(p, n)
    if rr.shape != arr.shape:
        raise ValueError("relevance values and indicators must share one length")
    if np.any((rr >= 1.0) != (arr == 1.0)):
        raise ValueError("indicator sequence disagrees with relevance values")
    if total_relevant < 0:
        raise ValueError("relevant count must be nonnegative")
    if total_relevant == 0:
        return None
    gain = Fraction(0)
    acc = Fraction(0)
    for rank, (value, flag) in enumerate(zip(rr[:n], arr[:n]), start=1):
        gain += Fraction(value)
        if flag:
            acc += gain / rank
    return float(acc / total_relevant)


def precision_at(p, n: int) -> float:
    """Fraction of the top n ranks that are relevant."""
    arr = _indicator_prefix(p, n)
    return float(np.sum(arr[:n]) / n)


@dataclass
class MetricsReport:
    """Mean metric values per cutoff, plus the counts behind them."""

    cutoffs: list[int]
    means: dict[int, dict[str, float]]
    query_count: int
    skipped: int
    code_length: int
    label_source: str = "pseudo"

    def value(self, metric: str, cutoff: int) -> float:
        return self.means[cutoff][metric]


def _check_cutoffs(cutoffs) -> list[int]:
    cuts = [int(c) for c in cutoffs]
    if not cuts:
        raise ValueError("need at least one cutoff")
    if any(c < 1 for c in cuts):
        raise ValueError("cutoffs must be positive")
    if sorted(set(cuts)) != cuts:
        raise ValueError("cutoffs must be strictly increasing")
    return cuts


def evaluate(query_codes: CodeStore, corpus_codes: CodeStore, eval_labels: LabelMatrix,
             cutoffs, label_source: str = "pseudo") -> MetricsReport:
    """Rank the corpus for every query and average the five metrics per cutoff.

    A query present in the corpus is excluded from its own ranking.
    Means use exact summation, so they do not depend on query order.
    """
    cuts = _check_cutoffs(cutoffs)
    if query_codes.k != corpus_codes.k:
        raise ValueError(f"code length mismatch: queries k={query_codes.k}, corpus k={corpus_codes.k}")
    for item_id in (*query_codes.ids, *corpus_codes.ids):
        if item_id not in eval_labels:
            raise ValueError(f"no evaluation label for item {item_id!r}")
    corpus_mat = np.stack([eval_labels.row(i) for i in corpus_codes.ids]).astype(np.int64)
    sums: dict[int, dict[str, list[float]]] = {
        n: {metric: [] for metric in METRIC_NAMES} for n in cuts
    }
    skipped = 0
    for qpos, query_id in enumerate(query_codes.ids):
        exclude = query_id if query_id in corpus_codes else None
        depth = corpus_codes.n - (1 if exclude is not None else 0)
        if cuts[-1] > depth:
            raise ValueError(f"cutoff {cuts[-1]} exceeds rankable corpus depth {depth}")
        qvec = eval_labels.row(query_id).astype(np.int64)
        shared = corpus_mat @ qvec
        ranked = search(corpus_codes, query_codes.bits[qpos], depth,
                        exclude_id=exclude, query_id=query_id)
        rel = np.array([shared[corpus_codes.index_of(item_id)] for item_id, _ in ranked.entries],
                       dtype=np.float64)
        hits = (rel >= 1.0).astype(np.float64)
        total_relevant = int(np.sum(shared >= 1))
        if exclude is not None and shared[corpus_codes.index_of(exclude)] >= 1:
            total_relevant -= 1
        if total_relevant == 0:
            skipped += 1
        for n in cuts:
            per = sums[n]
            per["acg"].append(acg_at(rel, n))
            per["ndcg"].append(ndcg_at(rel, n))
            per["precision"].append(precision_at(hits, n))
            ap = ap_at(hits, total_relevant, n)
            if ap is not None:
                per["map"].append(ap)
            wm = wmap_at(rel, hits, total_relevant, n)
            if wm is not None:
                per["wmap"].append(wm)
    query_count = len(query_codes.ids)
    means: dict[int, dict[str, float]] = {}
    for n in cuts:
        row = {}
        for metric in METRIC_NAMES:
            values = sums[n][metric]
            row[metric] = math.fsum(values) / len(values) if values else 0.0
        means[n] = row
    return MetricsReport(cuts, means, query_count, skipped, corpus_codes.k, label_source)


def report_records(reports: dict[str, MetricsReport]) -> list[dict]:
    """Flatten reports into one record per (variant, metric, cutoff)."""
    rows: list[dict] = []
    for variant, report in reports.items():
        for cutoff in report.cutoffs:
            for metric in METRIC_NAMES:
                rows.append({
                    "variant": variant,
                    "metric": metric,
                    "cutoff": cutoff,
                    "code_length": report.code_length,
                    "value": report.means[cutoff][metric],
                    "queries": report.query_count,
                    "skipped": report.skipped,
                    "label_source": report.label_source,
                })
    return rows


def write_records(path: str, reports: dict[str, MetricsReport]) -> None:
    """Line-delimited report records, one JSON object per line."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in report_records(reports):
            fh.write(json.dumps(row) + "\n")
    os.replace(tmp, path)


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Human-readable table, one block per variant."""
    blocks: list[str] = []
    for variant, report in reports.items():
        lines = [
            f"[{variant}] code_length={report.code_length} label_source={report.label_source} "
            f"queries={report.query_count} skipped={report.skipped}",
            "cutoff".ljust(8) + "".join(metric.ljust(12) for metric in METRIC_NAMES),
        ]
        for cutoff in report.cutoffs:
            row = str(cutoff).ljust(8)
            row += "".join(f"{report.means[cutoff][m]:.5f}".ljust(12) for m in METRIC_NAMES)
            lines.append(row)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
