"""Pseudo-label ingestion and pairwise percentage similarity.

Detector output (one JSON record per line) is binarized against a
confidence threshold into per-item 0/1 label vectors.  Two items are
compared with the cosine of their label vectors, which lands in [0, 1]
for nonnegative entries.  A separate integer-exact indicator records
whether a pair is completely similar (identical label sets) or
completely dissimilar (disjoint), so downstream code never has to test
a float against 0 or 1.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DEFAULT_CONFIDENCE_THRESHOLD",
    "LabelMatrix",
    "SimilarityMatrix",
    "similarity",
    "indicator",
    "build_similarity",
    "block_similarity",
    "ingest_detections",
    "read_class_map",
]

DEFAULT_CONFIDENCE_THRESHOLD = 0.5

_HEADER_RE = re.compile(r"^c=(\d+) n=(\d+)$")


def _as_bitvec(v, name: str = "label vector") -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr.astype(np.uint8)


@dataclass
class LabelMatrix:
    """Per-item binary label vectors, rows aligned with ``ids``."""

    ids: list[str]
    vectors: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.ids = list(self.ids)
        vecs = np.asarray(self.vectors)
        if vecs.ndim != 2:
            raise ValueError("label vectors must form a 2-D array")
        if vecs.size and not np.isin(vecs, (0, 1)).all():
            raise ValueError("label entries must be 0 or 1")
        self.vectors = vecs.astype(np.uint8)
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError("id count does not match label row count")
        self._index = {item_id: i for i, item_id in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise ValueError("item ids must be unique")
        for item_id in self.ids:
            _check_item_id(item_id)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def c(self) -> int:
        return self.vectors.shape[1]

    def zero_rows(self) -> np.ndarray:
        """Indices of items with no label at all (permitted but flagged)."""
        return np.flatnonzero(self.vectors.sum(axis=1) == 0)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._index

    def row(self, item_id: str) -> np.ndarray:
        try:
            return self.vectors[self._index[item_id]]
        except KeyError:
            raise ValueError(f"unknown item id {item_id!r}") from None

    def reordered(self, ids: list[str]) -> "LabelMatrix":
        """Rows rearranged to follow ``ids``; the id sets must match exactly."""
        missing = [i for i in ids if i not in self._index]
        if missing:
            raise ValueError(f"ids without labels: {missing[:5]}")
        if len(ids) != self.n or len(set(ids)) != len(ids):
            extra = sorted(set(self.ids) - set(ids))
            raise ValueError(f"label ids not covered by requested ids: {extra[:5]}")
        rows = np.array([self._index[i] for i in ids], dtype=np.intp)
        return LabelMatrix(list(ids), self.vectors[rows])

    def save(self, path: str) -> None:
        lines = [f"c={self.c} n={self.n}"]
        for item_id, vec in zip(self.ids, self.vectors):
            lines.append(f"{item_id} {''.join('1' if b else '0' for b in vec)}")
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "LabelMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            m = _HEADER_RE.match(header)
            if m is None:
                raise ValueError(f"{path}: bad label file header {header!r}")
            c, n = int(m.group(1)), int(m.group(2))
            ids: list[str] = []
            rows = np.zeros((n, c), dtype=np.uint8)
            for i in range(n):
                line = fh.readline().rstrip("\n")
                parts = line.split(" ")
                if len(parts) != 2:
                    raise ValueError(f"{path}: malformed label line {i + 2}")
                item_id, bits = parts
                if len(bits) != c or set(bits) - {"0", "1"}:
                    raise ValueError(f"{path}: malformed bit string on line {i + 2}")
                ids.append(item_id)
                rows[i] = [b == "1" for b in bits]
            if fh.readline().strip():
                raise ValueError(f"{path}: trailing data after {n} label rows")
        return cls(ids, rows)


def similarity(l_i, l_j) -> float:
    """Cosine of two 0/1 label vectors, pinned to exact 0.0/1.0 endpoints.

    An all-zero vector is treated as similar to nothing, including itself.
    """
    a = _as_bitvec(l_i)
    b = _as_bitvec(l_j)
    if a.shape != b.shape:
        raise ValueError(f"label length mismatch: {a.size} vs {b.size}")
    inner = int(a @ b)
    pa = int(a.sum())
    pb = int(b.sum())
    if pa == 0 or pb == 0 or inner == 0:
        return 0.0
    if inner == pa and inner == pb:
        return 1.0
    return float(inner / (np.sqrt(pa) * np.sqrt(pb)))


def indicator(l_i, l_j) -> int:
    """1 when the label sets are identical or disjoint, else 0.

    Decided from integer counts alone, never by comparing the float
    similarity against its endpoints.
    """
    a = _as_bitvec(l_i)
    b = _as_bitvec(l_j)
    if a.shape != b.shape:
        raise ValueError(f"label length mismatch: {a.size} vs {b.size}")
    inner = int(a @ b)
    if inner == 0:
        return 1
    return int(inner == int(a.sum()) and inner == int(b.sum()))


@dataclass
class SimilarityMatrix:
    """Dense pairwise similarity with its completely-similar/dissimilar mask."""

    s: np.ndarray
    indicator: np.ndarray

    def __post_init__(self) -> None:
        self.s = np.asarray(self.s, dtype=np.float64)
        self.indicator = np.asarray(self.indicator, dtype=np.uint8)
        if self.s.shape != self.indicator.shape or self.s.ndim != 2:
            raise ValueError("similarity and indicator shapes must match")

    @property
    def n(self) -> int:
        return self.s.shape[0]


def block_similarity(labels: LabelMatrix, rows, cols) -> tuple[np.ndarray, np.ndarray]:
    """Similarity and indicator for the ``rows`` x ``cols`` block only.

    This is the on-demand path: memory stays proportional to the block,
    so a trainer can request one mini-batch block at a time.
    """
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    a = labels.vectors[rows].astype(np.int64)
    b = labels.vectors[cols].astype(np.int64)
    inner = a @ b.T
    pa = a.sum(axis=1)
    pb = b.sum(axis=1)
    ind = (inner == 0) | ((inner == pa[:, None]) & (inner == pb[None, :]))
    denom = np.sqrt(pa)[:, None] * np.sqrt(pb)[None, :]
    s = inner / np.where(denom == 0.0, 1.0, denom)
    s[inner == 0] = 0.0
    equal_sets = (inner == pa[:, None]) & (inner == pb[None, :]) & (pa[:, None] > 0)
    s[equal_sets] = 1.0
    return s, ind.astype(np.uint8)


def build_similarity(labels: LabelMatrix) -> SimilarityMatrix:
    """Dense n x n similarity over every pair of items (the default mode)."""
    if labels.n < 1:
        raise ValueError("need at least one labeled item")
    idx = np.arange(labels.n)
    s, ind = block_similarity(labels, idx, idx)
    return SimilarityMatrix(s=s, indicator=ind)


def _check_item_id(item_id) -> None:
    if not isinstance(item_id, str) or not item_id or re.search(r"\s", item_id):
        raise ValueError(f"item id must be a non-empty string without whitespace, got {item_id!r}")


def read_class_map(path: str) -> list[str]:
    """Class names, one per line; the line number is the label index."""
    with open(path, "r", encoding="utf-8") as fh:
        names = [line.rstrip("\n") for line in fh]
    while names and names[-1] == "":
        names.pop()
    if not names:
        raise ValueError(f"{path}: class map is empty")
    if any(name.strip() == "" for name in names):
        raise ValueError(f"{path}: blank class name")
    if len(set(names)) != len(names):
        raise ValueError(f"{path}: duplicate class names")
    return names


def ingest_detections(detection_file: str, confidence_threshold: float, class_map: list[str]) -> LabelMatrix:
    """Binarize per-item detections into a label matrix.

    A class is switched on when any detection of it scores at or above
    the threshold; score magnitude is otherwise discarded.  Items whose
    detections all fall below the threshold keep an all-zero vector and
    show up in ``zero_rows()``.
    """
    if not 0.0 <= confidence_threshold <= 1.0:
        raise ValueError(f"confidence threshold must lie in [0, 1], got {confidence_threshold}")
    index = {name: j for j, name in enumerate(class_map)}
    if len(index) != len(class_map):
        raise ValueError("duplicate class names in class map")
    ids: list[str] = []
    seen: set[str] = set()
    rows: list[np.ndarray] = []
    with open(detection_file, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{detection_file}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict) or "item_id" not in rec or "detections" not in rec:
                raise ValueError(f"{detection_file}:{lineno}: record needs item_id and detections")
            item_id = rec["item_id"]
            _check_item_id(item_id)
            if item_id in seen:
                raise ValueError(f"{detection_file}:{lineno}: duplicate item id {item_id!r}")
            seen.add(item_id)
            dets = rec["detections"]
            if not isinstance(dets, list):
                raise ValueError(f"{detection_file}:{lineno}: detections must be a list")
            vec = np.zeros(len(class_map), dtype=np.uint8)
            for det in dets:
                if not isinstance(det, dict) or "class_name" not in det or "score" not in det:
                    raise ValueError(f"{detection_file}:{lineno}: detection needs class_name and score")
                name = det["class_name"]
                score = det["score"]
                if name not in index:
                    raise ValueError(f"{detection_file}:{lineno}: unknown class name {name!r}")
                if not isinstance(score, (int, float)) or isinstance(score, bool) or not 0.0 <= score <= 1.0:
                    raise ValueError(f"{detection_file}:{lineno}: score must be a number in [0, 1]")
                if score >= confidence_threshold:
                    vec[index[name]] = 1
            ids.append(item_id)
            rows.append(vec)
    vectors = np.array(rows, dtype=np.uint8) if rows else np.zeros((0, len(class_map)), dtype=np.uint8)
    return LabelMatrix(ids, vectors)
