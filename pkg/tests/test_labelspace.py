"""Label ingestion and pairwise similarity."""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest

from pseudohash import (
    LabelMatrix,
    block_similarity,
    build_similarity,
    indicator,
    ingest_detections,
    read_class_map,
    similarity,
)

from oracles import ref_indicator, ref_similarity


def test_similarity_partial_overlap_value():
    # one shared label out of |a|=2, |b|=1 gives 1/sqrt(2)
    s = similarity([1, 1, 0], [1, 0, 0])
    assert abs(s - 1.0 / math.sqrt(2.0)) < 1e-15
    assert s == 0.7071067811865475


def test_similarity_endpoints_are_exact_floats():
    assert similarity([1, 0, 1], [1, 0, 1]) == 1.0
    assert similarity([1, 1, 0], [0, 0, 1]) == 0.0
    assert similarity([0, 0, 0], [1, 1, 0]) == 0.0
    assert similarity([0, 0, 0], [0, 0, 0]) == 0.0


def test_indicator_worked_cases():
    assert indicator([1, 1, 0], [1, 0, 0]) == 0
    assert indicator([1, 1, 0], [0, 0, 1]) == 1
    assert indicator([1, 1, 0], [1, 1, 0]) == 1
    assert indicator([0, 0, 0], [0, 1, 0]) == 1
    assert indicator([0, 0, 0], [0, 0, 0]) == 1


def test_similarity_rejects_bad_input():
    with pytest.raises(ValueError):
        similarity([1, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        similarity([1, 2, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        similarity([[1, 0]], [[1, 0]])


def test_similarity_exhaustive_small_widths():
    # every pair of bit vectors up to width 6 against the loop reference
    for c in range(1, 7):
        vecs = list(itertools.product((0, 1), repeat=c))
        for a in vecs:
            for b in vecs:
                s = similarity(a, b)
                ind = indicator(a, b)
                assert ind == ref_indicator(a, b)
                np.testing.assert_allclose(s, ref_similarity(a, b), rtol=1e-14, atol=0.0)
                # endpoint pinning: the indicator agrees with exact float tests
                assert (ind == 1) == (s == 0.0 or s == 1.0)
                assert 0.0 <= s <= 1.0


def test_similarity_symmetry_random():
    rng = np.random.default_rng(7)
    for _ in range(200):
        c = int(rng.integers(1, 24))
        a = rng.integers(0, 2, size=c)
        b = rng.integers(0, 2, size=c)
        assert similarity(a, b) == similarity(b, a)
        assert indicator(a, b) == indicator(b, a)


def _random_labels(rng, n, c):
    ids = [f"it{idx:03d}" for idx in range(n)]
    return LabelMatrix(ids, rng.integers(0, 2, size=(n, c)))


def test_block_similarity_matches_scalar():
    rng = np.random.default_rng(3)
    labels = _random_labels(rng, 17, 5)
    rows = rng.integers(0, 17, size=9)
    cols = rng.integers(0, 17, size=6)
    s, ind = block_similarity(labels, rows, cols)
    assert s.shape == (9, 6) and ind.shape == (9, 6)
    for a, r in enumerate(rows):
        for b, cc in enumerate(cols):
            assert s[a, b] == similarity(labels.vectors[r], labels.vectors[cc])
            assert ind[a, b] == indicator(labels.vectors[r], labels.vectors[cc])


def test_build_similarity_full_matrix():
    rng = np.random.default_rng(11)
    labels = _random_labels(rng, 12, 4)
    sim = build_similarity(labels)
    assert sim.n == 12
    np.testing.assert_array_equal(sim.s, sim.s.T)
    np.testing.assert_array_equal(sim.indicator, sim.indicator.T)
    nonzero = labels.vectors.sum(axis=1) > 0
    np.testing.assert_array_equal(sim.s.diagonal()[nonzero], 1.0)


def test_zero_label_rows_are_flagged_and_dissimilar_to_themselves():
    labels = LabelMatrix(["a", "b", "c"], [[0, 0], [1, 0], [0, 0]])
    np.testing.assert_array_equal(labels.zero_rows(), [0, 2])
    sim = build_similarity(labels)
    assert sim.s[0, 0] == 0.0
    assert sim.s[2, 2] == 0.0
    assert sim.indicator[0, 0] == 1
    np.testing.assert_array_equal(sim.s[0], 0.0)


def test_label_matrix_validation():
    with pytest.raises(ValueError):
        LabelMatrix(["a", "a"], [[1], [0]])
    with pytest.raises(ValueError):
        LabelMatrix(["a"], [[2]])
    with pytest.raises(ValueError):
        LabelMatrix(["a", "b"], [[1]])
    with pytest.raises(ValueError):
        LabelMatrix(["bad id"], [[1]])
    with pytest.raises(ValueError):
        LabelMatrix([""], [[1]])


def test_label_matrix_row_and_contains():
    labels = LabelMatrix(["a", "b"], [[1, 0], [0, 1]])
    assert "a" in labels and "z" not in labels
    np.testing.assert_array_equal(labels.row("b"), [0, 1])
    with pytest.raises(ValueError, match="unknown item id"):
        labels.row("z")


def test_label_matrix_reordered():
    labels = LabelMatrix(["a", "b", "c"], [[1, 0], [0, 1], [1, 1]])
    moved = labels.reordered(["c", "a", "b"])
    assert moved.ids == ["c", "a", "b"]
    np.testing.assert_array_equal(moved.vectors[0], [1, 1])
    with pytest.raises(ValueError):
        labels.reordered(["a", "b"])
    with pytest.raises(ValueError):
        labels.reordered(["a", "b", "z"])
    with pytest.raises(ValueError):
        labels.reordered(["a", "b", "b"])


def test_label_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    labels = _random_labels(rng, 23, 7)
    path = tmp_path / "labels.txt"
    labels.save(str(path))
    back = LabelMatrix.load(str(path))
    assert back.ids == labels.ids
    np.testing.assert_array_equal(back.vectors, labels.vectors)


def test_label_matrix_load_rejects_garbage(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("not a header\n")
    with pytest.raises(ValueError, match="header"):
        LabelMatrix.load(str(path))
    path.write_text("c=2 n=1\na 01\nextra junk\n")
    with pytest.raises(ValueError, match="trailing"):
        LabelMatrix.load(str(path))
    path.write_text("c=2 n=1\na 012\n")
    with pytest.raises(ValueError, match="line 2"):
        LabelMatrix.load(str(path))


def test_read_class_map(tmp_path):
    path = tmp_path / "classes.txt"
    path.write_text("cat\ndog\nperson\n")
    assert read_class_map(str(path)) == ["cat", "dog", "person"]
    path.write_text("cat\ncat\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_class_map(str(path))
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_class_map(str(path))


def _write_detections(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_ingest_detections_thresholding(tmp_path):
    det = tmp_path / "det.jsonl"
    _write_detections(det, [
        {"item_id": "im1", "detections": [
            {"class_name": "cat", "score": 0.9},
            {"class_name": "dog", "score": 0.49},
        ]},
        {"item_id": "im2", "detections": [
            {"class_name": "dog", "score": 0.5},
        ]},
        {"item_id": "im3", "detections": []},
    ])
    labels = ingest_detections(str(det), 0.5, ["cat", "dog"])
    assert labels.ids == ["im1", "im2", "im3"]
    np.testing.assert_array_equal(labels.vectors, [[1, 0], [0, 1], [0, 0]])
    np.testing.assert_array_equal(labels.zero_rows(), [2])


def test_ingest_detections_repeated_class_any_hit_wins(tmp_path):
    det = tmp_path / "det.jsonl"
    _write_detections(det, [
        {"item_id": "im1", "detections": [
            {"class_name": "cat", "score": 0.1},
            {"class_name": "cat", "score": 0.95},
        ]},
    ])
    labels = ingest_detections(str(det), 0.5, ["cat", "dog"])
    np.testing.assert_array_equal(labels.vectors, [[1, 0]])


def test_ingest_detections_error_lines(tmp_path):
    det = tmp_path / "det.jsonl"
    det.write_text('{"item_id": "a", "detections": []}\nnot json\n')
    with pytest.raises(ValueError, match=":2:"):
        ingest_detections(str(det), 0.5, ["cat"])

    _write_detections(det, [
        {"item_id": "a", "detections": [{"class_name": "bird", "score": 0.9}]},
    ])
    with pytest.raises(ValueError, match="unknown class"):
        ingest_detections(str(det), 0.5, ["cat"])

    _write_detections(det, [
        {"item_id": "a", "detections": []},
        {"item_id": "a", "detections": []},
    ])
    with pytest.raises(ValueError, match="duplicate item id"):
        ingest_detections(str(det), 0.5, ["cat"])

    _write_detections(det, [
        {"item_id": "a", "detections": [{"class_name": "cat", "score": 1.5}]},
    ])
    with pytest.raises(ValueError, match="score"):
        ingest_detections(str(det), 0.5, ["cat"])

    _write_detections(det, [{"item_id": "a"}])
    with pytest.raises(ValueError, match="item_id and detections"):
        ingest_detections(str(det), 0.5, ["cat"])


def test_ingest_detections_threshold_bounds(tmp_path):
    det = tmp_path / "det.jsonl"
    _write_detections(det, [{"item_id": "a", "detections": []}])
    with pytest.raises(ValueError, match="threshold"):
        ingest_detections(str(det), 1.5, ["cat"])


def test_ingest_detections_skips_blank_lines(tmp_path):
    det = tmp_path / "det.jsonl"
    det.write_text('\n{"item_id": "a", "detections": []}\n\n')
    labels = ingest_detections(str(det), 0.5, ["cat"])
    assert labels.ids == ["a"]
