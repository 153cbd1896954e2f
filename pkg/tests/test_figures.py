"""Figure rendering writes real image files for every report shape."""

from __future__ import annotations

import numpy as np
import pytest

from pseudohash import CodeStore, LabelMatrix, evaluate
from pseudohash.figures import plot_metric_curves, plot_sweep_curves, plot_training_log


def _report(cutoffs=(1, 2)):
    labels = LabelMatrix(["a", "b", "c"], [[1, 0], [1, 0], [0, 1]])
    store = CodeStore.from_signs(["a", "b", "c"], np.array([[1, 1], [1, -1], [-1, -1]]))
    return evaluate(store, store, labels, cutoffs)


def _png_ok(path):
    data = path.read_bytes()
    return data.startswith(b"\x89PNG") and len(data) > 1000


def test_plot_metric_curves(tmp_path):
    out = tmp_path / "metrics.png"
    plot_metric_curves({"trained": _report(), "lsh": _report()}, str(out))
    assert _png_ok(out)
    with pytest.raises(ValueError):
        plot_metric_curves({}, str(out))


def test_plot_sweep_curves(tmp_path):
    out = tmp_path / "sweep.png"
    plot_sweep_curves("alpha", {1.0: _report(), 2.0: _report()}, str(out))
    assert _png_ok(out)
    with pytest.raises(ValueError):
        plot_sweep_curves("alpha", {}, str(out))


def test_plot_training_log(tmp_path):
    log = [
        {"epoch": 0, "iteration": 0, "lr": 0.01,
         "pair_loss": 5.0, "quant_loss": 3.0, "total_loss": 305.0},
        {"epoch": 0, "iteration": 1, "lr": 0.01,
         "pair_loss": 4.0, "quant_loss": 2.0, "total_loss": 204.0},
    ]
    out = tmp_path / "log.png"
    plot_training_log(log, str(out))
    assert _png_ok(out)
    with pytest.raises(ValueError):
        plot_training_log([], str(out))
