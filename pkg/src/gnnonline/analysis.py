"""Accuracy-curve summaries and the Jensen-Shannon comparison of settings A and B."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .harness import RunRecord

logger = logging.getLogger(__name__)

__all__ = [
    "CurveSummary",
    "Histogram",
    "DivergenceRow",
    "group_by_config",
    "summarize",
    "shared_histograms",
    "js_divergence",
    "curve_divergence",
    "settings_divergence_report",
    "write_curve_table",
    "read_curve_table",
    "write_divergence_table",
]


@dataclass(frozen=True, eq=False)
class CurveSummary:
    config_id: str
    mean: np.ndarray
    std: np.ndarray
    repetitions: int

    @property
    def epochs(self) -> int:
        return int(self.mean.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CurveSummary):
            return NotImplemented
        return (self.config_id == other.config_id and self.repetitions == other.repetitions
                and np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class DivergenceRow:
    model: str
    pretrain_epochs: int
    n_a: int
    n_b: int
    jsd: float


def group_by_config(records: Iterable[RunRecord]) -> dict[str, list[RunRecord]]:
    groups: dict[str, list[RunRecord]] = defaultdict(list)
    for r in records:
        groups[r.config_id].append(r)
    return dict(groups)


def summarize(records: Sequence[RunRecord]) -> CurveSummary:
    """Per-epoch mean and population standard deviation across repetitions."""
    if len(records) < 2:
        raise ValueError(f"summarize needs at least 2 records, got {len(records)}")
    ids = {r.config_id for r in records}
    if len(ids) != 1:
        raise ValueError(f"records mix configurations: {sorted(ids)}")
    lengths = {len(r.accuracies) for r in records}
    if len(lengths) != 1:
        raise ValueError(f"records have mixed trajectory lengths {sorted(lengths)}")
    # order by repetition so the floating-point sum does not depend on file order
    acc = np.array([r.accuracies for r in sorted(records, key=lambda r: (r.repetition, r.seed))])
    return CurveSummary(ids.pop(), acc.mean(axis=0), acc.std(axis=0), len(records))


def shared_histograms(a, b, bins: int = 20) -> tuple[Histogram, Histogram]:
    """Equal-width histograms of two samples over the range of their union."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    if bins < 1:
        raise ValueError("bins must be positive")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        edges = np.array([lo, lo + 1.0])
        one = np.array([1.0])
        return Histogram(edges, one), Histogram(edges, one)
    edges = np.linspace(lo, hi, bins + 1)
    pa = np.histogram(a, bins=edges)[0] / a.size
    pb = np.histogram(b, bins=edges)[0] / b.size
    return Histogram(edges, pa), Histogram(edges, pb)


def _kl2(p: np.ndarray, q: np.ndarray) -> float:
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def js_divergence(samples_a, samples_b, bins: int = 20) -> float:
    """Base-2 Jensen-Shannon divergence between binned samples, in [0, 1]."""
    ha, hb = shared_histograms(samples_a, samples_b, bins)
    p, q = ha.probs, hb.probs
    m = 0.5 * (p + q)
    value = 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)
    return min(max(value, 0.0), 1.0)


def curve_divergence(curve_a, curve_b) -> float:
    """Base-2 JSD between two nonnegative curves, each rescaled to unit mass."""
    p = np.asarray(curve_a, dtype=np.float64)
    q = np.asarray(curve_b, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1 or p.size == 0:
        raise ValueError(f"curves must be nonempty and equally long, got {p.shape} and {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("curves must be nonnegative")
    if p.sum() == 0 or q.sum() == 0:
        return 0.0 if p.sum() == q.sum() else 1.0
    p, q = p / p.sum(), q / q.sum()
    m = 0.5 * (p + q)
    return min(max(0.5 * _kl2(p, m) + 0.5 * _kl2(q, m), 0.0), 1.0)


def _curve_rows(records) -> list[DivergenceRow]:
    curves: dict[tuple[str, int, str, str], list[list[float]]] = defaultdict(list)
    for r in records:
        curves[(r.model, r.pretrain_epochs, r.dataset, r.setting)].append(r.accuracies)
    rows = []
    for model, pre in sorted({(m, p) for m, p, _, _ in curves}):
        values, n_a, n_b = [], 0, 0
        for ds in sorted({d for m, p, d, _ in curves if (m, p) == (model, pre)}):
            a, b = curves.get((model, pre, ds, "A")), curves.get((model, pre, ds, "B"))
            if not a or not b:
                logger.warning("no %s curves for %s on %s with %d pretraining epochs; dataset skipped",
                               "A" if not a else "B", model, ds, pre)
                continue
            values.append(curve_divergence(np.mean(a, axis=0), np.mean(b, axis=0)))
            n_a, n_b = n_a + len(a), n_b + len(b)
        if values:
            rows.append(DivergenceRow(model, pre, n_a, n_b, float(np.mean(values))))
    return rows


def settings_divergence_report(records: Iterable[RunRecord], bins: int = 20, epoch: int = -1,
                               construction: str = "final") -> list[DivergenceRow]:
    """JSD between setting A and setting B per (model, pretraining).

    ``final``: each sample pools the chosen epoch's accuracy (default: the
    last) over every repetition and dataset, binned into ``bins`` shared bins.

    ``curve``: the mean accuracy curve of each dataset and setting is treated
    as a distribution over epochs; the row is the mean over datasets.  This
    ignores a constant accuracy offset between the settings.
    """
    if construction == "curve":
        return _curve_rows(records)
    if construction != "final":
        raise ValueError(f"construction must be 'final' or 'curve', got {construction!r}")
    pools: dict[tuple[str, int, str], list[float]] = defaultdict(list)
    for r in records:
        pools[(r.model, r.pretrain_epochs, r.setting)].append(r.accuracies[epoch])
    rows = []
    for model, pre in sorted({(m, p) for m, p, _ in pools}):
        a, b = pools.get((model, pre, "A")), pools.get((model, pre, "B"))
        if not a or not b:
            logger.warning("no %s samples for %s with %d pretraining epochs; row omitted",
                           "A" if not a else "B", model, pre)
            continue
        rows.append(DivergenceRow(model, pre, len(a), len(b), js_divergence(a, b, bins)))
    return rows


def write_curve_table(summary: CurveSummary, path) -> Path:
    path = Path(path)
    lines = ["epoch\tmean\tstd"]
    lines += [f"{i}\t{m!r}\t{s!r}" for i, (m, s) in enumerate(zip(summary.mean.tolist(), summary.std.tolist()))]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_curve_table(path, config_id: str | None = None, repetitions: int = 0) -> CurveSummary:
    path = Path(path)
    rows = path.read_text().splitlines()
    if not rows or rows[0].split("\t") != ["epoch", "mean", "std"]:
        raise ValueError(f"{path}: expected header 'epoch\\tmean\\tstd'")
    body = [r.split("\t") for r in rows[1:] if r]
    mean = np.array([float(r[1]) for r in body])
    std = np.array([float(r[2]) for r in body])
    return CurveSummary(config_id or path.stem, mean, std, repetitions)


def write_divergence_table(rows: Sequence[DivergenceRow], path) -> Path:
    path = Path(path)
    lines = ["model\tpretrain_epochs\tn_a\tn_b\tjsd"]
    lines += [f"{r.model}\t{r.pretrain_epochs}\t{r.n_a}\t{r.n_b}\t{r.jsd!r}" for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
