"""Turn a record file into curve tables, a divergence table, and figures."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .analysis import (
    CurveSummary,
    DivergenceRow,
    group_by_config,
    settings_divergence_report,
    summarize,
    write_curve_table,
    write_divergence_table,
)
from .harness import RunRecord
from .plotting import plot_curve_grid

logger = logging.getLogger(__name__)


class ConfigKey(NamedTuple):
    model: str
    dataset: str
    setting: str
    pretrain_epochs: int


def analyze_records(records: Sequence[RunRecord], bins: int = 20, construction: str = "final"):
    if not records:
        raise ValueError("no run records to analyze")
    summaries: dict[ConfigKey, CurveSummary] = {}
    for config_id, group in sorted(group_by_config(records).items()):
        r0 = group[0]
        key = ConfigKey(r0.model, r0.dataset, r0.setting, r0.pretrain_epochs)
        if len(group) < 2:
            logger.warning("%s has a single repetition; skipped in curve summaries", config_id)
            continue
        summaries[key] = summarize(group)
    return summaries, settings_divergence_report(records, bins, construction=construction)


def emit_outputs(summaries: Mapping[ConfigKey, CurveSummary], report: Sequence[DivergenceRow],
                 out_dir) -> list[Path]:
    """Write ``curves/<config>.tsv``, ``jsd_report.tsv`` and ``accuracy_curves.{pdf,svg}``."""
    if not summaries:
        raise ValueError("nothing to emit: no configuration has two or more repetitions")
    out_dir = Path(out_dir)
    curve_dir = out_dir / "curves"
    try:
        curve_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {curve_dir}: {exc}") from exc
    written = [write_curve_table(s, curve_dir / f"{s.config_id}.tsv") for s in summaries.values()]
    written.append(write_divergence_table(report, out_dir / "jsd_report.tsv"))

    panels: dict[tuple[str, str], dict[tuple[str, int], CurveSummary]] = {}
    for key, s in summaries.items():
        panels.setdefault((key.dataset, key.setting), {})[(key.model, key.pretrain_epochs)] = s
    order = ["cora", "citeseer", "pubmed"]
    datasets = sorted({d for d, _ in panels}, key=lambda d: (order.index(d) if d in order else len(order), d))
    for ext in ("pdf", "svg"):
        written.append(plot_curve_grid(panels, out_dir / f"accuracy_curves.{ext}", datasets=datasets))
    return written
