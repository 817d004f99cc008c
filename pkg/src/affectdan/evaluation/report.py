# Static HTML summary of a run: loss and metric curves from the metrics log,
# per-class F1 (or per-channel CCC) bars from score reports. Charts are inline SVG.

import html
import io
import json
import logging
import os
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..training.metrics_log import read_metrics  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "affectdan"
plt.rcParams["svg.fonttype"] = "none"

PAGE = """<!DOCTYPE html>
<html lang="en">
<head><meta charset="utf-8"><title>{title}</title>
<style>body{{font-family:sans-serif;max-width:960px;margin:2em auto}}table{{border-collapse:collapse}}
td,th{{border:1px solid #ccc;padding:4px 8px;text-align:right}}figure{{margin:1em 0}}</style></head>
<body>
<h1>{title}</h1>
{body}
</body>
</html>
"""


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    text = buf.getvalue()
    return text[text.index("<svg"):]


def curves_svg(metrics) -> str:
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(10, 3.5))
    for split, group in metrics.groupby("split", sort=True):
        ax_loss.plot(group["epoch"], group["loss"], marker="o", label=split)
        ax_metric.plot(group["epoch"], group["metric_value"], marker="o", label=split)
    ax_loss.set(title="loss", xlabel="epoch")
    name = str(metrics["metric_name"].iloc[0]) if len(metrics) else "metric"
    ax_metric.set(title=name, xlabel="epoch")
    for ax in (ax_loss, ax_metric):
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    return _svg(fig)


def breakdown_svg(report: dict) -> str:
    labels = list(report["breakdown"])
    values = [report["breakdown"][k] for k in labels]
    fig, ax = plt.subplots(figsize=(max(4, len(labels) * 0.9), 3.2))
    ax.bar(labels, values, color="#4c72b0")
    ax.axhline(report["score"], color="#c44e52", linestyle="--", label=f"score {report['score']:.3f}")
    ax.set(ylim=(min(0.0, min(values, default=0.0)), 1.0), title=f"{report['task']} ({report['mode']})")
    ax.legend()
    fig.tight_layout()
    return _svg(fig)


def _table(rows: list[dict]) -> str:
    if not rows:
        return "<p>No entries.</p>"
    cols = list(rows[0])
    head = "".join(f"<th>{html.escape(c)}</th>" for c in cols)
    body = "".join("<tr>" + "".join(f"<td>{html.escape(_cell(r.get(c)))}</td>" for c in cols) + "</tr>"
                   for r in rows)
    return f"<table><tr>{head}</tr>{body}</table>"


def _cell(value) -> str:
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def render_report(metrics_path: str | os.PathLike | None, out_path: str | os.PathLike,
                  score_paths: Sequence[str | os.PathLike] = (), title: str = "affectdan run") -> Path:
    """Write a self-contained HTML page; either input may be absent."""
    sections = []
    if metrics_path is not None:
        metrics = read_metrics(metrics_path)
        if len(metrics):
            metrics = metrics.sort_values(["split", "epoch"], kind="stable")
            rows = metrics.drop(columns=["wall_ms"]).to_dict("records")
            sections.append(f"<h2>Training curves</h2><figure>{curves_svg(metrics)}</figure>{_table(rows)}")
        else:
            sections.append("<h2>Training curves</h2><p>The metrics log is empty.</p>")
    for path in score_paths:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
        summary = {k: report[k] for k in ("task", "mode", "score", "items", "config_hash") if k in report}
        sections.append(f"<h2>{html.escape(Path(path).name)}</h2>{_table([summary])}"
                        f"<figure>{breakdown_svg(report)}</figure>")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(PAGE.format(title=html.escape(title), body="\n".join(sections)), encoding="utf-8")
    logger.info("Wrote report %s", out_path)
    return out_path
