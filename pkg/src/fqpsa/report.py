"""CSV, text-table and figure output for runs and sweeps."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

from .simkit import MetricsReport, SweepTable


def _cell(v: float) -> str:
    # fixed notation keeps output locale-free and byte-stable
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return f"{v:.6f}"


def run_rows(reports: Sequence[MetricsReport]) -> tuple[list[str], list[tuple[str, list[float]]]]:
    header = ["metric"] + [r.scheduler for r in reports]
    keys = [k for k, _ in reports[0].rows()]
    cols = [dict(r.rows()) for r in reports]
    return header, [(k, [c[k] for c in cols]) for k in keys]


def sweep_rows(table: SweepTable) -> tuple[list[str], list[tuple[str, list[float]]]]:
    return [f"{table.axis}="] + [str(v) for v in table.values], table.rows


def to_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for label, cells in rows:
        w.writerow([label] + [_cell(float(c)) for c in cells])
    return buf.getvalue()


def to_text(header: list[str], rows) -> str:
    body = [[label] + [f"{float(c):.1f}" for c in cells] for label, cells in rows]
    grid = [header] + body
    widths = [max(len(r[j]) for r in grid) for j in range(len(header))]
    lines = []
    for r in grid:
        lines.append("  ".join(c.ljust(widths[0]) if j == 0 else c.rjust(widths[j])
                               for j, c in enumerate(r)))
    return "\n".join(lines) + "\n"


def plot_sweep(table: SweepTable, out_csv: Path) -> list[Path]:
    """Throughput and delay-vs-load figures next to ``out_csv``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_csv = Path(out_csv)
    stem = out_csv.with_suffix("")
    xs = table.values
    rows = dict(table.rows)
    written = []

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label in ("FQPSA Mbps", "MLWDF Mbps"):
        if label in rows:
            ax.plot(xs, rows[label], marker="o", label=label.split()[0])
    ax.set_xlabel(f"number of {table.axis} users")
    ax.set_ylabel("data throughput (Mbps)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(f"{stem}_throughput.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    for ax, klass, bound in zip(axes, ("Voice", "Video"), (100.0, 400.0)):
        for sched in ("FQPSA", "MLWDF"):
            for grp, style in (("G", "--"), ("B", "-")):
                label = f"{sched} {klass} ({grp}) ms"
                if label in rows:
                    ax.plot(xs, rows[label], style, marker="o", label=f"{sched} {grp}")
        ax.axhline(bound, color="k", lw=0.8, ls=":")
        ax.set_title(f"{klass} 95th-pct delay")
        ax.set_xlabel(f"number of {table.axis} users")
        ax.set_ylabel("ms")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    path = Path(f"{stem}_delay.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
