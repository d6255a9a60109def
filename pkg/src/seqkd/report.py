"""Report rendering: TSV, aligned text table, and comparison figures.

Scores are reported in points (100 x metric, two decimals).  Figures are
written as PNG files next to the delimited output.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .distill import ReportRow

COLUMNS = (
    "plan",
    "teacher",
    "recipe",
    "init",
    "filtered",
    "train_pairs",
    "epochs",
    "val_bleu",
    "val_ter",
    "test_bleu",
    "test_ter",
)


def row_values(row: ReportRow) -> tuple[str, ...]:
    return (
        row.name,
        row.teacher,
        row.recipe,
        row.init_mode,
        "yes" if row.filtered else "no",
        str(row.train_pairs),
        str(row.epochs),
        f"{row.val_bleu:.2f}",
        f"{row.val_ter:.2f}",
        f"{row.test_bleu:.2f}",
        f"{row.test_ter:.2f}",
    )


def write_report_tsv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(COLUMNS) + "\n")
        for row in rows:
            f.write("\t".join(row_values(row)) + "\n")


def read_report_tsv(path) -> list[ReportRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected report columns {header}")
        for line in f:
            v = line.rstrip("\n").split("\t")
            rows.append(
                ReportRow(
                    name=v[0],
                    teacher=v[1],
                    recipe=v[2],
                    init_mode=v[3],
                    filtered=v[4] == "yes",
                    train_pairs=int(v[5]),
                    epochs=int(v[6]),
                    val_bleu=float(v[7]),
                    val_ter=float(v[8]),
                    test_bleu=float(v[9]),
                    test_ter=float(v[10]),
                )
            )
    return rows


def write_report_text(rows, path) -> None:
    """Aligned fixed-width rendering of the same table."""
    table = [COLUMNS] + [row_values(r) for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(COLUMNS))]
    with open(path, "w", encoding="utf-8") as f:
        for line_no, line in enumerate(table):
            f.write("  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip() + "\n")
            if line_no == 0:
                f.write("  ".join("-" * w for w in widths) + "\n")


def _bar_figure(rows, value_fn, ylabel, path):
    names = [r.name for r in rows]
    values = [value_fn(r) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(rows) + 1.5), 3.2))
    ax.bar(range(len(rows)), values, color="#4878b0")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(rows, out_dir, basename: str = "report") -> dict:
    """Write the TSV, the aligned text table, and BLEU/TER bar charts.

    Returns the paths written, keyed by artifact kind.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "tsv": os.path.join(out_dir, f"{basename}.tsv"),
        "text": os.path.join(out_dir, f"{basename}.txt"),
    }
    write_report_tsv(rows, paths["tsv"])
    write_report_text(rows, paths["text"])
    if rows:
        paths["bleu_png"] = os.path.join(out_dir, f"{basename}_bleu.png")
        paths["ter_png"] = os.path.join(out_dir, f"{basename}_ter.png")
        _bar_figure(rows, lambda r: r.test_bleu, "test BLEU (points)", paths["bleu_png"])
        _bar_figure(rows, lambda r: r.test_ter, "test TER (points)", paths["ter_png"])
    return paths
