"""Report output: WER/loss tables as CSV, text summaries, and figures.

Figures are rendered with matplotlib to files next to the delimited
output; nothing here opens a display.
"""

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

WER_COLUMNS = ["set", "wer", "subs", "ins", "dels"]


def write_wer_csv(path, table):
    """table: {set name: {"wer", "subs", "ins", "dels", ...}}."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(WER_COLUMNS)
        for name in sorted(table):
            row = table[name]
            writer.writerow([name, "%.4f" % row["wer"], row["subs"], row["ins"], row["dels"]])
    return path


def write_loss_csv(path, loss_curves):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["phase", "step", "loss"])
        for phase, curve in loss_curves.items():
            for step, loss in curve:
                writer.writerow([phase, step, "%.6f" % loss])
    return path


def plot_loss_curves(path, loss_curves, title="training loss"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for phase, curve in loss_curves.items():
        if not curve:
            continue
        steps = [s for s, _ in curve]
        losses = [l for _, l in curve]
        ax.plot(steps, losses, label=phase)
    ax.set_xlabel("step (within phase)")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_wer_bars(path, tables, title="word error rate"):
    """tables: {system name: {set name: metrics}} grouped bar chart."""
    systems = sorted(tables)
    sets = sorted({s for t in tables.values() for s in t})
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(1, len(systems))
    for i, system in enumerate(systems):
        xs = [j + i * width for j in range(len(sets))]
        ys = [tables[system].get(s, {}).get("wer", 0.0) for s in sets]
        ax.bar(xs, ys, width=width, label=system)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(sets))])
    ax.set_xticklabels(sets)
    ax.set_ylabel("WER")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_experiment_report(out_dir, name, report, wer_tables=None):
    """Write CSVs, a JSON/text summary, and figures for one experiment.

    wer_tables: optional {system: {set: metrics}} comparison; report.wers
    is used when absent.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if report.loss_curves:
        paths["loss_csv"] = write_loss_csv(os.path.join(out_dir, "%s_loss.csv" % name),
                                           report.loss_curves)
        paths["loss_png"] = plot_loss_curves(os.path.join(out_dir, "%s_loss.png" % name),
                                             report.loss_curves, title="%s loss" % name)
    tables = wer_tables or ({name: report.wers} if report.wers else {})
    if report.wers:
        paths["wer_csv"] = write_wer_csv(os.path.join(out_dir, "%s_wer.csv" % name),
                                         report.wers)
    if tables:
        paths["wer_png"] = plot_wer_bars(os.path.join(out_dir, "%s_wer.png" % name),
                                         tables, title="%s WER" % name)
    summary = {
        "name": name,
        "seed": report.seed,
        "wall_clock_s": report.wall_clock_s,
        "config": report.config,
        "wers": report.wers,
        "notes": report.notes,
    }
    summary_path = os.path.join(out_dir, "%s_summary.json" % name)
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, default=str)
    paths["summary"] = summary_path
    with open(os.path.join(out_dir, "%s_summary.txt" % name), "w") as f:
        f.write("experiment: %s (seed %s)\n" % (name, report.seed))
        f.write("wall clock: %.1f s\n" % report.wall_clock_s)
        for set_name, row in sorted(report.wers.items()):
            f.write(
                "%-14s WER %.4f (S=%d I=%d D=%d, %d utts)\n"
                % (set_name, row["wer"], row["subs"], row["ins"], row["dels"],
                   row.get("num_utts", 0))
            )
    return paths
