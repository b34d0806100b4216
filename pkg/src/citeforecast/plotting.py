"""Static figures: predicted-vs-true curve grids, error bars, embedding scatter."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PREDICTION_COLUMNS = ("paper_id", "year_offset", "predicted_log_cumulative", "ground_truth_log_cumulative")


def write_predictions(path, paper_ids, preds, truth=None) -> Path:
    """One row per (paper, year offset); ground truth left blank when unknown."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTION_COLUMNS)
        for i, pid in enumerate(paper_ids):
            for t in range(preds.shape[1]):
                gt = "" if truth is None else repr(float(truth[i, t]))
                w.writerow([int(pid), t + 1, repr(float(preds[i, t])), gt])
    return path


def read_predictions(path):
    """Inverse of :func:`write_predictions`: (ids, preds, truth or None)."""
    rows = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            pid = int(r["paper_id"])
            gt = r["ground_truth_log_cumulative"]
            rows.setdefault(pid, []).append(
                (int(r["year_offset"]), float(r["predicted_log_cumulative"]), float(gt) if gt != "" else math.nan)
            )
    ids = np.array(sorted(rows), dtype=np.int64)
    preds = np.array([[p for _, p, _ in sorted(rows[i])] for i in ids])
    truth = np.array([[g for _, _, g in sorted(rows[i])] for i in ids])
    if np.isnan(truth).all():
        truth = None
    return ids, preds, truth


def curve_grid(paper_ids, preds, truth, out, n: int = 9, title: str | None = None) -> Path:
    """Predicted vs. observed log-cumulative curves for up to ``n`` papers.

    Papers are picked evenly across the range of final observed values so
    the grid shows both rarely and frequently cited papers.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    key = truth[:, -1] if truth is not None else preds[:, -1]
    order = np.argsort(key, kind="stable")
    pick = order[np.unique(np.linspace(0, len(order) - 1, min(n, len(order))).round().astype(int))]
    cols = min(3, len(pick)) or 1
    rows = max(1, math.ceil(len(pick) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False)
    years = np.arange(1, preds.shape[1] + 1)
    for ax, i in zip(axes.flat, pick):
        ax.plot(years, preds[i], "o-", label="predicted")
        if truth is not None:
            ax.plot(years, truth[i], "s--", label="observed")
        ax.set_title(f"paper {int(paper_ids[i])}", fontsize=9)
        ax.set_xticks(years)
    for ax in list(axes.flat)[len(pick):]:
        ax.axis("off")
    axes.flat[0].legend(fontsize=7)
    fig.supxlabel("years since publication")
    fig.supylabel("log(1 + cumulative citations)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def error_bars(report: dict, out) -> Path:
    """Per-year MAE/RMSE bars from an evaluation report dict."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    years = sorted(int(k[len("mae_year"):]) for k in report if k.startswith("mae_year"))
    x = np.arange(len(years) + 1)
    mae = [report[f"mae_year{y}"] for y in years] + [report["mae_overall"]]
    rmse = [report[f"rmse_year{y}"] for y in years] + [report["rmse_overall"]]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(x - 0.2, mae, 0.4, label="MAE")
    ax.bar(x + 0.2, rmse, 0.4, label="RMSE")
    ax.set_xticks(x, [f"year{y}" for y in years] + ["overall"])
    ax.set_title(f"{report.get('split', '')} errors (log space)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def project_2d(vectors: np.ndarray) -> np.ndarray:
    """Centre and project onto the top two principal directions."""
    x = np.asarray(vectors, dtype=np.float64)
    x = x - x.mean(axis=0, keepdims=True)
    if x.shape[0] < 2:
        return np.zeros((x.shape[0], 2))
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    proj = x @ vt[:2].T
    if proj.shape[1] < 2:
        proj = np.pad(proj, ((0, 0), (0, 2 - proj.shape[1])))
    return proj


def embedding_scatter(paper_ids, vectors, values, out_png, out_csv=None) -> tuple[Path, Path | None]:
    """2-D scatter of paper embeddings coloured by ``values``; coordinates also go to CSV."""
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    xy = project_2d(vectors)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    sc = ax.scatter(xy[:, 0], xy[:, 1], c=values, cmap="viridis", s=12)
    fig.colorbar(sc, ax=ax, label="log(1 + 5-year citations)")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    if out_csv is not None:
        out_csv = Path(out_csv)
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["paper_id", "x", "y", "value"])
            for pid, (a, b), v in zip(paper_ids, xy, values):
                w.writerow([int(pid), float(a), float(b), float(v)])
    return out_png, out_csv
