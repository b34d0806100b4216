"""Losses, metrics, the optimization loop, checkpoints and evaluation."""
from __future__ import annotations

import copy
import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .config import RunConfig
from .graph import Dataset
from .model import CitationModel, GraphContext

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "citeforecast-checkpoint"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("epoch", "train_loss", "pred_loss", "time_loss", "val_mae", "val_rmse")


class TrainingDiverged(RuntimeError):
    pass


# --
# Losses and metrics


def log_counts(counts):
    return torch.log1p(torch.as_tensor(counts, dtype=torch.float64))


def prediction_loss(pred: torch.Tensor, truth_counts) -> torch.Tensor:
    """MSE between predictions and log(truth + 1): mean over years, then over papers."""
    target = log_counts(truth_counts).to(pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if (target < 0).any():
        raise ValueError("citation counts must be nonnegative")
    if pred.numel() == 0:
        raise ValueError("empty batch")
    return ((pred - target) ** 2).mean(dim=1).mean()


def total_loss(pred_loss, time_loss, beta: float):
    return pred_loss + beta * time_loss


def _errors(pred, truth) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred - truth


def mae(pred, truth) -> float:
    return float(np.mean(np.abs(_errors(pred, truth))))


def rmse(pred, truth) -> float:
    return float(np.sqrt(np.mean(_errors(pred, truth) ** 2)))


@dataclass
class EvalReport:
    split: str
    mae_by_year: list[float]
    rmse_by_year: list[float]
    mae_overall: float
    rmse_overall: float
    n_papers: int
    skipped: list[int] = field(default_factory=list)

    def columns(self) -> list[str]:
        years = [f"year{i + 1}" for i in range(len(self.mae_by_year))]
        return [f"mae_{y}" for y in years] + ["mae_overall"] + [f"rmse_{y}" for y in years] + ["rmse_overall"]

    def row(self) -> dict:
        vals = self.mae_by_year + [self.mae_overall] + self.rmse_by_year + [self.rmse_overall]
        return {"split": self.split, **dict(zip(self.columns(), vals))}

    def to_dict(self) -> dict:
        return {**self.row(), "n_papers": self.n_papers, "n_skipped": len(self.skipped), "space": "log1p"}


def report_from(pred: np.ndarray, truth_log: np.ndarray, split: str, skipped=()) -> EvalReport:
    pred, truth_log = np.asarray(pred), np.asarray(truth_log)
    L = truth_log.shape[1]
    return EvalReport(
        split,
        [mae(pred[:, t], truth_log[:, t]) for t in range(L)],
        [rmse(pred[:, t], truth_log[:, t]) for t in range(L)],
        mae(pred, truth_log),
        rmse(pred, truth_log),
        len(pred),
        list(skipped),
    )


# --
# Splits


def split_years(dataset: Dataset, cfg: RunConfig) -> dict[str, list[int]]:
    t = cfg.train
    net = dataset.network
    test = t.test_year if t.test_year is not None else net.last_year
    val = t.val_year if t.val_year is not None else test - 1
    if t.train_years is not None:
        train = list(t.train_years)
    else:
        lo = max(net.first_year + 1, val - t.n_train_years)
        train = list(range(lo, val))
    if not train:
        raise ValueError("no training years; the dataset needs more years of history")
    return {"train": train, "val": [val], "test": [test]}


def split_papers(dataset: Dataset, cfg: RunConfig, with_truth: bool = True) -> dict[str, list[int]]:
    """Papers per split by publication year; ``with_truth=False`` keeps papers lacking ground truth."""
    out = {}
    for name, years in split_years(dataset, cfg).items():
        out[name] = [p for y in years for p in dataset.papers_published(y, with_truth)]
    return out


def truth_matrix(dataset: Dataset, ids) -> np.ndarray:
    missing = [int(p) for p in ids if int(p) not in dataset.citations]
    if missing:
        raise ValueError(f"no ground truth for papers {missing[:5]}")
    return np.array([dataset.citations[int(p)] for p in ids], dtype=np.float64)


# --
# Checkpoints


def make_checkpoint(model, cfg, ctx, **state) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": "model",
        "segments": model.segment_state(),
        "config": cfg.to_dict(),
        "seed": cfg.train.seed,
        "node_ids": ctx.network.node_ids.tolist(),
        **state,
    }


def stub_checkpoint(kind: str = "oracle", value: float = 0.0) -> dict:
    """Checkpoint for a non-learned predictor: ``oracle`` (ground truth) or ``constant``."""
    if kind not in ("oracle", "constant"):
        raise ValueError(f"unknown stub kind {kind!r}")
    return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": kind, "value": value}


def save_checkpoint(ckpt: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(ckpt, path)
    return path


def load_checkpoint(path_or_ckpt) -> dict:
    ckpt = path_or_ckpt
    if not isinstance(ckpt, dict):
        ckpt = torch.load(path_or_ckpt, map_location="cpu", weights_only=False)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a citeforecast checkpoint")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
    return ckpt


def model_from_checkpoint(ckpt: dict, dataset: Dataset) -> tuple[CitationModel, RunConfig]:
    cfg = RunConfig.from_dict(ckpt["config"])
    if list(dataset.network.node_ids.tolist()) != list(ckpt["node_ids"]):
        raise ValueError("checkpoint was trained on a different node set")
    model = CitationModel(len(ckpt["node_ids"]), cfg).double()
    model.load_segments(ckpt["segments"])
    model.eval()
    return model, cfg


# --
# Training


@dataclass
class TrainResult:
    best: dict
    last: dict
    history: list[dict]
    semantic_weights: list[dict]
    seconds: float


def build_model(ctx: GraphContext, cfg: RunConfig) -> CitationModel:
    torch.manual_seed(cfg.train.seed)
    return CitationModel(ctx.n_nodes, cfg).double()


@torch.no_grad()
def _score(model, ctx, ids, dataset):
    model.eval()
    out = model(ctx, ids)
    model.train()
    if len(out.paper_ids) == 0:
        return math.nan, math.nan, out
    truth = np.log1p(truth_matrix(dataset, out.paper_ids))
    pred = out.preds.numpy()
    return mae(pred, truth), rmse(pred, truth), out


def _batch_losses(model, ctx, ids, dataset, beta):
    out = model(ctx, ids)
    if len(out.paper_ids) == 0:
        return None
    truth = truth_matrix(dataset, out.paper_ids)
    pl = prediction_loss(out.preds, truth)
    return pl, out.time_loss, total_loss(pl, out.time_loss, beta)


def train(
    dataset: Dataset,
    cfg: RunConfig,
    ctx: GraphContext | None = None,
    resume: dict | None = None,
    out_dir=None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Adam on prediction + beta * temporal loss with early stopping on validation MAE.

    A falsy ``cfg.train.patience`` disables early stopping.

    With ``out_dir`` the run writes ``train_log.csv``, ``semantic_weights.csv``,
    ``last.pt`` and ``best.pt``.
    """
    started = time.perf_counter()
    t = cfg.train
    ctx = ctx or GraphContext(dataset, cfg)
    splits = split_papers(dataset, cfg)
    train_ids, val_ids = np.array(splits["train"]), np.array(splits["val"])
    if len(train_ids) == 0:
        raise ValueError("training split is empty")

    model = build_model(ctx, cfg)
    opt = torch.optim.Adam(model.parameters(), lr=t.learning_rate)
    rng = np.random.default_rng(t.seed)
    history, sem_rows = [], []
    best_mae, best_state, stale, start_epoch = math.inf, None, 0, 1

    if resume is not None:
        resume = load_checkpoint(resume)
        model.load_segments(resume["segments"])
        opt.load_state_dict(resume["optimizer"])
        rng.bit_generator.state = resume["rng"]["numpy"]
        torch.set_rng_state(resume["rng"]["torch"])
        history = list(resume["history"])
        sem_rows = list(resume.get("semantic_weights", []))
        best_mae, stale = resume["best_val_mae"], resume["stale"]
        best_state = resume.get("best_segments")
        start_epoch = resume["epoch"] + 1
    else:
        # epoch 0: the untrained model, no update
        with torch.no_grad():
            losses = _batch_losses(model, ctx, train_ids, dataset, t.beta_time)
        vm, vr, vout = _score(model, ctx, val_ids, dataset)
        row = _log_row(0, losses, vm, vr)
        history.append(row)
        sem_rows.append(_semantic_row(0, vout, cfg))
        if on_epoch:
            on_epoch(row)
        if vm < best_mae:
            best_mae, best_state = vm, copy.deepcopy(model.segment_state())

    last = None
    for epoch in range(start_epoch, t.epochs + 1):
        perm = rng.permutation(train_ids)
        sums = np.zeros(3)
        seen = 0
        for start in range(0, len(perm), t.batch_size):
            batch = perm[start : start + t.batch_size]
            losses = _batch_losses(model, ctx, batch, dataset, t.beta_time)
            if losses is None:
                continue
            pl, tl, loss = losses
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: "
                    f"pred_loss={pl.item()}, time_loss={tl.item()}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums += len(batch) * np.array([loss.item(), pl.item(), tl.item()])
            seen += len(batch)
        vm, vr, vout = _score(model, ctx, val_ids, dataset)
        row = {
            "epoch": epoch,
            "train_loss": float(sums[0] / max(seen, 1)),
            "pred_loss": float(sums[1] / max(seen, 1)),
            "time_loss": float(sums[2] / max(seen, 1)),
            "val_mae": vm,
            "val_rmse": vr,
        }
        history.append(row)
        sem_rows.append(_semantic_row(epoch, vout, cfg))
        if on_epoch:
            on_epoch(row)
        log.info("epoch %d loss %.5f val_mae %.5f", epoch, row["train_loss"], vm)
        if vm < best_mae:
            best_mae, stale = vm, 0
            best_state = copy.deepcopy(model.segment_state())
        else:
            stale += 1
        last = make_checkpoint(
            model,
            cfg,
            ctx,
            epoch=epoch,
            optimizer=opt.state_dict(),
            rng={"numpy": rng.bit_generator.state, "torch": torch.get_rng_state()},
            history=history,
            semantic_weights=sem_rows,
            best_val_mae=best_mae,
            stale=stale,
            best_segments=best_state,
        )
        if out_dir is not None:
            save_checkpoint(last, Path(out_dir) / "last.pt")
        if t.patience and stale >= t.patience:
            log.info("early stop at epoch %d", epoch)
            break
    if last is None:
        last = make_checkpoint(model, cfg, ctx, epoch=start_epoch - 1, history=history)

    if best_state is None:
        best_state = model.segment_state()
    best = make_checkpoint(model, cfg, ctx, epoch=int(np.argmin([r["val_mae"] for r in history])), history=history)
    best["segments"] = best_state
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(best, out / "best.pt")
        _write_csv(out / "train_log.csv", LOG_COLUMNS, history)
        _write_csv(out / "semantic_weights.csv", ["epoch", *cfg.train.metapaths], sem_rows)
    return TrainResult(best, last, history, sem_rows, time.perf_counter() - started)


def _log_row(epoch, losses, vm, vr):
    if losses is None:
        tl = pl = tt = math.nan
    else:
        pl, tt, tl = (float(x) for x in losses)
    return {"epoch": epoch, "train_loss": tl, "pred_loss": pl, "time_loss": tt, "val_mae": vm, "val_rmse": vr}


def _semantic_row(epoch, out, cfg):
    row = {"epoch": epoch}
    if out is not None and out.semantic_weights:
        mean = torch.stack(list(out.semantic_weights.values())).mean(0)
        row.update({m: float(w) for m, w in zip(cfg.train.metapaths, mean)})
    return row


def _write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


# --
# Prediction and evaluation


def predict(ckpt, dataset: Dataset, paper_ids, ctx: GraphContext | None = None):
    """Predicted log-scale series; returns (predicted ids, (N, L) array, skipped ids)."""
    ckpt = load_checkpoint(ckpt)
    paper_ids = np.asarray(paper_ids, dtype=np.int64)
    if ckpt["kind"] == "oracle":
        return paper_ids, np.log1p(truth_matrix(dataset, paper_ids)), []
    if ckpt["kind"] == "constant":
        return paper_ids, np.full((len(paper_ids), dataset.horizon), float(ckpt["value"])), []
    model, cfg = model_from_checkpoint(ckpt, dataset)
    ctx = ctx or GraphContext(dataset, cfg)
    with torch.no_grad():
        out = model(ctx, paper_ids)
    return out.paper_ids, out.preds.numpy(), out.skipped


def embed(ckpt, dataset: Dataset, paper_ids, ctx: GraphContext | None = None):
    """Fused paper embeddings from a trained checkpoint; returns (ids, (N, dim) array)."""
    ckpt = load_checkpoint(ckpt)
    if ckpt["kind"] != "model":
        raise ValueError(f"{ckpt['kind']} checkpoints carry no embeddings")
    model, cfg = model_from_checkpoint(ckpt, dataset)
    ctx = ctx or GraphContext(dataset, cfg)
    with torch.no_grad():
        out = model(ctx, np.asarray(paper_ids, dtype=np.int64))
    return out.paper_ids, out.h.numpy()


def evaluate(ckpt, dataset: Dataset, split: str = "test", ctx: GraphContext | None = None, cfg: RunConfig | None = None) -> EvalReport:
    ckpt = load_checkpoint(ckpt)
    if cfg is None:
        cfg = RunConfig.from_dict(ckpt["config"]) if "config" in ckpt else RunConfig()
    splits = split_papers(dataset, cfg, with_truth=False)
    if split not in splits:
        raise ValueError(f"unknown split {split!r}")
    ids = splits[split]
    if not ids:
        raise ValueError(f"split {split!r} has no papers")
    truth_matrix(dataset, ids)
    got, pred, skipped = predict(ckpt, dataset, ids, ctx)
    truth = np.log1p(truth_matrix(dataset, got))
    return report_from(pred, truth, split, skipped)


def repeat_runs(dataset: Dataset, cfg: RunConfig, repeats: int, split: str = "test", ctx=None):
    """Train ``repeats`` times with consecutive seeds; returns the reports and mean/std rows."""
    reports = []
    ctx = ctx or GraphContext(dataset, cfg)
    for r in range(repeats):
        run_cfg = cfg.updated(seed=cfg.train.seed + r)
        ctx.cfg = run_cfg
        result = train(dataset, run_cfg, ctx=ctx)
        reports.append(evaluate(result.best, dataset, split, ctx=ctx))
    rows = [rep.row() for rep in reports]
    cols = reports[0].columns()
    mean = {c: float(np.mean([r[c] for r in rows])) for c in cols}
    std = {c: float(np.std([r[c] for r in rows])) for c in cols}
    return reports, mean, std
