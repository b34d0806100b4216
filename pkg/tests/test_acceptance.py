"""Acceptance gate: the eight end-to-end criteria at their stated tolerances.

Each test records a PASS/FAIL line before asserting; the lines are printed
in the terminal summary.
"""
import json
import math
import time

import numpy as np
import pytest
import scipy.sparse as sp
import torch
from scipy import special

import citeforecast.encoder as encoder_mod
import citeforecast.generator as generator_mod
import citeforecast.importance as importance_mod
from citeforecast.config import RunConfig
from citeforecast.encoder import YearEmbeddings, temporal_aligned_loss
from citeforecast.generator import CurveParams, GeneratorConfig, cumulative_citations, predict_series, std_normal_cdf
from citeforecast.graph import emit, ingest
from citeforecast.model import CitationModel, GraphContext
from citeforecast.ppr import PPRConfig, approx_ppr, exact_ppr
from citeforecast.synth import SyntheticSpec, generate
from citeforecast.training import (
    evaluate,
    load_checkpoint,
    mae,
    model_from_checkpoint,
    prediction_loss,
    rmse,
    train,
)

from test_gradients import end_to_end
from conftest import central_difference_check

BENCHMARK = SyntheticSpec(n_papers=500, seed=0)
# the 50-epoch budget is spent in full; see the decisions ledger on early stopping
TRAIN_CFG = RunConfig().updated(epochs=50, patience=None)


# --
# 1. PPR fidelity


def test_criterion_1_ppr_fidelity(acceptance):
    rng = np.random.default_rng(2024)
    cfg = PPRConfig(alpha_teleport=0.15, epsilon=0.05)
    fractions, seconds = [], 0.0
    for g in range(30):
        n = int(rng.integers(10, 201))
        p = rng.uniform(1.0, 8.0) / n
        upper = np.triu(rng.random((n, n)) < p, 1)
        adj = (upper | upper.T).astype(float)
        started = time.perf_counter()
        rows = approx_ppr(sp.csr_matrix(adj), cfg, seed=g)
        seconds += time.perf_counter() - started
        err = np.abs(rows.dense(np.arange(n)) - exact_ppr(adj, 0.15)).max(axis=1)
        fractions.append(float(np.mean(err <= 0.05)))
    ok = min(fractions) >= 0.95 and seconds <= 10
    acceptance(1, ok, f"worst graph {min(fractions):.3f} of sources within 0.05 (need >= 0.95); approx runtime {seconds:.2f}s (need <= 10s)")
    assert ok


# --
# 2. attention normalization


def test_criterion_2_attention_normalization(acceptance, monkeypatch):
    captured = {"segment": [], "fusion": []}
    real_softmax = encoder_mod.segment_softmax
    real_fuse = generator_mod.fuse

    def spy_softmax(scores, index, n):
        out = real_softmax(scores, index, n)
        captured["segment"].append((out.detach(), index.clone(), n))
        return out

    def spy_fuse(h_g, h_c, lam):
        out = real_fuse(h_g, h_c, lam)
        captured["fusion"].append((out[1].detach(), out[2].detach()))
        return out

    monkeypatch.setattr(encoder_mod, "segment_softmax", spy_softmax)
    monkeypatch.setattr(importance_mod, "segment_softmax", spy_softmax)
    monkeypatch.setattr(generator_mod, "fuse", spy_fuse)

    worst = {"neighbor": 0.0, "semantic": 0.0, "fusion": 0.0}
    checked = {"neighbor": 0, "semantic": 0, "fusion": 0}
    rng = np.random.default_rng(7)
    cfg = RunConfig().updated(dim=16, encoder_heads=4, rnn_hidden=16, rnn_layers=2, importance_heads=4)
    for instance in range(100):
        spec = SyntheticSpec(
            n_papers=int(rng.integers(15, 60)),
            n_authors=int(rng.integers(5, 30)),
            n_venues=int(rng.integers(1, 5)),
            n_keywords=int(rng.integers(2, 10)),
            seed=instance,
        )
        ds = generate(spec)
        ctx = GraphContext(ds, cfg)
        torch.manual_seed(instance)
        model = CitationModel(ctx.n_nodes, cfg).double()
        captured["segment"].clear()
        captured["fusion"].clear()
        with torch.no_grad():
            out = model(ctx, ds.network.papers())
        for weights, index, n in captured["segment"]:
            sums = torch.zeros((n, *weights.shape[1:]), dtype=weights.dtype).index_add_(0, index, weights)
            has = torch.zeros(n, dtype=torch.bool)
            has[index] = True
            worst["neighbor"] = max(worst["neighbor"], float((sums[has] - 1).abs().max()))
            checked["neighbor"] += int(has.sum())
        for w in out.semantic_weights.values():
            # one weight vector shared by every paper of the publication year
            worst["semantic"] = max(worst["semantic"], abs(float(w.sum()) - 1))
            checked["semantic"] += 1
        for a_g, a_c in captured["fusion"]:
            worst["fusion"] = max(worst["fusion"], float((a_g + a_c - 1).abs().max()))
            checked["fusion"] += len(a_g)
    ok = all(v <= 1e-6 for v in worst.values()) and all(checked.values())
    detail = ", ".join(f"{k} max |sum-1| {worst[k]:.1e} over {checked[k]} groups" for k in worst)
    acceptance(2, ok, f"100 instances: {detail}")
    assert ok


# --
# 3. generator analytics


def exact_increment(params, cfg, t):
    """C(t+1) - C(t) without cancellation, via upper-tail probabilities."""
    z1 = (math.log(t) - params.mu) / params.sigma
    z2 = (math.log(t + 1) - params.mu) / params.sigma
    q1, q2 = special.ndtr(-z1), special.ndtr(-z2)  # accurate even when Phi rounds to 1
    d_phi = q1 - q2 if z1 > 0 else special.ndtr(z2) - special.ndtr(z1)
    return cfg.alpha_scale * math.exp(params.eta * std_normal_cdf(z1)) * math.expm1(params.eta * d_phi)


def test_criterion_3_generator_analytics(acceptance):
    problems = []
    if abs(std_normal_cdf(0.0) - 0.5) > 1e-9:
        problems.append("Phi(0)")
    if abs(std_normal_cdf(1.0) - 0.841344746) > 1e-9:
        problems.append("Phi(1)")
    rng = np.random.default_rng(3)
    steps = saturated = 0
    for _ in range(200):
        mu, sigma = rng.uniform(-1, 2), rng.uniform(0.2, 2)
        alpha = rng.uniform(0.5, 2)
        cfg = GeneratorConfig(alpha_scale=alpha, horizon=int(rng.integers(2, 12)))
        if any(v != 0 for v in predict_series(CurveParams(mu, sigma, 0.0), cfg).values):
            problems.append("eta=0 nonzero")
        eta = rng.uniform(0.05, 4)
        params = CurveParams(mu, sigma, eta)
        vals = predict_series(params, cfg).values
        for t, (a, b) in enumerate(zip(vals, vals[1:]), start=1):
            steps += 1
            if b < a:
                problems.append(f"decreasing at mu={mu:.3f} sigma={sigma:.3f} eta={eta:.3f} t={t}")
            # strict increase is demanded wherever float64 can represent it
            if exact_increment(params, cfg, t) <= 4 * np.spacing(b):
                saturated += 1
            elif not b > a:
                problems.append(f"not increasing at mu={mu:.3f} sigma={sigma:.3f} eta={eta:.3f} t={t}")
        t = max(math.exp(mu + 6 * sigma), 1.0)
        if abs(cumulative_citations(CurveParams(mu, sigma, eta), cfg, t) - alpha * math.expm1(eta)) > 1e-3:
            problems.append("limit")
    ok = not problems
    acceptance(
        3,
        ok,
        f"Phi(0), Phi(1) within 1e-9; 200 random curves: zero series at eta=0, strictly increasing on {steps - saturated}/{steps} "
        f"steps ({saturated} steps whose exact increment is below float64 resolution are checked as nondecreasing), "
        "limits within 1e-3" + ("" if ok else f": {problems[:3]}"),
    )
    assert ok


# --
# 4. loss oracles


def naive_temporal(years):
    total = 0.0
    for a, b in zip(years[:-1], years[1:]):
        da, db = a.as_dict(), b.as_dict()
        shared = [i for i in da if i in db]
        if shared:
            total += sum(sum((x - y) ** 2 for x, y in zip(da[i].tolist(), db[i].tolist())) for i in shared) / len(shared)
    return total / (len(years) - 1)


def naive_prediction(pred, counts):
    return sum(sum((p - math.log(c + 1)) ** 2 for p, c in zip(pr, cr)) / len(pr) for pr, cr in zip(pred, counts)) / len(pred)


def naive_mae(pred, truth):
    errs = [abs(p - t) for pr, tr in zip(pred, truth) for p, t in zip(pr, tr)]
    return sum(errs) / len(errs)


def naive_rmse(pred, truth):
    errs = [(p - t) ** 2 for pr, tr in zip(pred, truth) for p, t in zip(pr, tr)]
    return math.sqrt(sum(errs) / len(errs))


def test_criterion_4_loss_oracles(acceptance):
    rng = np.random.default_rng(4)
    worst, jensen = 0.0, True
    for _ in range(50):
        years = []
        for y in range(int(rng.integers(2, 6))):
            ids = np.sort(rng.choice(40, size=int(rng.integers(1, 30)), replace=False))
            years.append(YearEmbeddings(2000 + y, ids, torch.tensor(rng.normal(size=(len(ids), 8)))))
        worst = max(worst, abs(temporal_aligned_loss(years).item() - naive_temporal(years)))
        n, L = int(rng.integers(1, 40)), 5
        pred = rng.normal(1, 1, size=(n, L))
        counts = rng.integers(0, 200, size=(n, L)).astype(float)
        worst = max(worst, abs(prediction_loss(torch.tensor(pred), counts).item() - naive_prediction(pred, counts)))
        truth = np.log1p(counts)
        worst = max(worst, abs(mae(pred, truth) - naive_mae(pred, truth)), abs(rmse(pred, truth) - naive_rmse(pred, truth)))
        jensen &= rmse(pred, truth) >= mae(pred, truth)
    ok = worst <= 1e-9 and jensen
    acceptance(4, ok, f"50 batches: max deviation from naive references {worst:.1e} (need <= 1e-9); rmse >= mae on all: {jensen}")
    assert ok


# --
# 5. gradient integrity


def test_criterion_5_gradient_integrity(acceptance):
    model, loss = end_to_end(0)
    params = list(model.parameters())
    info = {}
    err = central_difference_check(loss, params, 50, np.random.default_rng(5), details=info)
    ok = err <= 1e-4
    acceptance(
        5,
        ok,
        f"10-paper instance, 50 sampled parameters: max relative error {err:.1e} (need <= 1e-4); "
        f"largest |autograd - central difference| {info['max_gap']:.1e}, below the {info['roundoff']:.0e} "
        f"roundoff bound for {info['within_roundoff']}/50 entries",
    )
    assert ok


# --
# 6-8 share one seed-pinned training run on the 500-paper benchmark


@pytest.fixture(scope="module")
def benchmark():
    ds = generate(BENCHMARK)
    ctx = GraphContext(ds, TRAIN_CFG)
    result = train(ds, TRAIN_CFG, ctx=ctx)
    return ds, ctx, result


def test_criterion_6_learnability(acceptance, benchmark):
    ds, ctx, result = benchmark
    untrained = result.history[0]["val_mae"]
    trained = evaluate(result.best, ds, "val", ctx=ctx).mae_overall
    final = result.history[-1]["val_mae"]
    drop = 1 - trained / untrained
    ok = drop >= 0.30 and result.seconds <= 15 * 60
    acceptance(
        6,
        ok,
        f"val MAE {untrained:.4f} -> {trained:.4f} (best of {len(result.history) - 1} epochs, -{drop:.1%}; "
        f"final epoch {final:.4f}, -{1 - final / untrained:.1%}); need >= 30%; wall-clock {result.seconds:.0f}s (need <= 900s)",
    )
    assert ok


def test_criterion_7_early_years_easier(acceptance, benchmark):
    ds, ctx, first = benchmark
    outcomes = []
    for seed in range(10):
        if seed == TRAIN_CFG.train.seed:
            result = first
        else:
            cfg = TRAIN_CFG.updated(seed=seed)
            ctx.cfg = cfg
            result = train(ds, cfg, ctx=ctx)
        report = evaluate(result.best, ds, "test", ctx=ctx)
        outcomes.append((report.mae_by_year[0], report.mae_by_year[-1]))
    ctx.cfg = TRAIN_CFG
    wins = sum(y1 <= y5 for y1, y5 in outcomes)
    ok = wins >= 7
    pairs = ", ".join(f"{a:.3f}/{b:.3f}" for a, b in outcomes)
    acceptance(7, ok, f"year-1 MAE <= year-5 MAE in {wins}/10 seeded runs (need >= 7); test year1/year5: {pairs}")
    assert ok


def test_criterion_8_no_leakage(acceptance, benchmark):
    ds, _, result = benchmark
    model, cfg = model_from_checkpoint(load_checkpoint(result.best), ds)
    violations = []
    years = [y for y in ds.network.years if ds.papers_published(y)]
    for year in years:
        ctx = GraphContext(ds, cfg)
        with torch.no_grad():
            model(ctx, ds.papers_published(year))
        for purpose, y in ctx.accessed:
            if y > year or (purpose == "encode" and y >= year):
                violations.append((year, purpose, y))

    nodes, edges, cits = emit(ds)
    changed = 0
    probe_years = [years[len(years) // 2], years[-2]]
    for year in probe_years:
        ids = ds.papers_published(year)
        kept = [e for e in edges if json.loads(e)["year"] <= year]
        truncated = ingest(nodes, kept, cits)
        with torch.no_grad():
            a = model(GraphContext(ds, cfg), ids).preds
            b = model(GraphContext(truncated, cfg), ids).preds
        changed += int(not torch.equal(a, b))
    ok = not violations and changed == 0
    acceptance(
        8,
        ok,
        f"{len(years)} publication years: {len(violations)} snapshot reads after the publication year; "
        f"removing all later edges changed predictions in {changed}/{len(probe_years)} probe years",
    )
    assert ok
