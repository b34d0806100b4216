import json

import numpy as np
import pytest
import torch

from citeforecast.graph import ingest

torch.set_default_dtype(torch.float64)


def records(rows):
    return [json.dumps(r) for r in rows]


@pytest.fixture
def tiny_dataset():
    """Two papers sharing an author, 2003-2004."""
    nodes = [
        {"id": 1, "kind": "paper", "year": 2003},
        {"id": 2, "kind": "paper", "year": 2004},
        {"id": 10, "kind": "author"},
        {"id": 20, "kind": "venue"},
    ]
    edges = [
        {"src": 10, "dst": 1, "relation": "writes", "year": 2003},
        {"src": 10, "dst": 2, "relation": "writes", "year": 2004},
        {"src": 1, "dst": 20, "relation": "publishes", "year": 2003},
        {"src": 2, "dst": 1, "relation": "cites", "year": 2004},
    ]
    cits = [{"paper": 2, "pub_year": 2004, "counts": [0, 1, 1]}]
    return ingest(records(nodes), records(edges), records(cits))


def random_snapshot_records(rng, n_papers=30, n_authors=12, n_venues=4, n_keywords=6, year=2000):
    nodes, edges = [], []
    pid = list(range(n_papers))
    aid = list(range(100, 100 + n_authors))
    vid = list(range(200, 200 + n_venues))
    kid = list(range(300, 300 + n_keywords))
    for i in pid:
        nodes.append({"id": i, "kind": "paper", "year": year})
    for i in aid:
        nodes.append({"id": i, "kind": "author", "year": year})
    for i in vid:
        nodes.append({"id": i, "kind": "venue", "year": year})
    for i in kid:
        nodes.append({"id": i, "kind": "keyword", "year": year})
    for p in pid:
        for a in rng.choice(aid, size=rng.integers(0, 3), replace=False):
            edges.append({"src": int(a), "dst": p, "relation": "writes", "year": year})
        if rng.random() < 0.8:
            edges.append({"src": p, "dst": int(rng.choice(vid)), "relation": "publishes", "year": year})
        for k in rng.choice(kid, size=rng.integers(0, 3), replace=False):
            edges.append({"src": p, "dst": int(k), "relation": "contains", "year": year})
        for q in rng.choice(pid, size=rng.integers(0, 2), replace=False):
            if q != p:
                edges.append({"src": p, "dst": int(q), "relation": "cites", "year": year})
    return nodes, edges


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_difference_check(loss_fn, params, n_samples, rng, step=1e-6, floor=1e-7, details=None):
    """Largest relative error between autograd and central differences.

    ``loss_fn()`` recomputes a scalar from ``params`` (float64 tensors that
    require grad); ``n_samples`` scalar entries are drawn across them.
    Differences below the central-difference roundoff bound
    (~ eps * |loss| / step) are not counted as errors. Pass a dict as
    ``details`` to receive the uncorrected worst error and the number of
    entries within that bound.
    """
    import torch

    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    sizes = np.array([p.numel() for p in params])
    picks = rng.choice(sizes.sum(), size=min(n_samples, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    noise = 10 * np.finfo(np.float64).eps * max(abs(loss.item()), 1.0) / step
    worst = raw = max_gap = 0.0
    within = 0
    with torch.no_grad():
        for flat in picks:
            which = int(np.searchsorted(offsets, flat, side="right") - 1)
            p, pos = params[which], int(flat - offsets[which])
            view = p.view(-1)
            orig = view[pos].item()
            view[pos] = orig + step
            up = loss_fn().item()
            view[pos] = orig - step
            down = loss_fn().item()
            view[pos] = orig
            numeric = (up - down) / (2 * step)
            g = grads[which]
            analytic = 0.0 if g is None else g.reshape(-1)[pos].item()
            gap = abs(analytic - numeric)
            err = gap / max(abs(analytic), abs(numeric), floor)
            raw, max_gap = max(raw, err), max(max_gap, gap)
            if gap <= noise:
                within += 1
                continue
            worst = max(worst, err)
    if details is not None:
        details.update(raw_worst=raw, max_gap=max_gap, within_roundoff=within, samples=len(picks), roundoff=noise)
    return worst


# --
# acceptance reporting: one line per criterion, printed after the run

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(criterion: int, passed: bool, detail: str):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}")
