"""Release gate: every acceptance criterion, each at its stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the run.
Set ``ASTGIN_DUNDEE_DIR`` to a directory holding ``sessions.csv``,
``weather.csv``, ``poi.csv`` and ``connectors.csv`` to also check the real
Dundee counts.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from astgin import graph as G
from astgin import ingest as I
from astgin import metrics as MET
from astgin import nncore as nn
from astgin import trainer as T
from astgin.a2unit import AugmentedSample, augment_dataset
from astgin.gcn import GcnConfig, gcn_forward, init_gcn
from astgin.informer import InformerConfig, decoder_forward, full_attention, init_informer, prob_sparse_attention
from astgin.synth import SynthConfig, generate

import benchmark

FIX = Path(__file__).parent / "fixtures"


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# ---------------------------------------------------------------- 1 ingest


@criterion(1, "ingest fidelity")
def test_ingest_fixture(record_property):
    t0 = time.perf_counter()
    data, summary = I.ingest_files(FIX / "sessions_200.csv", FIX / "weather.csv", FIX / "poi.csv",
                                   FIX / "connectors.csv", start=I.parse_time("2018-03-05 00:00"), periods=192)
    seconds = time.perf_counter() - t0
    expected = json.loads((FIX / "expected_200.json").read_text())
    record_property("fixture_seconds", round(seconds, 3))
    assert summary["n_sessions"] == expected["n_sessions"]
    assert summary["sessions_by_type"] == expected["sessions_by_type"]
    assert summary["clamps"] == expected["clamps"]
    assert [r["line"] for r in summary["skipped_rows"]] == expected["skipped_lines"]
    assert data.series.station_ids == expected["station_ids"]
    assert np.max(np.abs(data.series.values - np.array(expected["availability"]))) <= 1e-15
    assert seconds < 10


@criterion(1, "ingest fidelity")
@pytest.mark.skipif(not os.environ.get("ASTGIN_DUNDEE_DIR"), reason="real Dundee data not available")
def test_ingest_dundee(record_property):
    d = Path(os.environ["ASTGIN_DUNDEE_DIR"])
    t0 = time.perf_counter()
    _, summary = I.ingest_files(d / "sessions.csv", d / "weather.csv", d / "poi.csv", d / "connectors.csv")
    seconds = time.perf_counter() - t0
    record_property("dundee_seconds", round(seconds, 2))
    assert summary["n_stations"] == 57
    assert summary["n_sessions"] == 16773
    assert summary["sessions_by_type"] == {"slow": 5894, "fast": 1416, "rapid": 9463}
    assert seconds < 10


# ---------------------------------------------------------------- 2 formula oracles


def _kernel_oracle(d, sigma, kappa):
    return [[math.exp(-(x * x) / (sigma * sigma)) if x <= kappa else 0.0 for x in row] for row in d]


def _normalize_oracle(A):
    n = len(A)
    At = [[A[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    deg = [math.fsum(r) for r in At]
    return [[At[i][j] / math.sqrt(deg[i]) / math.sqrt(deg[j]) for j in range(n)] for i in range(n)]


def _metric_oracles(y, yh):
    n = len(y)
    res = [a - b for a, b in zip(y, yh)]
    sq = math.fsum(r * r for r in res)
    ybar = math.fsum(y) / n
    tot = math.fsum((a - ybar) ** 2 for a in y)
    rbar = math.fsum(res) / n
    return {"rmse": math.sqrt(sq / n), "r2": 1 - sq / tot,
            "var": 1 - (math.fsum((r - rbar) ** 2 for r in res) / n) / (tot / n),
            "mae": math.fsum(abs(r) for r in res) / n,
            "accuracy": 1 - math.sqrt(sq) / math.sqrt(math.fsum(a * a for a in y))}


@criterion(2, "formula oracles")
def test_formula_oracles(record_property):
    worst = {"adjacency": 0.0, "availability": 0.0, "normalization": 0.0, "metrics": 0.0}
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 8))
        pts = np.column_stack([rng.uniform(56.3, 56.6, n), rng.uniform(-3.2, -2.8, n)])
        d = G.pairwise_distance(pts)
        sigma, kappa = float(rng.uniform(500, 20000)), float(rng.uniform(0, d.max() * 1.1))
        A = G.build_adjacency(d, sigma, kappa)
        worst["adjacency"] = max(worst["adjacency"], np.max(np.abs(A - np.array(_kernel_oracle(d.tolist(), sigma, kappa)))))
        A_hat = G.normalize_adjacency(A)
        worst["normalization"] = max(worst["normalization"], np.max(np.abs(A_hat - np.array(_normalize_oracle(A.tolist())))))

        m = int(rng.integers(1, 4))
        t0 = I.parse_time("2018-03-05 00:00")
        grid = I.TimeGrid(t0, 6)
        sessions = []
        busy = [0] * 180
        for c in range(int(rng.integers(0, 8))):
            a, length = int(rng.integers(-40, 180)), int(rng.integers(0, 90))
            sessions.append(I.ChargingSession("S", str(c), t0 + np.timedelta64(a, "m").item(),
                                              t0 + np.timedelta64(a + length, "m").item(), 1.0, 56.4, -2.9, "fast"))
            for minute in range(max(a, 0), min(a + length, 180)):
                busy[minute] += 1
        expected = [max(0.0, 1 - sum(busy[30 * k:30 * k + 30]) / (30 * m)) for k in range(6)]
        got = I.aggregate_availability(sessions, grid, {"S": m}).values[0]
        worst["availability"] = max(worst["availability"], np.max(np.abs(got - np.array(expected))))

        y = rng.uniform(0, 1, int(rng.integers(2, 40)))
        yh = y + rng.normal(0, 0.2, y.size)
        rep = MET.compute_metrics(y, yh).to_dict()
        oracle = _metric_oracles(y.tolist(), yh.tolist())
        worst["metrics"] = max(worst["metrics"], max(abs(rep[k] - v) for k, v in oracle.items()))
    for k, v in worst.items():
        record_property(k, f"{v:.1e}")
    assert max(worst.values()) <= 1e-12


# ---------------------------------------------------------------- 3 gradients


@criterion(3, "gradient suite")
def test_gradient_suite(record_property):
    t0 = time.perf_counter()
    seeds = range(20)
    results = nn.run_registry(seeds)
    results["micro_model"] = max(nn.grad_check(*T.micro_gradcheck_case(s), max_coords=4, seed=s) for s in seeds)
    seconds = time.perf_counter() - t0
    worst = max(results, key=results.get)
    record_property("cases", len(results))
    record_property("worst", f"{worst}={results[worst]:.1e}")
    record_property("seconds", round(seconds, 1))
    assert all(err < 1e-4 for err in results.values()), results
    assert seconds < 300


# ---------------------------------------------------------------- 4 attention


@criterion(4, "attention reduction and decoder causality")
def test_attention_reduction(record_property):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        lq = int(rng.integers(1, 26))
        Q, K, V = (rng.standard_normal((2, 2, lq, 4)) for _ in range(3))
        factor = max(5.0, lq / max(math.log(lq), 1e-9) + 1)
        sparse = prob_sparse_attention(Q, K, V, factor=factor).data
        worst = max(worst, np.max(np.abs(sparse - full_attention(Q, K, V).data)))
    record_property("max_diff", f"{worst:.1e}")
    assert worst <= 1e-10


@criterion(4, "attention reduction and decoder causality")
def test_decoder_causality(record_property):
    rng = np.random.default_rng(0)
    cfg = InformerConfig(d_model=8, n_heads=2, d_ff=16, horizon=3)
    store = nn.ParameterStore()
    init_informer(store, cfg, rng)
    enc, dec = rng.standard_normal((2, 7, 8)), rng.standard_normal((2, 6, 8))
    base = decoder_forward(dec, enc, cfg, store, label_len=3).data
    worst = 0.0
    for t in range(1, 6):
        moved = dec.copy()
        moved[:, t:] += rng.standard_normal(moved[:, t:].shape)
        out = decoder_forward(moved, enc, cfg, store, label_len=3).data
        worst = max(worst, np.max(np.abs(out[:, :t] - base[:, :t])))
    record_property("max_leak", f"{worst:.1e}")
    assert worst <= 1e-10


# ---------------------------------------------------------------- 5 permutation


@criterion(5, "permutation equivariance")
def test_permutation_equivariance(record_property):
    worst_gcn = worst_model = 0.0
    L, M, p, w = 4, 2, 3, 1
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 7))
        A = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
        A_hat = G.normalize_adjacency(np.triu(A, 1) + np.triu(A, 1).T)
        P = np.eye(n)[rng.permutation(n)]
        perm = np.argmax(P, axis=1)

        cfg = GcnConfig(5, [8, 8, 6])
        store = nn.ParameterStore()
        init_gcn(store, cfg, rng)
        E = rng.random((3, n, 5))
        out = gcn_forward(A_hat, E, cfg, store).data
        worst_gcn = max(worst_gcn, np.max(np.abs(gcn_forward(P @ A_hat @ P.T, P @ E, cfg, store).data - P @ out)))

        model = T.AstGin(T.MICRO_MODEL, L, M, p, w, seed=seed)
        s = AugmentedSample(rng.random((L + 1, n, 1 + p + w * (L + 1))), rng.random((M, n)), 0, p, w)
        sp = AugmentedSample(s.E[:, perm], s.Y[:, perm], 0, p, w)
        y = T.astgin_forward(s, A_hat, model)
        yp = T.astgin_forward(sp, A_hat[np.ix_(perm, perm)], model)
        worst_model = max(worst_model, np.max(np.abs(yp - y[:, perm])))
    record_property("gcn", f"{worst_gcn:.1e}")
    record_property("astgin", f"{worst_model:.1e}")
    assert worst_gcn <= 1e-10 and worst_model <= 1e-10


# ---------------------------------------------------------------- 6 overfit


@criterion(6, "overfit tiny noiseless set")
def test_overfit(record_property):
    t0 = time.perf_counter()
    ds = generate(SynthConfig(n_stations=2, days=3, noise_std=0.0, seed=0))
    data = augment_dataset(I.make_windows(ds.series, ds.static, ds.dynamic, 12, 1))[:20]
    cfg = T.TrainConfig(L=12, M=1, epochs=200, batch_size=4, lr0=3e-4, lr_decay_every=1000,
                        lam=0.0, patience=None)
    model, report = T.train(data, data, ds.graph.A_hat, T.ModelConfig(), cfg)
    seconds = time.perf_counter() - t0
    Y = np.stack([s.Y for s in data])
    mse = float(np.mean((T.predict(model, data, ds.graph.A_hat) - Y) ** 2))
    first = next((e["epoch"] for e in report.epochs if e["val_loss"] < 1e-3), None)
    record_property("train_mse", f"{mse:.2e}")
    record_property("first_epoch_below", first)
    record_property("seconds", round(seconds, 1))
    assert mse < 1e-3
    assert seconds < 300


# ---------------------------------------------------------------- 7, 8 synthetic benchmark


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    results = benchmark.run_all()
    return results, time.perf_counter() - t0


@criterion(7, "attribute skill on synthetic data")
def test_attribute_skill(bench, record_property):
    results, seconds = bench
    wins_ablation = sum(r.full["rmse"] < r.no_attributes["rmse"] for r in results)
    wins_persistence = sum(r.full["accuracy"] > r.persistence["accuracy"] for r in results)
    for r in results:
        print(f"seed {r.seed}: full rmse {r.full['rmse']:.5f} acc {r.full['accuracy']:.5f} | "
              f"no_attributes rmse {r.no_attributes['rmse']:.5f} | persistence acc {r.persistence['accuracy']:.5f}")
    record_property("beats_no_attributes", f"{wins_ablation}/5")
    record_property("beats_persistence", f"{wins_persistence}/5")
    record_property("seconds", round(seconds))
    assert wins_ablation >= 4
    assert wins_persistence == 5
    assert seconds < 1800


@criterion(8, "perturbation robustness")
def test_perturbation_robustness(bench, record_property):
    results, _ = bench
    means = [float(np.mean([r.perturbed[s] for r in results])) for s in benchmark.SIGMAS]
    record_property("mean_accuracy", " ".join(f"{s:g}:{m:.4f}" for s, m in zip(benchmark.SIGMAS, means)))
    assert all(b <= a for a, b in zip(means, means[1:]))
    assert means[0] - means[1] < 0.05


# ---------------------------------------------------------------- 9 real data (logged, non-gating)

REFERENCE_ACCURACY = 0.8388


@criterion(9, "real-data sanity (non-gating)")
@pytest.mark.skipif(not os.environ.get("ASTGIN_DUNDEE_DIR"), reason="real Dundee data not available")
def test_real_data_sanity(record_property):
    d = Path(os.environ["ASTGIN_DUNDEE_DIR"])
    data, _ = I.ingest_files(d / "sessions.csv", d / "weather.csv", d / "poi.csv", d / "connectors.csv")
    graph = G.build_station_graph(data.series.station_ids, [(s.lat, s.lon) for s in data.stations])
    cfg = T.TrainConfig()
    samples = augment_dataset(I.make_windows(data.series, data.static, data.dynamic, cfg.L, cfg.M))
    tr, va, te = I.split_dataset(samples, seed=cfg.seed, method=cfg.split)
    _, report = T.train(tr, va, graph.A_hat, T.ModelConfig(), cfg, test_set=te)
    acc = report.test_metrics.accuracy
    record_property("test_accuracy", f"{acc:.4f}")
    record_property("reference", REFERENCE_ACCURACY)
    # Reported only: the outcome never fails the run.
    record_property("verdict", "PASS" if abs(acc - REFERENCE_ACCURACY) <= 0.10 else "FAIL (logged)")
