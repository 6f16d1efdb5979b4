"""Acceptance gate: ten numbered criteria, one test (and one pass/fail line
under ``pytest -v``) per criterion.

Each test prints the measured quantities and its elapsed time, then asserts
both the stated tolerance and a wall-clock bound.  Criteria 1, 2, 3 and 10
check the numerical kernels against independent brute-force oracles written
in plain Python; 4 checks frozen statistical fixtures; 5 and 7 check the
statistical behaviour of partitioning; 6 is the end-to-end learning result;
8 checks bookkeeping honesty; 9 checks bit-level reproducibility through the
command line, including threaded execution.
"""

import math
import time

import numpy as np
import pytest

from falsim import cli
from falsim.data import (
    FeatureDataset,
    PartitionSpec,
    dirichlet_partition,
    partition_class_counts,
)
from falsim.evaluation import (
    DEFAULT_T_THRESHOLD,
    RunResult,
    t_score,
    typicality_shift_report,
    win_rate,
)
from falsim.federation import (
    ClientState,
    FalSettings,
    annotate,
    fedavg,
    run_experiment,
)
from falsim.geometry import typicality
from falsim.model import ModelParams, init_params, loss, loss_gradients
from falsim.seeding import rng_from_seed
from falsim.strategies import QueryContext, coreset_query


def _report(criterion, elapsed, detail):
    print(f"criterion {criterion}: {detail} elapsed={elapsed:.2f}s")


# --- criterion 1: typicality kernel vs a plain-Python oracle ---------------

def _brute_typicality(rows, k):
    out = []
    for i, a in enumerate(rows):
        dists = sorted(math.dist(a, b) for j, b in enumerate(rows) if j != i)
        mean = sum(dists[:k]) / k
        out.append(1.0 / max(mean, 1e-12))
    return out


def test_criterion_01_typicality_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(21, 201))
        d = int(rng.integers(1, 9))
        x = rng.standard_normal((n, d))
        rows = [tuple(row) for row in x]
        for k in (1, 5, 20):
            got = typicality(x, k)
            want = np.array(_brute_typicality(rows, k))
            worst = max(worst, float(np.max(np.abs(got - want)
                                            / np.maximum(np.abs(want), 1e-12))))
    elapsed = time.perf_counter() - start
    _report(1, elapsed, f"max relative error {worst:.3e} over 50 datasets")
    assert worst <= 1e-9
    assert elapsed < 5.0


# --- criterion 2: analytic gradients vs central differences ----------------

def _grad_rel_error(params, x, y, wd):
    analytic = loss_gradients(params, x, y, wd)
    step = 1e-5
    worst = 0.0
    for kind in (0, 1):   # weights then biases
        for layer, arr in enumerate(params.weights if kind == 0 else params.biases):
            numeric = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                hi = loss(params, x, y, wd)
                arr[idx] = orig - step
                lo = loss(params, x, y, wd)
                arr[idx] = orig
                numeric[idx] = (hi - lo) / (2 * step)
            a = analytic[kind][layer]
            scale = max(float(np.max(np.abs(numeric))), 1e-12)
            worst = max(worst, float(np.max(np.abs(a - numeric))) / scale)
    return worst


def test_criterion_02_gradients_match_finite_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(10):
        for arch in ("linear", "mlp"):
            params = init_params(arch, 3, 3, hidden_units=4, seed=trial)
            x = rng.standard_normal((5, 3))
            y = rng.integers(0, 3, size=5)
            worst = max(worst, _grad_rel_error(params, x, y, 1e-3))
    elapsed = time.perf_counter() - start
    _report(2, elapsed, f"max relative error {worst:.3e} over 20 instances")
    assert worst <= 1e-4
    assert elapsed < 10.0


# --- criterion 3: weighted aggregation oracle and exact symmetries ---------

def _rand_params(seed):
    return init_params("mlp", 4, 3, hidden_units=5, seed=seed)


def test_criterion_03_aggregation_matches_weighted_mean():
    start = time.perf_counter()
    params = [_rand_params(s) for s in range(3)]
    weights = [1.0, 2.5, 0.25]
    merged = fedavg(list(zip(params, weights)))
    worst = 0.0
    for kind in (0, 1):
        arrays = [p.weights if kind == 0 else p.biases for p in params]
        got = merged.weights if kind == 0 else merged.biases
        for layer in range(len(got)):
            want = np.average(np.stack([a[layer] for a in arrays]), axis=0,
                              weights=weights)
            worst = max(worst, float(np.max(np.abs(got[layer] - want))))

    # aggregating identical models is an exact fixed point
    base = _rand_params(9)
    same = fedavg([(base, 1.0), (base, 3.0), (base, 0.5)])
    fixed = all(np.array_equal(a, b) for a, b in
                zip(same.weights + same.biases, base.weights + base.biases))

    # equal-weight opposites cancel exactly
    flipped = ModelParams(arch=base.arch, input_dim=base.input_dim,
                          num_classes=base.num_classes,
                          weights=[-w for w in base.weights],
                          biases=[-b for b in base.biases])
    zero = fedavg([(base, 2.0), (flipped, 2.0)])
    cancelled = all(np.all(a == 0.0) for a in zero.weights + zero.biases)

    elapsed = time.perf_counter() - start
    _report(3, elapsed, f"max oracle gap {worst:.3e}, fixed_point={fixed}, "
                        f"cancellation={cancelled}")
    assert worst <= 1e-12
    assert fixed and cancelled


# --- criterion 4: paired t-score fixtures and win bookkeeping ---------------

def _runs(strategy, accs_by_seed):
    return [RunResult(strategy=strategy, seed=s, metric="accuracy",
                      values=np.asarray(accs, dtype=np.float64))
            for s, accs in sorted(accs_by_seed.items())]


def test_criterion_04_t_score_fixtures():
    start = time.perf_counter()
    t_hand = t_score(np.array([0.51, 0.62, 0.73, 0.62]),
                     np.array([0.50, 0.60, 0.70, 0.60]))
    zero = t_score(np.array([0.5, 0.6]), np.array([0.5, 0.6]))
    pos_inf = t_score(np.array([0.6, 0.7]), np.array([0.5, 0.6]))
    neg_inf = t_score(np.array([0.5, 0.6]), np.array([0.6, 0.7]))

    base = {s: [0.5, 0.6] for s in range(4)}
    lift = {s: [0.5, 0.6 + d] for s, d in zip(range(4), (0.01, 0.02, 0.03, 0.02))}
    report = win_rate(_runs("a", lift), _runs("b", base))
    strict = win_rate(_runs("a", lift), _runs("b", base), threshold=5.0)
    self_cmp = win_rate(_runs("a", base), _runs("b", base))

    elapsed = time.perf_counter() - start
    _report(4, elapsed, f"t_hand={t_hand!r} win={report.win_rate} "
                        f"strict_win={strict.win_rate} self={self_cmp.win_rate}")
    assert abs(t_hand - 4.898979485566356) <= 1e-12
    assert zero == 0.0 and pos_inf == math.inf and neg_inf == -math.inf
    assert DEFAULT_T_THRESHOLD == 2.776
    assert (report.win_rate, report.defeat_rate) == (0.5, 0.0)
    assert (strict.win_rate, strict.defeat_rate) == (0.0, 0.0)
    assert (self_cmp.win_rate, self_cmp.defeat_rate) == (0.0, 0.0)
    assert elapsed < 5.0


# --- criterion 5: partitioning always lowers within-client typicality -------

def test_criterion_05_within_client_typicality_drops():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    features = rng.random((5000, 8))
    dataset = FeatureDataset(ids=np.arange(5000),
                             features=features,
                             labels=np.zeros(5000, dtype=np.int64),
                             num_classes=1).validate()
    central = float(typicality(features, 20).mean())
    worst_client = -math.inf
    for seed in range(5):
        parts = dirichlet_partition(dataset, PartitionSpec("uniform", 10, seed))
        report = typicality_shift_report(dataset, parts, neighbors=20)
        assert abs(report.central_mean - central) <= 1e-12
        for part in parts:
            local = float(typicality(features[part.indices], 20).mean())
            worst_client = max(worst_client, local)
            assert local < central
    elapsed = time.perf_counter() - start
    _report(5, elapsed, f"centralized mean {central:.4f}, "
                        f"highest client mean {worst_client:.4f}")
    assert elapsed < 30.0


# --- criterion 6: end-to-end learning quality on the frozen benchmark ------

BENCH_CFG = """
[dataset]
synth_classes = 10
synth_dim = 16
synth_per_class = 100
synth_spread = 0.3
synth_seed = 7

[partition]
alpha = uniform
clients = 10
seed = 0

[model]
arch = linear

[geometry]
typicality_k = 20

[run]
strategy = random
budget = tiny
rounds = 5
seeds = 0,1,2,3
"""


def test_criterion_06_typicality_strategy_beats_entropy():
    from falsim.config import parse_config
    from falsim.experiments import run_from_config

    start = time.perf_counter()
    cfg = parse_config(BENCH_CFG)
    finals = {}
    for strategy in ("typiclust", "entropy", "random"):
        rows, _ = run_from_config(cfg, strategy=strategy)
        finals[strategy] = float(np.mean(
            [r.accuracy for r in rows if r.round == 5]))
    elapsed = time.perf_counter() - start
    _report(6, elapsed,
            f"final accuracy typiclust={finals['typiclust']:.4f} "
            f"entropy={finals['entropy']:.4f} random={finals['random']:.4f}")
    assert finals["typiclust"] >= finals["entropy"]
    assert finals["typiclust"] >= finals["random"] - 0.01
    assert elapsed < 300.0


# --- criterion 7: concentration parameter controls label skew ---------------

def test_criterion_07_low_alpha_concentrates_labels():
    start = time.perf_counter()
    labels = np.repeat(np.arange(10), 500)
    dataset = FeatureDataset(ids=np.arange(5000),
                             features=np.zeros((5000, 2)),
                             labels=labels, num_classes=10).validate()

    def mean_max_share(alpha):
        shares = []
        for seed in range(20):
            parts = dirichlet_partition(dataset, PartitionSpec(alpha, 10, seed))
            counts = partition_class_counts(dataset, parts).astype(np.float64)
            shares.extend(counts.max(axis=1) / counts.sum(axis=1))
        return float(np.mean(shares))

    skewed = mean_max_share(0.1)
    mild = mean_max_share(1.0)
    elapsed = time.perf_counter() - start
    _report(7, elapsed, f"mean max class share alpha=0.1: {skewed:.3f}, "
                        f"alpha=1.0: {mild:.3f}")
    assert skewed > mild + 0.05
    assert elapsed < 10.0


# --- criterion 8: labeled-set bookkeeping is enforced every round ------------

def test_criterion_08_budget_bookkeeping_is_enforced():
    from falsim.data import synth_dataset

    start = time.perf_counter()
    train, test = synth_dataset(3, 4, 40, 0.5, seed=3)
    parts = dirichlet_partition(train, PartitionSpec("uniform", 4, 0))
    settings = FalSettings(strategy="margin", budget=2, rounds=5,
                           arch="linear", master_seed=0)
    records = run_experiment(train, test, parts, settings)
    counts_ok = all(rec.labeled_counts == [2 * rec.round_index] * 4
                    for rec in records)

    # a client that starts with labeled rows breaks the r * b invariant
    from falsim.federation import run_fal_round
    clients = [ClientState.fresh(p) for p in parts]
    clients[0] = annotate(clients[0], clients[0].unlabeled[:1])
    params = init_params("linear", train.dim, train.num_classes, seed=0)
    with pytest.raises(RuntimeError, match="expected"):
        run_fal_round(train, test, clients, params, settings, round_index=1)

    # corrupted sets are caught by the bookkeeping check itself
    broken = ClientState.fresh(parts[0])
    broken.labeled = broken.unlabeled[:1].copy()
    with pytest.raises(RuntimeError, match="overlap"):
        broken.check_bookkeeping()

    elapsed = time.perf_counter() - start
    _report(8, elapsed, f"counts_ok={counts_ok} over {len(records)} rounds")
    assert counts_ok
    assert elapsed < 60.0


# --- criterion 9: command-line runs are bit-reproducible, even threaded -----

THREADED_TAIL = "seed_workers = 4\nclient_workers = 2\n"

REPRO_CFG = """
[dataset]
synth_classes = 4
synth_dim = 4
synth_per_class = 30
synth_spread = 0.4
synth_seed = 2

[partition]
clients = 4

[train]
local_epochs = 2

[run]
strategy = badge
budget = 2
rounds = 3
seeds = 0,1
"""


def test_criterion_09_cli_runs_are_byte_identical(tmp_path, monkeypatch, capsys):
    start = time.perf_counter()
    monkeypatch.chdir(tmp_path)
    (tmp_path / "serial.ini").write_text(REPRO_CFG)
    (tmp_path / "threaded.ini").write_text(REPRO_CFG + THREADED_TAIL)
    assert cli.main(["run", "--config", "serial.ini", "--out", "a.csv"]) == 0
    assert cli.main(["run", "--config", "serial.ini", "--out", "b.csv"]) == 0
    assert cli.main(["run", "--config", "threaded.ini", "--out", "c.csv"]) == 0
    capsys.readouterr()
    a = (tmp_path / "a.csv").read_bytes()
    rerun_same = a == (tmp_path / "b.csv").read_bytes()
    threaded_same = a == (tmp_path / "c.csv").read_bytes()
    elapsed = time.perf_counter() - start
    _report(9, elapsed, f"rerun_identical={rerun_same} "
                        f"threaded_identical={threaded_same}")
    assert rerun_same and threaded_same
    assert elapsed < 120.0


# --- criterion 10: greedy coverage selection vs a brute-force oracle --------

def _brute_coreset(features, labeled, unlabeled, budget):
    n = len(features)
    covered = [False] * n
    for i in labeled:
        covered[i] = True
    picks = []

    def sq(i, j):
        diff = features[i] - features[j]
        return float(np.dot(diff, diff))

    if not any(covered):
        # first pick: lowest row of the first pair realizing the max distance
        best_flat, best_d = 0, -math.inf
        m = len(unlabeled)
        for a in range(m):
            for b in range(m):
                d = sq(unlabeled[a], unlabeled[b])
                if d > best_d:
                    best_flat, best_d = (a, b), d
        first = int(unlabeled[min(best_flat)])
        picks.append(first)
        covered[first] = True
        budget -= 1
    for _ in range(budget):
        best, best_d = None, -math.inf
        for i in range(n):
            if covered[i]:
                continue
            d = min(sq(i, j) for j in range(n) if covered[j])
            if d > best_d:
                best, best_d = i, d
        picks.append(best)
        covered[best] = True
    return picks


def test_criterion_10_coverage_selection_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(23)
    checked = 0
    for trial in range(20):
        n = int(rng.integers(8, 51))
        # integer coordinates keep both distance computations exact
        features = rng.integers(0, 8, size=(n, 3)).astype(np.float64)
        n_labeled = 0 if trial % 2 == 0 else int(rng.integers(1, n // 2))
        order = rng.permutation(n)
        labeled = np.sort(order[:n_labeled])
        unlabeled = np.sort(order[n_labeled:])
        budget = int(rng.integers(1, min(5, len(unlabeled)) + 1))
        ctx = QueryContext(
            features=features, labeled=labeled, unlabeled=unlabeled,
            budget=budget,
            global_params=init_params("linear", 3, 2, seed=trial),
            rng=rng_from_seed(trial))
        got = coreset_query(ctx).tolist()
        want = _brute_coreset(features, labeled.tolist(), unlabeled.tolist(),
                              budget)
        assert got == want, f"trial {trial}: {got} != {want}"
        checked += 1
    elapsed = time.perf_counter() - start
    _report(10, elapsed, f"{checked} instances matched the oracle exactly")
    assert checked == 20
    assert elapsed < 30.0
