"""Config parsing/validation and the CSV result formats."""

import math

import numpy as np
import pytest

from falsim.config import (
    ConfigError,
    load_config,
    parse_config,
    parse_seed_list,
    resolve_budget,
)
from falsim.data import DataFormatError
from falsim.evaluation import ComparisonReport, RunResult, win_rate
from falsim.results import (
    ResultRow,
    comparison_from_csv,
    comparison_to_csv,
    curves_csv,
    load_results,
    parse_shift_histogram_csv,
    parse_summary_csv,
    plot_histogram_csv,
    results_from_csv,
    results_to_csv,
    rows_to_run_results,
    save_results,
    shift_histogram_to_csv,
    shift_summary_to_csv,
    winrate_table_csv,
)

MINIMAL = """
[dataset]
synth_classes = 3
synth_dim = 4
synth_per_class = 20

[run]
strategy = random
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.source.is_synthetic
    assert cfg.source.synth_spread == 0.5 and cfg.source.synth_seed == 0
    assert cfg.partition.alpha == "uniform"
    assert cfg.partition.num_clients == 10 and cfg.partition.seed == 0
    assert cfg.partition_path is None and cfg.feature_paths == {}
    assert cfg.arch == "linear" and cfg.hidden_units == 32
    assert cfg.train.learning_rate == 0.01 and cfg.train.local_epochs == 10
    assert cfg.train.batch_size is None
    assert cfg.geometry.typicality_k == 20
    assert cfg.strategy == "random"
    assert cfg.selector_choice == "global" and cfg.logo_micro_model == "global"
    assert cfg.budget == "tiny" and cfg.rounds == 10
    assert cfg.seeds == [0, 1, 2, 3]
    assert cfg.aggregation_weight == "labeled"
    assert cfg.seed_workers == 1 and cfg.client_workers == 1
    assert cfg.output_dir == "out"


def test_full_config_round_trip(tmp_path):
    text = """
[dataset]
train = data/train.csv
test = data/test.csv

[features]
client_0 = feats0.csv
client_3 = feats3.csv

[partition]
alpha = 0.5
clients = 4
seed = 9
file = parts.csv

[model]
arch = mlp
hidden_units = 16

[train]
learning_rate = 0.05
momentum = 0.8
weight_decay = 0.001
local_epochs = 3
batch_size = 32

[geometry]
typicality_k = 10
kmeans_max_iters = 50
kmeans_tol = 1e-8

[run]
strategy = typiclust
selector = local_only
logo_micro = local_only
budget = small
rounds = 4
seeds = 5,6
aggregation_weight = partition
seed_workers = 2
client_workers = 3

[output]
dir = results
"""
    path = tmp_path / "exp.ini"
    path.write_text(text, encoding="utf-8")
    cfg = load_config(path)
    assert cfg.source.train_path == "data/train.csv"
    assert cfg.feature_paths == {0: "feats0.csv", 3: "feats3.csv"}
    assert cfg.partition.alpha == 0.5 and cfg.partition_path == "parts.csv"
    assert cfg.arch == "mlp" and cfg.hidden_units == 16
    assert cfg.train.batch_size == 32 and cfg.train.momentum == 0.8
    assert cfg.geometry.kmeans_tol == 1e-8
    assert cfg.strategy == "typiclust"
    assert cfg.selector_choice == "local_only"
    assert cfg.budget == "small" and cfg.seeds == [5, 6]
    assert cfg.aggregation_weight == "partition"
    assert cfg.seed_workers == 2 and cfg.client_workers == 3
    assert cfg.output_dir == "results"


def test_config_rejects_unknown_sections_and_keys():
    with pytest.raises(ConfigError, match=r"unknown section"):
        parse_config(MINIMAL + "\n[extras]\nfoo = 1\n")
    with pytest.raises(ConfigError, match=r"unknown key"):
        parse_config(MINIMAL.replace("strategy = random",
                                     "strategy = random\ntypo_key = 3"))
    with pytest.raises(ConfigError, match=r"unknown key"):
        parse_config(MINIMAL + "\n[features]\nserver_0 = x.csv\n")


def test_config_dataset_source_validation():
    with pytest.raises(ConfigError, match="not both"):
        parse_config(MINIMAL.replace("[run]", "train = a.csv\ntest = b.csv\n[run]"))
    with pytest.raises(ConfigError, match="needs train and test"):
        parse_config("[dataset]\ntrain = a.csv\n[run]\nstrategy = random\n")
    with pytest.raises(ConfigError, match="synth_classes"):
        parse_config("[dataset]\nsynth_classes = 3\n[run]\nstrategy = random\n")


def test_config_run_section_validation():
    with pytest.raises(ConfigError, match="strategy is required"):
        parse_config("[dataset]\nsynth_classes = 3\nsynth_dim = 2\n"
                     "synth_per_class = 10\n")
    with pytest.raises(ConfigError, match="unknown strategy"):
        parse_config(MINIMAL.replace("random", "oracle"))
    with pytest.raises(ConfigError, match="budget"):
        parse_config(MINIMAL + "budget = huge\n")
    with pytest.raises(ConfigError, match="budget"):
        parse_config(MINIMAL + "budget = 0\n")
    with pytest.raises(ConfigError, match="rounds"):
        parse_config(MINIMAL + "rounds = 0\n")
    with pytest.raises(ConfigError, match="selector"):
        parse_config(MINIMAL + "selector = both\n")
    with pytest.raises(ConfigError, match="duplicates"):
        parse_config(MINIMAL + "seeds = 1,1\n")
    with pytest.raises(ConfigError, match="aggregation_weight"):
        parse_config(MINIMAL + "aggregation_weight = equal\n")
    with pytest.raises(ConfigError, match="worker"):
        parse_config(MINIMAL + "seed_workers = 0\n")


def test_config_partition_and_train_validation():
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(MINIMAL + "\n[partition]\nalpha = lots\n")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(MINIMAL + "\n[partition]\nalpha = -2\n")
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_config(MINIMAL + "\n[train]\nlearning_rate = 0\n")
    with pytest.raises(ConfigError, match="integer"):
        parse_config(MINIMAL + "\n[train]\nlocal_epochs = two\n")
    with pytest.raises(ConfigError, match="typicality_k"):
        parse_config(MINIMAL + "\n[geometry]\ntypicality_k = 0\n")
    with pytest.raises(ConfigError, match="hidden_units"):
        parse_config(MINIMAL + "\n[model]\nhidden_units = 0\n")
    with pytest.raises(ConfigError, match="arch"):
        parse_config(MINIMAL + "\n[model]\narch = tree\n")


def test_resolve_budget():
    assert resolve_budget("tiny", 7) == 7
    assert resolve_budget("small", 7) == 21
    assert resolve_budget(5, 7) == 5


def test_parse_seed_list():
    assert parse_seed_list("0,1, 2") == [0, 1, 2]
    assert parse_seed_list("4") == [4]
    with pytest.raises(ConfigError):
        parse_seed_list("")
    with pytest.raises(ConfigError):
        parse_seed_list("1,a")
    with pytest.raises(ConfigError):
        parse_seed_list("3,3")


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.ini")


def _rows():
    return [
        ResultRow("random", 0, 1, 3, 1.0 / 3.0, 0.25),
        ResultRow("random", 0, 2, 6, 0.5, 0.4375),
        ResultRow("random", 1, 1, 3, 0.3, 0.2),
        ResultRow("random", 1, 2, 6, 0.6, 0.5),
    ]


def test_results_round_trip_is_exact(tmp_path):
    rows = _rows()
    path = tmp_path / "res.csv"
    save_results(rows, path)
    back = load_results(path)
    assert back == rows   # dataclass equality covers every field bit-for-bit
    assert results_to_csv(back) == results_to_csv(rows)


def test_results_csv_errors():
    with pytest.raises(DataFormatError, match="header"):
        results_from_csv("strategy,seed\nrandom,0\n")
    with pytest.raises(DataFormatError, match="no rows"):
        results_from_csv(",".join(["strategy", "seed", "round",
                                   "labeled_per_client", "accuracy",
                                   "balanced_recall"]) + "\n")
    good = results_to_csv(_rows())
    with pytest.raises(DataFormatError, match="non-numeric"):
        results_from_csv(good.replace("0.5,", "half,"))


def test_rows_group_into_run_results():
    grouped = rows_to_run_results(_rows(), "accuracy")
    assert set(grouped) == {"random"}
    runs = sorted(grouped["random"], key=lambda r: r.seed)
    assert [r.seed for r in runs] == [0, 1]
    assert np.array_equal(runs[0].values, [1.0 / 3.0, 0.5])
    assert np.array_equal(runs[1].values, [0.3, 0.6])
    recall = rows_to_run_results(_rows(), "balanced_recall")["random"]
    assert np.array_equal(sorted(recall, key=lambda r: r.seed)[0].values,
                          [0.25, 0.4375])


def test_rows_grouping_validation():
    rows = _rows()
    with pytest.raises(ValueError, match="metric"):
        rows_to_run_results(rows, "f1")
    with pytest.raises(DataFormatError, match="duplicate round"):
        rows_to_run_results(rows + [ResultRow("random", 0, 1, 3, 0.1, 0.1)],
                            "accuracy")
    gap = [ResultRow("random", 0, 1, 3, 0.1, 0.1),
           ResultRow("random", 0, 3, 9, 0.2, 0.2)]
    with pytest.raises(DataFormatError, match="contiguous"):
        rows_to_run_results(gap, "accuracy")


def _report():
    runs_i = [RunResult("a", s, "accuracy", np.array([0.5 + 0.01 * s, 0.9]))
              for s in range(4)]
    runs_j = [RunResult("b", s, "accuracy", np.array([0.5, 0.2]))
              for s in range(4)]
    return win_rate(runs_i, runs_j)


def test_comparison_round_trip_including_infinities():
    report = _report()
    assert report.t_scores[1] == math.inf   # constant 0.7 gap across seeds
    text = comparison_to_csv(report)
    assert text.splitlines()[-1].startswith("# win_rate=")
    back = comparison_from_csv(text)
    assert back == report
    # -inf survives as well
    flipped = ComparisonReport(strategy_i="x", strategy_j="y", metric="accuracy",
                               threshold=2.776, rounds=[1], t_scores=[-math.inf],
                               win_rate=0.0, defeat_rate=1.0)
    assert comparison_from_csv(comparison_to_csv(flipped)) == flipped


def test_comparison_csv_errors():
    with pytest.raises(DataFormatError, match="summary"):
        comparison_from_csv(comparison_to_csv(_report()).rsplit("#", 1)[0])
    with pytest.raises(DataFormatError, match="header"):
        comparison_from_csv("a,b\n1,2\n")


def test_shift_csv_round_trip():
    from falsim.data import ClientPartition, FeatureDataset
    from falsim.evaluation import typicality_shift_report
    rng = np.random.default_rng(0)
    ds = FeatureDataset(ids=np.arange(60), features=rng.random((60, 2)),
                        labels=np.zeros(60, dtype=np.int64),
                        num_classes=1).validate()
    parts = [ClientPartition(0, np.arange(0, 30)),
             ClientPartition(1, np.arange(30, 60))]
    report = typicality_shift_report(ds, parts, neighbors=5)
    hist_text = shift_histogram_to_csv(report)
    rows = parse_shift_histogram_csv(hist_text)
    assert len(rows) == 50
    assert rows[0][0] == 0.0
    assert sum(r[2] for r in rows) == 60 and sum(r[3] for r in rows) == 60
    summary = parse_summary_csv(shift_summary_to_csv(report))
    assert summary["num_points"] == "60" and summary["neighbors"] == "5"
    assert float(summary["centralized_mean"]) == report.central_mean
    assert float(summary["within_client_mean"]) == report.client_mean
    assert float(summary["client0_mean"]) == report.per_client_means[0]
    assert float(summary["retention"]) == report.retention


def test_curves_mean_and_stderr():
    same = {("flat"): [RunResult("flat", s, "accuracy", np.array([0.4, 0.8]))
                       for s in range(4)]}
    text = curves_csv(same)
    lines = text.splitlines()
    assert lines[0] == "strategy,round,mean,stderr,seeds"
    assert lines[1] == "flat,1,0.4,0.0,4"
    assert lines[2] == "flat,2,0.8,0.0,4"

    two = {"a": [RunResult("a", 0, "accuracy", np.array([0.2])),
                 RunResult("a", 1, "accuracy", np.array([0.4]))]}
    mean_line = curves_csv(two).splitlines()[1].split(",")
    assert abs(float(mean_line[2]) - 0.3) <= 1e-15
    # std(ddof=1) of (0.2, 0.4) over sqrt(2) is exactly 0.1 up to rounding
    assert abs(float(mean_line[3]) - 0.1) <= 1e-12

    single = {"s": [RunResult("s", 0, "accuracy", np.array([0.7]))]}
    assert curves_csv(single).splitlines()[1] == "s,1,0.7,0.0,1"


def test_curves_sorted_by_strategy():
    data = {name: [RunResult(name, 0, "accuracy", np.array([0.5]))]
            for name in ("zeta", "alpha", "mid")}
    names = [line.split(",")[0] for line in curves_csv(data).splitlines()[1:]]
    assert names == ["alpha", "mid", "zeta"]


def test_winrate_table_layout():
    text = winrate_table_csv([_report()])
    lines = text.splitlines()
    assert lines[0] == "strategy_i,strategy_j,metric,win_rate,defeat_rate"
    assert lines[1].startswith("a,b,accuracy,")


def test_plot_histogram_centers():
    text = plot_histogram_csv([(0.0, 0.5, 3, 4), (0.5, 1.0, 1, 0)])
    lines = text.splitlines()
    assert lines[0] == "bin_center,centralized_count,within_client_count"
    assert lines[1] == "0.25,3,4"
    assert lines[2] == "0.75,1,0"
