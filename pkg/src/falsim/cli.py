"""Command-line interface.

Every subcommand builds a request model and executes it either in-process
(default) or against a running service instance (``--server URL``); file
arguments are read locally and inlined into the request, so both paths share
one implementation.  Exit codes: 0 success, 1 usage error, 2 validation
error (bad inputs or files), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import httpx

from . import __version__
from .config import parse_config, parse_seed_list
from .service import handlers, schemas

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_METRICS = ("accuracy", "balanced_recall")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this artifact reserves 2
    for validation errors, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _post(server: str, endpoint: str, request, response_cls):
    url = server.rstrip("/") + "/" + endpoint
    try:
        resp = httpx.post(url, json=request.model_dump(mode="json"), timeout=600.0)
    except httpx.HTTPError as exc:
        raise RuntimeError(f"request to {url} failed: {exc}") from None
    if resp.status_code == 422:
        detail = resp.json().get("detail", resp.text)
        raise ValueError(str(detail))
    if resp.status_code != 200:
        raise RuntimeError(f"server returned {resp.status_code}: {resp.text}")
    return response_cls.model_validate(resp.json())


def _call(server: str | None, endpoint: str, request, response_cls):
    if server:
        return _post(server, endpoint, request, response_cls)
    return getattr(handlers, endpoint)(request)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _cmd_synth(args) -> int:
    req = schemas.SynthRequest(num_classes=args.classes, dim=args.dim,
                               per_class=args.per_class, spread=args.spread,
                               seed=args.seed)
    resp = _call(args.server, "synth", req, schemas.SynthResponse)
    out = Path(args.out)
    _write(out / "train.csv", resp.train_csv)
    _write(out / "test.csv", resp.test_csv)
    print(f"wrote {out / 'train.csv'} ({resp.train_rows} rows) and "
          f"{out / 'test.csv'} ({resp.test_rows} rows)")
    return EXIT_OK


def _cmd_partition(args) -> int:
    alpha = args.alpha if args.alpha == "uniform" else float(args.alpha)
    req = schemas.PartitionRequest(
        dataset_csv=Path(args.dataset).read_text(encoding="utf-8"),
        alpha=alpha, num_clients=args.clients, seed=args.seed)
    resp = _call(args.server, "partition", req, schemas.PartitionResponse)
    _write(Path(args.out), resp.partition_csv)
    print(resp.table)
    print(f"wrote {args.out}")
    return EXIT_OK


def _collect_config_files(config_path: Path, config_text: str) -> dict[str, str]:
    """Read every file the config references, keyed by the exact path string
    used in the config.  Relative paths resolve against the config's folder."""
    cfg = parse_config(config_text)
    referenced = []
    if not cfg.source.is_synthetic:
        referenced += [cfg.source.train_path, cfg.source.test_path]
    if cfg.partition_path is not None:
        referenced.append(cfg.partition_path)
    referenced.extend(cfg.feature_paths.values())
    files = {}
    for ref in referenced:
        path = Path(ref)
        if not path.is_absolute():
            path = config_path.parent / path
        if not path.exists():
            raise FileNotFoundError(f"config references missing file: {ref}")
        files[ref] = path.read_text(encoding="utf-8")
    return files


def _cmd_run(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        raise FileNotFoundError(f"config file not found: {args.config}")
    config_text = config_path.read_text(encoding="utf-8")
    cfg = parse_config(config_text)
    seeds = parse_seed_list(args.seeds) if args.seeds else None
    req = schemas.RunRequest(
        config_text=config_text,
        files=_collect_config_files(config_path, config_text),
        seeds=seeds,
        strategy=args.strategy,
    )
    resp = _call(args.server, "run", req, schemas.RunResponse)
    strategy = args.strategy or cfg.strategy
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"results_{strategy}.csv"
    _write(out, resp.results_csv)
    print(f"wrote {out} ({resp.rows} rows)")
    for flag in resp.flags:
        print(f"flag: {flag}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    req = schemas.CompareRequest(
        results_i_csv=Path(args.results_i).read_text(encoding="utf-8"),
        results_j_csv=Path(args.results_j).read_text(encoding="utf-8"),
        metric=args.metric,
        threshold=args.threshold,
    )
    resp = _call(args.server, "compare", req, schemas.CompareResponse)
    _write(Path(args.out), resp.report_csv)
    print(f"win_rate={resp.win_rate} defeat_rate={resp.defeat_rate} "
          f"rounds={resp.rounds}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_shift(args) -> int:
    req = schemas.ShiftRequest(
        dataset_csv=Path(args.dataset).read_text(encoding="utf-8"),
        partition_csv=Path(args.partition).read_text(encoding="utf-8"),
        neighbors=args.neighbors,
        threshold=args.threshold,
    )
    resp = _call(args.server, "shift", req, schemas.ShiftResponse)
    out = Path(args.out)
    _write(out / "shift_histogram.csv", resp.histogram_csv)
    _write(out / "shift_summary.csv", resp.summary_csv)
    retention = "nan" if resp.retention is None else repr(resp.retention)
    print(f"centralized_mean={resp.centralized_mean} "
          f"within_client_mean={resp.within_client_mean} retention={retention}")
    print(f"wrote {out / 'shift_histogram.csv'} and {out / 'shift_summary.csv'}")
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    texts = [Path(p).read_text(encoding="utf-8") for p in args.inputs]
    if args.kind == "curves":
        req = schemas.PlotdataRequest(kind="curves", results_csv=texts,
                                      metric=args.metric)
    elif args.kind == "winrate":
        req = schemas.PlotdataRequest(kind="winrate", comparison_csv=texts,
                                      metric=args.metric)
    else:
        if len(texts) != 1:
            raise ValueError("histogram plot data takes exactly one input file")
        req = schemas.PlotdataRequest(kind="histogram", histogram_csv=texts[0],
                                      metric=args.metric)
    resp = _call(args.server, "plotdata", req, schemas.PlotdataResponse)
    _write(Path(args.out), resp.table_csv)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="falsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"falsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_server(p):
        p.add_argument("--server", default=None,
                       help="run against a service URL instead of in-process")

    p = sub.add_parser("synth", help="generate a synthetic train/test dataset pair")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output folder for train.csv/test.csv")
    add_server(p)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("partition", help="split a dataset across clients")
    p.add_argument("--dataset", required=True)
    p.add_argument("--alpha", default="uniform",
                   help="Dirichlet concentration, or 'uniform'")
    p.add_argument("--clients", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="partition CSV path")
    add_server(p)
    p.set_defaults(fn=_cmd_partition)

    p = sub.add_parser("run", help="run a configured multi-seed experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="results CSV path")
    p.add_argument("--seeds", default=None, help="comma-separated seed override")
    p.add_argument("--strategy", default=None, help="strategy override")
    add_server(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("compare", help="paired t-score comparison of two results files")
    p.add_argument("results_i")
    p.add_argument("results_j")
    p.add_argument("--metric", choices=_METRICS, default="accuracy")
    p.add_argument("--threshold", type=float, default=2.776)
    p.add_argument("--out", required=True, help="comparison report CSV path")
    add_server(p)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("shift", help="centralized vs within-client typicality report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--neighbors", type=int, default=20)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output folder")
    add_server(p)
    p.set_defaults(fn=_cmd_shift)

    p = sub.add_parser("plotdata", help="emit plot-ready tables from result files")
    p.add_argument("--kind", choices=("curves", "winrate", "histogram"), required=True)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--metric", choices=_METRICS, default="accuracy")
    p.add_argument("--out", required=True, help="output CSV path")
    add_server(p)
    p.set_defaults(fn=_cmd_plotdata)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
