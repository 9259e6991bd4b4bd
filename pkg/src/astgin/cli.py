"""Command-line entry point: ingest, graph, train, evaluate, forecast, perturb, synth, gradcheck.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 numerical failure.
Every command writes into one ``--out`` directory and leaves a
``manifest.json`` there listing the artifacts and a hash of the config.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import a2unit, graph, ingest, informer, nncore, synth, trainer

log = logging.getLogger("astgin")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3
SECTIONS = {"train": trainer.TrainConfig, "model": trainer.ModelConfig, "synth": synth.SynthConfig}
PATH_KEYS = ("data", "out")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


@dataclasses.dataclass
class RunConfig:
    train: trainer.TrainConfig
    model: trainer.ModelConfig
    synth: synth.SynthConfig
    data: str | None = None
    out: str | None = None

    def to_dict(self) -> dict:
        return {"train": dataclasses.asdict(self.train), "model": dataclasses.asdict(self.model),
                "synth": dataclasses.asdict(self.synth), "data": self.data, "out": self.out}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _section(cls, values: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}")
    try:
        obj = cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if "center" in values:
        obj.center = tuple(obj.center)
    return obj


def build_config(raw: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Validate a config mapping; ``overrides`` holds dotted keys like ``train.seed``."""
    raw = json.loads(json.dumps(raw or {}))
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS) - set(PATH_KEYS))
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {unknown}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            raw.setdefault(section, {})[name] = value
        else:
            raw[key] = value
    for name in SECTIONS:
        if not isinstance(raw.get(name, {}), dict):
            raise ConfigError(f"config section {name!r} must be an object")
    return RunConfig(**{name: _section(cls, raw.get(name, {}), name) for name, cls in SECTIONS.items()},
                     data=raw.get("data"), out=raw.get("out"))


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return build_config(raw, overrides)


# ---------------------------------------------------------------- helpers


def write_manifest(out_dir: Path, command: str, artifacts, config_hash: str | None = None) -> Path:
    out_dir = Path(out_dir)
    files = []
    for p in artifacts:
        p = Path(p)
        files.append({"path": os.path.relpath(p, out_dir),
                      "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
    manifest = {"command": command, "config_hash": config_hash, "artifacts": files}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(path) -> Path:
    if not path:
        raise ConfigError("an output directory is required (--out)")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _graph_for(data: ingest.ProcessedData) -> graph.StationGraph:
    return graph.build_station_graph(data.series.station_ids, data.coords)


def _samples(data: ingest.ProcessedData, L: int, M: int):
    return a2unit.augment_dataset(ingest.make_windows(data.series, data.static, data.dynamic, L, M))


def _splits(samples, cfg: trainer.TrainConfig):
    return ingest.split_dataset(samples, seed=cfg.seed, method=cfg.split)


def _load_model(path):
    params, extra = nncore.load_checkpoint(path)
    if "model" not in extra or "train" not in extra:
        raise ConfigError(f"{path}: checkpoint lacks model metadata")
    model = trainer.AstGin.from_meta(extra["model"], params)
    cfg = trainer.TrainConfig(**extra["train"])
    return model, cfg, extra


def _test_split(args, cfg: trainer.TrainConfig):
    data = ingest.load_processed(args.data)
    samples = _samples(data, cfg.L, cfg.M)
    split = getattr(args, "split", "test")
    if split == "all":
        return data, samples
    tr, va, te = _splits(samples, cfg)
    return data, {"train": tr, "val": va, "test": te}[split]


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    start = ingest.parse_time(args.start) if args.start else None
    data, summary = ingest.ingest_files(args.sessions, args.weather, args.poi, args.connectors,
                                        start=start, periods=args.periods)
    out = _out_dir(args.out)
    paths = ingest.write_processed(out, data)
    paths.append(_write_json(out / "ingest_report.json", summary))
    write_manifest(out, "ingest", paths)
    print(f"stations {summary['n_stations']} sessions {summary['n_sessions']} "
          f"skipped {summary['rows_skipped']} clamps {summary['clamps']}")
    by_type = summary["sessions_by_type"]
    print("sessions by type " + " ".join(f"{t}={by_type[t]}" for t in ingest.CHARGER_TYPES))
    return EXIT_OK


def cmd_graph(args) -> int:
    data = ingest.load_processed(args.data)
    g = graph.build_station_graph(data.series.station_ids, data.coords, sigma=args.sigma, kappa=args.kappa)
    out = _out_dir(args.out)
    paths = []
    for name, matrix in (("distance", g.dist), ("adjacency", g.A), ("adjacency_normalized", g.A_hat)):
        paths.append(out / f"{name}.csv")
        graph.write_matrix_csv(paths[-1], g.station_ids, matrix)
    paths.append(_write_json(out / "graph.json", {"sigma": g.sigma, "kappa": g.kappa, "n": len(g.station_ids)}))
    write_manifest(out, "graph", paths)
    print(f"sigma {g.sigma:.1f} m kappa {g.kappa:.1f} m")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = load_config(args.config, {"synth.seed": args.seed, "synth.n_stations": args.stations,
                                    "synth.days": args.days, "out": args.out})
    out = _out_dir(cfg.out)
    data = synth.generate(cfg.synth)
    paths = synth.write_dataset(out, data)
    paths.append(_write_json(out / "synth_config.json", dataclasses.asdict(cfg.synth)))
    write_manifest(out, "synth", paths, cfg.digest())
    print(f"wrote {len(data.series.station_ids)} stations x {data.series.grid.count} steps to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    M = trainer.horizon_steps(args.horizon) if args.horizon is not None else None
    cfg = load_config(args.config, {"train.ablation": args.ablation, "train.M": M, "train.seed": args.seed,
                                    "train.epochs": args.epochs, "data": args.data, "out": args.out})
    if not cfg.data:
        raise ConfigError("a data directory is required (--data or config 'data')")
    out = _out_dir(cfg.out)
    data = ingest.load_processed(cfg.data)
    g = _graph_for(data)
    tr, va, te = _splits(_samples(data, cfg.train.L, cfg.train.M), cfg.train)
    model, report = trainer.train(tr, va, g.A_hat, cfg.model, cfg.train, test_set=te, progress=args.verbose)
    ckpt = nncore.save_checkpoint(out / "checkpoint.npz", model.params,
                                  {"model": model.meta(), "train": dataclasses.asdict(cfg.train),
                                   "config_hash": cfg.digest()})
    rep = _write_json(out / "train_report.json", report.to_dict())
    conf = _write_json(out / "config.json", cfg.to_dict())
    write_manifest(out, "train", [ckpt, rep, conf], cfg.digest())
    m = report.test_metrics
    print(f"ablation {cfg.train.ablation} horizon {cfg.train.M} best epoch {report.best_epoch} "
          f"test rmse {m.rmse:.5f} accuracy {m.accuracy:.5f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, cfg, extra = _load_model(args.checkpoint)
    data, samples = _test_split(args, cfg)
    A_hat = _graph_for(data).A_hat
    out = _out_dir(args.out)
    metrics = trainer.evaluate(model, samples, A_hat)
    payload = {"metrics": metrics.to_dict(), "split": args.split, "ablation": model.ablation,
               "horizon": model.horizon,
               "baselines": {k: v.to_dict() for k, v in trainer.baselines(samples).items()}}
    paths = [_write_json(out / "metrics.json", payload)]
    if args.dump_attention:
        with informer.capture_attention() as captured:
            trainer.predict(model, samples[:1], A_hat)
        arrays = {f"{i:03d}_{name}": w for i, (name, w) in enumerate(captured)}
        paths.append(out / "attention.npz")
        np.savez(paths[-1], **arrays)
    write_manifest(out, "evaluate", paths, extra.get("config_hash"))
    print(f"rmse {metrics.rmse:.5f} r2 {metrics.r2:.5f} var {metrics.var_score:.5f} "
          f"mae {metrics.mae:.5f} accuracy {metrics.accuracy:.5f}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    model, cfg, extra = _load_model(args.checkpoint)
    data, samples = _test_split(args, cfg)
    pred = trainer.predict(model, samples, _graph_for(data).A_hat)
    if args.clamp:
        pred = np.clip(pred, 0.0, 1.0)
    grid, ids = data.series.grid, data.series.station_ids
    step = timedelta(minutes=grid.step_minutes)
    out = _out_dir(args.out)
    path = out / "forecast.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "station_id", "step", "truth", "prediction"])
        for s, yhat in zip(samples, pred):
            base = s.start + cfg.L + 1
            for k in range(yhat.shape[0]):
                t = ingest.format_time(grid.origin + (base + k) * step)
                for i, sid in enumerate(ids):
                    w.writerow([t, sid, k + 1, repr(float(s.Y[k, i])), repr(float(yhat[k, i]))])
    write_manifest(out, "forecast", [path], extra.get("config_hash"))
    print(f"wrote {pred.shape[0]} forecasts x {pred.shape[1]} steps x {pred.shape[2]} stations")
    return EXIT_OK


def cmd_perturb(args) -> int:
    sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
    if not sigmas or any(s < 0 for s in sigmas):
        raise ConfigError("--sigmas needs non-negative comma-separated values")
    model, cfg, extra = _load_model(args.checkpoint)
    data, samples = _test_split(args, cfg)
    rows = trainer.perturb_eval(model, samples, _graph_for(data).A_hat, sigmas, seed=args.seed)
    out = _out_dir(args.out)
    path = _write_json(out / "perturb.json", {"seed": args.seed, "split": args.split,
                                              "results": [{"sigma": s, **m.to_dict()} for s, m in rows]})
    write_manifest(out, "perturb", [path], extra.get("config_hash"))
    for s, m in rows:
        print(f"sigma {s:g} rmse {m.rmse:.5f} accuracy {m.accuracy:.5f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seeds = range(args.seeds)
    rows = [(name, err) for name, err in nncore.run_registry(seeds).items()]
    worst = max(nncore.grad_check(*trainer.micro_gradcheck_case(s), max_coords=args.coords, seed=s)
                for s in seeds)
    rows.append(("micro_model", worst))
    failed = [name for name, err in rows if not err < args.tol]
    width = max(len(n) for n, _ in rows)
    for name, err in rows:
        print(f"{name:<{width}}  {err:.3e}  {'PASS' if err < args.tol else 'FAIL'}")
    if args.out:
        out = _out_dir(args.out)
        path = _write_json(out / "gradcheck.json", {"tol": args.tol, "seeds": args.seeds,
                                                    "results": {n: e for n, e in rows}})
        write_manifest(out, "gradcheck", [path])
    if failed:
        print(f"{len(failed)} case(s) above {args.tol:g}: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="astgin", description="EV charging availability forecasting")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="raw CSVs -> processed availability and attributes")
    for name in ("sessions", "weather", "poi", "connectors"):
        p.add_argument(f"--{name}", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", help="grid origin (default: first session start, floored)")
    p.add_argument("--periods", type=int, help="number of 30-minute steps")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("graph", help="export distance and adjacency matrices")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--kappa", type=float)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--stations", type=int)
    p.add_argument("--days", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--ablation", choices=trainer.ABLATIONS)
    p.add_argument("--horizon", type=int, help="minutes: 30, 60, 90 or 120")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("evaluate", cmd_evaluate, "metrics of a checkpoint"),
                              ("forecast", cmd_forecast, "per-station forecasts as CSV"),
                              ("perturb", cmd_perturb, "metrics under input noise")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        p.set_defaults(func=func)
        if name == "evaluate":
            p.add_argument("--dump-attention", action="store_true", help="save attention weights of one sample")
        if name == "forecast":
            p.add_argument("--clamp", action="store_true", help="clip forecasts to [0, 1]")
        if name == "perturb":
            p.add_argument("--sigmas", default="0,0.01,0.05,0.1")
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--coords", type=int, default=4, help="probed coordinates per micro-model weight")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    return parser


@contextlib.contextmanager
def _thread_limit():
    value = os.environ.get("ASTGIN_THREADS")
    if not value:
        yield
        return
    from threadpoolctl import threadpool_limits

    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"ASTGIN_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("ASTGIN_THREADS must be >= 1")
    with threadpool_limits(limits=n):
        yield


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
