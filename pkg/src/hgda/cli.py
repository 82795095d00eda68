"""Command-line entry point: ``hgda {gen,train,eval,subgroup,diagnose,sweep}``."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import load_checkpoint, save_checkpoint
from .graph import Graph, load_graph, save_graph
from .homophily import NUM_BINS
from .model import HgdaConfig, HgdaModel
from .synth import GenSpec, generate, generate_pair
from .trainer import bound_diagnostics, evaluate, subgroup_accuracy, train

log = logging.getLogger("hgda")

SWEEP_HEADER = ["alpha", "beta", "seed", "status", "source_accuracy", "target_accuracy",
                "message"]
AGGREGATE_HEADER = ["alpha", "beta", "num_ok", "mean_source_accuracy", "mean_target_accuracy"]


class CliError(Exception):
    pass


# ---------------------------------------------------------------- manifests

def dataset_hash(path) -> str:
    """SHA-256 over the dataset files, in name order."""
    path = Path(path)
    digest = hashlib.sha256()
    for name in ("meta.json", "edges.csv", "features.csv", "labels.csv"):
        f = path / name
        if f.is_file():
            digest.update(name.encode())
            digest.update(f.read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs: dict) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {k: {"path": str(Path(p).resolve()), "sha256": dataset_hash(p)}
                   for k, p in sorted(inputs.items())},
        "output_dir": str(Path(out_dir).resolve()),
        "tool_version": __version__,
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    _dump(Path(out_dir) / "manifest.json", manifest)
    return manifest


def read_manifest(run_dir, verify: bool = True) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.is_file():
        raise CliError(f"{path} not found")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if verify:
        for name, entry in manifest["inputs"].items():
            if dataset_hash(entry["path"]) != entry["sha256"]:
                raise CliError(f"input {name!r} at {entry['path']} changed since the run")
    return manifest


def _dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _print(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> None:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    out = Path(args.out)
    if "source" in raw or "target" in raw:
        specs = {k: GenSpec.from_dict(_with_seed(raw[k], args.seed)) for k in ("source", "target")}
        gs, gt = generate_pair(specs["source"], specs["target"])
        save_graph(gs, out / "source")
        save_graph(gt, out / "target")
        write_manifest(out, "gen", {k: s.to_dict() for k, s in specs.items()},
                       {"source": out / "source", "target": out / "target"})
        log.info("wrote source and target datasets to %s", out)
    else:
        spec = GenSpec.from_dict(_with_seed(raw, args.seed))
        save_graph(generate(spec), out)
        write_manifest(out, "gen", spec.to_dict(), {"dataset": out})
        log.info("wrote dataset to %s", out)


def _with_seed(d: dict, seed):
    return d if seed is None else {**d, "seed": seed}


# ---------------------------------------------------------------- train

def _resolve_config(args) -> HgdaConfig:
    params = {}
    if getattr(args, "config", None):
        params.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    overrides = {"epochs": args.epochs, "alpha": args.alpha, "beta": args.beta,
                 "seed": args.seed, "lr": args.lr, "weight_decay": args.weight_decay}
    params.update({k: v for k, v in overrides.items() if v is not None})
    if args.channels:
        params["channels_enabled"] = list(args.channels)
    return HgdaConfig.from_dict(params)


def _load_labeled_source(path) -> Graph:
    g = load_graph(path)
    if not g.is_fully_labeled():
        raise CliError("source must be labeled")
    return g


def cmd_train(args) -> None:
    cfg = _resolve_config(args)
    source = _load_labeled_source(args.source)
    target = load_graph(args.target)
    model, report, opt = train(source, target, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", model.params, opt, epoch=cfg.epochs, seed=cfg.seed,
                    extra={"config": cfg.to_dict(),
                           "model": {"in_dim": model.in_dim, "num_classes": model.num_classes}})
    report.to_json(out / "report.json")
    report.write_metrics_csv(out / "metrics.csv")
    write_manifest(out, "train", cfg.to_dict(), {"source": args.source, "target": args.target})
    log.info("trained %d epochs in %.1fs; target accuracy %s", cfg.epochs,
             report.wall_clock_seconds, report.final_target_accuracy)


def load_run(run_dir) -> tuple[HgdaModel, dict]:
    ckpt_path = Path(run_dir) / "checkpoint.json"
    if not ckpt_path.is_file():
        raise CliError(f"{ckpt_path} not found")
    payload = load_checkpoint(ckpt_path)
    cfg = HgdaConfig.from_dict(payload["config"])
    model = HgdaModel.init(payload["model"]["in_dim"], payload["model"]["num_classes"], cfg)
    model.load_arrays(payload["tensors"])
    return model, read_manifest(run_dir)


def _run_inputs(args, manifest=None) -> tuple[str, str]:
    source = args.source or (manifest and manifest["inputs"].get("source", {}).get("path"))
    target = args.target or (manifest and manifest["inputs"].get("target", {}).get("path"))
    if not source or not target:
        raise CliError("need --source and --target (or a --run that records them)")
    return source, target


# ---------------------------------------------------------------- eval / subgroup / diagnose

def cmd_eval(args) -> None:
    model, manifest = load_run(args.run)
    _, target = _run_inputs(args, manifest)
    g = load_graph(target)
    accuracy, preds = evaluate(model, g)
    _print({"accuracy": accuracy, "num_nodes": g.num_nodes, "dataset": str(target),
            "predictions": [int(p) for p in preds]})


def cmd_subgroup(args) -> None:
    if args.bins != NUM_BINS:
        raise CliError(f"subgroup analysis uses exactly {NUM_BINS} bins")
    model, manifest = load_run(args.run)
    source, target = _run_inputs(args, manifest)
    profile = subgroup_accuracy(model, _load_labeled_source(source), load_graph(target))
    _print(profile.to_dict())


def cmd_diagnose(args) -> None:
    manifest = read_manifest(args.run) if args.run else None
    source, target = _run_inputs(args, manifest)
    _print(bound_diagnostics(load_graph(source), load_graph(target)))


# ---------------------------------------------------------------- sweep

def _sweep_cell(cell: dict) -> dict:
    row = {"alpha": cell["alpha"], "beta": cell["beta"], "seed": cell["seed"],
           "status": "ok", "source_accuracy": "", "target_accuracy": "", "message": ""}
    try:
        cfg = HgdaConfig.from_dict({**cell["config"], "alpha": cell["alpha"],
                                    "beta": cell["beta"], "seed": cell["seed"],
                                    "track_accuracy": False})
        source = _load_labeled_source(cell["source"])
        target = load_graph(cell["target"])
        _, report, _ = train(source, target, cfg)
        row["source_accuracy"] = report.final_source_accuracy
        row["target_accuracy"] = "" if report.final_target_accuracy is None \
            else report.final_target_accuracy
    except Exception as exc:  # noqa: BLE001 - a failed cell is recorded, the sweep goes on
        row["status"] = "failed"
        row["message"] = f"{type(exc).__name__}: {exc}"
    return row


def aggregate_rows(rows: list[dict]) -> list[dict]:
    groups = defaultdict(list)
    for r in rows:
        groups[(r["alpha"], r["beta"])].append(r)
    out = []
    for (alpha, beta), cell in groups.items():
        ok = [r for r in cell if r["status"] == "ok"]
        tgt = [r["target_accuracy"] for r in ok if r["target_accuracy"] != ""]
        out.append({"alpha": alpha, "beta": beta, "num_ok": len(ok),
                    "mean_source_accuracy": float(np.mean([r["source_accuracy"] for r in ok]))
                    if ok else "",
                    "mean_target_accuracy": float(np.mean(tgt)) if tgt else ""})
    return out


def cmd_sweep(args) -> None:
    grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    for key in ("alpha", "beta", "seeds", "source", "target"):
        if key not in grid:
            raise CliError(f"grid file lacks {key!r}")
    base = grid.get("config", {})
    if args.epochs is not None:
        base = {**base, "epochs": args.epochs}
    cells = [{"alpha": float(a), "beta": float(b), "seed": int(s), "config": base,
              "source": grid["source"], "target": grid["target"]}
             for a in grid["alpha"] for b in grid["beta"] for s in grid["seeds"]]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    _write_csv(out / "aggregate.csv", AGGREGATE_HEADER, aggregate_rows(rows))
    write_manifest(out, "sweep", grid, {"source": grid["source"], "target": grid["target"]})
    failed = sum(r["status"] != "ok" for r in rows)
    log.info("sweep finished: %d cells, %d failed", len(rows), failed)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the seed (unsigned 64-bit)")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="hgda", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset or pair")
    p.add_argument("spec", help="GenSpec JSON, or {'source': spec, 'target': spec}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    def training_flags(p):
        p.add_argument("--config", help="HgdaConfig JSON")
        p.add_argument("--epochs", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--weight-decay", type=float)
        p.add_argument("--channels", help="subset of LFH, e.g. 'L' or 'LH'")

    p = sub.add_parser("train", parents=[common], help="train a model on a source/target pair")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    training_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "target accuracy of a trained run"),
                             ("subgroup", cmd_subgroup, "per-homophily-bin accuracy"),
                             ("diagnose", cmd_diagnose, "KL shift diagnostics of a pair")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--run", required=name != "diagnose", help="training output directory")
        p.add_argument("--source")
        p.add_argument("--target")
        p.add_argument("--out", help="also write the JSON report here")
        if name == "subgroup":
            p.add_argument("--bins", type=int, default=NUM_BINS)
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", parents=[common], help="alpha/beta/seed grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    report_out = getattr(args, "out", None) if args.command in ("eval", "subgroup",
                                                                "diagnose") else None
    try:
        if report_out:
            _tee_stdout(args, report_out)
        else:
            args.func(args)
    except (CliError, ValueError, FileNotFoundError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1 if not isinstance(exc, ValueError) else 2
    return 0


def _tee_stdout(args, out_dir) -> None:
    import io
    from contextlib import redirect_stdout

    buf = io.StringIO()
    with redirect_stdout(buf):
        args.func(args)
    text = buf.getvalue()
    sys.stdout.write(text)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{args.command}.json").write_text(text, encoding="utf-8")
    inputs = {k: v for k, v in (("source", args.source), ("target", args.target)) if v}
    write_manifest(out, args.command, {"run": args.run}, inputs)


if __name__ == "__main__":
    sys.exit(main())
