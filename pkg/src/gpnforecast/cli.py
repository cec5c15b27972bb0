"""Command-line pipeline: synth, ingest, clean, fit-schema, train, evaluate, predict,
genres, qoe, report, and run (all of them in order).

Exit codes: 0 ok, 1 pipeline error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .evaluation import EvalReport, LATENCY_BUCKETS, bucket_counts, leaderboard, mape
from .features import FeatureSchema, fit_schema, select_columns, transform
from .genre_qoe import (SensitivityTable, TypeMap, build_lattice, qoe_table,
                        type_distribution)
from .models import ModelConfig, TrainedModel, fit, fit_stepwise, predict, split
from .svg import bar_chart
from .synth import SynthConfig, catalog_type_map, generate, write_corpus
from .warehouse import (Warehouse, clean, ingest_files, query, write_raw_file,
                        write_rejects)

log = logging.getLogger("gpnforecast")


class UsageError(Exception):
    pass


def default_models() -> list[dict]:
    return [
        {"algorithm": "stepwise-regression", "features": "all"},
        {"algorithm": "random-forest", "features": "all"},
        {"algorithm": "random-forest", "features": "select"},
        {"algorithm": "mlp", "features": "select"},
        {"algorithm": "svr", "features": "all"},
    ]


@dataclass
class RunConfig:
    raw: list = field(default_factory=list)
    warehouse: str = "warehouse"
    type_map: str | None = None
    si_table: str | None = None
    schema: str = "schema.json"
    models_dir: str = "models"
    report_dir: str = "report"
    binning: bool = True
    target_transform: str = "identity"
    reference: str | None = None  # YYYY-MM month the schema is fitted on
    select_list: str | None = None
    models: list = field(default_factory=default_models)
    split_seed: int = 0
    train_fraction: float = 0.6
    model_seed: int = 0
    qos_k: float = 100.0
    qos_w: float = 1.0
    dedup: bool = False
    synth: dict = field(default_factory=dict)
    synth_out: str = "raw/synth.csv"

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(**doc)
        if cfg.target_transform not in ("identity", "log"):
            raise UsageError("target_transform must be 'identity' or 'log'")
        return cfg


# --------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(*paths) -> None:
    for p in paths:
        if p is None or not Path(p).exists():
            raise UsageError(f"missing input: {p}")


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, inputs, outputs, seeds=None):
    manifest = {
        "command": command,
        "version": __version__,
        "config": asdict(cfg),
        "seeds": seeds or {},
        "inputs": {str(p): _sha256(Path(p)) for p in sorted(map(str, inputs)) if Path(p).is_file()},
        "outputs": {str(p): _sha256(Path(p)) for p in sorted(map(str, outputs))},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"manifest-{command}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _type_map(cfg: RunConfig) -> TypeMap:
    if cfg.type_map is None:
        return TypeMap()
    _require(cfg.type_map)
    return TypeMap.load(cfg.type_map)


def _si_table(cfg: RunConfig) -> SensitivityTable:
    if cfg.si_table is None:
        return SensitivityTable.default()
    _require(cfg.si_table)
    return SensitivityTable.load(cfg.si_table)


def _open_warehouse(cfg: RunConfig) -> Warehouse:
    _require(Path(cfg.warehouse) / "manifest.json")
    return Warehouse.open(cfg.warehouse)


def _matrix(cfg: RunConfig):
    wh = _open_warehouse(cfg)
    _require(cfg.schema)
    schema = FeatureSchema.load(cfg.schema)
    facts = wh.sessions()
    return facts, schema, transform(facts, schema, _type_map(cfg))


def _feature_label(features: str, schema: FeatureSchema) -> str:
    label = "Select List" if features == "select" else "All"
    return label + (" & Selective Binning" if schema.use_binning else "")


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _markdown(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig, args) -> list[Path]:
    scfg = SynthConfig(**cfg.synth)
    if args.n is not None:
        scfg.n = args.n
    if args.seed is not None:
        scfg.seed = args.seed
    if args.inject_rejects is not None:
        scfg.inject_rejects = args.inject_rejects
    scfg.validate()
    out = Path(args.out or cfg.synth_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(out, generate(scfg))
    outputs = [out]
    tm_path = Path(cfg.type_map) if cfg.type_map else out.with_name("type_map.csv")
    catalog_type_map(scfg).save(tm_path)
    outputs.append(tm_path)
    (out.with_name("synth_config.json")).write_text(json.dumps(scfg.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_manifest(out.parent, "synth", cfg, [], outputs, {"synth": scfg.seed})
    print(f"wrote {scfg.n} synthetic sessions to {out}")
    return outputs


def cmd_ingest(cfg: RunConfig, args) -> list[Path]:
    raw = args.raw or cfg.raw
    if not raw:
        raise UsageError("ingest needs raw files (arguments or config 'raw')")
    _require(*raw)
    records, rejects = ingest_files(raw)
    facts, more = clean(records)
    rejects += more
    wh = Warehouse(dedup=cfg.dedup or args.dedup)
    wh.load(facts)
    out = Path(cfg.warehouse)
    wh.save(out)
    write_rejects(out / "rejects.csv", rejects)
    outputs = sorted(out.glob("*.csv"))
    _write_manifest(out, "ingest", cfg, raw, outputs)
    print(f"loaded {len(wh)} sessions into {out}; {len(rejects)} rejected")
    return outputs


def cmd_clean(cfg: RunConfig, args) -> list[Path]:
    raw = args.raw or cfg.raw
    if not raw:
        raise UsageError("clean needs raw files")
    _require(*raw)
    records, rejects = ingest_files(raw)
    keep = []
    facts, more = clean(records)
    kept = {f.source for f in facts}
    keep = [r for r in records if r.source in kept]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_raw_file(out, keep)
    rej_path = out.with_name(out.stem + "_rejects.csv")
    write_rejects(rej_path, rejects + more)
    _write_manifest(out.parent, "clean", cfg, raw, [out, rej_path])
    print(f"kept {len(keep)} of {len(records) + len(rejects)} rows")
    return [out, rej_path]


def _reference_partition(facts, reference: str | None):
    months = sorted({(f.session_start.year, f.session_start.month) for f in facts})
    if not months:
        raise UsageError("warehouse is empty")
    if reference is None:
        year, month = months[0]
    else:
        try:
            year, month = (int(x) for x in reference.split("-"))
        except ValueError:
            raise UsageError(f"reference must look like YYYY-MM, got {reference!r}") from None
    part = [f for f in facts if (f.session_start.year, f.session_start.month) == (year, month)]
    if not part:
        raise UsageError(f"no sessions in reference month {year:04d}-{month:02d}")
    return part, f"{year:04d}-{month:02d}"


def cmd_fit_schema(cfg: RunConfig, args) -> list[Path]:
    wh = _open_warehouse(cfg)
    facts = wh.sessions()
    part, ref = _reference_partition(facts, args.reference or cfg.reference)
    select = None
    if cfg.select_list:
        _require(cfg.select_list)
        select = Path(cfg.select_list).read_text().split()
    schema = fit_schema(part, use_binning=cfg.binning, target_transform=cfg.target_transform,
                        use_select_list=select is not None, select_list=select, reference=ref)
    out = Path(args.out or cfg.schema)
    out.parent.mkdir(parents=True, exist_ok=True)
    schema.save(out)
    _write_manifest(out.parent, "fit-schema", cfg, [Path(cfg.warehouse) / "session_fact.csv"], [out])
    print(f"schema {schema.fingerprint} fitted on {len(part)} sessions from {ref}")
    return [out]


def _model_configs(cfg: RunConfig, target: str) -> list[tuple[ModelConfig, str]]:
    out = []
    for entry in cfg.models:
        entry = dict(entry)
        algo = entry.pop("algorithm")
        features = entry.pop("features", "all")
        if features not in ("all", "select"):
            raise UsageError(f"model features must be 'all' or 'select', got {features!r}")
        params = entry.pop("params", {})
        seed = entry.pop("seed", cfg.model_seed)
        if entry:
            raise UsageError(f"unknown model entry keys {sorted(entry)}")
        if algo == "mlp" and "hidden" not in params and target == "log":
            params = {**params, "hidden": [150, 125, 100, 75, 50, 25]}
        out.append((ModelConfig(algo, params, seed), features))
    return out


def cmd_train(cfg: RunConfig, args) -> list[Path]:
    facts, schema, matrix = _matrix(cfg)
    target = schema.target_transform
    matrix = matrix.with_target(target)
    train, test = split(matrix, cfg.train_fraction, cfg.split_seed)
    out = Path(args.out or cfg.models_dir)
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("*.npz"):
        old.unlink()
    step_cfg = ModelConfig("stepwise-regression", seed=cfg.model_seed)
    step_model, select = fit_stepwise(train, config=step_cfg)
    if schema.select_list:
        select = list(schema.select_list)
    if not select:
        raise UsageError("the select list is empty; train with features 'all' only")
    outputs = []
    for k, (mcfg, features) in enumerate(_model_configs(cfg, target)):
        data = select_columns(train, select) if features == "select" else train
        model = step_model if (mcfg, features) == (step_cfg, "all") else fit(data, mcfg)
        model.metadata["feature_option"] = _feature_label(features, schema)
        path = out / f"{k:02d}-{mcfg.algorithm}-{features}.npz"
        model.save(path)
        outputs.append(path)
        log.info("trained %s (%s)", mcfg.algorithm, features)
    (out / "select_list.txt").write_text("\n".join(select) + "\n")
    split_doc = {"seed": cfg.split_seed, "train_fraction": cfg.train_fraction,
                 "n_train": len(train), "n_test": len(test), "fingerprint": schema.fingerprint,
                 "target_transform": target}
    (out / "split.json").write_text(json.dumps(split_doc, indent=2, sort_keys=True) + "\n")
    outputs += [out / "select_list.txt", out / "split.json"]
    _write_manifest(out, "train", cfg, [cfg.schema, Path(cfg.warehouse) / "session_fact.csv"],
                    outputs, {"split": cfg.split_seed, "model": cfg.model_seed})
    print(f"trained {len(outputs) - 2} models into {out}")
    return outputs


def _load_models(dirs) -> list[tuple[str, TrainedModel]]:
    entries = []
    for d in dirs:
        _require(d)
        for path in sorted(Path(d).glob("*.npz")):
            model = TrainedModel.load(path)
            entries.append((model.metadata.get("feature_option", "All"), model))
    if not entries:
        raise UsageError(f"no model artifacts in {', '.join(map(str, dirs))}")
    return entries


def _evaluate(cfg: RunConfig, model_dirs) -> tuple[EvalReport, object]:
    facts, schema, matrix = _matrix(cfg)
    _, test = split(matrix, cfg.train_fraction, cfg.split_seed)
    entries = _load_models(model_dirs)
    report = leaderboard(entries, test, {"seed": cfg.split_seed, "train_fraction": cfg.train_fraction,
                                         "n_test": len(test)})
    return report, (entries, test)


def cmd_evaluate(cfg: RunConfig, args) -> list[Path]:
    report, _ = _evaluate(cfg, args.models or [cfg.models_dir])
    out = Path(args.out or cfg.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "leaderboard.csv").write_text(report.to_csv())
    (out / "leaderboard.md").write_text(report.to_markdown())
    outputs = [out / "leaderboard.csv", out / "leaderboard.md"]
    _write_manifest(out, "evaluate", cfg, [cfg.schema], outputs, {"split": cfg.split_seed})
    print(report.to_markdown())
    return outputs


def cmd_predict(cfg: RunConfig, args) -> list[Path]:
    _require(args.model, cfg.schema, *args.input)
    model = TrainedModel.load(args.model)
    schema = FeatureSchema.load(cfg.schema)
    records, rejects = ingest_files(args.input)
    facts, more = clean(records)
    matrix = transform(facts, schema, _type_map(cfg))
    preds = predict(model, matrix)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_table(out, ["source", "predicted_wtfast_ping_ms"],
                 [(f.source, f"{p:.6g}") for f, p in zip(facts, preds)])
    _write_manifest(out.parent, "predict", cfg, [args.model, cfg.schema, *args.input], [out])
    print(f"predicted {len(preds)} sessions ({len(rejects) + len(more)} rejected)")
    return [out]


def _genres(cfg: RunConfig, facts, out: Path) -> list[Path]:
    tm = _type_map(cfg)
    dist = type_distribution(facts, tm)
    rows = [(t.name, f"{pct:.1f}") for t, pct in dist]
    _write_table(out / "type_distribution.csv", ["game_type", "percent"], rows)
    (out / "type_distribution.md").write_text(_markdown(["Game Types", "Percentage of Records"],
                                                        [(n, f"{p}%") for n, p in rows]))
    (out / "type_distribution.svg").write_text(
        bar_chart([t.name for t, _ in dist], [p for _, p in dist], "Records by game type", "%"))
    edges = build_lattice(t for t, _ in dist)
    _write_table(out / "lattice.csv", ["subtype", "supertype"], [(a.name, b.name) for a, b in edges])
    return [out / "type_distribution.csv", out / "type_distribution.md",
            out / "type_distribution.svg", out / "lattice.csv"]


def cmd_genres(cfg: RunConfig, args) -> list[Path]:
    facts = _open_warehouse(cfg).sessions()
    out = Path(args.out or cfg.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = _genres(cfg, facts, out)
    _write_manifest(out, "genres", cfg, [cfg.type_map] if cfg.type_map else [], outputs)
    print((out / "type_distribution.md").read_text())
    return outputs


def _qoe(cfg: RunConfig, facts, out: Path, scope: str) -> list[Path]:
    rows = qoe_table(facts, _type_map(cfg), _si_table(cfg), scope, cfg.qos_k, cfg.qos_w)
    table = [(r.scope, r.game_type, r.sessions, f"{r.mean_ping:.2f}", f"{r.std_ping:.2f}",
              f"{r.score.qos:.4f}", f"{r.score.si:g}", f"{r.score.qoe:.4f}") for r in rows]
    header = ["scope", "game_type", "sessions", "mean_ping", "std_ping", "qos", "si", "qoe"]
    _write_table(out / "qoe.csv", header, table)
    (out / "qoe.md").write_text(f"QoS = {cfg.qos_k:g} / (mean + {cfg.qos_w:g} * std); QoE = QoS * SI\n\n"
                                + _markdown(header, table))
    (out / "qoe.svg").write_text(bar_chart([r.scope for r in rows], [r.score.qoe for r in rows],
                                           "Quality of experience"))
    return [out / "qoe.csv", out / "qoe.md", out / "qoe.svg"]


def cmd_qoe(cfg: RunConfig, args) -> list[Path]:
    facts = _open_warehouse(cfg).sessions()
    out = Path(args.out or cfg.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = _qoe(cfg, facts, out, args.scope)
    _write_manifest(out, "qoe", cfg, [p for p in (cfg.type_map, cfg.si_table) if p], outputs)
    print((out / "qoe.md").read_text())
    return outputs


def cmd_report(cfg: RunConfig, args) -> list[Path]:
    wh = _open_warehouse(cfg)
    facts = wh.sessions()
    out = Path(args.out or cfg.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []
    sections = ["# GPN session report\n"]

    model_dirs = args.models or [cfg.models_dir]
    if Path(cfg.schema).exists() and all(Path(d).exists() for d in model_dirs):
        report, (entries, test) = _evaluate(cfg, model_dirs)
        (out / "leaderboard.csv").write_text(report.to_csv())
        (out / "leaderboard.md").write_text(report.to_markdown())
        labels = [f"{r.algorithm} / {r.feature_option} [{r.unit}]" for r in report.rows]
        (out / "leaderboard.svg").write_text(
            bar_chart(labels, [r.mape_ms for r in report.rows], "Test MAPE in ms space", "%"))
        outputs += [out / "leaderboard.csv", out / "leaderboard.md", out / "leaderboard.svg"]
        sections += ["## Model leaderboard\n", report.to_markdown()]
        # predicted-latency histogram from the model with the lowest ms-space MAPE
        scored = [(mape(predict(m, test), test.ping), k) for k, (_, m) in enumerate(entries)]
        best = entries[min(scored)[1]][1]
        pred_counts = bucket_counts(predict(best, test))
        test_counts = bucket_counts(test.ping)
    else:
        pred_counts = None

    actual_counts = bucket_counts(f.wtfast_ping for f in facts)
    header = ["bucket", "sessions", "percent"]
    rows = [(b, actual_counts[b], f"{100 * actual_counts[b] / len(facts):.1f}") for b, _ in LATENCY_BUCKETS]
    _write_table(out / "latency_buckets.csv", header, rows)
    (out / "latency_buckets.svg").write_text(
        bar_chart([b for b, _ in LATENCY_BUCKETS], [actual_counts[b] for b, _ in LATENCY_BUCKETS],
                  "GPN ping by latency bucket"))
    outputs += [out / "latency_buckets.csv", out / "latency_buckets.svg"]
    sections += ["## Latency buckets\n", _markdown(header, rows)]
    if pred_counts is not None:
        rows = [(b, test_counts[b], pred_counts[b]) for b, _ in LATENCY_BUCKETS]
        hdr = ["bucket", "test_actual", f"test_predicted ({best.algorithm})"]
        _write_table(out / "latency_buckets_test.csv", hdr, rows)
        outputs.append(out / "latency_buckets_test.csv")
        sections += ["Held-out sessions, actual vs predicted:\n", _markdown(hdr, rows)]

    outputs += _genres(cfg, facts, out)
    sections += ["## Game types\n", (out / "type_distribution.md").read_text()]
    outputs += _qoe(cfg, facts, out, "game_type")
    sections += ["## Quality of experience\n", (out / "qoe.md").read_text()]

    for dim, title in (("game_name", "game"), ("reg_country", "client country"),
                       ("server_id", "game server"), ("start_hour", "hour of day")):
        view = query(wh, "wtfast_ping", "mean", group_by=[dim])
        inet = query(wh, "internet_ping", "mean", group_by=[dim])
        rows = [(k, n, f"{v:.2f}", f"{iv:.2f}") for k, v, n, iv in
                zip(view[dim], view["value"], view["n"], inet["value"])]
        name = f"view_{dim}.csv"
        _write_table(out / name, [dim, "sessions", "mean_wtfast_ping", "mean_internet_ping"], rows)
        outputs.append(out / name)
        if dim in ("reg_country", "start_hour"):
            sections += [f"## Mean ping by {title}\n",
                         _markdown([dim, "sessions", "mean_wtfast_ping", "mean_internet_ping"], rows)]
    weekend = query(wh, "weekend", "mean")["value"][0]
    sections.append(f"Weekend share of sessions: {100 * weekend:.1f}%\n")
    (out / "report.md").write_text("\n".join(sections))
    outputs.append(out / "report.md")
    _write_manifest(out, "report", cfg, [cfg.schema] if Path(cfg.schema).exists() else [], outputs)
    print(f"report written to {out}")
    return outputs


def cmd_run(cfg: RunConfig, args) -> list[Path]:
    """synth (unless raw files are configured), ingest, fit-schema, train, evaluate, report."""
    ns = argparse.Namespace(n=None, seed=None, inject_rejects=None, out=None, raw=[], dedup=False,
                            reference=None, models=None)
    if not cfg.raw:
        outputs = cmd_synth(cfg, ns)
        cfg.raw = [str(outputs[0])]
        if cfg.type_map is None:
            cfg.type_map = str(outputs[1])
    cmd_ingest(cfg, ns)
    cmd_fit_schema(cfg, ns)
    cmd_train(cfg, ns)
    return cmd_report(cfg, ns)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpnforecast", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--warehouse", help="warehouse directory")
    p.add_argument("--type-map", dest="type_map", help="game name -> type CSV")
    p.add_argument("--si-table", dest="si_table", help="game type -> sensitivity index CSV")
    p.add_argument("--schema", help="feature schema JSON")
    p.add_argument("--target", choices=["identity", "log"], help="target transform")
    p.add_argument("--no-binning", action="store_true", help="disable selective binning")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--model-seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic raw corpus")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--inject-rejects", type=float, help="fraction of rows violating a cleaning rule")
    s.add_argument("--out", help="raw CSV to write")

    s = sub.add_parser("ingest", help="ingest, clean and load raw files into a warehouse")
    s.add_argument("raw", nargs="*")
    s.add_argument("--dedup", action="store_true", help="drop exact duplicate sessions")

    s = sub.add_parser("clean", help="apply cleaning rules to raw files")
    s.add_argument("raw", nargs="*")
    s.add_argument("--out", required=True, help="cleaned raw CSV to write")

    s = sub.add_parser("fit-schema", help="fit the feature schema on a reference month")
    s.add_argument("--reference", help="YYYY-MM month (default: earliest in the warehouse)")
    s.add_argument("--out")

    s = sub.add_parser("train", help="train the configured models")
    s.add_argument("--out", help="model directory")

    s = sub.add_parser("evaluate", help="score models on the held-out split")
    s.add_argument("--models", nargs="+", help="model directories")
    s.add_argument("--out", help="report directory")

    s = sub.add_parser("predict", help="predict GPN ping for raw sessions")
    s.add_argument("--model", required=True)
    s.add_argument("--input", nargs="+", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("genres", help="game type distribution and lattice")
    s.add_argument("--out")

    s = sub.add_parser("qoe", help="quality-of-experience league table")
    s.add_argument("--scope", choices=["game_type", "game_name"], default="game_type")
    s.add_argument("--out")

    s = sub.add_parser("report", help="leaderboards, distributions, buckets, QoE and views")
    s.add_argument("--models", nargs="+")
    s.add_argument("--out")

    sub.add_parser("run", help="synth/ingest, fit-schema, train and report in one go")
    return p


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "clean": cmd_clean,
            "fit-schema": cmd_fit_schema, "train": cmd_train, "evaluate": cmd_evaluate,
            "predict": cmd_predict, "genres": cmd_genres, "qoe": cmd_qoe, "report": cmd_report,
            "run": cmd_run}


def _module_tag(exc: BaseException) -> str:
    mod = type(exc).__module__
    if mod.startswith("gpnforecast."):
        return mod.split(".")[1]
    return "pipeline"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # numba probes an old system TBB on some hosts and falls back on its own
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = RunConfig.load(args.config)
        for key in ("warehouse", "type_map", "si_table", "schema", "split_seed", "model_seed"):
            if getattr(args, key) is not None:
                setattr(cfg, key, getattr(args, key))
        if args.target is not None:
            cfg.target_transform = args.target
        if args.no_binning:
            cfg.binning = False
        COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"gpnforecast {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"gpnforecast {args.command}: [{_module_tag(exc)}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
