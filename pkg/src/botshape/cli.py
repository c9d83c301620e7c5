"""Command line entry point: ``botshape {synth,features,measure,evaluate}``.

Parameters resolve in one order: built-in defaults, then the ``--config``
file (flat ``key = value`` TOML), then command-line flags. Every run writes
the effective parameters to ``run_config.echo`` in the output directory; that
file can be passed back as ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import classify, ingest, measure, pattern, sequence, synth
from .evaluation import Corpus, EvalConfig, FeatureBuilder, run_matrix

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ECHO_FILE = "run_config.echo"


class CommandError(RuntimeError):
    def __init__(self, code: str, message: str, flag: str | None = None, exit_code: int = 2):
        super().__init__(message)
        self.code = code
        self.message = message
        self.flag = flag
        self.exit_code = exit_code


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _csv_list(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(str(t) for t in text)
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _json_obj(text) -> dict:
    if isinstance(text, dict):
        return text
    value = json.loads(text)
    if not isinstance(value, dict):
        raise ValueError("expected a JSON object")
    return value


GLOBAL_PARAMS = {
    "seed": (int, 1, "seed for every random choice"),
    "out_dir": (str, "out", "directory for all outputs"),
}

_INPUTS = {
    "registrations": (str, None, "registrations file (.csv or .jsonl)"),
    "events": (str, None, "events file (.csv or .jsonl)"),
    "active_only": (_bool, False, "drop accounts without an event in their first 30 days"),
    "min_observed_days": (float, 0.0, "drop accounts observed for fewer days before the last event in the corpus"),
}

_PATTERN = {
    "n_weekly": (int, 8, "weekly shapelets to keep"),
    "n_monthly": (int, 8, "monthly shapelets to keep"),
    "candidate_stride": (int, 1, "start-position stride for shapelet candidates"),
    "profile_days": (int, pattern.PROFILE_DAYS, "days after registration covered by seasonal profiles"),
}

COMMAND_PARAMS: dict[str, dict[str, tuple]] = {
    "synth": {
        "n_genuine": (int, 400, "genuine accounts"),
        "n_bots": (int, 400, "bot accounts"),
        "corpus_days": (int, 365, "observation length in days"),
        "bot_synchrony": (float, 0.8, "share of bot events copied from the gang template"),
        "n_gangs": (int, 4, "bot gangs"),
        "noise_rate": (float, 0.02, "idiosyncratic bot events per active day"),
        "start": (str, "2014-01-01T00:00:00Z", "corpus start timestamp"),
        "start_window_days": (int, 30, "registrations spread over this many days"),
        "format": (str, "csv", "output format: csv or jsonl"),
    },
    "features": {
        **_INPUTS,
        **_PATTERN,
        "train_ids": (str, None, "file of training account ids (required for pattern features)"),
        "set": (str, "BotSet1", "ground-truth set providing labels for shapelet fitting"),
        "feature_sets": (_csv_list, classify.FEATURE_SETS, "comma-separated: account,sequence,pattern"),
    },
    "measure": {
        **_INPUTS,
        "active_only": (_bool, True, "drop accounts without an event in their first 30 days"),
        "set": (str, "BotSet1", "ground-truth set whose bots are measured"),
        "sample": (int, measure.SAMPLE_PER_GROUP, "sequences sampled per group for clustering"),
        "k_bot": (int, measure.BOT_CLUSTERS, "clusters for bot sequences"),
        "k_genuine": (int, measure.GENUINE_CLUSTERS, "clusters for genuine sequences"),
        "max_iter": (int, 100, "k-medoids iteration cap"),
    },
    "evaluate": {
        **_INPUTS,
        **_PATTERN,
        "sets": (_csv_list, ("BotSet1", "BotSet2", "BotSet3"), "comma-separated ground-truth sets"),
        "feature_sets": (_csv_list, classify.FEATURE_SETS, "comma-separated feature sets"),
        "classifiers": (_csv_list, ("linear_svm", "logreg", "mlp", "random_forest"), "comma-separated classifiers"),
        "ratio": (float, 0.7, "training share of each set"),
        "stratified": (_bool, False, "split within each class"),
        "hyperparameters": (_json_obj, {}, 'JSON overrides, e.g. {"mlp": {"epochs": 500}}'),
    },
}

REQUIRED = {"features": ("registrations", "events"), "measure": ("registrations", "events"), "evaluate": ("registrations", "events")}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_params(parser: argparse.ArgumentParser, params: dict) -> None:
    for name, (conv, default, help_text) in params.items():
        shown = ",".join(default) if isinstance(default, tuple) else default
        parser.add_argument(_flag(name), dest=name, default=argparse.SUPPRESS, help=f"{help_text} (default: {shown})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_params(common, GLOBAL_PARAMS)
    common.add_argument("--config", dest="config", default=argparse.SUPPRESS, help="flat TOML file of parameters")

    parser = argparse.ArgumentParser(
        prog="botshape",
        description="Behavioral sequence and pattern features for social bot detection",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    helps = {
        "synth": "generate a synthetic corpus",
        "features": "write account, sequence and pattern feature CSVs",
        "measure": "cohort box statistics, DTW clusters and seasonality",
        "evaluate": "run the classifier x feature-set x ground-truth matrix",
    }
    for cmd, params in COMMAND_PARAMS.items():
        p = sub.add_parser(cmd, help=helps[cmd], parents=[common])
        _add_params(p, params)
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """Defaults <- config file <- flags, converted and validated."""
    params = {**GLOBAL_PARAMS, **COMMAND_PARAMS[command]}
    effective = {name: spec[1] for name, spec in params.items()}
    given = vars(args)
    config_path = given.get("config")
    if config_path:
        try:
            with open(config_path, "rb") as fh:
                from_file = tomllib.load(fh)
        except OSError as exc:
            raise CommandError("config_unreadable", str(exc), "--config") from exc
        except tomllib.TOMLDecodeError as exc:
            raise CommandError("config_malformed", str(exc), "--config") from exc
        known = set(GLOBAL_PARAMS).union(*COMMAND_PARAMS.values())
        for key, value in from_file.items():
            if key == "command":
                continue
            if key not in known:
                raise CommandError("config_unknown_key", f"unknown key {key!r} in config file", "--config")
            if key in params:
                effective[key] = value
    for name in params:
        if name in given:
            effective[name] = given[name]
    for name, (conv, default, _) in params.items():
        value = effective[name]
        if value is None:
            continue
        try:
            effective[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise CommandError("bad_value", f"invalid value {value!r}: {exc}", _flag(name)) from exc
    for name in REQUIRED.get(command, ()):
        if effective.get(name) is None:
            raise CommandError("missing_flag", f"{_flag(name)} is required", _flag(name))
        if not Path(effective[name]).exists():
            raise CommandError("missing_file", f"no such file: {effective[name]}", _flag(name))
    return effective


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return json.dumps(json.dumps(value, sort_keys=True))
    return json.dumps(str(value))


def write_echo(out_dir: Path, command: str, effective: dict) -> None:
    lines = [f"# botshape {command}", f"command = {_toml_value(command)}"]
    for key in sorted(effective):
        if effective[key] is None:
            continue
        lines.append(f"{key} = {_toml_value(effective[key])}")
    (out_dir / ECHO_FILE).write_text("\n".join(lines) + "\n")


# -- shared loading -------------------------------------------------------------------


def _write_rejects(path: Path, rejects) -> None:
    with open(path, "w", newline="") as fh:
        ingest.write_rejects(rejects, fh)


def load_corpus(p: dict, out_dir: Path) -> Corpus:
    try:
        regs = ingest.read_registrations(p["registrations"])
    except ingest.IngestError as exc:
        raise CommandError("bad_input", str(exc), "--registrations") from exc
    try:
        evs = ingest.read_events(p["events"], regs.records)
    except ingest.IngestError as exc:
        raise CommandError("bad_input", str(exc), "--events") from exc
    if regs.rejects:
        _write_rejects(out_dir / "rejects_registrations.csv", regs.rejects)
    if evs.rejects:
        _write_rejects(out_dir / "rejects_events.csv", evs.rejects)
    corpus = Corpus.from_records(regs.records, evs.records)
    keep = regs.records
    if p.get("active_only"):
        keep = ingest.filter_active(keep, corpus.timelines)
    if p.get("min_observed_days"):
        ends = [ts[-1] for ts in corpus.timelines.values() if ts.size]
        if ends:
            corpus_end = int(max(ends))
            keep = [r for r in keep if sequence.observed_days(r, corpus_end) >= p["min_observed_days"]]
    ids = {r.account_id for r in keep}
    return Corpus(
        {a: r for a, r in corpus.registrations.items() if a in ids},
        {a: t for a, t in corpus.timelines.items() if a in ids},
    )


def _read_ids(path: str) -> list[str]:
    rows = Path(path).read_text().splitlines()
    ids = [r.split(",")[0].strip() for r in rows if r.strip()]
    if ids and ids[0] == "account_id":
        ids = ids[1:]
    return ids


def _write_matrix(path: Path, F: classify.FeatureMatrix, precision: int = 6) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["account_id", *F.column_names])
        for account_id, row in zip(F.account_ids, F.X):
            writer.writerow([account_id, *(_num(v, precision) for v in row)])


def _num(v: float, precision: int) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.{precision}f}"


# -- subcommands ------------------------------------------------------------------


def cmd_synth(p: dict, out_dir: Path) -> dict:
    fmt = p["format"]
    if fmt not in ingest.FORMATS:
        raise CommandError("bad_value", f"format must be one of {ingest.FORMATS}", "--format")
    try:
        cfg = synth.SynthConfig(
            n_genuine=p["n_genuine"],
            n_bots=p["n_bots"],
            corpus_days=p["corpus_days"],
            seed=p["seed"],
            bot_synchrony=p["bot_synchrony"],
            n_gangs=p["n_gangs"],
            noise_rate=p["noise_rate"],
            start=p["start"],
            start_window_days=p["start_window_days"],
        )
    except ValueError as exc:
        raise CommandError("bad_value", str(exc), None) from exc
    regs, events, _ = synth.generate(cfg)
    reg_path = out_dir / f"registrations.{fmt}"
    ev_path = out_dir / f"events.{fmt}"
    with open(reg_path, "w", newline="") as fh:
        ingest.write_registrations(regs, fh, fmt)
    with open(ev_path, "w", newline="") as fh:
        ingest.write_events(events, fh, fmt)
    return {"registrations": str(reg_path), "events": str(ev_path), "accounts": len(regs), "n_events": len(events)}


def cmd_features(p: dict, out_dir: Path) -> dict:
    corpus = load_corpus(p, out_dir)
    ids = sorted(corpus.registrations)
    builder = FeatureBuilder(corpus)
    written = {}
    for fs in p["feature_sets"]:
        if fs not in classify.FEATURE_SETS:
            raise CommandError("bad_value", f"unknown feature set {fs!r}", "--feature-sets")
    if "account" in p["feature_sets"]:
        _write_matrix(out_dir / "account_features.csv", builder.account(ids))
        written["account"] = "account_features.csv"
    if "sequence" in p["feature_sets"]:
        _write_matrix(out_dir / "sequence_features.csv", builder.sequence(ids))
        written["sequence"] = "sequence_features.csv"
    if "pattern" in p["feature_sets"]:
        if not p.get("train_ids"):
            raise CommandError("missing_flag", "pattern features need --train-ids to fit shapelets", "--train-ids")
        if not Path(p["train_ids"]).exists():
            raise CommandError("missing_file", f"no such file: {p['train_ids']}", "--train-ids")
        if p["set"] not in ingest.BOT_SETS:
            raise CommandError("bad_value", f"unknown set {p['set']!r}", "--set")
        dataset = ingest.build_ground_truth(p["set"], list(corpus.registrations.values()))
        wanted = set(_read_ids(p["train_ids"]))
        idx = [i for i, a in enumerate(dataset.account_ids) if a in wanted]
        if not idx:
            raise CommandError("bad_input", "no training ids found among labeled accounts", "--train-ids")
        train = dataset.subset(idx, "train")
        cfg = EvalConfig(
            n_weekly=p["n_weekly"],
            n_monthly=p["n_monthly"],
            candidate_stride=p["candidate_stride"],
            profile_days=p["profile_days"],
        )
        try:
            model = builder.fit_pattern(train, cfg)
        except ValueError as exc:
            raise CommandError("bad_input", str(exc), "--train-ids") from exc
        (out_dir / "shapelets.json").write_text(model.to_json() + "\n")
        _write_matrix(out_dir / "pattern_features.csv", builder.pattern(ids, model))
        written["pattern"] = "pattern_features.csv"
    return {"accounts": len(ids), "files": written}


MEASURE_GRIDS = {
    "daily": (30, 1),
    "weekly": (147, 7),
    "monthly": (360, 30),
}


def cmd_measure(p: dict, out_dir: Path) -> dict:
    corpus = load_corpus(p, out_dir)
    if p["set"] not in ingest.BOT_SETS:
        raise CommandError("bad_value", f"unknown set {p['set']!r}", "--set")
    try:
        dataset = ingest.build_ground_truth(p["set"], list(corpus.registrations.values()))
    except ValueError as exc:
        raise CommandError("bad_input", str(exc), "--registrations") from exc
    groups = {
        "bot": [a for a, y in zip(dataset.account_ids, dataset.labels) if y == 1],
        "genuine": [a for a, y in zip(dataset.account_ids, dataset.labels) if y == 0],
    }

    def seqs(ids, dur, gran):
        return np.asarray(
            [sequence.gen_bhv_sequence(corpus.timeline(a), corpus.t_reg(a), dur, gran).values for a in ids]
        ).reshape(len(ids), dur // gran)

    for name, (dur, gran) in MEASURE_GRIDS.items():
        for mode in ("raw", "accumulated"):
            rows = measure.cohort_report({g: seqs(ids, dur, gran) for g, ids in groups.items()}, mode)
            suffix = "" if mode == "raw" else "_accumulated"
            with open(out_dir / f"cohort_{name}{suffix}.csv", "w", newline="") as fh:
                measure.write_cohort_report(rows, fh)

    summary: dict[str, Any] = {"clusters": {}, "seasonality_peak_hour": {}}
    rng = np.random.default_rng(p["seed"])
    for g, k in (("bot", p["k_bot"]), ("genuine", p["k_genuine"])):
        ids = groups[g]
        if len(ids) > p["sample"]:
            ids = [ids[i] for i in np.sort(rng.choice(len(ids), p["sample"], replace=False))]
        try:
            result = measure.dtw_kmedoids(seqs(ids, 360, 30), k, p["max_iter"], p["seed"], ids)
        except ValueError as exc:
            raise CommandError("bad_input", f"{g}: {exc}", "--k-bot" if g == "bot" else "--k-genuine") from exc
        with open(out_dir / f"clusters_{g}.csv", "w", newline="") as fh:
            measure.write_clusters(result, fh)
        summary["clusters"][g] = {
            "k": k,
            "n": len(ids),
            "inertia": round(result.inertia, 6),
            "mean_within_dtw": round(result.mean_within_distance, 6),
            "medoids": [ids[i] for i in result.medoids],
        }

    with open(out_dir / "seasonality.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "key", "unit", "proportion"])
        for g, ids in groups.items():
            events = np.concatenate([corpus.timeline(a) for a in ids] or [np.zeros(0, np.int64)])
            if events.size == 0:
                continue
            for key in (pattern.HOUR_OF_DAY, pattern.DAY_OF_WEEK):
                shares = pattern.population_seasonality(events, key)
                for unit, v in enumerate(shares):
                    writer.writerow([g, key, unit, f"{v:.6f}"])
                if key == pattern.HOUR_OF_DAY:
                    summary["seasonality_peak_hour"][g] = int(np.argmax(shares))
    (out_dir / "measure_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_evaluate(p: dict, out_dir: Path) -> dict:
    corpus = load_corpus(p, out_dir)
    hyper = {k: dict(v) for k, v in classify.DEFAULT_HYPERPARAMETERS.items()}
    for kind, overrides in p["hyperparameters"].items():
        if kind not in hyper:
            raise CommandError("bad_value", f"unknown classifier {kind!r} in hyperparameters", "--hyperparameters")
        hyper[kind].update(overrides)
    try:
        cfg = EvalConfig(
            sets=p["sets"],
            feature_sets=p["feature_sets"],
            classifiers=p["classifiers"],
            seed=p["seed"],
            ratio=p["ratio"],
            stratified=p["stratified"],
            n_weekly=p["n_weekly"],
            n_monthly=p["n_monthly"],
            candidate_stride=p["candidate_stride"],
            profile_days=p["profile_days"],
            hyperparameters=hyper,
        )
    except ValueError as exc:
        raise CommandError("bad_value", str(exc), None) from exc
    report = run_matrix(corpus, cfg)
    (out_dir / "report.csv").write_text(report.to_csv())
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    table = report.to_table()
    (out_dir / "report.txt").write_text(table)
    print(table, end="")
    return {"cells": len(report.cells), "failed": sum(1 for c in report.cells if c.error)}


COMMANDS = {"synth": cmd_synth, "features": cmd_features, "measure": cmd_measure, "evaluate": cmd_evaluate}


def _emit(record: dict, stream) -> None:
    print(json.dumps(record, sort_keys=True), file=stream)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        p = resolve(args.command, args)
        out_dir = Path(p["out_dir"])
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CommandError("out_dir_unwritable", str(exc), "--out-dir") from exc
        write_echo(out_dir, args.command, p)
        result = COMMANDS[args.command](p, out_dir)
    except CommandError as exc:
        _emit({"event": "error", "command": args.command, "code": exc.code, "flag": exc.flag, "message": exc.message}, sys.stderr)
        return exc.exit_code
    _emit({"event": "complete", "command": args.command, **result}, sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
