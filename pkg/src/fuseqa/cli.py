"""``fuseqa`` command line: preprocess, run, compare, synth, questions, export-prompts.

Exit codes: 0 success, 1 config error, 2 I/O error, 3 data-contract violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, questions, sarprep, synth
from .fileio import atomic_write_text, canonical_json, read_jsonl, read_matrix_csv, write_jsonl, write_matrix_csv
from .pipeline import (
    TABLE_COLUMNS, ConfigError, DataContractError, ExperimentConfig, load_config, run_experiment, synth_config,
)
from .taxonomy import NomenclatureError, resolve_nomenclature, save_nomenclature

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DATA = 0, 1, 2, 3

log = logging.getLogger("fuseqa")

COMPARE_METRICS = (
    ("f_beta_macro", True), ("f1_micro", True), ("hamming_distance", False), ("match_ratio", True),
    ("GA", True), ("Y/N A", True), ("LC A", True),
)


class MissingInputs(OSError):
    pass


# ---------------------------------------------------------------- preprocess

def _pair_ids(in_dir: Path) -> tuple[list[str], list[str]]:
    ids, missing = set(), []
    for p in in_dir.iterdir():
        for pol in ("vv", "vh"):
            suffix = f"_{pol}"
            if p.suffix in (".bin", ".json") and p.stem.endswith(suffix):
                ids.add(p.stem[: -len(suffix)])
    for sid in sorted(ids):
        for pol in ("vv", "vh"):
            for ext in (".bin", ".json"):
                f = in_dir / f"{sid}_{pol}{ext}"
                if not f.exists():
                    missing.append(f.name)
    return sorted(ids), missing


def cmd_preprocess(args) -> int:
    in_dir, out_dir = Path(args.input), Path(args.out)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} not found")
    ids, missing = _pair_ids(in_dir)
    if missing:
        raise MissingInputs("missing raster files: " + ", ".join(missing))
    if not ids:
        raise MissingInputs(f"no <id>_vv / <id>_vh raster pairs in {in_dir}")
    pairs = {sid: (sarprep.read_raster(in_dir / f"{sid}_vv"), sarprep.read_raster(in_dir / f"{sid}_vh")) for sid in ids}
    mode = {"2ch": sarprep.TWO_CH, "3ch": sarprep.THREE_CH}[args.mode]
    if args.bounds:
        bounds = sarprep.SaturationBounds.from_dict(json.loads(Path(args.bounds).read_text(encoding="utf-8")))
    else:
        bounds = sarprep.compute_saturation_bounds(
            (sarprep.stack_raw(vv, vh) for vv, vh in pairs.values()), args.lower_q, args.upper_q)
    for sid, (vv, vh) in pairs.items():
        sarprep.write_raster(sarprep.assemble_sar_input(vv, vh, mode, bounds), out_dir / f"{sid}_s1")
    atomic_write_text(out_dir / "bounds.json", canonical_json(bounds.to_dict()))
    log.info("wrote %d %s rasters to %s", len(ids), args.mode, out_dir)
    return EXIT_OK


# ---------------------------------------------------------------------- run

def table_csv(rows: dict[str, dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", *TABLE_COLUMNS])
    for stage, row in rows.items():
        w.writerow([stage] + ["" if row[c] is None else repr(row[c]) for c in TABLE_COLUMNS])
    return buf.getvalue()


def _stage_csv(stage: dict) -> str:
    m = stage["metrics"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "precision", "recall", "f_beta", "f1", "threshold"])
    for (name, s), t in zip(m["per_class"].items(), stage["thresholds"]):
        w.writerow([name, repr(s["precision"]), repr(s["recall"]), repr(s["f_beta"]), repr(s["f1"]), repr(t)])
    return buf.getvalue()


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_experiment(cfg)
    rows = {k: v["table"] for k, v in report["stages"].items() if v is not None}
    if args.out:
        out = Path(args.out)
        atomic_write_text(out / "report.json", canonical_json(report))
        atomic_write_text(out / "summary_table.csv", table_csv(rows))
        for stage, body in report["stages"].items():
            if body is not None:
                atomic_write_text(out / f"per_class_{stage}.csv", _stage_csv(body))
        if not args.no_plots:
            from .plotting import plot_run

            plot_run(report, out)
    if args.format == "csv":
        sys.stdout.write(table_csv(rows))
    elif not args.out:
        sys.stdout.write(canonical_json(report))
    return EXIT_OK


# ------------------------------------------------------------------ compare

def _primary(report: dict) -> dict:
    stage = report["stages"].get(report["primary_stage"])
    if stage is None:
        raise DataContractError(f"report has no result for its primary stage {report['primary_stage']!r}")
    return stage


def compare_reports(reports: list[dict], labels: list[str]) -> dict:
    names = reports[0]["nomenclature"]
    for lab, r in zip(labels, reports):
        if r["nomenclature"] != names:
            raise DataContractError(f"report {lab} uses a different nomenclature")
    stages = [_primary(r) for r in reports]

    def value(stage, key):
        return stage["table"][key] if key in stage["table"] else stage["metrics"][key]

    metrics = []
    for key, higher in COMPARE_METRICS:
        vals = [value(s, key) for s in stages]
        known = [v for v in vals if v is not None]
        best = (max if higher else min)(known) if known else None
        metrics.append({
            "metric": key,
            "values": vals,
            "delta": [None if v is None or vals[0] is None else v - vals[0] for v in vals],
            "winner": [v is not None and v == best for v in vals],
        })
    per_class = []
    for c in names:
        f1 = [s["metrics"]["per_class"][c]["f1"] for s in stages]
        per_class.append({"class": c, "f1": f1, "winner": [v == max(f1) for v in f1]})
    return {"labels": labels, "metrics": metrics, "per_class": per_class, "tables": [s["table"] for s in stages]}


def _comparison_csv(cmp: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = cmp["labels"]
    w.writerow(["row", *labels, *(f"delta:{lab}" for lab in labels), "winner"])
    for m in cmp["metrics"]:
        win = ";".join(lab for lab, flag in zip(labels, m["winner"]) if flag)
        w.writerow([m["metric"], *("" if v is None else repr(v) for v in m["values"]),
                    *("" if d is None else repr(d) for d in m["delta"]), win])
    for row in cmp["per_class"]:
        win = ";".join(lab for lab, flag in zip(labels, row["winner"]) if flag)
        w.writerow([f"f1:{row['class']}", *(repr(v) for v in row["f1"]),
                    *(repr(v - row["f1"][0]) for v in row["f1"]), win])
    return buf.getvalue()


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise ConfigError("compare needs at least two reports")
    reports = [json.loads(Path(p).read_text(encoding="utf-8")) for p in args.reports]
    labels = args.labels.split(",") if args.labels else [f"{Path(p).parent.name or Path(p).stem}:{r['primary_stage']}"
                                                         for p, r in zip(args.reports, reports)]
    if len(labels) != len(reports) or len(set(labels)) != len(labels):
        raise ConfigError("need one distinct label per report")
    cmp = compare_reports(reports, labels)
    text = _comparison_csv(cmp) if args.format == "csv" else canonical_json(cmp)
    if args.out:
        out = Path(args.out)
        atomic_write_text(out / "comparison.json", canonical_json(cmp))
        atomic_write_text(out / "comparison.csv", _comparison_csv(cmp))
        if not args.no_plots:
            from .plotting import plot_compare

            plot_compare(cmp, out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------- synth / qa

def cmd_synth(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig.from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    nom = resolve_nomenclature(cfg.nomenclature)
    scfg = synth_config(cfg, nom)
    ds = synth.gen_dataset(scfg)
    out = Path(args.out)
    data = {}
    for name in synth.SPLITS:
        sp = ds[name]
        ids = [int(i) for i in sp.indices]
        entry = {"labels": str(out / f"{name}_labels.csv")}
        write_matrix_csv(entry["labels"], sp.labels, ids)
        for m, x in sp.features.items():
            entry[m] = str(out / f"{name}_{m}.csv")
            write_matrix_csv(entry[m], x, ids)
        data[name] = entry
    atomic_write_text(out / "synth_config.json", canonical_json(scfg.to_dict()))
    atomic_write_text(out / "data.json", canonical_json(data))
    save_nomenclature(nom, out / "nomenclature.json")
    return EXIT_OK


def cmd_questions(args) -> int:
    nom = resolve_nomenclature(args.nomenclature)
    ids, labels = read_matrix_csv(args.labels, dtype=np.uint8)
    if labels.shape[1] != len(nom):
        raise DataContractError(f"labels have {labels.shape[1]} columns, nomenclature has {len(nom)}")
    records = []
    for i, (sid, bits) in enumerate(zip(ids, labels)):
        # row position keys the stream; the record keeps the file's id
        gen = questions.generate_questions(bits, nom, args.count, seed=args.seed, sample_id=i)
        records.extend({**q.to_json(), "sample_id": sid} for q in gen)
    write_jsonl(args.out, records)
    return EXIT_OK


def export_prompts(ids, labels, records, nom) -> list[dict]:
    """Sample-major, question-minor prompt records."""
    by_sample: dict[str, list[dict]] = {sid: [] for sid in ids}
    for rec in records:
        sid = str(rec.get("sample_id"))
        if sid not in by_sample:
            raise DataContractError(f"question for sample {sid!r} has no label row")
        by_sample[sid].append(rec)
    out = []
    for sid, bits in zip(ids, labels):
        context = questions.build_prompt(bits, nom, "").removesuffix(questions.PROMPT_SEP)
        for rec in by_sample[sid]:
            ans = rec.get("answer")
            if ans is None:
                ans = questions.answer(questions.parse_question(rec["question"], nom), bits, nom)
            out.append({"sample_id": sid, "context": context, "question": rec["question"], "answer": ans,
                        "prompt": questions.build_prompt(bits, nom, rec["question"])})
    return out


def cmd_export_prompts(args) -> int:
    nom = resolve_nomenclature(args.nomenclature)
    ids, labels = read_matrix_csv(args.labels, dtype=np.uint8)
    if labels.size and labels.shape[1] != len(nom):
        raise DataContractError(f"labels have {labels.shape[1]} columns, nomenclature has {len(nom)}")
    write_jsonl(args.out, export_prompts(ids, labels, read_jsonl(args.questions), nom))
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuseqa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fuseqa {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="normalize VV/VH raster pairs into 2- or 3-channel SAR inputs")
    pp.add_argument("--in", dest="input", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--mode", choices=("2ch", "3ch"), default="3ch")
    pp.add_argument("--lower-q", type=float, default=0.01)
    pp.add_argument("--upper-q", type=float, default=0.99)
    pp.add_argument("--bounds", help="reuse saturation bounds from a JSON file instead of estimating them")
    pp.set_defaults(func=cmd_preprocess)

    pr = sub.add_parser("run", help="run one experiment and write its report")
    pr.add_argument("--config", required=True)
    pr.add_argument("--seed", type=int)
    pr.add_argument("--out")
    pr.add_argument("--format", choices=("json", "csv"), default="json")
    pr.add_argument("--no-plots", action="store_true")
    pr.set_defaults(func=cmd_run)

    pc = sub.add_parser("compare", help="side-by-side comparison of run reports")
    pc.add_argument("reports", nargs="+")
    pc.add_argument("--labels", help="comma-separated column labels")
    pc.add_argument("--out")
    pc.add_argument("--format", choices=("json", "csv"), default="json")
    pc.add_argument("--no-plots", action="store_true")
    pc.set_defaults(func=cmd_compare)

    ps = sub.add_parser("synth", help="export a synthetic dataset as CSV files")
    ps.add_argument("--config")
    ps.add_argument("--seed", type=int)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_synth)

    pq = sub.add_parser("questions", help="generate template questions for a labels CSV")
    pq.add_argument("--labels", required=True)
    pq.add_argument("--nomenclature", required=True)
    pq.add_argument("--count", type=int, default=questions.QUESTIONS_PER_SAMPLE)
    pq.add_argument("--seed", type=int, default=0)
    pq.add_argument("--out", required=True)
    pq.set_defaults(func=cmd_questions)

    pe = sub.add_parser("export-prompts", help="write class-names-plus-question prompts as JSONL")
    pe.add_argument("--labels", required=True)
    pe.add_argument("--questions", required=True)
    pe.add_argument("--nomenclature", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_export_prompts)
    return p


def _thread_limit() -> int | None:
    raw = os.environ.get("FUSEQA_THREADS")
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        limit = _thread_limit()
    except ValueError:
        print("error: FUSEQA_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except (ConfigError, NomenclatureError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataContractError, questions.QuestionError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
