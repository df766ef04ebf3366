"""Command-line interface for reproducible forum-triage experiments.

Commands: synth, stats, train, predict, rank, cv, loocv, ablate, baseline,
tune, kappa. Every command that emits a report embeds its fully resolved
configuration, and with --fixed-clock the JSON output is byte-identical
across reruns with the same inputs and seed.

Exit codes: 0 success; 1 input/validation error; 2 usage error (argparse)
or internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import evaluate as eval_mod
from . import features as feat_mod
from . import model as model_mod
from . import syngen as syn_mod
from .corpus import CorpusFormatError
from .textprep import default_textprep_config, load_textprep_config

FIXED_CLOCK = "1970-01-01T00:00:00Z"


# ---------------------------------------------------------------------------
# Output helpers

def _timestamp(args: argparse.Namespace) -> str:
    if args.fixed_clock:
        return FIXED_CLOCK
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _resolved_config(args: argparse.Namespace) -> dict:
    skip = {"func", "out"}
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        config[key] = str(value) if isinstance(value, Path) else value
    return config


def _emit(args: argparse.Namespace, result: dict, table: str | None) -> None:
    if args.format == "json":
        document = {
            "command": args.command,
            "config": _resolved_config(args),
            "generated_at": _timestamp(args),
            "result": result,
        }
        text = json.dumps(document, indent=2, sort_keys=True) + "\n"
    else:
        text = (table or json.dumps(result, indent=2, sort_keys=True)) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(row: list[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def _load_corpus(args: argparse.Namespace) -> corpus_mod.Corpus:
    if not args.corpus:
        raise ValueError("--corpus is required for this command")
    return corpus_mod.load_corpus(args.corpus)


def _textprep(args: argparse.Namespace):
    if args.config:
        return load_textprep_config(args.config)
    return default_textprep_config()


def _flags(args: argparse.Namespace) -> frozenset[str]:
    return feat_mod.parse_feature_flags(args.features)


def _eval_config(args: argparse.Namespace) -> eval_mod.EvalConfig:
    train_cfg = model_mod.TrainConfig(lam=args.lam, seed=args.seed)
    return eval_mod.EvalConfig(
        train=train_cfg,
        seed=args.seed,
        w_min=args.w_min,
        w_max=args.w_max,
        oversample_to=getattr(args, "oversample_to", None),
        jobs=args.jobs,
    )


# ---------------------------------------------------------------------------
# Commands

def cmd_synth(args: argparse.Namespace) -> None:
    if args.spec:
        spec = syn_mod.load_spec(args.spec)
        if args.seed is not None:
            spec = syn_mod.CorpusSpec(courses=spec.courses, signal=spec.signal,
                                      structure=spec.structure, seed=args.seed)
    else:
        seed = args.seed if args.seed is not None else 42
        spec = syn_mod.default_d14_like_spec(seed=seed)
    corpus = syn_mod.generate(spec)
    corpus_mod.save_corpus(corpus, args.out)
    stats = corpus_mod.compute_stats(corpus)
    sys.stdout.write(
        f"wrote {stats.total.threads} threads "
        f"({stats.total.intervened_threads} intervened) "
        f"across {len(corpus.courses)} courses to {args.out}\n")


def cmd_stats(args: argparse.Namespace) -> None:
    corpus = _load_corpus(args)
    stats = corpus_mod.compute_stats(corpus)
    rows = []
    for cid in sorted(stats.by_course):
        for ft in corpus_mod.FORUM_TYPE_ORDER:
            cell = stats.by_course_type.get((cid, ft))
            if cell is None:
                continue
            rows.append([cid, ft.value, str(cell.threads), str(cell.posts),
                         str(cell.intervened_threads),
                         f"{cell.intervention_ratio:.2f}"])
        course = stats.by_course[cid]
        rows.append([cid, "all", str(course.threads), str(course.posts),
                     str(course.intervened_threads),
                     f"{course.intervention_ratio:.2f}"])
    rows.append(["total", "all", str(stats.total.threads),
                 str(stats.total.posts), str(stats.total.intervened_threads),
                 f"{stats.total.intervention_ratio:.2f}"])
    table = _table(["course", "forum", "threads", "posts", "intervened", "ratio"],
                   rows)
    _emit(args, stats.to_dict(), table)


def _prepare(args: argparse.Namespace) -> eval_mod.PreparedCorpus:
    return eval_mod.prepare_corpus(_load_corpus(args), _textprep(args))


def cmd_train(args: argparse.Namespace) -> None:
    config = _textprep(args)
    prepared = eval_mod.prepare_corpus(_load_corpus(args), config)
    flags = _flags(args)
    matrix = prepared.matrix
    rows = np.arange(len(prepared.threads))
    keep, itf = matrix.fold_vocabulary(rows)
    mins, maxs = matrix.meta.min(axis=0), matrix.meta.max(axis=0)
    X = matrix.design_matrix(rows, keep, itf, mins, maxs, flags)
    lam = args.lam if args.lam is not None else 1.0 / len(rows)
    cfg = model_mod.TrainConfig(lam=lam, class_weight=args.class_weight,
                                seed=args.seed)
    params = model_mod.train(X, prepared.labels, cfg)
    vocab = feat_mod.build_vocabulary(list(prepared.threads), config)
    metas = [feat_mod.extract_meta(t, config) for t in prepared.threads]
    scaler = feat_mod.fit_minmax(metas)
    artifact = model_mod.ModelArtifact(
        vocabulary=vocab, scaler=scaler, flags=flags, lam=lam,
        class_weight=args.class_weight, params=params)
    if not args.model_out:
        raise ValueError("train requires --model-out for the artifact")
    artifact.save(args.model_out)
    result = {
        "artifact": str(args.model_out),
        "n_threads": len(rows),
        "n_excluded": prepared.n_excluded,
        "n_dims": params.n_dims,
        "nonzero_weights": len(params.nonzeros()),
        "bias": params.bias,
        "lambda": lam,
        "class_weight": args.class_weight,
    }
    _emit(args, result, json.dumps(result, indent=2, sort_keys=True))


def _score_corpus(args: argparse.Namespace) -> list[dict]:
    artifact = model_mod.ModelArtifact.load(args.model)
    config = _textprep(args)
    corpus = _load_corpus(args)
    out = []
    for course in corpus.courses:
        for thread in course.threads:
            truncated = corpus_mod.truncate_at_first_intervention(thread)
            if not corpus_mod.is_observable(truncated):
                continue
            fv = feat_mod.assemble(truncated, artifact.vocabulary,
                                   artifact.scaler, artifact.flags, config)
            pred = model_mod.predict(artifact.params, fv)
            out.append({
                "course_id": course.id,
                "thread_id": thread.id,
                "probability": pred.probability,
                "label": pred.label,
            })
    return out


def cmd_predict(args: argparse.Namespace) -> None:
    scored = _score_corpus(args)
    rows = [[s["course_id"], s["thread_id"], f"{s['probability']:.4f}",
             "yes" if s["label"] else "no"] for s in scored]
    table = _table(["course", "thread", "probability", "intervene"], rows)
    _emit(args, {"threads": scored}, table)


def cmd_rank(args: argparse.Namespace) -> None:
    scored = _score_corpus(args)
    scored.sort(key=lambda s: (-s["probability"], s["course_id"], s["thread_id"]))
    rows = [[str(i + 1), s["course_id"], s["thread_id"],
             f"{s['probability']:.4f}"] for i, s in enumerate(scored)]
    table = _table(["rank", "course", "thread", "probability"], rows)
    _emit(args, {"threads": scored}, table)


def _summary_table(report: eval_mod.ExperimentReport,
                   with_baseline: bool) -> str:
    headers = ["course", "threads", "ratio", "W", "prec", "rec", "f1"]
    if with_baseline:
        headers.append("baseline_f1")
    pad = [""] if with_baseline else []
    rows = []
    for c in report.courses:
        if c.skipped:
            rows.append([c.course_id, str(c.n_threads),
                         f"{c.intervention_ratio:.2f}", "-", "-", "-",
                         f"({c.skipped})"] + pad)
            continue
        row = [c.course_id, str(c.n_threads), f"{c.intervention_ratio:.2f}",
               f"{c.class_weight:.2f}", _pct(c.metrics.precision),
               _pct(c.metrics.recall), _pct(c.metrics.f1)]
        if with_baseline:
            row.append(_pct(c.baseline.f1) if c.baseline else "")
        rows.append(row)
    rows.append(["average", "", "", "", _pct(report.average["precision"]),
                 _pct(report.average["recall"]), _pct(report.average["f1"])] + pad)
    rows.append(["weighted macro", "", "", "", _pct(report.macro["precision"]),
                 _pct(report.macro["recall"]), _pct(report.macro["f1"])] + pad)
    return _table(headers, rows)


def cmd_cv(args: argparse.Namespace) -> None:
    prepared = _prepare(args)
    report = eval_mod.cv_all_courses(prepared, k=args.k, flags=_flags(args),
                                     ecfg=_eval_config(args))
    table = _summary_table(report, with_baseline=False)
    _emit(args, report.to_dict(), table)


def cmd_loocv(args: argparse.Namespace) -> None:
    prepared = _prepare(args)
    report = eval_mod.loo_course_cv(prepared, flags=_flags(args),
                                    ecfg=_eval_config(args))
    table = _summary_table(report, with_baseline=True)
    _emit(args, report.to_dict(), table)


def cmd_ablate(args: argparse.Namespace) -> None:
    prepared = _prepare(args)
    study = eval_mod.feature_study(prepared, ecfg=_eval_config(args))
    result = {"rows": [
        {"row": entry["row"], "name": entry["name"],
         "features": entry["features"], "report": entry["report"].to_dict()}
        for entry in study
    ]}
    rows = []
    for entry in study:
        macro = entry["report"].macro
        rows.append([str(entry["row"]), entry["name"], _pct(macro["precision"]),
                     _pct(macro["recall"]), _pct(macro["f1"])])
    table = _table(["row", "features", "prec", "rec", "f1"], rows)
    _emit(args, result, table)


def cmd_baseline(args: argparse.Namespace) -> None:
    prepared = _prepare(args)
    by_course = prepared.rows_by_course()
    courses = []
    for cid in sorted(by_course):
        gold = prepared.labels[by_course[cid]].tolist()
        metrics = eval_mod.all_positive_baseline(gold)
        courses.append({"course_id": cid, "n_threads": len(gold),
                        "intervention_ratio": sum(gold) / len(gold),
                        **metrics.to_dict()})
    overall = eval_mod.all_positive_baseline(prepared.labels.tolist())
    result = {"courses": courses, "overall": overall.to_dict()}
    rows = [[c["course_id"], str(c["n_threads"]),
             f"{c['intervention_ratio']:.2f}", _pct(c["precision"]),
             _pct(c["recall"]), _pct(c["f1"])] for c in courses]
    rows.append(["overall", str(len(prepared.threads)),
                 f"{prepared.labels.mean():.2f}", _pct(overall.precision),
                 _pct(overall.recall), _pct(overall.f1)])
    table = _table(["course", "threads", "ratio", "prec", "rec", "f1"], rows)
    _emit(args, result, table)


def cmd_tune(args: argparse.Namespace) -> None:
    prepared = _prepare(args)
    flags = _flags(args)
    labels = prepared.labels
    fit_idx, val_idx = eval_mod.stratified_split(labels.tolist(), 0.25,
                                                 f"{args.seed}:tune")
    X_fit, X_val, _ = prepared.matrix.fold_matrices(fit_idx, val_idx, flags)
    cfg = model_mod.TrainConfig(lam=args.lam, seed=args.seed)
    weight, f1 = model_mod.tune_class_weight(
        X_fit, labels[fit_idx], X_val, labels[val_idx], cfg,
        w_min=args.w_min, w_max=args.w_max)
    result = {"class_weight": weight, "validation_f1": f1,
              "n_fit": len(fit_idx), "n_validation": len(val_idx)}
    table = _table(["class_weight", "validation_f1"],
                   [[f"{weight:.4f}", _pct(f1)]])
    _emit(args, result, table)


def cmd_kappa(args: argparse.Namespace) -> None:
    if not args.annotations:
        raise ValueError("--annotations is required for kappa")
    annotations = eval_mod.load_annotations(args.annotations)
    report = eval_mod.pairwise_kappa(annotations, tag=args.tag)
    result = report.to_dict()
    rows = [[a, b, "undefined" if v is None else f"{v:.4f}"]
            for a, b, v in report.pairs]
    rows.append(["average", "",
                 "undefined" if report.average is None
                 else f"{report.average:.4f}"])
    table = _table(["annotator_a", "annotator_b", "kappa"], rows)
    _emit(args, result, table)


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forumtriage",
        description="Predict which MOOC forum threads need staff intervention.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--corpus", type=Path, help="corpus JSONL file")
    common.add_argument("--config", type=Path,
                        help="text-preparation config JSON (default: shipped)")
    common.add_argument("--features", default=",".join(feat_mod.FEATURE_GROUPS),
                        help="comma-separated feature groups")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="L1 strength (default: 1/n_train)")
    common.add_argument("--w-min", type=float, default=2.0 ** -4)
    common.add_argument("--w-max", type=float, default=2.0 ** 8)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", type=Path, help="write output here instead of stdout")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--fixed-clock", action="store_true",
                        help="emit a constant timestamp for reproducible reports")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", type=Path, help="corpus spec JSON (default: built-in)")
    p.add_argument("--seed", type=int, default=None,
                   help="generation seed (default: 42, or the spec file's)")
    p.add_argument("--out", type=Path, required=True,
                   help="corpus JSONL file to write")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", parents=[common], help="corpus demographics")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=[common], help="fit and save a model")
    p.add_argument("--class-weight", type=float, default=1.0)
    p.add_argument("--model-out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score threads")
    p.add_argument("--model", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rank", parents=[common],
                       help="threads by descending intervention probability")
    p.add_argument("--model", type=Path, required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("cv", parents=[common], help="per-course k-fold CV")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("loocv", parents=[common], help="leave-one-course-out CV")
    p.add_argument("--oversample-to", type=float, default=None,
                   help="oversample training courses to this density")
    p.set_defaults(func=cmd_loocv)

    p = sub.add_parser("ablate", parents=[common],
                       help="additive/ablative feature study (13 rows)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("baseline", parents=[common],
                       help="all-positive baseline per course")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("tune", parents=[common], help="tune the class weight W")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("kappa", parents=[common],
                       help="pairwise inter-annotator agreement")
    p.add_argument("--annotations", type=Path)
    p.add_argument("--tag", default=None, help="restrict to items with this tag")
    p.set_defaults(func=cmd_kappa)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CorpusFormatError, ValueError, KeyError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
