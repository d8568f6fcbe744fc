"""Pipeline orchestration as subcommands over the documented JSON Lines
formats: ingest, extract, generate, select, stats, eval, serve, and the
chained pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluation, selection, service
from .extraction import (
    ExtractorConfig,
    RelationType,
    ScorerError,
    classify_binary,
    classify_relations,
)
from .generation import (
    FilterConfig,
    GenerationError,
    GeneratorConfig,
    build_prompt,
    filter_description,
    generate_remote,
    generate_template,
    load_exemplar_bank,
    parse_description,
)
from .textnorm import normalize_concept

log = logging.getLogger("accord")

DATA_DIR = Path(__file__).parent / "data"


def _resolve(args: argparse.Namespace, key: str, default):
    """Flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    config = getattr(args, "_config", None) or {}
    if key in config:
        return config[key]
    return default


def _parse_relations(spec: str) -> tuple[RelationType, ...]:
    return tuple(
        RelationType.from_wire(part.strip())
        for part in spec.split(",")
        if part.strip()
    )


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------------------
# Stages.
# ---------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    min_score = _resolve(args, "min_score", 1.0)
    window_sizes = _parse_window_sizes(_resolve(args, "windows", "1,2"))
    records = corpus_mod.load_corpus(args.corpus)
    lexicon = corpus_mod.load_lexicon(args.lexicon, min_score)
    candidates = []
    provenance = []
    for record in records:
        for candidate in corpus_mod.build_candidate_contexts(
            record, lexicon, window_sizes
        ):
            candidates.append(candidate)
            provenance.append(
                service.Provenance(
                    context_id=candidate.context_id,
                    text=candidate.text,
                    paper_id=record.paper_id,
                    title=record.title,
                    url=record.url,
                )
            )
    corpus_mod.write_candidates(args.out, candidates)
    if args.provenance:
        service.write_provenance(args.provenance, provenance)
    log.info(
        "ingested %d papers -> %d candidate contexts", len(records), len(candidates)
    )
    return 0


def _parse_window_sizes(spec) -> tuple[int, ...]:
    if isinstance(spec, (list, tuple)):
        return tuple(int(s) for s in spec)
    return tuple(int(part) for part in str(spec).split(",") if part.strip())


def _extractor_config(args: argparse.Namespace) -> ExtractorConfig:
    return ExtractorConfig(
        backend=_resolve(args, "backend", "rule"),
        binary_threshold=_resolve(args, "binary_threshold", 0.5),
        relation_threshold=_resolve(args, "relation_threshold", 0.5),
        endpoint=_resolve(args, "endpoint", None),
        max_in_flight=_resolve(args, "jobs", None) or (os.cpu_count() or 4),
    )


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _extractor_config(args)
    candidates = corpus_mod.read_candidates(args.candidates)
    paper_ids = {c.context_id: c.paper_id for c in candidates}
    rows = []
    failures = 0
    for candidate in candidates:
        seen_concepts = set()
        for mention in candidate.mentions:
            if mention.concept in seen_concepts:
                continue
            seen_concepts.add(mention.concept)
            demarcated = corpus_mod.demarcate(candidate, mention)
            try:
                binary = classify_binary(demarcated, cfg)
                if not binary.label:
                    continue
                relations = classify_relations(demarcated, cfg)
            except ScorerError as exc:
                failures += 1
                log.warning("scorer failure on %s: %s", exc.context_id, exc)
                continue
            rows.append(
                {
                    "context_id": candidate.context_id,
                    "paper_id": paper_ids[candidate.context_id],
                    "target": mention.concept,
                    "text_with_markers": demarcated.text_with_markers,
                    "binary_score": binary.score,
                    "scores": {r.value: s for r, s in relations.scores.items()},
                    "predicted": sorted(r.value for r in relations.predicted),
                }
            )
    with open(args.out, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    log.info(
        "extracted %d positive (context, target) pairs from %d candidates"
        " (%d scorer failures)",
        len(rows),
        len(candidates),
        failures,
    )
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    backend = _resolve(args, "gen_backend", "template")
    bank_path = _resolve(args, "bank", None)
    bank = load_exemplar_bank(bank_path)
    filter_cfg = FilterConfig(
        allow_head_noun_reference=bool(_resolve(args, "relaxed_reference", False))
    )
    generator_cfg = GeneratorConfig(endpoint=_resolve(args, "gen_endpoint", None))

    records = []
    rejects = []
    with open(args.extractions, "r", encoding="utf-8") as handle:
        extraction_rows = [json.loads(line) for line in handle if line.strip()]
    for row in extraction_rows:
        demarcated = corpus_mod.DemarcatedContext(
            context_id=row["context_id"],
            target_concept=row["target"],
            text_with_markers=row["text_with_markers"],
        )
        plain = corpus_mod.strip_markers(row["text_with_markers"])
        pseudo_context = corpus_mod.CandidateContext(
            context_id=row["context_id"],
            paper_id=row["paper_id"],
            text=plain,
            window_size=1,
        )
        for relation_name in row["predicted"]:
            relation = RelationType.from_wire(relation_name)
            try:
                if backend == "template":
                    generation = generate_template(demarcated, relation)
                else:
                    prompt = build_prompt(demarcated, relation, bank)
                    generation = generate_remote(prompt, generator_cfg)
                parsed = parse_description(
                    generation.text, target=normalize_concept(row["target"])
                )
            except GenerationError as exc:
                rejects.append(
                    {
                        "context_id": row["context_id"],
                        "target": row["target"],
                        "relation": relation.value,
                        "reasons": ["unparseable"],
                        "detail": str(exc),
                    }
                )
                continue
            except ValueError as exc:
                rejects.append(
                    {
                        "context_id": row["context_id"],
                        "target": row["target"],
                        "relation": relation.value,
                        "reasons": ["unparseable"],
                        "detail": str(exc),
                    }
                )
                continue
            verdict = filter_description(parsed, pseudo_context, filter_cfg)
            if not verdict.accepted:
                rejects.append(
                    {
                        "context_id": row["context_id"],
                        "target": row["target"],
                        "relation": relation.value,
                        "reasons": list(verdict.reasons),
                        "text": generation.text,
                    }
                )
                continue
            records.append(
                selection.DescriptionRecord(
                    description_id=f"{row['context_id']}|{parsed.target}|{relation.value}",
                    target=parsed.target,
                    relation=relation,
                    reference=parsed.reference,
                    elaboration=parsed.elaboration,
                    text=parsed.text,
                    context_id=row["context_id"],
                    paper_id=row["paper_id"],
                    score=row["scores"][relation.value],
                )
            )
    selection.write_records(args.out, records)
    if args.rejects:
        with open(args.rejects, "w", encoding="utf-8") as handle:
            for reject in rejects:
                handle.write(json.dumps(reject) + "\n")
    log.info(
        "generated %d descriptions (%d rejected) from %d extractions",
        len(records),
        len(rejects),
        len(extraction_rows),
    )
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    records = selection.read_records(args.descriptions)
    lexicon = corpus_mod.load_lexicon(args.lexicon, _resolve(args, "min_score", 1.0))
    cfg = selection.SelectionConfig(
        k=_resolve(args, "k", 3),
        relations=_parse_relations(_resolve(args, "relations", "compare,is-a")),
        set_size_cap=_resolve(args, "set_size_cap", None),
    )
    filtered = selection.filter_by_lexicon(records, lexicon)
    targets = []
    for record in filtered:
        name = normalize_concept(record.target)
        if name not in targets:
            targets.append(name)
    sets = []
    for target in sorted(targets):
        description_set = selection.build_set(filtered, target, cfg)
        if description_set.entries:
            sets.append(description_set)
    selection.write_sets(args.out, sets)
    if args.diversity:
        report = selection.diversity_report(filtered)
        payload = {
            f"{target}/{relation.value}": {
                "candidates": cell.candidate_count,
                "unique_references": cell.unique_reference_count,
            }
            for (target, relation), cell in sorted(
                report.cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
            )
        }
        Path(args.diversity).write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
    log.info(
        "selected %d sets from %d lexicon-filtered descriptions (%d before filter)",
        len(sets),
        len(filtered),
        len(records),
    )
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    records = evaluation.load_annotations(args.annotations)
    stats = evaluation.corpus_stats(records)
    _write_json(stats.as_dict(), args.out)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    provenance = args.provenance or str(Path(args.data).parent / "provenance.jsonl")
    index = service.build_index(args.data, provenance)
    service.serve(
        index,
        host=_resolve(args, "host", "127.0.0.1"),
        port=_resolve(args, "port", 8000),
        static_dir=_resolve(args, "ui", None),
    )
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    out = Path(args.out)
    workdir = Path(args.workdir) if args.workdir else out.parent
    workdir.mkdir(parents=True, exist_ok=True)
    args.provenance = args.provenance or str(workdir / "provenance.jsonl")

    ingest_args = argparse.Namespace(**vars(args))
    ingest_args.out = str(workdir / "candidates.jsonl")
    rc = cmd_ingest(ingest_args)
    if rc:
        return rc

    extract_args = argparse.Namespace(**vars(args))
    extract_args.candidates = ingest_args.out
    extract_args.out = str(workdir / "extractions.jsonl")
    rc = cmd_extract(extract_args)
    if rc:
        return rc

    generate_args = argparse.Namespace(**vars(args))
    generate_args.extractions = extract_args.out
    generate_args.out = str(workdir / "descriptions.jsonl")
    generate_args.rejects = getattr(args, "rejects", None)
    rc = cmd_generate(generate_args)
    if rc:
        return rc

    select_args = argparse.Namespace(**vars(args))
    select_args.descriptions = generate_args.out
    select_args.out = str(out)
    select_args.diversity = getattr(args, "diversity", None)
    return cmd_select(select_args)


# ---------------------------------------------------------------------------
# Evaluation subcommands.
# ---------------------------------------------------------------------------

def _load_labels(path: str) -> list:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValueError(f"{path}: expected a JSON list of labels")
    return payload


def cmd_eval_kappa(args: argparse.Namespace) -> int:
    report = evaluation.cohen_kappa(_load_labels(args.a), _load_labels(args.b))
    _write_json(
        {"kind": report.kind, "kappa": report.kappa, "n_items": report.n_items},
        args.out,
    )
    return 0


def cmd_eval_fleiss(args: argparse.Namespace) -> int:
    counts = json.loads(Path(args.counts).read_text(encoding="utf-8"))
    report = evaluation.fleiss_kappa(counts)
    _write_json(
        {"kind": report.kind, "kappa": report.kappa, "n_items": report.n_items},
        args.out,
    )
    return 0


def cmd_eval_f1(args: argparse.Namespace) -> int:
    report = evaluation.f1_binary(_load_labels(args.pred), _load_labels(args.gold))
    _write_json(
        {
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "n": report.n,
            "baseline_f1": report.baseline_f1,
        },
        args.out,
    )
    return 0


def cmd_eval_prefs(args: argparse.Namespace) -> int:
    ballots = evaluation.load_ballots(args.ballots)
    summary = evaluation.preference_summary(
        ballots, n_boot=args.boot, seed=_resolve(args, "seed", None)
    )
    _write_json(summary.as_dict(), args.out)
    return 0


def cmd_eval_agreement(args: argparse.Namespace) -> int:
    ballots = evaluation.load_ballots(args.ballots)
    reports = evaluation.preference_agreement(
        ballots, collapse_to_binary=args.collapse
    )
    _write_json(
        {
            concept: {"kappa": report.kappa, "n_items": report.n_items}
            for concept, report in reports.items()
        },
        args.out,
    )
    return 0


def cmd_eval_slope(args: argparse.Namespace) -> int:
    points = json.loads(Path(args.points).read_text(encoding="utf-8"))
    fit = evaluation.ols_slope([p[0] for p in points], [p[1] for p in points])
    _write_json({"slope": fit.slope, "intercept": fit.intercept}, args.out)
    return 0


def cmd_eval_validate(args: argparse.Namespace) -> int:
    records = evaluation.load_annotations(args.annotations)
    lexicon = None
    if args.lexicon:
        lexicon = corpus_mod.load_lexicon(args.lexicon, _resolve(args, "min_score", 1.0))
    payload = {}
    for record in records:
        violations = evaluation.validate_annotation(
            record, lexicon, allow_head_noun_reference=args.relaxed_reference
        )
        if violations:
            payload[record.context_id] = violations
    _write_json({"violations": payload, "records": len(records)}, args.out)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags take precedence")
    parser.add_argument("--seed", type=int, help="seed for stochastic components")
    parser.add_argument("--jobs", type=int, help="parallel remote requests")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accord", description="concept description-set pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="corpus + lexicon -> candidate contexts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--min-score", dest="min_score", type=float)
    p.add_argument("--windows", help="comma list of window sizes (default 1,2)")
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", help="also write provenance JSONL")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="classify candidates (binary + relations)")
    p.add_argument("--candidates", required=True)
    p.add_argument("--backend", choices=["rule", "remote"])
    p.add_argument("--endpoint", help="remote scorer URL")
    p.add_argument("--binary-threshold", dest="binary_threshold", type=float)
    p.add_argument("--relation-threshold", dest="relation_threshold", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="produce filtered descriptions")
    p.add_argument("--extractions", required=True)
    p.add_argument("--gen-backend", dest="gen_backend", choices=["template", "remote"])
    p.add_argument("--gen-endpoint", dest="gen_endpoint")
    p.add_argument("--bank", help="exemplar bank JSONL (default: packaged)")
    p.add_argument("--relaxed-reference", dest="relaxed_reference", action="store_true", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", help="write rejected generations here")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", help="build stratified description sets")
    p.add_argument("--descriptions", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--min-score", dest="min_score", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--relations", help="comma list, e.g. compare,is-a")
    p.add_argument("--set-size-cap", dest="set_size_cap", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--diversity", help="write diversity report here")
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("stats", help="annotation corpus statistics")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="serve description sets over HTTP")
    p.add_argument("--data", required=True, help="sets JSONL")
    p.add_argument("--provenance", help="default: provenance.jsonl beside --data")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui", help="static UI bundle directory")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("pipeline", help="ingest -> extract -> generate -> select")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--min-score", dest="min_score", type=float)
    p.add_argument("--windows")
    p.add_argument("--backend", choices=["rule", "remote"])
    p.add_argument("--endpoint")
    p.add_argument("--binary-threshold", dest="binary_threshold", type=float)
    p.add_argument("--relation-threshold", dest="relation_threshold", type=float)
    p.add_argument("--gen-backend", dest="gen_backend", choices=["template", "remote"])
    p.add_argument("--gen-endpoint", dest="gen_endpoint")
    p.add_argument("--bank")
    p.add_argument("--relaxed-reference", dest="relaxed_reference", action="store_true", default=None)
    p.add_argument("--k", type=int)
    p.add_argument("--relations")
    p.add_argument("--set-size-cap", dest="set_size_cap", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--workdir", help="directory for intermediate files")
    p.add_argument("--provenance")
    p.add_argument("--rejects")
    p.add_argument("--diversity")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="statistics operations")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)

    q = eval_sub.add_parser("kappa", help="Cohen's kappa over two label files")
    q.add_argument("--a", required=True)
    q.add_argument("--b", required=True)
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_kappa)

    q = eval_sub.add_parser("fleiss", help="Fleiss' kappa over a count matrix")
    q.add_argument("--counts", required=True)
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_fleiss)

    q = eval_sub.add_parser("f1", help="binary P/R/F1 + positive baseline")
    q.add_argument("--pred", required=True)
    q.add_argument("--gold", required=True)
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_f1)

    q = eval_sub.add_parser("prefs", help="preference summary with bootstrap CIs")
    q.add_argument("--ballots", required=True)
    q.add_argument("--boot", type=int, default=10_000)
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_prefs)

    q = eval_sub.add_parser("agreement", help="per-concept Fleiss' kappa over votes")
    q.add_argument("--ballots", required=True)
    q.add_argument("--collapse", action="store_true")
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_agreement)

    q = eval_sub.add_parser("slope", help="OLS slope/intercept over [[x, y], ...]")
    q.add_argument("--points", required=True)
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_slope)

    q = eval_sub.add_parser("validate", help="annotation criteria validation")
    q.add_argument("--annotations", required=True)
    q.add_argument("--lexicon")
    q.add_argument("--min-score", dest="min_score", type=float)
    q.add_argument("--relaxed-reference", dest="relaxed_reference", action="store_true")
    q.add_argument("--out")
    _add_common(q)
    q.set_defaults(func=cmd_eval_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            args._config = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"accord: cannot read config {config_path}: {exc}", file=sys.stderr)
            return 1
    try:
        return args.func(args)
    except (corpus_mod.CorpusError, service.IndexBuildError, ValueError, OSError) as exc:
        print(f"accord: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
