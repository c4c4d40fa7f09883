"""Command-line surface of the toolkit.

Subcommands
-----------
eval-psp         prosody-prediction benchmark over a corpus split
ablation         12-cell grid: shot counts x knowledge variants
gen-context      generate a dialogue-context utterance per sample
eval-joint       joint response/feature evaluation with ground-truth prefix
tools            one-shot wrappers: parse, render, strip, dvalue, encode,
                 split, export-finetune

Runs are configured by a JSON file (``--config``) whose keys are
documented in the README; command-line flags override file values.  Every
experiment command echoes its fully resolved configuration and a version
stamp into the output directory, and run artifacts contain no timestamps,
so identical configurations against the mock backend produce
byte-identical reports.

Model-quality failures are data, not process failures: experiment
commands exit 0 whenever configuration and IO succeed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .codec import JointReport, scatter_rows
from .corpus import (
    Corpus,
    SplitSpec,
    attach_contexts,
    corpus_reference_f0,
    fixture_contexts,
    load_corpus,
    load_fixture_corpus,
    split_corpus,
    split_ids,
    split_manifest,
    with_features,
)
from .features import ReferenceF0, hz_to_d
from .harness import (
    CachingBackend,
    JointSplitResult,
    run_ablation,
    run_gen_context,
    run_joint_eval,
    run_psp_eval,
)
from .llm import Backend, BackendConfig, HttpBackend, MockBackend
from .markup import AnnotatedSentence, ProsodyLevel, parse_with_diagnostics, render_annotated, strip_markup
from .prompting import DemoSelection, KnowledgeConfig, Prompt, build_context_prompt, export_finetune_records, write_jsonl
from .scoring import CorpusScore, LevelScore

DEFAULT_CONFIG: dict[str, Any] = {
    "corpus": "fixture",
    "split": {"ratios": "8:1:1", "seed": 7},
    "demos": {"strategy": "random", "k": 4, "seed": 11, "repeat_count": 1, "curated_ids": []},
    "knowledge": {"pw": True, "pph": True, "iph": True},
    "eval": {"aggregation": "micro", "split": "test"},
    "backend": {
        "kind": "mock",
        "model_name": "default",
        "base_url": "http://localhost:8000/v1",
        "temperature": 0.0,
        "max_output_tokens": 1024,
        "request_timeout": 30.0,
        "max_retries": 3,
        "backoff_base": 0.5,
        "api_key_env": "LLM_API_KEY",
        "mock_fixtures": None,
        "mock_echo": True,
    },
    "ablation": {"knowledge_k": 16},
    "joint": {"splits": ["train", "test"], "prefix_mode": "assistant_prefix"},
    "reference_f0": {"method": "geometric_mean_voiced", "f0": None},
    "contexts": None,
    "parallelism": 4,
    "cache_dir": None,
}


def _deep_merge(base: dict[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        cfg = _deep_merge(cfg, json.loads(Path(args.config).read_text(encoding="utf-8")))
    flag_map: dict[str, tuple[str, ...]] = {
        "corpus": ("corpus",),
        "seed": ("split", "seed"),
        "parallelism": ("parallelism",),
        "backend": ("backend", "kind"),
        "mock_fixtures": ("backend", "mock_fixtures"),
        "contexts": ("contexts",),
        "cache_dir": ("cache_dir",),
    }
    for flag, path in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            node = cfg
            for key in path[:-1]:
                node = node[key]
            node[path[-1]] = value
    if cfg["backend"]["kind"] == "real":
        cfg["backend"]["kind"] = "http"
    return cfg


def _split_spec(cfg: Mapping[str, Any]) -> SplitSpec:
    split = cfg["split"]
    ratios = split["ratios"]
    if isinstance(ratios, str):
        return SplitSpec.from_string(ratios, seed=int(split["seed"]))
    return SplitSpec(ratios=tuple(ratios), seed=int(split["seed"]))


def _demo_selection(cfg: Mapping[str, Any]) -> DemoSelection:
    demos = cfg["demos"]
    return DemoSelection(
        k=int(demos["k"]),
        strategy=demos["strategy"],
        seed=int(demos["seed"]),
        repeat_count=int(demos["repeat_count"]),
        curated_ids=tuple(demos.get("curated_ids", [])),
    )


def _knowledge(cfg: Mapping[str, Any]) -> KnowledgeConfig:
    k = cfg["knowledge"]
    return KnowledgeConfig(include_pw=bool(k["pw"]), include_pph=bool(k["pph"]), include_iph=bool(k["iph"]))


def _load_corpus_arg(cfg: Mapping[str, Any]) -> Corpus:
    source = cfg["corpus"]
    return load_fixture_corpus() if source == "fixture" else load_corpus(source)


def _reference(cfg: Mapping[str, Any], corpus: Corpus) -> ReferenceF0:
    ref_cfg = cfg["reference_f0"]
    return corpus_reference_f0(corpus, method=ref_cfg["method"], f0=ref_cfg.get("f0"))


def _contexts_for(cfg: Mapping[str, Any]) -> dict[str, str]:
    if cfg.get("contexts"):
        return json.loads(Path(cfg["contexts"]).read_text(encoding="utf-8"))
    if cfg["corpus"] == "fixture":
        return fixture_contexts()
    raise ValueError("no contexts available: pass --contexts or use the fixture corpus")


def _make_backend(cfg: Mapping[str, Any], echo_table: Mapping[str, str] | None) -> Backend:
    b = cfg["backend"]
    if b["kind"] == "http":
        return HttpBackend(
            BackendConfig(
                base_url=b["base_url"],
                model_name=b["model_name"],
                temperature=float(b["temperature"]),
                max_output_tokens=int(b["max_output_tokens"]),
                request_timeout=float(b["request_timeout"]),
                max_retries=int(b["max_retries"]),
                backoff_base=float(b["backoff_base"]),
                api_key_env=b["api_key_env"],
            )
        )
    if b["kind"] != "mock":
        raise ValueError(f"unknown backend kind {b['kind']!r}")
    fixtures: dict[str, str] = {}
    if b.get("mock_fixtures"):
        fixtures.update(json.loads(Path(b["mock_fixtures"]).read_text(encoding="utf-8")))
    if b.get("mock_echo", True) and echo_table is not None:
        table = dict(echo_table)

        def fallback(prompt: Prompt) -> str:
            key = prompt.messages[-1].text
            if key not in table:
                from .llm import FixtureMiss

                raise FixtureMiss(f"echo table has no entry for {key!r}")
            return table[key]

        return MockBackend(fixtures, fallback)
    return MockBackend(fixtures, "fail")


def _wrap_cache(backend: Backend, cfg: Mapping[str, Any]) -> Backend:
    if cfg.get("cache_dir"):
        return CachingBackend(backend, cfg["backend"]["model_name"], cfg["cache_dir"])
    return backend


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _echo_resolved(out_dir: Path, command: str, cfg: Mapping[str, Any]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "resolved_config.json", {"version": __version__, "command": command, "config": cfg})


def _pct(x: float) -> float:
    return round(100.0 * x, 2)


def _level_block(ls: LevelScore) -> dict[str, Any]:
    return {
        "tp": ls.tp,
        "fp": ls.fp,
        "fn": ls.fn,
        "precision": _pct(ls.precision),
        "recall": _pct(ls.recall),
        "f": _pct(ls.f_score),
    }


def _score_block(cs: CorpusScore) -> dict[str, Any]:
    return {
        "pw": _level_block(cs.scores.pw),
        "pph": _level_block(cs.scores.pph),
        "iph": _level_block(cs.scores.iph),
        "average_f": _pct(cs.scores.average_f),
        "mean_fidelity": _pct(cs.mean_fidelity),
        "unparsable": cs.unparsable,
        "n_samples": cs.n_samples,
    }


def _format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _fscore_row(model: str, variation: str, cs: CorpusScore) -> list[str]:
    return [
        model,
        variation,
        f"{_pct(cs.scores.pw.f_score):.2f}",
        f"{_pct(cs.scores.pph.f_score):.2f}",
        f"{_pct(cs.scores.iph.f_score):.2f}",
        f"{_pct(cs.scores.average_f):.2f}",
    ]


_TABLE_HEADERS = ["Model", "Variation", "PW #1", "PPH #2", "IPH #3", "Average"]


# --- experiment commands ------------------------------------------------------


def cmd_eval_psp(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    corpus = _load_corpus_arg(cfg)
    spec = _split_spec(cfg)
    demo_sel = _demo_selection(cfg)
    knowledge = _knowledge(cfg)
    echo_table = {s.text: s.markup for s in corpus.samples}
    backend = _wrap_cache(_make_backend(cfg, echo_table), cfg)
    outcome = run_psp_eval(
        corpus,
        spec,
        demo_sel,
        knowledge,
        backend,
        parallelism=int(cfg["parallelism"]),
        eval_split=cfg["eval"]["split"],
        aggregation=cfg["eval"]["aggregation"],
    )
    _echo_resolved(out_dir, "eval-psp", cfg)

    model = cfg["backend"]["model_name"] if cfg["backend"]["kind"] == "http" else "mock"
    runs_json = []
    rows = []
    for i, run in enumerate(outcome.runs):
        runs_json.append({"run": i, "cumulative": _score_block(run.cumulative), "exact": _score_block(run.exact)})
        rows.append(_fscore_row(model, f"run-{i} cumulative", run.cumulative))
        rows.append(_fscore_row(model, f"run-{i} exact", run.exact))

    def mean_of(key: str) -> dict[str, Any]:
        blocks = [r[key] for r in runs_json]
        per_level = {
            lvl: {"f": round(sum(b[lvl]["f"] for b in blocks) / len(blocks), 2)}
            for lvl in ("pw", "pph", "iph")
        }
        return {
            **per_level,
            "average_f": round(sum(b["average_f"] for b in blocks) / len(blocks), 2),
            "mean_fidelity": round(sum(b["mean_fidelity"] for b in blocks) / len(blocks), 2),
            "unparsable": sum(b["unparsable"] for b in blocks),
        }

    mean = {"cumulative": mean_of("cumulative"), "exact": mean_of("exact")}
    for mode in ("cumulative", "exact"):
        rows.append(
            [
                model,
                f"mean-of-{len(outcome.runs)} {mode}",
                f"{mean[mode]['pw']['f']:.2f}",
                f"{mean[mode]['pph']['f']:.2f}",
                f"{mean[mode]['iph']['f']:.2f}",
                f"{mean[mode]['average_f']:.2f}",
            ]
        )
    report = {
        "aggregation": outcome.aggregation,
        "eval_split": cfg["eval"]["split"],
        "n_samples": len(outcome.sample_ids),
        "prompt_message_count": outcome.prompt_message_count,
        "runs": runs_json,
        "mean": mean,
    }
    _write_json(out_dir / "report.json", report)
    (out_dir / "report.txt").write_text(_format_table(_TABLE_HEADERS, rows), encoding="utf-8")
    with open(out_dir / "transcript.jsonl", "w", encoding="utf-8") as fh:
        for i, run in enumerate(outcome.runs):
            for sample_id, ref, pred in zip(outcome.sample_ids, outcome.references, run.predictions):
                fh.write(
                    json.dumps(
                        {"run": i, "id": sample_id, "reference": ref, "prediction": pred},
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )
    print(f"eval-psp: {len(outcome.runs)} run(s) over {len(outcome.sample_ids)} samples -> {out_dir}")
    return 0


def cmd_ablation(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    corpus = _load_corpus_arg(cfg)
    spec = _split_spec(cfg)
    echo_table = {s.text: s.markup for s in corpus.samples}
    backend = _wrap_cache(_make_backend(cfg, echo_table), cfg)
    model = cfg["backend"]["model_name"] if cfg["backend"]["kind"] == "http" else "mock"
    outcome = run_ablation(
        corpus,
        spec,
        demo_seed=int(cfg["demos"]["seed"]),
        backend=backend,
        model_name=cfg["backend"]["model_name"],
        parallelism=int(cfg["parallelism"]),
        eval_split=cfg["eval"]["split"],
        aggregation=cfg["eval"]["aggregation"],
        knowledge_k=int(cfg["ablation"]["knowledge_k"]),
    )
    _echo_resolved(out_dir, "ablation", cfg)
    cells_json = []
    rows = []
    for cell in outcome.cells:
        cells_json.append(
            {
                "label": cell.label,
                "k": cell.k,
                "knowledge": {
                    "pw": cell.knowledge.include_pw,
                    "pph": cell.knowledge.include_pph,
                    "iph": cell.knowledge.include_iph,
                },
                "prompt_message_count": cell.prompt_message_count,
                "cumulative": _score_block(cell.cumulative),
                "exact": _score_block(cell.exact),
            }
        )
        rows.append(_fscore_row(model, cell.label, cell.cumulative))
    _write_json(out_dir / "grid.json", {"cells": cells_json, "n_cells": len(cells_json)})
    (out_dir / "grid.txt").write_text(_format_table(_TABLE_HEADERS, rows), encoding="utf-8")
    print(f"ablation: {len(outcome.cells)} cells, {outcome.backend_requests} backend requests -> {out_dir}")
    return 0


def cmd_gen_context(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    corpus = _load_corpus_arg(cfg)
    echo_table = None
    if cfg["backend"]["kind"] == "mock" and cfg["backend"].get("mock_echo", True):
        known = _contexts_for(cfg)
        echo_table = {
            build_context_prompt(s.text).messages[-1].text: f'A: "{known[s.id]}"'
            for s in corpus.samples
            if s.id in known
        }
    backend = _make_backend(cfg, None) if echo_table is None else _make_backend(cfg, echo_table)
    outcome = run_gen_context(
        corpus,
        backend,
        model_name=cfg["backend"]["model_name"],
        parallelism=int(cfg["parallelism"]),
        cache_dir=cfg.get("cache_dir"),
    )
    _echo_resolved(out_dir, "gen-context", cfg)
    _write_json(out_dir / "contexts.json", outcome.contexts)
    _write_json(
        out_dir / "gen_report.json",
        {"n_samples": len(corpus), "generated": len(outcome.contexts), "failures": outcome.failures},
    )
    print(
        f"gen-context: {len(outcome.contexts)}/{len(corpus)} generated, "
        f"{outcome.backend_requests} backend requests -> {out_dir}"
    )
    return 0


def _joint_split_json(result: JointSplitResult) -> dict[str, Any]:
    if result.report is None:
        return {"n_evaluated": 0, "skipped": result.skipped}
    r: JointReport = result.report
    return {
        "n_evaluated": result.n_evaluated,
        "skipped": result.skipped,
        "parsable_rate": _pct(r.parsable_rate),
        "matched_char_rate": _pct(r.matched_char_rate),
        "matched_pinyin_rate": _pct(r.matched_pinyin_rate),
        "matched_prosody_rate": _pct(r.matched_prosody_rate),
        "counts": {
            "samples": r.n_samples,
            "parsable": r.n_parsable,
            "ref_chars": r.total_ref_chars,
            "matched_chars": r.total_matched_chars,
            "matched_pinyin": r.total_matched_pinyin,
            "matched_prosody": r.total_matched_prosody,
        },
        "numeric_stats": {
            name: {
                "count": st.count,
                "rmse": round(st.rmse, 4) if st.rmse is not None else None,
                "pearson_r": round(st.pearson_r, 4) if st.pearson_r is not None else None,
            }
            for name, st in r.numeric_stats.items()
        },
    }


def cmd_eval_joint(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    corpus = _load_corpus_arg(cfg)
    contexts = _contexts_for(cfg)
    corpus = attach_contexts(corpus, contexts)
    corpus = with_features(corpus, _reference(cfg, corpus))
    echo_table = {
        s.context_utterance: (s.text, s.response_features)
        for s in corpus.samples
        if s.context_utterance is not None and s.response_features is not None
    }
    from .codec import encode_target

    echo_strings = {
        ctx: encode_target(text, feats)[len(text) :] for ctx, (text, feats) in echo_table.items()
    }
    backend = _wrap_cache(_make_backend(cfg, echo_strings), cfg)
    results = run_joint_eval(
        corpus,
        _split_spec(cfg),
        backend,
        splits=tuple(cfg["joint"]["splits"]),
        parallelism=int(cfg["parallelism"]),
        prefix_mode=cfg["joint"]["prefix_mode"],
    )
    _echo_resolved(out_dir, "eval-joint", cfg)
    report = {
        "prefix_mode": cfg["joint"]["prefix_mode"],
        "splits": {name: _joint_split_json(res) for name, res in results.items()},
    }
    _write_json(out_dir / "joint_report.json", report)
    headers = ["Split", "Parsable", "Matched Chars", "Matched Pinyin", "Matched Prosody"]
    rows = []
    for name, res in results.items():
        if res.report is None:
            rows.append([name, "-", "-", "-", "-"])
        else:
            rows.append(
                [
                    name,
                    f"{_pct(res.report.parsable_rate):.2f}",
                    f"{_pct(res.report.matched_char_rate):.2f}",
                    f"{_pct(res.report.matched_pinyin_rate):.2f}",
                    f"{_pct(res.report.matched_prosody_rate):.2f}",
                ]
            )
    (out_dir / "joint_report.txt").write_text(
        f"prefix_mode: {cfg['joint']['prefix_mode']}\n" + _format_table(headers, rows),
        encoding="utf-8",
    )
    for name, res in results.items():
        if res.report is None:
            continue
        with open(out_dir / f"scatter_{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("field,pred,ref\n")
            for field, pred, ref in scatter_rows(res.report):
                fh.write(f"{field},{pred!r},{ref!r}\n")
    print(f"eval-joint: splits {list(results)} -> {out_dir}")
    return 0


# --- one-shot tools -----------------------------------------------------------


def cmd_tools_parse(args: argparse.Namespace) -> int:
    sentence, diag = parse_with_diagnostics(args.text, args.policy)
    print(
        json.dumps(
            {
                "chars": list(sentence.chars),
                "boundaries": [int(b) for b in sentence.boundaries],
                "sentence_end_markers": diag.sentence_end_markers,
                "warnings": diag.warnings,
            },
            ensure_ascii=False,
        )
    )
    return 0


def cmd_tools_render(args: argparse.Namespace) -> int:
    payload = json.loads(args.json if args.json else sys.stdin.read())
    sentence = AnnotatedSentence(
        tuple(payload["chars"]), tuple(ProsodyLevel(b) for b in payload["boundaries"])
    )
    print(render_annotated(sentence))
    return 0


def cmd_tools_strip(args: argparse.Namespace) -> int:
    print(strip_markup(args.text))
    return 0


def cmd_tools_dvalue(args: argparse.Namespace) -> int:
    print(f"{hz_to_d(args.f, ReferenceF0(args.f0)):.2f}")
    return 0


def cmd_tools_encode(args: argparse.Namespace) -> int:
    corpus = load_fixture_corpus() if args.corpus == "fixture" else load_corpus(args.corpus)
    if args.f0 is not None:
        ref = ReferenceF0(args.f0)
    else:
        ref = corpus_reference_f0(corpus)
    corpus = with_features(corpus, ref)
    sample = corpus.by_id().get(args.id)
    if sample is None:
        raise KeyError(f"sample id {args.id!r} not in corpus")
    if sample.response_features is None:
        raise ValueError(f"sample {args.id} is not feature-ready")
    from .codec import encode_target

    print(encode_target(sample.text, sample.response_features))
    return 0


def cmd_tools_split(args: argparse.Namespace) -> int:
    spec = SplitSpec.from_string(args.ratios, seed=args.seed)
    if args.n is not None:
        ids = [f"{i:06d}" for i in range(args.n)]
    else:
        corpus = load_fixture_corpus() if args.corpus == "fixture" else load_corpus(args.corpus)
        ids = corpus.ids()
    train, valid, test = split_ids(ids, spec)
    manifest = split_manifest(spec, train, valid, test)
    text = json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"split: {len(train)}/{len(valid)}/{len(test)} -> {args.out}")
    else:
        print(text)
    return 0


def cmd_tools_export_finetune(args: argparse.Namespace) -> int:
    corpus = load_fixture_corpus() if args.corpus == "fixture" else load_corpus(args.corpus)
    if args.task == "joint":
        contexts = (
            json.loads(Path(args.contexts).read_text(encoding="utf-8"))
            if args.contexts
            else fixture_contexts()
            if args.corpus == "fixture"
            else None
        )
        if contexts is None:
            raise ValueError("joint export requires --contexts for a non-fixture corpus")
        corpus = attach_contexts(corpus, contexts)
        ref = ReferenceF0(args.f0) if args.f0 is not None else corpus_reference_f0(corpus)
        corpus = with_features(corpus, ref)
    spec = SplitSpec.from_string(args.ratios, seed=args.seed)
    if args.split == "all":
        samples = list(corpus.samples)
    else:
        train, valid, test = split_corpus(corpus, spec)
        samples = {"train": train, "valid": valid, "test": test}[args.split]
    records = export_finetune_records(samples, args.task)
    if args.out:
        count = write_jsonl(records, args.out)
        print(f"export-finetune: {count} {args.task} records -> {args.out}")
    else:
        for record in records:
            print(json.dumps(record, ensure_ascii=False))
    return 0


# --- parser -------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, with_out: bool = True) -> None:
    parser.add_argument("--config", help="JSON config file")
    if with_out:
        parser.add_argument("--out", required=True, help="output directory for reports")
    parser.add_argument("--corpus", help="corpus directory, or 'fixture' for the bundled corpus")
    parser.add_argument("--backend", choices=["mock", "http", "real"], help="backend kind")
    parser.add_argument("--seed", type=int, help="split seed override")
    parser.add_argument("--parallelism", type=int, help="max in-flight requests")
    parser.add_argument("--mock-fixtures", dest="mock_fixtures", help="JSON file: prompt digest -> canned text")
    parser.add_argument("--contexts", help="JSON file: sample id -> context utterance")
    parser.add_argument("--cache-dir", dest="cache_dir", help="completion cache directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosokit",
        description="Chinese TTS front-end toolkit: prosodic markup, scoring, prompting, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"prosokit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-psp", help="prosody-prediction benchmark")
    _add_common(p)
    p.set_defaults(func=cmd_eval_psp)

    p = sub.add_parser("ablation", help="shot-count x knowledge ablation grid")
    _add_common(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("gen-context", help="generate dialogue-context utterances")
    _add_common(p)
    p.set_defaults(func=cmd_gen_context)

    p = sub.add_parser("eval-joint", help="joint response/feature evaluation")
    _add_common(p)
    p.set_defaults(func=cmd_eval_joint)

    tools = sub.add_parser("tools", help="one-shot utilities")
    tsub = tools.add_subparsers(dest="tool", required=True)

    p = tsub.add_parser("parse", help="parse markup to JSON")
    p.add_argument("text")
    p.add_argument("--policy", choices=["strict", "lenient"], default="strict")
    p.set_defaults(func=cmd_tools_parse)

    p = tsub.add_parser("render", help="render JSON {chars, boundaries} to markup")
    p.add_argument("--json", help="inline JSON (default: read stdin)")
    p.set_defaults(func=cmd_tools_render)

    p = tsub.add_parser("strip", help="remove markers from text")
    p.add_argument("text")
    p.set_defaults(func=cmd_tools_strip)

    p = tsub.add_parser("dvalue", help="D-value of a frequency")
    p.add_argument("--f", type=float, required=True, help="frequency in Hz")
    p.add_argument("--f0", type=float, required=True, help="reference frequency in Hz")
    p.set_defaults(func=cmd_tools_dvalue)

    p = tsub.add_parser("encode", help="encode a sample's feature target")
    p.add_argument("--corpus", default="fixture")
    p.add_argument("--id", required=True)
    p.add_argument("--f0", type=float, help="fixed reference (default: corpus geometric mean)")
    p.set_defaults(func=cmd_tools_encode)

    p = tsub.add_parser("split", help="deterministic id split manifest")
    p.add_argument("--n", type=int, help="synthetic id count (000000..)")
    p.add_argument("--corpus", default="fixture")
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="manifest file (default: stdout)")
    p.set_defaults(func=cmd_tools_split)

    p = tsub.add_parser("export-finetune", help="JSONL fine-tuning records")
    p.add_argument("--corpus", default="fixture")
    p.add_argument("--task", choices=["psp", "joint"], required=True)
    p.add_argument("--split", choices=["train", "valid", "test", "all"], default="train")
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--contexts", help="JSON file: sample id -> context utterance")
    p.add_argument("--f0", type=float)
    p.add_argument("--out", help="output JSONL file (default: stdout)")
    p.set_defaults(func=cmd_tools_export_finetune)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # config/IO failures; model failures never raise here
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
