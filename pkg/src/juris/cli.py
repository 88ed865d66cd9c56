"""``juris`` command line: one subcommand per pipeline stage.

Every subcommand reads all of its inputs and finishes its computation
before anything is written; outputs are staged to temporary files and
moved into place together, so a failing command leaves no partial
artifacts.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from juris import distill
from juris.corpus import (Document, dump_corpus, dump_qrels, dump_queries, load_corpus,
                          load_qrels, load_queries, write_jsonl)
from juris.errors import DataError
from juris.experiments import (SWEEP_RATIOS, VARIANTS, Dataset, Experiment, ExperimentConfig,
                               data_efficiency_sweep, split_queries)
from juris.explain import exact_shapley, mean_baseline
from juris.features import FEATURE_ORDER, read_features, write_features
from juris.inference import (MODES, GeneratorModel, dump_indicators, fit_generator, infer_all,
                             load_indicators)
from juris.lexical import InvertedIndex, TokenizerConfig, build_index
from juris.metrics import HEADLINE, metrics_suite, read_run, significance_test, write_run
from juris.pipeline import LEXICAL, MLP, RULE, Pipeline, feature_rows, rank
from juris.scorer import ScorerModel, TrainConfig, train_scorer, training_pairs
from juris.synthetic import SyntheticConfig, generate
from juris.taxonomy import load_taxonomy

log = logging.getLogger("juris")

SEED_ENV = "JURIS_SEED"
SWEEP_COLUMNS = ("MAP", "P@3", "R@5", "Hits@5", "MRR@5")

# Fallbacks for options that a --config file may also supply.
DEFAULTS = {
    "tokenizer": "words", "k1": 1.2, "b": 0.75, "threads": 1,
    "threshold": 1, "mode": "hierarchical", "alpha": 1.0, "top_k_elements": 6,
    "learning_rate": 1e-4, "batch_size": 64, "epochs": 50, "neg_ratio": 3, "dropout": 0.1,
    "epsilon": 1e-9, "fallback_k": 100, "max_chars": 2000, "min_elements": 2, "max_elements": 10,
    "iterations": 10000, "train_fraction": 0.8, "split_seed": 42,
    "ratios": ",".join(str(r) for r in SWEEP_RATIOS), "variants": ",".join(VARIANTS),
    "num_queries": 100, "num_charges": 6,
}


class UsageError(Exception):
    pass


class Outputs:
    """Stage files under temporary names; publish them all at once."""

    def __init__(self):
        self._staged: list[tuple[Path, Path]] = []

    def path(self, final: str | Path) -> Path:
        final = Path(final)
        tmp = final.with_name(f".partial-{final.name}")
        tmp.parent.mkdir(parents=True, exist_ok=True)
        self._staged.append((tmp, final))
        return tmp

    def commit(self) -> None:
        for tmp, final in self._staged:
            os.replace(tmp, final)
        self._staged.clear()

    def discard(self) -> None:
        for tmp, _ in self._staged:
            tmp.unlink(missing_ok=True)
        self._staged.clear()


def _need(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): "
                         + ", ".join("--" + n.replace("_", "-") for n in missing))


def _exists(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise DataError(f"input not found: {p}")


def _tokenizer(args) -> TokenizerConfig:
    return TokenizerConfig.from_name(args.tokenizer)


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.learning_rate, batch_size=args.batch_size, epochs=args.epochs,
                       neg_ratio=args.neg_ratio, dropout=args.dropout, seed=args.seed)


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(tokenizer=_tokenizer(args), k1=args.k1, b=args.b,
                            smoothing_alpha=args.alpha, top_k_elements=args.top_k_elements,
                            train=_train_config(args), fallback_k=args.fallback_k, epsilon=args.epsilon)


def _dump_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, delimiter="\t", lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


# ---------------------------------------------------------------- commands

def cmd_index(args, outputs: Outputs) -> None:
    _need(args, "corpus", "out")
    _exists(args.corpus)
    index = build_index(load_corpus(args.corpus), _tokenizer(args), args.k1, args.b)
    index.save(outputs.path(args.out))
    log.info("indexed %d documents, %d terms", index.num_docs, len(index.postings))


def cmd_distill(args, outputs: Outputs) -> None:
    if args.action == "render":
        _need(args, "corpus", "out")
        _exists(args.corpus)
        prompts = distill.render_all(load_corpus(args.corpus), args.max_chars)
        for name, text in sorted(prompts.items()):
            outputs.path(Path(args.out) / name).write_text(text, encoding="utf-8")
        log.info("rendered %d prompts", len(prompts))
        return
    _need(args, "corpus", "responses", "out")
    _exists(args.corpus, args.responses, args.taxonomy, args.forbidden_terms)
    docs = load_corpus(args.corpus)
    tax = load_taxonomy(args.taxonomy) if args.taxonomy else None
    forbidden = distill.load_forbidden_terms(args.forbidden_terms)
    records = distill.read_responses(args.responses, docs)
    kept, rejected = distill.clean_records(records, tax, forbidden, (args.min_elements, args.max_elements))
    dump_corpus(outputs.path(args.out), distill.silver_documents(kept, docs))
    if args.rejects:
        write_jsonl(outputs.path(args.rejects), (r.to_json() for r in rejected))
    log.info("kept %d, rejected %d of %d responses", len(kept), len(rejected), len(records))


def cmd_train_gen(args, outputs: Outputs) -> None:
    _need(args, "corpus", "taxonomy", "out")
    _exists(args.corpus, args.taxonomy)
    model = fit_generator(load_corpus(args.corpus), load_taxonomy(args.taxonomy), args.mode,
                          args.alpha, args.top_k_elements, _tokenizer(args))
    model.save(outputs.path(args.out))


def cmd_infer(args, outputs: Outputs) -> None:
    _need(args, "gen", "queries", "taxonomy", "out")
    _exists(args.gen, args.queries, args.taxonomy)
    model = GeneratorModel.load(args.gen)
    indicators = infer_all(model, load_queries(args.queries), load_taxonomy(args.taxonomy))
    dump_indicators(outputs.path(args.out), indicators)


def cmd_train_scorer(args, outputs: Outputs) -> None:
    _need(args, "features", "qrels", "out")
    _exists(args.features, args.qrels)
    rows = read_features(args.features)
    qrels = load_qrels(args.qrels, args.threshold)
    cfg = _train_config(args)
    pairs = training_pairs(rows, qrels, cfg.neg_ratio)
    model, losses = train_scorer(pairs, cfg)
    model.save(outputs.path(args.out))
    if args.loss_out:
        _write_tsv(outputs.path(args.loss_out), ["epoch", "loss"],
                   [[i + 1, repr(x)] for i, x in enumerate(losses)])
    log.info("trained on %d pairs; final loss %.4f", len(pairs), losses[-1])


def _load_index(args, docs: list[Document]) -> InvertedIndex:
    if args.index:
        _exists(args.index)
        return InvertedIndex.load(args.index)
    return build_index(docs, _tokenizer(args), args.k1, args.b)


def cmd_rank(args, outputs: Outputs) -> None:
    _need(args, "corpus", "queries", "out")
    if args.scorer is None and args.kind == MLP:
        raise UsageError("rank: --scorer is required unless --kind is rule or lexical")
    _exists(args.corpus, args.queries, args.indicators, args.gen, args.taxonomy, args.scorer, args.qrels)
    docs = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    tax = load_taxonomy(args.taxonomy) if args.taxonomy else None
    indicators = load_indicators(args.indicators, tax) if args.indicators and tax else {}
    if args.indicators and tax is None:
        raise UsageError("rank: --indicators needs --taxonomy for the validity filter")
    pipe = Pipeline(
        index=_load_index(args, docs),
        docs={d.id: d for d in docs},
        scorer=ScorerModel.load(args.scorer) if args.scorer else None,
        kind=args.kind,
        indicators=indicators,
        generator=GeneratorModel.load(args.gen) if args.gen else None,
        taxonomy=tax,
        epsilon=args.epsilon,
        fallback_k=args.fallback_k,
    )
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        rankings = list(pool.map(lambda q: rank(q, pipe), queries))
        rows = []
        if args.features_out:
            qrels = load_qrels(args.qrels, args.threshold) if args.qrels else None
            for chunk in pool.map(lambda q: feature_rows(q, pipe, qrels.labels_for(q.id) if qrels else None),
                                  queries):
                rows.extend(chunk)
    write_run(outputs.path(args.out), rankings)
    if args.features_out:
        write_features(outputs.path(args.features_out), rows)


def cmd_eval(args, outputs: Outputs) -> None:
    _need(args, "run", "qrels")
    _exists(args.run, args.qrels, args.compare)
    qrels = load_qrels(args.qrels, args.threshold)
    report = metrics_suite(read_run(args.run), qrels)
    out = report.to_json()
    if args.compare:
        other = metrics_suite(read_run(args.compare), qrels)
        common = sorted(set(report.per_query) & set(other.per_query))
        out["comparison"] = {
            "against": Path(args.compare).name,
            "num_queries": len(common),
            "p_values": {m: significance_test([report.per_query[q][m] for q in common],
                                              [other.per_query[q][m] for q in common],
                                              args.iterations, args.seed)
                         for m in HEADLINE} if common else {},
        }
    _dump_json(outputs.path(args.out or "report.json"), out)
    for m in HEADLINE:
        if m in report.mean:
            print(f"{m}\t{100 * report.mean[m]:.2f}")


def _dataset(args) -> tuple[Dataset, dict]:
    if args.synthetic:
        syn = generate(SyntheticConfig(num_queries=args.num_queries, num_charges=args.num_charges), args.seed)
        docs, queries, qrels, tax = syn.docs, syn.queries, syn.qrels, syn.taxonomy
        indicators = None
        source = {"synthetic": True, "seed": args.seed}
    else:
        _need(args, "corpus", "queries", "qrels", "taxonomy")
        _exists(args.corpus, args.queries, args.qrels, args.taxonomy, args.indicators)
        docs = load_corpus(args.corpus)
        queries = load_queries(args.queries)
        qrels = load_qrels(args.qrels, args.threshold)
        tax = load_taxonomy(args.taxonomy)
        indicators = load_indicators(args.indicators, tax) if args.indicators else None
        source = {"synthetic": False, "corpus": str(args.corpus)}
    train, test = split_queries(queries, args.train_fraction, args.split_seed)
    if not train or not test:
        raise DataError("train/test split left one side empty")
    source.update(train_queries=len(train), test_queries=len(test))
    return Dataset(docs, train, test, qrels, tax, indicators), source


def _parse_list(text: str, cast: Callable = str) -> list:
    return [cast(x.strip()) for x in str(text).split(",") if x.strip()]


def cmd_ablate(args, outputs: Outputs) -> None:
    variants = _parse_list(args.variants)
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"ablate: unknown variant(s) {unknown}; choose from {list(VARIANTS)}")
    _need(args, "out")
    data, source = _dataset(args)
    exp = Experiment(data, _experiment_config(args))
    reports = {v: exp.run(v).report for v in variants}
    _write_tsv(outputs.path(args.out), ["variant", *HEADLINE],
               [[v, *(f"{100 * r.mean[m]:.2f}" for m in HEADLINE)] for v, r in reports.items()])
    if args.report_out:
        _dump_json(outputs.path(args.report_out),
                   {"data": source, "variants": {v: r.to_json() for v, r in reports.items()}})
    if args.figure:
        from juris.plotting import plot_ablation
        plot_ablation(reports, outputs.path(args.figure))


def cmd_shapley(args, outputs: Outputs) -> None:
    _need(args, "model", "features", "out")
    _exists(args.model, args.features, args.qrels)
    model = ScorerModel.load(args.model)
    rows = read_features(args.features)
    if args.qrels:
        qrels = load_qrels(args.qrels, args.threshold)
        pairs = training_pairs(rows, qrels, args.neg_ratio)
        baseline = mean_baseline([r.features for r in pairs]) if pairs else mean_baseline(
            [r.features for r in rows])
        if args.positives_only:
            rows = [r for r in rows if qrels.is_positive(r.qid, r.docid)]
    else:
        if args.positives_only:
            raise UsageError("shapley: --positives-only needs --qrels")
        baseline = mean_baseline([r.features for r in rows])
    if not rows:
        raise DataError("shapley: no instances to attribute")
    attributions = [exact_shapley(model, r.features, baseline) for r in rows]
    _write_tsv(outputs.path(args.out),
               ["qid", "docid", *(f"phi_{f}" for f in FEATURE_ORDER), "base", "value"],
               [[r.qid, r.docid, *(repr(p) for p in a.phi), repr(a.base_value), repr(a.instance_value)]
                for r, a in zip(rows, attributions)])
    importance = {f: sum(abs(a.phi[i]) for a in attributions) / len(attributions)
                  for i, f in enumerate(FEATURE_ORDER)}
    if args.summary_out:
        _write_tsv(outputs.path(args.summary_out), ["feature", "mean_abs_phi", "baseline"],
                   [[f, repr(importance[f]), repr(float(baseline[i]))] for i, f in enumerate(FEATURE_ORDER)])
    if args.figure:
        from juris.plotting import plot_importance
        plot_importance(importance, outputs.path(args.figure))


def cmd_sweep(args, outputs: Outputs) -> None:
    _need(args, "out")
    try:
        ratios = sorted(set(_parse_list(args.ratios, float)))
    except ValueError:
        raise UsageError(f"sweep: bad --ratios {args.ratios!r}") from None
    if not ratios or not all(0 < r <= 1 for r in ratios):
        raise UsageError("sweep: ratios must lie in (0, 1]")
    data, source = _dataset(args)
    rows = data_efficiency_sweep(data, ratios, _experiment_config(args), args.seed)
    _write_tsv(outputs.path(args.out), ["Ratio", *SWEEP_COLUMNS],
               [[f"{r:g}", *(f"{100 * rep.mean[m]:.2f}" for m in SWEEP_COLUMNS)] for r, rep in rows])
    if args.report_out:
        _dump_json(outputs.path(args.report_out),
                   {"data": source, "ratios": [r for r, _ in rows],
                    "mean": {f"{r:g}": rep.mean for r, rep in rows}})
    if args.figure:
        from juris.plotting import plot_data_efficiency
        plot_data_efficiency(rows, outputs.path(args.figure))


def cmd_synth(args, outputs: Outputs) -> None:
    _need(args, "out")
    syn = generate(SyntheticConfig(num_queries=args.num_queries, num_charges=args.num_charges), args.seed)
    out = Path(args.out)
    dump_corpus(outputs.path(out / "corpus.jsonl"), syn.docs)
    dump_queries(outputs.path(out / "queries.jsonl"), syn.queries)
    dump_qrels(outputs.path(out / "qrels.tsv"), syn.qrels)
    _dump_json(outputs.path(out / "taxonomy.json"), syn.taxonomy.to_json())
    write_jsonl(outputs.path(out / "gold.jsonl"),
                ({"qid": q, "charges": [syn.gold_charges[q]], "elements": sorted(syn.gold_elements[q])}
                 for q in syn.gold_charges))


HANDLERS = {
    "index": cmd_index, "distill": cmd_distill, "train-gen": cmd_train_gen, "infer": cmd_infer,
    "train-scorer": cmd_train_scorer, "rank": cmd_rank, "eval": cmd_eval, "ablate": cmd_ablate,
    "shapley": cmd_shapley, "sweep": cmd_sweep, "synth": cmd_synth,
}


# ---------------------------------------------------------------- parser

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--seed", type=int, help=f"64-bit seed (fallback: ${SEED_ENV}, then 0)")
    p.add_argument("--threads", type=int)
    p.add_argument("--tokenizer", choices=["words", "cjk"])
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--neg-ratio", type=int)
    p.add_argument("--dropout", type=float)


def _gen_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--alpha", type=float, help="additive smoothing")
    p.add_argument("--top-k-elements", type=int)


def _dataset_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--synthetic", action="store_true", help="generate a planted synthetic dataset")
    p.add_argument("--num-queries", type=int)
    p.add_argument("--num-charges", type=int)
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--qrels")
    p.add_argument("--threshold", type=int, help="positive relevance threshold")
    p.add_argument("--taxonomy")
    p.add_argument("--indicators", help="file-backed indicators replacing the built-in generator")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--fallback-k", type=int)
    _gen_opts(p)
    _train_opts(p)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="juris", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("index", parents=[common], help="build and save a BM25 index")
    p.add_argument("--corpus")
    p.add_argument("--out")

    p = sub.add_parser("distill", parents=[common], help="render teacher prompts / ingest replies")
    p.add_argument("action", choices=["render", "ingest"])
    p.add_argument("--corpus")
    p.add_argument("--out", help="prompt directory (render) or silver.jsonl (ingest)")
    p.add_argument("--max-chars", type=int)
    p.add_argument("--responses", help="directory of <docid>.txt replies")
    p.add_argument("--taxonomy")
    p.add_argument("--rejects")
    p.add_argument("--forbidden-terms")
    p.add_argument("--min-elements", type=int)
    p.add_argument("--max-elements", type=int)

    p = sub.add_parser("train-gen", parents=[common], help="fit the built-in indicator generator")
    p.add_argument("--corpus")
    p.add_argument("--taxonomy")
    p.add_argument("--out")
    _gen_opts(p)

    p = sub.add_parser("infer", parents=[common], help="infer indicators for queries")
    p.add_argument("--gen")
    p.add_argument("--queries")
    p.add_argument("--taxonomy")
    p.add_argument("--out")

    p = sub.add_parser("train-scorer", parents=[common], help="train the fusion MLP")
    p.add_argument("--features")
    p.add_argument("--qrels")
    p.add_argument("--threshold", type=int)
    p.add_argument("--out")
    p.add_argument("--loss-out")
    _train_opts(p)

    p = sub.add_parser("rank", parents=[common], help="rank candidate pools")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--index")
    p.add_argument("--indicators")
    p.add_argument("--gen")
    p.add_argument("--taxonomy")
    p.add_argument("--scorer")
    p.add_argument("--kind", choices=[MLP, RULE, LEXICAL], default=None)
    p.add_argument("--qrels", help="labels for --features-out")
    p.add_argument("--threshold", type=int)
    p.add_argument("--features-out")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--fallback-k", type=int)
    p.add_argument("--out")

    p = sub.add_parser("eval", parents=[common], help="score a run file")
    p.add_argument("--run")
    p.add_argument("--qrels")
    p.add_argument("--threshold", type=int)
    p.add_argument("--out")
    p.add_argument("--compare", help="second run for paired significance tests")
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("ablate", parents=[common], help="feature/architecture ablations")
    _dataset_opts(p)
    p.add_argument("--variants")
    p.add_argument("--out")
    p.add_argument("--report-out")
    p.add_argument("--figure")

    p = sub.add_parser("shapley", parents=[common], help="exact Shapley attribution")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--qrels")
    p.add_argument("--threshold", type=int)
    p.add_argument("--neg-ratio", type=int)
    p.add_argument("--positives-only", action="store_true")
    p.add_argument("--out")
    p.add_argument("--summary-out")
    p.add_argument("--figure")

    p = sub.add_parser("sweep", parents=[common], help="data-efficiency sweep")
    _dataset_opts(p)
    p.add_argument("--ratios")
    p.add_argument("--out")
    p.add_argument("--report-out")
    p.add_argument("--figure")

    p = sub.add_parser("synth", parents=[common], help="write a planted synthetic dataset")
    p.add_argument("--out")
    p.add_argument("--num-queries", type=int)
    p.add_argument("--num-charges", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    config = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise DataError(f"config {args.config} must be a JSON object")
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest in ("command", "config"):
            continue
        if getattr(args, dest, None) in (None, False):
            setattr(args, dest, value)
    if args.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, value)
    if getattr(args, "kind", "absent") is None:
        args.kind = MLP if getattr(args, "scorer", None) else RULE
    return args


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outputs = Outputs()
    try:
        _resolve(args)
        HANDLERS[args.command](args, outputs)
        outputs.commit()
    except UsageError as exc:
        outputs.discard()
        parser.print_usage(sys.stderr)
        print(f"juris: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError, ValueError, KeyError) as exc:
        outputs.discard()
        print(f"juris: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        outputs.discard()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
