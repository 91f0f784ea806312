"""Command-line orchestration of the pipeline stages.

Every subcommand reads and writes only the documented file formats, so
stages can be re-run or swapped out independently. Outputs are
deterministic: rerunning a subcommand with identical inputs overwrites its
outputs byte-identically, and the worker thread count never changes any
output. Each output directory carries a manifest with the config hash,
input hashes, and tool version.

Exit codes: 0 success, 1 invalid configuration, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__, corpus as corpus_mod, datasets as ds, ensembles, evaluation
from . import labelers, lrtrainer, thesaurus as th

DATA_DIR_ENV = "GRANUM_DATA_DIR"

DEFAULTS = {
    "thresholds": {
        "test_positive_min": 10,
        "dev_min": 10,
        "dev_max": 1_000_000,
        "dev_positive_min": 10,
    },
    "lfs": ["CO", "NL", "SL"],
    "method": "ALO",
    "balance_n": 10.0,
    "seeds": list(lrtrainer.DEFAULT_SEEDS),
    "split_seed": 7,
    "threads": 1,
    # Baseline grids; desk-scale configs may narrow them.
    "lr_ks": list(lrtrainer.FEATURE_K_GRID),
    "lr_cs": list(lrtrainer.L2_C_GRID),
}


class ConfigError(ValueError):
    pass


def _resolve(path: str | Path) -> Path:
    path = Path(path)
    if not path.is_absolute():
        root = os.environ.get(DATA_DIR_ENV)
        if root:
            candidate = Path(root) / path
            if candidate.exists():
                return candidate
    return path


def load_config(path: str | None, overrides: dict) -> dict:
    config = dict(DEFAULTS)
    if path:
        try:
            loaded = json.loads(_resolve(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        config.update(loaded)
    config.update({k: v for k, v in overrides.items() if v is not None})
    seeds = config.get("seeds", [])
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    return config


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(outdir: Path, config: dict, inputs: list[Path]) -> None:
    config_hash = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()
    manifest = {
        "tool": "granum",
        "version": __version__,
        "config_hash": config_hash,
        "inputs": {str(p): _sha256(p) for p in sorted(set(inputs)) if p.is_file()},
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _thresholds(config: dict) -> th.SelectionThresholds:
    t = config["thresholds"]
    return th.SelectionThresholds(
        test_positive_min=int(t["test_positive_min"]),
        dev_min=int(t["dev_min"]),
        dev_max=int(t["dev_max"]),
        dev_positive_min=int(t["dev_positive_min"]),
    )


def _open_corpus(config: dict, outdir: Path) -> corpus_mod.CorpusHandle:
    """Open a corpus store, ingesting a raw JSONL file first if needed."""
    source = _resolve(config["corpus"])
    if source.is_dir():
        return corpus_mod.CorpusHandle(source)
    store = outdir / "corpus_store"
    return corpus_mod.ingest(source, store)


def _sources_for(
    use_cases: list[th.UseCase], thesaurus: th.Thesaurus, lfs: list[str]
) -> list:
    sources = []
    for uc in use_cases:
        for lf in lfs:
            sources.append(labelers.build_source(uc, thesaurus, lf))
    return sources


def _weak_tag(method: str, lfs: list[str]) -> str:
    return f"weak_{method.upper()}{len(lfs)}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_select_usecases(config: dict, outdir: Path) -> list[Path]:
    thesaurus = th.load_thesaurus(_resolve(config["thesaurus"]))
    corpus = _open_corpus(config, outdir)
    year = int(config["year"])
    stats = corpus_mod.compute_stats(corpus, thesaurus, year)
    use_cases = th.select_use_cases(thesaurus, stats, year, _thresholds(config))
    out = outdir / "usecases.json"
    th.write_use_cases(use_cases, out)
    print(f"selected {len(use_cases)} use cases -> {out}", file=sys.stderr)
    return [_resolve(config["thesaurus"])]


def cmd_label(config: dict, outdir: Path) -> list[Path]:
    thesaurus = th.load_thesaurus(_resolve(config["thesaurus"]))
    corpus = _open_corpus(config, outdir)
    use_cases = th.read_use_cases(_resolve(config["usecases"]))
    year = int(config["year"])
    partition = config.get("partition", "dev")
    if partition == "dev":
        predicate = lambda y: y < year  # noqa: E731
    elif partition == "test":
        predicate = lambda y: y >= year  # noqa: E731
    else:
        raise ConfigError(f"unknown partition {partition!r}")
    pmids: set[str] = set()
    for uc in use_cases:
        pmids.update(
            p for p in corpus.annotated_pmids(uc.host_ui, thesaurus)
            if predicate(corpus.year_of(p))
        )
    lfs = [labelers.validate_lf(lf) for lf in config["lfs"]]
    sources = _sources_for(use_cases, thesaurus, lfs)
    votes = labelers.label_documents(
        corpus.fetch(pmids), sources, threads=int(config.get("threads", 1))
    )
    out = outdir / f"votes_{partition}.tsv"
    labelers.write_votes_tsv(votes, out, header=not config.get("no_header", False))
    if config.get("jsonl_votes"):
        labelers.write_votes_jsonl(votes, outdir / f"votes_{partition}.jsonl")
    print(f"{len(votes)} votes -> {out}", file=sys.stderr)
    return [_resolve(config["thesaurus"]), _resolve(config["usecases"])]


def _combine_votes(
    votes: list[labelers.Vote],
    labels_to_pmids: dict[str, list[str]],
    method: str,
    lfs: list[str],
) -> ensembles.EnhancedLabels:
    parts = []
    for label, pmids in sorted(labels_to_pmids.items()):
        matrix = ensembles.build_matrix(votes, label, lfs, pmids)
        parts.append(ensembles.combine(matrix, method))
    return ensembles.merge_enhanced(parts)


def _valid_pmids_by_label(
    use_cases: list[th.UseCase],
    corpus: corpus_mod.CorpusHandle,
    thesaurus: th.Thesaurus,
    predicate,
) -> dict[str, list[str]]:
    return {
        uc.fine_ui: [
            p for p in corpus.annotated_pmids(uc.host_ui, thesaurus)
            if predicate(corpus.year_of(p))
        ]
        for uc in use_cases
    }


def cmd_combine(config: dict, outdir: Path) -> list[Path]:
    thesaurus = th.load_thesaurus(_resolve(config["thesaurus"]))
    corpus = _open_corpus(config, outdir)
    use_cases = th.read_use_cases(_resolve(config["usecases"]))
    votes_path = _resolve(config["votes"])
    votes = labelers.read_votes_tsv(votes_path)
    year = int(config["year"])
    partition = config.get("partition", "dev")
    predicate = (lambda y: y < year) if partition == "dev" else (lambda y: y >= year)
    lfs = [labelers.validate_lf(lf) for lf in config["lfs"]]
    method = config["method"].upper()
    by_label = _valid_pmids_by_label(use_cases, corpus, thesaurus, predicate)
    enhanced = _combine_votes(votes, by_label, method, lfs)
    out = outdir / f"enhanced_{partition}.jsonl"
    ensembles.write_enhanced_jsonl(enhanced, out)
    print(
        f"{len(enhanced.positives)} enhanced labels ({method}) -> {out}",
        file=sys.stderr,
    )
    return [votes_path, _resolve(config["usecases"])]


def cmd_search_combos(config: dict, outdir: Path) -> list[Path]:
    votes_path = _resolve(config["votes"])
    votes = labelers.read_votes_tsv(votes_path)
    dataset = ds.read_dataset(_resolve(config["dataset"]))
    methods = [m.upper() for m in config.get("methods", ["MV", "ALO", "LM"])]
    seen = {v.lf for v in votes}
    lf_ids = [lf for lf in labelers.LF_IDS if lf in seen]
    rows = ensembles.search_combinations(
        votes,
        dataset,
        methods=methods,
        min_size=int(config.get("min_size", 2)),
        lf_ids=lf_ids,
    )
    out = outdir / "combinations.tsv"
    ensembles.write_combination_report(rows, out, methods=methods)
    print(f"{len(rows)} combinations -> {out}", file=sys.stderr)
    return [votes_path, _resolve(config["dataset"])]


def cmd_build_dataset(config: dict, outdir: Path) -> list[Path]:
    thesaurus = th.load_thesaurus(_resolve(config["thesaurus"]))
    corpus = _open_corpus(config, outdir)
    use_cases = th.read_use_cases(_resolve(config["usecases"]))
    partition = config.get("partition", "dev")
    inputs = [_resolve(config["thesaurus"]), _resolve(config["usecases"])]
    if partition == "test":
        dataset = ds.build_test(use_cases, corpus, thesaurus)
        out = outdir / "test.jsonl"
    else:
        weak_path = _resolve(config["weak_labels"])
        inputs.append(weak_path)
        if weak_path.suffix == ".tsv":
            votes = labelers.read_votes_tsv(weak_path)
            lf = config.get("weak_lf", "CO")
            posmap = labelers.votes_as_posmap(votes, lf)
            tag = f"weak_{lf}"
        else:
            enhanced = ensembles.read_enhanced_jsonl(weak_path)
            posmap = enhanced.posmap()
            tag = _weak_tag(enhanced.method, list(enhanced.lf_ids))
        weak = ds.weak_source_from_posmap(tag, posmap)
        dataset = ds.build_dev(use_cases, corpus, thesaurus, weak)
        out = outdir / "ws_dev.jsonl"
    ds.write_dataset(
        dataset, out,
        {"use_cases": [uc.to_dict() for uc in use_cases],
         "thresholds": config["thresholds"]},
    )
    print(f"{len(dataset)} rows -> {out}", file=sys.stderr)
    return inputs


def cmd_undersample(config: dict, outdir: Path) -> list[Path]:
    path = _resolve(config["dataset"])
    dataset = ds.read_dataset(path)
    balance = ds.BalanceConfig(
        balance_n=float(config["balance_n"]), seed=int(config.get("seed", 0))
    )
    sampled = ds.undersample(dataset, balance)
    out = outdir / "undersampled.jsonl"
    ds.write_dataset(
        sampled, out,
        {"balance_n": balance.balance_n, "seed": balance.seed,
         "parent_rows": len(dataset)},
    )
    print(f"{len(dataset)} -> {len(sampled)} rows -> {out}", file=sys.stderr)
    return [path]


def cmd_train_lr(config: dict, outdir: Path) -> list[Path]:
    dev_path = _resolve(config["dev_dataset"])
    test_path = _resolve(config["test_dataset"])
    dev = ds.read_dataset(dev_path)
    test = ds.read_dataset(test_path)
    occurrences: dict[str, set[str]] = {}
    if config.get("corpus"):
        corpus = _open_corpus(config, outdir)
        for pmid in set(dev.pmids) | set(test.pmids):
            if pmid in corpus:
                occurrences[pmid] = set(corpus.get(pmid).occurrences)
    predictions = lrtrainer.train_and_predict(
        dev,
        test,
        occurrences=occurrences,
        split_seed=int(config["split_seed"]),
        seeds=[int(s) for s in config["seeds"]],
        balance_n=float(config["balance_n"]),
        ks=[int(k) for k in config["lr_ks"]],
        cs=[float(c) for c in config["lr_cs"]],
    )
    out = outdir / "predictions_lr.jsonl"
    evaluation.write_predictions_jsonl(predictions, out)
    print(f"LR predictions -> {out}", file=sys.stderr)
    return [dev_path, test_path]


def cmd_evaluate(config: dict, outdir: Path) -> list[Path]:
    pred_path = _resolve(config["predictions"])
    dataset = ds.read_dataset(_resolve(config["dataset"]))
    predictions = evaluation.read_predictions_jsonl(pred_path)
    result = evaluation.score(predictions, dataset)
    out = outdir / "result.json"
    out.write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"maF1 {result.ma_f1:.3f} miF1 {result.mi_f1:.3f} -> {out}", file=sys.stderr)
    return [pred_path, _resolve(config["dataset"])]


def cmd_report(config: dict, outdir: Path) -> list[Path]:
    inputs = []
    rows = []
    for entry in config["results"]:
        name, path = entry.split("=", 1) if "=" in entry else (Path(entry).stem, entry)
        path = _resolve(path)
        inputs.append(path)
        result = evaluation.EvalResult.from_dict(
            json.loads(path.read_text(encoding="utf-8"))
        )
        rows.append((name, result))
    evaluation.write_report_tsv(rows, outdir / "report.tsv")
    evaluation.write_report_json(rows, outdir / "report.json")
    if config.get("pooled") and len(rows) > 1:
        pooled = evaluation.pool_results([r for _, r in rows])
        evaluation.write_report_tsv([("pooled", pooled)], outdir / "report_pooled.tsv")
    print(f"report -> {outdir / 'report.tsv'}", file=sys.stderr)
    return inputs


def cmd_pipeline(config: dict, outdir: Path) -> list[Path]:
    """Chain every stage for one year: use-case selection, labeling,
    weak-supervision enhancement, dataset assembly, the baseline trainer,
    and the final report."""
    thesaurus_path = _resolve(config["thesaurus"])
    thesaurus = th.load_thesaurus(thesaurus_path)
    corpus = _open_corpus(config, outdir)
    year = int(config["year"])
    threads = int(config.get("threads", 1))
    lfs = [labelers.validate_lf(lf) for lf in config["lfs"]]
    method = config["method"].upper()

    stats = corpus_mod.compute_stats(corpus, thesaurus, year)
    use_cases = th.select_use_cases(thesaurus, stats, year, _thresholds(config))
    th.write_use_cases(use_cases, outdir / "usecases.json")
    if not use_cases:
        raise ds.DatasetError(f"no use cases qualify for year {year}")

    dev_pred = lambda y: y < year  # noqa: E731
    test_pred = lambda y: y >= year  # noqa: E731
    all_sources = _sources_for(use_cases, thesaurus, list(labelers.LF_IDS))

    votes = {}
    for partition, predicate in (("dev", dev_pred), ("test", test_pred)):
        pmids: set[str] = set()
        for uc in use_cases:
            pmids.update(
                p for p in corpus.annotated_pmids(uc.host_ui, thesaurus)
                if predicate(corpus.year_of(p))
            )
        votes[partition] = labelers.label_documents(
            corpus.fetch(pmids), all_sources, threads=threads
        )
        labelers.write_votes_tsv(votes[partition], outdir / f"votes_{partition}.tsv")

    by_label_dev = _valid_pmids_by_label(use_cases, corpus, thesaurus, dev_pred)
    enhanced = _combine_votes(votes["dev"], by_label_dev, method, lfs)
    ensembles.write_enhanced_jsonl(enhanced, outdir / "enhanced_dev.jsonl")

    weak = ds.weak_source_from_posmap(_weak_tag(method, lfs), enhanced.posmap())
    dev_dataset = ds.build_dev(use_cases, corpus, thesaurus, weak)
    test_dataset = ds.build_test(use_cases, corpus, thesaurus)
    manifest_extra = {
        "use_cases": [uc.to_dict() for uc in use_cases],
        "thresholds": config["thresholds"],
    }
    ds.write_dataset(dev_dataset, outdir / "ws_dev.jsonl", manifest_extra)
    ds.write_dataset(test_dataset, outdir / "test.jsonl", manifest_extra)

    occurrences = {
        pmid: set(corpus.get(pmid).occurrences)
        for pmid in set(dev_dataset.pmids) | set(test_dataset.pmids)
    }
    lr_predictions = lrtrainer.train_and_predict(
        dev_dataset,
        test_dataset,
        occurrences=occurrences,
        split_seed=int(config["split_seed"]),
        seeds=[int(s) for s in config["seeds"]],
        balance_n=float(config["balance_n"]),
        ks=[int(k) for k in config["lr_ks"]],
        cs=[float(c) for c in config["lr_cs"]],
    )
    evaluation.write_predictions_jsonl(lr_predictions, outdir / "predictions_lr.jsonl")

    rows = []
    for lf in labelers.LF_IDS:
        posmap = labelers.votes_as_posmap(votes["test"], lf)
        preds = {pmid: posmap.get(pmid, set()) for pmid in test_dataset.pmids}
        rows.append((lf, evaluation.score(preds, test_dataset)))
    by_label_test = _valid_pmids_by_label(use_cases, corpus, thesaurus, test_pred)
    enhanced_test = _combine_votes(votes["test"], by_label_test, method, lfs)
    ens_posmap = enhanced_test.posmap()
    ens_preds = {pmid: ens_posmap.get(pmid, set()) for pmid in test_dataset.pmids}
    rows.append((f"{method}{len(lfs)}", evaluation.score(ens_preds, test_dataset)))
    rows.append(("LR", evaluation.score(lr_predictions, test_dataset)))
    evaluation.write_report_tsv(rows, outdir / "report.tsv")
    evaluation.write_report_json(rows, outdir / "report.json")
    print(f"pipeline complete -> {outdir / 'report.tsv'}", file=sys.stderr)
    return [thesaurus_path]


COMMANDS = {
    "select-usecases": cmd_select_usecases,
    "label": cmd_label,
    "combine": cmd_combine,
    "search-combos": cmd_search_combos,
    "build-dataset": cmd_build_dataset,
    "undersample": cmd_undersample,
    "train-lr": cmd_train_lr,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="granum",
        description="Weakly-supervised fine-grained semantic indexing pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (default 1)")

    p = sub.add_parser("select-usecases", help="select qualifying promotion events")
    common(p)
    p.add_argument("--thesaurus")
    p.add_argument("--corpus")
    p.add_argument("--year", type=int)

    p = sub.add_parser("label", help="run labeling functions over a partition")
    common(p)
    p.add_argument("--thesaurus")
    p.add_argument("--corpus")
    p.add_argument("--usecases")
    p.add_argument("--year", type=int)
    p.add_argument("--partition", choices=["dev", "test"])
    p.add_argument("--lfs", help="comma-separated labeling functions")
    p.add_argument("--no-header", action="store_true", dest="no_header",
                   help="omit the TSV header row")
    p.add_argument("--jsonl-votes", action="store_true", dest="jsonl_votes",
                   help="also write the per-document JSONL form")

    p = sub.add_parser("combine", help="combine votes into enhanced weak labels")
    common(p)
    p.add_argument("--thesaurus")
    p.add_argument("--corpus")
    p.add_argument("--usecases")
    p.add_argument("--votes")
    p.add_argument("--year", type=int)
    p.add_argument("--partition", choices=["dev", "test"])
    p.add_argument("--method", choices=["mv", "alo", "lm", "MV", "ALO", "LM"])
    p.add_argument("--lfs")

    p = sub.add_parser("search-combos", help="rank labeling-function subsets")
    common(p)
    p.add_argument("--votes")
    p.add_argument("--dataset")
    p.add_argument("--methods")
    p.add_argument("--min-size", type=int, dest="min_size")

    p = sub.add_parser("build-dataset", help="assemble a dev or test dataset")
    common(p)
    p.add_argument("--thesaurus")
    p.add_argument("--corpus")
    p.add_argument("--usecases")
    p.add_argument("--partition", choices=["dev", "test"])
    p.add_argument("--weak-labels", dest="weak_labels")
    p.add_argument("--weak-lf", dest="weak_lf")

    p = sub.add_parser("undersample", help="rebalance negatives per label")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--balance-n", type=float, dest="balance_n")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train-lr", help="train the logistic regression baseline")
    common(p)
    p.add_argument("--dev-dataset", dest="dev_dataset")
    p.add_argument("--test-dataset", dest="test_dataset")
    p.add_argument("--corpus")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--balance-n", type=float, dest="balance_n")

    p = sub.add_parser("evaluate", help="score predictions against a dataset")
    common(p)
    p.add_argument("--predictions")
    p.add_argument("--dataset")

    p = sub.add_parser("report", help="emit report tables from result files")
    common(p)
    p.add_argument("--results", nargs="+", help="name=result.json entries")
    p.add_argument("--pooled", action="store_true")

    p = sub.add_parser("pipeline", help="run every stage for one year")
    common(p)
    p.add_argument("--thesaurus")
    p.add_argument("--corpus")
    p.add_argument("--year", type=int)
    p.add_argument("--lfs")
    p.add_argument("--method", choices=["mv", "alo", "lm", "MV", "ALO", "LM"])
    p.add_argument("--balance-n", type=float, dest="balance_n")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--seeds")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        k: v for k, v in vars(args).items() if k not in ("command", "config", "out")
    }
    for key in ("lfs", "seeds", "methods"):
        if overrides.get(key) and isinstance(overrides[key], str):
            overrides[key] = [s.strip() for s in overrides[key].split(",") if s.strip()]
    try:
        config = load_config(args.config, overrides)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        inputs = COMMANDS[args.command](config, outdir)
        if config.get("corpus"):
            inputs = inputs + [_resolve(config["corpus"])]
        write_manifest(outdir, config, inputs)
    except (ConfigError, KeyError) as exc:
        print(f"granum: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (
        th.ThesaurusError,
        corpus_mod.CorpusError,
        ds.DatasetError,
        evaluation.EvaluationError,
        lrtrainer.TrainerError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"granum: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
