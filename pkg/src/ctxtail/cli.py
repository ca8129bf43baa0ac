"""Pipeline command-line interface.

Subcommands run one stage each over a content-addressed artifact store:

    synth ingest clean phrases embed cluster stats curate-serve registry
    annotate train sweep report

A stage is skipped when its recorded input and config hashes match the
manifest; ``--auto`` runs missing upstream stages first.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, clustering, corpus as corpus_mod, curation, evaluation, phrasing
from . import registry as registry_mod
from . import synthgen
from .config import PipelineConfig, load_config
from .embedding import (
    HashingProvider,
    RemoteProvider,
    VectorCache,
    embed_phrases,
    pca_fit,
    pca_transform,
    read_vectors,
    write_vectors,
)
from .models import (
    ModelSpec,
    build_features,
    read_embeddings,
    save_model,
    train as train_model,
)
from .store import ArtifactStore, StoreError, file_sha256

log = logging.getLogger("ctxtail")

CRITERION_ALIASES = {
    "frequency": "propensity_frequency",
    "rate": "propensity_rate",
    "propensity_frequency": "propensity_frequency",
    "propensity_rate": "propensity_rate",
}
MODEL_ALIASES = {
    "logreg": "logreg",
    "rf": "random_forest",
    "random_forest": "random_forest",
    "gbdt": "gbdt",
    "fm": "factorization_machine",
    "factorization_machine": "factorization_machine",
    "auto": "auto",
}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


# ---------------------------------------------------------------- context

class RunContext:
    def __init__(self, cfg: PipelineConfig, store: ArtifactStore, args):
        self.cfg = cfg
        self.store = store
        self.args = args

    def tmp(self, name: str) -> Path:
        tmp_dir = self.store.root / "tmp"
        tmp_dir.mkdir(exist_ok=True)
        return tmp_dir / name

    def negation_config(self) -> registry_mod.NegationConfig:
        r = self.cfg.registry
        return registry_mod.NegationConfig(
            cues=r.negation_cues, window=r.negation_window, negated_clusters=r.negated_clusters
        )

    def load_corpus_alias(self, alias: str) -> corpus_mod.Corpus:
        return corpus_mod.load_corpus(self.store.alias_path(alias))

    def embeddings_input(self) -> tuple[str, str]:
        """(kind, location): external path from config, or the synth artifact."""
        if self.cfg.models.embeddings_path:
            return "external", self.cfg.models.embeddings_path
        return "artifact", "customer_embeddings.bin"


# ---------------------------------------------------------------- stages

def stage_synth(ctx: RunContext) -> dict[str, str]:
    sc = ctx.cfg.synth.to_synth_config(ctx.cfg.seed)
    corpus, embeddings, truth = synthgen.generate(sc)
    out = {}
    p = ctx.tmp("raw_corpus.jsonl")
    corpus_mod.save_corpus(corpus, p)
    out["raw_corpus.jsonl"] = ctx.store.put_file(p, "raw_corpus.jsonl")
    p = ctx.tmp("customer_embeddings.bin")
    from .models import write_embeddings

    write_embeddings(embeddings, p)
    out["customer_embeddings.bin"] = ctx.store.put_file(p, "customer_embeddings.bin")
    p = ctx.tmp("ground_truth.json")
    truth.to_json(p)
    out["ground_truth.json"] = ctx.store.put_file(p, "ground_truth.json")
    return out


def stage_ingest(ctx: RunContext) -> dict[str, str]:
    src = ctx.cfg.corpus.input_path or ctx.store.alias_path("raw_corpus.jsonl")
    rejects = ctx.tmp("rejects.jsonl")
    c = corpus_mod.load_corpus(src, rejects_path=rejects)
    out = {}
    p = ctx.tmp("corpus.jsonl")
    corpus_mod.save_corpus(c, p)
    out["corpus.jsonl"] = ctx.store.put_file(p, "corpus.jsonl")
    if rejects.exists():
        out["rejects.jsonl"] = ctx.store.put_file(rejects, "rejects.jsonl")
    return out


def stage_clean(ctx: RunContext) -> dict[str, str]:
    c = ctx.load_corpus_alias("corpus.jsonl")
    cleaned, report = corpus_mod.clean_corpus(
        c,
        min_customer_lines=ctx.cfg.corpus.min_customer_lines,
        merge_transcripts=ctx.cfg.corpus.merge_transcripts,
    )
    out = {}
    p = ctx.tmp("cleaned.jsonl")
    corpus_mod.save_corpus(cleaned, p)
    out["cleaned.jsonl"] = ctx.store.put_file(p, "cleaned.jsonl")
    p = ctx.tmp("cleaning_report.txt")
    corpus_mod.write_cleaning_report(report, p)
    out["cleaning_report.txt"] = ctx.store.put_file(p, "cleaning_report.txt")
    stats = corpus_mod.corpus_stats(cleaned)
    p = ctx.tmp("corpus_stats.tsv")
    with p.open("w", encoding="utf-8") as fh:
        fh.write("product\tn_dialogues\tpropensity_rate\n")
        for pid in sorted(stats):
            rate = stats[pid]["propensity_rate"]
            fh.write(f"{pid}\t{stats[pid]['n_dialogues']}\t{'' if rate is None else f'{rate:.6g}'}\n")
    out["corpus_stats.tsv"] = ctx.store.put_file(p, "corpus_stats.tsv")
    return out


def stage_phrases(ctx: RunContext) -> dict[str, str]:
    c = ctx.load_corpus_alias("cleaned.jsonl")
    pc = ctx.cfg.phrasing
    cands = phrasing.generate_candidates(
        c, max_len=pc.max_phrase_len, drop_stop_phrases=pc.drop_stop_phrases
    )
    cands = phrasing.filter_by_support(cands, min_dialogues=pc.min_support)
    phrasing.compute_product_stats(cands, c)
    selected = phrasing.select_significant(cands, alpha=pc.alpha, bonferroni=pc.bonferroni)
    log.info("phrases: %d candidates survive support+significance filters", len(selected))
    p = ctx.tmp("candidates.tsv")
    phrasing.write_candidates(selected, p, products=list(c.product_catalog))
    return {"candidates.tsv": ctx.store.put_file(p, "candidates.tsv")}


def stage_embed(ctx: RunContext) -> dict[str, str]:
    cands = phrasing.read_candidates(ctx.store.alias_path("candidates.tsv"))
    ec = ctx.cfg.embedding
    if ec.provider == "hashing":
        provider = HashingProvider(dim=ec.dim, seed=ec.seed)
    elif ec.provider == "remote":
        provider = RemoteProvider(ec.remote_url, timeout=ec.timeout, retries=ec.retries, backoff=ec.backoff)
    else:
        raise StageError("embed", f"unknown embedding provider: {ec.provider!r}")
    cache = VectorCache(ec.cache_dir) if ec.cache_dir else None
    texts = [" ".join(t) for t in sorted(cands)]
    if not texts:
        raise StageError("embed", "no candidate phrases to embed")
    vectors = embed_phrases(texts, provider, cache=cache)
    p = ctx.tmp("phrase_vectors.bin")
    write_vectors(p, texts, vectors)
    return {"phrase_vectors.bin": ctx.store.put_file(p, "phrase_vectors.bin")}


def stage_cluster(ctx: RunContext) -> dict[str, str]:
    texts, vectors = read_vectors(ctx.store.alias_path("phrase_vectors.bin"))
    cc = ctx.cfg.clustering
    k = min(ctx.cfg.embedding.pca_dim, vectors.shape[0], vectors.shape[1])
    model = pca_fit(vectors, k=k)
    points = pca_transform(model, vectors)
    configs = clustering.default_dbscan_grid(
        points, min_pts_grid=cc.dbscan_min_pts, n_eps=cc.dbscan_eps_quantiles
    )
    n = points.shape[0]
    counts = cc.agglo_n_clusters or tuple(
        sorted({max(2, n // 50), max(2, n // 20), max(2, n // 10), max(2, n // 5)})
    )
    for linkage in cc.agglo_linkages:
        for nc in counts:
            if 2 <= nc <= n:
                configs.append({"method": "agglomerative", "linkage": linkage, "n_clusters": nc})
    assignment = clustering.select_clustering(points, configs)
    log.info(
        "cluster: %s with %d clusters (silhouette %.4f)",
        assignment.method, assignment.n_clusters, assignment.params.get("silhouette", float("nan")),
    )
    phrases = [tuple(t.split(" ")) for t in texts]
    p = ctx.tmp("clusters.tsv")
    clustering.write_assignments(phrases, assignment.labels, p)
    return {"clusters.tsv": ctx.store.put_file(p, "clusters.tsv")}


def stage_stats(ctx: RunContext) -> dict[str, str]:
    byc = clustering.read_assignments(ctx.store.alias_path("clusters.tsv"))
    byc.pop(-1, None)  # noise forms no variable
    c = ctx.load_corpus_alias("cleaned.jsonl")
    stats = clustering.compute_cluster_stats(byc, c)
    cc = ctx.cfg.clustering
    cstats = corpus_mod.corpus_stats(c)
    rates = [s["propensity_rate"] for s in cstats.values() if s["propensity_rate"] is not None]
    baseline = float(np.mean(rates)) if rates else 0.0
    thresholds = clustering.PruneThresholds(
        min_size=cc.min_cluster_size if cc.min_cluster_size > 0 else None,
        min_rate_deviation=cc.min_rate_deviation if cc.min_rate_deviation > 0 else None,
        baseline_rate=baseline,
        max_past_tense=cc.max_past_tense if cc.max_past_tense < 1.0 else None,
    )
    kept, removed = clustering.prune_clusters(None, stats, thresholds)
    log.info("stats: %d clusters kept, %d pruned", len(kept), len(removed))
    p = ctx.tmp("cluster_report.tsv")
    clustering.write_cluster_report({cid: stats[cid] for cid in kept}, p)
    return {"cluster_report.tsv": ctx.store.put_file(p, "cluster_report.tsv")}


def _registry_inputs(ctx: RunContext):
    report = clustering.read_cluster_report(ctx.store.alias_path("cluster_report.tsv"))
    byc = clustering.read_assignments(ctx.store.alias_path("clusters.tsv"))
    cands = phrasing.read_candidates(ctx.store.alias_path("candidates.tsv"))
    sig: dict[int, tuple[str, ...]] = {}
    for cid in report:
        prods: set[str] = set()
        for ph in byc.get(cid, []):
            cand = cands.get(ph)
            if cand:
                prods.update(cand.significant_products)
        sig[cid] = tuple(sorted(prods))
    return report, byc, sig


def stage_registry(ctx: RunContext) -> dict[str, str]:
    report, byc, sig = _registry_inputs(ctx)
    rc = ctx.cfg.registry
    if rc.auto_accept:
        selected_ids = sorted(report)
    else:
        votes_path = ctx.store.alias_path("votes.tsv")
        table = registry_mod.ingest_votes(votes_path, rc.experts, sorted(report))
        selected_ids = registry_mod.majority_select(table)
    if not selected_ids:
        raise StageError("registry", "no clusters selected for the registry")
    reg = registry_mod.build_registry(
        {cid: {"phrases": byc[cid], "significant_products": sig[cid]} for cid in selected_ids},
        ctx.negation_config(),
    )
    p = ctx.tmp("registry.tsv")
    registry_mod.write_registry(reg, p)
    return {"registry.tsv": ctx.store.put_file(p, "registry.tsv")}


def stage_annotate(ctx: RunContext) -> dict[str, str]:
    c = ctx.load_corpus_alias("cleaned.jsonl")
    reg = registry_mod.read_registry(ctx.store.alias_path("registry.tsv"))
    ann = registry_mod.annotate_corpus(c, reg, ctx.negation_config())
    coverage = registry_mod.context_coverage(c, ann)
    for pid, share in sorted(coverage.items()):
        log.info("annotate: %s coverage %.2f%%", pid, 100 * share)
    p = ctx.tmp("annotations.tsv")
    registry_mod.write_annotations(ann, reg, p)
    return {"annotations.tsv": ctx.store.put_file(p, "annotations.tsv")}


def _load_modeling_inputs(ctx: RunContext):
    c = ctx.load_corpus_alias("cleaned.jsonl")
    reg = registry_mod.read_registry(ctx.store.alias_path("registry.tsv"))
    ann = registry_mod.read_annotations(ctx.store.alias_path("annotations.tsv"), reg)
    kind, loc = ctx.embeddings_input()
    emb = read_embeddings(loc if kind == "external" else ctx.store.alias_path(loc))
    return c, reg, ann, emb


def _model_specs(ctx: RunContext, names) -> list[ModelSpec]:
    specs = []
    for name in names:
        kind = MODEL_ALIASES.get(name)
        if kind is None:
            raise StageError("train", f"unknown model {name!r} (choose from {sorted(MODEL_ALIASES)})")
        if kind == "auto":
            specs.append(ModelSpec("auto"))
        else:
            specs.append(ModelSpec(kind, ctx.cfg.models.spec_params(kind)))
    return specs


def _products(ctx: RunContext, corpus) -> list[str]:
    if ctx.args.product:
        if ctx.args.product not in corpus.product_catalog:
            raise StageError("train", f"unknown product {ctx.args.product!r}")
        return [ctx.args.product]
    return list(ctx.cfg.evaluation.products or corpus.product_catalog)


def stage_train(ctx: RunContext) -> dict[str, str]:
    c, reg, ann, emb = _load_modeling_inputs(ctx)
    model_names = [ctx.args.model] if ctx.args.model else list(ctx.cfg.evaluation.models[:1])
    spec = _model_specs(ctx, model_names)[0]
    registry_hash = ctx.store.hash_of("registry.tsv")
    out = {}
    for product in _products(ctx, c):
        table = build_features(c, product, emb, ann, ctx.cfg.models.missing_embedding)
        if spec.kind == "auto":
            from .models import auto_select

            cands = _model_specs(ctx, ["logreg", "gbdt"])
            model = auto_select(table.X, table.y, cands, cv_folds=ctx.cfg.models.auto_cv_folds, seed=ctx.cfg.seed)
        else:
            model = train_model(table.X, table.y, spec, seed=ctx.cfg.seed)
        alias = f"model_{product}.json"
        p = ctx.tmp(alias)
        save_model(model, p, registry_hash=registry_hash)
        out[alias] = ctx.store.put_file(p, alias)
        log.info("train: %s -> %s (%d rows)", product, alias, len(table))
    return out


def stage_sweep(ctx: RunContext) -> dict[str, str]:
    c, reg, ann, emb = _load_modeling_inputs(ctx)
    ev = ctx.cfg.evaluation
    q_list = tuple(float(q) for q in ctx.args.q_list.split(",")) if ctx.args.q_list else ev.q_list
    folds = ctx.args.folds or ev.folds
    criteria = (
        [CRITERION_ALIASES[ctx.args.criterion]] if ctx.args.criterion else list(ev.criteria)
    )
    model_names = [ctx.args.model] if ctx.args.model else list(ev.models)
    specs = _model_specs(ctx, model_names)
    auto_candidates = _model_specs(ctx, ["logreg", "gbdt"])

    reports = []
    rankings = []
    for product in _products(ctx, c):
        table = build_features(c, product, emb, ann, ctx.cfg.models.missing_embedding)
        for criterion in criteria:
            ranking = evaluation.rank_variables(
                c, reg, ann, product, criterion, rate_min_support=ev.rate_min_support
            )
            rankings.append(ranking)
            for spec in specs:
                rep = evaluation.sweep(
                    table,
                    reg,
                    ranking,
                    spec,
                    q_list=q_list,
                    k=folds,
                    seed=ctx.cfg.seed,
                    threshold="tune" if ev.tune_threshold else ev.threshold,
                    auto_candidates=auto_candidates,
                    auto_cv_folds=ctx.cfg.models.auto_cv_folds,
                )
                reports.append(rep)
                log.info(
                    "sweep: %s/%s/%s baseline AUC %.4f -> q=100 AUC %.4f",
                    product, criterion, rep.model_label,
                    rep.rows[0].auc_mean, rep.rows[-1].auc_mean,
                )
    p = ctx.tmp("report.tsv")
    evaluation.write_report_table(reports, p)
    out = {"report.tsv": ctx.store.put_file(p, "report.tsv")}
    p = ctx.tmp("rankings.tsv")
    with p.open("w", encoding="utf-8") as fh:
        fh.write("product\tcriterion\tvariable_id\tscore\n")
        for r in rankings:
            for vid, score in r.entries:
                fh.write(f"{r.product_id}\t{r.criterion}\t{vid}\t{score:.12g}\n")
    out["rankings.tsv"] = ctx.store.put_file(p, "rankings.tsv")
    return out


def _reports_from_table(ctx: RunContext) -> list[evaluation.EvalReport]:
    rows = evaluation.read_report_table(ctx.store.alias_path("report.tsv"))
    rankings: dict[tuple[str, str], evaluation.VariableRanking] = {}
    rk_path = ctx.store.alias_path("rankings.tsv")
    if rk_path.exists():
        with rk_path.open("r", encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                product, criterion, vid, score = line.rstrip("\n").split("\t")
                rankings.setdefault(
                    (product, criterion),
                    evaluation.VariableRanking(product_id=product, criterion=criterion, entries=[]),
                ).entries.append((vid, float(score)))
    grouped: dict[tuple[str, str, str, int, str], list[dict]] = {}
    for rec in rows:
        key = (rec["product"], rec["criterion"], rec["model"], rec["seed"], rec["fold_hash"])
        grouped.setdefault(key, []).append(rec)
    reports = []
    for (product, criterion, model, seed, fh_), recs in sorted(grouped.items()):
        sweep_rows = [
            evaluation.SweepRow(
                q=r["q"],
                n_variables=r["n_variables"],
                f1_mean=r["f1_mean"],
                f1_std=r["f1_std"],
                auc_mean=r["auc_mean"],
                auc_std=r["auc_std"],
                f1_impr_pct=r["f1_impr_pct"],
                auc_impr_pct=r["auc_impr_pct"],
                n_folds_ok=r["n_folds_ok"],
            )
            for r in sorted(recs, key=lambda x: x["q"])
        ]
        reports.append(
            evaluation.EvalReport(
                product_id=product,
                criterion=criterion,
                model_label=model,
                rows=sweep_rows,
                seed=seed,
                fold_assignment_hash=fh_,
                ranking=rankings.get((product, criterion)),
            )
        )
    return reports


def stage_report(ctx: RunContext) -> dict[str, str]:
    import shutil

    reports = _reports_from_table(ctx)
    out_dir = ctx.store.root / "report_out"
    files = evaluation.export_report(reports, out_dir)
    log.info("report: wrote %d files under %s", len(files), out_dir)
    staged = ctx.tmp("improvements.tsv")
    shutil.copy(out_dir / "improvements.tsv", staged)
    return {"improvements.tsv": ctx.store.put_file(staged, "improvements.tsv")}


def cmd_curate_serve(ctx: RunContext) -> int:
    run_stage(ctx, "stats")  # ensures the whole upstream chain under --auto
    report, byc, sig = _registry_inputs(ctx)
    rc = ctx.cfg.registry

    def registry_sink(reg: registry_mod.Registry) -> str:
        p = ctx.tmp("registry.tsv")
        registry_mod.write_registry(reg, p)
        digest = ctx.store.put_file(p, "registry.tsv")
        ctx.store.record_stage(
            "registry",
            {"cluster_report.tsv": ctx.store.hash_of("cluster_report.tsv"),
             "votes.tsv": ctx.store.hash_of("votes.tsv")},
            ctx.cfg.section_hash("registry"),
            {"registry.tsv": digest},
        )
        return str(ctx.store.alias_path("registry.tsv"))

    state = curation.CurationState(
        clusters=report,
        phrases_by_cluster=byc,
        roster=rc.experts,
        votes_path=ctx.store.alias_path("votes.tsv"),
        registry_sink=registry_sink,
        negation=ctx.negation_config(),
        significant_products=sig,
    )
    ui_dir = Path(ctx.args.ui_dir) if ctx.args.ui_dir else None
    server = curation.serve(state, port=ctx.args.port, ui_dir=ui_dir)
    host, port = server.server_address[:2]
    print(f"curation service on http://{host}:{port}/ (roster: {', '.join(rc.experts)})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


# ---------------------------------------------------------------- stage graph

STAGES = {
    "synth": (stage_synth, [], ("synth",)),
    "ingest": (stage_ingest, ["@corpus_source"], ("corpus",)),
    "clean": (stage_clean, ["corpus.jsonl"], ("corpus",)),
    "phrases": (stage_phrases, ["cleaned.jsonl"], ("phrasing",)),
    "embed": (stage_embed, ["candidates.tsv"], ("embedding",)),
    "cluster": (stage_cluster, ["phrase_vectors.bin"], ("embedding", "clustering")),
    "stats": (stage_stats, ["clusters.tsv", "cleaned.jsonl"], ("clustering",)),
    "registry": (stage_registry, ["cluster_report.tsv", "clusters.tsv", "candidates.tsv", "@votes"], ("registry",)),
    "annotate": (stage_annotate, ["cleaned.jsonl", "registry.tsv"], ("registry",)),
    "train": (stage_train, ["cleaned.jsonl", "annotations.tsv", "registry.tsv", "@embeddings"], ("models", "evaluation")),
    "sweep": (stage_sweep, ["cleaned.jsonl", "annotations.tsv", "registry.tsv", "@embeddings"], ("models", "evaluation")),
    "report": (stage_report, ["report.tsv", "rankings.tsv"], ("evaluation",)),
}

PRODUCER = {
    "raw_corpus.jsonl": "synth",
    "customer_embeddings.bin": "synth",
    "ground_truth.json": "synth",
    "corpus.jsonl": "ingest",
    "cleaned.jsonl": "clean",
    "cleaning_report.txt": "clean",
    "candidates.tsv": "phrases",
    "phrase_vectors.bin": "embed",
    "clusters.tsv": "cluster",
    "cluster_report.tsv": "stats",
    "registry.tsv": "registry",
    "annotations.tsv": "annotate",
    "report.tsv": "sweep",
    "rankings.tsv": "sweep",
}


def _resolve_deps(ctx: RunContext, deps: list[str]) -> list[tuple[str, str]]:
    """[(alias or external path, kind)] with config-dependent pseudo-deps expanded."""
    resolved = []
    for dep in deps:
        if dep == "@corpus_source":
            if ctx.cfg.corpus.input_path:
                resolved.append((ctx.cfg.corpus.input_path, "external"))
            else:
                resolved.append(("raw_corpus.jsonl", "artifact"))
        elif dep == "@embeddings":
            kind, loc = ctx.embeddings_input()
            resolved.append((loc, kind))
        elif dep == "@votes":
            if not ctx.cfg.registry.auto_accept:
                resolved.append(("votes.tsv", "votes"))
        else:
            resolved.append((dep, "artifact"))
    return resolved


def run_stage(ctx: RunContext, name: str) -> None:
    fn, deps, sections = STAGES[name]
    for loc, kind in _resolve_deps(ctx, deps):
        if kind == "external":
            if not Path(loc).is_file():
                raise StageError(name, f"missing input file: {loc}")
        elif kind == "votes":
            if not ctx.store.has(loc):
                raise StageError(
                    name,
                    "missing artifact: votes.tsv (run 'curate-serve' and collect votes, "
                    "or set registry.auto_accept = true)",
                )
        elif not ctx.store.has(loc):
            producer = PRODUCER.get(loc)
            if producer is None or producer == name:
                raise StageError(name, f"missing artifact: {loc}")
            if not ctx.args.auto:
                raise StageError(name, f"missing artifact: {loc} (run '{producer}' first or pass --auto)")
            run_stage(ctx, producer)

    input_hashes = {}
    for loc, kind in _resolve_deps(ctx, deps):
        input_hashes[loc] = file_sha256(loc) if kind == "external" else ctx.store.hash_of(loc)
    flag_keys = {
        "train": ("product", "model"),
        "sweep": ("product", "model", "criterion", "q_list", "folds"),
    }.get(name, ())
    flag_hash = "|".join(f"{k}={getattr(ctx.args, k, None)}" for k in flag_keys)
    config_hash = ctx.cfg.section_hash(*sections) + (f"+{flag_hash}" if flag_hash else "")

    if ctx.store.stage_up_to_date(name, input_hashes, config_hash):
        log.info("%s: up to date, skipped", name)
        return
    log.info("%s: running", name)
    outputs = fn(ctx)
    ctx.store.record_stage(name, input_hashes, config_hash, outputs)


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--store", default=None, help="artifact store directory")
    common.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
    common.add_argument("--auto", action="store_true", help="run missing upstream stages")
    common.add_argument("--product", default=None, help="restrict to one product id")
    common.add_argument("--criterion", default=None, choices=sorted(CRITERION_ALIASES))
    common.add_argument("--model", default=None, choices=sorted(MODEL_ALIASES))
    common.add_argument("--q-list", dest="q_list", default=None, help="CSV of quantile percentages")
    common.add_argument("--folds", type=int, default=None)
    common.add_argument("--port", type=int, default=8765)
    common.add_argument("--ui-dir", default=None, help="static assets for the curation UI")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ctxtail", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ctxtail {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "curate-serve"):
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed=args.seed)
        store_dir = args.store or os.environ.get("CTXTAIL_STORE", "store")
        store = ArtifactStore(store_dir)
        ctx = RunContext(cfg, store, args)
        with store.lock():
            if args.command == "curate-serve":
                return cmd_curate_serve(ctx)
            run_stage(ctx, args.command)
        return 0
    except (StageError, StoreError, OSError, ValueError) as exc:
        stage = getattr(exc, "stage", args.command)
        print(
            "ERROR " + json.dumps({"stage": stage, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
