"""Quantile-based long-tail evaluation: rank contextual variables by importance,
re-train per-product models on growing head subsets, report F1/ROC-AUC growth.

The sweep reuses one fold assignment across every quantile so that metric
differences between quantiles are paired, not fold noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .metrics import f1_score, fold_hash, kfold_split, roc_auc
from .models import FeatureTable, ModelSpec, auto_select, train
from .registry import Annotations, Registry

log = logging.getLogger(__name__)

CRITERIA = ("propensity_frequency", "propensity_rate")


class EvaluationError(ValueError):
    pass


@dataclass
class VariableRanking:
    product_id: str
    criterion: str
    entries: list[tuple[str, float]]  # (variable_id, score), scores non-increasing

    def variable_ids(self) -> list[str]:
        return [vid for vid, _ in self.entries]


def rank_variables(
    corpus: Corpus,
    registry: Registry,
    annotations: Annotations,
    product: str,
    criterion: str,
    rate_min_support: int = 20,
) -> VariableRanking:
    """Sort variables by importance for one product.

    frequency: number of offer dialogues where the variable is present and the
    outcome is 1.  rate: that count over the number of offer dialogues where
    the variable is present; variables under ``rate_min_support`` co-occurring
    dialogues rank below all others (their rate estimates are unstable, so the
    raw scores are only non-increasing within the stable and unstable blocks),
    and variables never co-occurring with the product are excluded with a
    warning.
    """
    if criterion not in CRITERIA:
        raise EvaluationError(f"unknown criterion {criterion!r}, choose from {CRITERIA}")
    row_of = {did: i for i, did in enumerate(annotations.dialogue_ids)}
    rows, outcomes = [], []
    for d in corpus.dialogues:
        offer = next((o for o in d.offers if o.product_id == product), None)
        if offer is not None:
            rows.append(row_of[d.dialogue_id])
            outcomes.append(offer.outcome)
    if not rows:
        raise EvaluationError(f"product {product!r} never offered")
    sub = annotations.matrix[np.asarray(rows)]
    y = np.asarray(outcomes, dtype=np.int64)
    present = sub.astype(np.int64)
    n_with = present.sum(axis=0)
    freq = (present * y[:, None]).sum(axis=0)

    entries = []
    for i, var in enumerate(registry.variables):
        n = int(n_with[i])
        k = int(freq[i])
        if criterion == "propensity_frequency":
            # ties break by rate, then variable_id
            rate = k / n if n else 0.0
            entries.append((var.variable_id, float(k), (-k, -rate, var.variable_id)))
        else:
            if n == 0:
                log.warning("rank_variables(%s): %s never co-occurs, excluded", product, var.variable_id)
                continue
            rate = k / n
            stable = n >= rate_min_support
            # unstable variables sort below every stable one; ties by frequency then id
            entries.append((var.variable_id, float(rate), (0 if stable else 1, -rate, -k, var.variable_id)))
    entries.sort(key=lambda e: e[2])
    return VariableRanking(product_id=product, criterion=criterion, entries=[(v, s) for v, s, _ in entries])


def select_quantile(ranking: VariableRanking, q: float) -> list[str]:
    """Top floor(q * N / 100) variables; q=0 none, q=100 all."""
    if not 0 <= q <= 100:
        raise EvaluationError(f"q must be in [0, 100], got {q}")
    n = len(ranking.entries)
    take = int(np.floor(q * n / 100.0))
    return [vid for vid, _ in ranking.entries[:take]]


@dataclass
class SweepRow:
    q: float
    n_variables: int
    f1_mean: float
    f1_std: float
    auc_mean: float
    auc_std: float
    f1_impr_pct: float | None = None
    auc_impr_pct: float | None = None
    n_folds_ok: int = 0


@dataclass
class EvalReport:
    product_id: str
    criterion: str
    model_label: str
    rows: list[SweepRow]
    seed: int
    fold_assignment_hash: str
    ranking: VariableRanking | None = None

    def row_for(self, q: float) -> SweepRow:
        for r in self.rows:
            if r.q == q:
                return r
        raise KeyError(q)


def improvement_pct(baseline: float, value: float) -> float:
    """(value - baseline) / baseline in percent, from unrounded inputs."""
    if baseline == 0:
        raise EvaluationError("improvement undefined for zero baseline")
    return (value - baseline) / baseline * 100.0


def format_improvement(baseline: float, value: float) -> str:
    """Percentage formatted to 3 significant figures with an explicit sign."""
    pct = improvement_pct(baseline, value)
    return f"{pct:+.3g}%"


def sweep(
    table: FeatureTable,
    registry: Registry,
    ranking: VariableRanking,
    spec: ModelSpec,
    q_list: tuple[float, ...] = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100),
    k: int = 10,
    seed: int = 0,
    threshold: float | str = 0.5,
    auto_candidates: list[ModelSpec] | None = None,
    auto_cv_folds: int = 2,
) -> EvalReport:
    """Train/evaluate across quantiles with one shared fold assignment.

    ``spec.kind == "auto"`` routes each cell through cross-validated selection
    among ``auto_candidates``.  ``threshold`` is the F1 cutoff: a fixed value,
    or "tune" to pick the F1-maximizing cutoff on each fold's training scores.
    A failing (q, fold) cell is logged and the row aggregates whatever folds
    succeeded (n_folds_ok marks gaps).
    """
    qs = sorted(set(float(q) for q in q_list) | {0.0})
    y = table.y.astype(np.int64)
    folds = kfold_split(y, k=k, seed=seed)
    fh = fold_hash(folds)
    var_index = {v.variable_id: i for i, v in enumerate(registry.variables)}
    all_idx = np.arange(len(table))

    rows: list[SweepRow] = []
    for q in qs:
        chosen = select_quantile(ranking, q)
        cols = [var_index[vid] for vid in chosen]
        X = table.with_context_columns(cols)
        f1s, aucs = [], []
        for fi, val_idx in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, val_idx, assume_unique=False)
            try:
                if spec.kind == "auto":
                    cands = auto_candidates or default_auto_candidates()
                    model = auto_select(X[train_idx], y[train_idx], cands, cv_folds=auto_cv_folds, seed=seed)
                else:
                    model = train(X[train_idx], y[train_idx], spec, seed=seed)
                scores = model.predict_proba(X[val_idx])
                if threshold == "tune":
                    cutoff = tune_f1_threshold(y[train_idx], model.predict_proba(X[train_idx]))
                else:
                    cutoff = float(threshold)
                f1s.append(f1_score(y[val_idx], (scores >= cutoff).astype(int)))
                aucs.append(roc_auc(y[val_idx], scores))
            except Exception as exc:
                log.error("sweep cell failed (q=%s fold=%d): %s", q, fi, exc)
        if not f1s:
            log.error("sweep: every fold failed at q=%s; row marked as gap", q)
            rows.append(SweepRow(q=q, n_variables=len(chosen), f1_mean=float("nan"),
                                 f1_std=float("nan"), auc_mean=float("nan"), auc_std=float("nan"),
                                 n_folds_ok=0))
            continue
        rows.append(
            SweepRow(
                q=q,
                n_variables=len(chosen),
                f1_mean=float(np.mean(f1s)),
                f1_std=float(np.std(f1s)),
                auc_mean=float(np.mean(aucs)),
                auc_std=float(np.std(aucs)),
                n_folds_ok=len(f1s),
            )
        )

    base = rows[0]
    for r in rows:
        if base.f1_mean and np.isfinite(base.f1_mean) and np.isfinite(r.f1_mean):
            r.f1_impr_pct = improvement_pct(base.f1_mean, r.f1_mean)
        if base.auc_mean and np.isfinite(base.auc_mean) and np.isfinite(r.auc_mean):
            r.auc_impr_pct = improvement_pct(base.auc_mean, r.auc_mean)
    label = spec.kind if spec.kind == "auto" else spec.label()
    return EvalReport(
        product_id=ranking.product_id,
        criterion=ranking.criterion,
        model_label=label,
        rows=rows,
        seed=seed,
        fold_assignment_hash=fh,
        ranking=ranking,
    )


def default_auto_candidates() -> list[ModelSpec]:
    return [
        ModelSpec("logreg", {}),
        ModelSpec("gbdt", {}),
    ]


def tune_f1_threshold(y_true, scores) -> float:
    """Threshold maximizing F1 over the score quantile grid (ties: lowest)."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.unique(np.quantile(scores, np.linspace(0.02, 0.98, 25)))
    best_t, best_f1 = 0.5, -1.0
    for t in candidates:
        f1 = f1_score(y_true, (scores >= t).astype(int))
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t


REPORT_COLUMNS = (
    "product",
    "criterion",
    "model",
    "q",
    "n_variables",
    "f1_mean",
    "f1_std",
    "auc_mean",
    "auc_std",
    "f1_impr_pct",
    "auc_impr_pct",
    "n_folds_ok",
    "seed",
    "fold_hash",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_report_table(reports: list[EvalReport], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(REPORT_COLUMNS) + "\n")
        for rep in reports:
            for r in rep.rows:
                fh.write(
                    "\t".join(
                        _fmt(v)
                        for v in (
                            rep.product_id,
                            rep.criterion,
                            rep.model_label,
                            r.q,
                            r.n_variables,
                            r.f1_mean,
                            r.f1_std,
                            r.auc_mean,
                            r.auc_std,
                            r.f1_impr_pct,
                            r.auc_impr_pct,
                            r.n_folds_ok,
                            rep.seed,
                            rep.fold_assignment_hash,
                        )
                    )
                    + "\n"
                )


def read_report_table(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            rec = dict(zip(header, parts))
            for key in ("q", "f1_mean", "f1_std", "auc_mean", "auc_std", "f1_impr_pct", "auc_impr_pct"):
                rec[key] = float(rec[key]) if rec[key] else None
            rec["n_variables"] = int(rec["n_variables"])
            rec["n_folds_ok"] = int(rec["n_folds_ok"])
            rec["seed"] = int(rec["seed"])
            out.append(rec)
    return out


def write_improvement_table(reports: list[EvalReport], path: str | Path,
                            q_show: tuple[float, ...] = (10, 20, 50, 100)) -> None:
    """Improvement summary in the style of a published metrics table."""
    lines = []
    header = ["product", "criterion", "model", "measure", "baseline"] + [f"q={int(q)}%" for q in q_show]
    lines.append("\t".join(header))
    for rep in reports:
        base = rep.row_for(0.0)
        for measure, get, base_v in (
            ("F1", lambda r: r.f1_mean, base.f1_mean),
            ("AUC", lambda r: r.auc_mean, base.auc_mean),
        ):
            cells = [rep.product_id, rep.criterion, rep.model_label, measure, f"{base_v:.3f}"]
            for q in q_show:
                try:
                    r = rep.row_for(float(q))
                    cells.append(f"{get(r):.3f} ({format_improvement(base_v, get(r))})")
                except KeyError:
                    cells.append("")
            lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_report(
    reports: list[EvalReport],
    out_dir: str | Path,
    make_plots: bool = True,
) -> list[Path]:
    """Write the metric table, the improvement table, and vector-graphics plots.

    Plots: metric-vs-q curves per (product, criterion) with one line per model,
    and a ranked-frequency histogram per (product, criterion) where a ranking
    is attached.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EvaluationError(f"cannot create output dir {out_dir}: {exc}")
    written: list[Path] = []

    table = out_dir / "report.tsv"
    write_report_table(reports, table)
    written.append(table)
    impr = out_dir / "improvements.tsv"
    write_improvement_table(reports, impr)
    written.append(impr)

    if not make_plots:
        return written

    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "ctxtail"
    import matplotlib.pyplot as plt

    groups: dict[tuple[str, str], list[EvalReport]] = {}
    for rep in reports:
        groups.setdefault((rep.product_id, rep.criterion), []).append(rep)

    for (product, criterion), reps in sorted(groups.items()):
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for rep in reps:
            qs = [r.q for r in rep.rows]
            axes[0].plot(qs, [r.f1_mean for r in rep.rows], marker="o", label=rep.model_label)
            axes[1].plot(qs, [r.auc_mean for r in rep.rows], marker="o", label=rep.model_label)
        for ax, name in zip(axes, ("F1", "ROC-AUC")):
            ax.set_xlabel("% of context variables used")
            ax.set_ylabel(name)
            ax.legend()
            ax.grid(True, alpha=0.3)
        fig.suptitle(f"{product} / {criterion}")
        fig.tight_layout()
        p = out_dir / f"curves_{_slug(product)}_{criterion}.svg"
        fig.savefig(p, metadata={"Date": None})
        plt.close(fig)
        written.append(p)

        ranking = next((r.ranking for r in reps if r.ranking is not None), None)
        if ranking is not None and ranking.entries:
            fig, ax = plt.subplots(figsize=(7, 4))
            scores = [s for _, s in ranking.entries]
            ax.bar(range(1, len(scores) + 1), scores, width=1.0)
            ax.set_xlabel("variable rank")
            ax.set_ylabel(ranking.criterion)
            ax.set_title(f"{product}: ranked context importance")
            fig.tight_layout()
            p = out_dir / f"longtail_{_slug(product)}_{criterion}.svg"
            fig.savefig(p, metadata={"Date": None})
            plt.close(fig)
            written.append(p)
    return written


def _slug(s: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in s)
