"""Per-product propensity classifiers over [customer embedding || context vector].

``train`` dispatches on ModelSpec.kind to one of four families (logreg,
random_forest, gbdt, factorization_machine); ``auto_select`` replaces the
managed-AutoML workflow by cross-validated selection among candidate specs.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import Corpus
from ..registry import Annotations
from .fm import FactorizationMachine
from .linear import LogisticRegression
from .trees import GradientBoosting, RandomForest, Tree

log = logging.getLogger(__name__)

MODEL_KINDS = ("logreg", "random_forest", "gbdt", "factorization_machine")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def label(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})"


@dataclass
class CustomerEmbeddings:
    ids: tuple[str, ...]
    matrix: np.ndarray  # (n_customers, dim) float32

    def __post_init__(self):
        self._index = {cid: i for i, cid in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def get(self, customer_id: str) -> np.ndarray | None:
        i = self._index.get(customer_id)
        return None if i is None else self.matrix[i]


def write_embeddings(emb: CustomerEmbeddings, path: str | Path) -> None:
    """customer_id -> little-endian float32 array, one record per customer."""
    mat = np.asarray(emb.matrix, dtype="<f4")
    with Path(path).open("wb") as fh:
        fh.write(b"CEMB")
        fh.write(struct.pack("<II", len(emb.ids), mat.shape[1]))
        for cid, row in zip(emb.ids, mat):
            raw = cid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def read_embeddings(path: str | Path) -> CustomerEmbeddings:
    with Path(path).open("rb") as fh:
        if fh.read(4) != b"CEMB":
            raise ModelError(f"not a customer-embedding file: {path}")
        count, dim = struct.unpack("<II", fh.read(8))
        ids = []
        mat = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            (ln,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(ln).decode("utf-8"))
            mat[i] = np.frombuffer(fh.read(4 * dim), dtype="<f4")
    return CustomerEmbeddings(ids=tuple(ids), matrix=mat)


@dataclass
class FeatureTable:
    """Feature rows for one product, ordered by dialogue_id."""

    dialogue_ids: tuple[str, ...]
    X: np.ndarray  # (n, embed_dim + n_variables)
    y: np.ndarray  # (n,) int8
    embed_dim: int
    n_dropped: int = 0

    def __len__(self) -> int:
        return len(self.dialogue_ids)

    def with_context_columns(self, variable_indices) -> np.ndarray:
        """Embeddings plus the chosen context columns (indices into registry order)."""
        idx = np.asarray(sorted(variable_indices), dtype=np.int64)
        if idx.size == 0:
            return self.X[:, : self.embed_dim]
        return np.concatenate([self.X[:, : self.embed_dim], self.X[:, self.embed_dim + idx]], axis=1)


def build_features(
    corpus: Corpus,
    product: str,
    embeddings: CustomerEmbeddings,
    annotations: Annotations,
    missing_embedding: str = "drop",
) -> FeatureTable:
    """One row per dialogue offering the product: x = [Embed_i || Context_k], y = outcome.

    ``missing_embedding`` is "drop" (row skipped and counted) or "zero".
    """
    if missing_embedding not in ("drop", "zero"):
        raise ModelError(f"missing_embedding must be 'drop' or 'zero', got {missing_embedding!r}")
    ann_row = {did: i for i, did in enumerate(annotations.dialogue_ids)}
    rows = []
    for d in corpus.dialogues:
        offer = next((o for o in d.offers if o.product_id == product), None)
        if offer is None:
            continue
        rows.append((d.dialogue_id, d.customer_id, offer.outcome))
    rows.sort(key=lambda r: r[0])

    dim = embeddings.dim
    n_vars = annotations.matrix.shape[1]
    ids, xs, ys = [], [], []
    dropped = 0
    for did, cid, outcome in rows:
        emb = embeddings.get(cid)
        if emb is None:
            if missing_embedding == "drop":
                dropped += 1
                continue
            emb = np.zeros(dim, dtype=np.float32)
        ctx = annotations.matrix[ann_row[did]]
        xs.append(np.concatenate([np.asarray(emb, dtype=np.float64), ctx.astype(np.float64)]))
        ys.append(outcome)
        ids.append(did)
    if dropped:
        log.warning("build_features(%s): %d rows dropped for missing embeddings", product, dropped)
    X = np.vstack(xs) if xs else np.zeros((0, dim + n_vars))
    y = np.asarray(ys, dtype=np.int8)
    return FeatureTable(dialogue_ids=tuple(ids), X=X, y=y, embed_dim=dim, n_dropped=dropped)


class PropensityModel:
    """A trained classifier plus the metadata needed to reuse it safely."""

    def __init__(self, kind: str, impl, feature_dim: int, spec: ModelSpec, seed: int, train_info: dict):
        self.kind = kind
        self.impl = impl
        self.feature_dim = feature_dim
        self.spec = spec
        self.seed = seed
        self.train_info = train_info

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_dim:
            raise ModelError(f"expected {self.feature_dim} features, got {X.shape[1]}")
        p = self.impl.predict_proba(X)
        return np.clip(p, 0.0, 1.0)

    def to_dict(self) -> dict:
        params: dict = {}
        impl = self.impl
        if self.kind == "logreg":
            params = {"w": impl.w.tolist(), "b": impl.b}
        elif self.kind == "factorization_machine":
            params = {"w0": impl.w0, "w": impl.w.tolist(), "V": impl.V.tolist()}
        elif self.kind == "gbdt":
            params = {
                "base_score": impl.base_score,
                "lr": impl.lr,
                "trees": [t.as_dict() for t in impl.trees],
            }
        elif self.kind == "random_forest":
            params = {"trees": [t.as_dict() for t in impl.trees]}
        return {
            "kind": self.kind,
            "spec_params": self.spec.params,
            "feature_dim": self.feature_dim,
            "seed": self.seed,
            "train_info": self.train_info,
            "parameters": params,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PropensityModel":
        kind = d["kind"]
        spec = ModelSpec(kind=kind, params=d.get("spec_params", {}))
        params = d["parameters"]
        if kind == "logreg":
            impl = LogisticRegression(**_ctor_params(spec, LogisticRegression))
            impl.w = np.asarray(params["w"], dtype=np.float64)
            impl.b = float(params["b"])
        elif kind == "factorization_machine":
            impl = FactorizationMachine(**_ctor_params(spec, FactorizationMachine))
            impl.w0 = float(params["w0"])
            impl.w = np.asarray(params["w"], dtype=np.float64)
            impl.V = np.asarray(params["V"], dtype=np.float64)
            if impl.V.ndim == 1:
                impl.V = impl.V.reshape(len(impl.w), 0)
        elif kind == "gbdt":
            impl = GradientBoosting(**_ctor_params(spec, GradientBoosting))
            impl.base_score = float(params["base_score"])
            impl.lr = float(params["lr"])
            impl.trees = [Tree.from_dict(t) for t in params["trees"]]
        elif kind == "random_forest":
            impl = RandomForest(**_ctor_params(spec, RandomForest))
            impl.trees = [Tree.from_dict(t) for t in params["trees"]]
        else:
            raise ModelError(f"unknown model kind: {kind!r}")
        return cls(
            kind=kind,
            impl=impl,
            feature_dim=int(d["feature_dim"]),
            spec=spec,
            seed=int(d.get("seed", 0)),
            train_info=d.get("train_info", {}),
        )


def _ctor_params(spec: ModelSpec, cls) -> dict:
    import inspect

    allowed = set(inspect.signature(cls.__init__).parameters) - {"self"}
    return {k: v for k, v in spec.params.items() if k in allowed}


_IMPLS = {
    "logreg": LogisticRegression,
    "random_forest": RandomForest,
    "gbdt": GradientBoosting,
    "factorization_machine": FactorizationMachine,
}


def train(X: np.ndarray, y: np.ndarray, spec: ModelSpec, seed: int = 0) -> PropensityModel:
    """Deterministic fit of the requested family on (X, y)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ModelError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ModelError("non-finite features")
    classes = np.unique(y)
    if classes.size < 2:
        raise ModelError("training data contains a single class")
    if spec.kind not in _IMPLS:
        raise ModelError(f"unknown model kind: {spec.kind!r} (choose from {MODEL_KINDS})")
    cls = _IMPLS[spec.kind]
    kwargs = _ctor_params(spec, cls)
    if "seed" in _ctor_signature(cls):
        kwargs.setdefault("seed", seed)
    impl = cls(**kwargs).fit(X, y.astype(np.float64))
    info = {"n_samples": int(X.shape[0])}
    if hasattr(impl, "loss_curve"):
        info["loss_curve"] = [float(v) for v in impl.loss_curve]
    return PropensityModel(
        kind=spec.kind, impl=impl, feature_dim=X.shape[1], spec=spec, seed=seed, train_info=info
    )


def _ctor_signature(cls) -> set[str]:
    import inspect

    return set(inspect.signature(cls.__init__).parameters)


def predict_proba(model: PropensityModel, x: np.ndarray) -> np.ndarray:
    """Propensity scores in [0, 1]; accepts a single row or a matrix."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    p = model.predict_proba(np.atleast_2d(arr))
    return float(p[0]) if single else p


def auto_select(
    X: np.ndarray,
    y: np.ndarray,
    candidates: list[ModelSpec],
    cv_folds: int = 3,
    seed: int = 0,
) -> PropensityModel:
    """Pick the candidate with the best mean validation AUC, refit on all rows.

    The selection log (per-candidate fold AUCs) rides along in train_info.
    """
    from ..metrics import kfold_split, roc_auc

    if not candidates:
        raise ModelError("auto_select needs at least one candidate spec")
    y_arr = np.asarray(y).ravel()
    folds = kfold_split(y_arr, k=cv_folds, seed=seed)
    scores: list[tuple[float, int]] = []
    sel_log = []
    n = y_arr.size
    all_idx = np.arange(n)
    failures = 0
    for ci, spec in enumerate(candidates):
        fold_aucs = []
        try:
            for f in folds:
                train_idx = np.setdiff1d(all_idx, f, assume_unique=False)
                m = train(X[train_idx], y_arr[train_idx], spec, seed=seed)
                fold_aucs.append(roc_auc(y_arr[f], m.predict_proba(X[f])))
            mean_auc = float(np.mean(fold_aucs))
        except (ModelError, ValueError) as exc:
            log.warning("auto_select: candidate %s failed: %s", spec.label(), exc)
            failures += 1
            mean_auc = -np.inf
        scores.append((mean_auc, -ci))
        sel_log.append({"spec": spec.label(), "mean_auc": None if mean_auc == -np.inf else mean_auc})
    if failures == len(candidates):
        raise ModelError("auto_select: every candidate failed to train")
    best_ci = -max(scores)[1]
    best = candidates[best_ci]
    model = train(X, y_arr, best, seed=seed)
    model.train_info["selection_log"] = sel_log
    model.train_info["selected"] = best.label()
    return model


def save_model(model: PropensityModel, path: str | Path, registry_hash: str = "") -> None:
    d = model.to_dict()
    d["registry_hash"] = registry_hash
    Path(path).write_text(json.dumps(d, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path, expect_registry_hash: str | None = None) -> PropensityModel:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if expect_registry_hash is not None and d.get("registry_hash") != expect_registry_hash:
        raise ModelError(
            f"registry hash mismatch: bundle has {d.get('registry_hash')!r}, "
            f"expected {expect_registry_hash!r}"
        )
    return PropensityModel.from_dict(d)
