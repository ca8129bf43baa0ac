"""Pipeline configuration: one INI file with a section per stage.

Every default lives here so a run with no config file is fully specified;
flags override file values.  Section contents hash into the manifest, so any
edit reruns exactly the stages it touches.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .registry import DEFAULT_NEGATION_CUES
from .synthgen import DEFAULT_PRODUCTS, ProductSpec, SynthConfig


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


@dataclass(frozen=True)
class CorpusSection:
    input_path: str = ""
    min_customer_lines: int = 2
    merge_transcripts: bool = False


@dataclass(frozen=True)
class PhrasingSection:
    max_phrase_len: int = 4
    min_support: int = 50
    alpha: float = 0.01
    bonferroni: bool = False
    drop_stop_phrases: bool = True


@dataclass(frozen=True)
class EmbeddingSection:
    provider: str = "hashing"  # hashing | remote
    dim: int = 768
    seed: int = 13
    pca_dim: int = 50
    remote_url: str = ""
    cache_dir: str = ""
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5


@dataclass(frozen=True)
class ClusteringSection:
    dbscan_min_pts: tuple[int, ...] = (3, 5, 10)
    dbscan_eps_quantiles: int = 10
    agglo_linkages: tuple[str, ...] = ("average", "ward")
    agglo_n_clusters: tuple[int, ...] = ()  # empty: derived from the point count
    min_cluster_size: int = 3
    min_rate_deviation: float = 0.0  # 0 disables
    max_past_tense: float = 1.0  # 1 disables


@dataclass(frozen=True)
class RegistrySection:
    experts: tuple[str, ...] = ("expert1", "expert2", "expert3")
    negation_cues: tuple[str, ...] = DEFAULT_NEGATION_CUES
    negation_window: int = 3
    negated_clusters: tuple[int, ...] = ()
    auto_accept: bool = False


@dataclass(frozen=True)
class ModelsSection:
    class_weight: bool = True
    missing_embedding: str = "drop"
    embeddings_path: str = ""  # external customer embeddings; synth output otherwise
    logreg_max_iter: int = 200
    logreg_l2: float = 1e-4
    rf_n_trees: int = 50
    rf_max_depth: int = 8
    gbdt_n_trees: int = 60
    gbdt_lr: float = 0.15
    gbdt_max_depth: int = 3
    fm_n_factors: int = 8
    fm_epochs: int = 30
    auto_cv_folds: int = 2

    def spec_params(self, kind: str) -> dict:
        common = {"class_weight": self.class_weight}
        per_kind = {
            "logreg": {"max_iter": self.logreg_max_iter, "l2": self.logreg_l2},
            "random_forest": {"n_trees": self.rf_n_trees, "max_depth": self.rf_max_depth},
            "gbdt": {
                "n_trees": self.gbdt_n_trees,
                "lr": self.gbdt_lr,
                "max_depth": self.gbdt_max_depth,
            },
            "factorization_machine": {"n_factors": self.fm_n_factors, "epochs": self.fm_epochs},
        }
        return {**common, **per_kind.get(kind, {})}


@dataclass(frozen=True)
class EvalSection:
    q_list: tuple[float, ...] = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    folds: int = 10
    threshold: float = 0.5
    tune_threshold: bool = False  # pick the F1 cutoff on training scores instead
    rate_min_support: int = 20
    models: tuple[str, ...] = ("gbdt",)
    criteria: tuple[str, ...] = ("propensity_frequency",)
    products: tuple[str, ...] = ()  # empty: every product in the corpus


@dataclass(frozen=True)
class SynthSection:
    n_dialogues: int = 5000
    n_customers: int = 0  # 0: unique per dialogue
    n_variables: int = 50
    zipf_exponent: float = 1.1
    mean_active_vars: float = 3.0
    effect_head: float = 0.7
    effect_tail: float = 2.0
    negative_share: float = 0.3
    phrases_per_variable: int = 2
    filler_vocab_size: int = 1200
    negation_rate: float = 0.0
    trait_coef: float = 1.0
    embed_dim: int = 16
    embed_noise: float = 0.75
    products: str = ""  # "id:rate:weight,id:rate:weight"; empty: built-in defaults

    def to_synth_config(self, seed: int) -> SynthConfig:
        if self.products:
            specs = []
            for chunk in _split(self.products):
                pid, rate, weight = chunk.split(":")
                specs.append(ProductSpec(pid, float(rate), float(weight)))
            products = tuple(specs)
        else:
            products = DEFAULT_PRODUCTS
        return SynthConfig(
            seed=seed,
            n_dialogues=self.n_dialogues,
            n_customers=self.n_customers or None,
            products=products,
            n_variables=self.n_variables,
            zipf_exponent=self.zipf_exponent,
            mean_active_vars=self.mean_active_vars,
            effect_head=self.effect_head,
            effect_tail=self.effect_tail,
            negative_share=self.negative_share,
            phrases_per_variable=self.phrases_per_variable,
            filler_vocab_size=self.filler_vocab_size,
            negation_rate=self.negation_rate,
            trait_coef=self.trait_coef,
            embed_dim=self.embed_dim,
            embed_noise=self.embed_noise,
        )


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    corpus: CorpusSection = field(default_factory=CorpusSection)
    phrasing: PhrasingSection = field(default_factory=PhrasingSection)
    embedding: EmbeddingSection = field(default_factory=EmbeddingSection)
    clustering: ClusteringSection = field(default_factory=ClusteringSection)
    registry: RegistrySection = field(default_factory=RegistrySection)
    models: ModelsSection = field(default_factory=ModelsSection)
    evaluation: EvalSection = field(default_factory=EvalSection)
    synth: SynthSection = field(default_factory=SynthSection)

    def section_hash(self, *names: str) -> str:
        payload = {"seed": self.seed}
        for name in names:
            payload[name] = asdict(getattr(self, name))
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_TUPLE_PARSERS = {
    tuple[int, ...]: lambda v: tuple(int(x) for x in _split(v)),
    tuple[float, ...]: lambda v: tuple(float(x) for x in _split(v)),
    tuple[str, ...]: lambda v: tuple(_split(v)),
}


def _coerce(f, raw: str):
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if f.type in ("bool", bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if f.type in ("str", str):
        return raw
    for tname, parser in (
        ("tuple[int, ...]", _TUPLE_PARSERS[tuple[int, ...]]),
        ("tuple[float, ...]", _TUPLE_PARSERS[tuple[float, ...]]),
        ("tuple[str, ...]", _TUPLE_PARSERS[tuple[str, ...]]),
    ):
        if str(f.type) == tname or f.type == tname:
            return parser(raw)
    raise ValueError(f"cannot parse config field {f.name} of type {f.type}")


def _section(cls, parser: configparser.ConfigParser, name: str):
    kwargs = {}
    if parser.has_section(name):
        for f in fields(cls):
            if parser.has_option(name, f.name):
                kwargs[f.name] = _coerce(f, parser.get(name, f.name))
    return cls(**kwargs)


def load_config(path: str | Path | None = None, seed: int | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        read = parser.read(str(path))
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
    cfg_seed = 0
    if parser.has_option("run", "seed"):
        cfg_seed = parser.getint("run", "seed")
    if seed is not None:
        cfg_seed = seed
    return PipelineConfig(
        seed=cfg_seed,
        corpus=_section(CorpusSection, parser, "corpus"),
        phrasing=_section(PhrasingSection, parser, "phrasing"),
        embedding=_section(EmbeddingSection, parser, "embedding"),
        clustering=_section(ClusteringSection, parser, "clustering"),
        registry=_section(RegistrySection, parser, "registry"),
        models=_section(ModelsSection, parser, "models"),
        evaluation=_section(EvalSection, parser, "evaluation"),
        synth=_section(SynthSection, parser, "synth"),
    )
