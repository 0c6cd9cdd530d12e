"""YAML experiment configuration."""

from __future__ import annotations

import copy
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .textutil import canonical_json, sha256_hex

_TOP_KEYS = {
    "seed", "cache_dir", "output_dir", "corpora", "providers", "actors", "judges", "k",
    "n_author", "n_imposter", "n_contrast", "n_cycles", "with_metadata",
    "isolation_with_metadata", "eval_docs_per_author", "am_rank", "av_probe", "metrics",
    "lda", "detector", "char_budget", "target_words",
}


@dataclass(frozen=True)
class CorpusSpec:
    name: str
    path: Path | None = None
    synthetic: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class ProviderSpec:
    id: str
    mock: str | None = None
    verify: str = "oracle"
    endpoint: str = ""
    model: str = ""
    max_in_flight: int = 4
    temperature: float | None = 0.0
    accepted_doc_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class MetricsSpec:
    n_bins: int = 20
    order: int = 3
    discount: float = 0.75


@dataclass(frozen=True)
class LdaSpec:
    K: int = 10
    iterations: int = 500
    alpha: float | None = None
    beta: float = 0.01
    top_n: int = 10
    fold_in_iterations: int = 50
    stopwords: bool = True


@dataclass(frozen=True)
class DetectorSpec:
    id: str
    mock: bool = False
    endpoint: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    corpora: tuple[CorpusSpec, ...]
    providers: tuple[ProviderSpec, ...]
    cache_dir: Path
    output_dir: Path
    actors: tuple[str, ...] = ()
    judges: Mapping[str, str] | None = None
    k: int = 5
    n_author: int = 10
    n_imposter: int = 10
    n_contrast: int = 5
    n_cycles: int = 5
    with_metadata: tuple[bool, ...] = (True, False)
    isolation_with_metadata: bool = True
    eval_docs_per_author: int | None = None
    am_rank: str = "plain"
    av_probe: str = "original"
    metrics: MetricsSpec = field(default_factory=MetricsSpec)
    lda: LdaSpec = field(default_factory=LdaSpec)
    detector: DetectorSpec | None = None
    char_budget: int = 24_000
    target_words: int | None = None
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.raw))

    def provider(self, provider_id: str) -> ProviderSpec:
        for p in self.providers:
            if p.id == provider_id:
                return p
        raise ConfigError(f"provider {provider_id!r} is not defined")

    @property
    def actor_ids(self) -> tuple[str, ...]:
        return self.actors or tuple(p.id for p in self.providers)


def _need(d: Mapping, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing {key!r}")
    return d[key]


def _sub(cls, d: Mapping | None, where: str):
    d = dict(d or {})
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _resolve(base: Path, p: str | os.PathLike) -> Path:
    p = Path(os.path.expanduser(str(p)))
    return p if p.is_absolute() else (base / p)


def from_dict(raw: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate a parsed config; relative paths are taken relative to ``base_dir``."""
    raw = copy.deepcopy(dict(raw))
    base = Path(base_dir)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "seed" not in raw or not isinstance(raw["seed"], int):
        raise ConfigError("config needs an integer 'seed'")

    corpora = []
    for i, c in enumerate(_need(raw, "corpora", "config")):
        name = _need(c, "name", f"corpora[{i}]")
        if ("path" in c) == ("synthetic" in c):
            raise ConfigError(f"corpus {name!r}: give exactly one of 'path' or 'synthetic'")
        corpora.append(CorpusSpec(name, _resolve(base, c["path"]) if "path" in c else None,
                                  dict(c["synthetic"] or {}) if "synthetic" in c else None))
    if not corpora:
        raise ConfigError("at least one corpus is required")
    if len({c.name for c in corpora}) != len(corpora):
        raise ConfigError("corpus names must be unique")

    providers = []
    for i, p in enumerate(_need(raw, "providers", "config")):
        p = dict(p)
        if "accepted_doc_ids" in p:
            p["accepted_doc_ids"] = tuple(p["accepted_doc_ids"])
        spec = _sub(ProviderSpec, p, f"providers[{i}]")
        if spec.mock is None and not (spec.endpoint and spec.model):
            raise ConfigError(f"provider {spec.id!r}: non-mock providers need endpoint and model")
        providers.append(spec)
    ids = [p.id for p in providers]
    if not ids or len(set(ids)) != len(ids):
        raise ConfigError("provider ids must be present and unique")

    actors = tuple(raw.get("actors") or ())
    judges = raw.get("judges")
    referenced = list(actors) + (list(judges.values()) if judges else [])
    for pid in referenced:
        if pid not in ids:
            raise ConfigError(f"referenced provider {pid!r} is not defined")
    if judges is not None and set(judges) != {"ao", "am", "av"}:
        raise ConfigError("judges override needs exactly the keys ao, am, av")

    flags = raw.get("with_metadata", [True, False])
    if isinstance(flags, bool):
        flags = [flags]
    if not flags or not all(isinstance(f, bool) for f in flags):
        raise ConfigError("with_metadata must be a non-empty list of booleans")

    cache_dir = os.environ.get("APEVAL_CACHE_DIR") or raw.get("cache_dir", ".apeval-cache")
    det = raw.get("detector")
    cfg = ExperimentConfig(
        seed=raw["seed"],
        corpora=tuple(corpora),
        providers=tuple(providers),
        cache_dir=_resolve(base, cache_dir),
        output_dir=_resolve(base, raw.get("output_dir", "runs")),
        actors=actors,
        judges=dict(judges) if judges else None,
        k=int(raw.get("k", 5)),
        n_author=int(raw.get("n_author", 10)),
        n_imposter=int(raw.get("n_imposter", 10)),
        n_contrast=int(raw.get("n_contrast", 5)),
        n_cycles=int(raw.get("n_cycles", 5)),
        with_metadata=tuple(flags),
        isolation_with_metadata=bool(raw.get("isolation_with_metadata", True)),
        eval_docs_per_author=raw.get("eval_docs_per_author"),
        am_rank=raw.get("am_rank", "plain"),
        av_probe=raw.get("av_probe", "original"),
        metrics=_sub(MetricsSpec, raw.get("metrics"), "metrics"),
        lda=_sub(LdaSpec, raw.get("lda"), "lda"),
        detector=_sub(DetectorSpec, det, "detector") if det else None,
        char_budget=int(raw.get("char_budget", 24_000)),
        target_words=raw.get("target_words"),
        raw=raw,
    )
    if cfg.k < 2:
        raise ConfigError("k must be at least 2 (exemplar transforms use k-1 neighbours)")
    if cfg.n_cycles < 0:
        raise ConfigError("n_cycles must be >= 0")
    if cfg.am_rank not in ("plain", "distance"):
        raise ConfigError("am_rank must be 'plain' or 'distance'")
    if cfg.av_probe not in ("original", "output"):
        raise ConfigError("av_probe must be 'original' or 'output'")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(raw, path.parent)


def with_overrides(cfg: ExperimentConfig, providers: Sequence[str] | None = None,
                   dataset: str | None = None, cycles: int | None = None,
                   with_metadata: Sequence[bool] | None = None) -> ExperimentConfig:
    """Apply CLI overrides by editing the raw mapping and re-validating it."""
    raw = copy.deepcopy(dict(cfg.raw))
    if providers:
        for pid in providers:
            cfg.provider(pid)
        raw["actors"] = list(providers)
    if dataset:
        keep = [c for c in raw["corpora"] if c["name"] == dataset]
        if not keep:
            raise ConfigError(f"dataset {dataset!r} is not configured")
        raw["corpora"] = keep
    if cycles is not None:
        raw["n_cycles"] = cycles
    if with_metadata:
        raw["with_metadata"] = list(with_metadata)
    out = from_dict(raw, ".")
    # paths were already resolved once; keep them
    return _keep_paths(out, cfg)


def _keep_paths(new: ExperimentConfig, old: ExperimentConfig) -> ExperimentConfig:
    import dataclasses

    paths = {c.name: c.path for c in old.corpora}
    corpora = tuple(dataclasses.replace(c, path=paths.get(c.name, c.path)) for c in new.corpora)
    return dataclasses.replace(new, corpora=corpora, cache_dir=old.cache_dir,
                               output_dir=old.output_dir)


def parse_bool_list(text: str) -> list[bool]:
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        if part in ("true", "1", "yes", "on"):
            out.append(True)
        elif part in ("false", "0", "no", "off"):
            out.append(False)
        else:
            raise ConfigError(f"not a boolean: {part!r}")
    return out
