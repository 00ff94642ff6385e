"""Pipeline configuration: every stage threshold with its paper default.

Loads flat TOML, applies MMCORPUS_* environment overrides, and
serializes verbatim into the run manifest so identical manifests plus
identical inputs reproduce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "MMCORPUS_"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # inputs / outputs
    warcs: list[str] = field(default_factory=list)
    out_dir: str = "out"
    seed: int = 7
    threads: int = 1

    # scorer
    stub_mode: bool = True
    sidecar_endpoint: str = "127.0.0.1:9090"
    embed_dim: int = 64
    scorer_retries: int = 2

    # extract gates
    min_doc_bytes: int = 500
    min_text_nodes: int = 3
    max_image_nodes: int = 30

    # language id / routing
    lid_top_k: int = 3
    languages: list[str] = field(default_factory=list)   # empty = full table
    deny_languages: list[str] = field(default_factory=list)
    plan_counts_file: str = ""      # JSON {lang: doc count} from prior dumps
    plan_high_resource_k: int = 6
    plan_low_resource_threshold: int = 1_000_000

    # text node filtering
    min_bytes_latin: int = 5
    min_bytes_nonlatin: int = 15
    min_bytes_cleaned: int = 5
    min_bytes_post: int = 10
    digit_ratio_max: float = 0.30
    nonalpha_ratio_max: float = 0.33
    caps_ratio_max: float = 0.20
    char_dominance_max: float = 0.33
    angle_symbol_max: int = 2

    # document filtering
    min_doc_text_nodes: int = 5
    min_doc_chars: int = 300
    nsfw_wordlist: str = ""         # path; empty = bundled default list

    # dedup
    lsh_threshold: float = 0.8
    minhash_perms: int = 256
    feature_space: int = 2_097_152
    lev_threshold: float = 0.95
    lev_convention: str = "uniform"

    # image fetching
    user_agent: str = "mmcorpus-bot/0.1"
    per_host_concurrency: int = 2
    per_host_delay_ms: int = 1000
    timeout_ms: int = 30000
    max_image_bytes: int = 20 * 1024 * 1024
    respect_robots: bool = True
    fetch_retries: int = 2
    fetch_workers: int = 8

    # image filtering
    min_side: int = 150
    aspect_min: float = 1.0 / 3.0
    aspect_max: float = 3.0
    porn_hentai_sum: float = 0.8
    nudenet_exposed: float = 0.5
    safer_porn: float = 0.8
    csam_threshold: float = 0.4
    image_cap: int = 10
    contamination_file: str = ""

    # joint filter
    joint_negatives: int = 63
    joint_top: int = 8
    joint_pool_cap: int = 10_000
    joint_two_pass: bool = True
    joint_min_doc_bytes: int = 100

    # sharding
    max_docs_per_shard: int = 100_000

    def to_manifest(self) -> dict:
        return {"config": asdict(self)}

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_LIST_FIELDS = {"warcs", "languages", "deny_languages"}


def _coerce(name: str, kind, raw):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
        raise ConfigError(f"{name}: cannot parse {raw!r} as bool")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if name in _LIST_FIELDS:
        if isinstance(raw, list):
            return [str(x) for x in raw]
        return [s for s in str(raw).split(",") if s]
    return str(raw)


def _field_types() -> dict[str, type]:
    types = {}
    for f in fields(PipelineConfig):
        if f.name in _LIST_FIELDS:
            types[f.name] = list
        else:
            types[f.name] = type(getattr(PipelineConfig(), f.name))
    return types


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Build a config from (optional) TOML file, env vars, then overrides."""
    values: dict = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(data)
    for key, raw in os.environ.items():
        if key.startswith(ENV_PREFIX):
            values[key[len(ENV_PREFIX):].lower()] = raw
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    types = _field_types()
    unknown = [k for k in values if k not in types]
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, raw in values.items():
        try:
            kwargs[key] = _coerce(key, types[key], raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
    cfg = PipelineConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    if not 0 < cfg.lsh_threshold < 1:
        raise ConfigError("lsh_threshold must be in (0, 1)")
    if cfg.minhash_perms < 1:
        raise ConfigError("minhash_perms must be positive")
    if cfg.lev_convention not in ("uniform", "indel"):
        raise ConfigError("lev_convention must be uniform or indel")
    if cfg.max_image_bytes <= 0:
        raise ConfigError("max_image_bytes must be positive")
    for name in ("digit_ratio_max", "nonalpha_ratio_max", "caps_ratio_max",
                 "char_dominance_max"):
        v = getattr(cfg, name)
        if not 0 < v <= 1:
            raise ConfigError(f"{name} must be in (0, 1]")
    for name in ("porn_hentai_sum", "nudenet_exposed", "safer_porn", "csam_threshold"):
        v = getattr(cfg, name)
        if not 0 < v < 1:
            raise ConfigError(f"{name} must be in (0, 1)")
