"""Pipeline configuration: sectioned key=value files with command-line overrides."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from depthpipe.errors import ConfigError
from depthpipe.normalize import StdnConfig

STREAMS = ("spatial", "temporal")


def _ints(text: str) -> tuple:
    text = str(text).strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.replace("x", ",").split(","))


def _words(text: str) -> tuple:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class PipelineConfig:
    stdn: StdnConfig = field(default_factory=StdnConfig)
    norm_mode: str = "stdn"
    clip_len_n: int = 10
    extractor: str = "toy"
    flat_dim: int = 4096
    map_shape: tuple = (7, 7, 512)
    pca_dim: int = 64
    vlad_k: int = 256
    vlad_dim: int = 16384
    spp_levels: tuple = (1, 2)
    stride: int = 1
    max_fit_descriptors: int = 20000
    streams: tuple = STREAMS
    fusion_mode: str = "early"
    tune_fraction: float = 0.2
    svm_c: float = 1.0
    grid_step: float = 0.05
    seed: int = 7
    jobs: int = 1
    cache_dir: str = ""

    def __post_init__(self):
        if self.norm_mode not in ("stdn", "intra", "none"):
            raise ConfigError(f"normalize.mode must be stdn|intra|none, got {self.norm_mode!r}")
        if self.clip_len_n < 2:
            raise ConfigError("motion.clip_len must be >= 2")
        if self.pca_dim < 1 or self.vlad_k < 1:
            raise ConfigError("pca_dim and vlad_k must be positive")
        if self.pca_dim * self.vlad_k != self.vlad_dim:
            raise ConfigError(
                f"pca_dim*vlad_k = {self.pca_dim * self.vlad_k} != declared vlad_dim {self.vlad_dim}"
            )
        if self.pca_dim > self.map_shape[2]:
            raise ConfigError("pca_dim exceeds the feature-map channel count")
        if self.stride < 1 or self.jobs < 1:
            raise ConfigError("stride and jobs must be >= 1")
        if not self.streams or any(s not in STREAMS for s in self.streams):
            raise ConfigError(f"fusion.streams must be a subset of {STREAMS}")
        if self.fusion_mode not in ("early", "late"):
            raise ConfigError("fusion.mode must be early or late")
        if not 0 < self.tune_fraction < 1:
            raise ConfigError("fusion.tune_fraction must lie in (0, 1)")
        if self.svm_c <= 0:
            raise ConfigError("classify.c must be positive")

    def resolved_cache_dir(self, out_dir) -> Path:
        if self.cache_dir:
            return Path(self.cache_dir)
        env = os.environ.get("DEPTHPIPE_CACHE")
        return Path(env) if env else Path(out_dir) / "cache"


# dotted config key -> (field, parser); `stdn.*` fields live on the nested StdnConfig
KEYS = {
    "normalize.window": ("stdn.window_n", int),
    "normalize.bands": ("stdn.bands", int),
    "normalize.percentile": ("stdn.percentile_p", float),
    "normalize.mode": ("norm_mode", str),
    "motion.clip_len": ("clip_len_n", int),
    "features.extractor": ("extractor", str),
    "features.flat_dim": ("flat_dim", int),
    "features.map_shape": ("map_shape", _ints),
    "features.pca_dim": ("pca_dim", int),
    "features.vlad_k": ("vlad_k", int),
    "features.vlad_dim": ("vlad_dim", int),
    "features.spp": ("spp_levels", _ints),
    "features.stride": ("stride", int),
    "features.max_fit_descriptors": ("max_fit_descriptors", int),
    "fusion.mode": ("fusion_mode", str),
    "fusion.streams": ("streams", _words),
    "fusion.tune_fraction": ("tune_fraction", float),
    "classify.c": ("svm_c", float),
    "classify.grid_step": ("grid_step", float),
    "pipeline.seed": ("seed", int),
    "pipeline.jobs": ("jobs", int),
    "pipeline.cache_dir": ("cache_dir", str),
}


def resolve_key(key: str) -> str:
    """Accept `section.key`, or a bare key when it is unambiguous."""
    key = key.replace("-", "_")
    if key in KEYS:
        return key
    matches = [k for k in KEYS if k.split(".", 1)[1] == key]
    if len(matches) == 1:
        return matches[0]
    if matches:
        raise ConfigError(f"ambiguous key {key!r}: {matches}")
    raise ConfigError(f"unknown config key {key!r}")


def build_config(values: dict) -> PipelineConfig:
    top, stdn = {}, {}
    for key, raw in values.items():
        name, parse = KEYS[resolve_key(key)]
        try:
            value = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
        if name.startswith("stdn."):
            stdn[name[5:]] = value
        else:
            top[name] = value
    try:
        return PipelineConfig(stdn=StdnConfig(**stdn), **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def read_config_file(path) -> dict:
    """Flat keys before the first section header belong to [pipeline]."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[pipeline]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            values[resolve_key(f"{section}.{key}")] = raw.strip().strip('"')
    return values


def parse_overrides(args: list) -> dict:
    """Turn ['--normalize.window', '8', '--seed=3'] into {'normalize.window': '8', ...}."""
    values, i = {}, 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        tok = tok[2:]
        if "=" in tok:
            key, raw = tok.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"--{tok} needs a value")
            key, raw = tok, args[i + 1]
            i += 2
        values[resolve_key(key)] = raw
    return values


def load_config(path=None, overrides=None) -> PipelineConfig:
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return build_config(values)


def dump_config(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)
