"""Pipeline configuration and its INI round trip."""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields

from .errors import ParameterError


@dataclass
class InputConfig:
    path: str = ""


@dataclass
class ICAConfig:
    n_components: int = 6  # 0 selects the 95%-variance rule
    rng_seed: int = 0
    max_iter: int = 500
    correlation_mode: str = "absolute"
    n_clusters: int = 3
    n_select: int = 2
    ic_indices: list[int] = field(default_factory=list)


@dataclass
class SeedConfig:
    radius: float = 6.0
    n_seeds: int = 0  # 0: 15 per map for cohorts, 30 for a single subject


@dataclass
class PCAConfig:
    drop_leading: int = 2
    drop_trailing: int = 0
    variance_floor_fraction: float = 1e-4


@dataclass
class PLSConfig:
    K: int = 1
    sweep: list[int] = field(default_factory=list)


@dataclass
class ParcelConfig:
    K_p: int = 600
    dims: int = 20
    rng_seed: int = 0
    n_restarts: int = 10


@dataclass
class EvalConfig:
    glm_threshold: float = 2.0
    pls_threshold: float = 3.0
    literal_t_denominator: bool = False


@dataclass
class PipelineConfig:
    input: InputConfig = field(default_factory=InputConfig)
    ica: ICAConfig = field(default_factory=ICAConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    pca: PCAConfig = field(default_factory=PCAConfig)
    pls: PLSConfig = field(default_factory=PLSConfig)
    parcellate: ParcelConfig = field(default_factory=ParcelConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)

    def pls_arms(self) -> list[int]:
        return sorted(set(self.pls.sweep) | {self.pls.K})

    def validate(self) -> None:
        if not self.input.path:
            raise ParameterError("missing required field: input.path")
        if self.ica.correlation_mode not in ("absolute", "signed"):
            raise ParameterError("ica.correlation_mode must be 'absolute' or 'signed'")
        if self.seeds.radius <= 0:
            raise ParameterError("seeds.radius must be positive")
        if min(self.pls_arms()) < 1:
            raise ParameterError("pls.K must be >= 1")
        if self.parcellate.K_p < 1 or self.parcellate.dims < 1:
            raise ParameterError("parcellate.K_p and parcellate.dims must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ParameterError(f"not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, list):
        return [int(v) for v in text.split(",") if v.strip()]
    return text


def to_ini(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for sec in fields(cfg):
        section = getattr(cfg, sec.name)
        parser[sec.name] = {f.name: _fmt(getattr(section, f.name)) for f in fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_ini(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(text)
    cfg = PipelineConfig()
    known = {f.name for f in fields(cfg)}
    for name in parser.sections():
        if name not in known:
            raise ParameterError(f"unknown config section [{name}]")
        section = getattr(cfg, name)
        names = {f.name for f in fields(section)}
        for key, raw in parser[name].items():
            if key not in names:
                raise ParameterError(f"unknown key {name}.{key}")
            try:
                setattr(section, key, _parse(raw, getattr(section, key)))
            except ValueError as exc:
                raise ParameterError(f"{name}.{key}: {exc}") from None
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return from_ini(fh.read())
