"""Plain-text ``key = value`` run configuration shared by all subcommands."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import Ablation
from .transport import OtConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # inputs and outputs
    descriptors: str = ""
    rankings: str = ""
    ground_truth: str = ""
    checkpoint: str = ""
    out: str = ""
    # model and refinement
    dim: int = 128
    lam: float = 0.1
    iterations: int = 10
    ln_eps: float = 1e-5
    m: int = 600  # descriptors per image at inference
    log_domain: bool = False  # inference only; training always runs in the log domain
    # training
    batch_size: int = 200
    m_min: int = 100
    m_max: int = 400
    lr: float = 5e-4
    epochs: int = 10
    warmup_fraction: float = 0.1
    weight_decay: float = 1e-2
    tau: float = 1.0
    hard_pool: int = 10
    ablation: str = "none"
    # re-ranking and evaluation
    method: str = "elvis"
    k: int = 400
    metric: str = "map@100"
    # execution
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            (self.lam > 0, "lam must be > 0"),
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.k >= 1, "k must be >= 1"),
            (self.m >= 1, "m must be >= 1"),
            (self.dim >= 1, "dim must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (1 <= self.m_min <= self.m_max, "need 1 <= m_min <= m_max"),
            (self.lr >= 0, "lr must be >= 0"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (0 <= self.warmup_fraction <= 1, "warmup_fraction must lie in [0, 1]"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.tau > 0, "tau must be > 0"),
            (self.hard_pool >= 1, "hard_pool must be >= 1"),
            (self.threads >= 1, "threads must be >= 1"),
            (self.ln_eps > 0, "ln_eps must be > 0"),
            (self.method in ("elvis", "chamfer", "chamfer-ot", "none"),
             "method must be one of elvis, chamfer, chamfer-ot, none"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            Ablation.from_name(self.ablation)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def ot(self) -> OtConfig:
        return OtConfig(self.lam, self.iterations, log_domain=self.log_domain)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        parsed = {}
        for key, raw in values.items():
            parsed[key] = _coerce(key, types[key], raw)
        return cls(**parsed)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        values = parse_file(path)
        values.update(overrides or {})
        return cls.from_mapping(values)

    def to_text(self) -> str:
        lines = [f"{k} = {_render(v)}" for k, v in asdict(self).items()]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path


def parse_file(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key, typ, raw):
    if not isinstance(raw, str):
        return raw
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {typ})") from None
    return raw
