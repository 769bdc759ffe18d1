"""Flat key=value experiment configuration.

One declarative file drives a whole run; command-line flags override
file values; the fully resolved configuration is echoed into the output
directory so any run can be reproduced from its artifacts alone.

Recognized keys (defaults in parentheses):

    manifest                corpus manifest path (required for training)
    model_kind              loglinear | neural-mono | neural-xling (neural-mono)
    out                     output directory (out)
    seed                    master seed for splits, init, shuffling (0)
    threads                 BLAS/OpenMP thread cap; 1 = bit-reproducible (1)
    mu                      source-language weight in the joint objective (1.0)
    epochs                  AdaDelta epochs (100)
    batch_size              sentences per AdaDelta step (32)
    learning_rate           AdaDelta learning rate (1.0)
    rho / eps               AdaDelta decay and stabilizer (0.95 / 1e-6)
    target_train            target train split size (100)
    source_train            per-source train split size (10000)
    dev / test              split sizes (1000 / 1000)
    select                  dev | final checkpoint selection (dev)
    checkpoint_every        epochs between checkpoint files (1)
    timing                  true writes real wall_ms into history and
                            breaks byte-level run identity (false)
    conjoin_language        auto | true | false, log-linear only (auto:
                            on exactly when several languages train)
    l2                      auto | float, log-linear L2 strength (auto)
    types                   comma-separated entity types (per,loc,org,misc)
    tag_dependent_emission  xling emission variant with per-tag output
                            embeddings (false)
    dims.r1 dims.r2 dims.r3 dims.q dims.d_char dims.d_word
    dims.lstm_layers dims.lstm_hidden
                            neural dimension overrides
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .neural import Dims


class ConfigError(ValueError):
    pass


_DIM_KEYS = tuple(f"dims.{name}" for name in Dims.__dataclass_fields__)
MODEL_KINDS = ("loglinear", "neural-mono", "neural-xling")


@dataclass
class ExperimentConfig:
    manifest: str = ""
    model_kind: str = "neural-mono"
    out: str = "out"
    seed: int = 0
    threads: int = 1
    mu: float = 1.0
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    target_train: int = 100
    source_train: int = 10000
    dev: int = 1000
    test: int = 1000
    select: str = "dev"
    checkpoint_every: int = 1
    timing: bool = False
    conjoin_language: str = "auto"
    l2: str = "auto"
    types: str = "per,loc,org,misc"
    tag_dependent_emission: bool = False
    dims: dict[str, int] = field(default_factory=dict)

    def build_dims(self) -> Dims:
        return Dims(**self.dims) if self.dims else Dims()

    def entity_types(self) -> tuple[str, ...]:
        parsed = tuple(t.strip().lower() for t in self.types.split(",") if t.strip())
        if not parsed:
            raise ConfigError("types must name at least one entity type")
        return parsed

    def l2_value(self) -> float | None:
        """None means pick the default for the train size."""
        if self.l2 == "auto":
            return None
        return float(self.l2)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; later keys win."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def resolve_config(
    file_values: dict[str, str] | None = None,
    overrides: dict[str, str] | None = None,
) -> ExperimentConfig:
    """Merge file values and flag overrides into a typed config."""
    merged: dict[str, str] = {}
    merged.update(file_values or {})
    merged.update(overrides or {})
    config = ExperimentConfig()
    int_keys = {
        "seed", "threads", "epochs", "batch_size", "target_train",
        "source_train", "dev", "test", "checkpoint_every",
    }
    float_keys = {"mu", "learning_rate", "rho", "eps"}
    bool_keys = {"timing", "tag_dependent_emission"}
    for key, value in merged.items():
        try:
            if key in _DIM_KEYS:
                config.dims[key.split(".", 1)[1]] = int(value)
            elif key in int_keys:
                setattr(config, key, int(value))
            elif key in float_keys:
                setattr(config, key, float(value))
            elif key in bool_keys:
                setattr(config, key, _parse_bool(key, value))
            elif key in ("manifest", "out", "model_kind", "select", "l2",
                         "conjoin_language", "types"):
                setattr(config, key, value)
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: {exc}") from exc
    if config.model_kind not in MODEL_KINDS:
        raise ConfigError(
            f"model_kind must be one of {', '.join(MODEL_KINDS)}, "
            f"got {config.model_kind!r}"
        )
    if config.select not in ("dev", "final"):
        raise ConfigError(f"select must be dev or final, got {config.select!r}")
    if config.conjoin_language not in ("auto", "true", "false"):
        raise ConfigError("conjoin_language must be auto, true, or false")
    if config.l2 != "auto":
        try:
            float(config.l2)
        except ValueError:
            raise ConfigError(f"l2 must be auto or a number, got {config.l2!r}") from None
    if config.mu < 0:
        raise ConfigError("mu must be >= 0")
    config.entity_types()
    if config.threads < 1:
        raise ConfigError("threads must be >= 1")
    try:
        config.build_dims()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad dims: {exc}") from exc
    return config


def render_config(config: ExperimentConfig) -> str:
    """Resolved config as key=value text (the echo written next to outputs)."""
    lines = []
    for f in fields(config):
        if f.name == "dims":
            continue
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    dims = config.build_dims()
    for name in Dims.__dataclass_fields__:
        lines.append(f"dims.{name} = {getattr(dims, name)}")
    return "\n".join(lines) + "\n"
