"""Line-oriented `key = value` run configuration.

One flat key space covers the scenario, model dims, and training knobs; CLI
flags override file values, and every command writes its fully resolved
config next to its outputs so runs are self-documenting.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .adaptation import AdaptConfig
from .datagen import ScenarioSpec
from .model import ModelDims


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    # scenario
    regime: str = "OPDA"
    n_shared: int = 3
    n_source_private: int = 3
    n_target_private: int = 3
    d_in: int = 16
    source_per_class: int = 100
    target_per_class: int = 100
    separation: float = 8.0
    shift_rotation: float = 0.8
    shift_translation: float = 2.0
    noise_sigma: float = 1.0
    # model
    d_hidden: int = 64
    d_feat: int = 32
    # training / adaptation
    eta: float = 0.3
    rho: float = 0.75
    k_neighbors: int = 4
    n_pairs: int = 4
    batch_size: int = 64
    epochs: int = 20
    lr: float = 0.001
    momentum: float = 0.9
    seed: int = 0
    variant: str = "glcpp"
    omega: float = 0.55
    alpha: float = 0.1
    con_weight: float = 1.0
    # optional file paths (commands may also take these as CLI arguments)
    source_path: str = ""
    target_path: str = ""
    model_path: str = ""
    out_dir: str = ""

    def scenario(self) -> ScenarioSpec:
        return ScenarioSpec(
            regime=self.regime,
            n_shared=self.n_shared,
            n_source_private=self.n_source_private,
            n_target_private=self.n_target_private,
            d_in=self.d_in,
            source_per_class=self.source_per_class,
            target_per_class=self.target_per_class,
            separation=self.separation,
            shift_rotation=self.shift_rotation,
            shift_translation=self.shift_translation,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
        )

    def adapt_config(self) -> AdaptConfig:
        return AdaptConfig(
            eta=self.eta,
            rho=self.rho,
            k_neighbors=self.k_neighbors,
            n_pairs=self.n_pairs,
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            momentum=self.momentum,
            seed=self.seed,
            variant=self.variant,
            omega=self.omega,
            alpha=self.alpha,
            con_weight=self.con_weight,
        )

    def model_dims(self, d_in: int, n_classes: int) -> ModelDims:
        return ModelDims(d_in=d_in, d_hidden=self.d_hidden, d_feat=self.d_feat, n_classes=n_classes)

    def resolved_lines(self) -> list[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            out.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(self.resolved_lines()) + "\n")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_PARSERS = {"int": int, "float": float, "str": str, "bool": _parse_bool}


def parse_config_text(text: str, path: str = "<config>") -> dict:
    """Parse `key = value` lines (# comments and blank lines allowed) into a
    typed dict; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        parser = _PARSERS[_FIELD_TYPES[key]]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_run_config(path: str | None, overrides: dict | None = None, base: dict | None = None) -> RunConfig:
    """Defaults <- base (e.g. a preset) <- config file <- CLI overrides.

    None-valued overrides are ignored so unset CLI flags fall through."""
    values: dict = dict(base or {})
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values.update(parse_config_text(text, path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    return RunConfig(**values)
