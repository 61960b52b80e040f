"""Run configuration: defaults, flat key=value config files, seeding.

Config files are diffable flat text, one `section.key = value` per line
with `#` comments. Command-line flags override file values, which
override the built-in defaults (the production settings: bridge SDE
with k=2.6, c=0.51, T=0.999; 25 reverse steps; truncation at 0.12;
fusion alpha 0.4; compression 0.3/0.3; Hann 512/192).

All randomness flows from one master seed: module random sources are
derived by hashing (seed, purpose tag, index), so results do not depend
on how work is laid out across helpers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .sampling import ReverseSchedule
from .sde import SdeParams
from .spectral import FusionConfig, StftConfig, TransformConfig


class ConfigError(ValueError):
    """Bad configuration file or flag value."""


def derive_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """A random source deterministically derived from (seed, tag, index)."""
    digest = hashlib.sha256(f"{seed}:{tag}:{index}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


@dataclass(frozen=True)
class RunConfig:
    sde: SdeParams = field(default_factory=SdeParams.bbed)
    n_steps: int = 25
    t_rs: float = 0.12
    transform: TransformConfig = field(default_factory=TransformConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    seed: int = 0
    model_path: str = ""

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ConfigError(f"schedule.n_steps must be positive, got {self.n_steps}")
        if not (0.0 < self.t_rs <= self.sde.horizon_t):
            raise ConfigError(
                f"schedule.t_rs must lie in (0, {self.sde.horizon_t}], got {self.t_rs}"
            )

    def schedule(self) -> ReverseSchedule:
        if self.t_rs >= self.sde.horizon_t:
            return ReverseSchedule.full(self.sde.horizon_t, self.n_steps)
        return ReverseSchedule.truncated(self.sde.horizon_t, self.n_steps, self.t_rs)

    def lines(self) -> list[str]:
        """The effective configuration in config-file syntax."""
        sde = self.sde
        out = [
            f"sde.variant = {sde.variant}",
            f"sde.c = {sde.c!r}",
            f"sde.k = {sde.k!r}",
        ]
        if sde.variant == "ouve":
            out.append(f"sde.gamma = {sde.gamma!r}")
        out += [
            f"sde.horizon_t = {sde.horizon_t!r}",
            f"schedule.n_steps = {self.n_steps}",
            f"schedule.t_rs = {self.t_rs!r}",
            f"transform.beta1 = {self.transform.beta1!r}",
            f"transform.beta2 = {self.transform.beta2!r}",
            f"fusion.alpha = {self.fusion.alpha!r}",
            f"stft.window_length = {self.stft.window_length}",
            f"stft.hop = {self.stft.hop}",
            f"seed = {self.seed}",
        ]
        if self.model_path:
            out.append(f"model.path = {self.model_path}")
        return out


_KNOWN_KEYS = {
    "sde.variant", "sde.c", "sde.k", "sde.gamma", "sde.horizon_t",
    "schedule.n_steps", "schedule.t_rs",
    "transform.beta1", "transform.beta2",
    "fusion.alpha",
    "stft.window_length", "stft.hop",
    "seed", "model.path",
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def load_config_file(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def _coerce(key: str, value: str, kind):
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc


def build_run_config(values: dict[str, str]) -> RunConfig:
    """Materialize a RunConfig from string key/values over the defaults."""
    base = RunConfig()
    sde_kwargs = {
        "variant": values.get("sde.variant", base.sde.variant).lower(),
        "c": _coerce("sde.c", values["sde.c"], float) if "sde.c" in values else base.sde.c,
        "k": _coerce("sde.k", values["sde.k"], float) if "sde.k" in values else base.sde.k,
        "gamma": _coerce("sde.gamma", values["sde.gamma"], float)
        if "sde.gamma" in values else base.sde.gamma,
    }
    if "sde.horizon_t" in values:
        sde_kwargs["horizon_t"] = _coerce("sde.horizon_t", values["sde.horizon_t"], float)
    elif sde_kwargs["variant"] != base.sde.variant:
        sde_kwargs["horizon_t"] = 1.0 if sde_kwargs["variant"] == "ouve" else 0.999
    else:
        sde_kwargs["horizon_t"] = base.sde.horizon_t
    try:
        sde = SdeParams(**sde_kwargs)
        cfg = RunConfig(
            sde=sde,
            n_steps=_coerce("schedule.n_steps", values["schedule.n_steps"], int)
            if "schedule.n_steps" in values else base.n_steps,
            t_rs=_coerce("schedule.t_rs", values["schedule.t_rs"], float)
            if "schedule.t_rs" in values else min(base.t_rs, sde.horizon_t),
            transform=TransformConfig(
                beta1=_coerce("transform.beta1", values["transform.beta1"], float)
                if "transform.beta1" in values else base.transform.beta1,
                beta2=_coerce("transform.beta2", values["transform.beta2"], float)
                if "transform.beta2" in values else base.transform.beta2,
            ),
            fusion=FusionConfig(
                alpha=_coerce("fusion.alpha", values["fusion.alpha"], float)
                if "fusion.alpha" in values else base.fusion.alpha,
            ),
            stft=StftConfig(
                window_length=_coerce("stft.window_length", values["stft.window_length"], int)
                if "stft.window_length" in values else base.stft.window_length,
                hop=_coerce("stft.hop", values["stft.hop"], int)
                if "stft.hop" in values else base.stft.hop,
            ),
            seed=_coerce("seed", values["seed"], int) if "seed" in values else base.seed,
            model_path=values.get("model.path", base.model_path),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def with_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    """Apply non-None keyword overrides (flag precedence over file values)."""
    updates = {k: v for k, v in kwargs.items() if v is not None}
    sde_updates = {k[4:]: updates.pop(k) for k in list(updates) if k.startswith("sde_")}
    try:
        if sde_updates:
            updates["sde"] = replace(cfg.sde, **sde_updates)
        return replace(cfg, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
