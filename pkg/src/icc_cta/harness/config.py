"""Scenario configuration: INI files, ``--set key=value`` overrides and validation.

Grammar: one ``[scenario]`` section of ``key = value`` lines (``#`` or ``;``
comments).  List-valued keys take comma-separated values.  Unknown keys are
rejected.  Precedence: scenario defaults < config file < ``--set`` flags.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
from dataclasses import dataclass, fields
from typing import Iterable, Optional

from ..airframe import ATTACK_MODES, PATTERN_LAWS, PIP_FREQ, PIP_TIME
from ..errors import ConfigError

SCENARIOS = (
    "erd_roc",
    "delta_f_grid",
    "nmse_cdf",
    "tradeoff_curve",
    "iep_surface",
    "rate_curve",
    "nmse_vs_snr",
    "identification",
)

ENV_OUT_DIR = "ICC_CTA_OUT_DIR"
ENV_WORKERS = "ICC_CTA_WORKERS"


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int = 0
    trials: int = 200
    n_t: int = 64
    n_fft: int = 256
    n_b: int = 7
    s: int = 1
    l_taps: int = 4
    delta_rad: float = math.pi / 12
    d_spacing: float = 0.5
    snr_db: float = 20.0
    k_support: int = 5
    aoa_kind: str = "DPD"
    c_phases: int = 0
    target_pf: float = 5e-4
    r_threshold: float = 0.5
    attack_mode: str = "PTS"
    attack_pattern: str = "mode"
    attack_pip_freq: str = "same"
    attack_pip_time: str = "random"
    attack_power: float = 1.0
    channel_draws: int = 200
    n_t_list: tuple = (32, 64, 128, 256)
    snr_list: tuple = ()
    gamma_list: tuple = (1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.8, 2.0, 2.5, 3.0, 4.0)
    s_star_list: tuple = (4, 5, 6, 7)
    fft_list: tuple = (16, 32)
    k_list: tuple = (1, 2, 3, 4, 5)
    end_to_end: bool = False
    workers: int = 1

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        positive = ("n_t", "n_fft", "n_b", "s", "l_taps", "k_support", "channel_draws", "workers")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.trials < 0:
            raise ConfigError("trials must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.s > self.n_b or (self.n_b - self.s) % 2:
            raise ConfigError("n_b - s must be even and non-negative")
        if self.l_taps > self.n_fft or self.n_b > self.n_fft:
            raise ConfigError("l_taps and n_b must not exceed n_fft")
        if not 0.0 < self.delta_rad < math.pi / 2:
            raise ConfigError("delta_rad must lie in (0, pi/2)")
        if not 0.0 <= self.d_spacing <= 0.5:
            raise ConfigError("d_spacing must lie in [0, 0.5]")
        if not 0.0 < self.target_pf < 0.5:
            raise ConfigError("target_pf must lie in (0, 0.5)")
        if not 0.0 < self.r_threshold < 1.0:
            raise ConfigError("r_threshold must lie in (0, 1)")
        if self.aoa_kind not in ("CPD", "DPD"):
            raise ConfigError("aoa_kind must be CPD or DPD")
        if self.attack_mode not in ATTACK_MODES:
            raise ConfigError(f"attack_mode must be one of {ATTACK_MODES}")
        if self.attack_pattern not in PATTERN_LAWS:
            raise ConfigError(f"attack_pattern must be one of {PATTERN_LAWS}")
        if self.attack_pip_freq not in PIP_FREQ:
            raise ConfigError(f"attack_pip_freq must be one of {PIP_FREQ}")
        if self.attack_pip_time not in PIP_TIME:
            raise ConfigError(f"attack_pip_time must be one of {PIP_TIME}")
        if self.attack_power < 0:
            raise ConfigError("attack_power must be non-negative")
        if any(n < 3 for n in self.n_t_list) or self.n_t < 3:
            raise ConfigError("antenna counts must be at least 3")
        if any(g <= 1.0 for g in self.gamma_list):
            raise ConfigError("gamma_list entries must exceed 1")
        if any(v < 1 for v in self.s_star_list) or any(v < 1 for v in self.k_list):
            raise ConfigError("s_star_list and k_list entries must be positive")
        return self

    def as_items(self) -> list:
        return [(f.name, _format(getattr(self, f.name))) for f in fields(self) if f.name != "workers"]


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


SCENARIO_DEFAULTS = {
    "erd_roc": dict(trials=100000, snr_db=-10.0),
    "delta_f_grid": dict(trials=200, n_t=100, l_taps=6, n_fft=48, snr_db=20.0),
    "nmse_cdf": dict(trials=20, channel_draws=200, n_t=64, n_b=128, s=6, l_taps=6, n_fft=132, snr_db=20.0),
    "tradeoff_curve": dict(trials=1, l_taps=4, k_support=10, fft_list=(16, 32)),
    "iep_surface": dict(trials=20000, k_support=20, s_star_list=tuple(range(4, 13)), k_list=(1, 2, 3)),
    "rate_curve": dict(trials=1, s_star_list=(4, 5, 6, 7), k_list=tuple(range(1, 31))),
    "nmse_vs_snr": dict(trials=1000, l_taps=6, n_b=6, s=6, n_fft=264, snr_db=10.0, n_t_list=(32, 64, 128, 256)),
    "identification": dict(trials=10000, n_t=256, n_b=7, s=1, attack_pattern="uniform"),
}


def _coerce(name: str, raw: str, template):
    raw = raw.strip()
    try:
        if isinstance(template, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if isinstance(template, int):
            return int(raw, 0)
        if isinstance(template, float):
            return float(_angle(raw))
        if isinstance(template, tuple):
            if not raw:
                return ()
            kind = type(template[0]) if template else float
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(int(p, 0) if kind is int else float(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _angle(raw: str) -> float:
    """Accept plain floats and ``pi/12``-style fractions of pi."""
    text = raw.replace(" ", "").lower()
    if "pi" not in text:
        return float(text)
    num, _, den = text.partition("/")
    coef = num.replace("*", "").replace("pi", "")
    coef = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
    return coef * math.pi / (float(den) if den else 1.0)


def build_config(
    scenario: str,
    config_path: Optional[str] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> ScenarioConfig:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    template = ScenarioConfig(scenario)
    values = dict(SCENARIO_DEFAULTS.get(scenario, {}))
    known = {f.name: f for f in fields(ScenarioConfig)}

    def apply(key: str, raw: str, origin: str) -> None:
        key = key.strip()
        if key not in known or key == "scenario":
            raise ConfigError(f"unknown key {key!r} in {origin}")
        values[key] = _coerce(key, raw, values.get(key, getattr(template, key)))

    if config_path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(config_path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        for section in parser.sections():
            if section != "scenario":
                raise ConfigError(f"unknown section [{section}] in {config_path}")
            for key, raw in parser.items(section):
                apply(key, raw, config_path)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        apply(key, raw, "--set")
    if seed is not None:
        values["seed"] = seed
    if workers is None and os.environ.get(ENV_WORKERS):
        try:
            workers = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS} must be an integer") from exc
    if workers is not None:
        values["workers"] = workers
    return dataclasses.replace(template, **values).validate()
