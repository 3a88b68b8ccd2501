"""Run configuration: INI file with one section per pipeline stage.

Precedence is command-line overrides > file values > defaults. Unknown
sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from io import StringIO
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .agent import AgentConfig
from .cards import ConfigurationError, TeamSpec, default_team, load_team
from .env import EnvConfig


@dataclass
class EnvSection:
    round_limit: int = 15
    hand_cap: int = 9
    c: float = 0.1
    opponent_mode: str = "uniform"
    team_a: str = ""      # team file path; empty = built-in default team
    team_b: str = ""


@dataclass
class EmbeddingSection:
    latent_dim: int = 16
    n_transitions: int = 50_000
    epochs: int = 20
    batch_size: int = 256
    lr: float = 1e-3


@dataclass
class AgentSection:
    variant: str = "latent"
    k: int = 32
    sigma: float = 0.1
    epsilon: float = 0.1
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 128
    episodes_per_iteration: int = 16
    critic_epochs: int = 1
    actor_steps: int = 4
    total_steps: int = 200_000
    checkpoint_every: int = 100


@dataclass
class ArenaSection:
    n_games: int = 1000
    opponent: str = "rule:uniform"
    alternate_seats: bool = True


@dataclass
class RunSection:
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1


@dataclass
class RunConfig:
    env: EnvSection = field(default_factory=EnvSection)
    embedding: EmbeddingSection = field(default_factory=EmbeddingSection)
    agent: AgentSection = field(default_factory=AgentSection)
    arena: ArenaSection = field(default_factory=ArenaSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def set(self, dotted: str, raw: str) -> None:
        try:
            section_name, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigurationError(f"override {dotted!r} must look like section.key") from None
        section = getattr(self, section_name, None)
        if section is None or section_name not in {f.name for f in fields(self)}:
            raise ConfigurationError(f"unknown config section {section_name!r}")
        types = {f.name: f.type for f in fields(section)}
        if key not in types:
            raise ConfigurationError(f"unknown config key {section_name}.{key}")
        setattr(section, key, _coerce(raw, getattr(section, key), dotted))

    # -- derived objects

    def teams(self) -> tuple[TeamSpec, TeamSpec]:
        a = load_team(self.env.team_a) if self.env.team_a else default_team()
        b = load_team(self.env.team_b) if self.env.team_b else default_team()
        return a, b

    def env_config(self) -> EnvConfig:
        return EnvConfig(round_limit=self.env.round_limit, hand_cap=self.env.hand_cap,
                         discard_penalty=self.env.c, opponent_mode=self.env.opponent_mode)

    def agent_config(self) -> AgentConfig:
        ag = self.agent
        return AgentConfig(variant=ag.variant, k=ag.k, c=self.env.c, sigma=ag.sigma,
                           epsilon=ag.epsilon, actor_lr=ag.actor_lr, critic_lr=ag.critic_lr,
                           batch_size=ag.batch_size, episodes_per_iteration=ag.episodes_per_iteration,
                           critic_epochs=ag.critic_epochs, actor_steps=ag.actor_steps)


def _coerce(raw, default, where: str):
    if isinstance(default, bool):
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{where}: expected a boolean, got {raw!r}")
    try:
        return type(default)(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def load_config(path: Optional[str | Path] = None, overrides: Optional[list[str]] = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.set(f"{section}.{key}", value)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg


def dump_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name, section in cfg.to_dict().items():
        parser[name] = {k: str(v) for k, v in section.items()}
    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()
