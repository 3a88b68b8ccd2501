"""Latent action retrieval for card games with combinatorial action spaces."""

__version__ = "0.1.0"

from .cards import RoundAction, TeamSpec, default_team, load_team  # noqa: E402,F401
from .env import EnvConfig, GameState, new_game, step, step_two_player  # noqa: E402,F401
