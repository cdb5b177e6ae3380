"""Benchmark environments, named policies, the suite and the swarm simulation."""
from __future__ import annotations

from . import envs
from .envspec import SpecError, build_model

REGISTRY = {
    "aisle_walk": envs.aisle_walk,
    "bullseye": envs.bullseye,
    "modified_bullseye": envs.modified_bullseye,
    "highway": envs.highway,
    "modified_highway": envs.modified_highway,
    "penalty_jittering": envs.penalty_jittering,
    "long_journey": envs.long_journey,
    "stochastic_transitions": envs.stochastic_transitions,
    "unanticipated_oov": envs.unanticipated_oov,
    "oov_coordination": envs.oov_coordination,
}
# the eleventh environment, the swarm, lives in swarm.py


class UnknownEnv(KeyError):
    def __str__(self):
        return f"unknown environment {self.args[0]!r}; available: {', '.join(sorted(REGISTRY))}"


def spec_of(name: str, **params) -> dict:
    if name not in REGISTRY:
        raise UnknownEnv(name)
    return REGISTRY[name](**params)


def make(name: str, **params):
    """Compiled model of a registered environment."""
    return build_model(spec_of(name, **params))


def build_env(name: str, **params):
    """(model, initial joint state) of a registered environment."""
    model = make(name, **params)
    return model, model.start


__all__ = ["REGISTRY", "SpecError", "UnknownEnv", "build_env", "build_model", "make", "spec_of"]
