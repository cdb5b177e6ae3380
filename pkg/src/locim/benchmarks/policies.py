"""Named policies: corners of the (xi, eta) grid, memory extraction, joint optimum."""
from __future__ import annotations

from dataclasses import dataclass

from ..cutoff_solver import CutoffConfig, solve_cutoff, tail_eta
from ..policy_extraction import JointPolicy, MemoryConfig, MemoryPolicy, TrivialPolicy
from ..mmdp import LIMMDP, horizon_constant
from ..oracles import JointOptimal

CORNERS = {
    # name: (xi large?, eta large?)
    "amalgam": (True, True),
    "cutoff": (False, True),
    "fsfho": (False, False),
    "finite-amalgam": (True, False),
}


@dataclass(frozen=True)
class PolicySpec:
    method: str          # "trivial", "smbe" or "joint"
    xi: float = 0.0
    eta: int = 0

    def label(self) -> str:
        if self.method == "joint":
            return "joint"
        return f"{self.method}(xi={self.xi:g},eta={self.eta})"


def large_xi(model: LIMMDP) -> float:
    """A computational visibility covering the whole space."""
    return max(0.0, model.space.diameter() - model.V)


def large_eta(model: LIMMDP) -> int:
    return tail_eta(model.gamma, horizon_constant(model.V, model.R))


def parse_policy(model: LIMMDP, text: str, xi=None, eta=None) -> PolicySpec:
    """Resolve names such as 'trivial:amalgam', 'smbe', 'smbe:V_comp', 'joint'."""
    if text == "joint":
        return PolicySpec("joint")
    method, _, arg = text.partition(":")
    if method == "trivial":
        if arg in CORNERS:
            big_xi, big_eta = CORNERS[arg]
            return PolicySpec("trivial", large_xi(model) if big_xi else 0.0,
                              large_eta(model) if big_eta else 0)
        if arg:
            raise ValueError(f"unknown corner {arg!r}")
        return PolicySpec("trivial", xi or 0.0, large_eta(model) if eta is None else eta)
    if method == "smbe":
        if arg:
            xi = float(arg) - model.V
        return PolicySpec("smbe", large_xi(model) if xi is None else xi,
                          large_eta(model) if eta is None else eta)
    raise ValueError(f"unknown policy {text!r}")


def build_policy(model: LIMMDP, spec: PolicySpec, memory: MemoryConfig = MemoryConfig()):
    if spec.method == "joint":
        return JointPolicy(JointOptimal(model))
    solution = solve_cutoff(model, CutoffConfig(model.V, spec.xi, spec.eta))
    if spec.method == "trivial":
        return TrivialPolicy(model, solution, model.V)
    return MemoryPolicy(model, solution, model.V, memory)
