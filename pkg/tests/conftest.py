import pytest
from hypothesis import HealthCheck, settings

from locim.geometry import MetricSpace
from locim.mmdp import PairRule, TabularModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def line_model(L, starts, R=0, V=1, gamma=0.9, self_rewards=None, pair_value=None,
               generalized=False, group_rule=None):
    """Agents walking a line with stay/left/right and one internal state."""
    space = MetricSpace.line(L)
    tables = []
    for _ in starts:
        table = {}
        for x in range(L):
            outs = {"stay": x, "left": max(0, x - 1), "right": min(L - 1, x + 1)}
            table[(x, 0)] = tuple((a, (((outs[a], 0), 1.0),)) for a in ("stay", "left", "right"))
        tables.append(table)
    rules = [] if pair_value is None else [PairRule(value=pair_value, max_dist=R)]
    return TabularModel(space=space, tables=tables, start=tuple((x, 0) for x in starts), R=R,
                        V=V, gamma=gamma, self_rewards=self_rewards or [], pair_rules=rules,
                        generalized=generalized, group_rule=group_rule, name="line")


@pytest.fixture
def make_line():
    return line_model


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
