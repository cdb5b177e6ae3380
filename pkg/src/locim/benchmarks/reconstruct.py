"""Layout reconstruction search.

Several layouts are only given as pictures; the caption returns are the
recoverable ground truth. For each such environment this enumerates a grid of
layout parameters (registry defaults first) and reports the first layout
reproducing every caption value within the golden tolerance, or the closest
candidate when none does.
"""
from __future__ import annotations

import itertools

from . import make
from .policies import parse_policy
from .suite import GOLDEN_TOL, GOLDENS, evaluate


def _grid(**axes):
    keys = list(axes)
    for combo in itertools.product(*axes.values()):
        yield dict(zip(keys, combo))


def _aisle():
    for rows, crossing, g in itertools.product((6, 5, 7), ((0, 2), (0, 1), (1, 3), (0, 3)),
                                               (1, 2)):
        yield {"rows": rows, "crossing": crossing, "green": ((0, g), (3, g))}


CANDIDATES = {
    "aisle_walk": _aisle,
    "highway": lambda: _grid(blocker=[None, (4, 1), (4, 3), (4, 4)], notch=[(1, 3), (1, 2), (2, 4)]),
    "modified_highway": lambda: _grid(blocker=[None, (3, 2), (3, 3)], notch=[(1, 3), (1, 2), (2, 4)]),
    "bullseye": lambda: _grid(margin=[5, 3, 8], tail=[None, 30, 60]),
    "modified_bullseye": lambda: _grid(margin=[5, 3, 8], tail=[None, 30, 60]),
    "penalty_jittering": lambda: _grid(cells=[5, 4, 6, 7]),
    "unanticipated_oov": lambda: _grid(gap=[4, 3, 5, 6, 7], left_offset=[-2, -1, -3, -4],
                                       wait=[1, 0, 2]),
}


def score(env: str, params: dict) -> dict:
    """Return per golden policy for one candidate layout."""
    model = make(env, **params)
    out = {}
    for label in GOLDENS[env]:
        ret, *_ = evaluate(model, parse_policy(model, label))
        out[label] = ret
    return out


def reconstruct(env: str, exhaustive: bool = False, limit: int | None = None, log=None) -> dict:
    if env not in CANDIDATES:
        raise KeyError(f"no reconstruction search for {env!r}; searchable: {', '.join(CANDIDATES)}")
    goldens = GOLDENS[env]
    best, best_err, match, tried = None, float("inf"), None, 0
    for params in CANDIDATES[env]():
        if limit is not None and tried >= limit:
            break
        tried += 1
        try:
            values = score(env, params)
        except Exception as exc:  # infeasible layouts are skipped
            if log is not None:
                log({"params": params, "error": str(exc)})
            continue
        err = max(abs(values[k] - v) for k, v in goldens.items())
        hits = sum(abs(values[k] - v) <= GOLDEN_TOL for k, v in goldens.items())
        if log is not None:
            log({"params": params, "values": values, "max_error": err, "hits": hits})
        if err < best_err:
            best, best_err = (params, values, hits), err
        if err <= GOLDEN_TOL and match is None:
            match = params
            if not exhaustive:
                break
    return {"env": env, "tried": tried, "matched": match is not None, "params": match,
            "closest": None if best is None else {"params": best[0], "values": best[1],
                                                  "hits": best[2], "max_error": best_err}}
