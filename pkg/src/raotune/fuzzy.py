"""Fuzzy rule base mapping matrix density to an ordering parameter.

Each ordering parameter owns at most one trapezoidal membership function on
the density axis (percent). The decision is the parameter with the highest
grade; exact ties go to the configured priority order and, when every grade
is below the activation floor, the fallback parameter is used.

Rule-base files hold one directive per line::

    rule <PARAM> <a> <b> <c> <d> [height]
    priority <PARAM> <PARAM> <PARAM> <PARAM>
    fallback <PARAM>
    floor <real>

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from .ordering import OrderingParam
from .sparse import MatrixFeatures

__all__ = [
    "MembershipFunction",
    "RuleBase",
    "Decision",
    "RuleBaseError",
    "DEFAULT_RULES",
    "ALWAYS_COLAMD_RULES",
    "DEFAULT_FLOOR",
    "load_rule_base",
    "load_rule_file",
    "default_rule_base",
    "dump_rule_base",
    "grade_all",
    "decide",
    "fit_rule_base",
]

DEFAULT_FLOOR = 0.05

# Calibrated by hand for the shape of the density strategy; not measured
# breakpoints. AT_PLUS_A and NATURAL overlap AT_TIMES_A around 0.5 %.
DEFAULT_RULES = """\
# shipped default rule base (density in percent)
rule COLAMD     0.0  0.0  0.02 0.06
rule AT_TIMES_A 0.02 0.06 0.6  1.2
rule NATURAL    0.3  1.2  6.0  10.0
rule AT_PLUS_A  0.05 0.3  0.3  0.8  0.6
priority COLAMD AT_TIMES_A NATURAL AT_PLUS_A
fallback COLAMD
floor 0.05
"""

ALWAYS_COLAMD_RULES = """\
# every density maps to COLAMD
rule COLAMD 0.0 0.0 100.0 100.0
priority COLAMD NATURAL AT_PLUS_A AT_TIMES_A
fallback COLAMD
"""


class RuleBaseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class MembershipFunction:
    """Trapezoid rising on [a, b], flat at ``height`` on [b, c], falling on [c, d]."""

    a: float
    b: float
    c: float
    d: float
    height: float = 1.0

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("membership breakpoints must be finite")
        if not (self.a <= self.b <= self.c <= self.d):
            raise ValueError(f"breakpoints must satisfy a <= b <= c <= d, got {vals[:4]}")
        if not 0.0 < self.height <= 1.0:
            raise ValueError("height must lie in (0, 1]")

    def grade(self, x: float) -> float:
        if x < self.a or x > self.d:
            return 0.0
        if x < self.b:
            return self.height * (x - self.a) / (self.b - self.a)
        if x <= self.c:
            return self.height
        return self.height * (self.d - x) / (self.d - self.c)

    def max_slope(self) -> float:
        rise = self.height / (self.b - self.a) if self.b > self.a else 0.0
        fall = self.height / (self.d - self.c) if self.d > self.c else 0.0
        return max(rise, fall)

    def scaled(self, factor: float) -> "MembershipFunction":
        return MembershipFunction(self.a, self.b, self.c, self.d, self.height * factor)


@dataclass(frozen=True)
class RuleBase:
    rules: Mapping[OrderingParam, MembershipFunction]
    priority: tuple[OrderingParam, ...]
    fallback: OrderingParam = OrderingParam.COLAMD
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "rules", MappingProxyType(dict(self.rules)))
        object.__setattr__(self, "priority", tuple(self.priority))
        if not self.rules:
            raise ValueError("a rule base needs at least one rule")
        if sorted(self.priority) != sorted(OrderingParam):
            raise ValueError("priority must list every ordering parameter exactly once")
        if self.fallback not in self.rules and self.fallback is not OrderingParam.COLAMD:
            raise ValueError("fallback must have a rule or be COLAMD")
        if not 0.0 <= self.floor <= 1.0:
            raise ValueError("floor must lie in [0, 1]")

    def lipschitz(self) -> float:
        """Steepest edge slope over all rules; bounds how fast any grade can change."""
        return max(mf.max_slope() for mf in self.rules.values())

    def scaled(self, factor: float) -> "RuleBase":
        """Every height and the floor multiplied by ``factor``."""
        return RuleBase({p: mf.scaled(factor) for p, mf in self.rules.items()},
                        self.priority, self.fallback, self.floor * factor)


@dataclass(frozen=True)
class Decision:
    chosen: OrderingParam
    grades: Mapping[OrderingParam, float] = field(default_factory=dict)
    used_fallback: bool = False
    # where the decision came from: "local", "bus" or "default"
    source: str = "local"
    round_trip: Optional[float] = None


def load_rule_base(config_text: str) -> RuleBase:
    rules: dict[OrderingParam, MembershipFunction] = {}
    priority = None
    fallback = None
    floor = None
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *args = line.split()
        try:
            if head == "rule":
                if len(args) not in (5, 6):
                    raise RuleBaseError("rule takes a parameter, four breakpoints and an optional height", lineno)
                param = OrderingParam.parse(args[0])
                if param in rules:
                    raise RuleBaseError(f"duplicate rule for {param}", lineno)
                rules[param] = MembershipFunction(*(float(v) for v in args[1:]))
            elif head == "priority":
                if priority is not None:
                    raise RuleBaseError("duplicate priority directive", lineno)
                priority = tuple(OrderingParam.parse(a) for a in args)
                if sorted(priority) != sorted(OrderingParam):
                    raise RuleBaseError("priority must list all four parameters exactly once", lineno)
            elif head == "fallback":
                if len(args) != 1 or fallback is not None:
                    raise RuleBaseError("fallback takes exactly one parameter, once", lineno)
                fallback = OrderingParam.parse(args[0])
            elif head == "floor":
                if len(args) != 1 or floor is not None:
                    raise RuleBaseError("floor takes exactly one value, once", lineno)
                floor = float(args[0])
            else:
                raise RuleBaseError(f"unknown directive {head!r}", lineno)
        except RuleBaseError:
            raise
        except ValueError as exc:
            raise RuleBaseError(str(exc), lineno) from None
    if not rules:
        raise RuleBaseError("no rules defined")
    if priority is None:
        raise RuleBaseError("missing priority directive")
    try:
        return RuleBase(rules, priority,
                        fallback if fallback is not None else OrderingParam.COLAMD,
                        DEFAULT_FLOOR if floor is None else floor)
    except ValueError as exc:
        raise RuleBaseError(str(exc)) from None


def load_rule_file(path) -> RuleBase:
    return load_rule_base(Path(path).read_text(encoding="utf-8"))


def default_rule_base() -> RuleBase:
    return load_rule_base(DEFAULT_RULES)


def dump_rule_base(rule_base: RuleBase, header: str | None = None) -> str:
    lines = [f"# {h}" for h in (header or "").splitlines()]
    for param in OrderingParam:
        mf = rule_base.rules.get(param)
        if mf is None:
            continue
        pts = " ".join(repr(v) for v in (mf.a, mf.b, mf.c, mf.d))
        tail = "" if mf.height == 1.0 else f" {mf.height!r}"
        lines.append(f"rule {param.value} {pts}{tail}")
    lines.append("priority " + " ".join(p.value for p in rule_base.priority))
    lines.append(f"fallback {rule_base.fallback.value}")
    lines.append(f"floor {rule_base.floor!r}")
    return "\n".join(lines) + "\n"


def grade_all(rule_base: RuleBase, density_percent: float) -> dict[OrderingParam, float]:
    if not density_percent >= 0.0:
        raise ValueError(f"density must be non-negative, got {density_percent}")
    return {p: (rule_base.rules[p].grade(density_percent) if p in rule_base.rules else 0.0)
            for p in OrderingParam}


def decide(rule_base: RuleBase, features: MatrixFeatures | float) -> Decision:
    """Pick one ordering parameter for the given features (or bare density)."""
    d = features.density_percent if isinstance(features, MatrixFeatures) else float(features)
    grades = grade_all(rule_base, d)
    top = max(grades.values())
    if top < rule_base.floor or top == 0.0:
        return Decision(rule_base.fallback, grades, used_fallback=True)
    chosen = next(p for p in rule_base.priority if grades[p] == top)
    return Decision(chosen, grades, used_fallback=False)


def _segment(costs: list[dict[OrderingParam, float]]) -> list[OrderingParam]:
    """Cheapest labelling of ordered units with each parameter on one contiguous run."""
    params = list(OrderingParam)
    # (used mask, current param index) -> (cost, labels)
    states = {(1 << k, k): (costs[0][p], [k]) for k, p in enumerate(params)}
    for unit in costs[1:]:
        nxt: dict[tuple[int, int], tuple[float, list[int]]] = {}
        for (mask, cur), (cost, labels) in states.items():
            for k, p in enumerate(params):
                if k != cur and mask & (1 << k):
                    continue
                key = (mask | (1 << k), k)
                c = cost + unit[p]
                if key not in nxt or c < nxt[key][0]:
                    nxt[key] = (c, labels + [k])
        states = nxt
    best = None
    for key in sorted(states):
        cost, labels = states[key]
        if best is None or cost < best[0]:
            best = (cost, labels)
    return [params[k] for k in best[1]]


def fit_rule_base(densities: Sequence[float], costs: Sequence[Mapping[OrderingParam, float]],
                  n_buckets: Optional[int] = 6, overlap: float = 0.2,
                  upper: float = 100.0) -> RuleBase:
    """Fit trapezoids to per-matrix costs (lower is better, ``inf`` for failures).

    Densities are grouped into log-spaced buckets, or one bucket per distinct
    density when ``n_buckets`` is None. Since a rule base holds one rule per
    parameter, each parameter is given one contiguous run of buckets; the
    runs minimise the summed cost. Run boundaries sit at the geometric mean
    of the neighbouring densities; at each boundary both trapezoids slope over
    ``overlap`` times the narrower run's width on the far side. The outer runs extend to 0 and
    ``upper``.
    """
    if len(densities) != len(costs):
        raise ValueError("densities and costs must have equal length")
    if not densities:
        raise ValueError("nothing to fit")
    if not 0.0 <= overlap < 0.5:
        raise ValueError("overlap must lie in [0, 0.5)")
    rows = sorted(zip((float(d) for d in densities), costs), key=lambda t: t[0])
    dens = [d for d, _ in rows]
    if dens[0] < 0:
        raise ValueError("densities must be non-negative")

    if n_buckets is None:
        keys = dens
    elif dens[0] <= 0 or dens[-1] == dens[0]:
        keys = [0] * len(dens)
    else:
        inner = np.geomspace(dens[0], dens[-1], n_buckets + 1)[1:-1]
        keys = np.searchsorted(inner, dens, side="right").tolist()

    units: list[list] = []  # [min density, max density, summed cost, key]
    for (d, cost), key in zip(rows, keys):
        if units and units[-1][3] == key:
            acc = units[-1][2]
            units[-1][1] = d
            units[-1][2] = {p: acc[p] + cost[p] for p in OrderingParam}
        else:
            units.append([d, d, {p: cost[p] for p in OrderingParam}, key])
    labels = _segment([u[2] for u in units])

    runs: list[list] = []  # [param, min density, max density]
    for (lo, hi, _, _), p in zip(units, labels):
        if runs and runs[-1][0] is p:
            runs[-1][2] = hi
        else:
            runs.append([p, lo, hi])
    edges = [0.0]
    for left, right in zip(runs, runs[1:]):
        a, b = left[2], right[1]
        edges.append(math.sqrt(a * b) if a > 0 else (a + b) / 2)
    edges.append(max(upper, dens[-1]))

    # half-width of the shared slope at each inner boundary
    spread = [0.0] + [overlap * min(edges[i] - edges[i - 1], edges[i + 1] - edges[i])
                      for i in range(1, len(edges) - 1)] + [0.0]
    rules = {}
    for i, (p, _, _) in enumerate(runs):
        b, c = edges[i], edges[i + 1]
        rules[p] = MembershipFunction(b - spread[i], b, c, c + spread[i + 1])
    chosen = [p for p, _, _ in runs]
    priority = [OrderingParam.COLAMD] + [p for p in chosen if p is not OrderingParam.COLAMD]
    priority += [p for p in OrderingParam if p not in priority]
    return RuleBase(rules, priority, OrderingParam.COLAMD)
