import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raotune.bench import decision_switch_points
from raotune.fuzzy import (ALWAYS_COLAMD_RULES, DEFAULT_RULES, MembershipFunction, RuleBase,
                           RuleBaseError, decide, default_rule_base, dump_rule_base,
                           fit_rule_base, grade_all, load_rule_base)
from raotune.ordering import OrderingParam as P
from raotune.sparse import MatrixFeatures

ORDER = "priority COLAMD AT_TIMES_A NATURAL AT_PLUS_A\n"
GRID = np.linspace(0.0, 10.0, 10_000).tolist()


def test_trapezoid_shape():
    mf = MembershipFunction(0.1, 0.5, 2.0, 6.0)
    assert mf.grade(1.0) == 1.0
    assert mf.grade(0.3) == pytest.approx(0.5)
    assert mf.grade(4.0) == pytest.approx(0.5)
    assert mf.grade(0.05) == 0.0 and mf.grade(7.0) == 0.0
    assert mf.grade(0.1) == 0.0 and mf.grade(6.0) == 0.0
    assert MembershipFunction(0.0, 0.0, 1.0, 1.0).grade(0.0) == 1.0


def test_height_scales_plateau():
    mf = MembershipFunction(0, 1, 2, 3, height=0.6)
    assert mf.grade(1.5) == 0.6
    assert mf.grade(0.5) == pytest.approx(0.3)


@pytest.mark.parametrize("args", [(1, 0, 2, 3), (0, 1, 3, 2), (0, 1, 2, 3, 0.0),
                                  (0, 1, 2, 3, 1.5), (0, 1, 2, math.inf)])
def test_membership_rejects(args):
    with pytest.raises(ValueError):
        MembershipFunction(*args)


def test_loader_reads_defaults():
    rb = default_rule_base()
    assert set(rb.rules) == set(P)
    assert rb.priority == (P.COLAMD, P.AT_TIMES_A, P.NATURAL, P.AT_PLUS_A)
    assert rb.fallback is P.COLAMD and rb.floor == 0.05
    assert rb.rules[P.AT_PLUS_A].height == 0.6


def test_loader_comments_and_defaults():
    rb = load_rule_base("# header\n\nrule NATURAL 0 1 2 3  # trailing\n" + ORDER)
    assert list(rb.rules) == [P.NATURAL]
    assert rb.fallback is P.COLAMD and rb.floor == 0.05


@pytest.mark.parametrize("text, line", [
    ("rule NATURAL 0 1 2\n" + ORDER, 1),
    ("rule RCM 0 1 2 3\n" + ORDER, 1),
    ("rule NATURAL 0 1 2 3\nrule NATURAL 0 1 2 3\n" + ORDER, 2),
    ("rule NATURAL 3 2 1 0\n" + ORDER, 1),
    ("rule NATURAL 0 1 2 x\n" + ORDER, 1),
    ("rule NATURAL 0 1 2 3\npriority COLAMD NATURAL\n", 2),
    ("rule NATURAL 0 1 2 3\n" + ORDER + "fallback A B\n", 3),
    ("rule NATURAL 0 1 2 3\n" + ORDER + "threshold 1\n", 3),
    ("rule NATURAL 0 1 2 3\n" + ORDER + "floor 0.1\nfloor 0.2\n", 4),
])
def test_loader_rejections_name_the_line(text, line):
    with pytest.raises(RuleBaseError) as info:
        load_rule_base(text)
    assert info.value.line == line


def test_loader_rejects_globally():
    for text in ("", ORDER, "rule NATURAL 0 1 2 3\n",
                 "rule NATURAL 0 1 2 3\n" + ORDER + "floor 2\n",
                 "rule NATURAL 0 1 2 3\n" + ORDER + "fallback AT_PLUS_A\n"):
        with pytest.raises(RuleBaseError):
            load_rule_base(text)


def test_dump_round_trip():
    for text in (DEFAULT_RULES, ALWAYS_COLAMD_RULES):
        rb = load_rule_base(text)
        again = load_rule_base(dump_rule_base(rb, "a\nb"))
        assert again == rb


def test_overlap_case_grades_two_params():
    g = grade_all(default_rule_base(), 0.5)
    assert g[P.AT_TIMES_A] > 0 and g[P.NATURAL] > 0
    assert decide(default_rule_base(), 0.5).chosen is P.AT_TIMES_A


def test_out_of_support_falls_back():
    rb = default_rule_base()
    for d in (10.0, 50.0, 100.0):
        dec = decide(rb, d)
        assert dec.chosen is P.COLAMD and dec.used_fallback
        assert all(v == 0.0 for v in dec.grades.values())


def test_below_floor_falls_back():
    rb = load_rule_base("rule NATURAL 0 1 2 3\n" + ORDER + "floor 0.5\n")
    assert decide(rb, 2.9).used_fallback
    assert decide(rb, 2.9).chosen is P.COLAMD
    assert decide(rb, 1.5).chosen is P.NATURAL


def test_exact_ties_follow_priority():
    text = "rule NATURAL 0 1 2 3\nrule AT_TIMES_A 0 1 2 3\n"
    assert decide(load_rule_base(text + ORDER), 1.5).chosen is P.AT_TIMES_A
    alt = "priority NATURAL AT_TIMES_A COLAMD AT_PLUS_A\n"
    assert decide(load_rule_base(text + alt), 1.5).chosen is P.NATURAL


def test_decide_accepts_features():
    rb = default_rule_base()
    f = MatrixFeatures(10, 5, 5.0, None)
    assert decide(rb, f) == decide(rb, 5.0)
    with pytest.raises(ValueError):
        decide(rb, -0.1)
    with pytest.raises(ValueError):
        decide(rb, float("nan"))


def test_decide_deterministic_on_grid():
    rb = default_rule_base()
    first = [decide(rb, d) for d in GRID]
    second = [decide(load_rule_base(DEFAULT_RULES), d) for d in GRID]
    assert first == second


def test_argmax_invariant_under_scaling():
    rb = default_rule_base()
    half = rb.scaled(0.5)
    for d in GRID:
        assert decide(rb, d).chosen is decide(half, d).chosen


def test_grades_are_lipschitz():
    rb = default_rule_base()
    L = rb.lipschitz()
    xs = np.linspace(0.0, 12.0, 20_001)
    for p in P:
        g = np.array([grade_all(rb, x)[p] for x in xs])
        assert np.all(np.abs(np.diff(g)) <= L * np.diff(xs) + 1e-12)


rule_st = st.tuples(*[st.floats(0, 20, allow_nan=False)] * 4,
                    st.floats(0.05, 1.0)).map(lambda t: (*sorted(t[:4]), t[4]))


@settings(max_examples=80, deadline=None)
@given(st.dictionaries(st.sampled_from(list(P)), rule_st, min_size=1),
       st.permutations(list(P)), st.floats(0, 30, allow_nan=False))
def test_random_rule_bases(rules, priority, x):
    rb = RuleBase({p: MembershipFunction(*r) for p, r in rules.items()}, priority)
    dec = decide(rb, x)
    top = max(dec.grades.values())
    assert all(0.0 <= g <= 1.0 for g in dec.grades.values())
    if dec.used_fallback:
        assert dec.chosen is P.COLAMD and top < rb.floor or top == 0.0
    else:
        assert dec.grades[dec.chosen] == top
        earlier = priority[:priority.index(dec.chosen)]
        assert all(dec.grades[p] < top for p in earlier)


def test_default_switch_points_snapshot():
    points = decision_switch_points(default_rule_base(), 0.0, 10.0, 10_001)
    labels = [label for _, label in points]
    assert labels == ["COLAMD", "AT_TIMES_A", "NATURAL", "COLAMD*"]
    xs = [x for x, _ in points]
    assert xs[1] == pytest.approx(0.04, abs=1e-3)
    assert 0.6 < xs[2] < 1.2
    # NATURAL's falling edge drops under the 0.05 floor just past 9.8
    assert xs[3] == pytest.approx(9.8, abs=1e-3)


def cost_table(winners):
    return [{p: 0.0 if p is w else 1.0 for p in P} for w in winners]


def test_fit_single_winner_covers_everything():
    rb = fit_rule_base([0.1, 1.0, 5.0], cost_table([P.NATURAL] * 3))
    assert list(rb.rules) == [P.NATURAL]
    mf = rb.rules[P.NATURAL]
    assert (mf.a, mf.b) == (0.0, 0.0) and mf.c == 100.0
    for d in (0.0, 0.5, 99.0):
        assert decide(rb, d).chosen is P.NATURAL


def test_fit_two_winners_overlap_only_near_boundary():
    dens = [0.1, 0.2, 0.4, 4.0, 8.0, 16.0]
    rb = fit_rule_base(dens, cost_table([P.AT_TIMES_A] * 3 + [P.NATURAL] * 3), n_buckets=None)
    for d, want in zip(dens, [P.AT_TIMES_A] * 3 + [P.NATURAL] * 3):
        assert decide(rb, d).chosen is want
    edge = math.sqrt(0.4 * 4.0)
    left, right = rb.rules[P.AT_TIMES_A], rb.rules[P.NATURAL]
    assert left.c == pytest.approx(edge) and right.b == pytest.approx(edge)
    assert right.a < edge < left.d
    assert grade_all(rb, 0.4)[P.NATURAL] == 0.0
    assert grade_all(rb, 4.0)[P.AT_TIMES_A] == 0.0


def test_fit_keeps_each_param_contiguous():
    # NATURAL wins at both ends; one contiguous run must be paid for somewhere
    dens = [0.1, 1.0, 10.0]
    rb = fit_rule_base(dens, cost_table([P.NATURAL, P.AT_PLUS_A, P.NATURAL]), n_buckets=None)
    chosen = [decide(rb, d).chosen for d in dens]
    runs = [p for i, p in enumerate(chosen) if i == 0 or p is not chosen[i - 1]]
    assert len(runs) == len(set(runs))


def test_fit_validates():
    with pytest.raises(ValueError):
        fit_rule_base([], [])
    with pytest.raises(ValueError):
        fit_rule_base([1.0], cost_table([P.NATURAL, P.NATURAL]))
    with pytest.raises(ValueError):
        fit_rule_base([1.0], cost_table([P.NATURAL]), overlap=0.6)
