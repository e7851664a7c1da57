"""Quadrature decoder: wrap, glitches, index reset, unit-timer latching."""

import pytest

from drivebench.conformance import QUAD_STATES, random_edge_walk, run_qep_suite
from drivebench.periph import PeripheralError, QepState


def forward_edge(qep):
    """The edge that advances the decoder one count forward."""
    state = (qep.a_level, qep.b_level)
    idx = QUAD_STATES.index(state)
    nxt = QUAD_STATES[(idx + 1) % 4]
    if state[0] != nxt[0]:
        return "a_rise" if nxt[0] else "a_fall"
    return "b_rise" if nxt[1] else "b_fall"


def reverse_edge(qep):
    state = (qep.a_level, qep.b_level)
    idx = QUAD_STATES.index(state)
    nxt = QUAD_STATES[(idx - 1) % 4]
    if state[0] != nxt[0]:
        return "a_rise" if nxt[0] else "a_fall"
    return "b_rise" if nxt[1] else "b_fall"


def test_forward_wrap_at_qposmax():
    qep = QepState(qposmax=4095)
    qep.qposcnt = 4095
    qep.apply_edge(forward_edge(qep))
    assert qep.qposcnt == 0


def test_reverse_wrap_at_zero():
    qep = QepState(qposmax=4095)
    assert qep.qposcnt == 0
    qep.apply_edge(reverse_edge(qep))
    assert qep.qposcnt == 4095


def test_one_revolution_forward_wraps_once():
    qep = QepState(qposmax=4095)
    wraps = 0
    prev = qep.qposcnt
    for _ in range(4096):
        qep.apply_edge(forward_edge(qep))
        if qep.qposcnt < prev:
            wraps += 1
        prev = qep.qposcnt
    assert qep.qposcnt == 0
    assert wraps == 1


def test_redundant_edge_is_glitch_not_motion():
    qep = QepState()
    qep.apply_edge("a_rise")
    pos = qep.qposcnt
    qep.apply_edge("a_rise")      # A already high
    assert qep.qposcnt == pos
    assert qep.glitch_count == 1


def test_index_resets_to_qposinit():
    qep = QepState(qposinit=0)
    for _ in range(10):
        qep.apply_edge(forward_edge(qep))
    assert qep.qposcnt == 10
    qep.apply_edge("index_rise")
    assert qep.qposcnt == 0
    assert qep.index_count == 1


def test_unit_timeout_plain_delta():
    qep = QepState(quprd=100)
    qep.qposcnt = 100
    qep.unit_timeout(100)
    qep.qposcnt = 300
    lat, delta = qep.unit_timeout(200)
    assert (lat, delta) == (300, 200)


def test_unit_timeout_wrap_shortest_path():
    qep = QepState(quprd=100)
    qep.qposcnt = 4000
    qep.unit_timeout(100)
    qep.qposcnt = 100               # forward through the wrap
    lat, delta = qep.unit_timeout(200)
    assert (lat, delta) == (100, 196)


def test_unit_timeout_reverse_delta():
    qep = QepState(quprd=100)
    qep.qposcnt = 100
    qep.unit_timeout(100)
    qep.qposcnt = 4000              # 100 - 4000 maps to -196
    _, delta = qep.unit_timeout(200)
    assert delta == -196


def test_unit_timeout_before_period_raises():
    qep = QepState(quprd=1000)
    qep.unit_timeout(1000)
    with pytest.raises(PeripheralError):
        qep.unit_timeout(1500)


def test_qposlat_changes_only_on_timeout():
    qep = QepState(quprd=10)
    for _ in range(5):
        qep.apply_edge(forward_edge(qep))
    assert qep.qposlat == 0
    qep.unit_timeout(10)
    assert qep.qposlat == 5


def test_random_walk_matches_modulo_oracle():
    res = run_qep_suite(n_edges=20_000, seed=5)
    assert res.passed, res.failures[:3]


def test_walk_generator_emits_legal_sequences():
    edges, _ = random_edge_walk(5000, seed=11)
    qep = QepState()
    for e in edges:
        qep.apply_edge(e)
    assert qep.glitch_count == 0
