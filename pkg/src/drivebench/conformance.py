"""Brute-force reference models and the conformance suites built on them.

The event-driven peripherals in :mod:`drivebench.periph` are fast but easy
to get subtly wrong, so each one is checked against a deliberately naive
counterpart here:

* the PWM channel against a one-tick-at-a-time counter/compare/dead-band
  simulation,
* the quadrature decoder against unbounded integer edge counting,
* the ADC transfer function against direct arithmetic.

The suites run from the CLI (``drivebench conformance``) and from the
acceptance tests.  All randomness is seeded, so a given seed always checks
the same stimulus.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .periph import AdcUnit, PwmChannel, QepState, round_half_up

QUAD_STATES = ((0, 0), (1, 0), (1, 1), (0, 1))  # forward order, (A, B)


def pwm_per_tick_sim(tbprd, db_red, db_fed, n_ticks, duty0, writes=()):
    """Step the counter one tick at a time; the reference for PwmChannel.

    ``writes`` is a sequence of ``(tick, duty)`` shadow writes, applied after
    the tick's output update (the engine writes compares from the ISR, which
    runs after edge processing at any shared tick).

    Returns ``(edges, overlap_ticks)`` where ``edges`` is a list of
    ``(tick, "A"|"B", level)`` and ``overlap_ticks`` counts ticks with both
    outputs high.
    """
    P = tbprd
    writes_at = {}
    for t, duty in writes:
        writes_at.setdefault(t, []).append(duty)
    shadow = round_half_up(min(max(duty0, 0.0), 1.0) * P)
    active = shadow
    raw = False
    consec_high = 0
    consec_low = 0
    out_a = out_b = False
    edges = []
    overlap = 0
    for t in range(n_ticks):
        pos = t % (2 * P)
        if pos == 0:
            active = shadow
        if 1 <= active <= P - 1:
            if pos == active:
                raw = True
            elif pos == 2 * P - active:
                raw = False
        if raw:
            consec_high += 1
            consec_low = 0
        else:
            consec_low += 1
            consec_high = 0
        na = raw and consec_high >= db_red + 1
        nb = (not raw) and consec_low >= db_fed + 1
        if na != out_a:
            out_a = na
            edges.append((t, "A", 1 if na else 0))
        if nb != out_b:
            out_b = nb
            edges.append((t, "B", 1 if nb else 0))
        if out_a and out_b:
            overlap += 1
        if t in writes_at:
            for d in writes_at[t]:
                shadow = round_half_up(min(max(d, 0.0), 1.0) * P)
    return edges, overlap


def pwm_event_sim(tbprd, db_red, db_fed, n_ticks, duty0, writes=()):
    """Run the event-driven channel over the same stimulus as the oracle."""
    ch = PwmChannel(tbprd=tbprd, db_red=db_red, db_fed=db_fed, duty=duty0)
    ch.start(0)
    edges = []
    for t, duty in sorted(writes):
        edges.extend(ch.advance(t))
        ch.set_compare(duty)
    edges.extend(ch.advance(n_ticks - 1))
    return edges


def measure_dead_gaps(edges):
    """Gaps between complementary transitions: (b_fall->a_rise, a_fall->b_rise).

    A gap is measured only when the opposite channel's fall is the edge
    immediately preceding the rise; a rise whose complementary pulse was
    swallowed entirely by the delay has no measurable gap.
    """
    ordered = sorted(edges)
    gaps_a = []
    gaps_b = []
    for prev, cur in zip(ordered, ordered[1:]):
        if cur[2] == 1 and prev[2] == 0 and prev[1] != cur[1]:
            if cur[1] == "A":
                gaps_a.append(cur[0] - prev[0])
            else:
                gaps_b.append(cur[0] - prev[0])
    return gaps_a, gaps_b


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, msg: str) -> None:
        self.failures.append(msg)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status} {self.name}: {self.checks} checks"
        if self.failures:
            line += f", {len(self.failures)} failures; first: {self.failures[0]}"
        return line


def run_pwm_suite(n_configs: int = 200, seed: int = 20260810) -> SuiteResult:
    """Random PWM configs vs the per-tick oracle, edge-for-edge."""
    rng = random.Random(seed)
    res = SuiteResult("pwm")
    for i in range(n_configs):
        tbprd = rng.randint(10, 1000)
        db_max = max(1, min(60, tbprd // 2))
        db_red = rng.randint(1, db_max)
        db_fed = rng.randint(1, db_max)
        duty0 = rng.random()
        periods = rng.randint(5, 10)
        n_ticks = periods * 2 * tbprd
        writes = [(rng.randrange(n_ticks), rng.uniform(-0.1, 1.1))
                  for _ in range(rng.randint(0, 4))]
        ref_edges, overlap = pwm_per_tick_sim(
            tbprd, db_red, db_fed, n_ticks, duty0, writes)
        got_edges = pwm_event_sim(tbprd, db_red, db_fed, n_ticks, duty0, writes)
        res.checks += 1
        tag = (f"config {i}: tbprd={tbprd} red={db_red} fed={db_fed} "
               f"duty={duty0:.4f} writes={writes}")
        if sorted(ref_edges) != sorted(got_edges):
            res.fail(f"{tag}: edge lists differ "
                     f"({len(ref_edges)} ref vs {len(got_edges)} model)")
            continue
        if overlap:
            res.fail(f"{tag}: outputs overlap on {overlap} ticks")
        gaps_a, gaps_b = measure_dead_gaps(ref_edges)
        if any(g != db_red for g in gaps_a):
            res.fail(f"{tag}: A-rise gap != db_red: {set(gaps_a)}")
        if any(g != db_fed for g in gaps_b):
            res.fail(f"{tag}: B-rise gap != db_fed: {set(gaps_b)}")
    return res


def random_edge_walk(n_edges: int, seed: int, index_period: int = 4096):
    """Yield a legal quadrature edge sequence plus ground-truth positions.

    Returns ``(edges, true_pos)`` where ``true_pos[k]`` is the unbounded
    signed position after edge k.  An ``index_rise`` is emitted whenever the
    walk crosses a multiple of ``index_period`` (one per mechanical rev).
    """
    rng = random.Random(seed)
    pos = 0
    direction = 1
    edges = []
    true_pos = []
    for _ in range(n_edges):
        if rng.random() < 0.01:
            direction = -direction
        old_state = QUAD_STATES[pos % 4]
        new_pos = pos + direction
        new_state = QUAD_STATES[new_pos % 4]
        if old_state[0] != new_state[0]:
            edges.append("a_rise" if new_state[0] else "a_fall")
        else:
            edges.append("b_rise" if new_state[1] else "b_fall")
        true_pos.append(new_pos)
        crossed = (new_pos % index_period == 0)
        pos = new_pos
        if crossed:
            edges.append("index_rise")
            true_pos.append(pos)
    return edges, true_pos


def run_qep_suite(n_edges: int = 100_000, seed: int = 42) -> SuiteResult:
    """Random legal edge streams vs unbounded integer counting."""
    res = SuiteResult("qep")
    qep = QepState(qposmax=4095, qposinit=0, quprd=1)
    edges, true_pos = random_edge_walk(n_edges, seed)
    rng = random.Random(seed + 1)
    expected = 0
    base = 0  # unbounded position at the last index reset
    last_latch_true = 0
    tick = 0
    for edge, pos in zip(edges, true_pos):
        qep.apply_edge(edge)
        if edge == "index_rise":
            expected = qep.qposinit
            base = pos
        else:
            expected = (qep.qposinit + (pos - base)) % 4096
        res.checks += 1
        if qep.qposcnt != expected:
            res.fail(f"after edge {res.checks} ({edge}): "
                     f"qposcnt={qep.qposcnt} expected={expected}")
            break
        if rng.random() < 0.001:
            tick += qep.quprd
            _, delta = qep.unit_timeout(tick)
            true_delta = pos - last_latch_true
            last_latch_true = pos
            if abs(true_delta) < 2048 and delta != true_delta:
                res.fail(f"latch delta {delta} != true {true_delta}")
                break
    if qep.glitch_count:
        res.fail(f"legal sequence produced {qep.glitch_count} glitches")
    return res


def run_adc_suite(n_points: int = 4096) -> SuiteResult:
    """Transfer-function arithmetic and monotonicity."""
    res = SuiteResult("adc")
    adc = AdcUnit()
    for v_in, want in ((0.0, 0), (1.25, 1706), (3.0, 4095)):
        res.checks += 1
        got = adc.code_for(v_in)
        if got != want:
            res.fail(f"code({v_in}) = {got}, want {want}")
    prev = -1
    for k in range(n_points + 1):
        v = 3.0 * k / n_points
        code = adc.code_for(v)
        res.checks += 1
        if code < prev:
            res.fail(f"monotonicity broken at v={v}: {code} < {prev}")
            break
        prev = code
    # EOC latency: acqps+1 sample window plus fixed conversion time.
    res.checks += 1
    _, eoc = AdcUnit().convert(1.0, 10000)
    if eoc != 10073:
        res.fail(f"eoc tick {eoc} != 10073")
    return res


def run_all(pwm_configs: int = 200, qep_edges: int = 100_000,
            seed: int = 20260810) -> list[SuiteResult]:
    return [
        run_pwm_suite(n_configs=pwm_configs, seed=seed),
        run_qep_suite(n_edges=qep_edges, seed=seed),
        run_adc_suite(),
    ]
