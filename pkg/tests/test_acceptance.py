"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one ``[PASS]``/``[FAIL]`` line (run ``pytest -s`` to see
them live).  Bundled scenarios are simulated once per session and shared.
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from drivebench.conformance import run_pwm_suite, run_qep_suite
from drivebench.engine import Engine
from drivebench.firmware import scale_current
from drivebench.periph import AdcUnit
from drivebench.plant import MotorParams, SenseChain, rk4_step
from drivebench.scenario import load_bundled_scenario
from drivebench.telemetry import FrameLog

F_PWM = 10_000.0  # default carrier: f_sys / (2 * tbprd)


def crit(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
    print(line)
    assert ok, line


def run_bundled(name, probe=None):
    scenario = load_bundled_scenario(name)
    log = FrameLog()
    engine = Engine(scenario, sinks=[log.record], probe=probe)
    t0 = time.perf_counter()
    report = engine.run()
    desk = time.perf_counter() - t0
    return engine, report, log, desk


@pytest.fixture(scope="module")
def step120():
    trace = []

    def probe(engine, frame):
        duties = tuple(ch.duty_active for ch in engine.channels)
        trace.append((frame.t, duties, engine.motor))

    return run_bundled("step120", probe=probe) + (trace,)


@pytest.fixture(scope="module")
def reversal():
    return run_bundled("reversal")


@pytest.fixture(scope="module")
def multistep():
    return run_bundled("multistep")


@pytest.fixture(scope="module")
def safe_torque():
    peak = {"torque": 0.0, "speed": 0.0}

    def probe(engine, frame):
        peak["torque"] = max(peak["torque"], abs(engine.torque))
        peak["speed"] = max(peak["speed"], abs(engine.motor[4]))

    return run_bundled("safe_torque", probe=probe) + (peak,)


def test_step_response_settling(step120):
    engine, report, log, desk, trace = step120
    step = report.steps[0]
    ok = (step.settle_time is not None and step.settle_time <= 0.7
          and step.overshoot_pct <= 5.0 and desk <= 30.0)
    crit("step120 settles within 2% in <=0.7 s, overshoot <=5%, desk <=30 s",
         ok,
         f"settle={step.settle_time:.3f} s overshoot={step.overshoot_pct:.2f}% "
         f"desk={desk:.1f} s")


def test_reversal_tracking_and_iq_polarity(reversal):
    engine, report, log, desk = reversal
    ok = True
    details = []
    for step in report.steps:
        delta = step.target - step.previous
        settled = step.settle_time is not None and step.settle_time <= 0.7
        polarity = (step.mean_iq_accel > 0) == (delta > 0)
        ok = ok and settled and polarity
        details.append(f"{step.previous:+.0f}->{step.target:+.0f}:"
                       f"settle={step.settle_time and round(step.settle_time, 3)}"
                       f",iq={step.mean_iq_accel:+.2f}")
    crit("reversal settles each flip and iq polarity follows the reference",
         ok and len(report.steps) == 3, " ".join(details))


def test_multistep_steady_state_error(multistep):
    engine, report, log, desk = multistep
    ok = len(report.steps) == 3
    details = []
    for step in report.steps:
        settled = step.settle_time is not None
        ss_ok = step.ss_error_pct is not None and step.ss_error_pct <= 1.0
        ok = ok and settled and ss_ok
        details.append(f"{step.target:.0f}:ss={step.ss_error_pct:.3f}%")
    crit("multistep settles each step with ss error <=1%", ok,
         " ".join(details))


def test_safe_torque(safe_torque):
    engine, report, log, desk, peak = safe_torque
    ok = (abs(report.final_state.omega_m) < 0.01
          and peak["torque"] < 0.01)
    crit("safe_torque ends at rest with no torque", ok,
         f"|w|={abs(report.final_state.omega_m):.2e} rad/s "
         f"max|Te|={peak['torque']:.2e} N m")


def test_pwm_conformance():
    res = run_pwm_suite(n_configs=200, seed=20260810)
    crit("pwm: 200 random configs match the per-tick oracle exactly",
         res.passed,
         f"{res.checks} configs" + ("" if res.passed else f"; {res.failures[0]}"))


def test_timing_counts(step120):
    engine, report, log, desk, trace = step120
    expected_soc = int(report.duration * F_PWM)
    ok = (report.soc_count == expected_soc
          and report.isr_count == report.soc_count
          and report.speed_ctrl_count == report.isr_count // 10)
    crit("timing: soc == periods, isr == soc, speed == floor(isr/ds_ireg)",
         ok,
         f"soc={report.soc_count} isr={report.isr_count} "
         f"speed={report.speed_ctrl_count}")


def test_soc_tick_pattern():
    import json

    from drivebench.scenario import load_scenario

    sc = load_scenario(json.dumps({"sim": {"duration": 0.005}}))
    engine = Engine(sc, collect_events=True)
    engine.run()
    soc_ticks = [t for t, k in engine.event_log if k == "soc"]
    want = [10000 * (2 * k + 1) for k in range(len(soc_ticks))]
    crit("timing: SOC ticks are tbprd, 3*tbprd, 5*tbprd, ...",
         soc_ticks == want and len(soc_ticks) == 50,
         f"first={soc_ticks[:3]} count={len(soc_ticks)}")


def test_eqep_conformance():
    res = run_qep_suite(n_edges=100_000, seed=20260810)
    crit("eqep: 1e5 random edges match the modulo/shortest-path oracles",
         res.passed,
         f"{res.checks} checks" + ("" if res.passed else f"; {res.failures[0]}"))


def test_numerics_locked_rotor():
    p = MotorParams()
    v = 100.0
    sig_ls = p.sigma * p.Ls
    A = np.array([[-p.Rsigma / sig_ls, p.Lm / (p.Lr * p.Tr * sig_ls)],
                  [p.Lm / p.Tr, -1.0 / p.Tr]])
    b = np.array([v / sig_ls, 0.0])
    x_ss = -np.linalg.solve(A, b)
    h = 20e-6
    worst = 0.0
    state = (0.0,) * 6
    for k in range(int(0.2 / h)):
        state, _ = rk4_step(state, v, 0.0, 0.0, p, h)
        if (k + 1) % 500 == 0:
            t = (k + 1) * h
            want = x_ss + expm(A * t) @ (-x_ss)
            worst = max(worst, abs(state[0] - want[0]) / abs(want[0]),
                        abs(state[2] - want[1]) / abs(want[1]))
    crit("numerics: locked-rotor step response within 0.1% of closed form",
         worst < 1e-3, f"worst rel err {worst:.2e}")


def test_numerics_free_deceleration():
    p = MotorParams()
    h = 50e-6
    state = (0.0, 0.0, 0.0, 0.0, 100.0, 0.0)
    for _ in range(int(0.5 / h)):
        state, _ = rk4_step(state, 0.0, 0.0, 0.0, p, h)
    want = 100.0 * math.exp(-p.B * 0.5 / p.J)
    err = abs(state[4] - want) / want
    crit("numerics: free deceleration within 1e-6 of the exponential",
         err < 1e-6, f"rel err {err:.2e}")


def test_numerics_rk4_order():
    p = MotorParams()
    v = 100.0
    t_end = 0.05
    sig_ls = p.sigma * p.Ls
    A = np.array([[-p.Rsigma / sig_ls, p.Lm / (p.Lr * p.Tr * sig_ls)],
                  [p.Lm / p.Tr, -1.0 / p.Tr]])
    b = np.array([v / sig_ls, 0.0])
    x_ss = -np.linalg.solve(A, b)
    want = (x_ss + expm(A * t_end) @ (-x_ss))[0]
    errs = []
    for h in (400e-6, 200e-6):
        state = (0.0,) * 6
        for _ in range(int(round(t_end / h))):
            state, _ = rk4_step(state, v, 0.0, 0.0, p, h)
        errs.append(abs(state[0] - want))
    order = math.log2(errs[0] / errs[1])
    crit("numerics: RK4 observed order >= 3.8", order >= 3.8,
         f"order {order:.2f}")


def test_numerics_power_balance(step120):
    engine, report, log, desk, trace = step120
    p = engine.params
    v_dc = 300.0
    window = [s for s in trace if 1.5 <= s[0] <= 2.0]
    p_dc = p_sink = 0.0
    for _, duties, state in window:
        i_sa, i_sb, psi_ra, psi_rb, omega, _ = state
        i_a = i_sa
        i_b = 0.5 * (-i_sa + math.sqrt(3) * i_sb)
        i_c = -i_a - i_b
        p_dc += v_dc * (duties[0] * i_a + duties[1] * i_b + duties[2] * i_c)
        t_e = 1.5 * p.pole_pairs * p.Lm / p.Lr * (psi_ra * i_sb - psi_rb * i_sa)
        p_mech = t_e * omega
        p_stator = 1.5 * p.Rs * (i_sa ** 2 + i_sb ** 2)
        i_ra = (psi_ra - p.Lm * i_sa) / p.Lr
        i_rb = (psi_rb - p.Lm * i_sb) / p.Lr
        p_rotor = 1.5 * p.Rr * (i_ra ** 2 + i_rb ** 2)
        p_sink += p_mech + p_stator + p_rotor
    p_dc /= len(window)
    p_sink /= len(window)
    err = abs(p_dc - p_sink) / abs(p_dc)
    crit("numerics: averaged steady-state power balance within 1%",
         err < 0.01,
         f"P_dc={p_dc:.2f} W sinks={p_sink:.2f} W err={err * 100:.3f}%")


def test_sense_chain_round_trip():
    sense = SenseChain()
    adc = AdcUnit()
    gain_i = 3.0 / (4096 * 8.2 * 0.01)
    worst = 0.0
    for k in range(-120, 121):          # 0.1 A grid over +/-12 A
        i_true = k / 10.0
        code = adc.code_for(sense.output_voltage(i_true))
        i_back = scale_current(code, 1706, gain_i)
        worst = max(worst, abs(i_back - i_true))
    crit("sense chain round trip within 0.009 A for |i| <= 12 A",
         worst <= 0.009, f"worst {worst:.5f} A")


def test_determinism_byte_identical_csv(tmp_path, step120):
    engine, report, log, desk, trace = step120
    first = tmp_path / "first.csv"
    log.export_csv(str(first))
    log2 = FrameLog()
    Engine(load_bundled_scenario("step120"), sinks=[log2.record]).run()
    second = tmp_path / "second.csv"
    log2.export_csv(str(second))
    same = first.read_bytes() == second.read_bytes()
    crit("determinism: repeated runs export byte-identical CSV", same,
         f"{len(log)} frames compared")
