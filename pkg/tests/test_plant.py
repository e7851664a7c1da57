"""Plant models against closed-form oracles: linear response, RK4 order,
encoder/position consistency, inverter mapping, sense chain."""

import math
import random

import numpy as np
import pytest
from scipy.linalg import expm

from drivebench.periph import QepState
from drivebench.plant import (EncoderModel, MotorParams, SenseChain,
                              electromagnetic_torque, inverter_voltages,
                              inverter_voltages_switched, motor_derivatives,
                              phase_currents, rk4_step)

TWO_PI = 2.0 * math.pi


def simulate(state, v_a, v_b, t_load, params, h, n):
    for _ in range(n):
        state, _ = rk4_step(state, v_a, v_b, t_load, params, h)
    return state


def locked_rotor_truth(params, v_step, t):
    """Exact alpha-axis response with the rotor locked: 2-state linear system
    solved with the matrix exponential (independent of the RK4 path)."""
    sig_ls = params.sigma * params.Ls
    A = np.array([
        [-params.Rsigma / sig_ls, params.Lm / (params.Lr * params.Tr * sig_ls)],
        [params.Lm / params.Tr, -1.0 / params.Tr],
    ])
    b = np.array([v_step / sig_ls, 0.0])
    x_ss = -np.linalg.solve(A, b)
    x = x_ss + expm(A * t) @ (-x_ss)
    return x  # (i_sa, psi_ra)


# -- inverter -----------------------------------------------------------------


def test_equal_duties_give_zero_line_voltages():
    assert inverter_voltages((0.5, 0.5, 0.5), 300.0) == (0.0, 0.0, 0.0)


def test_single_high_leg():
    v = inverter_voltages_switched((1, 0, 0), (0.0, 0.0, 0.0), 300.0)
    assert v == pytest.approx((200.0, -100.0, -100.0))


def test_averaged_equals_switched_at_duty_extremes():
    avg = inverter_voltages((1.0, 0.0, 0.0), 300.0)
    sw = inverter_voltages_switched((1, 0, 0), (0.0, 0.0, 0.0), 300.0)
    assert avg == pytest.approx(sw)


def test_dead_band_pole_follows_current_sign():
    # Both switches off: positive current -> low diode (pole 0),
    # negative current -> high diode (pole v_dc).
    v = inverter_voltages_switched((None, None, None), (2.0, -1.0, -1.0), 300.0)
    assert v == pytest.approx((-200.0, 100.0, 100.0))


def test_phase_currents_balanced():
    i_a, i_b, i_c = phase_currents(2.0, -1.0)
    assert i_a + i_b + i_c == pytest.approx(0.0, abs=1e-15)
    assert i_a == 2.0


# -- machine derivatives -------------------------------------------------------


def test_zero_state_zero_input_equilibrium():
    p = MotorParams()
    d = motor_derivatives((0.0,) * 6, 0.0, 0.0, 0.0, p)
    assert d == (0.0,) * 6


def test_torque_zero_without_rotor_flux():
    p = MotorParams()
    state = (5.0, -3.0, 0.0, 0.0, 40.0, 1.0)
    assert electromagnetic_torque(state, p) == 0.0


def test_torque_odd_symmetry():
    p = MotorParams()
    rng = random.Random(1)
    for _ in range(100):
        ia, ib, pa, pb = (rng.uniform(-5, 5) for _ in range(4))
        t1 = electromagnetic_torque((ia, ib, pa, pb, 0, 0), p)
        t2 = electromagnetic_torque((ia, -ib, pa, -pb, 0, 0), p)
        assert t2 == pytest.approx(-t1, rel=1e-12, abs=1e-15)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        MotorParams(Rs=-1.0)
    with pytest.raises(ValueError):
        MotorParams(Lm=0.3)  # exceeds Ls = Lr = 0.26


# -- integration ---------------------------------------------------------------


def test_locked_rotor_matches_matrix_exponential():
    # Alpha-axis excitation leaves the beta axis and torque exactly zero,
    # so the rotor stays locked without artificial clamping.
    p = MotorParams()
    v = 100.0
    h = 20e-6
    state = (0.0,) * 6
    for t_check in (0.01, 0.05, 0.2):
        n = int(round(t_check / h))
        got = simulate((0.0,) * 6, v, 0.0, 0.0, p, h, n)
        assert got[1] == 0.0 and got[3] == 0.0 and got[4] == 0.0
        want = locked_rotor_truth(p, v, t_check)
        assert got[0] == pytest.approx(want[0], rel=1e-3)
        assert got[2] == pytest.approx(want[1], rel=1e-3)


def test_free_deceleration_exponential():
    p = MotorParams()
    h = 50e-6
    t_end = 0.5
    state = (0.0, 0.0, 0.0, 0.0, 100.0, 0.0)
    state = simulate(state, 0.0, 0.0, 0.0, p, h, int(t_end / h))
    want = 100.0 * math.exp(-p.B * t_end / p.J)
    assert state[4] == pytest.approx(want, rel=1e-6)


def test_rk4_observed_order():
    # Error vs the matrix-exponential truth must shrink ~16x per halving.
    p = MotorParams()
    v = 100.0
    t_end = 0.05
    want = locked_rotor_truth(p, v, t_end)[0]
    errs = []
    for h in (400e-6, 200e-6, 100e-6):
        got = simulate((0.0,) * 6, v, 0.0, 0.0, p, h, int(round(t_end / h)))
        errs.append(abs(got[0] - want))
    order1 = math.log2(errs[0] / errs[1])
    order2 = math.log2(errs[1] / errs[2])
    assert order1 >= 3.8
    assert order2 >= 3.8


def test_step_halving_trajectory_stability():
    # Spinning, fluxed condition; halving h moves the 0.1 s trajectory of
    # every state by < 1e-6 relative to its own scale.
    p = MotorParams()
    start = (1.0, -0.5, 0.3, 0.1, 20.0, 0.5)
    hs = (50e-6, 25e-6)
    trajs = []
    for h in hs:
        n = int(round(0.1 / h))
        keep = int(round(0.01 / h))  # sample every 10 ms
        traj = []
        state = start
        for k in range(n):
            state, _ = rk4_step(state, 50.0, 10.0, 0.05, p, h)
            if (k + 1) % keep == 0:
                traj.append(state)
        trajs.append(traj)
    coarse, fine = trajs
    for idx in range(6):
        scale = max(max(abs(s[idx]) for s in coarse), 1e-9)
        worst = max(abs(a[idx] - b[idx]) for a, b in zip(coarse, fine))
        assert worst / scale < 1e-6, f"state {idx}"


def test_h_zero_is_identity():
    p = MotorParams()
    state = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    out, d_theta = rk4_step(state, 10.0, 20.0, 0.1, p, 0.0)
    assert out == state
    assert d_theta == 0.0


def test_zero_state_stays_exactly_zero():
    p = MotorParams()
    state = (0.0,) * 6
    for _ in range(1000):
        state, _ = rk4_step(state, 0.0, 0.0, 0.0, p, 1e-5)
    assert state == (0.0,) * 6


def test_divergence_detection_value():
    # non-finite states propagate; the engine checks sum() finiteness
    bad = (float("inf"), 0.0, 0.0, 0.0, 0.0, 0.0)
    assert not math.isfinite(sum(bad))


# -- encoder --------------------------------------------------------------------


def test_encoder_edge_count_one_rev():
    enc = EncoderModel()
    omega = TWO_PI / 0.01  # one revolution in 10 ms
    h_ticks = 4000         # 20 us at 200 MHz
    edges = []
    t = 0
    for _ in range(500):   # 500 * 20 us = 10 ms
        edges.extend(enc.advance(omega * 20e-6, t, t + h_ticks))
        t += h_ticks
    quad = [e for e in edges if e[1] != "index_rise"]
    index = [e for e in edges if e[1] == "index_rise"]
    assert len(quad) == 4096
    assert len(index) == 1
    ticks = [e[0] for e in edges]
    assert ticks == sorted(ticks)


def test_encoder_no_motion_no_edges():
    enc = EncoderModel()
    assert enc.advance(0.0, 0, 1000) == []


def test_encoder_reversal_position_consistency():
    # Net eQEP count over a random back-and-forth walk equals the net angle
    # divided by the count step, within one count.
    rng = random.Random(42)
    enc = EncoderModel()
    qep = QepState(qposmax=(1 << 30) - 1, qposinit=1 << 29)
    qep.index_reset_on_rising = False
    total = 0.0
    t = 0
    for _ in range(2000):
        d = rng.uniform(-0.02, 0.025)
        total += d
        for _, name in enc.advance(d, t, t + 1000):
            qep.apply_edge(name)
        t += 1000
    net = qep.qposcnt - (1 << 29)
    assert abs(net - round(total * 4096 / TWO_PI)) <= 1
    assert qep.glitch_count == 0


# -- sense chain ----------------------------------------------------------------


def test_sense_zero_current_reads_common_mode():
    assert SenseChain().output_voltage(0.0) == 1.25


def test_sense_gain():
    assert SenseChain().output_voltage(10.0) == pytest.approx(2.07)


def test_sense_clips_and_flags():
    chain = SenseChain()
    v = chain.output_voltage(100.0)  # 1 V differential clipped to 0.25
    assert v == pytest.approx(1.25 + 8.2 * 0.25)
    assert chain.clip_count == 1
