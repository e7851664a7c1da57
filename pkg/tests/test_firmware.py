"""Control firmware: scaling, transforms, regulators, dispatch, modes."""

import math
import random

import pytest

from drivebench.firmware import (Controller, ControlConfig, PiState, clarke,
                                 duties_from_valphabeta, flux_angle_update,
                                 inverse_park, park, scale_current,
                                 speed_estimate)

TWO_PI = 2.0 * math.pi
GAIN_I = 3.0 / (4096 * 8.2 * 0.01)


def make_controller(**cfg_kwargs):
    cfg = ControlConfig(**cfg_kwargs)
    return Controller(cfg, ts=1e-4)


# -- scaling ---------------------------------------------------------------------


def test_scale_current_zero_code():
    assert scale_current(1706, 1706, GAIN_I) == 0.0


def test_scale_current_example():
    assert scale_current(1706 + 82, 1706, GAIN_I) == pytest.approx(0.732, abs=5e-4)


def test_speed_estimate_values():
    assert speed_estimate(4096, 0.01) == pytest.approx(628.319, abs=1e-3)
    assert speed_estimate(0, 0.01) == 0.0
    assert speed_estimate(-41, 0.01) == pytest.approx(-6.289, abs=1e-3)


# -- transforms -------------------------------------------------------------------


def test_clarke_aligned_with_phase_a():
    assert clarke(1.0, -0.5) == pytest.approx((1.0, 0.0))


def test_clarke_quadrature():
    assert clarke(0.0, math.sqrt(3) / 2) == pytest.approx((0.0, 1.0))


def test_clarke_zero():
    assert clarke(0.0, 0.0) == (0.0, 0.0)


def test_park_identity_at_zero():
    assert park(1.0, 2.0, 0.0) == pytest.approx((1.0, 2.0))


def test_park_quarter_turn():
    assert park(1.0, 0.0, math.pi / 2) == pytest.approx((0.0, -1.0), abs=1e-15)


def test_park_roundtrip_random():
    rng = random.Random(7)
    for _ in range(1000):
        x, y = rng.uniform(-10, 10), rng.uniform(-10, 10)
        th = rng.uniform(-10, 10)
        d, q = park(x, y, th)
        xx, yy = inverse_park(d, q, th)
        assert abs(xx - x) < 1e-12 and abs(yy - y) < 1e-12


# -- PI with conditional integration -----------------------------------------------


def test_pi_pure_proportional():
    pi = PiState()
    assert pi.step(2.0, 1.0, 0.0, -100, 100, 1e-3) == 2.0


def test_pi_integral_accumulation():
    # Discrete-sum oracle of the stated law: the output uses the integrator
    # value before this step's accumulation, so call N reads 0.01*(N-1).
    pi = PiState()
    outs = [pi.step(1.0, 0.0, 10.0, -100, 100, 1e-3) for _ in range(5)]
    assert outs == pytest.approx([0.0, 0.01, 0.02, 0.03, 0.04])


def test_pi_antiwindup_freezes_integrator():
    pi = PiState()
    pi.step(10.0, 1.0, 5.0, -1.0, 1.0, 1e-3)   # saturates high, err > 0
    assert pi.integ == 0.0
    pi.step(-10.0, 1.0, 5.0, -1.0, 1.0, 1e-3)  # saturates low, err < 0
    assert pi.integ == 0.0
    pi.step(-0.1, 1.0, 5.0, -1.0, 1.0, 1e-3)   # unsaturated: integrates
    assert pi.integ == pytest.approx(-0.0005)


def test_pi_integrates_when_saturated_against_error():
    # Output pinned high but the error pulls back down: integration resumes.
    pi = PiState()
    pi.integ = 2.0
    out = pi.step(-0.5, 1.0, 10.0, -1.0, 1.0, 1e-3)
    assert out == 1.0
    assert pi.integ == pytest.approx(2.0 - 0.005)


# -- flux angle -------------------------------------------------------------------


def test_flux_angle_zero_slip_advance():
    th, imr = flux_angle_update(1.0, 1.8, 1.8, 0.0, 100.0, 1e-4,
                                0.26 / 1.8, 2, 0.05)
    assert imr == 1.8
    assert th == pytest.approx(1.0 + 2 * 100.0 * 1e-4)


def test_flux_angle_imr_first_order():
    # i_mr follows the recurrence x_{k+1} = x_k + (ts/tr)(i_d - x_k) exactly.
    tr = 0.26 / 1.8
    ts = 1e-3
    imr = 0.0
    th = 0.0
    for _ in range(100):
        th, imr = flux_angle_update(th, imr, 2.0, 0.0, 0.0, ts, tr, 2, 0.05)
    want = 2.0 * (1.0 - (1.0 - ts / tr) ** 100)
    assert imr == pytest.approx(want, rel=1e-12)


def test_flux_angle_floor_guard():
    th, _ = flux_angle_update(0.0, 0.0, 0.0, 1.0, 0.0, 1e-4,
                              0.1444, 2, 0.05)
    assert math.isfinite(th)
    slip = 1.0 / (0.1444 * 0.05)
    assert th == pytest.approx((slip * 1e-4) % TWO_PI)


# -- modulation -------------------------------------------------------------------


def test_duties_null_command():
    duties, clamped = duties_from_valphabeta(0.0, 0.0, 300.0)
    assert duties == (0.5, 0.5, 0.5)
    assert not clamped


def test_duties_linear_range_boundary():
    v_dc = 300.0
    v_mag = v_dc / math.sqrt(3)
    for k in range(360):
        th = k * TWO_PI / 360
        duties, _ = duties_from_valphabeta(v_mag * math.cos(th),
                                           v_mag * math.sin(th), v_dc)
        assert all(0.0 <= d <= 1.0 for d in duties)


def test_duties_overmodulation_clamps():
    duties, clamped = duties_from_valphabeta(300.0, 0.0, 300.0)
    assert clamped
    assert all(0.0 <= d <= 1.0 for d in duties)


def test_vf_zero_frequency_zero_boost():
    ctrl = make_controller(mode="vf",
                           gains={"vf_boost": 0.0, "vf_volts_per_hz": 4.0})
    ctrl.set_pwm_enabled(True)
    ctrl.vf_freq = 0.0
    assert ctrl._vf_control() == (0.5, 0.5, 0.5)


def test_vf_voltage_clamped_at_v_max():
    ctrl = make_controller(mode="vf",
                           gains={"vf_boost": 0.0, "vf_volts_per_hz": 4.0})
    ctrl.set_pwm_enabled(True)
    ctrl.vf_freq = 50.0           # 200 V demand > 173.2 V limit
    before = ctrl.v_clamp_count
    ctrl._vf_control()
    assert ctrl.v_clamp_count == before + 1


def test_vf_duties_bounded_random_configs():
    rng = random.Random(3)
    for _ in range(200):
        ctrl = make_controller(
            mode="vf",
            gains={"vf_boost": rng.uniform(0, 20),
                   "vf_volts_per_hz": rng.uniform(0, 10)})
        ctrl.set_pwm_enabled(True)
        ctrl.vf_freq = rng.uniform(-80, 80)
        ctrl.theta_v = rng.uniform(0, TWO_PI)
        duties = ctrl._vf_control()
        assert all(0.0 <= d <= 1.0 for d in duties)


# -- dispatch ----------------------------------------------------------------------


def run_isrs(ctrl, n, code=1706):
    for _ in range(n):
        ctrl.isr(code, code, 0)


def test_dispatch_decimation_10():
    ctrl = make_controller(ds_ireg=10)
    run_isrs(ctrl, 100)
    assert ctrl.current_ctrl_count == 100
    assert ctrl.speed_ctrl_count == 10


def test_dispatch_decimation_1():
    ctrl = make_controller(ds_ireg=1)
    run_isrs(ctrl, 25)
    assert ctrl.current_ctrl_count == 25
    assert ctrl.speed_ctrl_count == 25


def test_dispatch_count_is_floor():
    ctrl = make_controller(ds_ireg=10)
    run_isrs(ctrl, 95)
    assert ctrl.speed_ctrl_count == 9


def test_literal_dispatch_mirrors_switch_case():
    ctrl = make_controller(ds_ireg=10, literal_dispatch=True)
    run_isrs(ctrl, 100)
    assert ctrl.current_ctrl_count == 10   # only when the counter is 0
    assert ctrl.speed_ctrl_count == 10     # only when the counter is 1


# -- safe state and trip -------------------------------------------------------------


def test_inhibited_controller_holds_safe_duties():
    ctrl = make_controller(mode="foc")
    ctrl.omega_ref = 120.0
    run_isrs(ctrl, 200)
    assert ctrl.duties == (0.5, 0.5, 0.5)
    assert ctrl.pi_id.integ == 0.0
    assert ctrl.pi_iq.integ == 0.0
    assert ctrl.pi_w.integ == 0.0


def test_overcurrent_trips_and_latches():
    ctrl = make_controller(mode="foc")
    ctrl.set_pwm_enabled(True)
    big = 1706 + int(13.0 / GAIN_I)        # 13 A on phase a
    ctrl.isr(big, 1706, 0)
    assert ctrl.trip_latched
    assert not ctrl.pwm_enabled
    ctrl.isr(1706, 1706, 0)
    assert ctrl.duties == (0.5, 0.5, 0.5)


def test_unknown_gain_rejected():
    ctrl = make_controller()
    with pytest.raises(KeyError):
        ctrl.set_gain("kp_bogus", 1.0)
    ctrl.set_gain("kp_w", 0.7)
    assert ctrl.cfg.gains["kp_w"] == 0.7
    ctrl.set_gain("id_ref", 2.0)
    assert ctrl.cfg.id_ref == 2.0
