"""Control code executed in the ADC end-of-conversion interrupt.

The interrupt runs once per PWM period.  Every invocation scales the raw
current codes and runs the inner current loop; the outer speed loop runs
once every ``ds_ireg`` invocations.  Three strategies are supported:

* ``idle`` -- duties pinned at 0.5 (no average volts, no torque),
* ``vf``   -- open-loop volts-per-hertz with a slew-limited frequency ramp,
* ``foc``  -- indirect rotor-flux-oriented control: the flux angle is
  integrated from measured speed plus the slip implied by the torque
  current and the magnetizing-current estimate.

Until the first PWM enable, and after a software overcurrent trip, the
duties stay at 0.5 and the regulator integrators are frozen so nothing
winds up while the outputs are inhibited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi
SQRT3 = math.sqrt(3.0)

GAIN_NAMES = ("kp_id", "ki_id", "kp_iq", "ki_iq", "kp_w", "ki_w",
              "vf_volts_per_hz", "vf_boost")
#: names accepted by gain-set commands: the PI/V-f gains plus two references
SETTABLE_NAMES = GAIN_NAMES + ("id_ref", "speed_filter_hz")

MODES = ("idle", "vf", "foc")


def default_gains() -> dict:
    return {
        "kp_id": 40.0, "ki_id": 8000.0,
        "kp_iq": 40.0, "ki_iq": 8000.0,
        "kp_w": 0.5, "ki_w": 1.5,
        "vf_volts_per_hz": 4.0, "vf_boost": 2.0,
    }


@dataclass
class ControlConfig:
    mode: str = "idle"
    ds_ireg: int = 10                  # speed-loop decimation
    gains: dict = field(default_factory=default_gains)
    id_ref: float = 1.8                # rated-flux magnetizing current [A]
    i_max: float = 12.0                # software overcurrent trip [A]
    iq_max: float = 8.0                # torque-current clamp [A]
    v_dc: float = 300.0
    speed_filter_hz: float = 50.0
    offset_ia: int = 1706              # zero-current ADC code
    offset_ib: int = 1706
    gain_i: float = 3.0 / (4096 * 8.2 * 0.01)   # amps per code
    rotor_time_constant: float = 0.26 / 1.8     # [s], for the slip relation
    pole_pairs: int = 2
    counts_per_rev: int = 4096
    vf_slew_hz_per_s: float = 20.0
    literal_dispatch: bool = False     # reproduce the switch-case dispatch
    i_mr_floor: float = 0.05           # slip divide guard [A]
    dac_source: str = "omega_filt"     # omega_filt | iq | id | theta_e

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown control mode {self.mode!r}")
        if self.ds_ireg < 1:
            raise ValueError("ds_ireg must be >= 1")
        for lim in ("i_max", "iq_max", "v_dc"):
            if getattr(self, lim) <= 0:
                raise ValueError(f"{lim} must be positive")
        unknown = set(self.gains) - set(GAIN_NAMES)
        if unknown:
            raise ValueError(f"unknown gain names {sorted(unknown)}")
        full = default_gains()
        full.update(self.gains)
        self.gains = full

    @property
    def v_max(self) -> float:
        return self.v_dc / SQRT3


# -- elementary operations -----------------------------------------------------


def scale_current(code: int, offset: int, gain_i: float) -> float:
    """ADC code to amperes: (code - offset) * gain."""
    return (code - offset) * gain_i


def clarke(i_a: float, i_b: float):
    """Amplitude-invariant Clarke for a three-wire load (i_c = -i_a - i_b)."""
    return i_a, (i_a + 2.0 * i_b) / SQRT3


def park(i_alpha: float, i_beta: float, theta: float):
    c = math.cos(theta)
    s = math.sin(theta)
    return i_alpha * c + i_beta * s, -i_alpha * s + i_beta * c


def inverse_park(v_d: float, v_q: float, theta: float):
    c = math.cos(theta)
    s = math.sin(theta)
    return v_d * c - v_q * s, v_d * s + v_q * c


class PiState:
    """Integrator with conditional-integration anti-windup."""

    __slots__ = ("integ",)

    def __init__(self):
        self.integ = 0.0

    def reset(self):
        self.integ = 0.0

    def step(self, err, kp, ki, out_min, out_max, ts):
        u = kp * err + self.integ
        if u > out_max:
            out = out_max
            saturated_with_err = err > 0
        elif u < out_min:
            out = out_min
            saturated_with_err = err < 0
        else:
            out = u
            saturated_with_err = False
        if not saturated_with_err:
            self.integ += ki * ts * err
        return out


def pi_step(state: PiState, err, kp, ki, out_min, out_max, ts):
    return state.step(err, kp, ki, out_min, out_max, ts)


def flux_angle_update(theta_e, i_mr, i_d, i_q, omega_m, ts, tr,
                      pole_pairs, i_mr_floor):
    """Indirect field orientation: slip relation on the i_mr estimate."""
    i_mr += (ts / tr) * (i_d - i_mr)
    omega_slip = i_q / (tr * max(i_mr, i_mr_floor))
    theta_e = (theta_e + (pole_pairs * omega_m + omega_slip) * ts) % TWO_PI
    return theta_e, i_mr


def duties_from_valphabeta(v_alpha, v_beta, v_dc):
    """Min-max (common-mode) injection; covers |v| up to v_dc/sqrt(3).

    Returns ``(duties, clamped)``; duties are clamped to [0, 1] and the flag
    reports whether the command left the linear range.
    """
    v_a = v_alpha
    v_b = 0.5 * (-v_alpha + SQRT3 * v_beta)
    v_c = 0.5 * (-v_alpha - SQRT3 * v_beta)
    cm = 0.5 * (max(v_a, v_b, v_c) + min(v_a, v_b, v_c))
    duties = []
    clamped = False
    for v in (v_a, v_b, v_c):
        d = 0.5 + (v - cm) / v_dc
        if d < 0.0:
            d = 0.0
            clamped = True
        elif d > 1.0:
            d = 1.0
            clamped = True
        duties.append(d)
    return tuple(duties), clamped


def speed_estimate(delta_counts: int, t_unit: float,
                   counts_per_rev: int = 4096) -> float:
    """Mechanical speed from a position delta over one unit-timer period."""
    return delta_counts * (TWO_PI / counts_per_rev) / t_unit


class Controller:
    """Full controller context: dispatch, loops, modulation, estimation."""

    def __init__(self, config: ControlConfig, ts: float):
        self.cfg = config
        self.ts = ts                      # ISR period [s]
        self.mode = config.mode
        self.count_current = 0
        self.pwm_enabled = False
        self.trip_latched = False

        self.omega_ref = 0.0
        self.omega_meas_filt = 0.0
        self.omega_raw = 0.0
        self.iq_ref = 0.0
        self.theta_e = 0.0                # rotor-flux angle [rad]
        self.theta_v = 0.0                # V/f voltage angle [rad]
        self.i_mr = 0.0                   # magnetizing-current estimate [A]
        self.vf_freq = 0.0                # V/f stator frequency [Hz]
        self.duties = (0.5, 0.5, 0.5)
        self.last_qpos = 0
        self.speed_meas = None            # (delta_counts, t_unit) from eQEP

        self.i_a = 0.0
        self.i_b = 0.0
        self.i_d = 0.0
        self.i_q = 0.0

        self.pi_id = PiState()
        self.pi_iq = PiState()
        self.pi_w = PiState()

        self.isr_count = 0
        self.current_ctrl_count = 0
        self.speed_ctrl_count = 0
        self.duty_clamp_count = 0
        self.v_clamp_count = 0
        self.trip_count = 0

    # -- external commands (applied between interrupts) --------------------

    def set_mode(self, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown control mode {mode!r}")
        if mode == self.mode:
            return
        # Hand the rotating angle across so the output voltage doesn't jump.
        if mode == "foc":
            self.theta_e = self.theta_v
        elif mode == "vf":
            self.theta_v = self.theta_e
            self.vf_freq = (self.omega_meas_filt * self.cfg.pole_pairs
                            / TWO_PI)
        self.mode = mode
        self.reset_regulators()

    def set_gain(self, name: str, value: float) -> None:
        if name in GAIN_NAMES:
            self.cfg.gains[name] = float(value)
        elif name == "id_ref":
            self.cfg.id_ref = float(value)
        elif name == "speed_filter_hz":
            self.cfg.speed_filter_hz = float(value)
        else:
            raise KeyError(name)

    def set_pwm_enabled(self, enabled: bool) -> None:
        if enabled:
            self.trip_latched = False
            self.reset_regulators()
        self.pwm_enabled = enabled

    def reset_regulators(self) -> None:
        self.pi_id.reset()
        self.pi_iq.reset()
        self.pi_w.reset()
        self.iq_ref = 0.0

    # -- interrupt body -----------------------------------------------------

    def isr(self, code_a: int, code_b: int, qposcnt: int):
        """One ADC end-of-conversion interrupt; returns the duty triple."""
        self.isr_count += 1
        cfg = self.cfg
        self.i_a = scale_current(code_a, cfg.offset_ia, cfg.gain_i)
        self.i_b = scale_current(code_b, cfg.offset_ib, cfg.gain_i)
        self.last_qpos = qposcnt

        if cfg.literal_dispatch:
            if self.count_current == 0:
                self._current_control()
            elif self.count_current == 1:
                self._speed_control()
            self.count_current += 1
            if self.count_current == cfg.ds_ireg:
                self.count_current = 0
        else:
            self._current_control()
            self.count_current += 1
            if self.count_current >= cfg.ds_ireg:
                self.count_current = 0
                self._speed_control()
        return self.duties

    def _current_control(self):
        self.current_ctrl_count += 1
        cfg = self.cfg
        i_alpha, i_beta = clarke(self.i_a, self.i_b)

        if self.pwm_enabled and math.hypot(i_alpha, i_beta) > cfg.i_max:
            self.trip_count += 1
            self.trip_latched = True
            self.pwm_enabled = False

        if self.mode == "foc":
            self.i_d, self.i_q = park(i_alpha, i_beta, self.theta_e)
        else:
            self.i_d = self.i_q = 0.0

        if not self.pwm_enabled or self.mode == "idle":
            self.duties = (0.5, 0.5, 0.5)
            return

        if self.mode == "vf":
            self.duties = self._vf_control()
            return

        gains = cfg.gains
        v_max = cfg.v_max
        v_d = self.pi_id.step(cfg.id_ref - self.i_d, gains["kp_id"],
                              gains["ki_id"], -v_max, v_max, self.ts)
        v_q = self.pi_iq.step(self.iq_ref - self.i_q, gains["kp_iq"],
                              gains["ki_iq"], -v_max, v_max, self.ts)
        mag = math.hypot(v_d, v_q)
        if mag > v_max:
            scale = v_max / mag
            v_d *= scale
            v_q *= scale
            self.v_clamp_count += 1
        v_alpha, v_beta = inverse_park(v_d, v_q, self.theta_e)
        self.theta_e, self.i_mr = flux_angle_update(
            self.theta_e, self.i_mr, self.i_d, self.i_q,
            self.omega_meas_filt, self.ts, cfg.rotor_time_constant,
            cfg.pole_pairs, cfg.i_mr_floor)
        duties, clamped = duties_from_valphabeta(v_alpha, v_beta, cfg.v_dc)
        if clamped:
            self.duty_clamp_count += 1
        self.duties = duties

    def _vf_control(self):
        cfg = self.cfg
        gains = cfg.gains
        f = self.vf_freq
        v_amp = gains["vf_boost"] + gains["vf_volts_per_hz"] * abs(f)
        if v_amp > cfg.v_max:
            v_amp = cfg.v_max
            self.v_clamp_count += 1
        elif v_amp < 0.0:
            v_amp = 0.0
        self.theta_v = (self.theta_v + TWO_PI * f * self.ts) % TWO_PI
        duties = []
        clamped = False
        for k in range(3):
            v_k = v_amp * math.cos(self.theta_v - TWO_PI * k / 3.0)
            d = 0.5 + v_k / cfg.v_dc
            if d < 0.0:
                d = 0.0
                clamped = True
            elif d > 1.0:
                d = 1.0
                clamped = True
            duties.append(d)
        if clamped:
            self.duty_clamp_count += 1
        return tuple(duties)

    def _speed_control(self):
        self.speed_ctrl_count += 1
        cfg = self.cfg
        ts_speed = self.ts * cfg.ds_ireg
        if self.speed_meas is not None:
            delta, t_unit = self.speed_meas
            self.omega_raw = speed_estimate(delta, t_unit, cfg.counts_per_rev)
        # First-order low pass at the decimated rate; runs in every mode so
        # the measured speed stays live while the outputs are inhibited.
        alpha = 1.0 - math.exp(-TWO_PI * cfg.speed_filter_hz * ts_speed)
        self.omega_meas_filt += alpha * (self.omega_raw - self.omega_meas_filt)

        if not self.pwm_enabled:
            return
        gains = cfg.gains
        if self.mode == "foc":
            self.iq_ref = self.pi_w.step(
                self.omega_ref - self.omega_meas_filt, gains["kp_w"],
                gains["ki_w"], -cfg.iq_max, cfg.iq_max, ts_speed)
        elif self.mode == "vf":
            f_target = self.omega_ref * cfg.pole_pairs / TWO_PI
            max_df = cfg.vf_slew_hz_per_s * ts_speed
            df = f_target - self.vf_freq
            if df > max_df:
                df = max_df
            elif df < -max_df:
                df = -max_df
            self.vf_freq += df

    # -- monitor output ------------------------------------------------------

    def dac_code(self) -> int:
        """Selected firmware variable scaled to the 12-bit DAC range."""
        src = self.cfg.dac_source
        if src == "omega_filt":
            value = 2048 + self.omega_meas_filt * (2047.0 / 400.0)
        elif src == "iq":
            value = 2048 + self.i_q * (2047.0 / 20.0)
        elif src == "id":
            value = 2048 + self.i_d * (2047.0 / 20.0)
        elif src == "theta_e":
            value = self.theta_e / TWO_PI * 4095.0
        else:
            raise ValueError(f"unknown dac source {src!r}")
        return min(max(int(value + 0.5), 0), 4095)
