"""Continuous-time plant: inverter, induction machine, encoder, sense chain.

The machine is a squirrel-cage induction motor in the stationary two-axis
(alpha/beta) frame with stator currents and rotor flux linkages as electrical
states, plus mechanical speed and angle:

    state = (i_sa, i_sb, psi_ra, psi_rb, omega_m, theta_m)

All transforms are amplitude invariant, so alpha/beta currents read directly
in phase amperes.  Integration is a classical fixed-step RK4; the engine
splits steps at every inverter switching edge so the inputs are constant over
each step, and caps the step length so encoder edges can be interpolated
accurately inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi
SQRT3 = math.sqrt(3.0)


@dataclass
class MotorParams:
    """Machine constants; defaults describe a generic ~1.5 kW machine."""

    Rs: float = 2.3          # stator resistance [ohm]
    Rr: float = 1.8          # rotor resistance [ohm]
    Ls: float = 0.26         # stator inductance [H]
    Lr: float = 0.26         # rotor inductance [H]
    Lm: float = 0.245        # magnetizing inductance [H]
    pole_pairs: int = 2
    J: float = 0.01          # rotor inertia [kg m^2]
    B: float = 0.001         # viscous friction [N m s/rad]

    def __post_init__(self):
        for name in ("Rs", "Rr", "Ls", "Lr", "Lm", "pole_pairs", "J", "B"):
            if getattr(self, name) <= 0:
                raise ValueError(f"motor parameter {name} must be positive")
        if self.Lm > min(self.Ls, self.Lr):
            raise ValueError("Lm must not exceed Ls or Lr")
        self.sigma = 1.0 - self.Lm ** 2 / (self.Ls * self.Lr)
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("leakage factor out of range")
        self.Tr = self.Lr / self.Rr
        self.Rsigma = self.Rs + self.Rr * (self.Lm / self.Lr) ** 2
        # Pre-multiplied coefficients for the derivative hot path.
        self._k_i = 1.0 / (self.sigma * self.Ls)
        self._k_psi = self.Lm / (self.Lr * self.Tr)
        self._k_emf = self.Lm / self.Lr
        self._k_build = self.Lm / self.Tr
        self._k_decay = 1.0 / self.Tr
        self._k_torque = 1.5 * self.pole_pairs * self.Lm / self.Lr
        self._inv_J = 1.0 / self.J


@dataclass
class MotorState:
    i_sa: float = 0.0        # stator current, alpha axis [A]
    i_sb: float = 0.0        # stator current, beta axis [A]
    psi_ra: float = 0.0      # rotor flux linkage, alpha axis [Wb]
    psi_rb: float = 0.0      # rotor flux linkage, beta axis [Wb]
    omega_m: float = 0.0     # mechanical speed [rad/s]
    theta_m: float = 0.0     # mechanical angle [rad], wrapped to [0, 2pi)

    def as_tuple(self):
        return (self.i_sa, self.i_sb, self.psi_ra, self.psi_rb,
                self.omega_m, self.theta_m)

    @classmethod
    def from_tuple(cls, t):
        return cls(*t)


class DivergenceError(RuntimeError):
    """A plant state went non-finite; carries the tick and last good state."""

    def __init__(self, tick: int, last_state):
        super().__init__(f"plant state non-finite at tick {tick}")
        self.tick = tick
        self.last_state = last_state


def motor_derivatives(state, v_sa, v_sb, t_load, p: MotorParams):
    """Time derivatives of the six machine states.

    Electrical speed is ``pole_pairs * omega_m``; torque is the cross
    product of rotor flux and stator current scaled for amplitude-invariant
    quantities.
    """
    i_sa, i_sb, psi_ra, psi_rb, omega_m, _ = state
    omega_e = p.pole_pairs * omega_m
    di_sa = (v_sa - p.Rsigma * i_sa + p._k_psi * psi_ra
             + p._k_emf * omega_e * psi_rb) * p._k_i
    di_sb = (v_sb - p.Rsigma * i_sb + p._k_psi * psi_rb
             - p._k_emf * omega_e * psi_ra) * p._k_i
    dpsi_ra = p._k_build * i_sa - p._k_decay * psi_ra - omega_e * psi_rb
    dpsi_rb = p._k_build * i_sb - p._k_decay * psi_rb + omega_e * psi_ra
    t_e = p._k_torque * (psi_ra * i_sb - psi_rb * i_sa)
    domega = (t_e - t_load - p.B * omega_m) * p._inv_J
    return di_sa, di_sb, dpsi_ra, dpsi_rb, domega, omega_m


def electromagnetic_torque(state, p: MotorParams) -> float:
    return p._k_torque * (state[2] * state[1] - state[3] * state[0])


def rk4_step(state, v_sa, v_sb, t_load, p: MotorParams, h: float):
    """One classical RK4 step with inputs held constant over ``h`` seconds.

    Returns ``(new_state, d_theta)`` where ``d_theta`` is the un-wrapped
    angle increment (the encoder needs it before wrapping) and the returned
    state has ``theta_m`` wrapped to [0, 2pi).
    """
    if h == 0.0:
        return state, 0.0
    k1 = motor_derivatives(state, v_sa, v_sb, t_load, p)
    h2 = 0.5 * h
    s2 = tuple(s + h2 * k for s, k in zip(state, k1))
    k2 = motor_derivatives(s2, v_sa, v_sb, t_load, p)
    s3 = tuple(s + h2 * k for s, k in zip(state, k2))
    k3 = motor_derivatives(s3, v_sa, v_sb, t_load, p)
    s4 = tuple(s + h * k for s, k in zip(state, k3))
    k4 = motor_derivatives(s4, v_sa, v_sb, t_load, p)
    h6 = h / 6.0
    new = [s + h6 * (a + 2.0 * b + 2.0 * c + d)
           for s, a, b, c, d in zip(state, k1, k2, k3, k4)]
    d_theta = new[5] - state[5]
    new[5] = new[5] % TWO_PI
    return tuple(new), d_theta


# -- inverter ----------------------------------------------------------------


@dataclass
class InverterConfig:
    v_dc: float = 300.0
    coupling: str = "switched"  # "switched" | "averaged"

    def __post_init__(self):
        if self.v_dc <= 0:
            raise ValueError("v_dc must be positive")
        if self.coupling not in ("switched", "averaged"):
            raise ValueError(f"unknown coupling {self.coupling!r}")


def line_to_neutral(poles):
    """Remove the common mode of three pole voltages (isolated star load)."""
    cm = (poles[0] + poles[1] + poles[2]) / 3.0
    return poles[0] - cm, poles[1] - cm, poles[2] - cm


def inverter_voltages(duties, v_dc):
    """Averaged coupling: pole voltage is duty * v_dc per phase."""
    return line_to_neutral((duties[0] * v_dc, duties[1] * v_dc,
                            duties[2] * v_dc))


def inverter_voltages_switched(legs, phase_currents, v_dc):
    """Switched coupling from per-leg gate states.

    ``legs`` holds one of ``1`` (high side on), ``0`` (low side on) or
    ``None`` (dead-band interval, both off) per phase.  During a dead band
    the freewheeling diode picked by the phase-current sign conducts:
    current out of the phase (> 0) pulls the pole to 0, current into the
    phase pulls it to ``v_dc``.  A phase with exactly zero current does not
    conduct; its pole is taken at 0.
    """
    poles = []
    for leg, i in zip(legs, phase_currents):
        if leg == 1:
            poles.append(v_dc)
        elif leg == 0:
            poles.append(0.0)
        else:
            poles.append(0.0 if i >= 0.0 else v_dc)
    return line_to_neutral(poles)


def phase_currents(i_sa, i_sb):
    """Amplitude-invariant inverse Clarke for a three-wire load."""
    i_a = i_sa
    i_b = 0.5 * (-i_sa + SQRT3 * i_sb)
    return i_a, i_b, -i_a - i_b


# -- current sense chain ------------------------------------------------------


@dataclass
class SenseChain:
    """Shunt plus isolation amplifier feeding the ADC.

    The shunt voltage is clipped at the amplifier's differential input range
    before the gain, so large currents saturate the output rather than
    tracking linearly.
    """

    r_shunt: float = 0.01    # [ohm]
    amp_gain: float = 8.2    # [V/V]
    v_cm: float = 1.25       # output common mode [V]
    clip: float = 0.25       # differential input limit [V]
    clip_count: int = field(default=0, compare=False)

    def output_voltage(self, i: float) -> float:
        v_diff = i * self.r_shunt
        if v_diff > self.clip:
            v_diff = self.clip
            self.clip_count += 1
        elif v_diff < -self.clip:
            v_diff = -self.clip
            self.clip_count += 1
        return self.v_cm + self.amp_gain * v_diff

    def sense_voltages(self, i_a: float, i_b: float):
        return self.output_voltage(i_a), self.output_voltage(i_b)


# -- incremental encoder -------------------------------------------------------

_QUAD_STATES = ((0, 0), (1, 0), (1, 1), (0, 1))  # forward order, (A, B)


class EncoderModel:
    """Quadrature + index edge generation from the mechanical angle.

    Tracks the cumulative (unwrapped) angle and emits one edge per crossing
    of a 1/4096-revolution boundary, with the channel phasing set by the
    rotation direction; an index pulse rises at every whole-revolution
    boundary.  Edge times are linearly interpolated inside the integration
    step that produced the angle increment.
    """

    def __init__(self, counts_per_rev: int = 4096):
        self.counts_per_rev = counts_per_rev
        self.step = TWO_PI / counts_per_rev
        self.cum_angle = 0.0
        self.sector = 0  # unbounded cumulative sector index

    def advance(self, d_theta: float, t0: int, t1: int):
        """Edges for an angle increment over ticks [t0, t1]; ordered in time."""
        if d_theta == 0.0:
            return []
        old_angle = self.cum_angle
        new_angle = old_angle + d_theta
        target = math.floor(new_angle / self.step)
        edges = []
        if target == self.sector:
            self.cum_angle = new_angle
            return edges
        span = new_angle - old_angle
        ticks = t1 - t0
        last_tick = t0
        while self.sector < target:
            boundary = (self.sector + 1) * self.step
            tick = t0 + int((boundary - old_angle) / span * ticks + 0.5)
            tick = min(max(tick, last_tick), t1)
            last_tick = tick
            new_sector = self.sector + 1
            edges.append((tick, self._edge_name(self.sector, new_sector)))
            if new_sector % self.counts_per_rev == 0:
                edges.append((tick, "index_rise"))
            self.sector = new_sector
        while self.sector > target:
            boundary = self.sector * self.step
            tick = t0 + int((boundary - old_angle) / span * ticks + 0.5)
            tick = min(max(tick, last_tick), t1)
            last_tick = tick
            new_sector = self.sector - 1
            edges.append((tick, self._edge_name(self.sector, new_sector)))
            if self.sector % self.counts_per_rev == 0:
                edges.append((tick, "index_rise"))
            self.sector = new_sector
        self.cum_angle = new_angle
        return edges

    def _edge_name(self, old_sector, new_sector):
        a0, b0 = _QUAD_STATES[old_sector % 4]
        a1, b1 = _QUAD_STATES[new_sector % 4]
        if a0 != a1:
            return "a_rise" if a1 else "a_fall"
        return "b_rise" if b1 else "b_fall"
