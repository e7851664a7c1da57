"""Deterministic simulation engine: clock, event loop, command application.

The engine owns an integer tick clock and advances the coupled system event
by event.  Candidate events are the next PWM output edge or shadow load, the
next start-of-conversion, a pending end-of-conversion (which runs the
control interrupt), the next encoder unit-timer expiry, and the plant
integration boundary (the plant never integrates further than the substep
cap in one piece, so encoder edges are interpolated inside short steps and
every switching edge splits the integration exactly).

Simultaneous events at one tick are processed in a fixed order: PWM edges,
then SOC, then eQEP, then the firmware ISR.  Timeline and live commands are
applied at the first interrupt boundary at or after their timestamp, never
later than one control period after it.  Everything is plain integer and
float arithmetic in one thread, so identical inputs give bit-identical
frame streams.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

from .firmware import Controller
from .periph import AdcUnit, DacUnit, PwmChannel, QepState
from .plant import (SQRT3, DivergenceError, EncoderModel, MotorState,
                    electromagnetic_torque, line_to_neutral, rk4_step)
from .scenario import Command, Scenario
from .telemetry import TelemetryFrame

_NEVER = 1 << 62


class SimClock:
    """Monotonic integer tick counter at ``f_sys``; seconds are derived."""

    __slots__ = ("ticks", "f_sys")

    def __init__(self, f_sys: float = 200e6):
        self.ticks = 0
        self.f_sys = f_sys

    @property
    def seconds(self) -> float:
        return self.ticks / self.f_sys


@dataclass
class StepMetrics:
    """Settling figures for one speed-reference step."""

    t_command: float          # when the reference changed [s]
    target: float             # commanded speed [rad/s]
    previous: float           # reference before the step [rad/s]
    settle_time: float | None  # s until staying within 2% of target
    overshoot_pct: float       # peak beyond target, % of step size
    ss_error_pct: float | None  # mean error over the segment tail, % of target
    mean_iq_accel: float       # mean torque current while accelerating [A]

    def to_dict(self):
        return {
            "t_command": self.t_command, "target": self.target,
            "previous": self.previous, "settle_time": self.settle_time,
            "overshoot_pct": self.overshoot_pct,
            "ss_error_pct": self.ss_error_pct,
            "mean_iq_accel": self.mean_iq_accel,
        }


@dataclass
class RunReport:
    duration: float
    total_ticks: int
    isr_count: int
    soc_count: int
    speed_ctrl_count: int
    current_ctrl_count: int
    frame_count: int
    final_state: MotorState
    final_torque: float
    max_abs_phase_current: float
    steps: list[StepMetrics] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    applied_commands: list = field(default_factory=list)

    def to_dict(self):
        return {
            "duration": self.duration,
            "total_ticks": self.total_ticks,
            "isr_count": self.isr_count,
            "soc_count": self.soc_count,
            "speed_ctrl_count": self.speed_ctrl_count,
            "current_ctrl_count": self.current_ctrl_count,
            "frame_count": self.frame_count,
            "final_state": vars(self.final_state),
            "final_torque": self.final_torque,
            "max_abs_phase_current": self.max_abs_phase_current,
            "steps": [s.to_dict() for s in self.steps],
            "counters": self.counters,
            "applied_commands": self.applied_commands,
        }

    def summary(self) -> str:
        lines = [
            f"simulated {self.duration} s in {self.total_ticks} ticks",
            f"isr={self.isr_count} soc={self.soc_count} "
            f"speed_ctrl={self.speed_ctrl_count} frames={self.frame_count}",
            f"final speed {self.final_state.omega_m:+.3f} rad/s, "
            f"max |i_phase| {self.max_abs_phase_current:.3f} A",
        ]
        for s in self.steps:
            settle = "never" if s.settle_time is None else f"{s.settle_time:.3f} s"
            lines.append(
                f"step to {s.target:+.1f} rad/s at t={s.t_command:.3f}: "
                f"settle {settle}, overshoot {s.overshoot_pct:.1f}%, "
                f"mean iq {s.mean_iq_accel:+.2f} A")
        return "\n".join(lines)


class Engine:
    """Advances peripherals, plant and firmware over one scenario."""

    def __init__(self, scenario: Scenario, sinks=(), probe=None,
                 collect_events: bool = False):
        self.scenario = scenario
        self.sinks = list(sinks)
        self.probe = probe
        self.collect_events = collect_events
        self.event_log: list[tuple[int, str]] = []

        self.clock = SimClock(scenario.f_sys)
        self.end_tick = int(round(scenario.duration * scenario.f_sys))
        self._tick_seconds = 1.0 / scenario.f_sys

        db = scenario.deadband_ticks
        edge_events = scenario.coupling == "switched"
        self.channels = [
            PwmChannel(tbprd=scenario.tbprd, db_red=db, db_fed=db, duty=0.5,
                       soc_on_period=(k == 0), edge_events=edge_events)
            for k in range(3)
        ]
        for ch in self.channels:
            ch.force_low_a = True
            ch.force_low_b = True
            ch.start(0)
        self._forced = True

        self.adc_a = AdcUnit(v_ref=scenario.adc_v_ref)
        self.adc_b = AdcUnit(v_ref=scenario.adc_v_ref)
        self.qep = QepState()
        self.dac = DacUnit()
        self.encoder = EncoderModel()
        self.sense = scenario.sense
        self.params = scenario.motor
        self._v_dc = scenario.inverter.v_dc
        self._averaged = scenario.coupling == "averaged"

        isr_period = 2 * scenario.tbprd / scenario.f_sys
        self.ctrl = Controller(scenario.control, isr_period)

        self.motor = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        self._plant_tick = 0
        self._substep_ticks = max(1, int(round(
            scenario.substep_us * 1e-6 * scenario.f_sys)))
        self.t_load = 0.0

        self._next_soc = self.channels[0].next_soc_after(-1)
        self._pending_eoc = _NEVER
        self._next_utimer = self.qep.quprd
        self._quprd_seconds = self.qep.quprd / scenario.f_sys
        self._isr_budget_ticks = int(round(
            scenario.isr_budget_us * 1e-6 * scenario.f_sys))
        self.isr_busy_ticks = 0

        self._timeline = list(scenario.timeline)
        self._timeline_ticks = [int(round(c.t * scenario.f_sys))
                                for c in self._timeline]
        self._timeline_idx = 0
        self._live_inbox: deque[Command] = deque()

        self._frame_per_isr = scenario.frame_rate == "isr"
        self.frame_count = 0
        self.soc_count = 0
        self.max_abs_phase_current = 0.0
        self._last_speed_count = 0
        self._last_sat_total = 0
        self._trace: list[tuple[float, float, float, float]] = []
        self._speed_steps: list[tuple[float, float, float]] = []
        self.applied_commands: list[tuple[float, str]] = []
        self._finished = False
        self._stop_requested = False

    # -- public control -------------------------------------------------------

    def post_command(self, cmd: Command) -> None:
        """Queue a live command; it takes effect at the next ISR boundary."""
        self._live_inbox.append(cmd)

    def request_stop(self) -> None:
        self._stop_requested = True

    @property
    def motor_state(self) -> MotorState:
        return MotorState.from_tuple(self.motor)

    @property
    def torque(self) -> float:
        return electromagnetic_torque(self.motor, self.params)

    # -- event loop ------------------------------------------------------------

    def step(self):
        """Advance to the next event batch; returns ``(tick, kinds)`` or None.

        The returned kinds name what was processed at that tick, in the
        fixed simultaneous-event order: pwm, soc, qep, isr (plus plant for
        integration boundaries and end at the final tick).
        """
        if self._finished:
            return None
        ch0, ch1, ch2 = self.channels
        plant_bound = self._plant_tick + self._substep_ticks
        t = min(ch0.next_event_tick(), ch1.next_event_tick(),
                ch2.next_event_tick(), self._next_soc, self._pending_eoc,
                self._next_utimer, plant_bound)
        if t > self.end_tick:
            self._advance_plant_to(self.end_tick)
            self.clock.ticks = self.end_tick
            self._finished = True
            if self.collect_events:
                self.event_log.append((self.end_tick, "end"))
            return self.end_tick, ("end",)

        kinds = []
        self._advance_plant_to(t)
        self.clock.ticks = t

        pwm_edges = []
        for ch in self.channels:
            if ch.next_event_tick() <= t:
                pwm_edges.extend(ch.advance(t))
        if pwm_edges:
            kinds.append("pwm")

        if t == self._next_soc:
            self._process_soc(t)
            kinds.append("soc")

        if t == self._next_utimer:
            lat, delta = self.qep.unit_timeout(t)
            self.ctrl.speed_meas = (delta, self._quprd_seconds)
            self._next_utimer += self.qep.quprd
            kinds.append("qep")

        if t == self._pending_eoc:
            self._process_isr(t)
            kinds.append("isr")

        if t == plant_bound and not kinds:
            kinds.append("plant")

        if self.collect_events and kinds:
            for k in kinds:
                self.event_log.append((t, k))
        return t, tuple(kinds)

    def run(self, pace: float = 0.0) -> RunReport:
        """Run to the scenario end (or a requested stop); returns the report.

        ``pace`` is a realtime factor: 0 runs as fast as possible, 1.0
        paces the frame stream at simulated time (best effort).
        """
        wall0 = time.perf_counter()
        paced_frames = 0
        while True:
            if self._stop_requested:
                break
            out = self.step()
            if out is None:
                break
            if pace > 0 and self.frame_count != paced_frames:
                paced_frames = self.frame_count
                target = wall0 + self.clock.seconds / pace
                delay = target - time.perf_counter()
                if delay > 0.0005:
                    time.sleep(delay)
        return self.build_report()

    # -- internals ---------------------------------------------------------------

    def _phase_voltages(self, state):
        v_dc = self._v_dc
        if self._averaged:
            ch0, ch1, ch2 = self.channels
            return line_to_neutral((ch0.duty_active * v_dc,
                                    ch1.duty_active * v_dc,
                                    ch2.duty_active * v_dc))
        i_a = state[0]
        i_b = 0.5 * (-state[0] + SQRT3 * state[1])
        currents = (i_a, i_b, -i_a - i_b)
        poles = []
        for ch, i in zip(self.channels, currents):
            if ch.out_a:
                poles.append(v_dc)
            elif ch.out_b:
                poles.append(0.0)
            else:
                # Dead band: the freewheeling diode follows the current sign.
                poles.append(0.0 if i >= 0.0 else v_dc)
        return line_to_neutral(poles)

    def _advance_plant_to(self, T: int) -> None:
        pt = self._plant_tick
        if T <= pt:
            return
        sub = self._substep_ticks
        state = self.motor
        params = self.params
        tick_s = self._tick_seconds
        encoder = self.encoder
        qep = self.qep
        while pt < T:
            nt = pt + sub
            if nt > T:
                nt = T
            v_a, v_b, v_c = self._phase_voltages(state)
            v_sb = (v_b - v_c) / SQRT3
            new_state, d_theta = rk4_step(state, v_a, v_sb, self.t_load,
                                          params, (nt - pt) * tick_s)
            if not math.isfinite(sum(new_state)):
                self.motor = state
                raise DivergenceError(nt, MotorState.from_tuple(state))
            if d_theta != 0.0:
                for _, name in encoder.advance(d_theta, pt, nt):
                    qep.apply_edge(name)
            state = new_state
            pt = nt
        self.motor = state
        self._plant_tick = T

    def _process_soc(self, t: int) -> None:
        state = self.motor
        i_a = state[0]
        i_b = 0.5 * (-state[0] + SQRT3 * state[1])
        i_c = -i_a - i_b
        peak = max(abs(i_a), abs(i_b), abs(i_c))
        if peak > self.max_abs_phase_current:
            self.max_abs_phase_current = peak
        v_a, v_b = self.sense.sense_voltages(i_a, i_b)
        _, eoc = self.adc_a.convert(v_a, t)
        self.adc_b.convert(v_b, t)
        self._pending_eoc = eoc
        self.soc_count += 1
        self._next_soc = self.channels[0].next_soc_after(t)

    def _process_isr(self, t: int) -> None:
        code_a = self.adc_a.complete(t)
        code_b = self.adc_b.complete(t)
        self.adc_a.clear_interrupt()
        self.adc_b.clear_interrupt()
        self._pending_eoc = _NEVER

        self._apply_due_commands(t)

        ctrl = self.ctrl
        duties = ctrl.isr(code_a, code_b, self.qep.qposcnt)
        for ch, d in zip(self.channels, duties):
            ch.set_compare(d)
        if not ctrl.pwm_enabled and not self._forced:
            # Software trip inside the ISR: inhibit the outputs now.
            for ch in self.channels:
                ch.set_force_low(t)
            self._forced = True
        self.dac.write(ctrl.dac_code())
        self.isr_busy_ticks += self._isr_budget_ticks

        speed_ran = ctrl.speed_ctrl_count != self._last_speed_count
        self._last_speed_count = ctrl.speed_ctrl_count
        if self._frame_per_isr or speed_ran:
            self._emit_frame(t)

    def _apply_due_commands(self, t: int) -> None:
        while (self._timeline_idx < len(self._timeline)
               and self._timeline_ticks[self._timeline_idx] <= t):
            self._apply_command(self._timeline[self._timeline_idx], t)
            self._timeline_idx += 1
        while self._live_inbox:
            self._apply_command(self._live_inbox.popleft(), t)

    def _apply_command(self, cmd: Command, t: int) -> None:
        ctrl = self.ctrl
        now = t * self._tick_seconds
        if cmd.kind == "set_speed_ref":
            self._speed_steps.append((now, float(cmd.value), ctrl.omega_ref))
            ctrl.omega_ref = float(cmd.value)
        elif cmd.kind == "set_mode":
            ctrl.set_mode(cmd.value)
        elif cmd.kind == "set_load_torque":
            self.t_load = float(cmd.value)
        elif cmd.kind == "set_gain":
            ctrl.set_gain(cmd.name, cmd.value)
        elif cmd.kind == "pwm_enable":
            ctrl.set_pwm_enabled(bool(cmd.value))
            if cmd.value:
                for ch in self.channels:
                    ch.release_force()
                self._forced = False
            else:
                for ch in self.channels:
                    ch.set_force_low(t)
                self._forced = True
        elif cmd.kind == "set_id_ref":
            ctrl.cfg.id_ref = float(cmd.value)
        else:
            raise ValueError(f"unknown command kind {cmd.kind!r}")
        self.applied_commands.append((now, cmd.describe()))

    def _saturation_total(self) -> int:
        return (self.sense.clip_count + self.adc_a.saturation_count
                + self.adc_b.saturation_count + self.ctrl.duty_clamp_count
                + self.ctrl.v_clamp_count + self.dac.mask_count
                + sum(ch.clamp_count for ch in self.channels))

    def _emit_frame(self, t: int) -> None:
        ctrl = self.ctrl
        i_a = ctrl.i_a
        i_b = ctrl.i_b
        sat_total = self._saturation_total()
        frame = TelemetryFrame(
            t=t * self._tick_seconds,
            w_ref=ctrl.omega_ref,
            w_meas=ctrl.omega_meas_filt,
            ia=i_a, ib=i_b, ic=-i_a - i_b,
            id=ctrl.i_d, iq=ctrl.i_q,
            theta_e=ctrl.theta_e,
            da=ctrl.duties[0], db=ctrl.duties[1], dc=ctrl.duties[2],
            mode=ctrl.mode,
            pwm=ctrl.pwm_enabled,
            sat=sat_total != self._last_sat_total,
            trip=ctrl.trip_latched,
        )
        self._last_sat_total = sat_total
        self.frame_count += 1
        for sink in self.sinks:
            sink(frame)
        self._trace.append((frame.t, self.motor[4], ctrl.i_q, ctrl.omega_ref))
        if self.probe is not None:
            self.probe(self, frame)

    # -- report -------------------------------------------------------------------

    def build_report(self) -> RunReport:
        ctrl = self.ctrl
        counters = {
            "duty_clamp": ctrl.duty_clamp_count
            + sum(ch.clamp_count for ch in self.channels),
            "voltage_clamp": ctrl.v_clamp_count,
            "sense_clip": self.sense.clip_count,
            "adc_saturation": self.adc_a.saturation_count
            + self.adc_b.saturation_count,
            "dac_mask": self.dac.mask_count,
            "trip_count": ctrl.trip_count,
            "qep_glitches": self.qep.glitch_count,
            "qep_index_pulses": self.qep.index_count,
            "isr_busy_ticks": self.isr_busy_ticks,
        }
        return RunReport(
            duration=self.scenario.duration,
            total_ticks=self.clock.ticks,
            isr_count=ctrl.isr_count,
            soc_count=self.soc_count,
            speed_ctrl_count=ctrl.speed_ctrl_count,
            current_ctrl_count=ctrl.current_ctrl_count,
            frame_count=self.frame_count,
            final_state=self.motor_state,
            final_torque=self.torque,
            max_abs_phase_current=self.max_abs_phase_current,
            steps=self._step_metrics(),
            counters=counters,
            applied_commands=[(t, d) for t, d in self.applied_commands],
        )

    def _step_metrics(self) -> list[StepMetrics]:
        out = []
        trace = self._trace
        steps = self._speed_steps
        for k, (t0, target, prev) in enumerate(steps):
            t_end = steps[k + 1][0] if k + 1 < len(steps) \
                else self.clock.seconds
            seg = [s for s in trace if t0 <= s[0] < t_end]
            if not seg:
                continue
            delta = target - prev
            band = 0.02 * (abs(target) if target != 0.0 else abs(delta))
            last_outside = None
            for s in seg:
                if abs(s[1] - target) > band:
                    last_outside = s[0]
            if last_outside is None:
                settle = 0.0
            else:
                after = [s[0] for s in seg if s[0] > last_outside]
                settle = (after[0] - t0) if after else None
            overshoot = 0.0
            if delta:
                sdir = 1.0 if delta > 0 else -1.0
                overshoot = max(0.0, max((s[1] - target) * sdir
                                         for s in seg)) / abs(delta) * 100.0
            tail_start = t_end - 0.2 * (t_end - t0)
            tail = [s[1] for s in seg if s[0] >= tail_start]
            ss = None
            if tail and target != 0.0:
                ss = abs(sum(tail) / len(tail) - target) / abs(target) * 100.0
            accel_end = t0 + settle if settle is not None else t_end
            accel = [s[2] for s in seg if s[0] <= accel_end] or \
                [s[2] for s in seg]
            mean_iq = sum(accel) / len(accel)
            out.append(StepMetrics(t0, target, prev, settle, overshoot,
                                   ss, mean_iq))
        return out


def run_scenario(scenario: Scenario, sinks=(), pace: float = 0.0,
                 probe=None) -> RunReport:
    """Build an engine for the scenario and run it to completion."""
    return Engine(scenario, sinks=sinks, probe=probe).run(pace=pace)
