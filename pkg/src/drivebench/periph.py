"""Behavioral models of the motor-control peripherals of a 200 MHz DSC.

Four blocks are modeled at register level, each as a plain state machine
advanced by the simulation engine:

* ``PwmChannel`` -- one ePWM unit in up-down count mode: shadowed compare
  registers loaded at counter zero, set-on-up-compare / clear-on-down-compare
  action qualifier, a full-enable active-high-complementary dead-band stage,
  software force-low, and start-of-conversion generation at the counter peak.
* ``AdcUnit`` -- a 12-bit converter with a PWM-triggered start of conversion,
  an acquisition window of ``acqps + 1`` system clocks, a fixed conversion
  latency, and an end-of-conversion interrupt flag.
* ``QepState`` -- quadrature decoder with 4x count resolution, wrap at
  ``qposmax``, index reset, and position latch on unit-timer expiry.
* ``DacUnit`` -- a buffered 12-bit DAC loading on the system clock.

All times are integer system-clock ticks; one PWM carrier period is
``2 * tbprd`` ticks.  The PWM model is event driven -- it produces exact edge
ticks without stepping the counter -- and is checked edge-for-edge against the
brute-force per-tick simulation in :mod:`drivebench.conformance`.

Output timing conventions (shared with the per-tick oracle):

* The raw channel-A waveform is high on ``[zero + c, zero + 2*tbprd - c)``
  for an active compare ``c`` with ``1 <= c <= tbprd - 1``; compare values of
  0 or ``tbprd`` produce no pulse (the up-count match never sets at zero, and
  a match at the peak sets and clears in the same instant).
* ``out_a`` is the raw waveform with rising edges delayed ``db_red`` ticks;
  pulses shorter than the delay are swallowed.
* ``out_b`` is the inverted raw waveform with rising edges delayed
  ``db_fed`` ticks.  At reset the raw signal counts as low from tick 0, so
  the first ``out_b`` rise lands ``db_fed`` ticks after the clocks start.
"""

from __future__ import annotations

import heapq
import math

_NEVER = 1 << 62

# Agenda item kinds; the numeric order is the processing order at equal ticks.
_EV_ZERO = 0
_EV_RAW_FALL = 1
_EV_RAW_RISE = 2
_EV_A_RISE = 3
_EV_B_RISE = 4


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero (hardware style)."""
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


class PeripheralError(RuntimeError):
    """Illegal peripheral use (e.g. retriggering a busy converter)."""


class PwmChannel:
    """One ePWM unit: up-down time base, shadowed compares, dead band.

    ``tbprd`` is the period register; the counter runs 0 -> tbprd -> 0, so a
    full carrier period is ``2 * tbprd`` ticks.  Compare writes land in the
    shadow registers and transfer to the active registers each time the
    counter reaches zero.  Both outputs are forced low while the force flags
    are set (the power-up state); releasing the force lets the outputs
    resume at their next scheduled rising edge.
    """

    def __init__(self, tbprd: int = 10000, db_red: int = 0, db_fed: int = 0,
                 duty: float = 0.5, soc_on_period: bool = False,
                 edge_events: bool = True):
        if tbprd < 1:
            raise ValueError("tbprd must be >= 1")
        self.tbprd = tbprd
        self.db_red = db_red
        self.db_fed = db_fed
        self.soc_on_period = soc_on_period
        self.edge_events = edge_events

        c = round_half_up(min(max(duty, 0.0), 1.0) * tbprd)
        self.cmpa_shadow = c
        self.cmpb_shadow = c
        self.cmpa_active = c
        self.cmpb_active = c

        self.force_low_a = False
        self.force_low_b = False
        self.raw = False
        self.out_a = False
        self.out_b = False

        self.running = False
        self.start_tick = 0
        self.period_start = 0
        self.clamp_count = 0

        self._agenda: list[tuple[int, int]] = []
        self._a_rise_due: int | None = None
        self._b_rise_due: int | None = None

    # -- configuration -----------------------------------------------------

    def start(self, tick: int = 0) -> None:
        """Enable the time-base clock; the counter starts at zero."""
        self.running = True
        self.start_tick = tick
        self.period_start = tick
        heapq.heappush(self._agenda, (tick, _EV_ZERO))
        if self.edge_events:
            # Raw output counts as low from the start tick on.
            self._b_rise_due = tick + self.db_fed
            heapq.heappush(self._agenda, (tick + self.db_fed, _EV_B_RISE))

    def set_compare(self, duty: float) -> None:
        """Write both compare shadows as ``round(duty * tbprd)``.

        Out-of-range duties are clamped and counted, never raised: the write
        mirrors a saturating register update from the control loop.  The
        active registers are untouched until the counter next reaches zero.
        """
        if duty < 0.0 or duty > 1.0:
            self.clamp_count += 1
            duty = min(max(duty, 0.0), 1.0)
        c = round_half_up(duty * self.tbprd)
        self.cmpa_shadow = c
        self.cmpb_shadow = c

    def set_force_low(self, tick: int) -> list[tuple[int, str, int]]:
        """Force both outputs low immediately; returns the emitted edges."""
        self.force_low_a = True
        self.force_low_b = True
        edges = []
        if self.out_a:
            self.out_a = False
            edges.append((tick, "A", 0))
        if self.out_b:
            self.out_b = False
            edges.append((tick, "B", 0))
        return edges

    def release_force(self) -> None:
        """Clear the force flags; outputs resume at their next rising edge."""
        self.force_low_a = False
        self.force_low_b = False

    @property
    def duty_active(self) -> float:
        """High-time command implied by the active compare register."""
        return self.cmpa_active / self.tbprd

    def counter_at(self, tick: int) -> tuple[int, str]:
        """Time-base counter value and direction at a tick: (tbctr, "up"/"down").

        The counter holds at zero until the clock starts.  The zero and peak
        instants report "up" and "down" respectively (the direction the
        counter is about to move).
        """
        if not self.running or tick < self.start_tick:
            return 0, "up"
        pos = (tick - self.start_tick) % (2 * self.tbprd)
        if pos < self.tbprd:
            return pos, "up"
        return 2 * self.tbprd - pos, "down"

    # -- event-driven advance ----------------------------------------------

    def next_event_tick(self) -> int:
        if not self.running or not self._agenda:
            return _NEVER
        return self._agenda[0][0]

    def advance(self, to_tick: int) -> list[tuple[int, str, int]]:
        """Process all scheduled events up to and including ``to_tick``.

        Returns the dead-band output edges as ``(tick, "A"|"B", level)``
        tuples in emission order.
        """
        edges: list[tuple[int, str, int]] = []
        if not self.running:
            return edges
        agenda = self._agenda
        P = self.tbprd
        while agenda and agenda[0][0] <= to_tick:
            tick, kind = heapq.heappop(agenda)
            if kind == _EV_ZERO:
                self.cmpa_active = self.cmpa_shadow
                self.cmpb_active = self.cmpb_shadow
                self.period_start = tick
                c = self.cmpa_active
                if self.edge_events and 1 <= c <= P - 1:
                    heapq.heappush(agenda, (tick + c, _EV_RAW_RISE))
                    heapq.heappush(agenda, (tick + 2 * P - c, _EV_RAW_FALL))
                heapq.heappush(agenda, (tick + 2 * P, _EV_ZERO))
            elif kind == _EV_RAW_RISE:
                self.raw = True
                self._b_rise_due = None
                if self.out_b:
                    self.out_b = False
                    edges.append((tick, "B", 0))
                if self.db_red == 0:
                    self._fire_a_rise(tick, edges)
                else:
                    self._a_rise_due = tick + self.db_red
                    heapq.heappush(agenda, (tick + self.db_red, _EV_A_RISE))
            elif kind == _EV_RAW_FALL:
                self.raw = False
                self._a_rise_due = None
                if self.out_a:
                    self.out_a = False
                    edges.append((tick, "A", 0))
                if self.db_fed == 0:
                    self._fire_b_rise(tick, edges)
                else:
                    self._b_rise_due = tick + self.db_fed
                    heapq.heappush(agenda, (tick + self.db_fed, _EV_B_RISE))
            elif kind == _EV_A_RISE:
                if self._a_rise_due == tick:
                    self._a_rise_due = None
                    self._fire_a_rise(tick, edges)
            else:  # _EV_B_RISE
                if self._b_rise_due == tick:
                    self._b_rise_due = None
                    self._fire_b_rise(tick, edges)
        return edges

    def _fire_a_rise(self, tick, edges):
        if self.raw and not self.force_low_a and not self.out_a:
            self.out_a = True
            edges.append((tick, "A", 1))

    def _fire_b_rise(self, tick, edges):
        if not self.raw and not self.force_low_b and not self.out_b:
            self.out_b = True
            edges.append((tick, "B", 1))

    # -- start-of-conversion trigger -----------------------------------------

    def soc_times(self, t0: int, t1: int) -> list[int]:
        """SOC ticks in ``[t0, t1)``: one per carrier period, at the peak.

        The trigger fires when the counter reaches ``tbprd``, i.e. at ticks
        ``start + tbprd, start + 3*tbprd, ...``.  Empty when the time-base
        clock is stopped or SOC generation is disabled.
        """
        if not (self.running and self.soc_on_period):
            return []
        P = self.tbprd
        first = self.start_tick + P
        if t0 > first:
            k = (t0 - first + 2 * P - 1) // (2 * P)
            first += 2 * P * k
        return list(range(max(first, t0), t1, 2 * P))

    def next_soc_after(self, tick: int) -> int:
        """First SOC tick strictly greater than ``tick``."""
        if not (self.running and self.soc_on_period):
            return _NEVER
        P = self.tbprd
        first = self.start_tick + P
        if tick < first:
            return first
        k = (tick - first) // (2 * P) + 1
        return first + 2 * P * k


class AdcUnit:
    """12-bit converter: PWM-triggered SOC, fixed latency, EOC interrupt.

    A conversion started at ``soc_tick`` samples the input at that instant
    and completes ``(acqps + 1) + conv_ticks`` system clocks later, when the
    result register and interrupt flag update.  Inputs beyond the 0..v_ref
    rails are converted to the rail code and counted as saturations.
    """

    FULL_SCALE = 4095

    def __init__(self, channel: int = 2, acqps: int = 30,
                 conv_ticks: int = 42, v_ref: float = 3.0,
                 trigger: str = "epwm1_soca"):
        self.channel = channel
        self.acqps = acqps
        self.conv_ticks = conv_ticks
        self.v_ref = v_ref
        self.trigger = trigger
        self.result = 0
        self.int_flag = False
        self.saturation_count = 0
        self._pending: tuple[int, int] | None = None  # (eoc_tick, code)

    def code_for(self, v_in: float) -> int:
        code = round_half_up(self.FULL_SCALE * v_in / self.v_ref)
        if code < 0 or code > self.FULL_SCALE:
            self.saturation_count += 1
            code = min(max(code, 0), self.FULL_SCALE)
        return code

    def convert(self, v_in: float, soc_tick: int) -> tuple[int, int]:
        """Start a conversion; returns ``(code, eoc_tick)``.

        Raises :class:`PeripheralError` when triggered while busy.
        """
        if self._pending is not None and soc_tick < self._pending[0]:
            raise PeripheralError(
                f"SOC at tick {soc_tick} while conversion pending until "
                f"{self._pending[0]}")
        code = self.code_for(v_in)
        eoc_tick = soc_tick + (self.acqps + 1) + self.conv_ticks
        self._pending = (eoc_tick, code)
        return code, eoc_tick

    def complete(self, tick: int) -> int:
        """Latch the pending result at its EOC tick; sets the interrupt flag."""
        if self._pending is None or tick != self._pending[0]:
            raise PeripheralError(f"no conversion completes at tick {tick}")
        self.result = self._pending[1]
        self.int_flag = True
        self._pending = None
        return self.result

    def clear_interrupt(self) -> None:
        self.int_flag = False


# Quadrature state is encoded as (a << 1) | b; forward rotation walks the
# gray sequence 00 -> 10 -> 11 -> 01 -> 00.
_QUAD_DIR = {
    (0b00, 0b10): 1, (0b10, 0b11): 1, (0b11, 0b01): 1, (0b01, 0b00): 1,
    (0b10, 0b00): -1, (0b11, 0b10): -1, (0b01, 0b11): -1, (0b00, 0b01): -1,
}

QEP_EDGES = ("a_rise", "a_fall", "b_rise", "b_fall", "index_rise")


class QepState:
    """Quadrature decoder with wrap, index reset and unit-timer latching."""

    def __init__(self, qposmax: int = 4095, qposinit: int = 0,
                 quprd: int = 2_000_000, swap_inputs: bool = False):
        self.qposmax = qposmax
        self.qposinit = qposinit
        self.quprd = quprd
        self.swap_inputs = swap_inputs
        self.qposcnt = qposinit
        self.qposlat = qposinit
        self.index_reset_on_rising = True
        self.a_level = 0
        self.b_level = 0
        self.glitch_count = 0
        self.index_count = 0
        self._prev_lat = qposinit
        self.last_timeout_tick: int | None = None

    def apply_edge(self, edge: str) -> None:
        """Apply one decoded edge; 4x counting with wrap at qposmax/0.

        An edge that matches the channel's current level (no transition, or
        equivalently a both-channels-change glitch collapsed onto one input)
        is counted and ignored rather than treated as motion.
        """
        if edge == "index_rise":
            self.index_count += 1
            if self.index_reset_on_rising:
                self.qposcnt = self.qposinit
            return
        if self.swap_inputs:
            swap = {"a_rise": "b_rise", "a_fall": "b_fall",
                    "b_rise": "a_rise", "b_fall": "a_fall"}
            edge = swap[edge]
        old = (self.a_level << 1) | self.b_level
        if edge == "a_rise":
            if self.a_level:
                self.glitch_count += 1
                return
            self.a_level = 1
        elif edge == "a_fall":
            if not self.a_level:
                self.glitch_count += 1
                return
            self.a_level = 0
        elif edge == "b_rise":
            if self.b_level:
                self.glitch_count += 1
                return
            self.b_level = 1
        elif edge == "b_fall":
            if not self.b_level:
                self.glitch_count += 1
                return
            self.b_level = 0
        else:
            raise ValueError(f"unknown edge {edge!r}")
        new = (self.a_level << 1) | self.b_level
        step = _QUAD_DIR[(old, new)]
        self.qposcnt = (self.qposcnt + step) % (self.qposmax + 1)

    def unit_timeout(self, now_tick: int) -> tuple[int, int]:
        """Latch the position at a unit-timer expiry.

        Returns ``(qposlat, delta_counts)`` where the delta is the shortest
        signed difference between consecutive latches, mapped to
        ``[-(qposmax+1)/2, +(qposmax+1)/2)``.
        """
        if (self.last_timeout_tick is not None
                and now_tick - self.last_timeout_tick < self.quprd):
            raise PeripheralError("unit timeout before quprd elapsed")
        self.last_timeout_tick = now_tick
        self.qposlat = self.qposcnt
        m = self.qposmax + 1
        delta = (self.qposlat - self._prev_lat) % m
        if delta >= m // 2:
            delta -= m
        self._prev_lat = self.qposlat
        return self.qposlat, delta


class DacUnit:
    """Buffered 12-bit DAC; writes take effect immediately."""

    def __init__(self, v_ref: float = 3.0):
        self.v_ref = v_ref
        self.value = 0
        self.out = 0.0
        self.mask_count = 0

    def write(self, value12: int) -> float:
        if value12 < 0 or value12 > 4095:
            self.mask_count += 1
            value12 &= 0xFFF
        self.value = value12
        self.out = self.v_ref * value12 / 4096.0
        return self.out
