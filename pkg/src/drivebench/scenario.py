"""Scenario documents: what to simulate and when to poke it.

A scenario is a single UTF-8 JSON object with up to five sections, all
optional except ``sim.duration``:

* ``sim`` -- duration [s], coupling (``switched``/``averaged``), f_sys [Hz],
  tbprd [ticks], deadband_ticks, ds_ireg, substep_us, v_dc [V],
  frame_rate (``speed``/``isr``), isr_budget_us
* ``motor`` -- Rs, Rr, Ls, Lr, Lm, pole_pairs, J, B
* ``sense`` -- r_shunt, amp_gain, v_cm, v_ref, adc_bits
* ``control`` -- mode, gains {...}, id_ref, speed_filter_hz, i_max, iq_max,
  vf_slew_hz_per_s, literal_dispatch, dac_source
* ``timeline`` -- ordered list of ``{"t": sec, "cmd": name, ...}`` entries

Unknown sections, unknown keys and unknown gain names are rejected at load
time with the offending field named.  Defaults live in :data:`DEFAULTS`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .firmware import GAIN_NAMES, MODES, SETTABLE_NAMES, ControlConfig, default_gains
from .plant import InverterConfig, MotorParams, SenseChain

DEFAULTS = {
    "sim": {
        "duration": None,          # seconds; the one required field
        "coupling": "switched",
        "f_sys": 200e6,            # system clock [Hz]
        "tbprd": 10000,            # up-down period register -> 10 kHz carrier
        "deadband_ticks": 200,     # 1 us at 200 MHz
        "ds_ireg": 10,
        "substep_us": 1.0,         # plant integration step cap
        "v_dc": 300.0,
        "frame_rate": "speed",     # telemetry cadence: speed loop or ISR
        "isr_budget_us": 2.0,      # debug-pin high time per interrupt
    },
    "motor": {
        "Rs": 2.3, "Rr": 1.8, "Ls": 0.26, "Lr": 0.26, "Lm": 0.245,
        "pole_pairs": 2, "J": 0.01, "B": 0.001,
    },
    "sense": {
        "r_shunt": 0.01, "amp_gain": 8.2, "v_cm": 1.25, "v_ref": 3.0,
        "adc_bits": 12,
    },
    "control": {
        "mode": "idle",
        "gains": default_gains(),
        "id_ref": 1.8,
        "speed_filter_hz": 50.0,
        "i_max": 12.0,
        "iq_max": 8.0,
        "vf_slew_hz_per_s": 20.0,
        "literal_dispatch": False,
        "dac_source": "omega_filt",
    },
}

COMMAND_KINDS = ("set_speed_ref", "set_mode", "set_load_torque", "set_gain",
                 "pwm_enable", "set_id_ref")


class ScenarioError(ValueError):
    """Malformed or invalid scenario document; names the offending field."""

    def __init__(self, fld: str, message: str):
        super().__init__(f"field '{fld}': {message}")
        self.field = fld


@dataclass
class Command:
    t: float
    kind: str
    value: object = None
    name: str | None = None      # gain name for set_gain

    def describe(self) -> str:
        if self.kind == "set_gain":
            return f"set_gain {self.name}={self.value}"
        return f"{self.kind} {self.value}"


def command_from_fields(kind: str, fields: dict, where: str = "command") -> Command:
    """Validate a command's kind and arguments; shared with the live stream."""
    if kind not in COMMAND_KINDS:
        raise ScenarioError(where, f"unknown command {kind!r}")
    if kind == "set_mode":
        mode = str(fields.get("mode", fields.get("value", ""))).lower()
        if mode not in MODES:
            raise ScenarioError(where, f"unknown mode {mode!r}")
        return Command(0.0, kind, mode)
    if kind == "pwm_enable":
        raw = fields.get("enabled", fields.get("value"))
        if isinstance(raw, str):
            raw = raw.lower() in ("1", "true", "on")
        return Command(0.0, kind, bool(raw))
    if kind == "set_gain":
        name = fields.get("name")
        if name not in SETTABLE_NAMES:
            raise ScenarioError(where, f"unknown gain name {name!r}")
        try:
            value = float(fields["value"])
        except (KeyError, TypeError, ValueError):
            raise ScenarioError(where, "set_gain needs a numeric 'value'")
        return Command(0.0, kind, value, name=name)
    try:
        value = float(fields["value"])
    except (KeyError, TypeError, ValueError):
        raise ScenarioError(where, f"{kind} needs a numeric 'value'")
    return Command(0.0, kind, value)


@dataclass
class Scenario:
    duration: float
    coupling: str = "switched"
    f_sys: float = 200e6
    tbprd: int = 10000
    deadband_ticks: int = 200
    substep_us: float = 1.0
    frame_rate: str = "speed"
    isr_budget_us: float = 2.0
    adc_v_ref: float = 3.0
    motor: MotorParams = field(default_factory=MotorParams)
    sense: SenseChain = field(default_factory=SenseChain)
    inverter: InverterConfig = field(default_factory=InverterConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    timeline: list[Command] = field(default_factory=list)


def _take(section: dict, name: str, defaults: dict) -> dict:
    value = section.get(name, {})
    if not isinstance(value, dict):
        raise ScenarioError(name, "must be an object")
    unknown = set(value) - set(defaults)
    if unknown:
        raise ScenarioError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    merged = dict(defaults)
    merged.update(value)
    return merged


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("document", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("document", "top level must be an object")
    unknown = set(doc) - {"sim", "motor", "sense", "control", "timeline"}
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown section")

    sim = _take(doc, "sim", DEFAULTS["sim"])
    if sim["duration"] is None:
        raise ScenarioError("sim.duration", "required")
    duration = float(sim["duration"])
    if duration <= 0:
        raise ScenarioError("sim.duration", "must be positive")
    if sim["coupling"] not in ("switched", "averaged"):
        raise ScenarioError("sim.coupling", f"unknown value {sim['coupling']!r}")
    if sim["frame_rate"] not in ("speed", "isr"):
        raise ScenarioError("sim.frame_rate", f"unknown value {sim['frame_rate']!r}")
    tbprd = int(sim["tbprd"])
    if tbprd < 1:
        raise ScenarioError("sim.tbprd", "must be >= 1")
    deadband = int(sim["deadband_ticks"])
    if deadband < 0:
        raise ScenarioError("sim.deadband_ticks", "must be >= 0")
    ds_ireg = int(sim["ds_ireg"])
    if ds_ireg < 1:
        raise ScenarioError("sim.ds_ireg", "must be >= 1")
    substep_us = float(sim["substep_us"])
    if substep_us <= 0:
        raise ScenarioError("sim.substep_us", "must be positive")

    motor_kw = _take(doc, "motor", DEFAULTS["motor"])
    try:
        motor = MotorParams(**motor_kw)
    except ValueError as exc:
        raise ScenarioError("motor", str(exc)) from None

    sense_kw = _take(doc, "sense", DEFAULTS["sense"])
    if int(sense_kw["adc_bits"]) != 12:
        raise ScenarioError("sense.adc_bits", "only the 12-bit converter is modeled")
    adc_v_ref = float(sense_kw.pop("v_ref"))
    sense_kw.pop("adc_bits")
    sense = SenseChain(**sense_kw)

    ctrl_kw = _take(doc, "control", DEFAULTS["control"])
    mode = str(ctrl_kw["mode"]).lower()
    if mode not in MODES:
        raise ScenarioError("control.mode", f"unknown value {mode!r}")
    gains = ctrl_kw["gains"]
    if not isinstance(gains, dict):
        raise ScenarioError("control.gains", "must be an object")
    bad = set(gains) - set(GAIN_NAMES)
    if bad:
        raise ScenarioError(f"control.gains.{sorted(bad)[0]}", "unknown gain name")
    merged_gains = default_gains()
    merged_gains.update({k: float(v) for k, v in gains.items()})
    try:
        control = ControlConfig(
            mode=mode,
            ds_ireg=ds_ireg,
            gains=merged_gains,
            id_ref=float(ctrl_kw["id_ref"]),
            i_max=float(ctrl_kw["i_max"]),
            iq_max=float(ctrl_kw["iq_max"]),
            v_dc=float(sim["v_dc"]),
            speed_filter_hz=float(ctrl_kw["speed_filter_hz"]),
            rotor_time_constant=motor.Tr,
            pole_pairs=motor.pole_pairs,
            vf_slew_hz_per_s=float(ctrl_kw["vf_slew_hz_per_s"]),
            literal_dispatch=bool(ctrl_kw["literal_dispatch"]),
            dac_source=str(ctrl_kw["dac_source"]),
        )
    except ValueError as exc:
        raise ScenarioError("control", str(exc)) from None

    raw_timeline = doc.get("timeline", [])
    if not isinstance(raw_timeline, list):
        raise ScenarioError("timeline", "must be an array")
    timeline = []
    prev_t = -1.0
    for idx, entry in enumerate(raw_timeline):
        where = f"timeline[{idx}]"
        if not isinstance(entry, dict) or "t" not in entry or "cmd" not in entry:
            raise ScenarioError(where, "needs 't' and 'cmd'")
        t = float(entry["t"])
        if t < 0 or t > duration:
            raise ScenarioError(f"{where}.t", "outside [0, duration]")
        if t < prev_t:
            raise ScenarioError("timeline", f"not sorted by t at index {idx}")
        prev_t = t
        fields = {k: v for k, v in entry.items() if k not in ("t", "cmd")}
        cmd = command_from_fields(str(entry["cmd"]), fields, where)
        cmd.t = t
        timeline.append(cmd)

    return Scenario(
        duration=duration,
        coupling=str(sim["coupling"]),
        f_sys=float(sim["f_sys"]),
        tbprd=tbprd,
        deadband_ticks=deadband,
        substep_us=substep_us,
        frame_rate=str(sim["frame_rate"]),
        isr_budget_us=float(sim["isr_budget_us"]),
        adc_v_ref=adc_v_ref,
        motor=motor,
        sense=sense,
        inverter=InverterConfig(v_dc=float(sim["v_dc"]),
                                coupling=str(sim["coupling"])),
        control=control,
        timeline=timeline,
    )


def load_scenario_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def bundled_scenario_names() -> list[str]:
    names = []
    for entry in resources.files("drivebench.scenarios").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[:-5])
    return sorted(names)


def load_bundled_scenario(name: str) -> Scenario:
    ref = resources.files("drivebench.scenarios").joinpath(f"{name}.json")
    if not ref.is_file():
        raise ScenarioError("scenario", f"no bundled scenario named {name!r}")
    return load_scenario(ref.read_text(encoding="utf-8"))
