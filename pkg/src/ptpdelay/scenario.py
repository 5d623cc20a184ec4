"""
Scenario configuration.

A scenario is a flat text file of ``section.key=value`` lines::

    # Attack the Sync/FollowUp pair
    seed=1
    duration_ns=600_000_000_000
    attack.plan=selective
    attack.targets=Sync,FollowUp
    attack.delay_ns=50_000_000

Bundled scenarios are addressed by name, e.g. ``exp1_sync50ms``.
"""

import dataclasses
import logging
import math
import pathlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple

from ptpdelay.adversary import (
    AsymmetricLinkDelay,
    AttackPlan,
    AttackWindow,
    IncrementalDelay,
    NoAttack,
    SelectiveDelay,
)
from ptpdelay.guard import (
    OwdConstraints,
    PaddingPolicy,
    ReplayPolicy,
    SystemBoundParams,
    TimingRandomization,
    apply_padding,
)
from ptpdelay.netmodel import SCHEMES, Direction, EncryptionScheme, Jitter, LinkProfile
from ptpdelay.ptp import EngineConfig, MessageKind, ServoState
from ptpdelay.simcore import NS_PER_MS, NS_PER_S, ClockModel, RandomWalk

logger = logging.getLogger(__name__)

__all__ = [
    "ScenarioError",
    "Scenario",
    "ClockSection",
    "LinkSection",
    "EngineSection",
    "ServoSection",
    "EncryptionSection",
    "AttackSection",
    "GuardSection",
    "NoiseSection",
    "CoverSection",
    "DetectorSection",
    "parse_scenario",
    "load_scenario",
    "bundled_scenarios",
    "parse_grid",
    "load_grid",
    "copy_scenario",
    "SCENARIO_DIR",
]

SCENARIO_DIR = pathlib.Path(__file__).parent / "scenarios"
SCENARIO_SUFFIX = ".scenario"


class ScenarioError(ValueError):
    """Invalid scenario, with the file, line and key it stems from."""

    def __init__(self, message: str, source: str = None, line: int = None, key: str = None):
        self.message = message
        self.source = source
        self.line = line
        self.key = key

        location = ":".join(str(p) for p in (source, line) if p is not None)
        prefix = ": ".join(p for p in (location, key) if p)
        super().__init__("{}: {}".format(prefix, message) if prefix else message)


# Value parsers


def parse_int(text: str) -> int:
    return int(text.replace("_", ""))


def parse_delay(text: str):
    if text.lower() in ("inf", "drop"):
        return math.inf
    return parse_int(text)


def parse_fraction(text: str) -> Fraction:
    return Fraction(text.replace("_", ""))


def parse_float(text: str) -> float:
    return float(text.replace("_", ""))


def parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError("expected true or false, got {!r}".format(text))


def parse_range(text: str) -> Tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError("expected a range lo..hi, got {!r}".format(text))
    return parse_int(lo), parse_int(hi)


def parse_kinds(text: str) -> Tuple[MessageKind, ...]:
    return tuple(MessageKind.parse(t) for t in text.split(",") if t.strip())


def optional(parser: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        if text.lower() == "none":
            return None
        return parser(text)

    return parse


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, tuple) and len(value) == 2 and all(isinstance(v, int) for v in value):
        return "{}..{}".format(*value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _field(default, parser, **kwargs):
    return field(default=default, metadata={"parse": parser}, **kwargs)


# Sections


@dataclass
class ClockSection:
    offset_ns: int = _field(0, parse_int)
    drift_ppm: Fraction = _field(Fraction(0), parse_fraction)
    wander_sigma_ns: float = _field(0.0, parse_float)
    wander_step_ns: int = _field(NS_PER_S, parse_int)

    def build(self, name: str, seed: int) -> ClockModel:
        wander = None
        if self.wander_sigma_ns:
            wander = RandomWalk(self.wander_sigma_ns, self.wander_step_ns, seed)
        return ClockModel(self.offset_ns, self.drift_ppm, wander, name=name)


@dataclass
class LinkSection:
    d_common_ns: int = _field(NS_PER_MS, parse_int)
    delta_ms_ns: int = _field(0, parse_int)
    delta_sm_ns: int = _field(0, parse_int)
    jitter: str = _field("none", str)
    jitter_a_ns: int = _field(0, parse_int)
    jitter_b_ns: int = _field(0, parse_int)
    rate_bps: int = _field(0, parse_int)
    tap_offset_ms_ns: Optional[int] = _field(None, optional(parse_int))
    tap_offset_sm_ns: Optional[int] = _field(None, optional(parse_int))
    fifo: bool = _field(True, parse_bool)

    def build(self) -> LinkProfile:
        return LinkProfile(
            d_common=self.d_common_ns,
            delta_ms=self.delta_ms_ns,
            delta_sm=self.delta_sm_ns,
            jitter=Jitter(self.jitter, self.jitter_a_ns, self.jitter_b_ns),
            rate=self.rate_bps,
            tap_offset_ms=self.tap_offset_ms_ns,
            tap_offset_sm=self.tap_offset_sm_ns,
            fifo=self.fifo,
        )


@dataclass
class EngineSection:
    sync_interval_ns: int = _field(250 * NS_PER_MS, parse_int)
    announce_interval_ns: int = _field(2 * NS_PER_S, parse_int)
    followup_lag_ns: int = _field(3 * NS_PER_MS, parse_int)
    delayreq_lag_ns: int = _field(5 * NS_PER_MS, parse_int)
    delayresp_lag_ns: int = _field(0, parse_int)
    announce_offset_ns: int = _field(125 * NS_PER_MS, parse_int)
    first_sync_ns: Optional[int] = _field(None, optional(parse_int))

    def build(self) -> EngineConfig:
        return EngineConfig(
            sync_interval=self.sync_interval_ns,
            announce_interval=self.announce_interval_ns,
            followup_lag=self.followup_lag_ns,
            delayreq_lag=self.delayreq_lag_ns,
            delayresp_lag=self.delayresp_lag_ns,
            announce_offset=self.announce_offset_ns,
            first_sync=self.first_sync_ns,
        )


@dataclass
class ServoSection:
    enabled: bool = _field(True, parse_bool)
    alpha: Fraction = _field(Fraction(1, 2), parse_fraction)
    step_threshold_ns: int = _field(NS_PER_MS, parse_int)

    def build(self) -> ServoState:
        return ServoState(self.alpha, self.step_threshold_ns)


@dataclass
class EncryptionSection:
    scheme: str = _field("ipsec-tunnel", str)

    def build(self) -> EncryptionScheme:
        try:
            return SCHEMES[self.scheme]
        except KeyError:
            raise ValueError(
                "unknown scheme {!r}, expected one of {}".format(self.scheme, sorted(SCHEMES))
            ) from None


_PLANS = ("none", "selective", "incremental", "asymmetric")


@dataclass
class AttackSection:
    plan: str = _field("none", str)
    targets: Tuple[MessageKind, ...] = _field(
        (MessageKind.SYNC, MessageKind.FOLLOW_UP), parse_kinds
    )
    delay_ns: Any = _field(0, parse_delay)
    ramp_ppm: Fraction = _field(Fraction(1), parse_fraction)
    basis: str = _field("delay", str)
    direction: str = _field("MS", str)
    start_ns: int = _field(0, parse_int)
    end_ns: Optional[int] = _field(None, optional(parse_int))
    hold_successors: bool = _field(True, parse_bool)
    oracle: bool = _field(False, parse_bool)
    min_confidence: float = _field(0.9, parse_float)
    use_direction: bool = _field(True, parse_bool)

    def build(self) -> AttackPlan:
        window = AttackWindow(self.start_ns, self.end_ns)
        common = dict(window=window, hold_successors=self.hold_successors)

        if self.plan == "none":
            return NoAttack(**common)
        if self.plan == "selective":
            return SelectiveDelay(targets=self.targets, delay=self.delay_ns, **common)
        if self.plan == "incremental":
            return IncrementalDelay(
                targets=self.targets, ramp_ppm=self.ramp_ppm, basis=self.basis, **common
            )
        if self.plan == "asymmetric":
            return AsymmetricLinkDelay(
                direction=Direction.parse(self.direction), delay=self.delay_ns, **common
            )
        raise ValueError("unknown plan {!r}, expected one of {}".format(self.plan, _PLANS))


@dataclass
class GuardSection:
    d_min_ms_ns: int = _field(0, parse_int)
    d_min_sm_ns: int = _field(0, parse_int)
    rtd_max_ns: Optional[int] = _field(None, optional(parse_int))
    t_interval_ns: Optional[int] = _field(None, optional(parse_int))
    rho_ppm: Fraction = _field(Fraction(0), parse_fraction)
    replay_window: Optional[int] = _field(None, optional(parse_int))
    padding: str = _field("none", str)
    padding_target: Optional[int] = _field(None, optional(parse_int))
    t0_range_ns: Optional[Tuple[int, int]] = _field(None, optional(parse_range))
    t1_range_ns: Optional[Tuple[int, int]] = _field(None, optional(parse_range))
    sync_offset_range_ns: Optional[Tuple[int, int]] = _field(None, optional(parse_range))
    roundtrip_factor: float = _field(3.0, parse_float)

    def constraints(self) -> OwdConstraints:
        return OwdConstraints(self.d_min_ms_ns, self.d_min_sm_ns)

    def replay_policy(self) -> ReplayPolicy:
        return ReplayPolicy(self.replay_window)

    def padding_policy(self) -> PaddingPolicy:
        return PaddingPolicy(self.padding, self.padding_target)

    def timing_randomization(self) -> TimingRandomization:
        return TimingRandomization(self.t0_range_ns, self.t1_range_ns, self.sync_offset_range_ns)

    def system_bound_params(self, engine: EngineConfig) -> Optional[SystemBoundParams]:
        """System bound parameters, or None without an RTD limit."""
        if self.rtd_max_ns is None:
            return None
        t_interval = self.t_interval_ns or engine.sync_interval
        return SystemBoundParams(self.rtd_max_ns, t_interval, self.rho_ppm)


@dataclass
class NoiseSection:
    p: float = _field(0.0, parse_float)
    length_min: int = _field(64, parse_int)
    length_max: int = _field(1500, parse_int)


@dataclass
class CoverSection:
    rate_ms: float = _field(0.0, parse_float)
    rate_sm: float = _field(0.0, parse_float)
    length_min: int = _field(64, parse_int)
    length_max: int = _field(1500, parse_int)


@dataclass
class DetectorSection:
    enabled: bool = _field(True, parse_bool)
    use_direction: bool = _field(True, parse_bool)


_SECTIONS = {
    "master": ClockSection,
    "slave": ClockSection,
    "link": LinkSection,
    "engine": EngineSection,
    "servo": ServoSection,
    "encryption": EncryptionSection,
    "attack": AttackSection,
    "guard": GuardSection,
    "noise": NoiseSection,
    "cover": CoverSection,
    "detector": DetectorSection,
}

_TOP_LEVEL = {"seed": parse_int, "duration_ns": parse_int, "name": str}


@dataclass
class Scenario:
    """Complete, seed-determined description of one simulation run."""

    name: str = "scenario"
    seed: int = 0
    duration_ns: int = NS_PER_S
    master: ClockSection = field(default_factory=ClockSection)
    slave: ClockSection = field(default_factory=ClockSection)
    link: LinkSection = field(default_factory=LinkSection)
    engine: EngineSection = field(default_factory=EngineSection)
    servo: ServoSection = field(default_factory=ServoSection)
    encryption: EncryptionSection = field(default_factory=EncryptionSection)
    attack: AttackSection = field(default_factory=AttackSection)
    guard: GuardSection = field(default_factory=GuardSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    cover: CoverSection = field(default_factory=CoverSection)
    detector: DetectorSection = field(default_factory=DetectorSection)

    def set(self, key: str, text: str) -> "Scenario":
        """Set ``key`` (e.g. ``link.d_common_ns``) from its text value, in place."""
        if key in _TOP_LEVEL:
            setattr(self, key, _TOP_LEVEL[key](text))
            return self

        section_name, _, name = key.partition(".")
        if section_name not in _SECTIONS or not name:
            raise KeyError("unknown key")

        section = getattr(self, section_name)
        fields = {f.name: f for f in dataclasses.fields(section)}
        if name not in fields:
            raise KeyError("unknown key")

        setattr(section, name, fields[name].metadata["parse"](text))
        return self

    def with_overrides(self, overrides: Mapping[str, str], source: str = "<overrides>") -> "Scenario":
        """Copy with text overrides applied and validated."""
        scenario = copy_scenario(self)
        for key, text in overrides.items():
            _apply(scenario, key, str(text), source, None)
        return scenario.validate(source)

    def validate(self, source: Optional[str] = None) -> "Scenario":
        """Build every runtime object once; raise ScenarioError on the first problem."""
        if self.duration_ns <= 0:
            raise ScenarioError("must be positive", source, key="duration_ns")
        if not 0 <= self.seed < 2 ** 64:
            raise ScenarioError("must fit in 64 bits", source, key="seed")

        checks = [
            ("master", lambda: self.master.build("master", 0)),
            ("slave", lambda: self.slave.build("slave", 0)),
            ("link", self.link.build),
            ("engine", self.engine.build),
            ("servo", self.servo.build),
            ("encryption", self.encryption.build),
            ("attack", self.attack.build),
            ("guard", self._validate_guard),
            ("noise", self._validate_noise),
            ("cover", self._validate_cover),
        ]
        for section, check in checks:
            try:
                check()
            except (ValueError, TypeError, KeyError) as exc:
                raise ScenarioError(str(exc), source, key=section) from exc

        return self

    def _validate_guard(self):
        guard = self.guard
        engine = self.engine.build()
        constraints = guard.constraints()
        guard.replay_policy()
        guard.padding_policy().target_for(self.encryption.build())
        guard.timing_randomization().validate(engine)
        params = guard.system_bound_params(engine)
        if params is not None:
            params.validate(constraints)

        link = self.link.build()
        if constraints.d_min_ms > link.min_delay(Direction.MASTER_TO_SLAVE):
            logger.warning("guard.d_min_ms_ns exceeds the true minimum delay; bounds are unsound")
        if constraints.d_min_sm > link.min_delay(Direction.SLAVE_TO_MASTER):
            logger.warning("guard.d_min_sm_ns exceeds the true minimum delay; bounds are unsound")

    def _validate_noise(self):
        if not 0 <= self.noise.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if not 0 < self.noise.length_min <= self.noise.length_max:
            raise ValueError("invalid length range")

    def _validate_cover(self):
        if self.cover.rate_ms < 0 or self.cover.rate_sm < 0:
            raise ValueError("rates must be non-negative")
        if not 0 < self.cover.length_min <= self.cover.length_max:
            raise ValueError("invalid length range")
        if self.cover.rate_ms or self.cover.rate_sm:
            # Lengths must survive encryption and padding
            scheme = self.encryption.build()
            policy = self.guard.padding_policy()
            for length in (self.cover.length_min, self.cover.length_max):
                apply_padding(length, policy, scheme)

    def items(self) -> Iterable[Tuple[str, str]]:
        """All settings as (key, text) pairs, in file order."""
        yield "name", self.name
        yield "seed", str(self.seed)
        yield "duration_ns", str(self.duration_ns)
        for section_name in _SECTIONS:
            section = getattr(self, section_name)
            for f in dataclasses.fields(section):
                yield "{}.{}".format(section_name, f.name), format_value(getattr(section, f.name))

    def to_text(self) -> str:
        return "".join("{}={}\n".format(k, v) for k, v in self.items())


def copy_scenario(scenario: Scenario) -> Scenario:
    return dataclasses.replace(
        scenario,
        **{name: dataclasses.replace(getattr(scenario, name)) for name in _SECTIONS}
    )


def _apply(scenario: Scenario, key: str, text: str, source, line):
    try:
        scenario.set(key, text)
    except KeyError:
        raise ScenarioError("unknown key", source, line, key) from None
    except (ValueError, ZeroDivisionError) as exc:
        raise ScenarioError("invalid value {!r}: {}".format(text, exc), source, line, key) from exc


def parse_lines(text: str, source: str) -> List[Tuple[int, str, str]]:
    """Split ``key=value`` lines. Blank lines and ``#`` comments are skipped."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError("expected key=value", source, lineno)
        entries.append((lineno, key.strip(), value.strip()))
    return entries


def parse_scenario(text: str, source: str = "<string>", base: Optional[Scenario] = None) -> Scenario:
    scenario = copy_scenario(base) if base is not None else Scenario()
    for lineno, key, value in parse_lines(text, source):
        _apply(scenario, key, value, source, lineno)
    return scenario.validate(source)


def bundled_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*" + SCENARIO_SUFFIX))


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    path = pathlib.Path(path_or_name)
    if not path.is_file():
        bundled = SCENARIO_DIR / (str(path_or_name) + SCENARIO_SUFFIX)
        if not bundled.is_file():
            raise ScenarioError(
                "no such file or bundled scenario (bundled: {})".format(
                    ", ".join(bundled_scenarios())
                ),
                str(path_or_name),
            )
        path = bundled

    scenario = Scenario(name=path.stem)
    return parse_scenario(path.read_text(), str(path), base=scenario)


def parse_grid(text: str, source: str = "<grid>") -> Dict[str, List[str]]:
    """
    Parse a sweep grid: ``key=v1,v2,...`` per line.

    Values of ``attack.targets`` are lists themselves and are separated by ``;``.
    """
    grid = {}
    for lineno, key, value in parse_lines(text, source):
        separator = ";" if key == "attack.targets" else ","
        values = [v.strip() for v in value.split(separator) if v.strip()]
        if not values:
            raise ScenarioError("no values", source, lineno, key)
        check = Scenario()
        for v in values:
            _apply(check, key, v, source, lineno)
        grid[key] = values
    return grid


def load_grid(path) -> Dict[str, List[str]]:
    path = pathlib.Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(exc), str(path)) from exc
    return parse_grid(text, str(path))
