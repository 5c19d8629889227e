"""Discrete-event production line: machine automata joined by bounded buffers.

Time advances in integer ticks.  Within a tick machines are processed from
the tail of the line to its head, so space freed downstream is visible to
upstream machines in the same tick.  Self-suspension and auto-resume are
evaluated once all machines have moved.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Union


class State(enum.Enum):
    IDLE = "Idle"
    STARTING = "Starting"
    PRODUCING = "Producing"
    SUSPENDED = "Suspended"
    ABORTED = "Aborted"
    RESETTING = "Resetting"

    def __str__(self) -> str:
        return self.value


class Event(enum.Enum):
    RESOURCE_OUT = "ResourceOut"
    RESOURCE_IN = "ResourceIn"
    FAULT = "Fault"
    RESET_CMD = "ResetCmd"
    START_CMD = "StartCmd"

    def __str__(self) -> str:
        return self.value


# Suspension reasons; only the self-imposed ones clear on their own.
HOLD = "resource out"
BLOCKED = "blocked"
STARVED = "starved"


class LineError(Exception):
    pass


class IllegalTransition(LineError):
    pass


class BudgetExhausted(LineError):
    def __init__(self, message: str, line: LineModel):
        super().__init__(message)
        self.line = line


@dataclass
class Machine:
    id: str
    base_rate: Fraction = Fraction(1)
    state: State = State.IDLE
    accumulator: Fraction = Fraction(0)
    suspend_reason: Optional[str] = None
    emitted: int = 0
    consumed: int = 0
    # Last state broadcast by each neighbor.
    neighbor_states: dict[str, State] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.base_rate = Fraction(self.base_rate)
        if self.base_rate < 0:
            raise ValueError(f"{self.id}: negative rate")


@dataclass
class Buffer:
    id: str
    upstream: str
    downstream: str
    capacity: int
    count: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 0 or not 0 <= self.count <= self.capacity:
            raise ValueError(f"buffer {self.id}: count {self.count} outside 0..{self.capacity}")

    @property
    def full(self) -> bool:
        return self.count >= self.capacity

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass(frozen=True)
class LogEntry:
    tick: int
    machine: str
    event: str


SPEED_POLICIES = ("linear", "constant")


@dataclass
class LineModel:
    machines: list[Machine]
    buffers: list[Buffer]
    clock: int = 0
    log: list[LogEntry] = field(default_factory=list)
    speed_policy: str = "linear"

    def __post_init__(self) -> None:
        ids = [m.id for m in self.machines]
        if len(set(ids)) != len(ids):
            raise ValueError("machine ids must be unique")
        if self.speed_policy not in SPEED_POLICIES:
            raise ValueError(f"unknown speed policy {self.speed_policy!r}")
        expected = list(zip(ids, ids[1:]))
        got = [(b.upstream, b.downstream) for b in self.buffers]
        if got != expected:
            raise ValueError("buffers must join consecutive machines, in line order")

    def machine(self, mid: str) -> Machine:
        for m in self.machines:
            if m.id == mid:
                return m
        raise KeyError(mid)

    def _index(self, mid: str) -> int:
        return next(i for i, m in enumerate(self.machines) if m.id == mid)

    def upstream_buffer(self, mid: str) -> Optional[Buffer]:
        i = self._index(mid)
        return self.buffers[i - 1] if i > 0 else None

    def downstream_buffer(self, mid: str) -> Optional[Buffer]:
        i = self._index(mid)
        return self.buffers[i] if i < len(self.buffers) else None

    def neighbors(self, mid: str) -> list[Machine]:
        i = self._index(mid)
        return [self.machines[j] for j in (i - 1, i + 1) if 0 <= j < len(self.machines)]

    def copy(self) -> LineModel:
        return copy.deepcopy(self)

    def snapshot(self) -> tuple:
        """Hashable state used for determinism checks."""
        return (self.clock,
                tuple((m.id, m.state, m.accumulator, m.suspend_reason, m.emitted, m.consumed)
                      for m in self.machines),
                tuple(b.count for b in self.buffers))


def _set_state(line: LineModel, m: Machine, new: State, why: str) -> None:
    old = m.state
    m.state = new
    line.log.append(LogEntry(line.clock, m.id, f"{old}->{new} ({why})"))
    for n in line.neighbors(m.id):
        n.neighbor_states[m.id] = new


def fire_event(line: LineModel, machine: str, event: Union[Event, str]) -> LineModel:
    event = Event(event) if not isinstance(event, Event) else event
    m = line.machine(machine)
    s = m.state
    if event is Event.FAULT:
        m.suspend_reason = None
        _set_state(line, m, State.ABORTED, str(event))
    elif event is Event.RESOURCE_OUT and s in (State.PRODUCING, State.SUSPENDED):
        m.suspend_reason = HOLD
        _set_state(line, m, State.SUSPENDED, str(event))
    elif event is Event.RESOURCE_IN and s is State.SUSPENDED:
        m.suspend_reason = None
        _set_state(line, m, State.PRODUCING, str(event))
    elif event is Event.RESET_CMD and s is State.ABORTED:
        m.accumulator = Fraction(0)
        _set_state(line, m, State.RESETTING, str(event))
    elif event is Event.START_CMD and s is State.IDLE:
        _set_state(line, m, State.STARTING, str(event))
    else:
        raise IllegalTransition(f"{machine}: {event} not allowed in state {s}")
    return line


def speed_fraction(machine: str, line: LineModel) -> Fraction:
    """Free share of the downstream buffer; 1 for the tail machine."""
    if line.speed_policy == "constant":
        return Fraction(1)
    buf = line.downstream_buffer(machine)
    if buf is None or buf.capacity == 0:
        return Fraction(1) if buf is None else Fraction(0)
    return Fraction(buf.capacity - buf.count, buf.capacity)


def _blocking(line: LineModel, m: Machine) -> Optional[str]:
    up, down = line.upstream_buffer(m.id), line.downstream_buffer(m.id)
    if down is not None and down.full:
        return BLOCKED
    if up is not None and up.empty:
        return STARVED
    return None


def step(line: LineModel) -> LineModel:
    line.clock += 1
    for m in reversed(line.machines):
        if m.state is State.STARTING:
            _set_state(line, m, State.PRODUCING, "started")
            continue
        if m.state is State.RESETTING:
            _set_state(line, m, State.IDLE, "reset complete")
            continue
        if m.state is not State.PRODUCING:
            continue
        up, down = line.upstream_buffer(m.id), line.downstream_buffer(m.id)
        m.accumulator += m.base_rate * speed_fraction(m.id, line)
        while m.accumulator >= 1:
            if (up is not None and up.empty) or (down is not None and down.full):
                # A stalled machine makes no progress on whole items.
                m.accumulator -= int(m.accumulator)
                break
            if up is not None:
                up.count -= 1
                m.consumed += 1
            if down is not None:
                down.count += 1
            m.emitted += 1
            m.accumulator -= 1

    for m in line.machines:
        cause = _blocking(line, m)
        if m.state is State.PRODUCING and cause is not None:
            m.suspend_reason = cause
            buf = line.downstream_buffer(m.id) if cause == BLOCKED else line.upstream_buffer(m.id)
            _set_state(line, m, State.SUSPENDED,
                       f"self: {buf.id} {'full' if cause == BLOCKED else 'empty'} {buf.count}/{buf.capacity}")
        elif m.state is State.SUSPENDED and m.suspend_reason in (BLOCKED, STARVED) and cause is None:
            m.suspend_reason = None
            _set_state(line, m, State.PRODUCING, "auto-resume")
    return line


Schedule = list[tuple[int, str, Event]]


@dataclass
class TraceRow:
    tick: int
    machine: str
    state: State
    buffers: tuple[tuple[str, int, int], ...]

    def format(self) -> str:
        counts = " ".join(f"{b}={c}/{cap}" for b, c, cap in self.buffers)
        return f"{self.tick}\t{self.machine}\t{self.state}\t{counts}"


def _trace_rows(line: LineModel) -> list[TraceRow]:
    counts = tuple((b.id, b.count, b.capacity) for b in line.buffers)
    return [TraceRow(line.clock, m.id, m.state, counts) for m in line.machines]


def _apply_due(line: LineModel, schedule: Schedule) -> None:
    for tick, machine, event in schedule:
        if tick == line.clock:
            fire_event(line, machine, event)


def run_until(line: LineModel, predicate: Callable[[LineModel], bool], max_ticks: int,
              schedule: Optional[Schedule] = None) -> tuple[LineModel, list[TraceRow]]:
    """Step until ``predicate`` holds; events due at the current tick fire first."""
    if max_ticks <= 0:
        raise ValueError("max_ticks must be positive")
    schedule = sorted(schedule or [], key=lambda e: e[0])
    trace: list[TraceRow] = []
    start = line.clock
    while True:
        _apply_due(line, schedule)
        trace.extend(_trace_rows(line))
        if predicate(line):
            return line, trace
        if line.clock - start >= max_ticks:
            raise BudgetExhausted(f"predicate not satisfied within {max_ticks} ticks", line)
        step(line)


def simulate(line: LineModel, ticks: int, schedule: Optional[Schedule] = None
             ) -> tuple[LineModel, list[TraceRow]]:
    """Run exactly ``ticks`` steps and return the trace (one row per machine per tick)."""
    schedule = sorted(schedule or [], key=lambda e: e[0])
    trace: list[TraceRow] = []
    end = line.clock + ticks
    while True:
        _apply_due(line, schedule)
        trace.extend(_trace_rows(line))
        if line.clock >= end:
            return line, trace
        step(line)


def in_state(machine: str, state: State) -> Callable[[LineModel], bool]:
    return lambda line: line.machine(machine).state is state


# ---------------------------------------------------------------------------
# Text formats
#
#   line config:  MACHINE<TAB>id<TAB>rate[<TAB>state]
#                 BUFFER<TAB>id<TAB>upstream<TAB>downstream<TAB>capacity[<TAB>count]
#                 POLICY<TAB>linear|constant
#   schedule:     tick<TAB>machine<TAB>event
#   trace:        tick<TAB>machine<TAB>state<TAB>buffer-counts


def loads_line(text: str) -> LineModel:
    machines, buffers, policy = [], [], "linear"
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        try:
            if cols[0] == "MACHINE" and len(cols) in (3, 4):
                state = State(cols[3]) if len(cols) == 4 and cols[3] else State.IDLE
                machines.append(Machine(cols[1], Fraction(cols[2]), state))
            elif cols[0] == "BUFFER" and len(cols) in (5, 6):
                count = int(cols[5]) if len(cols) == 6 and cols[5] else 0
                buffers.append(Buffer(cols[1], cols[2], cols[3], int(cols[4]), count))
            elif cols[0] == "POLICY" and len(cols) == 2:
                policy = cols[1].strip()
            else:
                raise ValueError(f"malformed record {raw!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return LineModel(machines, buffers, speed_policy=policy)


def loads_schedule(text: str) -> Schedule:
    schedule = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        if len(cols) != 3:
            raise ValueError(f"line {lineno}: expected tick, machine, event")
        try:
            schedule.append((int(cols[0]), cols[1], Event(cols[2].strip())))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return schedule


def format_trace(rows: Iterable[TraceRow]) -> str:
    return "".join(r.format() + "\n" for r in rows)


def format_log(log: Iterable[LogEntry]) -> str:
    return "".join(f"{e.tick}\t{e.machine}\t{e.event}\n" for e in log)


def carton_jam_line(speed_policy: str = "constant") -> LineModel:
    """Form-fill-seal -> packaging -> palletizer, all producing, buffers of 5."""
    return LineModel(
        [Machine("FFS", Fraction(1), State.PRODUCING),
         Machine("Packaging", Fraction(1), State.PRODUCING),
         Machine("Palletizer", Fraction(1), State.PRODUCING)],
        [Buffer("B1", "FFS", "Packaging", 5), Buffer("B2", "Packaging", "Palletizer", 5)],
        speed_policy=speed_policy,
    )


CARTON_JAM_SCHEDULE: Schedule = [
    (0, "Packaging", Event.RESOURCE_OUT),
    (7, "Packaging", Event.RESOURCE_IN),
]
