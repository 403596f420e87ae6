"""Direct and distributed trust, composite classification and probation.

Each node owns one :class:`TrustTable` holding its view of every subject it
has observed or heard about. Ratings:

* direct      beta-prior mean of watchdog outcomes, ``(f + 1) / (f + m + 2)``
* distributed composite-weighted mean of fresh neighbour reports
* composite   ``alpha * direct + (1 - alpha) * distributed``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Optional

from .simkernel import Event, EventKind, Kernel


class State(enum.Enum):
    NORMAL = "Normal"
    SUSPECTED = "Suspected"
    BLACKLISTED = "Blacklisted"
    PROBATION = "Probation"


@dataclass
class TrustParams:
    alpha: float = 0.7
    t_black: float = 0.3
    t_ok: float = 0.5
    deviation_delta: float = 0.4
    probation_period: float = 200.0
    report_interval: float = 10.0
    watchdog_timeout: float = 0.05
    report_ttl: float = 30.0
    # direct observations needed before the deviation filter applies
    filter_min_observations: int = 5
    # None means probation_period / 2
    probation_window: Optional[float] = None
    reintegration: bool = True
    idle_prune: float = 60.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= self.t_black < self.t_ok <= 1.0:
            raise ValueError("thresholds must satisfy 0 <= t_black < t_ok <= 1")
        for name in ("deviation_delta", "probation_period", "report_interval",
                     "watchdog_timeout", "report_ttl", "idle_prune"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.report_interval <= 0 or self.watchdog_timeout <= 0:
            raise ValueError("report_interval and watchdog_timeout must be > 0")

    @property
    def window(self) -> float:
        if self.probation_window is None:
            return self.probation_period / 2.0
        return self.probation_window

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class ReputationReport:
    reporter: int
    subject: int
    rating: float
    issued_at: float


@dataclass(frozen=True)
class WarnMessage:
    accuser: int
    accused: int
    evidence_rating: float
    issued_at: float


@dataclass
class TrustRecord:
    observer: int
    subject: int
    f: int = 0
    m: int = 0
    direct: float = 0.5
    distributed: float = 0.5
    composite: float = 0.5
    state: State = State.NORMAL
    probation_until: float = 0.0
    strikes: int = 0
    last_active: float = 0.0
    timer: Optional[Event] = field(default=None, repr=False)


@dataclass(frozen=True)
class TrustEvent:
    """One row of the per-run trust log, with the post-event snapshot."""

    time: float
    observer: int
    subject: int
    event: str
    f: int
    m: int
    direct: float
    distributed: float
    composite: float
    state: str
    detail: tuple = ()


def direct_rating(f: int, m: int) -> float:
    return (f + 1) / (f + m + 2)


def composite_trust(record: TrustRecord, params: TrustParams) -> float:
    a = params.alpha
    return a * record.direct + (1.0 - a) * record.distributed


def classify(record: TrustRecord, params: TrustParams) -> State:
    c = record.composite
    if c < params.t_black:
        return State.BLACKLISTED
    if c < params.t_ok:
        return State.SUSPECTED
    return State.NORMAL


def weighted_rating(pairs: Iterable[tuple[float, float]]) -> Optional[float]:
    """Mean of ratings weighted by reporter composite; None if no weight."""
    num = den = 0.0
    for weight, rating in pairs:
        num += weight * rating
        den += weight
    if den <= 0.0:
        return None
    return num / den


class TrustTable:
    def __init__(self, owner: int, params: TrustParams, kernel: Kernel,
                 on_warn: Optional[Callable[[int, float], None]] = None,
                 on_transition: Optional[Callable[[int, State, State], None]] = None,
                 log: Optional[list] = None):
        self.owner = owner
        self.params = params
        self.kernel = kernel
        self.on_warn = on_warn
        self.on_transition = on_transition
        self.log = log
        self.records: dict[int, TrustRecord] = {}
        # subject -> reporter -> latest report
        self.reports: dict[int, dict[int, ReputationReport]] = {}
        self.warns_sent = 0

    @property
    def now(self) -> float:
        return self.kernel.clock

    def record(self, subject: int) -> TrustRecord:
        rec = self.records.get(subject)
        if rec is None:
            rec = TrustRecord(self.owner, subject, last_active=self.now)
            self.records[subject] = rec
        return rec

    def _log(self, rec: TrustRecord, event: str, detail: tuple = ()):
        if self.log is not None:
            self.log.append(TrustEvent(self.now, self.owner, rec.subject, event, rec.f, rec.m,
                                       rec.direct, rec.distributed, rec.composite,
                                       rec.state.value, detail))

    def admissible(self, subject: int) -> bool:
        return self.record(subject).state is not State.BLACKLISTED

    def is_blacklisted(self, subject: int) -> bool:
        rec = self.records.get(subject)
        return rec is not None and rec.state is State.BLACKLISTED

    def blacklist(self) -> tuple[int, ...]:
        return tuple(sorted(s for s, r in self.records.items() if r.state is State.BLACKLISTED))

    # observations

    def observe_forward(self, subject: int) -> None:
        rec = self.record(subject)
        rec.f += 1
        rec.last_active = self.now
        self._refresh(rec, "forward")

    def observe_misbehavior(self, subject: int, cause: str = "NoForward") -> None:
        rec = self.record(subject)
        rec.m += 1
        rec.last_active = self.now
        if rec.state is State.PROBATION:
            rec.direct = direct_rating(rec.f, rec.m)
            rec.composite = composite_trust(rec, self.params)
            rec.strikes += 1
            self._log(rec, "misbehavior", (cause,))
            self._enter_blacklist(rec)
            return
        self._refresh(rec, "misbehavior", (cause,))

    # distributed factor

    def receive_report(self, report: ReputationReport) -> None:
        if report.reporter == self.owner or report.subject == self.owner:
            return
        store = self.reports.setdefault(report.subject, {})
        old = store.get(report.reporter)
        if old is None or report.issued_at >= old.issued_at:
            store[report.reporter] = report
        self.merge(report.subject)

    def receive_warn(self, warn: WarnMessage) -> bool:
        """Fold a warn into the report store. Warns from blacklisted accusers
        are ignored; returns whether the warn was accepted."""
        if self.is_blacklisted(warn.accuser):
            return False
        self.receive_report(ReputationReport(warn.accuser, warn.accused,
                                             warn.evidence_rating, warn.issued_at))
        return True

    def merge(self, subject: int) -> float:
        stored = self.reports.get(subject, {})
        return self.merge_reports(subject, [stored[k] for k in sorted(stored)])

    def merge_reports(self, subject: int, reports: list[ReputationReport]) -> float:
        rec = self.record(subject)
        p = self.params
        now = self.now
        filter_on = rec.f + rec.m >= p.filter_min_observations
        pairs = []
        for r in reports:
            if r.reporter == self.owner or now - r.issued_at > p.report_ttl:
                continue
            if self.is_blacklisted(r.reporter):
                continue
            if filter_on and abs(r.rating - rec.direct) > p.deviation_delta:
                continue
            pairs.append((self.record(r.reporter).composite, r.rating))
        merged = weighted_rating(pairs)
        rec.distributed = rec.direct if merged is None else merged
        detail = tuple((r.reporter, r.rating, r.issued_at) for r in reports)
        self._refresh(rec, "merge", detail)
        return rec.distributed

    def report_entries(self) -> list[tuple[int, float]]:
        return [(s, r.direct) for s, r in sorted(self.records.items()) if r.f + r.m >= 1]

    def report_round(self) -> None:
        """Periodic upkeep: re-merge subjects with stored reports so stale
        ones age out, then prune idle unremarkable records."""
        for subject in sorted(self.reports):
            self.merge(subject)
        cutoff = self.now - self.params.idle_prune
        for subject in sorted(self.records):
            rec = self.records[subject]
            if rec.state is State.NORMAL and rec.strikes == 0 and rec.last_active < cutoff:
                self._log(rec, "prune")
                del self.records[subject]

    # classification and lifecycle

    def _refresh(self, rec: TrustRecord, event: str, detail: tuple = ()):
        rec.direct = direct_rating(rec.f, rec.m)
        rec.composite = composite_trust(rec, self.params)
        self._log(rec, event, detail)
        if rec.state in (State.BLACKLISTED, State.PROBATION):
            return
        new = classify(rec, self.params)
        if new is rec.state:
            return
        if new is State.BLACKLISTED:
            self._enter_blacklist(rec)
            return
        old = rec.state
        rec.state = new
        self._log(rec, "state")
        if self.on_transition:
            self.on_transition(rec.subject, old, new)
        if old is State.NORMAL and new is State.SUSPECTED:
            self._warn(rec)

    def _enter_blacklist(self, rec: TrustRecord):
        old = rec.state
        rec.state = State.BLACKLISTED
        if rec.timer is not None:
            rec.timer.cancel()
            rec.timer = None
        if self.params.reintegration:
            rec.probation_until = self.now + self.params.probation_period * 2 ** rec.strikes
            rec.timer = self.kernel.at(rec.probation_until, EventKind.PROBATION_END,
                                       self._on_probation_end, rec.subject)
        else:
            rec.probation_until = float("inf")
        self._log(rec, "state")
        if self.on_transition:
            self.on_transition(rec.subject, old, State.BLACKLISTED)
        self._warn(rec)

    def _warn(self, rec: TrustRecord):
        self.warns_sent += 1
        if self.on_warn:
            self.on_warn(rec.subject, rec.direct)

    def _on_probation_end(self, ev: Event):
        rec = self.records.get(ev.payload)
        if rec is not None and rec.timer is ev:
            rec.timer = None
            self.reintegrate(ev.payload)

    def reintegrate(self, subject: int) -> None:
        rec = self.record(subject)
        if rec.state is not State.BLACKLISTED:
            return
        rec.state = State.PROBATION
        rec.f = rec.m = 0
        rec.direct = rec.distributed = 0.5
        rec.composite = composite_trust(rec, self.params)
        rec.last_active = self.now
        self._log(rec, "probation")
        if self.on_transition:
            self.on_transition(subject, State.BLACKLISTED, State.PROBATION)
        rec.timer = self.kernel.after(self.params.window, EventKind.TIMER,
                                      self._on_window_end, subject)

    def _on_window_end(self, ev: Event):
        rec = self.records.get(ev.payload)
        if rec is None or rec.timer is not ev or rec.state is not State.PROBATION:
            return
        rec.timer = None
        rec.state = State.NORMAL
        rec.strikes = 0
        self._log(rec, "rehabilitated")
        if self.on_transition:
            self.on_transition(rec.subject, State.PROBATION, State.NORMAL)
        self._refresh(rec, "refresh")
