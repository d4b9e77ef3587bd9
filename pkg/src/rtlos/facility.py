"""Primary-health-center patient flow model.

Four outpatient stations (NCD nurse, doctor, laboratory, pharmacy) with
a daily outpatient window.  Outpatients aged 30 or over are screened by
the NCD nurse before the doctor; after the doctor roughly half visit the
laboratory; everyone exits through the pharmacy.  Inpatients and
childbirth patients arrive around the clock but only those arriving
inside the outpatient window are seen by the doctor, where they hold
non-preemptive priority over outpatients (head of queue, no service
interruption).

Arrivals stop at window close and the stations drain the backlog in
overtime, so each day ends empty.  Utilization is busy time divided by
scheduled window time and can exceed 1 on overloaded days.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from random import Random
from typing import Iterable, Optional, TextIO

from .distributions import ConfigError, ServiceDistribution
from .kernel import RngStreams, SimKernel

__all__ = [
    "NCD", "DOCTOR", "LAB", "PHARMACY", "STATION_NAMES",
    "OUTPATIENT", "INPATIENT", "CHILDBIRTH", "CLASS_NAMES",
    "Patient", "SubsystemState", "FacilityConfig", "PhcFacility",
    "PATIENT_CSV_HEADER", "patient_csv_row",
]

# Station indices; I = {n, d, l, p}.
NCD, DOCTOR, LAB, PHARMACY = 0, 1, 2, 3
STATION_NAMES = ("ncd", "doctor", "lab", "pharmacy")

# Patient classes.
OUTPATIENT, INPATIENT, CHILDBIRTH = 0, 1, 2
CLASS_NAMES = ("outpatient", "inpatient", "childbirth")

# Event kinds.
EV_COMPLETE = 0      # a = station index, b = patient
EV_OP_ARRIVAL = 1    # a = patient
EV_HP_ARRIVAL = 2    # a = patient class (INPATIENT or CHILDBIRTH)

_EVENT_NAMES = ("complete", "op_arrival", "hp_arrival")

_NAN = float("nan")


class Patient:
    """One patient visit.  Timestamps are absolute simulation minutes."""

    __slots__ = (
        "pid", "cls", "age_ge30", "origin", "preferred", "visited",
        "decision_time", "arrival", "exit", "seed", "rng", "needs_lab",
        "tq", "ts", "te",
    )

    def __init__(self, pid: int, cls: int, age_ge30: bool = False, seed: int = 0):
        self.pid = pid
        self.cls = cls
        self.age_ge30 = age_ge30
        self.origin = ""
        self.preferred = ""
        self.visited = ""
        self.decision_time = _NAN
        self.arrival = _NAN
        self.exit = _NAN
        self.seed = seed
        self.rng: Optional[Random] = None
        self.needs_lab = False
        # Per-station queue-entry / service-start / service-end times.
        self.tq = [_NAN, _NAN, _NAN, _NAN]
        self.ts = [_NAN, _NAN, _NAN, _NAN]
        self.te = [_NAN, _NAN, _NAN, _NAN]

    def copy(self) -> "Patient":
        p = Patient(self.pid, self.cls, self.age_ge30, self.seed)
        p.origin = self.origin
        p.preferred = self.preferred
        p.visited = self.visited
        p.decision_time = self.decision_time
        p.arrival = self.arrival
        p.exit = self.exit
        p.needs_lab = self.needs_lab
        if self.rng is not None:
            p.rng = Random()
            p.rng.setstate(self.rng.getstate())
        p.tq = list(self.tq)
        p.ts = list(self.ts)
        p.te = list(self.te)
        return p

    @property
    def los(self) -> float:
        return self.exit - self.arrival

    def sojourn(self, station: int) -> float:
        """Wait plus service at one station (nan if not visited)."""
        return self.te[station] - self.tq[station]

    def wait(self, station: int) -> float:
        return self.ts[station] - self.tq[station]

    def case_tag(self) -> int:
        """Routing case: 1 = n,d,p; 2 = n,d,l,p; 3 = d,l,p; 0 = d,p."""
        if self.age_ge30:
            return 2 if self.needs_lab else 1
        return 3 if self.needs_lab else 0


@dataclass(frozen=True)
class SubsystemState:
    """Per-station observation at one instant.

    ``elapsed_service`` holds the elapsed service time of each busy
    server; an idle server contributes no entry.  Higher-priority queue
    counts are nonzero only at the doctor.
    """

    station: int
    queue_len_outpatient: int
    queue_len_inpatient: int
    queue_len_childbirth: int
    elapsed_service: tuple
    observed_at: float

    @property
    def busy(self) -> bool:
        return len(self.elapsed_service) > 0

    @property
    def queue_total(self) -> int:
        return (self.queue_len_outpatient + self.queue_len_inpatient
                + self.queue_len_childbirth)


def _default_services() -> dict:
    return {
        "doctor_outpatient": ServiceDistribution.gaussian(0.87, 0.21),
        "doctor_inpatient": ServiceDistribution.uniform(10, 30),
        "doctor_childbirth": ServiceDistribution.uniform(30, 60),
        "ncd": ServiceDistribution.uniform(2, 5),
        "lab": ServiceDistribution.gaussian(3.45, 0.83),
        "pharmacy": ServiceDistribution.gaussian(2.08, 0.72),
    }


@dataclass
class FacilityConfig:
    """Everything needed to run one facility."""

    fid: str = "PHC1"
    interarrival_outpatient: ServiceDistribution = field(
        default_factory=lambda: ServiceDistribution.exponential(9))
    interarrival_inpatient: ServiceDistribution = field(
        default_factory=lambda: ServiceDistribution.exponential(2880))
    interarrival_childbirth: ServiceDistribution = field(
        default_factory=lambda: ServiceDistribution.exponential(2880))
    services: dict = field(default_factory=_default_services)
    servers: tuple = (1, 1, 1, 1)
    lab_visit_prob: float = 0.5
    ncd_age_threshold: float = 30.0
    p_age_ge30: float = 0.5
    opd_minutes: float = 480.0
    lambda_eff: Optional[float] = None  # predictor-facing interarrival override

    def __post_init__(self):
        if not (0.0 <= self.lab_visit_prob <= 1.0):
            raise ConfigError(f"lab_visit_prob must be in [0,1], got {self.lab_visit_prob}")
        if not (0.0 <= self.p_age_ge30 <= 1.0):
            raise ConfigError(f"p_age_ge30 must be in [0,1], got {self.p_age_ge30}")
        if any(m < 1 for m in self.servers):
            raise ConfigError(f"server counts must be >= 1, got {self.servers}")
        if not (0 < self.opd_minutes <= 1440):
            raise ConfigError(f"opd_minutes must be in (0,1440], got {self.opd_minutes}")

    def station_service(self, station: int, cls: int = OUTPATIENT) -> ServiceDistribution:
        if station == DOCTOR:
            key = ("doctor_outpatient", "doctor_inpatient", "doctor_childbirth")[cls]
        else:
            key = ("ncd", None, "lab", "pharmacy")[station]
        return self.services[key]

    def predictor_lambda(self) -> float:
        """Mean outpatient interarrival (minutes) fed to predictors."""
        if self.lambda_eff is not None:
            return self.lambda_eff
        return self.interarrival_outpatient.mean()


class PhcFacility:
    """Event-driven simulation of one facility."""

    def __init__(self, config: FacilityConfig, streams: RngStreams,
                 stop_arrivals_at: float = math.inf,
                 trace: Optional[TextIO] = None):
        self.config = config
        self.kernel = SimKernel(streams)
        self.stop_arrivals_at = stop_arrivals_at
        self.trace = trace
        self.recording = True
        self.warmup_end = 0.0

        m = config.servers
        self._m = m
        # queue_op[s]: FIFO outpatient queues; doctor also has an HP band.
        self.queue_op = [[], [], [], []]
        self.queue_hp: list = []  # (doctor only) inpatient/childbirth FIFO
        # in_service[s]: list of (patient, start_time) per busy server.
        self.in_service = [[], [], [], []]

        self._svc = [config.station_service(s) for s in range(4)]
        self._svc_mean = [d.mean() for d in self._svc]
        self._hp_svc = (None, config.station_service(DOCTOR, INPATIENT),
                        config.station_service(DOCTOR, CHILDBIRTH))
        self._hp_iat = (None, config.interarrival_inpatient, config.interarrival_childbirth)
        self._hp_pid = 0

        # statistics (post-warmup, only while self.recording)
        self.busy_time = [0.0, 0.0, 0.0, 0.0]
        self.wait_sum = [0.0, 0.0, 0.0, 0.0]
        self.wait_n = [0, 0, 0, 0]
        self.los_sum = 0.0
        self.los_n = 0
        # conservation counters per class, maintained at all times
        self.arrivals = [0, 0, 0]
        self.exits = [0, 0, 0]
        self.in_system = [0, 0, 0]
        self.exit_hook = None   # callable(patient), used for dataset capture

        # Higher-priority arrival generators run around the clock.
        for cls, dist in ((INPATIENT, config.interarrival_inpatient),
                          (CHILDBIRTH, config.interarrival_childbirth)):
            first = dist.sample(self.kernel.streams.get(f"arrival:{CLASS_NAMES[cls]}"))
            if first < stop_arrivals_at:
                self.kernel.schedule(first, EV_HP_ARRIVAL, cls)

    # -- day window ------------------------------------------------------

    def in_window(self, t: float) -> bool:
        return (t - 1440.0 * math.floor(t / 1440.0)) < self.config.opd_minutes

    # -- event handling ---------------------------------------------------

    def handle(self, t: float, kind: int, a, b) -> None:
        if kind == EV_COMPLETE:
            self._complete(a, b, t)
        elif kind == EV_OP_ARRIVAL:
            self._op_arrive(a, t)
        else:
            self._hp_arrive(a, t)
        if self.trace is not None:
            ent = b.pid if kind == EV_COMPLETE else (a.pid if kind == EV_OP_ARRIVAL else f"{CLASS_NAMES[a]}")
            st = STATION_NAMES[a] if kind == EV_COMPLETE else ""
            self.trace.write(f"{t:.6f}\t{self.kernel._seq}\t{_EVENT_NAMES[kind]}\t{ent}\t{st}\t{self.config.fid}\n")

    def run_until(self, t: float) -> int:
        return self.kernel.run_until(t, self.handle)

    def drain(self) -> int:
        """Run the calendar dry (arrival generators stop at the horizon)."""
        n = 0
        while self.kernel.pending():
            n += self.kernel.run_until(self.kernel.next_event_time(), self.handle)
        return n

    def schedule_op_arrival(self, patient: Patient, t: float) -> None:
        self.kernel.schedule(t, EV_OP_ARRIVAL, patient)

    # -- patient flow ------------------------------------------------------

    def _op_arrive(self, p: Patient, t: float) -> None:
        p.arrival = t
        p.visited = self.config.fid
        p.rng = Random(p.seed)
        p.needs_lab = p.rng.random() < self.config.lab_visit_prob
        self.arrivals[OUTPATIENT] += 1
        self.in_system[OUTPATIENT] += 1
        self._enqueue(NCD if p.age_ge30 else DOCTOR, p, t)

    def _hp_arrive(self, cls: int, t: float) -> None:
        stream = self.kernel.streams.get(f"arrival:{CLASS_NAMES[cls]}")
        nxt = t + self._hp_iat[cls].sample(stream)
        if nxt < self.stop_arrivals_at:
            self.kernel.schedule(nxt, EV_HP_ARRIVAL, cls)
        if not self.in_window(t):
            return  # attended by the duty nurse, outside this model
        self._hp_pid += 1
        p = Patient(self._hp_pid, cls)
        p.arrival = t
        p.visited = self.config.fid
        self.arrivals[cls] += 1
        self.in_system[cls] += 1
        self._enqueue(DOCTOR, p, t)

    def _enqueue(self, s: int, p: Patient, t: float) -> None:
        p.tq[s] = t
        if len(self.in_service[s]) < self._m[s]:
            self._start_service(s, p, t)
        elif s == DOCTOR and p.cls != OUTPATIENT:
            self.queue_hp.append(p)
        else:
            self.queue_op[s].append(p)

    def _start_service(self, s: int, p: Patient, t: float) -> None:
        if p.cls == OUTPATIENT:
            dur = self._svc[s].sample(p.rng)
        else:
            dur = self._hp_svc[p.cls].sample(
                self.kernel.streams.get(f"service:doctor:{CLASS_NAMES[p.cls]}"))
        p.ts[s] = t
        if self.recording and p.cls == OUTPATIENT and p.arrival >= self.warmup_end:
            self.wait_sum[s] += t - p.tq[s]
            self.wait_n[s] += 1
        self.in_service[s].append((p, t))
        self.kernel.schedule(t + dur, EV_COMPLETE, s, p)

    def _complete(self, s: int, p: Patient, t: float) -> None:
        p.te[s] = t
        serving = self.in_service[s]
        for i, (q, start) in enumerate(serving):
            if q is p:
                del serving[i]
                if self.recording and t > self.warmup_end:
                    self.busy_time[s] += t - (start if start > self.warmup_end else self.warmup_end)
                break
        # next in line: higher-priority band first at the doctor
        if s == DOCTOR and self.queue_hp:
            self._start_service(s, self.queue_hp.pop(0), t)
        elif self.queue_op[s]:
            self._start_service(s, self.queue_op[s].pop(0), t)
        # route onward
        if s == NCD:
            self._enqueue(DOCTOR, p, t)
        elif s == DOCTOR:
            if p.cls != OUTPATIENT:
                p.exit = t  # to ward / labor room, outside outpatient scope
                self.exits[p.cls] += 1
                self.in_system[p.cls] -= 1
            elif p.needs_lab:
                self._enqueue(LAB, p, t)
            else:
                self._enqueue(PHARMACY, p, t)
        elif s == LAB:
            self._enqueue(PHARMACY, p, t)
        else:
            p.exit = t
            self.exits[OUTPATIENT] += 1
            self.in_system[OUTPATIENT] -= 1
            if self.recording and p.arrival >= self.warmup_end:
                self.los_sum += t - p.arrival
                self.los_n += 1
                if self.exit_hook is not None:
                    self.exit_hook(p)

    # -- observation --------------------------------------------------------

    def observe(self, t: float) -> list:
        """System state at t: one :class:`SubsystemState` per station."""
        out = []
        for s in range(4):
            q_op = len(self.queue_op[s])
            if s == DOCTOR:
                q_ip = sum(1 for p in self.queue_hp if p.cls == INPATIENT)
                q_cb = len(self.queue_hp) - q_ip
            else:
                q_ip = q_cb = 0
            elapsed = tuple(t - start for _p, start in self.in_service[s])
            out.append(SubsystemState(s, q_op, q_ip, q_cb, elapsed, t))
        return out

    # -- outcome accessors ---------------------------------------------------

    def utilization(self, station: int, scheduled_minutes: float) -> float:
        if scheduled_minutes <= 0:
            raise ValueError("zero scheduled time")
        return self.busy_time[station] / scheduled_minutes

    def mean_wait(self, station: int) -> float:
        return self.wait_sum[station] / self.wait_n[station] if self.wait_n[station] else 0.0

    def mean_los(self) -> float:
        return self.los_sum / self.los_n if self.los_n else 0.0

    # -- snapshot / restore ----------------------------------------------------

    def snapshot(self) -> dict:
        """Value-semantics copy of the full facility state.

        Patients are copied, so a clone restored from this snapshot can
        be safely run forward without mutating the originals.
        """
        copies: dict[int, Patient] = {}

        def cp(p: Patient) -> Patient:
            c = copies.get(id(p))
            if c is None:
                c = p.copy()
                copies[id(p)] = c
            return c

        heap = []
        for ev in self.kernel._heap:
            if ev[2] == EV_COMPLETE:
                heap.append((ev[0], ev[1], ev[2], ev[3], cp(ev[4])))
            elif ev[2] == EV_OP_ARRIVAL:
                heap.append((ev[0], ev[1], ev[2], cp(ev[3]), ev[4]))
            else:
                heap.append(ev)
        return {
            "clock": self.kernel.clock,
            "seq": self.kernel._seq,
            "heap": heap,
            "streams": self.kernel.streams.snapshot(),
            "queue_op": [[cp(p) for p in q] for q in self.queue_op],
            "queue_hp": [cp(p) for p in self.queue_hp],
            "in_service": [[(cp(p), st) for p, st in lst] for lst in self.in_service],
            "hp_pid": self._hp_pid,
            "stop_arrivals_at": self.stop_arrivals_at,
            "in_system": list(self.in_system),
            "arrivals": list(self.arrivals),
            "exits": list(self.exits),
            "busy_time": list(self.busy_time),
            "wait_sum": list(self.wait_sum),
            "wait_n": list(self.wait_n),
            "los_sum": self.los_sum,
            "los_n": self.los_n,
        }

    def restore(self, snap: dict) -> None:
        self.kernel.clock = snap["clock"]
        self.kernel._seq = snap["seq"]
        self.kernel._heap = list(snap["heap"])
        self.kernel.streams.restore(snap["streams"])
        self.queue_op = [list(q) for q in snap["queue_op"]]
        self.queue_hp = list(snap["queue_hp"])
        self.in_service = [list(lst) for lst in snap["in_service"]]
        self._hp_pid = snap["hp_pid"]
        self.stop_arrivals_at = snap["stop_arrivals_at"]
        self.in_system = list(snap["in_system"])

    def clone_from(self, snap: dict) -> "PhcFacility":
        """Build an independent facility clone from a snapshot."""
        clone = PhcFacility.__new__(PhcFacility)
        clone.config = self.config
        clone.kernel = SimKernel(RngStreams(self.kernel.streams.master_seed))
        clone.trace = None
        clone.recording = False
        clone.warmup_end = 0.0
        clone._m = self._m
        clone._svc = self._svc
        clone._svc_mean = self._svc_mean
        clone._hp_svc = self._hp_svc
        clone._hp_iat = self._hp_iat
        clone.busy_time = [0.0] * 4
        clone.wait_sum = [0.0] * 4
        clone.wait_n = [0] * 4
        clone.los_sum = 0.0
        clone.los_n = 0
        clone.arrivals = [0, 0, 0]
        clone.exits = [0, 0, 0]
        clone.exit_hook = None
        clone.restore(snap)
        return clone


PATIENT_CSV_HEADER = (
    "pid,class,age_ge30,origin,preferred,visited,decision_min,arrival_min,"
    "ncd_queued,ncd_start,ncd_end,doctor_queued,doctor_start,doctor_end,"
    "lab_queued,lab_start,lab_end,pharmacy_queued,pharmacy_start,pharmacy_end,"
    "exit_min,los_min"
)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.6f}"


def patient_csv_row(p: Patient) -> str:
    cols = [str(p.pid), CLASS_NAMES[p.cls], str(int(p.age_ge30)), p.origin,
            p.preferred, p.visited, _fmt(p.decision_time), _fmt(p.arrival)]
    for s in range(4):
        cols += [_fmt(p.tq[s]), _fmt(p.ts[s]), _fmt(p.te[s])]
    cols += [_fmt(p.exit), _fmt(p.exit - p.arrival)]
    return ",".join(cols)
