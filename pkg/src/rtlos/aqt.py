"""Analytical queueing-theoretic real-time length-of-stay predictor.

Predicts the expected LOS of an outpatient arriving ``delta`` minutes
from now, from the facility state observed now.  The chain is:

* a piecewise remaining-service-time estimator built on three quantile
  bands of the service distribution (median, 75th, extreme);
* an M/G/m state extrapolation from t to t+delta (expected arrivals,
  service completions, queue length, elapsed/remaining service);
* per-station predictors: NCD nurse, doctor (multi-class queue with
  non-preemptive priority and a geometric-series correction for future
  higher-priority arrivals), laboratory, pharmacy, each anchored at the
  instant the patient is expected to reach that station;
* an age/routing-weighted combination into the total LOS.

An exact conditional-expectation oracle (numerical quadrature of the
remaining-time density) is provided for testing the piecewise bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

from scipy.integrate import quad

from .distributions import ServiceDistribution
from .facility import DOCTOR, LAB, NCD, PHARMACY, FacilityConfig, SubsystemState

__all__ = [
    "band_anchors", "remaining_service_time", "remaining_service_time_exact",
    "expected_arrivals", "expected_completions", "extrapolated_elapsed",
    "extrapolate_mgm", "predict_los_ncd", "predict_los_doctor",
    "predict_los_lab", "predict_los_pharmacy", "total_los",
    "ExtrapolatedState", "DoctorPrediction", "LosPrediction", "AqtPredictor",
    "geometric_priority_delay", "UnsupportedDistribution",
]

_EPS = 1e-9


class UnsupportedDistribution(ValueError):
    """The piecewise estimator needs a bounded or bell-shaped service law."""


def _floor(v: float) -> int:
    # Floors of ratios of expectations; the epsilon absorbs float jitter
    # so exact-looking ratios like 1.74/0.87 floor to 2, not 1.
    return math.floor(v + _EPS)


def band_anchors(dist: ServiceDistribution) -> tuple[float, float, float]:
    """(median, 75th, extreme) quantile anchors for the piecewise bands."""
    if dist.kind == "uniform":
        a, b = dist.p1, dist.p2
        return (a + b) / 2.0, (a + 3.0 * b) / 4.0, b
    if dist.kind == "gaussian":
        mu, sigma = dist.p1, dist.p2
        return mu, mu + 0.675 * sigma, mu + 3.0 * sigma
    raise UnsupportedDistribution(f"no quantile bands for {dist.kind!r}")


def remaining_service_time(dist: ServiceDistribution, x: float) -> float:
    """Piecewise expected remaining service time given elapsed time x.

    Clamped to 0 past the extreme quantile.  An idle server is handled
    by the callers (no in-service entity, so no remaining time), not
    here: x = 0 means a service that just started.
    """
    if x < 0:
        raise ValueError(f"elapsed time must be >= 0, got {x}")
    q50, q75, ext = band_anchors(dist)
    if x < q50:
        return q50 - x
    if x < q75:
        return q75 - x
    if x <= ext:
        return (ext - x) / 2.0
    return 0.0


def remaining_service_time_exact(dist: ServiceDistribution, x: float) -> float:
    """E[remaining | elapsed = x] by quadrature of the conditional density.

    Test oracle for the piecewise estimator; not used in predictions.
    """
    if dist.kind == "exp":
        return dist.p1  # memoryless
    upper = dist.support_upper()
    if x >= upper:
        return 0.0
    tail = 1.0 - dist.cdf(x)
    if tail <= 0.0:
        return 0.0
    val, _err = quad(lambda v: v * dist.pdf(x + v), 0.0, upper - x, limit=200)
    return val / tail


# -- state extrapolation pieces -------------------------------------------

def expected_arrivals(delta: float, lam: float) -> float:
    """A_delta = max(delta/lam - 1, 0); lam is the mean interarrival time.

    One arrival is subtracted for the patient whose LOS is being
    predicted.
    """
    return max(delta / lam - 1.0, 0.0)


def expected_completions(queue_len: float, a_delta: float,
                         horizon_minus_w: float, ex: float, m: int) -> float:
    """Expected services finished in the horizon, capped by queue + half
    the new arrivals."""
    per_server = max(_floor(horizon_minus_w / ex), 0)
    return min(queue_len + a_delta / 2.0, m * per_server)


def extrapolated_elapsed(delta: float, w_t: float, x_t: float, ex: float) -> float:
    """Elapsed service time of the in-service entity at t+delta.

    While the current service is still running (delta <= its remaining
    time) the elapsed time just grows; afterwards the server cycles
    through mean-length services and the elapsed time is the modular
    remainder.
    """
    if delta <= w_t:
        return x_t + delta
    return math.fmod(abs(delta - w_t), ex)


@dataclass(frozen=True)
class ExtrapolatedState:
    """Expected station state at the patient's arrival instant."""

    queue_len: float
    elapsed: float
    remaining: float          # w(x) at the arrival instant
    delay: float
    los: float
    remaining_at_t: float = 0.0
    arrivals: float = 0.0

    @classmethod
    def zero(cls, ex: float = 0.0) -> "ExtrapolatedState":
        return cls(0.0, 0.0, 0.0, 0.0, ex)


def _station_remaining(dist: ServiceDistribution, elapsed: Sequence[float],
                       m: int, horizon: float) -> tuple[float, float, float]:
    """(net w at t, net w at t+horizon, elapsed at t+horizon).

    The net remaining time of a workstation is the minimum over its
    servers.  A free server can start an arrival immediately, so any
    idle server pins both values to 0.
    """
    if len(elapsed) < m:
        return 0.0, 0.0, 0.0
    ex = dist.mean()
    w_now = [remaining_service_time(dist, x) for x in elapsed]
    pairs = []
    for x, w in zip(elapsed, w_now):
        x_h = extrapolated_elapsed(horizon, w, x, ex)
        pairs.append((remaining_service_time(dist, x_h), x_h))
    w_h, x_best = min(pairs)
    return min(w_now), w_h, x_best


def extrapolate_mgm(state: SubsystemState, delta: float, lam: float,
                    dist: ServiceDistribution, m: int = 1) -> ExtrapolatedState:
    """M/G/m state extrapolation from t to t+delta for one station.

    ``lam`` is the station's mean interarrival time in minutes.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if lam <= 0:
        raise ValueError(f"mean interarrival must be > 0, got {lam}")
    ex = dist.mean()
    lq = state.queue_len_outpatient
    w_t, w_h, x_h = _station_remaining(dist, state.elapsed_service, m, delta)
    a = expected_arrivals(delta, lam)
    n = expected_completions(lq, a, delta - w_t, ex, m)
    lq_new = max(lq + a - n, 0.0)
    delay = lq_new * ex + w_h
    return ExtrapolatedState(lq_new, x_h, w_h, delay, delay + ex,
                             remaining_at_t=w_t, arrivals=a)


# -- per-station predictors --------------------------------------------------


def predict_los_ncd(state_n: SubsystemState, delta: float, lambda_o: float,
                    p_n: float, dist_n: ServiceDistribution,
                    m: int = 1) -> ExtrapolatedState:
    """LOS at the NCD nurse for a patient arriving delta minutes from now.

    The nurse sees the age-30-plus fraction p_n of outpatient arrivals,
    so her stream runs at mean interarrival lambda_o / p_n.
    """
    if p_n <= 0.0:
        return ExtrapolatedState.zero(0.0)
    return extrapolate_mgm(state_n, delta, lambda_o / p_n, dist_n, m)


def geometric_priority_delay(d_naive: float, lambda_h: float, mu_h: float) -> float:
    """Total delay after the geometric cascade of higher-priority arrivals.

    Each unit of waiting admits mu_h/lambda_h expected minutes of new
    higher-priority work, so the naive delay is scaled by the closed
    form of the geometric series.  Requires mu_h < lambda_h.
    """
    if mu_h >= lambda_h:
        raise ValueError("priority load unstable: mu_h >= lambda_h")
    return d_naive * lambda_h / (lambda_h - mu_h)


@dataclass(frozen=True)
class DoctorPrediction:
    """Doctor-station prediction with its intermediate quantities."""

    arrivals_op: float
    arrivals_ip: float
    arrivals_cbp: float
    mu_h: float
    lambda_h: float
    n_hp: float
    n_op: float
    delay_hp: float
    delay_op: float
    delay_naive: float
    delay: float
    los: float
    remaining: float
    stable: bool


def predict_los_doctor(state_d: SubsystemState, delta: float, l_n: float,
                       visited_ncd: bool, ncd_state: Optional[SubsystemState],
                       config: FacilityConfig,
                       m: int = 1) -> DoctorPrediction:
    """LOS at the doctor for an outpatient reaching the queue at
    t + delta + l_n.

    Inpatients and childbirth patients jump the queue without preempting
    service; on top of the naive two-band delay, higher-priority
    patients arriving while the outpatient waits extend the delay by a
    geometric series.  When the higher-priority load is unstable the
    naive delay is returned with ``stable=False``.
    """
    lam_o = config.predictor_lambda()
    p_n = config.p_age_ge30
    lam_ip = config.interarrival_inpatient.mean()
    lam_cbp = config.interarrival_childbirth.mean()
    dist_o = config.station_service(DOCTOR)
    ex_o = dist_o.mean()
    dist_n = config.station_service(NCD)
    ex_n = dist_n.mean()
    mu_ip = config.station_service(DOCTOR, 1).mean()
    mu_cbp = config.station_service(DOCTOR, 2).mean()

    horizon = delta + l_n
    # direct-to-doctor outpatient stream, thinned to the under-30 share;
    # patients screened by the nurse feed in via her completion count,
    # capped by the patients the nurse can actually have on hand
    direct = horizon * (1.0 - p_n) / lam_o
    if visited_ncd and ncd_state is not None:
        w_t_n = _station_remaining(dist_n, ncd_state.elapsed_service,
                                   config.servers[NCD], 0.0)[0]
        on_hand = (ncd_state.queue_total + len(ncd_state.elapsed_service)
                   + horizon * p_n / lam_o)
        ncd_feed = min(max(_floor((horizon - w_t_n) / ex_n), 0), on_hand)
    else:
        ncd_feed = 0.0
    a_op = max(direct + ncd_feed - 1.0, 0.0)
    a_ip = horizon / lam_ip
    a_cbp = horizon / lam_cbp

    rate_h = 1.0 / lam_ip + 1.0 / lam_cbp
    lambda_h = 1.0 / rate_h
    mu_h = (mu_ip / lam_ip + mu_cbp / lam_cbp) / rate_h

    w_t_o, w_h, _x = _station_remaining(dist_o, state_d.elapsed_service, m, horizon)
    n_hp = max(state_d.queue_len_inpatient + state_d.queue_len_childbirth
               + a_ip + a_cbp - max(_floor((horizon - w_t_o) / mu_h), 0), 0.0)
    n_op = state_d.queue_len_outpatient + a_op
    d_hp = n_hp * mu_h + w_h
    d_op = n_op * ex_o
    d_naive = d_hp + d_op
    stable = mu_h < lambda_h
    d_total = geometric_priority_delay(d_naive, lambda_h, mu_h) if stable else d_naive
    return DoctorPrediction(a_op, a_ip, a_cbp, mu_h, lambda_h, n_hp, n_op,
                            d_hp, d_op, d_naive, d_total, d_total + ex_o,
                            w_h, stable)


def predict_los_lab(state_l: SubsystemState, delta: float, l_n: float,
                    l_o: float, n_op_doctor: float, config: FacilityConfig,
                    m: int = 1) -> ExtrapolatedState:
    """LOS at the laboratory at t + delta + l_n + l_o.

    Arrivals are doctor-queue outpatients who finish consultation within
    the doctor-stage LOS and draw a lab visit.
    """
    dist_l = config.station_service(LAB)
    ex_l = dist_l.mean()
    ex_o = config.station_service(DOCTOR).mean()
    horizon = delta + l_n + l_o
    w_t_l, w_h, x_h = _station_remaining(dist_l, state_l.elapsed_service, m, horizon)
    a_l = min(config.lab_visit_prob * n_op_doctor, _floor(l_o / ex_o))
    served = max(_floor((horizon - w_t_l) / ex_l), 0)
    n_l = max(state_l.queue_len_outpatient + a_l - served, 0.0)
    delay = n_l * ex_l + w_h
    return ExtrapolatedState(n_l, x_h, w_h, delay, delay + ex_l,
                             remaining_at_t=w_t_l, arrivals=a_l)


def predict_los_pharmacy(state_p: SubsystemState, delta: float, l_n: float,
                         l_o: float, l_l: float, n_op_doctor: float,
                         n_lab_queue: float, config: FacilityConfig,
                         m: int = 1) -> ExtrapolatedState:
    """LOS at the pharmacy at t + delta + l_n + l_o + l_l.

    Every outpatient exits through the pharmacy, so upstream doctor and
    laboratory throughput both feed its queue.
    """
    dist_p = config.station_service(PHARMACY)
    ex_p = dist_p.mean()
    ex_o = config.station_service(DOCTOR).mean()
    ex_l = config.station_service(LAB).mean()
    horizon = delta + l_n + l_o + l_l
    w_t_p, w_h, x_h = _station_remaining(dist_p, state_p.elapsed_service, m, horizon)
    a_p = min(n_op_doctor + n_lab_queue,
              _floor(l_o / ex_o) + _floor(l_l / ex_l))
    served = max(_floor((horizon - w_t_p) / ex_p), 0)
    n_p = max(state_p.queue_len_outpatient + a_p - served, 0.0)
    delay = n_p * ex_p + w_h
    return ExtrapolatedState(n_p, x_h, w_h, delay, delay + ex_p,
                             remaining_at_t=w_t_p, arrivals=a_p)


# -- total -------------------------------------------------------------------


@dataclass(frozen=True)
class LosPrediction:
    """Per-subsystem expected LOS, weights, and their weighted total."""

    l_n: float
    l_d: float
    l_l: float
    l_p: float
    weights: tuple[float, float, float, float]
    total: float
    stable: bool = True

    def subsystem(self, station: int) -> float:
        return (self.l_n, self.l_d, self.l_l, self.l_p)[station]


def total_los(age_ge30: bool, l_n: float, l_d: float, l_l: float, l_p: float,
              lab_prob: float = 0.5, stable: bool = True) -> LosPrediction:
    """Weighted combination: nurse by age band, laboratory by visit
    probability, doctor and pharmacy always."""
    w_n = 1.0 if age_ge30 else 0.0
    if not age_ge30:
        l_n = 0.0
    weights = (w_n, 1.0, lab_prob, 1.0)
    total = w_n * l_n + l_d + lab_prob * l_l + l_p
    return LosPrediction(l_n, l_d, l_l, l_p, weights, total, stable)


_DEBUG_HEADER = ("facility,t,delta,age_ge30,l_n,a_op,a_ip,a_cbp,mu_h,lambda_h,"
                 "n_hp,n_op,d_hp,d_op,d_naive,d_doctor,l_d,a_lab,n_lab,l_l,"
                 "a_phar,n_phar,l_p,total,stable\n")


class AqtPredictor:
    """Callable facade used by the assignment layer.

    ``debug`` (a text stream) dumps every intermediate quantity per
    prediction as a CSV row.
    """

    name = "aqt"

    def __init__(self, debug: Optional[TextIO] = None):
        self.debug = debug
        if debug is not None:
            debug.write(_DEBUG_HEADER)

    def predict(self, config: FacilityConfig, observation: list,
                delta: float, age_ge30: bool) -> LosPrediction:
        p_n = config.p_age_ge30
        obs_n = observation[NCD]

        if age_ge30 and p_n > 0.0:
            ncd = predict_los_ncd(obs_n, delta, config.predictor_lambda(),
                                  p_n, config.station_service(NCD),
                                  config.servers[NCD])
            l_n = ncd.los
        else:
            l_n = 0.0

        doc = predict_los_doctor(observation[DOCTOR], delta, l_n, age_ge30,
                                 obs_n, config, config.servers[DOCTOR])
        lab = predict_los_lab(observation[LAB], delta, l_n, doc.los,
                              doc.n_op, config, config.servers[LAB])
        phar = predict_los_pharmacy(observation[PHARMACY], delta, l_n,
                                    doc.los, lab.los, doc.n_op,
                                    observation[LAB].queue_len_outpatient,
                                    config, config.servers[PHARMACY])
        pred = total_los(age_ge30, l_n, doc.los, lab.los, phar.los,
                         config.lab_visit_prob, doc.stable)
        if self.debug is not None:
            row = [config.fid, f"{observation[DOCTOR].observed_at:.4f}",
                   f"{delta:g}", str(int(age_ge30))]
            row += [f"{v:.6f}" for v in (
                l_n, doc.arrivals_op, doc.arrivals_ip, doc.arrivals_cbp,
                doc.mu_h, doc.lambda_h, doc.n_hp, doc.n_op, doc.delay_hp,
                doc.delay_op, doc.delay_naive, doc.delay, doc.los,
                lab.arrivals, lab.queue_len, lab.los, phar.arrivals,
                phar.queue_len, phar.los, pred.total)]
            row.append(str(int(pred.stable)))
            self.debug.write(",".join(row) + "\n")
        return pred
