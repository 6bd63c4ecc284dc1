"""Measurement sets: injection pseudo-measurements, voltage meters, scenarios."""

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import PlacementError, TimeseriesError
from .grid import PHASE_NAMES
from .powerflow import solve_nonlinear

FORMAT_VERSION = 1


@dataclass(frozen=True)
class NoisePolicy:
    """Noise drawn on the synthetic measurements.

    ``sigma_mag`` is relative noise on voltage magnitudes and ``sigma_rel``
    relative noise on load injections.  ``weight_mag`` / ``weight_rel``, when
    given, set the standard deviations the estimator is told about (so a
    noiseless run can still carry finite weights).
    """

    sigma_mag: float = 0.01
    sigma_rel: float = 0.5
    weight_mag: float = None
    weight_rel: float = None
    p_floor: float = 1e-4
    sigma_basis: str = "measured"  # "measured" |p_hat|, "true" |p_true|, "nominal" |p_nom|

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, weight_mag=0.01, weight_rel=0.5)

    @property
    def channel_mag(self):
        return self.sigma_mag if self.weight_mag is None else self.weight_mag

    @property
    def channel_rel(self):
        return self.sigma_rel if self.weight_rel is None else self.weight_rel


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Measured values over a feeder's state index.

    Injection arrays have one entry per state entry; ``p_mask``/``q_mask``
    mark entries that carry a pseudo-measurement channel.  ``meters`` holds
    state positions with a squared-magnitude measurement ``v_hat``.
    """

    state_index: tuple
    p_hat: np.ndarray
    q_hat: np.ndarray
    sigma_p: np.ndarray
    sigma_q: np.ndarray
    p_mask: np.ndarray
    q_mask: np.ndarray
    meters: np.ndarray
    v_hat: np.ndarray
    sigma_v: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray

    def __post_init__(self):
        for name, mask in (("sigma_p", self.p_mask), ("sigma_q", self.q_mask)):
            if np.any(~(getattr(self, name)[mask] > 0)):
                raise ValueError(f"{name} must be positive on measured channels")
        if np.any(~(self.sigma_v > 0)):
            raise ValueError("sigma_v must be positive")
        if len(self.meters) != len(self.v_hat) or len(self.meters) != len(self.sigma_v):
            raise ValueError("meter arrays disagree in length")

    @property
    def n(self):
        return len(self.state_index)

    @property
    def w_p(self):
        return np.where(self.p_mask, 1.0 / np.where(self.p_mask, self.sigma_p, 1.0) ** 2, 0.0)

    @property
    def w_q(self):
        return np.where(self.q_mask, 1.0 / np.where(self.q_mask, self.sigma_q, 1.0) ** 2, 0.0)

    @property
    def w_v(self):
        return 1.0 / self.sigma_v ** 2

    @property
    def lo(self):
        return np.concatenate([self.p_lo, self.q_lo])

    @property
    def hi(self):
        return np.concatenate([self.p_hi, self.q_hi])

    def project(self, z):
        return np.clip(z, self.lo, self.hi)

    def with_box(self, p_lo=None, p_hi=None, q_lo=None, q_hi=None):
        return replace(self, p_lo=self.p_lo if p_lo is None else np.asarray(p_lo, float),
                       p_hi=self.p_hi if p_hi is None else np.asarray(p_hi, float),
                       q_lo=self.q_lo if q_lo is None else np.asarray(q_lo, float),
                       q_hi=self.q_hi if q_hi is None else np.asarray(q_hi, float))

    def to_dict(self):
        d = {"format_version": FORMAT_VERSION,
             "state_index": [[nid, PHASE_NAMES[ph]] for nid, ph in self.state_index]}
        for name in ("p_hat", "q_hat", "sigma_p", "sigma_q", "v_hat", "sigma_v",
                     "p_lo", "p_hi", "q_lo", "q_hi"):
            d[name] = [float(x) for x in getattr(self, name)]
        d["p_mask"] = [bool(x) for x in self.p_mask]
        d["q_mask"] = [bool(x) for x in self.q_mask]
        d["meters"] = [int(x) for x in self.meters]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {d.get('format_version')!r}")
        idx = tuple((nid, PHASE_NAMES.index(ph)) for nid, ph in d["state_index"])
        arr = {k: np.asarray(d[k], dtype=float) for k in
               ("p_hat", "q_hat", "sigma_p", "sigma_q", "v_hat", "sigma_v",
                "p_lo", "p_hi", "q_lo", "q_hi")}
        return cls(idx, p_mask=np.asarray(d["p_mask"], bool), q_mask=np.asarray(d["q_mask"], bool),
                   meters=np.asarray(d["meters"], dtype=np.int64), **arr)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def meter_entries(model, placement, rng=None, candidates=None):
    """State positions of voltage meters.

    ``placement`` is a fraction of candidate nodes (chosen with ``rng``), a
    list of node ids (every phase metered) or of ``(node_id, phase)`` pairs.
    """
    if placement is None:
        return np.zeros(0, dtype=np.int64)
    if isinstance(placement, (float, np.floating)):
        if not 0.0 <= placement <= 1.0:
            raise PlacementError("meter fraction must lie in [0, 1]")
        pool = sorted(candidates) if candidates is not None else model.ids[1:]
        pool = [i for i in pool if i != model.slack_id]
        count = max(1, int(round(placement * len(pool)))) if placement > 0 else 0
        rng = np.random.default_rng(rng)
        chosen = sorted(int(pool[k]) for k in rng.choice(len(pool), size=count, replace=False))
        return model.entries_of(chosen)
    out = []
    for item in placement:
        if isinstance(item, tuple):
            nid, ph = item
            ph = PHASE_NAMES.index(ph) if isinstance(ph, str) else int(ph)
            if nid not in model.pos or ph not in model.node(nid).phases:
                raise PlacementError(f"node {nid} has no phase {PHASE_NAMES[ph]}")
            out.append(model.entry(nid, ph))
        else:
            if item not in model.pos or item == model.slack_id:
                raise PlacementError(f"cannot meter node {item}")
            out.extend(model.entries_of([item]).tolist())
    return np.array(sorted(set(out)), dtype=np.int64)


def synthesize(model, p_true, q_true, noise=NoisePolicy(), placement=None, seed=None,
               truth=None, meters=None):
    """Noisy measurements of a true operating point.

    Voltage meters read the nonlinear power flow at the truth with
    multiplicative magnitude noise; every load entry gets a pseudo-measurement
    ``p_true * (1 + eta)``.  Channel deviations are relative to the
    injection named by ``noise.sigma_basis`` (measured by default, floored at
    ``noise.p_floor``); voltage channels use
    ``2 * sigma_mag * v_hat``.  ``truth`` may pass a precomputed power flow.
    """
    rng = np.random.default_rng(seed)
    p_true = np.asarray(p_true, dtype=float)
    q_true = np.asarray(q_true, dtype=float)
    if meters is None:
        meters = meter_entries(model, placement, rng)
    meters = np.asarray(meters, dtype=np.int64)
    load = np.asarray(model.is_load)
    n = model.n_state
    eta_p = rng.standard_normal(n)
    eta_q = rng.standard_normal(n)
    eta_v = rng.standard_normal(len(meters))
    p_hat = np.where(load, p_true * (1.0 + noise.sigma_rel * eta_p), 0.0)
    q_hat = np.where(load, q_true * (1.0 + noise.sigma_rel * eta_q), 0.0)
    if noise.sigma_basis == "true":
        base_p, base_q = p_true, q_true
    elif noise.sigma_basis == "measured":
        base_p, base_q = p_hat, q_hat
    elif noise.sigma_basis == "nominal":
        base_p, base_q = model.p_nom, model.q_nom
    else:
        raise ValueError(f"unknown sigma_basis {noise.sigma_basis!r}")
    sig_p = np.where(load, noise.channel_rel * np.maximum(np.abs(base_p), noise.p_floor), 1.0)
    sig_q = np.where(load, noise.channel_rel * np.maximum(np.abs(base_q), noise.p_floor), 1.0)
    if truth is None and len(meters):
        truth = solve_nonlinear(model, p_true, q_true)
    if len(meters):
        vmag = np.abs(truth.V[meters]) * (1.0 + noise.sigma_mag * eta_v)
        v_hat = vmag ** 2
    else:
        v_hat = np.zeros(0)
    sig_v = 2.0 * noise.channel_mag * v_hat
    return MeasurementSet(model.state_index, p_hat, q_hat, sig_p, sig_q, load.copy(), load.copy(),
                          meters, v_hat, sig_v, np.array(model.p_min), np.array(model.p_max),
                          np.array(model.q_min), np.array(model.q_max))


def from_readings(model, p_true, q_true, readings, noise=NoisePolicy(), seed=None):
    """Measurement set using recorded meter magnitudes; pseudo values synthesized."""
    meters = np.array(sorted(readings), dtype=np.int64)
    ms = synthesize(model, p_true, q_true, noise, seed=seed, meters=np.zeros(0, np.int64))
    vmag = np.array([readings[k] for k in meters], dtype=float)
    v_hat = vmag ** 2
    return replace(ms, meters=meters, v_hat=v_hat, sigma_v=2.0 * noise.channel_mag * v_hat)


# --------------------------------------------------------------------------
# time series


@dataclass
class Scenario:
    """One tick: true injections and, optionally, recorded meter magnitudes."""

    t: int
    p_true: np.ndarray
    q_true: np.ndarray
    readings: dict = field(default_factory=dict)
    rng_seed: int = 0
    measurement: MeasurementSet = None

    def materialize(self, model, noise=NoisePolicy(), placement=None, meters=None):
        """Measurement set for this tick (cached)."""
        if self.measurement is None:
            if self.readings:
                self.measurement = from_readings(model, self.p_true, self.q_true, self.readings,
                                                 noise, seed=self.rng_seed)
            else:
                self.measurement = synthesize(model, self.p_true, self.q_true, noise, placement,
                                              seed=self.rng_seed, meters=meters)
        return self.measurement


def delta1_empirical(scenarios):
    """Largest change of the true state between consecutive ticks.

    Plain 2-norm in physical units; the tracking bound uses the squared
    drift of the optima in the scaled metric instead.
    """
    best = 0.0
    for a, b in zip(scenarios[:-1], scenarios[1:]):
        d = np.sqrt(np.sum((b.p_true - a.p_true) ** 2) + np.sum((b.q_true - a.q_true) ** 2))
        best = max(best, float(d))
    return best


def diurnal_profile(model, ticks, seed=0, start_hour=6.0, span_hours=12.0, jitter=0.02,
                    walk=0.002):
    """Synthetic one-second load series built on the nominal loads.

    A shared daily shape (morning ramp, midday dip from behind-the-meter PV,
    afternoon peak) times a per-node random walk around 1, plus white jitter.
    Multipliers stay within [0.2, 1.3].
    """
    rng = np.random.default_rng(seed)
    n = model.n_state
    hours = start_hour + np.arange(ticks) * (span_hours * 3600.0 / max(ticks, 1)) / 3600.0
    shape = (0.55 + 0.25 * np.sin((hours - 6.0) / 12.0 * np.pi)
             - 0.15 * np.exp(-((hours - 12.5) / 1.5) ** 2)
             + 0.3 * np.exp(-((hours - 17.0) / 1.2) ** 2))
    node_w = np.ones(n)
    out = []
    base_seed = int(rng.integers(2 ** 31))
    for t in range(ticks):
        node_w = np.clip(node_w + walk * rng.standard_normal(n), 0.7, 1.3)
        mult = np.clip(shape[t] * node_w * (1.0 + jitter * rng.standard_normal(n)), 0.2, 1.3)
        out.append(Scenario(t, model.p_nom * mult, model.q_nom * mult, rng_seed=base_seed + t))
    return out


TS_COLS = ["tick", "node", "phase", "p", "q", "vmag"]


def save_timeseries(model, scenarios, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={FORMAT_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(TS_COLS)
        for sc in scenarios:
            for k, (nid, ph) in enumerate(model.state_index):
                vm = sc.readings.get(k)
                w.writerow([sc.t, nid, PHASE_NAMES[ph], repr(float(sc.p_true[k])),
                            repr(float(sc.q_true[k])), "" if vm is None else repr(float(vm))])


def load_timeseries(model, path, seed=0):
    """Scenarios from a time-series CSV (``tick,node,phase,p,q[,vmag]``)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"time series file not found: {path}")
    ticks = {}
    order = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            t = int(row["tick"])
            if t not in ticks:
                if order and t <= order[-1]:
                    raise TimeseriesError(f"tick {t} follows tick {order[-1]}")
                order.append(t)
                ticks[t] = (np.zeros(model.n_state), np.zeros(model.n_state), {})
            nid = int(row["node"])
            ph = PHASE_NAMES.index(row["phase"].strip().lower())
            if (nid not in model.pos or nid == model.slack_id
                    or ph not in model.node(nid).phases):
                raise TimeseriesError(f"unknown node/phase {nid}{row['phase']} at tick {t}")
            k = model.entry(nid, ph)
            p, q, rd = ticks[t]
            p[k] = float(row["p"])
            q[k] = float(row["q"])
            if row.get("vmag"):
                rd[k] = float(row["vmag"])
    return [Scenario(t, *ticks[t], rng_seed=seed + t) for t in order]
