"""DSO / AMS decomposition of the projected-gradient estimator.

Each area is a subtree.  Because every meter in area ``h`` shares the same
common slack path with every node of area ``k != h``, the coupling term of a
node in area ``k`` splits into an in-area sum (computed by that area's AMS)
and one scalar per phase, ``alpha_k^out`` / ``beta_k^out``, computed by the
DSO from per-area sums of weighted voltage residuals.

A round has five steps: (1) every AMS sends its residual sum, (2) the DSO
sends back the coupling scalars, (3) every AMS forms its in-area sums,
(4) all agents take a projected step, (5) every AMS sends its state slice
and the DSO runs the grid simulator.  That is ``3K`` messages per round.
"""

import hashlib
import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import PartitionError, ProtocolError
from .estimator import (EstimateState, LinearFeedback, estimate_constants, initial_state,
                        scale_vector, wls_objective)
from .sensitivity import OMEGA_POW

UP = "ams->dso"
DOWN = "dso->ams"


# --------------------------------------------------------------------------
# messages and transport


@dataclass(frozen=True)
class RoundMessage:
    direction: str
    round: int
    area: int
    kind: str  # "nu" | "coupling" | "state"
    payload: np.ndarray

    @property
    def nbytes(self):
        return int(self.payload.nbytes)

    def digest(self):
        data = np.ascontiguousarray(self.payload, dtype="<f8").tobytes()
        return hashlib.sha256(data).hexdigest()

    def record(self):
        return {"round": self.round, "direction": self.direction, "area": self.area,
                "kind": self.kind, "nbytes": self.nbytes, "digest": self.digest()}


class InProcessTransport:
    """Deterministic FIFO mailboxes keyed by (direction, area); logs every message."""

    def __init__(self):
        self.boxes = {}
        self.log = []

    def send(self, msg):
        self.boxes.setdefault((msg.direction, msg.area), deque()).append(msg)
        self.log.append(msg)

    def recv(self, direction, area, s, kind):
        box = self.boxes.get((direction, area))
        if not box:
            raise ProtocolError(f"no {kind} message from {direction} area {area} in round {s}")
        msg = box.popleft()
        if msg.round != s or msg.kind != kind:
            raise ProtocolError(f"expected {kind} for round {s}, got {msg.kind} for round {msg.round}")
        return msg


def export_log(log, path):
    with open(path, "w") as fh:
        for msg in log:
            fh.write(json.dumps(msg.record(), sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# agents


class GridSimulator:
    """Stands in for the physical feeder: holds the voltages of the last state."""

    def __init__(self, feedback):
        self.feedback = feedback
        self.v = None

    def run(self, z):
        self.v = np.asarray(self.feedback(z), dtype=float)
        return self.v

    def read(self, entries):
        return self.v[entries]


@dataclass
class AmsState:
    """Everything one area monitoring system knows and owns."""

    k: int
    root: int
    entries: np.ndarray  # state positions of the area, ascending
    root_entries: np.ndarray  # state positions of the root's phases
    phase_of: np.ndarray  # phase of each area entry
    meter_entries: np.ndarray  # metered state positions in the area
    meter_phase: np.ndarray
    v_hat: np.ndarray
    w_v: np.ndarray
    R_in: np.ndarray  # in-area meters x area entries
    X_in: np.ndarray
    p_hat: np.ndarray
    q_hat: np.ndarray
    w_p: np.ndarray
    w_q: np.ndarray
    lo: np.ndarray  # (2, n_area): p then q
    hi: np.ndarray
    scale: np.ndarray  # (2, n_area)
    eps: float
    p: np.ndarray
    q: np.ndarray
    sensor: GridSimulator
    nu: np.ndarray = None
    alpha_out: np.ndarray = None
    beta_out: np.ndarray = None

    def nu_sums(self):
        """Step 1: per-phase sums of weighted voltage residuals in the area."""
        v = self.sensor.read(self.meter_entries)
        self.nu = (v - self.v_hat) * self.w_v
        out = np.zeros(3)
        np.add.at(out, self.meter_phase, self.nu)
        return out

    def step(self):
        """Steps 3 and 4: in-area coupling plus the projected update."""
        a = self.nu @ self.R_in + self.alpha_out[self.phase_of]
        b = self.nu @ self.X_in + self.beta_out[self.phase_of]
        gp = a + self.w_p * (self.p - self.p_hat)
        gq = b + self.w_q * (self.q - self.q_hat)
        self.p = np.clip(self.p - self.eps * self.scale[0] ** 2 * gp, self.lo[0], self.hi[0])
        self.q = np.clip(self.q - self.eps * self.scale[1] ** 2 * gq, self.lo[1], self.hi[1])
        return np.concatenate([self.p, self.q])


@dataclass
class DsoState:
    """Inter-area data, the unclustered nodes and the grid simulator."""

    mode: str
    n: int
    K: int
    root_R: np.ndarray  # single-phase: (K, K) inter-root sensitivities
    root_X: np.ndarray
    root_Z: np.ndarray  # multi-phase: (K, K, 3, 3) conjugated common-path impedance
    root_phases: list  # phases at each root
    uncl_Z: np.ndarray  # (K, n_u, 3, 3) root vs unclustered node
    uncl_root_R: np.ndarray  # (K, n_u): single-phase root-to-unclustered
    uncl_root_X: np.ndarray
    uncl_entries: np.ndarray
    uncl_phase: np.ndarray
    uncl_node_slot: np.ndarray  # unclustered node slot of each unclustered entry
    meter_entries: np.ndarray  # unclustered meters
    v_hat: np.ndarray
    w_v: np.ndarray
    Rm_root: np.ndarray  # unclustered meters x root entries (per area, concatenated)
    Xm_root: np.ndarray
    Rm_uncl: np.ndarray  # unclustered meters x unclustered entries
    Xm_uncl: np.ndarray
    p_hat: np.ndarray
    q_hat: np.ndarray
    w_p: np.ndarray
    w_q: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    scale: np.ndarray
    eps: float
    p: np.ndarray
    q: np.ndarray
    simulator: GridSimulator
    area_entries: list
    nu: np.ndarray = None

    def assemble(self, slices):
        z = np.zeros(2 * self.n)
        n = self.n
        for ent, sl in zip(self.area_entries, slices):
            m = len(ent)
            z[ent] = sl[:m]
            z[n + ent] = sl[m:]
        z[self.uncl_entries] = self.p
        z[n + self.uncl_entries] = self.q
        return z


def decompose_alpha(ds, nu_sums, nu_uncl):
    """Coupling scalars for active power, single-phase.

    ``nu_sums[k-1]`` is the residual sum of area ``k``; ``nu_uncl`` holds the
    residuals of unclustered meters.  Returns ``(alpha_out, alpha_uncl)``:
    one scalar per area and one value per unclustered entry.
    """
    return _decompose_single(ds, nu_sums, nu_uncl, ds.root_R, ds.uncl_root_R, ds.Rm_root,
                             ds.Rm_uncl)


def decompose_beta(ds, nu_sums, nu_uncl):
    """Reactive-power mirror of :func:`decompose_alpha`."""
    return _decompose_single(ds, nu_sums, nu_uncl, ds.root_X, ds.uncl_root_X, ds.Xm_root,
                             ds.Xm_uncl)


def _decompose_single(ds, nu_sums, nu_uncl, root_M, uncl_root_M, Mm_root, Mm_uncl):
    S = np.asarray(nu_sums, dtype=float).reshape(-1)
    if len(S) != ds.K:
        raise ProtocolError(f"expected {ds.K} area reports, got {len(S)}")
    off = root_M * (1.0 - np.eye(ds.K))
    out = off.T @ S + nu_uncl @ Mm_root
    uncl = S @ uncl_root_M + nu_uncl @ Mm_uncl
    return out, uncl


def _omega_grid():
    d = np.arange(3)[:, None] - np.arange(3)[None, :]
    return OMEGA_POW[np.mod(d, 3)]  # [meter phase, target phase]


def decompose_multiphase(ds, nu_sums, nu_uncl):
    """Coupling terms for a multi-phase feeder.

    ``nu_sums`` has shape ``(K, 3)``: residual sums per area and meter phase.
    Returns ``(alpha_out, beta_out, alpha_uncl, beta_uncl)``; the area arrays
    are ``(K, 3)`` over target phases, the unclustered ones per entry.
    """
    S = np.asarray(nu_sums, dtype=float)
    if S.shape != (ds.K, 3):
        raise ProtocolError(f"expected residual sums of shape ({ds.K}, 3), got {S.shape}")
    W = _omega_grid()
    T = ds.root_Z * W  # (h, k, psi, phi)
    T = T * (1.0 - np.eye(ds.K))[:, :, None, None]
    c = np.einsum("hkpf,hp->kf", T, S)
    alpha_out = 2.0 * c.real + _scatter_roots(ds, nu_uncl @ ds.Rm_root)
    beta_out = -2.0 * c.imag + _scatter_roots(ds, nu_uncl @ ds.Xm_root)
    for k, ph in enumerate(ds.root_phases):
        missing = [f for f in range(3) if f not in ph]
        alpha_out[k, missing] = 0.0
        beta_out[k, missing] = 0.0
    cu = np.einsum("hupf,hp->uf", ds.uncl_Z * W, S)
    cu = cu[ds.uncl_node_slot, ds.uncl_phase]
    alpha_uncl = 2.0 * cu.real + nu_uncl @ ds.Rm_uncl
    beta_uncl = -2.0 * cu.imag + nu_uncl @ ds.Xm_uncl
    return alpha_out, beta_out, alpha_uncl, beta_uncl


def coupling_multiphase(ds, nu_sums, nu_uncl, target, phase, kind="p"):
    """One coupling scalar: area number ``target`` (int) or ``("u", entry)``."""
    a_out, b_out, a_u, b_u = decompose_multiphase(ds, nu_sums, nu_uncl)
    if isinstance(target, tuple):
        slot = int(np.flatnonzero(ds.uncl_entries == target[1])[0])
        return (a_u if kind == "p" else b_u)[slot]
    if phase not in ds.root_phases[target - 1]:
        raise ProtocolError(f"phase {phase} absent at the root of area {target}")
    return (a_out if kind == "p" else b_out)[target - 1, phase]


def _scatter_roots(ds, vec):
    """Values over concatenated root entries -> (K, 3) by area and phase."""
    out = np.zeros((ds.K, 3))
    col = 0
    for k, ph in enumerate(ds.root_phases):
        out[k, ph] = vec[col:col + len(ph)]
        col += len(ph)
    return out


def build_agents(model, sm, ms, part, feedback=None, eps="auto", scaling="pseudo",
                 constants=None):
    """DSO and AMS agents for a flat subtree partition.

    The step size is fixed up front from the global constants (or ``eps``).
    Nested partitions are rejected: an outer area would share different
    common paths with the two parts of an inner area.
    """
    if part.nested:
        raise PartitionError("the protocol needs a flat partition (no nested roots)")
    feedback = feedback or LinearFeedback(sm)
    cc = constants or estimate_constants(ms, sm, eps, scaling=scaling)
    step = cc.M / cc.L ** 2 if eps == "auto" else float(eps)
    n = ms.n
    sc = scale_vector(ms, scaling)
    z0 = initial_state(ms)
    sim = GridSimulator(feedback)
    sim.run(z0)
    meters = np.asarray(ms.meters)
    meter_node = model.state_pos[meters]
    entry_area = np.zeros(n, dtype=np.int64)
    for a in part.areas:
        entry_area[model.entries_of(a.nodes)] = a.k
    meter_area = entry_area[meters]
    R, X = sm.R, sm.X
    ams = []
    for a in part.areas:
        ent = np.flatnonzero(entry_area == a.k)
        mloc = np.flatnonzero(meter_area == a.k)
        me = meters[mloc]
        lo = ms.lo.reshape(2, n)[:, ent]
        hi = ms.hi.reshape(2, n)[:, ent]
        ams.append(AmsState(
            k=a.k, root=a.root, entries=ent, root_entries=model.entries_of([a.root]),
            phase_of=model.state_phase[ent], meter_entries=me,
            meter_phase=model.state_phase[me], v_hat=ms.v_hat[mloc], w_v=ms.w_v[mloc],
            R_in=R[np.ix_(me, ent)], X_in=X[np.ix_(me, ent)],
            p_hat=np.where(ms.p_mask, ms.p_hat, 0.0)[ent], q_hat=np.where(ms.q_mask, ms.q_hat, 0.0)[ent],
            w_p=ms.w_p[ent], w_q=ms.w_q[ent], lo=lo, hi=hi, scale=sc.reshape(2, n)[:, ent],
            eps=step, p=z0[ent].copy(), q=z0[n + ent].copy(), sensor=sim))
    K = len(ams)
    uent = np.flatnonzero(entry_area == 0)
    umloc = np.flatnonzero(meter_area == 0)
    um = meters[umloc]
    root_ent = [am.root_entries for am in ams]
    root_pos = [model.pos[am.root] for am in ams]
    root_phases = [list(model.node(am.root).phases) for am in ams]
    cols = np.concatenate(root_ent) if K else np.zeros(0, dtype=np.int64)
    single = model.is_single_phase
    if single:
        rr = np.array([[R[root_ent[h][0], root_ent[k][0]] for k in range(K)] for h in range(K)]).reshape(K, K)
        rx = np.array([[X[root_ent[h][0], root_ent[k][0]] for k in range(K)] for h in range(K)]).reshape(K, K)
        ur = R[np.ix_([e[0] for e in root_ent], uent)] if K else np.zeros((0, len(uent)))
        ux = X[np.ix_([e[0] for e in root_ent], uent)] if K else np.zeros((0, len(uent)))
    else:
        rr = rx = ur = ux = None
    cz = np.conj(sm.cum_z)
    rz = np.zeros((K, K, 3, 3), dtype=complex)
    for h in range(K):
        for k in range(K):
            rz[h, k] = cz[sm.lca[root_pos[h], root_pos[k]]]
    unodes = sorted({int(model.state_pos[e]) for e in uent})
    slot = {p: s for s, p in enumerate(unodes)}
    uz = np.zeros((K, len(unodes), 3, 3), dtype=complex)
    for h in range(K):
        for s, p in enumerate(unodes):
            uz[h, s] = cz[sm.lca[root_pos[h], p]]
    ds = DsoState(
        mode=sm.mode, n=n, K=K, root_R=rr, root_X=rx, root_Z=rz, root_phases=root_phases,
        uncl_Z=uz, uncl_root_R=ur, uncl_root_X=ux, uncl_entries=uent,
        uncl_phase=model.state_phase[uent],
        uncl_node_slot=np.array([slot[int(model.state_pos[e])] for e in uent], dtype=np.int64),
        meter_entries=um, v_hat=ms.v_hat[umloc], w_v=ms.w_v[umloc],
        Rm_root=R[np.ix_(um, cols)], Xm_root=X[np.ix_(um, cols)],
        Rm_uncl=R[np.ix_(um, uent)], Xm_uncl=X[np.ix_(um, uent)],
        p_hat=np.where(ms.p_mask, ms.p_hat, 0.0)[uent], q_hat=np.where(ms.q_mask, ms.q_hat, 0.0)[uent],
        w_p=ms.w_p[uent], w_q=ms.w_q[uent],
        lo=ms.lo.reshape(2, n)[:, uent], hi=ms.hi.reshape(2, n)[:, uent],
        scale=sc.reshape(2, n)[:, uent], eps=step,
        p=z0[uent].copy(), q=z0[n + uent].copy(), simulator=sim,
        area_entries=[am.entries for am in ams])
    return ds, ams


# --------------------------------------------------------------------------
# rounds


def _phase_payload(values, phases):
    return np.asarray([values[f] for f in phases], dtype=float)


def run_round(ds, ams_list, s, transport=None):
    """One synchronous round; returns the assembled state and voltages."""
    transport = transport or InProcessTransport()
    single = ds.mode == "single-phase"
    # step 1
    for am in ams_list:
        sums = am.nu_sums()
        ph = ds.root_phases[am.k - 1] if single else [0, 1, 2]
        transport.send(RoundMessage(UP, s, am.k, "nu", _phase_payload(sums, ph)))
    v = ds.simulator.v
    ds.nu = (v[ds.meter_entries] - ds.v_hat) * ds.w_v
    # step 2
    if single:
        S = np.array([transport.recv(UP, am.k, s, "nu").payload[0] for am in ams_list])
        a_out, a_u = decompose_alpha(ds, S, ds.nu)
        b_out, b_u = decompose_beta(ds, S, ds.nu)
        for am, a, b in zip(ams_list, a_out, b_out):
            transport.send(RoundMessage(DOWN, s, am.k, "coupling", np.array([a, b])))
    else:
        S = np.array([transport.recv(UP, am.k, s, "nu").payload for am in ams_list]).reshape(-1, 3)
        a_out, b_out, a_u, b_u = decompose_multiphase(ds, S, ds.nu)
        for am in ams_list:
            ph = ds.root_phases[am.k - 1]
            transport.send(RoundMessage(DOWN, s, am.k, "coupling",
                                        np.concatenate([a_out[am.k - 1, ph], b_out[am.k - 1, ph]])))
    # steps 3-4
    slices = []
    for am in ams_list:
        msg = transport.recv(DOWN, am.k, s, "coupling").payload
        ph = ds.root_phases[am.k - 1]
        am.alpha_out = np.zeros(3)
        am.beta_out = np.zeros(3)
        am.alpha_out[ph] = msg[:len(ph)]
        am.beta_out[ph] = msg[len(ph):]
        slices.append(am.step())
    gp = a_u + ds.w_p * (ds.p - ds.p_hat)
    gq = b_u + ds.w_q * (ds.q - ds.q_hat)
    ds.p = np.clip(ds.p - ds.eps * ds.scale[0] ** 2 * gp, ds.lo[0], ds.hi[0])
    ds.q = np.clip(ds.q - ds.eps * ds.scale[1] ** 2 * gq, ds.lo[1], ds.hi[1])
    # step 5
    for am, sl in zip(ams_list, slices):
        transport.send(RoundMessage(UP, s, am.k, "state", sl))
    got = [transport.recv(UP, am.k, s, "state").payload for am in ams_list]
    z = ds.assemble(got)
    v_new = ds.simulator.run(z)
    return z, v_new


@dataclass
class ProtocolStats:
    rounds: int
    messages: int
    bytes_total: int
    bytes_up_nu: int
    bytes_down: int
    bytes_up_state: int


def run_protocol(ds, ams_list, ms, sm, delta=1e-6, max_rounds=500, transport=None,
                 strict=True):
    """Repeat rounds until the voltage update drops below ``delta``.

    Returns ``(EstimateState, ProtocolStats, transport)``.  With ``strict``
    a run that exhausts ``max_rounds`` raises :class:`ProtocolError`.
    """
    transport = transport or InProcessTransport()
    v = ds.simulator.v
    z = ds.assemble([np.concatenate([am.p, am.q]) for am in ams_list])
    st = EstimateState(z, v, 0, wls_objective(ms, sm, z, v), ds.eps)
    converged = False
    for s in range(1, max_rounds + 1):
        z_new, v_new = run_round(ds, ams_list, s, transport)
        dv = float(np.abs(v_new - v).max(initial=0.0))
        st.trace.append((s, wls_objective(ms, sm, z_new, v_new),
                         float(np.linalg.norm(z_new - z)), dv, 0.0))
        z, v = z_new, v_new
        if dv < delta:
            converged = True
            break
    if not converged and strict:
        raise ProtocolError(f"no convergence within {max_rounds} rounds")
    st.z, st.v, st.s, st.converged = z, v, s, converged
    st.objective = wls_objective(ms, sm, z, v)
    log = transport.log
    stats = ProtocolStats(
        rounds=s, messages=len(log), bytes_total=sum(m.nbytes for m in log),
        bytes_up_nu=sum(m.nbytes for m in log if m.kind == "nu"),
        bytes_down=sum(m.nbytes for m in log if m.direction == DOWN),
        bytes_up_state=sum(m.nbytes for m in log if m.kind == "state"))
    return st, stats, transport
