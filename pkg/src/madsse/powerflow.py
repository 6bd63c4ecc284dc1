"""Nonlinear radial power flow (truth simulator and estimator feedback)."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, PowerFlowError, VoltageCollapseError
from .sensitivity import SLACK_ANGLES, predict_voltage

MAX_INJECTION = 10.0


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    """Solved operating point.

    ``V`` and ``v`` follow the state index.  Branch arrays are per node
    position (the line feeding that node) and phase, sending-end quantities;
    row 0 (slack) is zero.
    """

    V: np.ndarray
    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    ell: np.ndarray
    iterations: int
    residual: float
    V_nodes: np.ndarray  # complex, (n_nodes, 3)
    J_nodes: np.ndarray  # branch currents, (n_nodes, 3)


def slack_phasors(model):
    return model.slack_voltage * np.exp(1j * SLACK_ANGLES)


def _node_injections(model, p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (model.n_state,) or q.shape != (model.n_state,):
        raise DimensionError(f"expected injections of length {model.n_state}")
    s = np.zeros((len(model.ids), 3), dtype=np.complex128)
    s[model.state_pos, model.state_phase] = p + 1j * q
    return s


def flat_start(model):
    v = np.zeros((len(model.ids), 3), dtype=np.complex128)
    v[:] = slack_phasors(model)
    v[~model.mask] = 0.0
    return v


def solve_nonlinear(model, p, q, tol=1e-10, max_iter=100, v_init=None):
    """Backward/forward sweep with constant-power injections.

    Raises :class:`PowerFlowError` when ``max_iter`` sweeps do not bring the
    voltage update below ``tol`` and :class:`VoltageCollapseError` when any
    magnitude falls below 0.5 pu.
    """
    s = _node_injections(model, p, q)
    if np.abs(s).max(initial=0.0) > MAX_INJECTION:
        raise PowerFlowError(f"injection above {MAX_INJECTION} pu")
    v0 = flat_start(model) if v_init is None else np.array(v_init, dtype=np.complex128)
    V, J, it, dv, status = _kernels.sweep(model, np.ascontiguousarray(model.zmat),
                                          np.ascontiguousarray(model.mask), s,
                                          slack_phasors(model), v0, tol, max_iter)
    if status == _kernels.SWEEP_COLLAPSE:
        raise VoltageCollapseError(f"voltage collapse after {it} sweeps")
    if status != _kernels.SWEEP_OK:
        raise PowerFlowError(f"no convergence in {max_iter} sweeps (last update {dv:.3e})")
    return _solution(model, V, J, int(it), float(dv))


def _solution(model, V, J, it, dv):
    par = np.maximum(model.parent, 0)
    S = V[par] * np.conj(J)
    S[0] = 0.0
    Vs = V[model.state_pos, model.state_phase]
    return PowerFlowSolution(V=Vs, v=np.abs(Vs) ** 2, P=S.real, Q=S.imag,
                             ell=np.abs(J) ** 2, iterations=it, residual=dv,
                             V_nodes=V, J_nodes=J)


def solve_linear(sm, p, q):
    return predict_voltage(sm, p, q)


def distflow_residuals(model, p, q, sol):
    """Max residual of the four single-phase DistFlow relations.

    Computed from the solution's branch quantities only, independently of how
    they were obtained.  Returns a dict keyed ``p_balance``, ``q_balance``,
    ``v_drop``, ``current``.
    """
    if not model.is_single_phase:
        raise DimensionError("DistFlow residuals are defined for single-phase feeders")
    ph = model.slack_phases[0]
    n = len(model.ids)
    P, Q, ell = sol.P[:, ph], sol.Q[:, ph], sol.ell[:, ph]
    v = np.abs(sol.V_nodes[:, ph]) ** 2
    pn = np.zeros(n)
    qn = np.zeros(n)
    pn[model.state_pos] = p
    qn[model.state_pos] = q
    child_P = np.zeros(n)
    child_Q = np.zeros(n)
    np.add.at(child_P, model.parent[1:], P[1:])
    np.add.at(child_Q, model.parent[1:], Q[1:])
    r = model.zmat[:, ph, ph].real
    x = model.zmat[:, ph, ph].imag
    j = np.arange(1, n)
    i = model.parent[1:]
    res_p = P[j] - (-pn[j] + child_P[j] + r[j] * ell[j])
    res_q = Q[j] - (-qn[j] + child_Q[j] + x[j] * ell[j])
    res_v = v[j] - (v[i] - 2 * (r[j] * P[j] + x[j] * Q[j]) + (r[j] ** 2 + x[j] ** 2) * ell[j])
    res_l = ell[j] * v[i] - (P[j] ** 2 + Q[j] ** 2)
    return {"p_balance": float(np.abs(res_p).max(initial=0)),
            "q_balance": float(np.abs(res_q).max(initial=0)),
            "v_drop": float(np.abs(res_v).max(initial=0)),
            "current": float(np.abs(res_l).max(initial=0))}


def admittance_matrix(model):
    """Bus admittance over (slack phases + state entries).

    Row/column order: the slack's phases first, then the state index.
    """
    slack_entries = [(model.slack_id, ph) for ph in model.slack_phases]
    keys = slack_entries + list(model.state_index)
    where = {key: k for k, key in enumerate(keys)}
    Y = np.zeros((len(keys), len(keys)), dtype=np.complex128)
    for k in range(1, len(model.ids)):
        node = model.nodes[k]
        ln = model.lines[model.line_of[k]]
        z = np.asarray(ln.z, dtype=complex)
        try:
            y = np.linalg.inv(z)
        except np.linalg.LinAlgError:
            raise PowerFlowError(f"singular impedance on line {ln.from_id}->{ln.to_id}") from None
        a = [where[(node.id, ph)] for ph in node.phases]
        b = [where[(ln.from_id, ph)] for ph in node.phases]
        Y[np.ix_(a, a)] += y
        Y[np.ix_(b, b)] += y
        Y[np.ix_(a, b)] -= y
        Y[np.ix_(b, a)] -= y
    return Y, len(slack_entries)


def nodal_mismatch(model, p, q, sol, Y=None):
    """Max |S_calc - s| over state entries, from the bus admittance matrix."""
    if Y is None:
        Y, _ = admittance_matrix(model)
    ns = len(model.slack_phases)
    V = np.concatenate([sol.V_nodes[0, list(model.slack_phases)], sol.V])
    S = V * np.conj(Y @ V)
    return float(np.abs(S[ns:] - (np.asarray(p) + 1j * np.asarray(q))).max(initial=0))


def voltage_jacobian(model, sol, Y=None):
    """d|V|^2 / d(p, q) at a solved operating point, over state entries.

    Implicit differentiation of ``S = V * conj(Y V)`` with the slack fixed.
    Returns ``(dv_dp, dv_dq)``, each ``n_state x n_state``.
    """
    if Y is None:
        Y, _ = admittance_matrix(model)
    ns = len(model.slack_phases)
    V_full = np.concatenate([sol.V_nodes[0, list(model.slack_phases)], sol.V])
    I = Y @ V_full
    Vs = sol.V
    Yss = Y[ns:, ns:]
    n = Vs.size
    A = np.diag(np.conj(I[ns:]))
    B = Vs[:, None] * np.conj(Yss)
    J = np.block([[(A + B).real, -(A - B).imag],
                  [(A + B).imag, (A - B).real]])
    dx = np.linalg.solve(J, np.eye(2 * n))  # d(ReV, ImV) / d(p, q)
    dv = 2.0 * (Vs.real[:, None] * dx[:n] + Vs.imag[:, None] * dx[n:])
    return dv[:, :n], dv[:, n:]


def export_solution(model, sol, path):
    """CSV: node, phase, |V|, angle (deg), v, P, Q of the feeding line."""
    with open(path, "w") as fh:
        fh.write("# schema_version=1\n")
        fh.write("node,phase,vmag,angle_deg,v,P,Q\n")
        for k, (nid, ph) in enumerate(model.state_index):
            pos = model.pos[nid]
            fh.write(f"{nid},{'abc'[ph]},{abs(sol.V[k])!r},{np.degrees(np.angle(sol.V[k]))!r},"
                     f"{sol.v[k]!r},{sol.P[pos, ph]!r},{sol.Q[pos, ph]!r}\n")
