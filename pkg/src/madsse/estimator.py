"""Centralized WLS estimators: projected gradient, Gauss-Newton, real-time steps.

The state is ``z = (p, q)`` stacked over the feeder's state index.  Voltage
channels enter through squared magnitudes ``v`` produced by a feedback
oracle: the linear model (``LinearFeedback``) or the nonlinear power flow
(``NonlinearFeedback``).
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DimensionError, DivergenceError, GaussNewtonError, PowerFlowError,
                     StepSizeError)
from .powerflow import admittance_matrix, solve_nonlinear, voltage_jacobian
from .sensitivity import predict_voltage


# --------------------------------------------------------------------------
# feedback oracles


class LinearFeedback:
    """Voltages from the linear model."""

    name = "linear"

    def __init__(self, sm):
        self.sm = sm

    def __call__(self, z):
        n = self.sm.n
        return predict_voltage(self.sm, z[:n], z[n:])


class NonlinearFeedback:
    """Voltages from the nonlinear power flow, warm-started from the last call."""

    name = "nonlinear"

    def __init__(self, model, tol=1e-10, max_iter=100):
        self.model = model
        self.tol = tol
        self.max_iter = max_iter
        self.last = None
        self.calls = 0

    def __call__(self, z):
        n = self.model.n_state
        v_init = None if self.last is None else self.last.V_nodes
        self.last = solve_nonlinear(self.model, z[:n], z[n:], self.tol, self.max_iter, v_init)
        self.calls += 1
        return self.last.v


def make_feedback(kind, sm, model=None):
    if kind == "linear":
        return LinearFeedback(sm)
    if kind == "nonlinear":
        if model is None:
            raise ValueError("nonlinear feedback needs the feeder model")
        return NonlinearFeedback(model)
    raise ValueError(f"unknown feedback {kind!r}")


# --------------------------------------------------------------------------
# objective and gradient


def _split(ms, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (2 * ms.n,):
        raise DimensionError(f"state must have length {2 * ms.n}, got {z.shape}")
    return z[:ms.n], z[ms.n:]


def wls_objective(ms, sm, z, v=None):
    """Weighted least-squares cost; ``v`` defaults to the linear model."""
    p, q = _split(ms, z)
    if v is None:
        v = predict_voltage(sm, p, q)
    rp = np.where(ms.p_mask, p - ms.p_hat, 0.0)
    rq = np.where(ms.q_mask, q - ms.q_hat, 0.0)
    rv = v[ms.meters] - ms.v_hat
    return 0.5 * (np.sum(ms.w_p * rp ** 2) + np.sum(ms.w_q * rq ** 2) + np.sum(ms.w_v * rv ** 2))


def nu(ms, v):
    """Weighted voltage residuals at the meters."""
    return (v[ms.meters] - ms.v_hat) * ms.w_v


def gradient(ms, sm, z, v=None):
    """Gradient of :func:`wls_objective` with the voltage channel taken at ``v``."""
    p, q = _split(ms, z)
    if v is None:
        v = predict_voltage(sm, p, q)
    w = nu(ms, v)
    gp = sm.R[ms.meters].T @ w + ms.w_p * np.where(ms.p_mask, p - ms.p_hat, 0.0)
    gq = sm.X[ms.meters].T @ w + ms.w_q * np.where(ms.q_mask, q - ms.q_hat, 0.0)
    return np.concatenate([gp, gq])


def project(ms, z):
    return ms.project(z)


def initial_state(ms):
    """Pseudo-measurements projected onto the feasible boxes."""
    return ms.project(np.concatenate([np.where(ms.p_mask, ms.p_hat, 0.0),
                                      np.where(ms.q_mask, ms.q_hat, 0.0)]))


def hessian(ms, sm):
    """Dense Hessian of the linear-model objective."""
    G = np.hstack([sm.R[ms.meters], sm.X[ms.meters]])
    return np.diag(np.concatenate([ms.w_p, ms.w_q])) + G.T @ (ms.w_v[:, None] * G)


def scale_vector(ms, scaling="pseudo"):
    """Per-coordinate units in which the gradient step is taken.

    ``"pseudo"`` measures each injection in units of its pseudo-measurement
    deviation (1 where a coordinate has no pseudo channel); ``"none"`` keeps
    per-unit.  A step of size ``eps`` in the scaled variables ``u = z / s``
    is the per-unit update ``z - eps * s**2 * grad``.
    """
    if scaling == "none":
        return np.ones(2 * ms.n)
    if scaling == "pseudo":
        return np.concatenate([np.where(ms.p_mask, ms.sigma_p, 1.0),
                               np.where(ms.q_mask, ms.sigma_q, 1.0)])
    raise ValueError(f"unknown scaling {scaling!r}")


def free_coordinates(ms):
    return np.flatnonzero(ms.hi > ms.lo)


def normal_equation_solution(ms, sm):
    """Unconstrained minimizer over the free coordinates (fixed ones at their box)."""
    z = ms.project(np.zeros(2 * ms.n))
    free = free_coordinates(ms)
    H = hessian(ms, sm)
    rhs = -gradient(ms, sm, z)
    z[free] += np.linalg.solve(H[np.ix_(free, free)], rhs[free])
    return z


def box_solution(ms, sm, active=None, return_active=False):
    """Box-constrained minimizer of the linear-model objective.

    Block principal pivoting on the KKT conditions in the scaled variables,
    optionally warm-started from ``active`` (-1 at lower bound, +1 at upper,
    0 free; as returned with ``return_active``).  Falls back to bounded least
    squares if pivoting does not settle.
    """
    free = free_coordinates(ms)
    z = ms.project(np.zeros(2 * ms.n))
    if len(free) == 0:
        return (z, np.zeros(0, dtype=np.int8)) if return_active else z
    sc = scale_vector(ms)[free]
    H = sc[:, None] * hessian(ms, sm)[np.ix_(free, free)] * sc[None, :]
    c = sc * gradient(ms, sm, z)[free]  # gradient at z, scaled; z is 0 on free coords
    c = c - H @ (z[free] / sc)
    lo, hi = ms.lo[free] / sc, ms.hi[free] / sc
    u, act = _box_qp(H, c, lo, hi, active)
    if u is None:
        u = _box_bvls(ms, sm, free, z) / sc
        act = np.where(u <= lo, -1, np.where(u >= hi, 1, 0)).astype(np.int8)
    z[free] = np.clip(u * sc, ms.lo[free], ms.hi[free])
    return (z, act) if return_active else z


def _box_qp(H, c, lo, hi, active=None, max_iter=100, tol=1e-9):
    """min 0.5 u'Hu + c'u on [lo, hi] for positive definite H.

    Returns ``(u, active)`` or ``(None, None)`` when pivoting stalls.
    """
    n = len(c)
    act = np.zeros(n, dtype=np.int8) if active is None or len(active) != n else active.copy()
    best, strikes = n + 1, 0
    gscale = max(1.0, float(np.abs(c).max()))
    for _ in range(max_iter):
        F = act == 0
        u = np.where(act < 0, lo, hi).astype(float)
        if F.any():
            rhs = -(c[F] + H[np.ix_(F, ~F)] @ u[~F])
            try:
                u[F] = np.linalg.solve(H[np.ix_(F, F)], rhs)
            except np.linalg.LinAlgError:
                return None, None
        g = H @ u + c
        span = np.maximum(hi - lo, 1e-300)
        bad = ((F & ((u < lo - tol * span) | (u > hi + tol * span)))
               | ((act < 0) & (g < -tol * gscale)) | ((act > 0) & (g > tol * gscale)))
        nbad = int(bad.sum())
        if nbad == 0:
            return np.clip(u, lo, hi), act
        if nbad < best:
            best, strikes = nbad, 0
        else:
            strikes += 1
        flip = np.flatnonzero(bad) if strikes < 3 else np.flatnonzero(bad)[-1:]
        for k in flip:
            if act[k] == 0:
                act[k] = -1 if u[k] < lo[k] else 1
            else:
                act[k] = 0
    return None, None


def _box_bvls(ms, sm, free, z):
    from scipy.optimize import lsq_linear

    n = ms.n
    G = np.hstack([sm.R[ms.meters], sm.X[ms.meters]])
    sw = np.sqrt(ms.w_v)
    v0 = G @ z + sm.v_tilde[ms.meters]
    wd = np.concatenate([ms.w_p, ms.w_q])
    hat = np.concatenate([np.where(ms.p_mask, ms.p_hat, 0.0), np.where(ms.q_mask, ms.q_hat, 0.0)])
    rows = np.flatnonzero(wd[free] > 0)
    A = np.vstack([sw[:, None] * G[:, free],
                   np.sqrt(wd[free][rows])[:, None] * np.eye(len(free))[rows]])
    b = np.concatenate([sw * (ms.v_hat - v0), np.sqrt(wd[free][rows]) * (hat[free][rows] - z[free][rows])])
    lo, hi = ms.lo[free] - z[free], ms.hi[free] - z[free]
    res = lsq_linear(A, b, bounds=(lo, hi), method="bvls", tol=1e-14, max_iter=10 * n + 100)
    return z[free] + res.x


# --------------------------------------------------------------------------
# convergence constants


@dataclass(frozen=True)
class ConvergenceConstants:
    M: float
    L: float
    eps: float
    Delta1: float = 0.0
    Delta2: float = 0.0
    scaling: str = "pseudo"

    @property
    def epsilon_max(self):
        return 2.0 * self.M / self.L ** 2

    @property
    def contraction(self):
        return 1.0 + self.eps ** 2 * self.L ** 2 - 2.0 * self.eps * self.M

    @property
    def ball_radius(self):
        den = 2.0 * self.eps * self.M - self.eps ** 2 * self.L ** 2
        return (self.Delta1 + self.eps ** 2 * self.Delta2) / den

    def with_step(self, eps):
        return replace(self, eps=eps)


def power_iteration(matvec, n, tol=1e-8, max_iter=10000, seed=0):
    """Largest eigenvalue of a symmetric PSD operator and its residual norm."""
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = matvec(x)
        new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, 0.0
        if abs(new - lam) <= tol * max(abs(new), 1.0):
            return new, float(np.linalg.norm(y - new * x))
        lam = new
        x = y / ny
    raise RuntimeError("power iteration did not converge")


def estimate_constants(ms, sm, eps="auto", model=None, delta2_samples=0, Delta1=0.0, seed=0,
                       scaling="pseudo"):
    """Strong-monotonicity and Lipschitz constants over the free coordinates.

    All quantities live in the scaled variables of :func:`scale_vector`.
    ``M`` is the smallest Hessian eigenvalue (dense symmetric solve).  ``L``
    is the power-iteration estimate plus its residual norm, an upper bound on
    the largest eigenvalue.  ``Delta2`` is the largest squared gradient
    discrepancy between linear and nonlinear voltages over
    ``delta2_samples`` random feasible states (needs ``model``).
    """
    free = free_coordinates(ms)
    sc = scale_vector(ms, scaling)
    if len(free) == 0:
        M = L = 1.0
    else:
        H = (sc[:, None] * hessian(ms, sm) * sc[None, :])[np.ix_(free, free)]
        M = float(np.linalg.eigvalsh(H)[0])
        lam, res = power_iteration(lambda x: H @ x, len(free), seed=seed)
        L = max(lam + res, M)
    if eps == "auto":
        step = M / L ** 2
    else:
        step = float(eps)
    d2 = 0.0
    if delta2_samples and model is not None:
        rng = np.random.default_rng(seed)
        lo, hi = ms.lo, ms.hi
        for _ in range(delta2_samples):
            z = lo + (hi - lo) * rng.random(2 * ms.n)
            n = ms.n
            try:
                v_nl = solve_nonlinear(model, z[:n], z[n:]).v
            except PowerFlowError:
                continue
            g_nl = gradient(ms, sm, z, v_nl)
            g_lin = gradient(ms, sm, z)
            d2 = max(d2, float(np.sum((sc * (g_nl - g_lin)) ** 2)))
    return ConvergenceConstants(M, L, step, Delta1, d2, scaling)


def check_step(cc, eps):
    if not 0.0 < eps < cc.epsilon_max:
        raise StepSizeError(f"step {eps:.6g} outside (0, {cc.epsilon_max:.6g})")


# --------------------------------------------------------------------------
# projected gradient


@dataclass
class EstimateState:
    z: np.ndarray
    v: np.ndarray
    s: int
    objective: float
    step_size: float
    converged: bool = False
    trace: list = field(default_factory=list)  # (iteration, objective, |dz|, |dv|, wall)
    scale: np.ndarray = None

    def pq(self):
        n = len(self.z) // 2
        return self.z[:n], self.z[n:]


def gradient_step(ms, sm, z, v, eps, scale=None):
    g = gradient(ms, sm, z, v)
    if scale is not None:
        g = g * scale ** 2
    return ms.project(z - eps * g)


def solve_gradient(ms, sm, feedback=None, eps="auto", max_iters=500, delta=1e-6, z0=None,
                   constants=None, divergence_window=10, scaling="pseudo"):
    """Projected-gradient WLS.

    Stops once the infinity norm of the voltage update drops below
    ``delta``.  ``eps="auto"`` uses ``M / L**2``; an explicit step must lie in
    ``(0, 2M/L**2)``, both in the variables chosen by ``scaling``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    feedback = feedback or LinearFeedback(sm)
    cc = constants or estimate_constants(ms, sm, eps, scaling=scaling)
    if cc.scaling != scaling:
        raise ValueError(f"constants computed for scaling {cc.scaling!r}, not {scaling!r}")
    scale = scale_vector(ms, scaling)
    step = cc.M / cc.L ** 2 if eps == "auto" else float(eps)
    check_step(cc, step)
    z = initial_state(ms) if z0 is None else ms.project(np.asarray(z0, dtype=float))
    v = feedback(z)
    obj = wls_objective(ms, sm, z, v)
    st = EstimateState(z, v, 0, obj, step, scale=scale)
    rises = 0
    t0 = time.perf_counter()
    for s in range(1, max_iters + 1):
        z_new = gradient_step(ms, sm, z, v, step, scale)
        v_new = feedback(z_new)
        obj_new = wls_objective(ms, sm, z_new, v_new)
        dz = float(np.linalg.norm(z_new - z))
        dv = float(np.abs(v_new - v).max(initial=0.0))
        st.trace.append((s, obj_new, dz, dv, time.perf_counter() - t0))
        rises = rises + 1 if obj_new > obj else 0
        z, v, obj = z_new, v_new, obj_new
        if rises >= divergence_window:
            raise DivergenceError(f"objective rose {rises} iterations in a row (iteration {s})")
        if dv < delta:
            st.converged = True
            break
    st.z, st.v, st.s, st.objective = z, v, s, obj
    return st


def step_realtime(state, ms, sm, feedback, eps=None):
    """One projected-gradient step against the tick's measurements.

    The voltages in ``state.v`` (from the previous feedback call) drive the
    gradient; the returned state carries the fresh feedback voltages.
    """
    if len(state.z) != 2 * ms.n:
        raise DimensionError("state and measurement set disagree in size")
    step = state.step_size if eps is None else eps
    z = gradient_step(ms, sm, state.z, state.v, step, state.scale)
    v = feedback(z)
    obj = wls_objective(ms, sm, z, v)
    trace = state.trace
    trace.append((state.s + 1, obj, float(np.linalg.norm(z - state.z)),
                  float(np.abs(v - state.v).max(initial=0.0)), 0.0))
    return EstimateState(z, v, state.s + 1, obj, step, False, trace, state.scale)


def export_trace(state, path):
    with open(path, "w") as fh:
        fh.write("# schema_version=1\n")
        fh.write("iteration,objective,dz,dv,wall_time\n")
        for it, obj, dz, dv, wall in state.trace:
            fh.write(f"{it},{obj!r},{dz!r},{dv!r},{wall!r}\n")


# --------------------------------------------------------------------------
# Gauss-Newton baseline


def solve_gauss_newton(ms, model, max_iters=50, tol=1e-8, damping=0.0, cond_limit=1e16):
    """Gauss-Newton on the nonlinear measurement model from a flat start.

    Unknowns are the load injections; zero-injection entries stay at zero.
    The voltage Jacobian is recomputed every iteration from the power flow.
    The final state is clipped onto the boxes.  Failure to converge is
    reported through ``converged=False``; a singular normal matrix raises
    :class:`GaussNewtonError` carrying the condition estimate.
    """
    n = ms.n
    free = np.flatnonzero(np.concatenate([ms.p_mask, ms.q_mask]))
    wd = np.concatenate([ms.w_p, ms.w_q])[free]
    hat = np.concatenate([ms.p_hat, ms.q_hat])[free]
    wv = ms.w_v
    Y, _ = admittance_matrix(model)
    z = np.zeros(2 * n)
    st = EstimateState(z, None, 0, np.inf, 0.0)
    t0 = time.perf_counter()
    sol = None
    for s in range(1, max_iters + 1):
        try:
            sol = solve_nonlinear(model, z[:n], z[n:], v_init=None if sol is None else sol.V_nodes)
        except PowerFlowError:
            st.trace.append((s, np.nan, np.nan, np.nan, time.perf_counter() - t0))
            st.z, st.s = ms.project(z), s
            return st
        dvp, dvq = voltage_jacobian(model, sol, Y)
        Hv = np.hstack([dvp, dvq])[ms.meters][:, free]
        r_v = ms.v_hat - sol.v[ms.meters]
        r_z = hat - z[free]
        A = Hv.T @ (wv[:, None] * Hv) + np.diag(wd)
        if damping:
            A = A + damping * np.diag(np.diag(A))
        b = Hv.T @ (wv * r_v) + wd * r_z
        cond = float(np.linalg.cond(A))
        if not np.isfinite(cond) or cond > cond_limit:
            raise GaussNewtonError(f"normal matrix singular (cond {cond:.3e})", cond)
        dz = np.linalg.solve(A, b)
        z = z.copy()
        z[free] += dz
        obj = wls_objective(ms, None, z, _v_at(model, z, sol))
        step = float(np.abs(dz).max(initial=0.0))
        st.trace.append((s, obj, float(np.linalg.norm(dz)), step, time.perf_counter() - t0))
        if step < tol:
            st.converged = True
            break
    st.s = s
    st.z = ms.project(z)
    try:
        st.v = solve_nonlinear(model, st.z[:n], st.z[n:]).v
    except PowerFlowError:
        st.v = None
    st.objective = wls_objective(ms, None, st.z, st.v) if st.v is not None else np.inf
    return st


def _v_at(model, z, sol):
    n = model.n_state
    try:
        return solve_nonlinear(model, z[:n], z[n:], v_init=sol.V_nodes).v
    except PowerFlowError:
        return np.full(n, np.nan)


def normal_matrix_condition(ms, model, z=None):
    """Condition number of the Gauss-Newton normal matrix at ``z`` (default flat)."""
    n = ms.n
    z = np.zeros(2 * n) if z is None else z
    free = np.flatnonzero(np.concatenate([ms.p_mask, ms.q_mask]))
    sol = solve_nonlinear(model, z[:n], z[n:])
    dvp, dvq = voltage_jacobian(model, sol)
    Hv = np.hstack([dvp, dvq])[ms.meters][:, free]
    A = Hv.T @ (ms.w_v[:, None] * Hv) + np.diag(np.concatenate([ms.w_p, ms.w_q])[free])
    return float(np.linalg.cond(A))


# --------------------------------------------------------------------------
# real-time tracking


@dataclass
class TrackingRecord:
    t: int
    avg_error: float  # percent, voltage magnitude
    max_error: float
    run_avg: float
    run_max: float
    v_est: np.ndarray
    v_true: np.ndarray
    z: np.ndarray
    wall: float


def run_realtime(model, sm, scenarios, noise=None, meters=None, feedback="nonlinear",
                 eps="auto", scaling="pseudo", keep_states=False):
    """One projected-gradient step per tick (warm-started from the last tick).

    Pseudo deviations default to the nominal loads, so the weights (and the
    scaled variables, frozen at the first tick) do not change between ticks.
    The estimate reported for tick ``t`` is the feedback voltage after
    consuming tick ``t``'s measurements.  Returns ``(records, constants)``.
    """
    from .measurements import NoisePolicy

    noise = noise or NoisePolicy(sigma_basis="nominal")
    if not scenarios:
        raise ValueError("no scenarios")
    fb = make_feedback(feedback, sm, model)
    ms0 = scenarios[0].materialize(model, noise, meters=meters)
    scale = scale_vector(ms0, scaling)
    cc = _constants_with_scale(ms0, sm, scale, scaling)
    step = cc.M / cc.L ** 2 if eps == "auto" else float(eps)
    check_step(cc, step)
    cc = cc.with_step(step)
    z = initial_state(ms0)
    state = EstimateState(z, fb(z), 0, 0.0, step, scale=scale)
    out = []
    tot_avg = tot_max = 0.0
    for k, sc in enumerate(scenarios):
        t0 = time.perf_counter()
        ms = sc.materialize(model, noise, meters=meters)
        state = step_realtime(state, ms, sm, fb)
        wall = time.perf_counter() - t0
        truth = solve_nonlinear(model, sc.p_true, sc.q_true)
        vt = np.sqrt(truth.v)
        ve = np.sqrt(state.v)
        err = np.abs(ve - vt) / vt * 100.0
        tot_avg += err.mean()
        tot_max += err.max()
        out.append(TrackingRecord(sc.t, float(err.mean()), float(err.max()), tot_avg / (k + 1),
                                  tot_max / (k + 1), ve, vt,
                                  state.z.copy() if keep_states else None, wall))
        state.trace.clear()
    return out, cc


def _constants_with_scale(ms, sm, scale, scaling):
    free = free_coordinates(ms)
    H = (scale[:, None] * hessian(ms, sm) * scale[None, :])[np.ix_(free, free)]
    ev = np.linalg.eigvalsh(H)
    return ConvergenceConstants(float(ev[0]), float(ev[-1]), float(ev[0] / ev[-1] ** 2),
                                scaling=scaling)


def tracking_bound(model, sm, scenarios, states, scale, eps, noise=None, meters=None,
                   sample_every=50, delta2_samples=20, seed=0):
    """Empirical check of the asymptotic tracking ball.

    ``states[t]`` is the iterate after consuming tick ``t``; it is compared
    with the optimum of tick ``t + 1`` in the scaled metric.  ``M`` / ``L``
    are the extreme Hessian eigenvalues over sampled ticks; ``Delta1`` is the
    largest squared drift of consecutive optima and ``Delta2`` the largest
    squared gradient gap between nonlinear and linear voltages (sampled).
    Returns a dict with the constants, the ball radius and the measured
    long-run distance (max over the second half of the run).
    """
    from .measurements import NoisePolicy

    noise = noise or NoisePolicy(sigma_basis="nominal")
    mss = [sc.materialize(model, noise, meters=meters) for sc in scenarios]
    opt, act = [], None
    for ms in mss:
        z, act = box_solution(ms, sm, act, return_active=True)
        opt.append(z)
    Ms, Ls = [], []
    for ms in mss[::sample_every]:
        c = _constants_with_scale(ms, sm, scale, "fixed")
        Ms.append(c.M)
        Ls.append(c.L)
    M, L = min(Ms), max(Ls)
    d1 = max(float(np.sum(((b - a) / scale) ** 2)) for a, b in zip(opt[:-1], opt[1:]))
    rng = np.random.default_rng(seed)
    d2 = 0.0
    n = sm.n
    for ms in mss[::max(1, len(mss) // delta2_samples)]:
        z = ms.lo + (ms.hi - ms.lo) * rng.random(2 * n)
        try:
            v_nl = solve_nonlinear(model, z[:n], z[n:]).v
        except PowerFlowError:
            continue
        d2 = max(d2, float(np.sum((scale * (gradient(ms, sm, z, v_nl) - gradient(ms, sm, z))) ** 2)))
    # the iterates themselves also probe the gap
    for k in range(0, len(states), sample_every):
        z = states[k]
        v_nl = solve_nonlinear(model, z[:n], z[n:]).v
        ms = mss[k]
        d2 = max(d2, float(np.sum((scale * (gradient(ms, sm, z, v_nl) - gradient(ms, sm, z))) ** 2)))
    cc = ConvergenceConstants(M, L, eps, d1, d2, "fixed")
    dist = [float(np.sum(((states[k] - opt[k + 1]) / scale) ** 2)) for k in range(len(states) - 1)]
    half = len(dist) // 2
    return {"M": M, "L": L, "eps": eps, "epsilon_max": cc.epsilon_max, "Delta1": d1,
            "Delta2": d2, "ball": cc.ball_radius, "long_run": max(dist[half:]) if dist else 0.0,
            "distances": dist}
