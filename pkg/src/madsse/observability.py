"""Observability of the linearized measurement model (single-phase).

Rows of the measurement matrix ``H`` over the state ``(p, q)``:

* one unit row per pseudo-measured ``p`` and ``q`` channel;
* unit rows for zero-injection entries, treated as exactly known;
* voltage rows ``B~^-T (2 diag r) B~^-1`` and the reactive counterpart,
  built from the reduced incidence matrix ``B~`` of the tree;
* optionally branch-flow rows ``B~^-1`` and the slack injection ``-1^T``.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .grid import generate_feeder
from .measurements import NoisePolicy, synthesize

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class ObservabilityReport:
    H: np.ndarray
    rank: int
    n_state: int
    null_basis: np.ndarray  # (2N - rank, 2N)
    B: np.ndarray
    B_tilde: np.ndarray
    row_kinds: tuple

    @property
    def index_percent(self):
        return 100.0 * self.rank / self.n_state if self.n_state else 100.0

    @property
    def observable(self):
        return self.rank == self.n_state

    def summary(self):
        return {"rank": int(self.rank), "columns": int(self.n_state), "rows": int(self.H.shape[0]),
                "index_percent": float(self.index_percent),
                "unobservable_dims": int(self.n_state - self.rank)}


def incidence(model):
    """Node-by-line incidence (+1 at the sending node, -1 at the receiving node).

    Lines are ordered by receiving-node position; ``B~`` drops the slack row.
    """
    n = len(model.ids)
    B = np.zeros((n, n - 1))
    for k in range(1, n):
        B[model.parent[k], k - 1] = 1.0
        B[k, k - 1] = -1.0
    return B, B[1:]


def voltage_blocks(model):
    """``B~^-T (2 diag r) B~^-1`` and the reactance counterpart."""
    if not model.is_single_phase:
        raise DimensionError("observability analysis covers single-phase feeders")
    ph = model.slack_phases[0]
    _, Bt = incidence(model)
    Binv = np.linalg.solve(Bt, np.eye(len(Bt)))
    r = model.zmat[1:, ph, ph].real
    x = model.zmat[1:, ph, ph].imag
    return Binv.T @ (2.0 * r[:, None] * Binv), Binv.T @ (2.0 * x[:, None] * Binv), Binv


def build_H(model, ms, zero_injection_rows=True, extra=()):
    """Linearized measurement matrix and its rank.

    ``extra`` may contain ``"flows"`` (every branch P and Q) and ``"slack"``
    (slack-bus p0 and q0); these rows are not used by the estimator.
    """
    if not model.is_single_phase:
        raise DimensionError("observability analysis covers single-phase feeders")
    n = model.n_state
    if ms.n != n:
        raise DimensionError(f"measurement set has {ms.n} entries, feeder {n}")
    I = np.eye(n)
    Z = np.zeros((n, n))
    blocks, kinds = [], []
    pm, qm = np.asarray(ms.p_mask), np.asarray(ms.q_mask)
    blocks.append(np.hstack([I[pm], Z[pm]]))
    kinds += ["p"] * int(pm.sum())
    blocks.append(np.hstack([Z[qm], I[qm]]))
    kinds += ["q"] * int(qm.sum())
    if zero_injection_rows:
        zi = ~np.asarray(model.is_load)
        blocks.append(np.hstack([I[zi], Z[zi]]))
        blocks.append(np.hstack([Z[zi], I[zi]]))
        kinds += ["p0-virtual"] * int(zi.sum()) + ["q0-virtual"] * int(zi.sum())
    Rv, Xv, Binv = voltage_blocks(model)
    m = np.asarray(ms.meters)
    blocks.append(np.hstack([Rv[m], Xv[m]]))
    kinds += ["v"] * len(m)
    if "flows" in extra:
        blocks.append(np.hstack([Binv, Z]))
        blocks.append(np.hstack([Z, Binv]))
        kinds += ["P"] * n + ["Q"] * n
    if "slack" in extra:
        one = np.ones((1, n))
        blocks.append(np.hstack([-one, np.zeros((1, n))]))
        blocks.append(np.hstack([np.zeros((1, n)), -one]))
        kinds += ["p_slack", "q_slack"]
    H = np.vstack(blocks) if blocks else np.zeros((0, 2 * n))
    rank, null = rank_and_null(H)
    B, Bt = incidence(model)
    return ObservabilityReport(H, rank, 2 * n, null, B, Bt, tuple(kinds))


def rank_and_null(H):
    cols = H.shape[1]
    if H.shape[0] == 0:
        return 0, np.eye(cols)
    _, sv, vt = np.linalg.svd(H, full_matrices=True)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, np.eye(cols)
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    return rank, vt[rank:]


def verify_full_pseudo_coverage(trials=10, seed=0, max_size=30):
    """Full pseudo coverage of load injections gives a full-rank ``H``.

    Runs random single-phase feeders with ``M_p = M_q`` = all load entries and
    no voltage meters.  Returns one dict per trial with the index and whether
    ``H z = 0`` forces ``z = 0`` (checked on the null-space basis).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for t in range(trials):
        size = int(rng.integers(1, max_size + 1))
        frac = float(rng.uniform(0.0, 1.0))
        model = generate_feeder(size=size, seed=int(rng.integers(2 ** 31)), load_fraction=frac)
        ms = synthesize(model, model.p_nom, model.q_nom, NoisePolicy(), meters=[], seed=t)
        rep = build_H(model, ms)
        z = rng.standard_normal(2 * model.n_state)
        out.append({"trial": t, "size": size, "loads": int(model.is_load.sum()),
                    "index_percent": rep.index_percent,
                    "null_dims": int(rep.null_basis.shape[0]),
                    "Hz_nonzero": bool(np.linalg.norm(rep.H @ z) > 0)})
    return out


def export_report(rep, path, null_path=None):
    with open(path, "w") as fh:
        json.dump({"format_version": 1, **rep.summary()}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if null_path is not None:
        with open(null_path, "w") as fh:
            fh.write("# schema_version=1\n")
            n = rep.n_state // 2
            fh.write(",".join([f"p{k}" for k in range(n)] + [f"q{k}" for k in range(n)]) + "\n")
            for row in rep.null_basis:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
