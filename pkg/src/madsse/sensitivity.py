"""Linear voltage-to-injection model ``v = R p + X q + v_tilde``.

Entry ``((i, a), (j, b))`` of the sensitivity matrices is built from the
conjugated impedance of the common slack path of nodes ``i`` and ``j``::

    R = 2 Re{conj(Z_ij^ab) w^(a-b)},   X = -2 Im{conj(Z_ij^ab) w^(a-b)}

with ``w = exp(-2j*pi/3)``.  For a single phase this is twice the summed
resistance (reactance) of the common path.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, FeederError

OMEGA = np.exp(-2j * np.pi / 3)
# exact 1 for a == b
OMEGA_POW = np.array([1.0 + 0.0j, OMEGA, OMEGA ** 2])
SLACK_ANGLES = np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])


def omega_pow(diff):
    return OMEGA_POW[np.mod(diff, 3)]


@dataclass(frozen=True, eq=False)
class SensitivityModel:
    mode: str  # "single-phase" | "multi-phase"
    R: np.ndarray
    X: np.ndarray
    v_tilde: np.ndarray
    state_index: tuple
    lca: np.ndarray  # node positions, shape (n_nodes, n_nodes)
    cum_z: np.ndarray  # summed line impedance along the slack path, (n_nodes, 3, 3)
    pos: dict  # node id -> position

    @property
    def n(self):
        return len(self.state_index)

    def zbar(self, i, j):
        """Conjugated common-path impedance matrix (3x3, phases a, b, c)."""
        try:
            a, b = self.pos[i], self.pos[j]
        except KeyError as exc:
            raise FeederError(f"unknown node {exc.args[0]}") from None
        return np.conj(self.cum_z[self.lca[a, b]])

    def entries(self, node_id):
        return [k for k, (nid, _) in enumerate(self.state_index) if nid == node_id]


def cumulative_impedance(model):
    cum = np.zeros((len(model.ids), 3, 3), dtype=np.complex128)
    for node in model.preorder[1:]:
        cum[node] = cum[model.parent[node]] + model.zmat[node]
    return cum


def _build(model, mode):
    lca = _kernels.lca_matrix(np.ascontiguousarray(model.parent),
                              np.ascontiguousarray(model.preorder),
                              np.ascontiguousarray(model.tin),
                              np.ascontiguousarray(model.tout))
    cum = cumulative_impedance(model)
    sp, sph = model.state_pos, model.state_phase
    anc = lca[np.ix_(sp, sp)]
    zc = np.conj(cum[anc, sph[:, None], sph[None, :]])
    rot = zc * omega_pow(sph[:, None] - sph[None, :])
    R = 2.0 * rot.real
    X = -2.0 * rot.imag
    v0 = model.slack_voltage ** 2
    v_tilde = np.full(model.n_state, v0)
    for arr in (R, X, v_tilde, lca, cum):
        arr.flags.writeable = False
    return SensitivityModel(mode, R, X, v_tilde, model.state_index, lca, cum, dict(model.pos))


def build_single_phase(model):
    if not model.is_single_phase:
        raise FeederError("build_single_phase needs a single-phase feeder")
    return _build(model, "single-phase")


def build_multi_phase(model):
    for k in range(1, len(model.ids)):
        missing = set(model.nodes[k].phases) - set(model.nodes[model.parent[k]].phases)
        if missing:  # pragma: no cover - rejected by FeederModel already
            raise FeederError(f"line into node {model.ids[k]} lacks phases {missing}")
    return _build(model, "multi-phase")


def build(model):
    return build_single_phase(model) if model.is_single_phase else build_multi_phase(model)


def predict_voltage(sm, p, q):
    """Squared voltage magnitudes under the linear model."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (sm.n,) or q.shape != (sm.n,):
        raise DimensionError(f"expected injections of length {sm.n}, got {p.shape}, {q.shape}")
    return sm.R @ p + sm.X @ q + sm.v_tilde


def area_blocks(sm, model, part):
    """One sensitivity block per ordered area pair, taken at the area roots.

    Returns ``{(h, k): (R_block, X_block)}``; blocks are indexed by the state
    entries of root ``h`` (rows) and root ``k`` (columns).
    """
    out = {}
    for a in part.areas:
        ra = model.entries_of([a.root])
        for b in part.areas:
            rb = model.entries_of([b.root])
            out[(a.k, b.k)] = (sm.R[np.ix_(ra, rb)], sm.X[np.ix_(ra, rb)])
    return out


def export_matrices(sm, path):
    """Dense CSV dump of R, X and the state index, for debugging."""
    labels = [f"{nid}:{'abc'[ph]}" for nid, ph in sm.state_index]
    with open(path, "w") as fh:
        fh.write("# schema_version=1\n")
        fh.write("matrix,row," + ",".join(labels) + "\n")
        for name, mat in (("R", sm.R), ("X", sm.X)):
            for lab, row in zip(labels, mat):
                fh.write(f"{name},{lab}," + ",".join(repr(float(x)) for x in row) + "\n")
