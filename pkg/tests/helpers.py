"""Small feeder builders shared by the tests."""

import numpy as np

from madsse.grid import FeederModel, LineRecord, NodeRecord, generate_feeder


def chain(rs, xs=None, loads=None):
    """Single-phase chain 0-1-...-n with per-line r, x (pu)."""
    xs = xs or [0.0] * len(rs)
    loads = loads or [(-0.01, -0.005)] * len(rs)
    nodes = [NodeRecord(0, (0,), "slack")]
    lines = []
    for k, (r, x) in enumerate(zip(rs, xs), start=1):
        p, q = loads[k - 1]
        nodes.append(NodeRecord(k, (0,), "load", (p,), (q,)))
        lines.append(LineRecord(k - 1, k, [[complex(r, x)]]))
    return FeederModel(nodes, lines)


def star(r=0.1, x=0.05, legs=2):
    nodes = [NodeRecord(0, (0,), "slack")]
    lines = []
    for k in range(1, legs + 1):
        nodes.append(NodeRecord(k, (0,), "load", (-0.01,), (-0.005,)))
        lines.append(LineRecord(0, k, [[complex(r, x)]]))
    return FeederModel(nodes, lines)


def flat_roots(model, k, rng):
    """Up to ``k`` roots, none an ancestor of another, slack excluded."""
    cand = list(model.ids[1:])
    rng.shuffle(cand)
    out = []
    for c in cand:
        if len(out) >= k:
            break
        if all(c not in model.descendants(r) and r not in model.descendants(c) for r in out):
            out.append(c)
    return out


def random_feeder(seed, size=None, multiphase=False, load_fraction=None):
    rng = np.random.default_rng(seed)
    size = size or int(rng.integers(5, 40))
    lf = float(rng.uniform(0.2, 1.0)) if load_fraction is None else load_fraction
    return generate_feeder(size=size, seed=seed, multiphase=multiphase, load_fraction=lf,
                           branching=int(rng.integers(1, 4)))
