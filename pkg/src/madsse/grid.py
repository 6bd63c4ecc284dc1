"""Radial multi-phase feeder model, feeder documents, generator and areas.

Phases are numbered a=0, b=1, c=2 everywhere.  All quantities stored on a
:class:`FeederModel` are per-unit; documents in SI units are converted when
loaded.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FeederError, PartitionError

FORMAT_VERSION = 1
PHASE_NAMES = "abc"
KINDS = ("slack", "zero-injection", "load")


def parse_phases(text):
    if isinstance(text, str):
        try:
            out = tuple(sorted({PHASE_NAMES.index(c) for c in text.lower()}))
        except ValueError:
            raise FeederError(f"bad phase string {text!r}") from None
    else:
        out = tuple(sorted(set(int(p) for p in text)))
    if not out or any(p not in (0, 1, 2) for p in out):
        raise FeederError(f"bad phase set {text!r}")
    return out


def phase_str(phases):
    return "".join(PHASE_NAMES[p] for p in phases)


@dataclass(frozen=True)
class NodeRecord:
    """One bus.  Per-phase tuples follow the order of ``phases``."""

    id: int
    phases: tuple
    kind: str
    p_nom: tuple = ()
    q_nom: tuple = ()
    p_min: tuple = ()
    p_max: tuple = ()
    q_min: tuple = ()
    q_max: tuple = ()


@dataclass(frozen=True, eq=False)
class LineRecord:
    from_id: int
    to_id: int
    z: np.ndarray  # complex, over the phases of ``to_id``


@dataclass(frozen=True)
class Area:
    k: int
    root: int
    nodes: frozenset


@dataclass(frozen=True)
class AreaPartition:
    areas: tuple
    unclustered: frozenset
    nested: bool = False

    @property
    def K(self):
        return len(self.areas)

    def area_of(self, node_id):
        """Area number of a node, 0 for the unclustered remainder."""
        for a in self.areas:
            if node_id in a.nodes:
                return a.k
        return 0


def _default_box(kind, p_nom, q_nom):
    if kind != "load":
        zeros = tuple(0.0 for _ in p_nom)
        return zeros, zeros, zeros, zeros
    p_min = tuple(-2.0 * abs(p) for p in p_nom)
    p_max = tuple(0.0 for _ in p_nom)
    q_min = tuple(-2.0 * abs(q) for q in q_nom)
    q_max = tuple(2.0 * abs(q) for q in q_nom)
    return p_min, p_max, q_min, q_max


class FeederModel:
    """Validated radial feeder.

    Node positions index all per-node arrays: the slack is position 0 and the
    remaining nodes follow in ascending id order.  The state index lists
    ``(node_id, phase)`` for every non-slack node and phase in that order.
    """

    def __init__(self, nodes, lines, base_voltage=1.0, base_power=1.0,
                 slack_voltage=1.0):
        self.base_voltage = float(base_voltage)
        self.base_power = float(base_power)
        self.slack_voltage = float(slack_voltage)
        nodes = [self._check_node(n) for n in nodes]
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise FeederError(f"duplicate node ids {dup}", dup)
        slacks = [n.id for n in nodes if n.kind == "slack"]
        if len(slacks) != 1:
            raise FeederError(f"expected exactly one slack node, got {slacks}", slacks)
        self.slack_id = slacks[0]
        by_id = {n.id: n for n in nodes}
        self.ids = [self.slack_id] + sorted(i for i in ids if i != self.slack_id)
        self.pos = {nid: k for k, nid in enumerate(self.ids)}
        self.nodes = tuple(by_id[i] for i in self.ids)
        self.lines = tuple(lines)
        self._build_topology()
        self._check_phases()
        self._build_arrays()

    # -- validation -------------------------------------------------------

    @staticmethod
    def _check_node(n):
        if n.kind not in KINDS:
            raise FeederError(f"node {n.id}: unknown kind {n.kind!r}", [n.id])
        phases = parse_phases(n.phases)
        k = len(phases)
        p_nom = tuple(float(x) for x in n.p_nom) or (0.0,) * k
        q_nom = tuple(float(x) for x in n.q_nom) or (0.0,) * k
        if len(p_nom) != k or len(q_nom) != k:
            raise FeederError(f"node {n.id}: nominal injections do not match phases", [n.id])
        box = [tuple(float(x) for x in b) for b in (n.p_min, n.p_max, n.q_min, n.q_max)]
        default = _default_box(n.kind, p_nom, q_nom)
        box = [b if b else d for b, d in zip(box, default)]
        if any(len(b) != k for b in box):
            raise FeederError(f"node {n.id}: feasible box does not match phases", [n.id])
        p_min, p_max, q_min, q_max = box
        if any(lo > hi for lo, hi in zip(p_min, p_max)) or any(
                lo > hi for lo, hi in zip(q_min, q_max)):
            raise FeederError(f"node {n.id}: empty feasible box", [n.id])
        if n.kind == "zero-injection" and any(v != 0.0 for b in box for v in b):
            raise FeederError(f"node {n.id}: zero-injection box must be {{(0,0)}}", [n.id])
        if n.kind == "zero-injection" and any(v != 0.0 for v in p_nom + q_nom):
            raise FeederError(f"node {n.id}: zero-injection node with load", [n.id])
        return NodeRecord(n.id, phases, n.kind, p_nom, q_nom, p_min, p_max, q_min, q_max)

    def _build_topology(self):
        n = len(self.ids)
        seen_pairs = set()
        parent_line = {}
        for k, ln in enumerate(self.lines):
            for end in (ln.from_id, ln.to_id):
                if end not in self.pos:
                    raise FeederError(f"line {ln.from_id}->{ln.to_id} references unknown node {end}",
                                      [end])
            pair = frozenset((ln.from_id, ln.to_id))
            if pair in seen_pairs or ln.from_id == ln.to_id:
                raise FeederError(f"duplicate line {ln.from_id}->{ln.to_id}",
                                  [ln.from_id, ln.to_id])
            seen_pairs.add(pair)
            if ln.to_id in parent_line:
                other = self.lines[parent_line[ln.to_id]]
                raise FeederError(
                    f"cycle detected: node {ln.to_id} fed by {other.from_id} and {ln.from_id}",
                    [ln.to_id, other.from_id, ln.from_id])
            parent_line[ln.to_id] = k
        parent_id = {c: self.lines[k].from_id for c, k in parent_line.items()}
        rooted = {self.slack_id}
        for nid in self.ids:
            path = [nid]
            on_path = {nid}
            cur = nid
            while cur not in rooted:
                if cur not in parent_id:
                    raise FeederError(f"orphan node {cur}: no path to the slack", [cur])
                cur = parent_id[cur]
                if cur in on_path:
                    cyc = path[path.index(cur):]
                    raise FeederError(f"cycle detected through nodes {sorted(cyc)}", sorted(cyc))
                path.append(cur)
                on_path.add(cur)
            rooted.update(path)
        if self.slack_id in parent_line:
            raise FeederError("cycle detected: slack has a parent line", [self.slack_id])
        if len(self.lines) != n - 1:  # pragma: no cover - implied by the checks above
            raise FeederError("line count does not match node count")

        parent = np.full(n, -1, dtype=np.int64)
        line_of = np.full(n, -1, dtype=np.int64)
        children = [[] for _ in range(n)]
        for c, k in parent_line.items():
            pc, pp = self.pos[c], self.pos[parent_id[c]]
            parent[pc] = pp
            line_of[pc] = k
            children[pp].append(pc)
        for ch in children:
            ch.sort()
        self.parent = parent
        self.line_of = line_of
        self.children = [tuple(c) for c in children]

        preorder = []
        stack = [0]
        while stack:
            node = stack.pop()
            preorder.append(node)
            stack.extend(reversed(children[node]))
        preorder = np.array(preorder, dtype=np.int64)
        tin = np.empty(n, dtype=np.int64)
        tin[preorder] = np.arange(n)
        size = np.ones(n, dtype=np.int64)
        for node in preorder[::-1][:-1]:
            size[parent[node]] += size[node]
        depth = np.zeros(n, dtype=np.int64)
        for node in preorder[1:]:
            depth[node] = depth[parent[node]] + 1
        self.preorder = preorder
        self.tin = tin
        self.tout = tin + size
        self.depth = depth
        self.order = np.argsort(depth, kind="stable").astype(np.int64)
        self.levels = [np.flatnonzero(depth == d) for d in range(depth.max() + 1)]

    def _check_phases(self):
        slack_ph = set(self.nodes[0].phases)
        for k in range(1, len(self.ids)):
            node = self.nodes[k]
            par = self.nodes[self.parent[k]]
            if not set(node.phases) <= slack_ph:
                raise FeederError(f"node {node.id}: phases {phase_str(node.phases)} not at slack",
                                  [node.id])
            if not set(node.phases) <= set(par.phases):
                raise FeederError(
                    f"node {node.id}: phases {phase_str(node.phases)} not a subset of parent "
                    f"{par.id} ({phase_str(par.phases)})", [node.id, par.id])
            ln = self.lines[self.line_of[k]]
            z = np.asarray(ln.z, dtype=complex)
            m = len(node.phases)
            if z.shape != (m, m):
                raise FeederError(f"line {ln.from_id}->{ln.to_id}: impedance shape {z.shape}, "
                                  f"expected {(m, m)}", [ln.from_id, ln.to_id])
            if np.any(np.diag(z).real < 0):
                raise FeederError(f"line {ln.from_id}->{ln.to_id}: negative resistance",
                                  [ln.from_id, ln.to_id])
            scale = max(np.abs(z).max(), 1e-300)
            if np.abs(z - z.T).max() > 1e-12 * scale:
                raise FeederError(f"line {ln.from_id}->{ln.to_id}: impedance not symmetric",
                                  [ln.from_id, ln.to_id])

    def _build_arrays(self):
        n = len(self.ids)
        mask = np.zeros((n, 3), dtype=bool)
        zmat = np.zeros((n, 3, 3), dtype=np.complex128)
        for k, node in enumerate(self.nodes):
            mask[k, list(node.phases)] = True
            if k:
                ph = list(node.phases)
                zmat[k][np.ix_(ph, ph)] = np.asarray(self.lines[self.line_of[k]].z, dtype=complex)
        state = [(self.ids[k], ph) for k in range(1, n) for ph in self.nodes[k].phases]
        self.mask = mask
        self.zmat = zmat
        self.state_index = tuple(state)
        self.state_pos = np.array([self.pos[i] for i, _ in state], dtype=np.int64)
        self.state_phase = np.array([ph for _, ph in state], dtype=np.int64)
        self._entry = {key: k for k, key in enumerate(state)}

        def per_state(attr):
            out = np.zeros(len(state))
            for k, (nid, ph) in enumerate(state):
                node = self.nodes[self.pos[nid]]
                out[k] = getattr(node, attr)[node.phases.index(ph)]
            return out

        self.p_nom = per_state("p_nom")
        self.q_nom = per_state("q_nom")
        self.p_min = per_state("p_min")
        self.p_max = per_state("p_max")
        self.q_min = per_state("q_min")
        self.q_max = per_state("q_max")
        self.is_load = np.array([self.nodes[self.pos[nid]].kind == "load" for nid, _ in state])
        for arr in (self.parent, self.line_of, self.preorder, self.tin, self.tout, self.depth,
                    self.order, self.mask, self.zmat, self.state_pos, self.state_phase,
                    self.p_nom, self.q_nom, self.p_min, self.p_max, self.q_min, self.q_max,
                    self.is_load):
            arr.flags.writeable = False

    # -- queries ----------------------------------------------------------

    @property
    def N(self):
        """Number of non-slack nodes."""
        return len(self.ids) - 1

    @property
    def n_state(self):
        return len(self.state_index)

    @property
    def slack_phases(self):
        return self.nodes[0].phases

    @property
    def is_single_phase(self):
        return len(self.slack_phases) == 1

    def node(self, node_id):
        try:
            return self.nodes[self.pos[node_id]]
        except KeyError:
            raise FeederError(f"unknown node {node_id}", [node_id]) from None

    def entry(self, node_id, phase):
        """State-vector position of ``(node_id, phase)``."""
        try:
            return self._entry[(node_id, phase)]
        except KeyError:
            raise FeederError(f"no state entry for node {node_id} phase {phase}",
                              [node_id]) from None

    def entries_of(self, node_ids):
        """State positions of every phase of the given nodes, in state order."""
        wanted = {self.pos[i] for i in node_ids if i != self.slack_id}
        return np.flatnonzero(np.isin(self.state_pos, list(wanted)))

    def path_nodes(self, node_id):
        """Node positions from the slack to ``node_id`` (inclusive)."""
        k = self.pos[node_id]
        out = []
        while k >= 0:
            out.append(k)
            k = self.parent[k]
        return out[::-1]

    def descendants(self, node_id):
        k = self.pos[node_id]
        return {self.ids[p] for p in self.preorder[self.tin[k]:self.tout[k]]}

    def phase_subnetwork(self, phase):
        """Single-phase model of the nodes carrying ``phase`` (self-impedances only)."""
        if phase not in self.slack_phases:
            raise FeederError(f"phase {phase} not present at slack")
        keep = [n for n in self.nodes if phase in n.phases]
        nodes = []
        for n in keep:
            i = n.phases.index(phase)
            pick = lambda t: (t[i],) if t else ()
            nodes.append(NodeRecord(n.id, (phase,), n.kind, pick(n.p_nom), pick(n.q_nom),
                                    pick(n.p_min), pick(n.p_max), pick(n.q_min), pick(n.q_max)))
        kept = {n.id for n in keep}
        lines = []
        for ln in self.lines:
            if ln.to_id in kept:
                child = self.node(ln.to_id)
                i = child.phases.index(phase)
                lines.append(LineRecord(ln.from_id, ln.to_id,
                                        np.array([[np.asarray(ln.z)[i, i]]], dtype=complex)))
        return FeederModel(nodes, lines, self.base_voltage, self.base_power, self.slack_voltage)


# --------------------------------------------------------------------------
# documents


def dump_feeder(model):
    """Feeder document (a plain dict) in per-unit."""
    nodes = []
    for n in model.nodes:
        rec = {"id": n.id, "phases": phase_str(n.phases), "kind": n.kind}
        if n.kind != "slack":
            for attr in ("p_nom", "q_nom", "p_min", "p_max", "q_min", "q_max"):
                rec[attr] = list(getattr(n, attr))
        nodes.append(rec)
    lines = []
    for ln in model.lines:
        z = np.asarray(ln.z, dtype=complex)
        lines.append({"from": ln.from_id, "to": ln.to_id,
                      "r": z.real.tolist(), "x": z.imag.tolist()})
    return {"format_version": FORMAT_VERSION, "units": "pu",
            "base_voltage": model.base_voltage, "base_power": model.base_power,
            "slack_voltage": model.slack_voltage, "nodes": nodes, "lines": lines}


def feeder_json(model):
    return json.dumps(dump_feeder(model), sort_keys=True, indent=1)


def save_feeder(model, path):
    Path(path).write_text(feeder_json(model) + "\n")


def load_feeder(document):
    """Build a :class:`FeederModel` from a document dict, JSON text or path.

    A directory (or a ``nodes.csv`` path) is read as the CSV pair.
    """
    if isinstance(document, (str, Path)) and not str(document).lstrip().startswith("{"):
        path = Path(document)
        if path.is_dir() or path.name == "nodes.csv":
            base = path if path.is_dir() else path.parent
            return load_feeder_csv(base / "nodes.csv", base / "lines.csv")
        document = path.read_text()
    if isinstance(document, str):
        document = json.loads(document)
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise FeederError(f"unsupported format_version {version!r}")
    units = document.get("units", "pu")
    vb = float(document.get("base_voltage", 1.0))
    sb = float(document.get("base_power", 1.0))
    if units == "pu":
        zscale, sscale = 1.0, 1.0
    elif units == "si":
        zscale, sscale = 1.0 / (vb * vb / sb), 1.0 / sb
    else:
        raise FeederError(f"unknown units {units!r}")
    nodes = []
    for rec in document["nodes"]:
        vals = {a: tuple(float(x) * sscale for x in rec.get(a, ()))
                for a in ("p_nom", "q_nom", "p_min", "p_max", "q_min", "q_max")}
        nodes.append(NodeRecord(rec["id"], parse_phases(rec["phases"]), rec["kind"], **vals))
    lines = []
    for rec in document["lines"]:
        z = (np.atleast_2d(np.asarray(rec["r"], dtype=float))
             + 1j * np.atleast_2d(np.asarray(rec["x"], dtype=float))) * zscale
        lines.append(LineRecord(rec["from"], rec["to"], z))
    return FeederModel(nodes, lines, vb, sb, document.get("slack_voltage", 1.0))


_NODE_COLS = ["id", "phase", "kind", "p_nom", "q_nom", "p_min", "p_max", "q_min", "q_max"]
_LINE_COLS = ["from", "to", "phase_row", "phase_col", "r", "x"]


def save_feeder_csv(model, directory):
    """Write ``nodes.csv`` (one row per node phase) and ``lines.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = (f"# format_version={FORMAT_VERSION},units=pu,base_voltage={model.base_voltage!r},"
            f"base_power={model.base_power!r},slack_voltage={model.slack_voltage!r}\n")
    with open(d / "nodes.csv", "w", newline="") as fh:
        fh.write(meta)
        w = csv.writer(fh)
        w.writerow(_NODE_COLS)
        for n in model.nodes:
            for k, ph in enumerate(n.phases):
                vals = [""] * 6 if n.kind == "slack" else [
                    repr(getattr(n, a)[k]) for a in _NODE_COLS[3:]]
                w.writerow([n.id, PHASE_NAMES[ph], n.kind] + vals)
    with open(d / "lines.csv", "w", newline="") as fh:
        fh.write(meta)
        w = csv.writer(fh)
        w.writerow(_LINE_COLS)
        for ln in model.lines:
            ph = model.node(ln.to_id).phases
            z = np.asarray(ln.z, dtype=complex)
            for a in range(len(ph)):
                for b in range(len(ph)):
                    w.writerow([ln.from_id, ln.to_id, PHASE_NAMES[ph[a]], PHASE_NAMES[ph[b]],
                                repr(float(z[a, b].real)), repr(float(z[a, b].imag))])


def _read_csv(path):
    with open(path, newline="") as fh:
        first = fh.readline()
        meta = {}
        if first.startswith("#"):
            for item in first[1:].strip().split(","):
                key, _, val = item.partition("=")
                meta[key.strip()] = val.strip()
        else:
            fh.seek(0)
        rows = list(csv.DictReader(fh))
    return meta, rows


def load_feeder_csv(nodes_path, lines_path):
    meta, node_rows = _read_csv(nodes_path)
    _, line_rows = _read_csv(lines_path)
    nodes = {}
    for row in node_rows:
        nid = int(row["id"])
        rec = nodes.setdefault(nid, {"id": nid, "phases": "", "kind": row["kind"]})
        if rec["kind"] != row["kind"]:
            raise FeederError(f"node {nid}: inconsistent kind across phases", [nid])
        rec["phases"] += row["phase"]
        for a in _NODE_COLS[3:]:
            if row.get(a, "") != "":
                rec.setdefault(a, []).append(float(row[a]))
    lines = {}
    for row in line_rows:
        key = (int(row["from"]), int(row["to"]))
        lines.setdefault(key, []).append(row)
    line_docs = []
    for (f, t), rows in lines.items():
        child = nodes.get(t)
        if child is None:
            raise FeederError(f"line {f}->{t} references unknown node {t}", [t])
        ph = parse_phases(child["phases"])
        m = len(ph)
        r = np.zeros((m, m))
        x = np.zeros((m, m))
        for row in rows:
            a = ph.index(PHASE_NAMES.index(row["phase_row"]))
            b = ph.index(PHASE_NAMES.index(row["phase_col"]))
            r[a, b] = float(row["r"])
            x[a, b] = float(row["x"])
        line_docs.append({"from": f, "to": t, "r": r.tolist(), "x": x.tolist()})
    doc = {"format_version": int(meta.get("format_version", FORMAT_VERSION)),
           "units": meta.get("units", "pu"),
           "base_voltage": float(meta.get("base_voltage", 1.0)),
           "base_power": float(meta.get("base_power", 1.0)),
           "slack_voltage": float(meta.get("slack_voltage", 1.0)),
           "nodes": list(nodes.values()), "lines": line_docs}
    return load_feeder(doc)


# --------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class FeederSpec:
    """Parameters of :func:`generate_feeder`.

    ``size`` counts non-slack nodes.  Loads are rescaled so that the linear
    voltage-magnitude drop at the farthest node equals ``max_drop``.
    """

    size: int
    seed: int = 0
    branching: int = 3
    window: int = 4
    r_range: tuple = (0.004, 0.012)
    xr_range: tuple = (0.6, 1.4)
    load_fraction: float = 0.3
    load_spread: tuple = (0.5, 1.5)
    pf_range: tuple = (0.85, 0.95)
    max_drop: float = 0.05
    multiphase: bool = False
    lateral_prob: float = 0.25
    mutual: float = 0.4
    base_voltage: float = 2401.8
    base_power: float = 1.0e6


def generate_feeder(spec=None, **kw):
    """Random radial feeder; a pure function of ``spec``."""
    spec = spec or FeederSpec(**kw)
    if spec.size < 1:
        raise FeederError("size must be >= 1")
    if spec.branching < 1:
        raise FeederError("branching factor must be >= 1")
    if spec.window < 1:
        raise FeederError("window must be >= 1")
    if min(spec.r_range) <= 0 or min(spec.xr_range) <= 0:
        raise FeederError("impedance ranges must be positive")
    if not 0.0 <= spec.load_fraction <= 1.0:
        raise FeederError("load_fraction must lie in [0, 1]")
    rng = np.random.default_rng(spec.seed)
    parents = [-1]
    nchild = [0]
    open_nodes = [0]
    for i in range(1, spec.size + 1):
        lo = max(0, len(open_nodes) - spec.window)
        par = open_nodes[int(rng.integers(lo, len(open_nodes)))]
        parents.append(par)
        nchild[par] += 1
        nchild.append(0)
        if nchild[par] >= spec.branching:
            open_nodes.remove(par)
        open_nodes.append(i)
    ids = list(range(spec.size + 1))
    n_load = int(round(spec.load_fraction * spec.size))
    loads = set((rng.permutation(spec.size)[:n_load] + 1).tolist())
    return _assemble(ids, parents, loads, spec, rng)


def _assemble(ids, parents, loads, spec, rng):
    """Phases, impedances and loads for a given tree (``parents`` by list index)."""
    n = len(ids)
    phases = [(0, 1, 2) if spec.multiphase else (0,)]
    for i in range(1, n):
        pph = phases[parents[i]]
        if spec.multiphase and len(pph) > 1 and rng.random() < spec.lateral_prob:
            phases.append((int(rng.choice(pph)),))
        else:
            phases.append(pph)
    zs = [None]
    for i in range(1, n):
        r = rng.uniform(*spec.r_range)
        x = r * rng.uniform(*spec.xr_range)
        m = len(phases[i])
        zself = complex(r, x)
        z = np.full((m, m), spec.mutual * zself, dtype=complex)
        np.fill_diagonal(z, zself)
        zs.append(z)
    p = [np.zeros(len(ph)) for ph in phases]
    q = [np.zeros(len(ph)) for ph in phases]
    for i in range(1, n):
        if ids[i] in loads:
            m = len(phases[i])
            p[i] = -rng.uniform(*spec.load_spread, size=m)
            pf = rng.uniform(*spec.pf_range, size=m)
            q[i] = p[i] * np.tan(np.arccos(pf))
    # per-phase linear drop with self impedances only
    order = sorted(range(1, n), key=lambda i: _depth(parents, i))
    worst = 0.0
    for ph in range(3):
        flow_p = np.zeros(n)
        flow_q = np.zeros(n)
        for i in reversed(order):
            if ph in phases[i]:
                k = phases[i].index(ph)
                flow_p[i] += -p[i][k]
                flow_q[i] += -q[i][k]
                flow_p[parents[i]] += flow_p[i]
                flow_q[parents[i]] += flow_q[i]
        drop = np.zeros(n)
        for i in order:
            if ph in phases[i]:
                k = phases[i].index(ph)
                z = zs[i][k, k]
                drop[i] = drop[parents[i]] + 2.0 * (z.real * flow_p[i] + z.imag * flow_q[i])
        worst = max(worst, drop.max())
    scale = 2.0 * spec.max_drop / worst if worst > 0 else 1.0
    nodes = [NodeRecord(ids[0], phases[0], "slack")]
    for i in range(1, n):
        kind = "load" if ids[i] in loads else "zero-injection"
        nodes.append(NodeRecord(ids[i], phases[i], kind,
                                tuple((p[i] * scale).tolist()), tuple((q[i] * scale).tolist())))
    lines = [LineRecord(ids[parents[i]], ids[i], zs[i]) for i in range(1, n)]
    return FeederModel(nodes, lines, spec.base_voltage, spec.base_power)


def _depth(parents, i):
    d = 0
    while parents[i] >= 0:
        i = parents[i]
        d += 1
    return d


# 37-node layout: slack 1, subtree roots 3, 13 and 20; roots 13 and 20 hang
# off node 4, so their common path back to the slack is 1-2-4.
LAYOUT_37 = {
    2: 1, 3: 2, 4: 2, 5: 3, 6: 5, 8: 5, 9: 6, 10: 9, 11: 8, 12: 11,
    13: 4, 14: 13, 15: 14, 16: 14, 17: 16, 18: 17, 19: 15,
    20: 4, 21: 20, 22: 21, 23: 22, 24: 21, 25: 24, 26: 25, 27: 26,
    7: 4, 28: 7, 29: 28, 30: 29, 31: 30, 32: 29, 33: 32, 34: 33, 35: 34, 36: 28, 37: 36,
}
AREA_ROOTS_37 = (3, 13, 20)
METERS_37 = (6, 12, 34)


def sample_feeder_37(seed=37, max_drop=0.05):
    """Single-phase 37-node feeder with every non-slack node a load."""
    ids = [1] + sorted(LAYOUT_37)
    index = {nid: k for k, nid in enumerate(ids)}
    parents = [-1] + [index[LAYOUT_37[nid]] for nid in ids[1:]]
    spec = FeederSpec(size=36, seed=seed, load_fraction=1.0, max_drop=max_drop)
    rng = np.random.default_rng(seed)
    return _assemble(ids, parents, set(ids[1:]), spec, rng)


# --------------------------------------------------------------------------
# areas and paths


def partition(model, roots):
    """Split the feeder into subtree areas rooted at ``roots``.

    Area ``k`` (1-based, in the order given) holds its root and every
    descendant not claimed by a deeper root.  Everything else, including the
    slack, is unclustered.
    """
    roots = list(roots)
    if len(set(roots)) != len(roots):
        raise PartitionError(f"duplicate roots in {roots}")
    for r in roots:
        if r not in model.pos:
            raise PartitionError(f"unknown root {r}")
        if r == model.slack_id:
            raise PartitionError("the slack cannot be an area root")
    root_area = {model.pos[r]: k + 1 for k, r in enumerate(roots)}
    area_of = np.zeros(len(model.ids), dtype=np.int64)
    for node in model.preorder[1:]:
        area_of[node] = root_area.get(int(node), area_of[model.parent[node]])
    nested = any(area_of[model.parent[model.pos[r]]] != 0 for r in roots)
    areas = tuple(Area(k + 1, r, frozenset(model.ids[p] for p in np.flatnonzero(area_of == k + 1)))
                  for k, r in enumerate(roots))
    uncl = frozenset(model.ids[p] for p in np.flatnonzero(area_of == 0))
    return AreaPartition(areas, uncl, nested)


def lowest_common_ancestor(model, i, j):
    for nid in (i, j):
        if nid not in model.pos:
            raise FeederError(f"unknown node {nid}", [nid])
    pi, pj = model.path_nodes(i), model.path_nodes(j)
    k = 0
    while k < min(len(pi), len(pj)) and pi[k] == pj[k]:
        k += 1
    return model.ids[pi[k - 1]]


def common_path(model, i, j):
    """Lines shared by the slack-to-``i`` and slack-to-``j`` paths, slack outward."""
    lca = lowest_common_ancestor(model, i, j)
    nodes = model.path_nodes(lca)
    return [(model.ids[a], model.ids[b]) for a, b in zip(nodes[:-1], nodes[1:])]
