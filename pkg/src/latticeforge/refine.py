"""Two-stage structural repair: symmetrize the nodes, then rebuild edges for
symmetry closure and periodic face matching; repeat until valid.

The line-based text form at the bottom is what a language-model backend
would consume and emit in place of the geometric repair.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Frame, LatticeError, SymmetryGroup, UnitCell, apply_symmetry, canonical_clean
from .validity import ValidityReport, evaluate, resolve_frame

_MOVE_EPS = 1e-12


@dataclass(frozen=True)
class RefineConfig:
    group: str | SymmetryGroup = "mirrors"
    merge_tol: float = 0.01
    snap_tol: float = 0.05
    pair_tol: float = 0.02
    target_threshold: float = 0.005
    max_cycles: int = 5
    frame: str | Frame = "unit"

    def __post_init__(self):
        if not 0 <= self.merge_tol < self.snap_tol:
            raise LatticeError("need 0 <= merge_tol < snap_tol")
        if self.target_threshold < 0:
            raise LatticeError("target_threshold must be non-negative")
        if self.max_cycles < 1:
            raise LatticeError("max_cycles must be >= 1")
        object.__setattr__(self, "group", SymmetryGroup.preset(self.group))


@dataclass
class CycleRecord:
    cycle: int
    nodes_moved: int = 0
    nodes_added: int = 0
    nodes_removed: int = 0
    edges_added: int = 0
    edges_removed: int = 0
    report: ValidityReport | None = None

    @property
    def modifications(self) -> int:
        return self.nodes_moved + self.nodes_added + self.nodes_removed + self.edges_added + self.edges_removed


@dataclass
class RefineTrace:
    cycles: list = field(default_factory=list)
    converged: bool = False


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _compact(verts, edges, alias):
    """Drop vertices with ``alias[i] != i`` and re-target their edges onto the
    alias; returns the cleaned cell and the old->new index map."""
    n = len(verts)
    keep = np.array([alias[i] == i for i in range(n)], dtype=bool)
    new_index = np.cumsum(keep) - 1
    mapping = np.array([new_index[alias[i]] for i in range(n)], dtype=int)
    e = [(mapping[i], mapping[j]) for i, j in edges]
    return np.asarray(verts)[keep], e, mapping


def _merge_close(verts, edges, tol):
    n = len(verts)
    uf = _UnionFind(n)
    if tol > 0 and n > 1:
        d = np.sqrt(((verts[:, None] - verts[None]) ** 2).sum(-1))
        for i, j in zip(*np.nonzero(np.triu(d <= tol, 1))):
            uf.union(int(i), int(j))
    alias = [uf.find(i) for i in range(n)]
    verts = np.array(verts)
    for root in set(alias):
        members = [i for i in range(n) if alias[i] == root]
        if len(members) > 1:
            verts[root] = verts[members].mean(axis=0)
    merged = n - len(set(alias))
    v, e, mapping = _compact(verts, edges, alias)
    return v, e, mapping, merged


def _group_closure(ops, members):
    """Indices of the subgroup generated by ``members``."""
    keys = [tuple(np.asarray(o).ravel()) for o in ops]
    index = {k: i for i, k in enumerate(keys)}
    sub = set(members) | {0}
    changed = True
    while changed:
        changed = False
        for a in list(sub):
            for b in list(sub):
                k = index[tuple((np.asarray(ops[a]) @ np.asarray(ops[b])).ravel())]
                if k not in sub:
                    sub.add(k)
                    changed = True
    return sorted(sub)


def _has_close_pair(verts, tol) -> bool:
    if len(verts) < 2 or tol <= 0:
        return False
    d = np.sqrt(((verts[:, None] - verts[None]) ** 2).sum(-1))
    return bool(np.any(np.triu(d <= tol, 1)))


_NODE_PASSES = 4


def _node_stage(cell: UnitCell, cfg: RefineConfig, frame: Frame):
    """Merge + symmetrize, repeated while two orbits still land within
    ``merge_tol`` of each other (orbits that just missed ``snap_tol``)."""
    total = dict(nodes_moved=0, nodes_added=0, nodes_removed=0, edges_removed=0)
    current = cell
    for _ in range(_NODE_PASSES):
        current, stats = _node_pass(current, cfg, frame)
        for key in total:
            total[key] += stats[key]
        if not _has_close_pair(current.vertices, cfg.merge_tol * frame.side):
            break
    return current, total


def _node_pass(cell: UnitCell, cfg: RefineConfig, frame: Frame):
    side = frame.side
    ops = cfg.group.ops
    verts0 = np.array(cell.vertices)
    verts, edges, _, merged = _merge_close(verts0, list(cell.edges), cfg.merge_tol * side)
    n = len(verts)
    before = verts.copy()
    out = verts.copy()
    alias = list(range(n))
    claimed = np.full(n, -1)
    added = []
    dup_tol = 1e-9 * side

    for v in range(n):
        if claimed[v] >= 0:
            continue
        claimed[v] = v
        matches = []
        for k, g in enumerate(ops):
            target = apply_symmetry(g, verts[v], frame)
            free = np.nonzero((claimed < 0) | (claimed == v))[0]
            d = np.linalg.norm(verts[free] - target, axis=1)
            best = int(np.argmin(d))
            if d[best] <= cfg.snap_tol * side:
                w = int(free[best])
                claimed[w] = v
                matches.append((k, w))
        c = np.mean([apply_symmetry(ops[k].T, verts[w], frame) for k, w in matches], axis=0)
        near = [k for k, g in enumerate(ops) if np.linalg.norm(apply_symmetry(g, c, frame) - c) <= cfg.snap_tol * side]
        stab = _group_closure(ops, near)
        if len(stab) > 1:
            c = np.mean([apply_symmetry(ops[k], c, frame) for k in stab], axis=0)
        c = np.clip(c, frame.lo, frame.hi)

        points = []  # distinct orbit images
        pid_of_op = []
        for g in ops:
            p = apply_symmetry(g, c, frame)
            for q, existing in enumerate(points):
                if np.max(np.abs(existing - p)) <= dup_tol:
                    pid_of_op.append(q)
                    break
            else:
                pid_of_op.append(len(points))
                points.append(p)
        owner = [None] * len(points)
        assigned = {}
        for k, w in matches:
            pid = pid_of_op[k]
            if w in assigned:
                continue
            if owner[pid] is None:
                owner[pid] = w
                assigned[w] = pid
                out[w] = points[pid]
            elif owner[pid] != w:
                alias[w] = owner[pid]
                assigned[w] = pid
        for pid, p in enumerate(points):
            if owner[pid] is None:
                added.append(p)

    moved = int(sum(1 for i in range(n) if alias[i] == i and np.max(np.abs(out[i] - before[i])) > _MOVE_EPS * side))
    v, e, _ = _compact(out, edges, alias)
    if added:
        v = np.vstack([v, np.array(added)])
    result = canonical_clean(v, e, name=cell.name)
    stats = dict(
        nodes_moved=moved,
        nodes_added=len(added),
        nodes_removed=merged + (n - len(set(alias))),
        edges_removed=cell.n_edges - result.n_edges,
    )
    return result, stats


def refine_nodes(cell: UnitCell, cfg: RefineConfig | None = None, frame=None) -> UnitCell:
    """Merge near-duplicates, snap every orbit onto exact images of one
    canonical point, add missing images, and clamp into the frame."""
    cfg = cfg or RefineConfig()
    if cell.n_vertices == 0:
        raise LatticeError("empty cell")
    return _node_stage(cell, cfg, resolve_frame(cell, frame if frame is not None else cfg.frame))[0]


def _lookup(verts, p, tol):
    d = np.max(np.abs(verts - p), axis=1)
    i = int(np.argmin(d))
    return i if d[i] <= tol else None


def _edge_stage(cell: UnitCell, cfg: RefineConfig, frame: Frame):
    side = frame.side
    verts = np.array(cell.vertices)
    edges = list(cell.edges)
    n_in, e_in = len(verts), len(edges)
    match_tol = max(1e-9, 0.5 * cfg.merge_tol) * side

    # symmetry closure
    present = set(edges)
    for g in cfg.group.ops:
        img = apply_symmetry(g, verts, frame)
        idx = [_lookup(verts, p, match_tol) for p in img]
        for i, j in list(edges):
            a, b = idx[i], idx[j]
            if a is None or b is None or a == b:
                continue
            key = (min(a, b), max(a, b))
            if key not in present:
                present.add(key)
                edges.append(key)

    # periodic face matching, one axis at a time
    tol = cfg.pair_tol * side
    moved = set()
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        on = {
            -1: np.nonzero(np.abs(verts[:, axis] - frame.lo[axis]) <= tol)[0],
            +1: np.nonzero(np.abs(verts[:, axis] - frame.hi[axis]) <= tol)[0],
        }
        partner = {}
        used = set()
        for u in on[-1]:
            cand = [w for w in on[+1] if w not in used and np.max(np.abs(verts[w, others] - verts[u, others])) <= tol]
            if cand:
                w = min(cand, key=lambda w: (np.linalg.norm(verts[w, others] - verts[u, others]), w))
                used.add(w)
                partner[int(u)] = w
                partner[int(w)] = int(u)
                mean = (verts[u, others] + verts[w, others]) / 2
                for x in (u, w):
                    if np.max(np.abs(verts[x, others] - mean)) > _MOVE_EPS * side:
                        moved.add(int(x))
                    verts[x, others] = mean
        fresh = set()
        new_pts = []
        for sign in (-1, +1):
            for u in on[sign]:
                if int(u) in partner:
                    continue
                p = verts[u].copy()
                p[axis] -= sign * side
                partner[int(u)] = len(verts) + len(new_pts)
                fresh.add(int(u))
                new_pts.append(p)
        if new_pts:
            verts = np.vstack([verts, np.array(new_pts)])
        face_of = {int(u): s for s in (-1, +1) for u in on[s]}
        for i, j in list(edges):
            if i in face_of and j in face_of and face_of[i] == face_of[j] and (i in fresh or j in fresh):
                key = (min(partner[i], partner[j]), max(partner[i], partner[j]))
                if key not in present:
                    present.add(key)
                    edges.append(key)

    cleaned = canonical_clean(verts, edges, name=cell.name)
    removed_nodes = 0
    if cleaned.n_edges:
        deg = cleaned.degree()
        if np.any(deg == 0):
            keep = deg > 0
            new_index = np.cumsum(keep) - 1
            e = [(int(new_index[i]), int(new_index[j])) for i, j in cleaned.edges]
            removed_nodes = int((~keep).sum())
            cleaned = UnitCell(cleaned.vertices[keep], tuple(e), cleaned.name)
    added_nodes = len(verts) - n_in
    stats = dict(
        nodes_moved=len(moved),
        nodes_added=added_nodes,
        nodes_removed=removed_nodes,
        edges_added=len(present) - len(set(cell.edges)),
        edges_removed=0,
    )
    stats["edges_removed"] = e_in + stats["edges_added"] - cleaned.n_edges
    return cleaned, stats


def refine_edges(cell: UnitCell, cfg: RefineConfig | None = None, frame=None) -> UnitCell:
    """Close the edge set under the group, pair boundary vertices across
    opposite faces (adding translated copies where a partner is missing),
    then drop loops, duplicates and isolated vertices."""
    cfg = cfg or RefineConfig()
    return _edge_stage(cell, cfg, resolve_frame(cell, frame if frame is not None else cfg.frame))[0]


def refine(cell: UnitCell, cfg: RefineConfig | None = None):
    """Alternate node and edge repair until the cell is intra- and
    inter-valid at ``cfg.target_threshold`` or ``cfg.max_cycles`` is hit.

    Returns ``(cell, trace)``.
    """
    cfg = cfg or RefineConfig()
    if cell.n_vertices == 0:
        raise LatticeError("empty cell")
    frame = resolve_frame(cell, cfg.frame)
    trace = RefineTrace()
    current = canonical_clean(cell)
    for k in range(1, cfg.max_cycles + 1):
        rec = CycleRecord(k)
        current, s1 = _node_stage(current, cfg, frame)
        current, s2 = _edge_stage(current, cfg, frame)
        for key in ("nodes_moved", "nodes_added", "nodes_removed", "edges_removed"):
            setattr(rec, key, s1.get(key, 0) + s2.get(key, 0))
        rec.edges_added = s2["edges_added"]
        rec.report = evaluate(current, [cfg.target_threshold], cfg.group, frame)[0]
        trace.cycles.append(rec)
        if rec.report.valid:
            trace.converged = True
            break
    return current, trace


# ---------------------------------------------------------------------------
# text template


class ParseError(LatticeError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


def _f(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def serialize_text(cell: UnitCell, frame=None) -> str:
    frame = resolve_frame(cell, frame if frame is not None else "fit")
    lines = [f"LATTICE {cell.name or 'unnamed'}", "FRAME " + " ".join(_f(x) for x in (*frame.center, frame.side))]
    lines += [f"NODE {i} " + " ".join(_f(x) for x in p) for i, p in enumerate(cell.vertices)]
    lines += [f"EDGE {i} {j}" for i, j in sorted(cell.edges)]
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> UnitCell:
    """Inverse of :func:`serialize_text`; errors carry the 1-based line."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(1, "empty document")

    def fields(no, expect, count):
        parts = lines[no - 1].split(" ")
        if parts[0] != expect:
            raise ParseError(no, f"expected {expect}, got {parts[0]!r}")
        if count is not None and len(parts) != count:
            raise ParseError(no, f"{expect} takes {count - 1} fields, got {len(parts) - 1}")
        return parts[1:]

    def num(no, s, kind=float):
        try:
            return kind(s)
        except ValueError:
            raise ParseError(no, f"bad number {s!r}") from None

    name = " ".join(fields(1, "LATTICE", None)) or None
    if len(lines) < 2:
        raise ParseError(2, "missing FRAME line")
    frame_vals = [num(2, s) for s in fields(2, "FRAME", 5)]
    if frame_vals[3] <= 0:
        raise ParseError(2, "frame side must be positive")
    verts, edges = [], []
    no = 3
    while no <= len(lines) and lines[no - 1].startswith("NODE"):
        idx, *xyz = fields(no, "NODE", 5)
        if num(no, idx, int) != len(verts):
            raise ParseError(no, f"node id {idx} out of sequence (expected {len(verts)})")
        verts.append([num(no, s) for s in xyz])
        no += 1
    while no <= len(lines) and lines[no - 1].startswith("EDGE"):
        i, j = (num(no, s, int) for s in fields(no, "EDGE", 3))
        for k in (i, j):
            if not 0 <= k < len(verts):
                raise ParseError(no, f"edge references unknown node {k}")
        if i >= j:
            raise ParseError(no, f"edge ({i}, {j}) must have i < j")
        if edges and (i, j) <= edges[-1]:
            raise ParseError(no, "edges must be strictly ascending")
        edges.append((i, j))
        no += 1
    if no > len(lines) or lines[no - 1] != "END":
        raise ParseError(min(no, len(lines) + 1), "expected END")
    if no != len(lines):
        raise ParseError(no + 1, "content after END")
    return UnitCell(np.array(verts, dtype=float).reshape(-1, 3), tuple(edges), name)
