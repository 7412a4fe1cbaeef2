"""On-disk formats: lattice documents (JSON), OBJ polylines, sweep CSV,
property reports and corrupted-pair dataset directories."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PROPERTY_KEYS, Frame, LatticeError, UnitCell, bounding_frame
from .validity import ThresholdSweep

_REQUIRED = ("name", "cell_size", "frame_center", "vertices", "edges")
_OPTIONAL = ("strut_radius",)


class DocumentError(LatticeError):
    pass


@dataclass(frozen=True)
class LatticeDocument:
    cell: UnitCell
    frame: Frame
    strut_radius: float | None = None


def lattice_to_dict(cell: UnitCell, frame: Frame | None = None, strut_radius: float | None = None) -> dict:
    frame = frame or bounding_frame(cell)
    doc = {
        "name": cell.name or "unnamed",
        "cell_size": float(frame.side),
        "frame_center": [float(x) for x in frame.center],
        "vertices": [[float(x) for x in p] for p in cell.vertices],
        "edges": [[int(i), int(j)] for i, j in cell.edges],
    }
    if strut_radius is not None:
        doc["strut_radius"] = float(strut_radius)
    return doc


def _as_float(where, x):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DocumentError(f"{where}: expected a number, got {x!r}")
    return float(x)


def lattice_from_dict(doc, source="document") -> LatticeDocument:
    if not isinstance(doc, dict):
        raise DocumentError(f"{source}: top level must be an object")
    for key in doc:
        if key not in _REQUIRED + _OPTIONAL:
            raise DocumentError(f"{source}: unknown field {key!r}")
    for key in _REQUIRED:
        if key not in doc:
            raise DocumentError(f"{source}: missing required key {key!r}")
    verts = doc["vertices"]
    if not isinstance(verts, list) or any(not isinstance(p, list) or len(p) != 3 for p in verts):
        raise DocumentError(f"{source}: 'vertices' must be a list of [x, y, z]")
    v = np.array([[_as_float(f"{source}: vertices[{k}]", x) for x in p] for k, p in enumerate(verts)]).reshape(-1, 3)
    edges = doc["edges"]
    if not isinstance(edges, list) or any(not isinstance(e, list) or len(e) != 2 for e in edges):
        raise DocumentError(f"{source}: 'edges' must be a list of [i, j]")
    for k, (i, j) in enumerate(edges):
        if isinstance(i, bool) or isinstance(j, bool) or not isinstance(i, int) or not isinstance(j, int):
            raise DocumentError(f"{source}: edges[{k}] = {[i, j]} must hold integers")
        if not (0 <= i < len(v) and 0 <= j < len(v)):
            raise DocumentError(f"{source}: edges[{k}] = {[i, j]} references a vertex outside 0..{len(v) - 1}")
    center = doc["frame_center"]
    if not isinstance(center, list) or len(center) != 3:
        raise DocumentError(f"{source}: 'frame_center' must be [x, y, z]")
    frame = Frame([_as_float(f"{source}: frame_center", x) for x in center], _as_float(f"{source}: cell_size", doc["cell_size"]))
    radius = doc.get("strut_radius")
    if radius is not None:
        radius = _as_float(f"{source}: strut_radius", radius)
    name = doc["name"]
    if not isinstance(name, str):
        raise DocumentError(f"{source}: 'name' must be a string")
    cell = UnitCell(v, tuple((int(i), int(j)) for i, j in edges), name)
    return LatticeDocument(cell, frame, radius)


def write_lattice(cell: UnitCell, path, frame: Frame | None = None, strut_radius: float | None = None) -> None:
    text = json.dumps(lattice_to_dict(cell, frame, strut_radius), indent=1)
    Path(path).write_text(text + "\n")


def read_lattice(path) -> LatticeDocument:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return lattice_from_dict(doc, str(path))


def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def obj_text(cell: UnitCell, tile: int = 1, frame: Frame | None = None) -> str:
    """Wavefront OBJ with one ``v`` per vertex and one ``l`` per edge,
    replicated on a ``tile``^3 grid of cell translations."""
    if tile < 1:
        raise LatticeError("tile must be >= 1")
    frame = frame or bounding_frame(cell)
    lines = [f"# {cell.name or 'lattice'} tile={tile}"]
    n = cell.n_vertices
    offsets = [np.array([a, b, c]) * frame.side for a in range(tile) for b in range(tile) for c in range(tile)]
    for off in offsets:
        for p in cell.vertices + off:
            lines.append("v " + " ".join(_fmt(x) for x in p))
    for k in range(len(offsets)):
        for i, j in cell.edges:
            lines.append(f"l {k * n + i + 1} {k * n + j + 1}")
    return "\n".join(lines) + "\n"


def export_obj(cell: UnitCell, path, tile: int = 1, frame: Frame | None = None) -> None:
    Path(path).write_text(obj_text(cell, tile, frame))


def sweep_csv(report: ThresholdSweep) -> str:
    rows = ["threshold,intra_pct,inter_pct,n"]
    for t, a, b, n in report.rows():
        rows.append(f"{t:g},{a:.2f},{b:.2f},{n}")
    return "\n".join(rows) + "\n"


def write_sweep(report: ThresholdSweep, path) -> None:
    Path(path).write_text(sweep_csv(report))


def properties_doc(props) -> dict:
    d = props.as_dict() if hasattr(props, "as_dict") else dict(props)
    return {k: d[k] for k in (*PROPERTY_KEYS, "rel_density") if k in d}


def read_properties(path) -> np.ndarray:
    """9-vector from a properties document; ``rel_density`` is optional."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: top level must be an object")
    for key in doc:
        if key not in (*PROPERTY_KEYS, "rel_density"):
            raise DocumentError(f"{path}: unknown field {key!r}")
    missing = [k for k in PROPERTY_KEYS if k not in doc]
    if missing:
        raise DocumentError(f"{path}: missing required key {missing[0]!r}")
    return np.array([_as_float(f"{path}: {k}", doc[k]) for k in PROPERTY_KEYS])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# datasets

MANIFEST = "manifest.json"


def write_dataset(pairs, out_dir, seed: int, config: dict) -> Path:
    """Corrupted cells under ``corrupted/``, clean cells under ``clean/``,
    and a manifest tying them together."""
    out = Path(out_dir)
    (out / "corrupted").mkdir(parents=True, exist_ok=True)
    (out / "clean").mkdir(exist_ok=True)
    entries = []
    written = set()
    for pair in pairs:
        clean_rel = f"clean/{pair.name}.json"
        if pair.name not in written:
            write_lattice(pair.clean, out / clean_rel, Frame.unit())
            written.add(pair.name)
        bad_rel = f"corrupted/{pair.index:05d}_{pair.name}.json"
        write_lattice(pair.corrupted, out / bad_rel, Frame.unit())
        entries.append({"index": pair.index, "name": pair.name, "seed": pair.seed, "corrupted": bad_rel, "clean": clean_rel})
    write_json({"seed": int(seed), "config": config, "pairs": entries}, out / MANIFEST)
    return out / MANIFEST


def read_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DocumentError(f"{data_dir}: no {MANIFEST}") from None
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def population_paths(data_dir) -> list[Path]:
    """Corrupted members of a dataset, or every ``*.json`` lattice in a
    plain directory."""
    d = Path(data_dir)
    if (d / MANIFEST).exists():
        return [d / e["corrupted"] for e in read_manifest(d)["pairs"]]
    paths = sorted(p for p in d.glob("*.json"))
    if not paths:
        raise DocumentError(f"{data_dir}: no lattice documents found")
    return paths
