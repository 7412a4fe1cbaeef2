"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import catalog, io
from .core import LatticeError, SYMMETRY_PRESETS, Frame, canonical_clean
from .corrupt import CorruptionConfig, corrupt, make_pairs
from .validity import evaluate, resolve_frame, sweep

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _frame_arg(value):
    return Frame.unit() if value == "unit" else "fit"


def _set_threads():
    import torch

    torch.set_num_threads(int(os.environ.get("LATTICEFORGE_THREADS", "1")))


# ---------------------------------------------------------------------------
# commands


def cmd_catalog(args):
    if args.action == "list":
        for name in catalog.names():
            print(name)
        return 0
    if not args.name:
        raise UsageError("catalog emit: NAME is required")
    cell = catalog.make(args.name)
    if args.output:
        io.write_lattice(cell, args.output, Frame.unit())
    else:
        sys.stdout.write(json.dumps(io.lattice_to_dict(cell, Frame.unit()), indent=1) + "\n")
    return 0


def cmd_validate(args):
    doc = io.read_lattice(args.file)
    reports = evaluate(doc.cell, args.thresholds, args.symmetry, _frame_arg(args.frame))
    print("threshold,intra,inter")
    for rep in reports:
        a = "valid" if rep.intra_valid else "invalid"
        b = "valid" if rep.inter_valid else "invalid"
        print(f"{rep.threshold:g},{a},{b}")
    return 0


def cmd_refine(args):
    from .refine import RefineConfig, refine

    doc = io.read_lattice(args.file)
    cfg = RefineConfig(group=args.group, max_cycles=args.cycles, frame=_frame_arg(args.frame))
    cell, trace = refine(doc.cell, cfg)
    io.write_lattice(cell, args.output, resolve_frame(doc.cell, cfg.frame), doc.strut_radius)
    if args.trace:
        rows = []
        for rec in trace.cycles:
            rows.append({
                "cycle": rec.cycle,
                "nodes_moved": rec.nodes_moved,
                "nodes_added": rec.nodes_added,
                "nodes_removed": rec.nodes_removed,
                "edges_added": rec.edges_added,
                "edges_removed": rec.edges_removed,
                "intra_valid": bool(rec.report.intra_valid),
                "inter_valid": bool(rec.report.inter_valid),
            })
        io.write_json({"converged": trace.converged, "cycles": rows}, args.trace)
    print(f"{cell.n_vertices} vertices, {cell.n_edges} edges, "
          f"{len(trace.cycles)} cycle(s), {'converged' if trace.converged else 'not converged'}")
    return 0


def cmd_homogenize(args):
    from .homogenize import MaterialSpec, properties

    doc = io.read_lattice(args.file)
    radius = args.radius if args.radius is not None else doc.strut_radius
    if radius is None:
        raise UsageError("homogenize: --radius is required when the document has no strut_radius")
    props = properties(doc.cell, radius, MaterialSpec(E_s=args.e_s, nu_s=args.nu_s), doc.frame)
    text = json.dumps(io.properties_doc(props), indent=1)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_corrupt(args):
    doc = io.read_lattice(args.file)
    cfg = CorruptionConfig(args.sigma, args.p_node_remove, args.p_node_add, args.p_edge_remove, args.p_edge_add, args.seed)
    io.write_lattice(corrupt(doc.cell, cfg, doc.frame), args.output, doc.frame, doc.strut_radius)
    return 0


def cmd_make_dataset(args):
    cfg = CorruptionConfig(sigma=args.sigma)
    pairs = make_pairs(catalog.names(), cfg, args.n, args.seed)
    config = {"sigma": cfg.sigma, "p_node_remove": cfg.p_node_remove, "p_node_add": cfg.p_node_add,
              "p_edge_remove": cfg.p_edge_remove, "p_edge_add": cfg.p_edge_add, "n_per_entry": args.n}
    io.write_dataset(pairs, args.out, args.seed, config)
    print(f"{len(pairs)} pairs written to {args.out}")
    return 0


def cmd_train(args):
    _set_threads()
    from .gen import GenConfig, train
    from .gen.modelfile import save_model
    from .homogenize import properties

    manifest = io.read_manifest(args.data)
    seen = []
    for entry in manifest["pairs"]:
        if entry["clean"] not in seen:
            seen.append(entry["clean"])
    cells = [io.read_lattice(Path(args.data) / rel).cell for rel in seen]
    if not cells:
        raise LatticeError(f"{args.data}: dataset has no clean cells")
    props = np.array([properties(c, args.radius).vector() for c in cells])
    cfg = GenConfig(epochs=args.epochs, seed=args.seed, train_radius=args.radius)
    model, history = train(cells, props, cfg)
    save_model(model, args.out)
    print(f"coord loss {history.coord[0]:.5f} -> {history.coord[-1]:.5f}, edge loss {history.edge[-1]:.5f}")
    return 0


def cmd_sample(args):
    _set_threads()
    from .gen import predict_edges, sample
    from .gen.modelfile import load_model

    model = load_model(args.model)
    p = io.read_properties(args.props)
    x = sample(model, p, args.n_vertices, seed=args.seed)
    _, edges = predict_edges(model, x, p, args.edge_threshold)
    io.write_lattice(canonical_clean(x, edges, name="sample"), args.output, Frame.unit())
    return 0


def cmd_sweep(args):
    paths = io.population_paths(args.population)
    cells = [io.read_lattice(p).cell for p in paths]
    if args.refine:
        from .refine import refine

        cells = [refine(c)[0] for c in cells]
    report = sweep(cells, args.thresholds, args.symmetry, _frame_arg(args.frame))
    if args.report:
        io.write_sweep(report, args.report)
    else:
        sys.stdout.write(io.sweep_csv(report))
    return 0


def cmd_export_obj(args):
    doc = io.read_lattice(args.file)
    io.export_obj(doc.cell, args.output, args.tile, doc.frame)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    groups = sorted(SYMMETRY_PRESETS)
    p = _Parser(prog="latticeforge", description="Lattice unit-cell toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("catalog", help="list or emit catalog cells")
    s.add_argument("action", choices=["list", "emit"])
    s.add_argument("name", nargs="?", choices=catalog.names())
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("validate", help="validity verdicts at several thresholds")
    s.add_argument("file")
    s.add_argument("--thresholds", type=_floats, required=True)
    s.add_argument("--symmetry", choices=groups, default="inversion")
    s.add_argument("--frame", choices=["unit", "fit"], default="unit")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("refine", help="symmetry/periodicity repair")
    s.add_argument("file")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--cycles", type=int, default=5)
    s.add_argument("--group", choices=groups, default="mirrors")
    s.add_argument("--frame", choices=["unit", "fit"], default="unit")
    s.add_argument("--trace")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("homogenize", help="effective elastic properties")
    s.add_argument("file")
    s.add_argument("--radius", type=float)
    s.add_argument("--e-s", type=float, default=1.0)
    s.add_argument("--nu-s", type=float, default=0.3)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_homogenize)

    s = sub.add_parser("corrupt", help="apply seeded corruption to a cell")
    s.add_argument("file")
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--p-node-remove", type=float, default=0.05)
    s.add_argument("--p-node-add", type=float, default=0.05)
    s.add_argument("--p-edge-remove", type=float, default=0.1)
    s.add_argument("--p-edge-add", type=float, default=0.1)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("make-dataset", help="corrupted copies of every catalog cell")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, required=True, help="copies per catalog entry")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--sigma", type=float, default=0.01)
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("train", help="fit the generator on a dataset's clean cells")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--radius", type=float, default=0.03)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="generate a cell for a property target")
    s.add_argument("--model", required=True)
    s.add_argument("--props", required=True)
    s.add_argument("--n-vertices", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--edge-threshold", type=float, default=0.5)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("sweep", help="validity percentages over a population")
    s.add_argument("--population", required=True)
    s.add_argument("--thresholds", type=_floats, required=True)
    s.add_argument("--report")
    s.add_argument("--refine", action="store_true", help="refine every cell first")
    s.add_argument("--symmetry", choices=groups, default="inversion")
    s.add_argument("--frame", choices=["unit", "fit"], default="unit")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("export-obj", help="Wavefront OBJ polylines")
    s.add_argument("file")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--tile", type=int, default=1)
    s.set_defaults(func=cmd_export_obj)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (LatticeError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        from .gen.modelfile import ModelFileError

        if isinstance(exc, ModelFileError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise


def main() -> None:
    sys.exit(run_cli())
