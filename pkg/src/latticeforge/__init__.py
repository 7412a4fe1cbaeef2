"""Periodic lattice unit cells: catalog, validity metrics, refinement,
corruption, homogenization and a small property-conditioned generator.

The generator lives in :mod:`latticeforge.gen` and is imported lazily
because it pulls in torch.
"""
from .core import (
    CUBE_ROTATIONS,
    PROPERTY_KEYS,
    SYMMETRY_PRESETS,
    CellTransform,
    Frame,
    LatticeError,
    SymmetryGroup,
    UnitCell,
    bounding_frame,
    canonical_clean,
    permute_properties,
    transform_cell,
)
from .corrupt import CorruptionConfig, corrupt, make_pairs
from .homogenize import MaterialSpec, StrutSection, extract_engineering, homogenize, properties
from .refine import RefineConfig, parse_text, refine, serialize_text
from .validity import ThresholdSweep, evaluate, inter_cell_valid, intra_cell_valid, sweep

__version__ = "0.1.0"
