"""Concept attribution and steering in generator latent spaces."""

import json

from ._core import (
    Error,
    FormatError,
    InvalidArgument,
    IoError,
    ModelPair,
    NumericError,
    OutOfRange,
    ShapeError,
    ValidationError,
    apcr_from_series,
    apcr_matrix,
    impulse,
    intersection_ratio,
    load_pair,
    manipulate,
    optimize,
    sample_latent,
    sample_latents,
    synthetic_pair,
    top_k_set,
)

__version__ = "0.1.0"


def synthetic(n, concepts, control_map):
    """Build a synthetic pair. control_map[c] is a list of (dim, gain)."""
    spec = {
        "n": n,
        "l": concepts,
        "control_map": [[{"dim": d, "gain": g} for d, g in row] for row in control_map],
    }
    return synthetic_pair(json.dumps(spec))
