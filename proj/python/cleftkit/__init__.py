"""Blockwise synaptic-cleft prediction toolkit.

Arrays are numpy (z, y, x) in C order; voxel sizes are (z, y, x) in nm.
"""

import json as _json

from . import _cleftkit
from ._cleftkit import (
    CleftkitError,
    balanced_l2_loss,
    build_mask,
    class_balance_weights,
    cleft_score,
    downscale,
    ensure_container,
    eta_seconds,
    make_phantom,
    plan_blocks,
    psf_density,
    read_dataset,
    sedt,
    signed_distance,
    stdt,
    threshold_to_labels,
    write_dataset,
)

__version__ = "0.1.0"


def _arch(a):
    # preset name, JSON text or a dict
    return a if isinstance(a, str) else _json.dumps(a)


def arch_preset(name):
    return _json.loads(_cleftkit.arch_preset(name))


def valid_output_shape(arch, input_shape):
    return tuple(_cleftkit.valid_output_shape(_arch(arch), list(input_shape)))


def required_input_shape(arch, output_shape):
    return tuple(_cleftkit.required_input_shape(_arch(arch), list(output_shape)))


def context_per_side(arch, output_shape):
    return tuple(_cleftkit.context_per_side(_arch(arch), list(output_shape)))


def physical_fov(arch, voxel_size=(40.0, 4.0, 4.0)):
    return _cleftkit.physical_fov(_arch(arch), list(voxel_size))
