"""Pretrained-CNN orbit feature export and benchmark ground-truth conversion."""

from .convert import convert_ground_truth
from .export import ExportJob, run_export
from .fot import read_fot1, write_fot1
from .orbits import OrbitParams, regenerate_orbit

__version__ = "0.1.0"
