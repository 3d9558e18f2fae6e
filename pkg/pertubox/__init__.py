"""
pertubox: privacy-preserving data modification.

Anonymize tables (k-anonymity, l-diversity, t-closeness), perturb them
(noise addition, randomized response, condensation, rotation, geometric
perturbation, random projection, SVD and NMF distortion) and measure what
each modification costs in privacy and in information.
"""

from pertubox.dataset import ColumnKind, ColumnRole, ColumnSpec, Dataset, Schema
from pertubox.errors import PertuboxError
from pertubox.linalg import Rng

__all__ = [
    "ColumnKind",
    "ColumnRole",
    "ColumnSpec",
    "Dataset",
    "Schema",
    "Rng",
    "PertuboxError",
]
__version__ = "0.1.0"
