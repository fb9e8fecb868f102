"""Growth clusters of the rotor-router, directed-rotor and abelian sandpile
models started from a single pile on a hypercubic lattice.

The public surface is split by task: :mod:`.lattice` (sites, clusters,
reference shapes), :mod:`.config` (model parameters and configurations),
:mod:`.stabilize` (schedulers), :mod:`.analysis` (shape measurements),
:mod:`.verify` (theorem checkers), :mod:`.io` and :mod:`.cli`.
"""
from ._backend import backend, set_backend, use_backend
from .config import Configuration, InvalidSpec, Model, ModelSpec, SeedMode, seed
from .lattice import Cluster, DirectionMap
from .stabilize import stabilize_queue

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "Configuration",
    "DirectionMap",
    "InvalidSpec",
    "Model",
    "ModelSpec",
    "SeedMode",
    "backend",
    "seed",
    "set_backend",
    "stabilize_queue",
    "use_backend",
]
