"""Blind nonlinear hyperspectral unmixing with a two-branch network.

Branch E learns the endmember spectra and branch A the abundances. An
NMF-style auxiliary task ties the two branches, and both are trained
together by full-batch iRprop+.
"""
__version__ = "0.1.0"

from .core import (DegenerateInputError, HsiCube, Hyperparams, NonFiniteError, ShapeError,
                   UnmixError, normalize, validate_cube)
from .metrics import EvalReport, align, armse, evaluate, mean_sad, sad_pair
from .mtlnet import ModelState, build_state, objective, value_and_grad
from .optimizer import gradcheck, train
from .pipeline import UnmixResult, unmix
from .synthgen import MixingModel, make_scene

__all__ = [
    "DegenerateInputError", "EvalReport", "HsiCube", "Hyperparams", "MixingModel",
    "ModelState", "NonFiniteError", "ShapeError", "UnmixError", "UnmixResult", "align",
    "armse", "build_state", "evaluate", "gradcheck", "make_scene", "mean_sad", "normalize",
    "objective", "sad_pair", "train", "unmix", "validate_cube", "value_and_grad",
]
