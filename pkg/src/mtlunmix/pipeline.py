"""Normalize -> initialize -> train -> report, as one call."""
import time
from dataclasses import dataclass

import numpy as np

from .core import HsiCube, Hyperparams, UnmixError, normalize, spawn_seeds
from .initstage import fcls, init_abundances, random_pixel_init, vca_init
from .mtlnet import build_state, reported_abundances, reported_endmembers
from .optimizer import train

INIT_METHODS = ("vca", "random", "fcls")


@dataclass
class UnmixResult:
    endmembers: np.ndarray       # P x K, original data interval
    abundances: np.ndarray       # K x N, relu(A) from branch A
    state: object
    history: object
    scale: float
    init_report: object
    timing_seconds: float


def initialize(cube, K, hp, init="vca", seed=0, weight_init="consistent"):
    """Initial model state for a normalized cube."""
    if init not in INIT_METHODS:
        raise UnmixError(f"init must be one of {INIT_METHODS}, got {init!r}")
    ss_e, ss_w = spawn_seeds(seed, 2)
    if init == "random":
        E0, report = random_pixel_init(cube, K, ss_e)
    else:
        E0, report = vca_init(cube, K, ss_e)
    if init == "fcls":
        A0 = fcls(E0, cube, delta=hp.delta)
    else:
        A0 = init_abundances(E0, cube)
    return build_state(E0, A0, hp, seed=ss_w, weight_init=weight_init), report


def unmix(cube, K, hp=None, init="vca", seed=0, max_iters=None, rel_tol=1e-8,
          patience=20, callback=None, weight_init="consistent"):
    """Blind unmixing of ``cube`` into K endmembers."""
    if not isinstance(cube, HsiCube):
        raise UnmixError("unmix expects an HsiCube")
    hp = Hyperparams() if hp is None else hp
    t0 = time.perf_counter()
    scaled, scale = normalize(cube)
    state, report = initialize(scaled, K, hp, init, seed, weight_init)
    best, hist = train(scaled, state, max_iters=max_iters, rel_tol=rel_tol,
                       patience=patience, callback=callback)
    elapsed = time.perf_counter() - t0
    return UnmixResult(reported_endmembers(best, scale), reported_abundances(best),
                       best, hist, scale, report, elapsed)
