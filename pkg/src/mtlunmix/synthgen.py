"""Ground-truthed synthetic scenes under linear, bilinear and PNMM mixing."""
import enum
from dataclasses import dataclass

import numpy as np

from .core import HsiCube, UnmixError, spawn_seeds, validate_cube
from .kernels import bilinear_terms


class MixingModel(str, enum.Enum):
    LMM = "lmm"
    BILINEAR = "bilinear"
    PNMM = "pnmm"


@dataclass(frozen=True)
class SceneTruth:
    endmembers: np.ndarray
    abundances: np.ndarray
    model: MixingModel
    snr_db: float | None
    seed: int


def _pairwise_min_sad(spectra):
    U = spectra / np.linalg.norm(spectra, axis=0)
    c = np.clip(U.T @ U, -1.0, 1.0)
    K = spectra.shape[1]
    if K < 2:
        return np.inf
    iu = np.triu_indices(K, 1)
    return float(np.min(np.arccos(c[iu])))


def _one_spectrum(P, rng):
    x = np.arange(P, dtype=np.float64)
    level = rng.uniform(0.4, 0.9)
    n_dips = rng.integers(2, 6)
    centers = rng.uniform(0, P - 1, n_dips)
    widths = rng.uniform(0.02, 0.10, n_dips) * P
    depths = rng.uniform(0.1, 0.6, n_dips) * level
    if depths.sum() > 0.9 * level:
        depths *= 0.9 * level / depths.sum()
    dips = depths[:, None] * np.exp(-0.5 * ((x[None, :] - centers[:, None]) / widths[:, None]) ** 2)
    return level - dips.sum(axis=0)


def gen_endmembers(P, K, seed, min_sad=0.1, max_resample=100):
    """K smooth continuum-minus-absorption spectra, pairwise SAD >= ``min_sad``.

    Spectra are drawn one at a time; a candidate too close to an accepted
    spectrum is redrawn, at most ``max_resample`` times per spectrum.
    """
    if K < 1:
        raise UnmixError(f"K must be >= 1, got {K}")
    if P < 2 * K:
        raise UnmixError(f"need P >= 2K bands, got P={P}, K={K}")
    rng = np.random.default_rng(seed)
    E = np.empty((P, K))
    for k in range(K):
        for _ in range(max_resample + 1):
            cand = _one_spectrum(P, rng)
            E[:, k] = cand
            if _pairwise_min_sad(E[:, :k + 1]) >= min_sad:
                break
        else:
            raise UnmixError(
                f"could not separate endmember {k} by {min_sad} rad "
                f"after {max_resample} resamples")
    return E


def sample_abundances(K, N, concentration=1.0, seed=0):
    """Columns drawn i.i.d. from a symmetric Dirichlet on the K-simplex."""
    if K < 1 or N < 1:
        raise UnmixError(f"K and N must be positive, got K={K}, N={N}")
    if not concentration > 0:
        raise UnmixError(f"concentration must be positive, got {concentration}")
    if K == 1:
        return np.ones((1, N))
    rng = np.random.default_rng(seed)
    A = rng.dirichlet(np.full(K, float(concentration)), size=N).T
    # renormalize so the simplex constraint holds to rounding
    return A / A.sum(axis=0, keepdims=True)


def mix(E, A, model):
    """Noise-free mixture ``X`` (P x N) of endmembers E under ``model``."""
    E = np.asarray(E, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if E.ndim != 2 or A.ndim != 2 or E.shape[1] != A.shape[0]:
        raise UnmixError(f"incompatible shapes E{E.shape} and A{A.shape}")
    model = MixingModel(model)
    X = E @ A
    if model is MixingModel.BILINEAR:
        X = X + bilinear_terms(E, A)
    elif model is MixingModel.PNMM:
        X = X + X * X
    return X


def add_noise(X, snr_db, seed):
    """Add white Gaussian noise at a whole-matrix SNR of ``snr_db`` dB.

    ``snr_db`` of ``None`` or ``inf`` returns ``X`` unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise UnmixError("X has non-finite entries")
    energy = float(np.sum(X * X))
    if energy == 0.0:
        raise UnmixError("cannot set an SNR on an all-zero signal")
    if snr_db is None or np.isinf(snr_db):
        return X.copy()
    sigma2 = energy / (X.size * 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return X + rng.normal(0.0, np.sqrt(sigma2), size=X.shape)


def make_scene(P, width, height, K, model="lmm", snr_db=30.0, concentration=1.0,
               seed=0, endmembers=None, wavelengths=None):
    """Generate ``(cube, truth)``; every random draw derives from ``seed``.

    ``endmembers`` (P x K) replaces the generated spectra, e.g. with a
    spectral library loaded from disk.
    """
    if width < 1 or height < 1:
        raise UnmixError(f"image size must be positive, got {width}x{height}")
    N = width * height
    ss_e, ss_a, ss_n = spawn_seeds(seed, 3)
    if endmembers is None:
        E = gen_endmembers(P, K, ss_e)
    else:
        E = np.asarray(endmembers, dtype=np.float64)
        if E.shape != (P, K):
            raise UnmixError(f"library endmembers have shape {E.shape}, expected {(P, K)}")
    A = sample_abundances(K, N, concentration, ss_a)
    X = add_noise(mix(E, A, model), snr_db, ss_n)
    if wavelengths is None:
        wavelengths = np.linspace(380.0, 2500.0, P)
    cube = validate_cube(X, width, height, wavelengths)
    truth = SceneTruth(E, A, MixingModel(model),
                       None if snr_db is None or np.isinf(snr_db) else float(snr_db), seed)
    return cube, truth


def realized_snr_db(clean, noisy):
    clean = np.asarray(clean)
    noise = np.asarray(noisy) - clean
    return 10.0 * np.log10(np.sum(clean * clean) / np.sum(noise * noise))
