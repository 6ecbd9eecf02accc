"""Endmember and abundance accuracy with permutation alignment."""
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import ShapeError, UnmixError

EXHAUSTIVE_MAX_K = 8


@dataclass(frozen=True)
class EvalReport:
    per_endmember_sad_rad: tuple
    mean_sad_rad: float
    mean_sad_deg: float
    armse: float | None
    permutation: tuple
    recon_rmse: float | None = None

    def as_dict(self):
        return {
            "mean_sad_rad": self.mean_sad_rad,
            "mean_sad_deg": self.mean_sad_deg,
            "per_endmember_sad_rad": list(self.per_endmember_sad_rad),
            "armse": self.armse,
            "recon_rmse": self.recon_rmse,
            "permutation": list(self.permutation),
        }


def sad_pair(e, e_hat):
    """Spectral angle between two spectra, in radians."""
    e = np.asarray(e, dtype=np.float64).ravel()
    e_hat = np.asarray(e_hat, dtype=np.float64).ravel()
    if e.shape != e_hat.shape:
        raise ShapeError(f"spectra differ in length: {e.size} vs {e_hat.size}")
    ne, nh = np.linalg.norm(e), np.linalg.norm(e_hat)
    if ne == 0.0 or nh == 0.0:
        raise UnmixError("spectral angle is undefined for a zero vector")
    u, v = e / ne, e_hat / nh
    # arccos of the cosine loses half the digits near 0; this form does not
    return float(2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def sad_matrix(E_true, E_est):
    """``S[i, j]`` = angle between true column i and estimated column j."""
    E_true = np.asarray(E_true, dtype=np.float64)
    E_est = np.asarray(E_est, dtype=np.float64)
    nt = np.linalg.norm(E_true, axis=0)
    ne = np.linalg.norm(E_est, axis=0)
    if np.any(nt == 0) or np.any(ne == 0):
        raise UnmixError("spectral angle is undefined for a zero column")
    U = (E_true / nt)[:, :, None]
    V = (E_est / ne)[:, None, :]
    return 2.0 * np.arctan2(np.linalg.norm(U - V, axis=0), np.linalg.norm(U + V, axis=0))


def align(E_true, E_est):
    """Matching that minimizes total SAD.

    Returns ``perm`` with estimated column ``perm[k]`` matched to true column
    ``k``. Exhaustive for K <= 8 (first minimum in lexicographic order wins
    ties), Hungarian assignment beyond.
    """
    E_true = np.asarray(E_true)
    E_est = np.asarray(E_est)
    if E_true.ndim != 2 or E_est.ndim != 2 or E_true.shape[1] != E_est.shape[1]:
        raise ShapeError(f"endmember counts differ: {np.shape(E_true)} vs {np.shape(E_est)}")
    if E_true.shape[0] != E_est.shape[0]:
        raise ShapeError(f"band counts differ: {E_true.shape[0]} vs {E_est.shape[0]}")
    S = sad_matrix(E_true, E_est)
    K = S.shape[0]
    if K <= EXHAUSTIVE_MAX_K:
        perms = np.array(list(itertools.permutations(range(K))))
        totals = S[np.arange(K), perms].sum(axis=1)
        return tuple(int(i) for i in perms[int(np.argmin(totals))])
    _, cols = linear_sum_assignment(S)
    return tuple(int(i) for i in cols)


def mean_sad(E_true, E_est, perm=None):
    """``(per-endmember SAD, mean rad, mean deg, perm)`` after alignment."""
    if perm is None:
        perm = align(E_true, E_est)
    E_true = np.asarray(E_true, dtype=np.float64)
    E_est = np.asarray(E_est, dtype=np.float64)
    per = tuple(sad_pair(E_true[:, k], E_est[:, j]) for k, j in enumerate(perm))
    m = float(np.mean(per))
    return per, m, float(np.degrees(m)), tuple(perm)


def armse(A_true, A_est):
    A_true = np.asarray(A_true, dtype=np.float64)
    A_est = np.asarray(A_est, dtype=np.float64)
    if A_true.shape != A_est.shape:
        raise ShapeError(f"abundance shapes differ: {A_true.shape} vs {A_est.shape}")
    d = A_true - A_est
    return float(np.sqrt(np.mean(d * d)))


def recon_rmse(X, E_est, A_est):
    X = np.asarray(getattr(X, "data", X), dtype=np.float64)
    E_est = np.asarray(E_est, dtype=np.float64)
    A_est = np.asarray(A_est, dtype=np.float64)
    if E_est.shape[1] != A_est.shape[0] or X.shape != (E_est.shape[0], A_est.shape[1]):
        raise ShapeError(f"cannot compare X{X.shape} with E{E_est.shape} @ A{A_est.shape}")
    r = X - E_est @ A_est
    return float(np.sqrt(np.mean(r * r)))


def evaluate(E_true, E_est, A_true=None, A_est=None, X=None):
    """Align estimated endmembers to the truth and score both factors."""
    per, m_rad, m_deg, perm = mean_sad(E_true, E_est)
    a = None
    if A_true is not None and A_est is not None:
        a = armse(A_true, np.asarray(A_est)[list(perm)])
    r = None
    if X is not None and A_est is not None:
        r = recon_rmse(X, E_est, A_est)
    return EvalReport(per, m_rad, m_deg, a, perm, r)
