"""Starting points for training and the constrained least-squares baseline."""
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import HsiCube, UnmixError, check_endmembers


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InitReport:
    method: str
    endmember_indices: tuple | None = None

    def __post_init__(self):
        if self.method not in ("vca_like", "random_pixels", "provided"):
            raise UnmixError(f"unknown init method {self.method!r}")
        idx = self.endmember_indices
        if idx is not None and len(set(idx)) != len(idx):
            raise UnmixError(f"endmember indices are not distinct: {idx}")


def _data(X):
    return X.data if isinstance(X, HsiCube) else np.asarray(X, dtype=np.float64)


def vca_init(X, K, seed=0, rank_tol=1e-10):
    """Pick K pixels of X as endmembers by iterated extreme projection.

    X is projected onto its leading K-dimensional singular subspace. Each
    round draws a random direction, removes its component in the span of the
    endmembers chosen so far, and keeps the pixel with the largest absolute
    projection onto it.
    """
    Xd = _data(X)
    P, N = Xd.shape
    if not 1 <= K <= min(P, N):
        raise UnmixError(f"K={K} must satisfy 1 <= K <= min(P={P}, N={N})")
    U, s, _ = np.linalg.svd(Xd, full_matrices=False)
    if s[0] == 0.0 or s[K - 1] <= rank_tol * s[0]:
        raise UnmixError(f"data rank is below K={K}; signal subspace is degenerate")
    Y = U[:, :K].T @ Xd

    rng = np.random.default_rng(seed)
    chosen = []
    basis = np.zeros((K, 0))
    for _ in range(K):
        w = rng.standard_normal(K)
        if basis.shape[1]:
            # project out span of chosen endmembers (orthonormal basis)
            w = w - basis @ (basis.T @ w)
        f = w / np.linalg.norm(w)
        v = np.abs(f @ Y)
        v[chosen] = -1.0
        idx = int(np.argmax(v))
        chosen.append(idx)
        basis, _ = np.linalg.qr(Y[:, chosen])
    return Xd[:, chosen].copy(), InitReport("vca_like", tuple(chosen))


def random_pixel_init(X, K, seed=0):
    Xd = _data(X)
    N = Xd.shape[1]
    if not 1 <= K <= N:
        raise UnmixError(f"K={K} must satisfy 1 <= K <= N={N}")
    idx = np.random.default_rng(seed).choice(N, size=K, replace=False)
    idx = tuple(int(i) for i in idx)
    return Xd[:, list(idx)].copy(), InitReport("random_pixels", idx)


def init_abundances(E, X):
    """Least-squares abundances ``pinv(E) X``, rectified to be nonnegative."""
    Xd = _data(X)
    E = check_endmembers(E, P=Xd.shape[0])
    if np.linalg.matrix_rank(E) < E.shape[1]:
        raise UnmixError("endmember matrix is rank deficient")
    A, *_ = np.linalg.lstsq(E, Xd, rcond=None)
    return np.maximum(A, 0.0)


def fcls(E, X, delta=5.0, tol=1e-9, max_iter=10_000, return_iters=False):
    """Nonnegative least squares with a delta-weighted sum-to-one row.

    Per pixel, minimizes ``||[x; delta] - [E; delta*1] a||^2`` over
    ``a >= 0`` by projected gradient with step ``1/L``. Pixels that hit
    ``max_iter`` raise a :class:`ConvergenceWarning`.
    """
    Xd = _data(X)
    E = check_endmembers(E, P=Xd.shape[0])
    if not delta >= 0:
        raise UnmixError(f"delta must be nonnegative, got {delta}")
    K = E.shape[1]
    if np.linalg.matrix_rank(E) < K:
        raise UnmixError("endmember matrix is rank deficient")

    Et = np.vstack([E, np.full((1, K), float(delta))])
    gram = Et.T @ Et
    rhs = E.T @ Xd + delta * delta
    const = 0.5 * (np.einsum("pn,pn->n", Xd, Xd) + delta * delta)
    lr = 1.0 / np.linalg.eigvalsh(gram)[-1]
    # warm start: clipped unconstrained solution
    a0 = np.maximum(np.linalg.solve(gram, rhs), 0.0)

    A, n_iter = kernels.fcls_solve(gram, rhs, const, a0, lr, tol, max_iter)
    stalled = int(np.sum(n_iter < 0))
    if stalled:
        warnings.warn(f"FCLS hit max_iter={max_iter} on {stalled} of "
                      f"{Xd.shape[1]} pixels", ConvergenceWarning, stacklevel=2)
    if return_iters:
        return A, n_iter
    return A


def init_weights(widths, in_dim, out_dim, seed=0):
    """Glorot-uniform weight stack for ``in_dim -> widths... -> out_dim``.

    Layer ``l`` has shape ``(d_{l-1}, d_l)``; no bias terms.
    """
    widths = [int(h) for h in widths]
    if not widths or any(b <= a for a, b in zip(widths, widths[1:])):
        raise UnmixError(f"widths must be a nonempty strictly increasing list, got {widths}")
    if not (in_dim < widths[0] and widths[-1] < out_dim):
        raise UnmixError(f"widths {widths} must lie strictly between {in_dim} and {out_dim}")
    dims = [in_dim, *widths, out_dim]
    rng = np.random.default_rng(seed)
    layers = []
    for f_in, f_out in zip(dims[:-1], dims[1:]):
        r = np.sqrt(6.0 / (f_in + f_out))
        layers.append(rng.uniform(-r, r, size=(f_in, f_out)))
    return layers
