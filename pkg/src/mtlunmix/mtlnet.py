"""Two-branch unmixing network: forward passes, objective and gradients.

Branch E reconstructs the rows of the (augmented) data from ``E.T`` and
branch A reconstructs its columns from ``A``. Each branch adds a linear path,
built from the product of its weight matrices, to a bias-free nonlinear
stack. An NMF-style auxiliary loss ``||X~ - E~ relu(A)||^2`` ties the two
branches together.

Shapes, with ``d_0 = K``:

* branch E layer ``l``: ``W_e[l]`` is ``d_{l-1} x d_l``, ``d_L = N``;
  ``phi_e[l]`` is ``d_l x P``.
* branch A layer ``l``: ``W_a[l]`` is ``d_{l-1} x d_l``, ``d_L = P``;
  ``phi_a[l]`` is ``d_l x N``.

All gradients are derived by hand; :func:`mtlunmix.optimizer.gradcheck`
compares them against central differences.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (HsiCube, Hyperparams, NonFiniteError, ShapeError, UnmixError, spawn_seeds,
                   check_width_law, denormalize_endmembers)


def _act(name):
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0),
                lambda z, y: (z > 0.0).astype(z.dtype))
    if name == "tanh":
        return np.tanh, lambda z, y: 1.0 - y * y
    if name == "sigmoid":
        def sig(z):
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return sig, lambda z, y: y * (1.0 - y)
    raise UnmixError(f"unknown activation {name!r}")


def _chain(layers):
    out = layers[0]
    for W in layers[1:]:
        out = out @ W
    return out


def _check_chain(layers, d0, d_out, name):
    if not layers:
        raise ShapeError(f"{name} has no layers")
    prev = d0
    for i, W in enumerate(layers):
        if W.ndim != 2 or W.shape[0] != prev:
            raise ShapeError(f"{name}[{i}] has shape {W.shape}, expected ({prev}, *)")
        prev = W.shape[1]
    if prev != d_out:
        raise ShapeError(f"{name} ends at width {prev}, expected {d_out}")


@dataclass
class ModelState:
    """Trainable state: network inputs E, A and both weight stacks.

    There are no bias parameters anywhere; ``we`` and ``wa`` hold only
    weight matrices.
    """

    E: np.ndarray
    A: np.ndarray
    we: list
    wa: list
    hp: Hyperparams

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.float64)
        self.we = [np.asarray(W, dtype=np.float64) for W in self.we]
        self.wa = [np.asarray(W, dtype=np.float64) for W in self.wa]
        P, K = self.E.shape
        if self.A.ndim != 2 or self.A.shape[0] != K:
            raise ShapeError(f"A has shape {self.A.shape}, expected ({K}, N)")
        N = self.A.shape[1]
        _check_chain(self.we, K, N, "we")
        _check_chain(self.wa, K, P, "wa")
        check_width_law([W.shape[1] for W in self.we[:-1]], K, N, "widths_e")
        check_width_law([W.shape[1] for W in self.wa[:-1]], K, P, "widths_a")

    @property
    def dims(self):
        P, K = self.E.shape
        return K, P, self.A.shape[1]

    def params(self):
        """All trainable arrays in a fixed order: E, A, we..., wa..."""
        return [self.E, self.A, *self.we, *self.wa]

    def copy(self):
        return ModelState(self.E.copy(), self.A.copy(), [W.copy() for W in self.we],
                          [W.copy() for W in self.wa], self.hp)

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def with_flat(self, theta):
        """New state whose parameters are read from the flat vector ``theta``."""
        out = []
        i = 0
        for p in self.params():
            out.append(theta[i:i + p.size].reshape(p.shape).copy())
            i += p.size
        L = len(self.we)
        return ModelState(out[0], out[1], out[2:2 + L], out[2 + L:], self.hp)


@dataclass
class ForwardCache:
    phi_e: list
    z_e: list
    phi_a: list
    z_a: list
    prod_e: np.ndarray
    prod_a: np.ndarray
    xhat_e: np.ndarray
    xhat_a: np.ndarray
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    j_total: float
    j_e: float
    j_a: float
    j_m: float
    j_r: float

    def as_dict(self):
        return {"j": self.j_total, "j_e": self.j_e, "j_a": self.j_a,
                "j_m": self.j_m, "j_r": self.j_r}


def _xdata(X):
    return X.data if isinstance(X, HsiCube) else np.asarray(X, dtype=np.float64)


def augment(X, E, delta):
    """Append a ``delta`` row under X (P x N) and under E (P x K)."""
    if not delta >= 0:
        raise UnmixError(f"delta must be nonnegative, got {delta}")
    X = np.asarray(X, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if X.shape[0] != E.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, E has {E.shape[0]}")
    Xt = np.vstack([X, np.full((1, X.shape[1]), float(delta))])
    Et = np.vstack([E, np.full((1, E.shape[1]), float(delta))])
    return Xt, Et


def _run_stack(phi0, layers, sigma):
    phi, z = [phi0], []
    for W in layers:
        zl = W.T @ phi[-1]
        z.append(zl)
        phi.append(sigma(zl))
    return phi, z


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what} (divergence)")


def forward_e(state, delta=None):
    """Branch E output ``xhat_e`` (N x (P+1)) and its intermediates."""
    delta = state.hp.delta if delta is None else delta
    sigma, _ = _act(state.hp.activation)
    E = state.E
    phi, z = _run_stack(E.T, state.we, sigma)
    M = _chain(state.we)
    Et = np.vstack([E, np.full((1, E.shape[1]), float(delta))])
    lin = np.maximum(M, 0.0).T @ Et.T
    xhat = lin
    xhat[:, :-1] += phi[-1]
    _finite(xhat, "branch E output")
    return xhat, {"phi": phi, "z": z, "prod": M, "Et": Et}


def forward_a(state, delta=None):
    """Branch A output ``xhat_a`` ((P+1) x N) and its intermediates."""
    delta = state.hp.delta if delta is None else delta
    sigma, _ = _act(state.hp.activation)
    A = state.A
    phi, z = _run_stack(A, state.wa, sigma)
    M = _chain(state.wa)
    S = np.vstack([np.abs(M.T), np.full((1, M.shape[0]), float(delta))])
    rA = np.maximum(A, 0.0)
    xhat = S @ rA
    xhat[:-1] += phi[-1]
    _finite(xhat, "branch A output")
    return xhat, {"phi": phi, "z": z, "prod": M, "S": S, "rA": rA}


def forward(state, delta=None):
    xe, ce = forward_e(state, delta)
    xa, ca = forward_a(state, delta)
    return ForwardCache(ce["phi"], ce["z"], ca["phi"], ca["z"], ce["prod"], ca["prod"],
                        xe, xa, {"Et": ce["Et"], "S": ca["S"], "rA": ca["rA"]})


def _breakdown(state, X, cache):
    hp = state.hp
    K, P, N = state.dims
    Xt = np.vstack([X, np.full((1, N), hp.delta)])
    Et, rA = cache.extra["Et"], cache.extra["rA"]
    re = cache.xhat_e - Xt.T
    ra = cache.xhat_a - Xt
    rm = Et @ rA - Xt
    j_e = 0.5 * np.sum(re * re) / (P + 1)
    j_a = 0.5 * np.sum(ra * ra) / N
    j_m = 0.5 * np.sum(rm * rm) / N
    j_r = (0.5 * np.sum(state.E ** 2) / P + 0.5 * np.sum(state.A ** 2) / N
           + 0.5 * sum(np.sum(W * W) for W in state.we)
           + 0.5 * sum(np.sum(W * W) for W in state.wa))
    j = j_e + j_a + hp.alpha * j_m + hp.beta * j_r
    if not np.isfinite(j):
        raise NonFiniteError("objective is not finite (divergence)")
    return ObjectiveBreakdown(float(j), float(j_e), float(j_a), float(j_m), float(j_r)), (re, ra, rm)


def objective(state, X):
    """Evaluate J = J_e + J_a + alpha*J_m + beta*J_r on the cube ``X``."""
    X = _xdata(X)
    _check_data(state, X)
    cache = forward(state)
    return _breakdown(state, X, cache)[0]


def _check_data(state, X):
    K, P, N = state.dims
    if X.shape != (P, N):
        raise ShapeError(f"data has shape {X.shape}, model expects {(P, N)}")


def _product_grads(layers, G_M):
    """dL/dW_l for ``M = W_1 ... W_L`` given ``G_M = dL/dM``.

    ``dW_l = (W_1..W_{l-1})^T (G_M (W_{l+1}..W_L)^T)``. The prefix products
    have only K rows, so every intermediate stays rank K.
    """
    L = len(layers)
    # GS[l] = G_M (W_{l+1}..W_L)^T, built right to left
    GS = [None] * L
    GS[L - 1] = G_M
    for l in range(L - 2, -1, -1):
        GS[l] = GS[l + 1] @ layers[l + 1].T
    grads = [GS[0]]
    prefix = layers[0]
    for l in range(1, L):
        grads.append(prefix.T @ GS[l])
        if l < L - 1:
            prefix = prefix @ layers[l]
    return grads


def _backprop_stack(phi, z, layers, g_top, dsigma):
    """Reverse pass through ``phi_l = sigma(W_l^T phi_{l-1})``.

    Returns ``(dW list, d phi_0)``.
    """
    L = len(layers)
    dW = [None] * L
    g = g_top
    for l in range(L - 1, -1, -1):
        dz = g * dsigma(z[l], phi[l + 1])
        dW[l] = phi[l] @ dz.T
        g = layers[l] @ dz
    return dW, g


def value_and_grad(state, X):
    """Objective breakdown and gradients w.r.t. every trainable array.

    Returns ``(breakdown, grads)`` where ``grads`` follows
    :meth:`ModelState.params` order: ``[dE, dA, dWe..., dWa...]``.
    """
    X = _xdata(X)
    _check_data(state, X)
    hp = state.hp
    K, P, N = state.dims
    cache = forward(state)
    parts, (re, ra, rm) = _breakdown(state, X, cache)
    _, dsigma = _act(hp.activation)
    E, A = state.E, state.A
    Et, S, rA = cache.extra["Et"], cache.extra["S"], cache.extra["rA"]
    a_pos = A > 0.0

    # --- branch E: xhat_e = relu(M_e)^T Et^T + [phi_L^T, 0]
    Ge = re / (P + 1)                                   # N x (P+1)
    R = np.maximum(cache.prod_e, 0.0)                   # K x N
    dE = (Ge.T @ R.T)[:P]                               # linear path, E rows only
    G_Me = (Et.T @ Ge.T) * (cache.prod_e > 0.0)         # K x N
    dWe_nl, dphi0 = _backprop_stack(cache.phi_e, cache.z_e, state.we, Ge[:, :P], dsigma)
    dE += dphi0.T
    dWe = [a + b for a, b in zip(dWe_nl, _product_grads(state.we, G_Me))]

    # --- branch A: xhat_a = [|M_a^T|; delta 1] relu(A) + [phi_L; 0]
    Ga = ra / N                                         # (P+1) x N
    dS = Ga @ rA.T                                      # (P+1) x K
    G_Ma = dS[:P].T * np.sign(cache.prod_a)             # K x P
    dA = (S.T @ Ga) * a_pos
    dWa_nl, dphi0a = _backprop_stack(cache.phi_a, cache.z_a, state.wa, Ga[:P], dsigma)
    dA += dphi0a
    dWa = [a + b for a, b in zip(dWa_nl, _product_grads(state.wa, G_Ma))]

    # --- auxiliary NMF task
    if hp.alpha != 0.0:
        Gm = hp.alpha * rm / N                          # (P+1) x N
        dE += (Gm @ rA.T)[:P]
        dA += (Et.T @ Gm) * a_pos

    # --- decay
    if hp.beta != 0.0:
        dE += hp.beta * E / P
        dA += hp.beta * A / N
        dWe = [g + hp.beta * W for g, W in zip(dWe, state.we)]
        dWa = [g + hp.beta * W for g, W in zip(dWa, state.wa)]

    grads = [dE, dA, *dWe, *dWa]
    for g in grads:
        _finite(g, "gradient")
    return parts, grads


def gradients(state, X):
    return value_and_grad(state, X)[1]


def kink_arguments(state):
    """Every argument of a relu/abs nonlinearity for the current state.

    Finite differences are unreliable for coordinates that move one of these
    across zero; the gradient checker uses this list to exclude them.
    """
    args = [state.A.ravel(), _chain(state.we).ravel(), _chain(state.wa).ravel()]
    if state.hp.activation == "relu":
        _, ze = _run_stack(state.E.T, state.we, lambda z: np.maximum(z, 0.0))
        _, za = _run_stack(state.A, state.wa, lambda z: np.maximum(z, 0.0))
        args += [z.ravel() for z in ze] + [z.ravel() for z in za]
    return np.concatenate(args)


WEIGHT_INITS = ("consistent", "glorot")


def build_state(E, A, hp, seed=0, weight_init="consistent"):
    """Fresh state from initial E, A.

    Every layer starts Glorot-uniform. With ``weight_init="consistent"``
    (default) the last layer of each stack is then replaced by the
    minimum-norm solution of ``W_1 ... W_L = target`` so the linear paths
    start out reproducing the initial factors: ``M_e = relu(A)`` and
    ``M_a = E.T``. Plain random products otherwise give a linear path far
    from the data, and the sign-based optimizer spends its first few hundred
    steps wrecking E and A to compensate.
    """
    from .initstage import init_weights

    if weight_init not in WEIGHT_INITS:
        raise UnmixError(f"weight_init must be one of {WEIGHT_INITS}, got {weight_init!r}")
    E = np.asarray(E, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    P, K = E.shape
    N = A.shape[1]
    hp = hp.resolve(K, P, N)
    ss_e, ss_a = spawn_seeds(seed, 2)
    we = init_weights(hp.widths_e, K, N, ss_e)
    wa = init_weights(hp.widths_a, K, P, ss_a)
    if weight_init == "consistent":
        we[-1] = np.linalg.pinv(_chain(we[:-1])) @ np.maximum(A, 0.0)
        wa[-1] = np.linalg.pinv(_chain(wa[:-1])) @ E.T
    return ModelState(E.copy(), A.copy(), we, wa, hp)


def reported_endmembers(state, scale=1.0):
    """Endmembers from branch E, mapped back to the original data interval."""
    return denormalize_endmembers(state.E, scale)


def reported_abundances(state, branch="a"):
    """Abundance estimate: ``relu(A)`` from branch A (default), or the
    branch-E diagnostic ``relu(W_1 ... W_L)`` with ``branch="e"``."""
    if branch == "a":
        return np.maximum(state.A, 0.0)
    if branch == "e":
        return np.maximum(_chain(state.we), 0.0)
    raise UnmixError(f"branch must be 'a' or 'e', got {branch!r}")


def with_hyperparams(state, **changes):
    s = state.copy()
    s.hp = replace(state.hp, **changes)
    return s
