"""Full-batch iRprop+ training and a finite-difference gradient checker."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import HsiCube, Hyperparams, NonFiniteError, UnmixError
from .mtlnet import ModelState, build_state, kink_arguments, objective, value_and_grad

log = logging.getLogger(__name__)

ETA_PLUS = 1.2
ETA_MINUS = 0.5
STEP_INIT = 0.0125
STEP_MIN = 1e-8
STEP_MAX = 1.0

#: An objective above this is treated as divergence. Data are normalized to
#: [0, 1], so a sane state sits many orders of magnitude below it.
BLOWUP = 1e30


@dataclass
class RpropState:
    step: np.ndarray
    prev_grad: np.ndarray
    prev_update: np.ndarray
    prev_j: float = np.inf
    eta_plus: float = ETA_PLUS
    eta_minus: float = ETA_MINUS
    step_min: float = STEP_MIN
    step_max: float = STEP_MAX

    def __post_init__(self):
        if not self.eta_minus < 1.0 < self.eta_plus:
            raise UnmixError("need eta_minus < 1 < eta_plus")

    @classmethod
    def fresh(cls, n, step0=STEP_INIT, **kw):
        return cls(np.full(n, float(step0)), np.zeros(n), np.zeros(n), **kw)


def irprop_step(params, grads, rs, j_curr):
    """One iRprop+ update with weight backtracking.

    ``params`` and ``grads`` are flat float64 arrays; ``params`` is updated in
    place and returned along with ``rs``. A coordinate whose gradient changed
    sign shrinks its step, undoes its previous move if the objective went up,
    and forgets its gradient so the next step does not adapt.
    """
    if params.shape != grads.shape or params.shape != rs.step.shape:
        raise UnmixError("params, grads and optimizer state must share one shape")
    if not np.isfinite(j_curr):
        raise NonFiniteError("objective is not finite")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("gradient has non-finite entries")
    kernels.irprop_update(params, grads, rs.prev_grad, rs.step, rs.prev_update,
                          j_curr > rs.prev_j, rs.eta_plus, rs.eta_minus,
                          rs.step_min, rs.step_max)
    rs.prev_j = float(j_curr)
    return params, rs


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_j: float = np.inf
    best_iter: int = -1
    diverged: bool = False
    stop_reason: str = ""

    def append(self, it, parts):
        self.records.append({"iter": it, **parts.as_dict()})

    def best_sequence(self):
        return np.minimum.accumulate([r["j"] for r in self.records])


def train(X, state, max_iters=None, rel_tol=1e-8, patience=20, callback=None):
    """Minimize the joint objective over E, A and both weight stacks.

    Each iteration evaluates J and its gradient on the whole cube and takes
    one iRprop+ step. Stops after ``max_iters`` steps (default
    ``state.hp.iterations``) or once the relative change of J stays below
    ``rel_tol`` for ``patience`` consecutive iterations. Returns the best
    state seen, not the last one.
    """
    if max_iters is None:
        max_iters = state.hp.iterations
    X = X.data if isinstance(X, HsiCube) else np.asarray(X, dtype=np.float64)
    hist = TrainHistory()
    theta = state.flat()
    rs = RpropState.fresh(theta.size)
    best = state.copy()
    current = state
    j_last = None
    quiet = 0

    it = 0
    while True:
        try:
            parts, grads = value_and_grad(current, X)
            if parts.j_total > BLOWUP:
                raise NonFiniteError(f"objective {parts.j_total:.3e} exceeds {BLOWUP:.0e}")
        except NonFiniteError as exc:
            log.warning("divergence at iteration %d: %s", it, exc)
            hist.diverged = True
            hist.stop_reason = "diverged"
            break
        hist.append(it, parts)
        if parts.j_total < hist.best_j:
            hist.best_j = parts.j_total
            hist.best_iter = it
            best = current.copy()
        if callback is not None:
            callback(it, parts, current)

        if j_last is not None:
            rel = abs(j_last - parts.j_total) / max(abs(j_last), 1e-300)
            quiet = quiet + 1 if rel < rel_tol else 0
            if quiet >= patience:
                hist.stop_reason = "converged"
                break
        j_last = parts.j_total
        if it >= max_iters:
            hist.stop_reason = "max_iters"
            break

        g = np.concatenate([gr.ravel() for gr in grads])
        irprop_step(theta, g, rs, parts.j_total)
        current = current.with_flat(theta)
        it += 1

    if not hist.records:
        hist.best_j = np.nan
        hist.best_iter = 0
    return best, hist


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradcheckReport:
    max_rel_err: float
    frac_excluded: float
    n_checked: int
    n_excluded: int
    passed: bool
    worst_index: int = -1

    def as_dict(self):
        return {"max_rel_err": self.max_rel_err, "frac_excluded": self.frac_excluded,
                "n_checked": self.n_checked, "n_excluded": self.n_excluded,
                "pass": self.passed}


def random_state(K=2, P=6, N=9, widths_e=(3,), widths_a=(3,), activation="tanh",
                 delta=5.0, alpha=0.1, beta=0.01, seed=11):
    """Unit-scaled random data and state for gradient checks."""
    rng = np.random.default_rng(seed)
    hp = Hyperparams(alpha=alpha, beta=beta, delta=delta, activation=activation,
                     widths_e=tuple(widths_e), widths_a=tuple(widths_a))
    X = rng.uniform(0.0, 1.0, (P, N))
    E = rng.standard_normal((P, K))
    A = rng.standard_normal((K, N))
    state = build_state(E, A, hp, seed=rng.integers(2**32))
    dims_e = [K, *widths_e, N]
    dims_a = [K, *widths_a, P]
    we = [rng.standard_normal((a, b)) for a, b in zip(dims_e[:-1], dims_e[1:])]
    wa = [rng.standard_normal((a, b)) for a, b in zip(dims_a[:-1], dims_a[1:])]
    return X, ModelState(E, A, we, wa, state.hp)


def check_gradients(state, X, h=1e-5, rtol=1e-4, kink_margin=1e-3, max_excluded=0.01,
                    floor=1e-8):
    """Compare analytic gradients with central differences, coordinate by coordinate.

    A coordinate is excluded when some relu/abs argument that it moves lies
    within ``kink_margin`` of zero.
    """
    _, grads = value_and_grad(state, X)
    g = np.concatenate([gr.ravel() for gr in grads])
    theta = state.flat()
    kinks0 = kink_arguments(state)
    near = np.abs(kinks0) < kink_margin

    errs = np.full(theta.size, np.nan)
    excluded = np.zeros(theta.size, dtype=bool)
    for i in range(theta.size):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        sp, sm = state.with_flat(tp), state.with_flat(tm)
        if near.any():
            moved = kink_arguments(sp) != kink_arguments(sm)
            if np.any(moved & near):
                excluded[i] = True
                continue
        fd = (objective(sp, X).j_total - objective(sm, X).j_total) / (2.0 * h)
        errs[i] = abs(fd - g[i]) / max(abs(g[i]), abs(fd), floor)
    checked = ~excluded
    max_err = float(np.max(errs[checked])) if checked.any() else 0.0
    frac = float(excluded.mean())
    worst = int(np.nanargmax(errs)) if checked.any() else -1
    return GradcheckReport(max_err, frac, int(checked.sum()), int(excluded.sum()),
                           bool(max_err < rtol and frac < max_excluded), worst)


def gradcheck(activation="tanh", seed=11, h=1e-5, dims=None, alpha=0.1, beta=0.01, delta=5.0):
    """Gradient check on a tiny random model; ``dims`` overrides
    ``dict(K=2, P=6, N=9, widths_e=(3,), widths_a=(3,))``."""
    d = dict(K=2, P=6, N=9, widths_e=(3,), widths_a=(3,))
    if dims:
        d.update(dims)
    X, state = random_state(activation=activation, seed=seed, alpha=alpha, beta=beta,
                            delta=delta, **d)
    n = state.flat().size
    if n > 5000:
        raise UnmixError(f"gradcheck is meant for tiny models; got {n} parameters")
    return check_gradients(state, X, h=h)
