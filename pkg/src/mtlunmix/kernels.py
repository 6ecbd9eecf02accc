"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``irprop_update``, ``fcls_solve``, ``bilinear_terms``)
dispatch on :data:`mtlunmix._accel.USE_NUMBA`. Both flavours are importable
directly so tests and the benchmark can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# iRprop+ coordinate update
# ---------------------------------------------------------------------------


def _irprop_update_py(theta, grad, prev_grad, step, prev_update, j_increased,
                      eta_plus, eta_minus, step_min, step_max):
    for i in range(theta.shape[0]):
        g = grad[i]
        s = g * prev_grad[i]
        if s > 0.0:
            d = step[i] * eta_plus
            step[i] = d if d < step_max else step_max
            u = -np.sign(g) * step[i]
            theta[i] += u
            prev_update[i] = u
            prev_grad[i] = g
        elif s < 0.0:
            d = step[i] * eta_minus
            step[i] = d if d > step_min else step_min
            if j_increased:
                u = -prev_update[i]
                theta[i] += u
                prev_update[i] = u
            else:
                prev_update[i] = 0.0
            prev_grad[i] = 0.0
        else:
            u = -np.sign(g) * step[i]
            theta[i] += u
            prev_update[i] = u
            prev_grad[i] = g


irprop_update_numba = njit(_irprop_update_py)


def irprop_update_numpy(theta, grad, prev_grad, step, prev_update, j_increased,
                        eta_plus, eta_minus, step_min, step_max):
    s = grad * prev_grad
    grow = s > 0.0
    shrink = s < 0.0
    keep = ~(grow | shrink)

    step[grow] = np.minimum(step[grow] * eta_plus, step_max)
    step[shrink] = np.maximum(step[shrink] * eta_minus, step_min)

    move = grow | keep
    upd = np.zeros_like(theta)
    upd[move] = -np.sign(grad[move]) * step[move]
    if j_increased:
        upd[shrink] = -prev_update[shrink]
    theta[move] += upd[move]
    if j_increased:
        theta[shrink] += upd[shrink]

    prev_update[:] = upd
    prev_grad[:] = grad
    prev_grad[shrink] = 0.0


def irprop_update(theta, grad, prev_grad, step, prev_update, j_increased,
                  eta_plus, eta_minus, step_min, step_max):
    """In-place iRprop+ update of flat float64 arrays.

    ``prev_grad``, ``step`` and ``prev_update`` are the optimizer memory and
    are overwritten with the values needed by the next call.
    """
    fn = irprop_update_numba if USE_NUMBA else irprop_update_numpy
    fn(theta, grad, prev_grad, step, prev_update, bool(j_increased),
       float(eta_plus), float(eta_minus), float(step_min), float(step_max))


# ---------------------------------------------------------------------------
# Nonnegative least squares by projected gradient, one pixel at a time
# ---------------------------------------------------------------------------


def _quad(gram, b, c, a):
    # 0.5 a'Ga - b'a + c with explicit loops (b is a strided column)
    f = c
    for k in range(a.shape[0]):
        acc = 0.0
        for j in range(a.shape[0]):
            acc += gram[k, j] * a[j]
        f += a[k] * (0.5 * acc - b[k])
    return f


quad = njit(_quad)


def _fcls_py(gram, rhs, const, a0, lr, tol, max_iter, out, n_iter):
    K, N = rhs.shape
    a = np.empty(K)
    a_new = np.empty(K)
    ga = np.empty(K)
    for n in range(N):
        for k in range(K):
            a[k] = a0[k, n]
        b = rhs[:, n]
        f_prev = quad(gram, b, const[n], a)
        it = 0
        done = False
        while it < max_iter:
            it += 1
            for k in range(K):
                acc = 0.0
                for j in range(K):
                    acc += gram[k, j] * a[j]
                ga[k] = acc
            moved = 0.0
            for k in range(K):
                v = a[k] - lr * (ga[k] - rhs[k, n])
                a_new[k] = v if v > 0.0 else 0.0
                moved += abs(a_new[k] - a[k])
            for k in range(K):
                a[k] = a_new[k]
            f = quad(gram, b, const[n], a)
            if moved == 0.0:
                done = True
                break
            # floor keeps consistent pixels (f -> 0) from chasing rounding noise
            denom = max(abs(f_prev), 1e-6 * const[n], 1e-300)
            if abs(f_prev - f) / denom < tol:
                done = True
                break
            f_prev = f
        for k in range(K):
            out[k, n] = a[k]
        n_iter[n] = it if done else -it


fcls_solve_numba = njit(_fcls_py)


def fcls_solve_numpy(gram, rhs, const, a0, lr, tol, max_iter, out, n_iter):
    a = a0.copy()

    def fval(a, cols):
        return (0.5 * np.einsum("kn,kn->n", a, gram @ a)
                - np.einsum("kn,kn->n", rhs[:, cols], a) + const[cols])

    active = np.arange(a.shape[1])
    f_prev = fval(a, active)
    it = 0
    while active.size and it < max_iter:
        it += 1
        sub = a[:, active]
        new = np.maximum(sub - lr * (gram @ sub - rhs[:, active]), 0.0)
        moved = np.abs(new - sub).sum(axis=0)
        a[:, active] = new
        f = fval(new, active)
        denom = np.maximum(np.maximum(np.abs(f_prev), 1e-6 * const[active]), 1e-300)
        stop = (moved == 0.0) | (np.abs(f_prev - f) / denom < tol)
        n_iter[active[stop]] = it
        keep = ~stop
        active = active[keep]
        f_prev = f[keep]
    n_iter[active] = -it
    out[:] = a


def fcls_solve(gram, rhs, const, a0, lr, tol, max_iter):
    """Projected-gradient NNLS in the Gram form ``0.5 a'Ga - b'a + c``.

    Returns ``(A, n_iter)``; a negative ``n_iter`` entry marks a pixel that
    hit ``max_iter`` before the relative objective change fell below ``tol``.
    The change is taken relative to ``max(|f|, 1e-6 * const)``; ``const`` is
    half the pixel's augmented energy, so the test still ends on consistent
    data, where ``f`` sinks into the rounding noise of the Gram form.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    const = np.ascontiguousarray(const, dtype=np.float64)
    a0 = np.ascontiguousarray(a0, dtype=np.float64)
    out = np.empty_like(rhs)
    n_iter = np.zeros(rhs.shape[1], dtype=np.int64)
    fn = fcls_solve_numba if USE_NUMBA else fcls_solve_numpy
    fn(gram, rhs, const, a0, float(lr), float(tol), int(max_iter), out, n_iter)
    return out, n_iter


# ---------------------------------------------------------------------------
# Pairwise interaction term of the bilinear mixing model
# ---------------------------------------------------------------------------


def _bilinear_py(E, A, out):
    P, K = E.shape
    N = A.shape[1]
    # innermost loop runs along a row of ``out`` (contiguous pixels)
    for i in range(K - 1):
        for j in range(i + 1, K):
            for p in range(P):
                e = E[p, i] * E[p, j]
                if e == 0.0:
                    continue
                for n in range(N):
                    out[p, n] += e * A[i, n] * A[j, n]


bilinear_terms_numba = njit(_bilinear_py)


def bilinear_terms_numpy(E, A, out):
    # sum_{i<j} a_i a_j e_i*e_j = ((Ea)^2 - (E^2)(A^2)) / 2
    out += 0.5 * ((E @ A) ** 2 - (E * E) @ (A * A))


def bilinear_terms(E, A):
    """Return ``sum_{i<j} a_i a_j (e_i * e_j)`` for every pixel column of A."""
    E = np.ascontiguousarray(E, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    out = np.zeros((E.shape[0], A.shape[1]))
    fn = bilinear_terms_numba if USE_NUMBA else bilinear_terms_numpy
    fn(E, A, out)
    return out
