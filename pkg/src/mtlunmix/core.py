"""Domain types, validation and data-interval normalization.

Matrices follow the usual unmixing layout: the cube ``X`` is bands x pixels
(P x N), endmembers ``E`` are P x K with one spectrum per column, and
abundances ``A`` are K x N with one pixel per column. Endmember and
abundance matrices are plain float64 ndarrays; :class:`HsiCube` carries the
spatial metadata that a bare matrix cannot.
"""
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid")

#: Default slack on reported abundance column sums (the ASC is soft).
SUM_TO_ONE_TOL = 0.05


class UnmixError(ValueError):
    """Invalid input or state for an unmixing operation."""


class ShapeError(UnmixError):
    pass


class NonFiniteError(UnmixError):
    pass


class DegenerateInputError(UnmixError):
    pass


@dataclass(frozen=True)
class HsiCube:
    """Hyperspectral observation matrix with its spatial layout.

    ``data[:, n]`` is the spectrum of pixel ``n``; pixels are stored in
    row-major spatial order, so pixel ``(row, col)`` is ``n = row*width+col``.
    """

    data: np.ndarray
    width: int
    height: int
    wavelengths: np.ndarray | None = field(default=None)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.wavelengths is not None:
            wl = np.array(self.wavelengths, dtype=np.float64)
            wl.setflags(write=False)
            object.__setattr__(self, "wavelengths", wl)

    @property
    def P(self):
        return self.data.shape[0]

    @property
    def N(self):
        return self.data.shape[1]

    def row(self, i):
        """Band ``i`` across all pixels."""
        return self.data[i, :]

    def column(self, n):
        """Spectrum of pixel ``n``."""
        return self.data[:, n]

    def band_image(self, i):
        return self.data[i].reshape(self.height, self.width)


def validate_cube(raw, width, height, wavelengths=None):
    """Check ``raw`` against the cube invariants and wrap it.

    Raises :class:`ShapeError` on layout problems and :class:`NonFiniteError`
    naming the first offending ``(band, pixel)``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ShapeError(f"cube must be 2-D (bands x pixels), got ndim={raw.ndim}")
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise ShapeError(f"width and height must be positive, got {width}x{height}")
    P, N = raw.shape
    if P < 1:
        raise ShapeError("cube has no bands")
    if N != width * height:
        raise ShapeError(
            f"cube has {N} pixel columns but width*height = {width}*{height} = {width * height}")
    bad = ~np.isfinite(raw)
    if bad.any():
        band, pixel = np.argwhere(bad)[0]
        raise NonFiniteError(
            f"non-finite value {raw[band, pixel]!r} at (band={band}, pixel={pixel})")
    if wavelengths is not None and len(wavelengths) != P:
        raise ShapeError(f"{len(wavelengths)} wavelengths for {P} bands")
    return HsiCube(raw, width, height, wavelengths)


def normalize(cube):
    """Divide the cube by its global maximum.

    Returns ``(scaled_cube, scale)``; multiply by ``scale`` to go back.
    """
    m = float(np.max(cube.data))
    if np.max(np.abs(cube.data)) == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero cube")
    if m <= 0.0:
        raise DegenerateInputError(f"cube maximum is {m}; expected a positive maximum")
    return HsiCube(cube.data / m, cube.width, cube.height, cube.wavelengths), m


def denormalize_endmembers(E, scale):
    if not scale > 0:
        raise UnmixError(f"scale must be positive, got {scale}")
    return np.asarray(E, dtype=np.float64) * scale


def check_endmembers(E, P=None, N=None):
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2:
        raise ShapeError("endmember matrix must be 2-D (bands x K)")
    if P is not None and E.shape[0] != P:
        raise ShapeError(f"endmembers have {E.shape[0]} bands, cube has {P}")
    K = E.shape[1]
    if K < 1 or (P is not None and N is not None and K > min(P, N)):
        raise ShapeError(f"K={K} must satisfy 1 <= K <= min(P, N)")
    if not np.all(np.isfinite(E)):
        raise NonFiniteError("endmember matrix has non-finite entries")
    return E


def check_abundances(A, K=None, N=None):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError("abundance matrix must be 2-D (K x pixels)")
    if K is not None and A.shape[0] != K:
        raise ShapeError(f"abundances have {A.shape[0]} rows, expected K={K}")
    if N is not None and A.shape[1] != N:
        raise ShapeError(f"abundances have {A.shape[1]} columns, expected N={N}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError("abundance matrix has non-finite entries")
    return A


def sum_to_one_fraction(A, tol=SUM_TO_ONE_TOL):
    """Fraction of pixels whose (rectified) abundances sum to 1 within ``tol``."""
    s = np.maximum(A, 0.0).sum(axis=0)
    return float(np.mean(np.abs(s - 1.0) <= tol))


def default_widths(K, out_dim, n_hidden=2):
    """Strictly increasing hidden widths between ``K`` and ``out_dim``.

    Geometric interpolation, clamped so that ``K < h_1 < ... < out_dim``.
    Fewer layers are used when the gap is too small for ``n_hidden``.
    """
    gap = out_dim - K - 1
    if gap < 1:
        raise UnmixError(f"no hidden width fits strictly between K={K} and {out_dim}")
    n_hidden = min(n_hidden, gap)
    ratio = (out_dim / K) ** (1.0 / (n_hidden + 1))
    widths = []
    lo = K
    for i in range(1, n_hidden + 1):
        h = int(round(K * ratio ** i))
        remaining = n_hidden - i
        h = max(h, lo + 1)
        h = min(h, out_dim - 1 - remaining)
        widths.append(h)
        lo = h
    return widths


@dataclass(frozen=True)
class Hyperparams:
    """Training hyperparameters.

    ``widths_e``/``widths_a`` are the hidden layer sizes of the endmember and
    abundance branches. ``None`` means "pick from the problem size" and is
    resolved by :meth:`resolve`.
    """

    alpha: float = 0.5
    beta: float = 0.01
    delta: float = 5.0
    activation: str = "relu"
    widths_e: tuple | None = None
    widths_a: tuple | None = None
    iterations: int = 2000

    def __post_init__(self):
        for name in ("alpha", "beta", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise UnmixError(f"{name} must be a nonnegative real, got {v}")
        if self.activation not in ACTIVATIONS:
            raise UnmixError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise UnmixError(f"iterations must be a nonnegative integer, got {self.iterations}")
        for name in ("widths_e", "widths_a"):
            w = getattr(self, name)
            if w is not None:
                w = tuple(int(h) for h in w)
                object.__setattr__(self, name, w)
                _check_increasing(w, name)

    def resolve(self, K, P, N):
        """Fill in default widths and check both width laws for (K, P, N)."""
        we = self.widths_e if self.widths_e is not None else tuple(default_widths(K, N))
        wa = self.widths_a if self.widths_a is not None else tuple(default_widths(K, P))
        check_width_law(we, K, N, "widths_e")
        check_width_law(wa, K, P, "widths_a")
        return Hyperparams(self.alpha, self.beta, self.delta, self.activation,
                           we, wa, self.iterations)


def _check_increasing(widths, name):
    if len(widths) == 0:
        raise UnmixError(f"{name} needs at least one hidden layer")
    if any(b <= a for a, b in zip(widths, widths[1:])):
        raise UnmixError(f"{name} must be strictly increasing, got {list(widths)}")


def check_width_law(widths, K, out_dim, name="widths"):
    """Enforce ``K < h_1 < ... < h_last < out_dim``."""
    widths = tuple(int(h) for h in widths)
    _check_increasing(widths, name)
    if not (K < widths[0] and widths[-1] < out_dim):
        raise UnmixError(
            f"{name}={list(widths)} violates K={K} < h_1 < ... < h_last < {out_dim}")
    return widths


def spawn_seeds(seed, n):
    """``n`` independent child seeds of an int or ``SeedSequence``."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(n)
