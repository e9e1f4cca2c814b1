"""Closed-form spectral data for bilinear parabolic control problems.

A :class:`SpectralProblem` stores the eigenvalues of a self-adjoint operator
``A`` and the coupling matrix ``<B phi_j, phi_k>`` of a bounded operator ``B``
in the eigenbasis of ``A``.  All indices are 1-based.  Problems whose natural
indexing starts at 0 (Neumann) are stored shifted by one: storage index ``i``
corresponds to the mathematical index ``i - 1``.

Four gallery problems are provided, addressable by id:

========================  =====================================================
``dirichlet-x2``          -u_xx on (0,1), Dirichlet, B = multiplication by x^2
``neumann-x2``            -u_xx on (0,1), Neumann, B = multiplication by x^2
``varcoeff-x``            -((1+x)^2 u_x)_x, Dirichlet, B = multiplication by x
``radial-x2``             radial Dirichlet Laplacian on the unit 3-ball, mu = r^2
========================  =====================================================

Normalization of the x^2 couplings was settled against adaptive quadrature of
the defining integral: for the Dirichlet and radial problems the off-diagonal
entry is ``8 k j (-1)^(k+j) / ((k^2 - j^2)^2 pi^2)``.  The radial inner product
(measure ``4 pi r^2 dr``) reduces exactly to the Dirichlet one, so the two
problems share the same matrix.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateCouplingError, QuadratureError

__all__ = [
    "SpectralProblem",
    "EigensolutionTarget",
    "make_dirichlet_x2",
    "make_neumann_x2",
    "make_variable_coeff_x",
    "make_radial_ball_x2",
    "GALLERY",
    "get_problem",
    "verify_gap",
    "verify_gap_relative",
    "verify_decay",
]

LN2 = math.log(2.0)
QUAD_ABS_TOL = 1e-11


@dataclass(frozen=True)
class EigensolutionTarget:
    """The free trajectory psi_j(t) = exp(-lambda_j t) phi_j."""

    j: int
    lambda_j: float

    def amplitude(self, t):
        return np.exp(-self.lambda_j * np.asarray(t, dtype=float))

    @property
    def description(self):
        return f"psi_{self.j}(t) = exp(-{self.lambda_j:.17g} t) phi_{self.j}"


@dataclass(frozen=True)
class SpectralProblem:
    """Eigenvalues of A and couplings of B for one control problem.

    ``offset`` is subtracted from every eigenvalue; :meth:`shifted` uses it to
    build the operator ``A - offset I`` without touching the couplings.
    """

    name: str
    sigma: float
    b_norm: float
    gap_alpha: float
    decay_b: float
    decay_exponent: float
    index_origin: int
    eigenvalue_fn: Callable = field(repr=False)
    b_entry_fn: Callable = field(repr=False)
    decay_fn: Callable = field(repr=False)
    eigenfunction: Callable | None = field(default=None, repr=False)
    potential: Callable | None = field(default=None, repr=False)
    measure: Callable | None = field(default=None, repr=False)
    domain: tuple = (0.0, 1.0)
    offset: float = 0.0

    def eigenvalue(self, k: int) -> float:
        _check_index(k)
        return float(self.eigenvalue_fn(np.array([k], dtype=float))[0]) - self.offset

    def eigenvalues(self, n: int) -> np.ndarray:
        """lambda_1, ..., lambda_n as an array."""
        k = np.arange(1, n + 1, dtype=float)
        return self.eigenvalue_fn(k) - self.offset

    def b_entry(self, j: int, k: int) -> float:
        _check_index(j)
        _check_index(k)
        return float(self.b_entry_fn(j, k))

    def b_row(self, j: int, n: int) -> np.ndarray:
        """Couplings <B phi_j, phi_k> for k = 1..n."""
        return np.array([self.b_entry_fn(j, k) for k in range(1, n + 1)])

    def b_matrix(self, n: int) -> np.ndarray:
        mat = np.empty((n, n))
        for j in range(1, n + 1):
            for k in range(j, n + 1):
                mat[j - 1, k - 1] = mat[k - 1, j - 1] = self.b_entry_fn(j, k)
        return mat

    def decay_constant(self, j: int) -> float:
        """Lower bound b with |lambda_k - lambda_j|^q |<B phi_j, phi_k>| >= b, k != j."""
        return float(self.decay_fn(j))

    def target(self, j: int) -> EigensolutionTarget:
        return EigensolutionTarget(j=j, lambda_j=self.eigenvalue(j))

    def shifted(self, offset: float) -> "SpectralProblem":
        """The pair {A - offset I, B}; sigma is updated to the new lower bound."""
        total = self.offset + offset
        lam1 = float(self.eigenvalue_fn(np.array([1.0]))[0]) - total
        return replace(self, offset=total, sigma=max(0.0, -lam1))


def _check_index(k):
    if int(k) != k or k < 1:
        raise ValueError(f"eigen-index must be a positive integer, got {k!r}")


# -- Dirichlet, mu = x^2 ----------------------------------------------------------


def _dirichlet_eigs(k):
    return (k * math.pi) ** 2


def _x2_sine_entry(j, k):
    if j == k:
        return (2 * j * j * math.pi ** 2 - 3) / (6 * j * j * math.pi ** 2)
    sign = -1.0 if (j + k) % 2 else 1.0
    return 8.0 * k * j * sign / ((k * k - j * j) ** 2 * math.pi ** 2)


def make_dirichlet_x2() -> SpectralProblem:
    return SpectralProblem(
        name="dirichlet-x2",
        sigma=0.0,
        b_norm=1.0,
        gap_alpha=math.pi,
        # inf_k 8 pi j k / sqrt|k^2 - j^2| >= 8 pi, attained as k -> inf for j = 1
        decay_b=8 * math.pi,
        decay_exponent=1.5,
        index_origin=1,
        eigenvalue_fn=_dirichlet_eigs,
        b_entry_fn=_x2_sine_entry,
        decay_fn=lambda j: 8 * math.pi,
        eigenfunction=lambda k, x: math.sqrt(2.0) * np.sin(k * math.pi * x),
        potential=lambda x: x ** 2,
        measure=lambda x: np.ones_like(x),
    )


# -- Neumann, mu = x^2 ------------------------------------------------------------


def _neumann_eigs(k):
    # storage index k holds the mathematical eigenvalue of index k - 1
    return ((k - 1) * math.pi) ** 2


def _neumann_entry(j, k):
    m, n = j - 1, k - 1
    if m == 0 and n == 0:
        return 1.0 / 3.0
    if m == 0 or n == 0:
        r = max(m, n)
        return 2 * math.sqrt(2.0) * (-1) ** r / (r * math.pi) ** 2
    if m == n:
        return 1.0 / 3.0 + 1.0 / (2 * m * m * math.pi ** 2)
    return 4.0 * (-1) ** (m + n) * (n * n + m * m) / ((n * n - m * m) ** 2 * math.pi ** 2)


def _neumann_phi(k, x):
    if k == 1:
        return np.ones_like(np.asarray(x, dtype=float))
    return math.sqrt(2.0) * np.cos((k - 1) * math.pi * x)


def make_neumann_x2() -> SpectralProblem:
    """Neumann Laplacian; storage index i is the 0-based Neumann index i - 1."""
    return SpectralProblem(
        name="neumann-x2",
        sigma=0.0,
        b_norm=1.0,
        gap_alpha=math.pi,
        # |lambda_k - lambda_j| |b_jk| = 4 (j^2+k^2)/|k^2-j^2| >= 4, or 2 sqrt 2 with the constant mode
        decay_b=2 * math.sqrt(2.0),
        decay_exponent=1.0,
        index_origin=0,
        eigenvalue_fn=_neumann_eigs,
        b_entry_fn=_neumann_entry,
        decay_fn=lambda j: 2 * math.sqrt(2.0),
        eigenfunction=_neumann_phi,
        potential=lambda x: x ** 2,
        measure=lambda x: np.ones_like(x),
    )


# -- variable coefficient, mu = x -------------------------------------------------


class _CosineMoments:
    """Memoized I(m) = int_0^1 (2^y - 1) cos(m pi y) dy.

    Under y = ln(1+x)/ln 2 the eigenfunctions become sqrt(2) sin(k pi y) with
    unit Jacobian, so <x phi_j, phi_k> = I(|j-k|) - I(j+k).
    """

    def __init__(self):
        self._cache = {}
        self._lock = threading.Lock()

    def __call__(self, m: int) -> float:
        with self._lock:
            hit = self._cache.get(m)
        if hit is not None:
            return hit
        f = lambda y: 2.0 ** y - 1.0
        if m == 0:
            val, err = quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
        else:
            val, err = quad(f, 0.0, 1.0, weight="cos", wvar=m * math.pi,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
        if not err <= QUAD_ABS_TOL:
            raise QuadratureError(f"cosine moment m={m}: error estimate {err:.3g}")
        with self._lock:
            self._cache[m] = val
        return val


def _varcoeff_eigs(k):
    return 0.25 + (k * math.pi / LN2) ** 2


def _varcoeff_phi(k, x):
    return math.sqrt(2.0 / LN2) * (1.0 + x) ** -0.5 * np.sin(k * math.pi / LN2 * np.log1p(x))


def make_variable_coeff_x() -> SpectralProblem:
    moments = _CosineMoments()

    def entry(j, k):
        return moments(abs(j - k)) - moments(j + k)

    limit_b = lambda j: 4 * j * math.pi / LN2 ** 2

    def decay(j, scan=64):
        lam = _varcoeff_eigs(np.arange(1, scan + 1, dtype=float))
        vals = [abs(lam[k - 1] - lam[j - 1]) ** 1.5 * abs(entry(j, k))
                for k in range(1, scan + 1) if k != j]
        return min(min(vals), limit_b(j))

    return SpectralProblem(
        name="varcoeff-x",
        sigma=0.0,
        b_norm=1.0,
        gap_alpha=math.pi / LN2,
        decay_b=limit_b(1),
        decay_exponent=1.5,
        index_origin=1,
        eigenvalue_fn=_varcoeff_eigs,
        b_entry_fn=entry,
        decay_fn=decay,
        eigenfunction=_varcoeff_phi,
        potential=lambda x: x,
        measure=lambda x: np.ones_like(x),
    )


# -- radial ball, mu = r^2 --------------------------------------------------------


def _radial_phi(k, r):
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.sin(k * math.pi * r) / (math.sqrt(2 * math.pi) * r)
    return np.where(r == 0.0, k * math.pi / math.sqrt(2 * math.pi), val)


def make_radial_ball_x2() -> SpectralProblem:
    return SpectralProblem(
        name="radial-x2",
        sigma=0.0,
        b_norm=1.0,
        gap_alpha=math.pi,
        decay_b=8 * math.pi,
        decay_exponent=1.5,
        index_origin=1,
        eigenvalue_fn=_dirichlet_eigs,
        b_entry_fn=_x2_sine_entry,
        decay_fn=lambda j: 8 * math.pi,
        eigenfunction=_radial_phi,
        potential=lambda r: r ** 2,
        measure=lambda r: 4 * math.pi * r ** 2,
    )


GALLERY = {
    "dirichlet-x2": make_dirichlet_x2,
    "neumann-x2": make_neumann_x2,
    "varcoeff-x": make_variable_coeff_x,
    "radial-x2": make_radial_ball_x2,
}

_instances = {}
_instances_lock = threading.Lock()


def get_problem(problem_id: str) -> SpectralProblem:
    """Shared gallery instance by id (instances are immutable)."""
    if problem_id not in GALLERY:
        raise KeyError(f"unknown problem id {problem_id!r}; choose from {sorted(GALLERY)}")
    with _instances_lock:
        if problem_id not in _instances:
            _instances[problem_id] = GALLERY[problem_id]()
        return _instances[problem_id]


def verify_gap(problem: SpectralProblem, K: int) -> float:
    """min over k < K of sqrt(lambda_{k+1}) - sqrt(lambda_k)."""
    if K < 2:
        raise ValueError("K must be at least 2")
    lam = problem.eigenvalues(K)
    return float(np.min(np.diff(np.sqrt(lam))))


def verify_gap_relative(problem: SpectralProblem, K: int) -> float:
    """Gap measured from the bottom of the spectrum: sqrt(lam_{k+1}-lam_1) - sqrt(lam_k-lam_1)."""
    if K < 2:
        raise ValueError("K must be at least 2")
    lam = problem.eigenvalues(K)
    return float(np.min(np.diff(np.sqrt(lam - lam[0]))))


def verify_decay(problem: SpectralProblem, j: int, K: int) -> float:
    """Empirical b: min over k <= K, k != j of |lambda_k - lambda_j|^q |<B phi_j, phi_k>|."""
    if j < 1 or K <= j:
        raise ValueError("need 1 <= j < K")
    lam = problem.eigenvalues(K)
    q = problem.decay_exponent
    best = math.inf
    for k in range(1, K + 1):
        if k == j:
            continue
        b = problem.b_entry(j, k)
        if b == 0.0:
            raise DegenerateCouplingError(j, k)
        best = min(best, abs(lam[k - 1] - lam[j - 1]) ** q * abs(b))
    return best
