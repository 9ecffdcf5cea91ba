"""Dense complex linear algebra for the truncated operators.

Two routes for general eigenvalues are provided: ``backend="qr"`` is a
self-contained Hessenberg reduction followed by single-shift complex QR
with Wilkinson shifts; ``backend="lapack"`` defers to LAPACK through
numpy.  The two are cross-checked in the test-suite; the QR route is
O(N^3) in pure numpy row operations and is meant for N up to a few
hundred.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import linear_sum_assignment

__all__ = [
    "ConvergenceError",
    "HermitianError",
    "SingularContourError",
    "SpectrumResult",
    "WindingResult",
    "MixedNormResult",
    "hessenberg",
    "eig_general",
    "eig_hermitian",
    "op_norm_2",
    "match_spectra",
    "block_components",
    "logdet_phase_along",
    "mixed_norm_lower_bound",
    "lp_norm",
]


class ConvergenceError(RuntimeError):
    """QR iteration hit its cap.  ``partial`` holds the eigenvalues deflated so far."""

    def __init__(self, msg, partial=None, active=None):
        super().__init__(msg)
        self.partial = [] if partial is None else list(partial)
        self.active = active


class HermitianError(ValueError):
    pass


class SingularContourError(RuntimeError):
    pass


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray | None = None
    residuals: np.ndarray | None = None


def _as_matrix(A) -> np.ndarray:
    A = np.array(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError("expected a nonempty square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def hessenberg(A) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduction ``A = Q H Q^*`` with H upper Hessenberg."""
    H = _as_matrix(A)
    n = H.shape[0]
    Q = np.eye(n, dtype=complex)
    for j in range(n - 2):
        x = H[j + 1:, j].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * nx
        v /= np.linalg.norm(v)
        H[j + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[j + 1:, :])
        H[:, j + 1:] -= 2.0 * np.outer(H[:, j + 1:] @ v, v.conj())
        Q[:, j + 1:] -= 2.0 * np.outer(Q[:, j + 1:] @ v, v.conj())
        H[j + 2:, j] = 0.0
    return H, Q


def _givens(x: complex, y: complex) -> tuple[float, complex]:
    ax = abs(x)
    r = math.hypot(ax, abs(y))
    if r == 0.0:
        return 1.0, 0.0
    if ax == 0.0:
        return 0.0, 1.0
    return ax / r, (x / ax) * y.conjugate() / r


def _wilkinson(a, b, c, d) -> complex:
    half = 0.5 * (a - d)
    disc = cmath.sqrt(half * half + b * c)
    mu1 = 0.5 * (a + d) + disc
    mu2 = 0.5 * (a + d) - disc
    return mu1 if abs(mu1 - d) < abs(mu2 - d) else mu2


def _schur_qr(T: np.ndarray, Z: np.ndarray, max_iter: int):
    n = T.shape[0]
    eps = np.finfo(float).eps
    hi = n - 1
    its = 0
    total = 0
    while hi > 0:
        l = hi
        while l > 0:
            sub = abs(T[l, l - 1])
            if sub <= eps * (abs(T[l, l]) + abs(T[l - 1, l - 1])) or sub < 1e-300:
                T[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            hi -= 1
            its = 0
            continue
        if total >= max_iter:
            partial = np.diag(T)[hi + 1:].copy()
            raise ConvergenceError(
                f"QR iteration cap {max_iter} reached with active block [{l}, {hi}]",
                partial=partial, active=(l, hi),
            )
        its += 1
        total += 1
        if its % 11 == 0:
            # exceptional shift
            mu = T[hi, hi] + 0.75 * abs(T[hi, hi - 1]) * (1 + 1j)
        else:
            mu = _wilkinson(T[hi - 1, hi - 1], T[hi - 1, hi], T[hi, hi - 1], T[hi, hi])
        x = T[l, l] - mu
        y = T[l + 1, l]
        for j in range(l, hi):
            c, s = _givens(x, y)
            lo_col = max(j - 1, 0)
            rj = T[j, lo_col:].copy()
            rj1 = T[j + 1, lo_col:]
            T[j, lo_col:] = c * rj + s * rj1
            T[j + 1, lo_col:] = -np.conj(s) * rj + c * rj1
            if j > l:
                T[j + 1, j - 1] = 0.0
            top = min(j + 2, hi) + 1
            cj = T[:top, j].copy()
            cj1 = T[:top, j + 1]
            T[:top, j] = c * cj + np.conj(s) * cj1
            T[:top, j + 1] = -s * cj + c * cj1
            zj = Z[:, j].copy()
            Z[:, j] = c * zj + np.conj(s) * Z[:, j + 1]
            Z[:, j + 1] = -s * zj + c * Z[:, j + 1]
            if j < hi - 1:
                x = T[j + 1, j]
                y = T[j + 2, j]
    return T, Z


def _triangular_eigvecs(T: np.ndarray) -> np.ndarray:
    n = T.shape[0]
    V = np.zeros((n, n), dtype=complex)
    small = np.finfo(float).eps * max(np.abs(T).max(), 1e-300)
    for i in range(n):
        V[i, i] = 1.0
        if i == 0:
            continue
        M = T[:i, :i] - T[i, i] * np.eye(i)
        d = np.diag(M).copy()
        d[np.abs(d) < small] = small
        M[np.diag_indices(i)] = d
        V[:i, i] = solve_triangular(M, -T[:i, i])
        V[:, i] /= np.linalg.norm(V[:, i])
    return V


def eig_general(A, tol: float = 1e-10, vectors: bool = False, backend: str = "lapack",
                max_iter: int | None = None) -> SpectrumResult:
    """All eigenvalues of a dense complex matrix.

    Parameters
    ----------
    A : array_like, (N, N)
    tol : float
        Residual tolerance used only to flag eigenvectors in ``residuals``.
    vectors : bool
        Also return right eigenvectors and residuals ``|Av - lv| / |A|``.
    backend : {"lapack", "qr"}
    max_iter : int, optional
        QR sweep cap for ``backend="qr"`` (default ``30 N``).
    """
    A = _as_matrix(A)
    n = A.shape[0]
    if backend == "lapack":
        if vectors:
            w, V = np.linalg.eig(A)
        else:
            w, V = np.linalg.eigvals(A), None
    elif backend == "qr":
        scale = np.abs(A).max()
        if scale == 0.0:
            w = np.zeros(n, dtype=complex)
            V = np.eye(n, dtype=complex) if vectors else None
        else:
            H, Q = hessenberg(A / scale)
            T, Z = _schur_qr(H, Q, max_iter or 30 * n)
            w = np.diag(T) * scale
            V = Z @ _triangular_eigvecs(T) if vectors else None
    else:
        raise ValueError(f"unknown backend {backend!r}")
    res = None
    if vectors:
        nA = max(np.linalg.norm(A, 2), 1e-300)
        res = np.linalg.norm(A @ V - V * w, axis=0) / nA
    return SpectrumResult(np.asarray(w, dtype=complex), V, res)


def eig_hermitian(A, hermitian_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and unitary eigenvector matrix of a Hermitian matrix."""
    A = _as_matrix(A)
    dev = np.abs(A - A.conj().T).max()
    if dev > hermitian_tol * max(1.0, np.abs(A).max()):
        raise HermitianError(f"matrix deviates from Hermitian by {dev:.3e}")
    A = 0.5 * (A + A.conj().T)
    w, U = np.linalg.eigh(A)
    return w, U


def op_norm_2(A, tol: float = 1e-13, max_iter: int = 20000, block: int = 6, seed: int = 0) -> float:
    """Largest singular value by subspace (block power) iteration on ``A^* A``."""
    A = _as_matrix(A) if np.ndim(A) == 2 else np.atleast_2d(np.asarray(A, dtype=complex))
    if not np.any(A):
        return 0.0
    n = A.shape[1]
    b = min(block, n)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))
    X, _ = np.linalg.qr(X)
    prev = 0.0
    for _ in range(max_iter):
        Y = A.conj().T @ (A @ X)
        S = X.conj().T @ Y
        theta = np.linalg.eigvalsh(0.5 * (S + S.conj().T))[-1]
        if b == n or abs(theta - prev) <= tol * abs(theta):
            return float(math.sqrt(max(theta, 0.0)))
        prev = theta
        X, _ = np.linalg.qr(Y)
    return float(math.sqrt(max(prev, 0.0)))


def match_spectra(a, b) -> tuple[float, np.ndarray]:
    """Minimal-weight bipartite matching of two eigenvalue multisets.

    Returns the largest matched distance and the permutation ``perm`` with
    ``a[i] <-> b[perm[i]]``.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if len(a) != len(b):
        raise ValueError("multisets of different size")
    if len(a) == 0:
        return 0.0, np.zeros(0, dtype=int)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(a), dtype=int)
    perm[rows] = cols
    return float(cost[rows, cols].max()), perm


def block_components(A, tol: float = 0.0) -> list[np.ndarray]:
    """Index sets of the irreducible diagonal blocks of ``A`` (up to permutation).

    Two indices are coupled when either off-diagonal entry exceeds ``tol``.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    mask = np.abs(np.asarray(A)) > tol
    mask = mask | mask.T
    ncomp, labels = connected_components(csr_matrix(mask), directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


@dataclass
class WindingResult:
    winding: int
    raw: float
    max_step: float
    n_samples: int
    min_log_abs_det: float
    radius: float | None = None


def _log_phase(mats) -> tuple[complex, float]:
    if isinstance(mats, np.ndarray) and mats.ndim == 2:
        mats = [mats]
    sign = 1.0 + 0j
    logabs = 0.0
    for M in mats:
        s, la = np.linalg.slogdet(M)
        if s == 0 or not np.isfinite(la):
            raise SingularContourError("matrix family is singular at a contour sample")
        sign *= s
        logabs += la
    return sign / abs(sign), logabs


def logdet_phase_along(path, A_of_z: Callable[[complex], np.ndarray | Sequence[np.ndarray]],
                       n_initial: int = 64, max_step: float = math.pi / 2,
                       max_samples: int = 20000, singular_floor: float = -600.0) -> WindingResult:
    """Winding number of ``det A(z)`` along a closed contour.

    ``path`` is either a callable ``t -> z`` on ``[0, 1)`` (closed, ``t=1``
    returns to ``t=0``) or an array of contour points (closed implicitly,
    refined by linear interpolation).  ``A_of_z`` may return a matrix or a
    sequence of matrices whose determinants are multiplied.  Segments are
    bisected until every phase increment is below ``max_step``.
    """
    if callable(path):
        gamma = path
    else:
        pts = np.asarray(path, dtype=complex).ravel()
        m = len(pts)
        if m < 3:
            raise ValueError("contour needs at least three points")

        def gamma(t):
            s = (t % 1.0) * m
            i = int(math.floor(s)) % m
            f = s - math.floor(s)
            return pts[i] * (1 - f) + pts[(i + 1) % m] * f

        n_initial = max(n_initial, m) if n_initial % m else n_initial
        n_initial = m * max(1, int(math.ceil(n_initial / m)))

    ts = list(np.arange(n_initial) / n_initial)
    vals = []
    min_la = math.inf
    for t in ts:
        ph, la = _log_phase(A_of_z(gamma(t)))
        if la < singular_floor:
            raise SingularContourError(f"det A(z) numerically zero on contour (log|det|={la:.1f})")
        min_la = min(min_la, la)
        vals.append(ph)
    while True:
        ts_closed = ts + [1.0]
        vals_closed = vals + [vals[0]]
        steps = [abs(cmath.phase(vals_closed[i + 1] / vals_closed[i])) for i in range(len(ts))]
        bad = [i for i, s in enumerate(steps) if s >= max_step]
        if not bad:
            break
        if len(ts) + len(bad) > max_samples:
            raise SingularContourError(
                f"phase refinement exceeded {max_samples} samples (max step {max(steps):.3f})"
            )
        new_ts, new_vals = [], []
        bad_set = set(bad)
        for i in range(len(ts)):
            new_ts.append(ts[i])
            new_vals.append(vals[i])
            if i in bad_set:
                tm = 0.5 * (ts_closed[i] + ts_closed[i + 1])
                ph, la = _log_phase(A_of_z(gamma(tm)))
                if la < singular_floor:
                    raise SingularContourError("det A(z) numerically zero on contour")
                min_la = min(min_la, la)
                new_ts.append(tm)
                new_vals.append(ph)
        ts, vals = new_ts, new_vals
    total = sum(cmath.phase(vals_closed[i + 1] / vals_closed[i]) for i in range(len(ts)))
    raw = total / (2 * math.pi)
    w = int(round(raw))
    assert abs(raw - w) < 1e-6, raw
    return WindingResult(w, raw, max(steps), len(ts), min_la)


def lp_norm(f: np.ndarray, weights: np.ndarray, p: float) -> float:
    a = np.abs(f)
    if math.isinf(p):
        return float(a.max())
    return float(np.sum(weights * a ** p) ** (1.0 / p))


def _dual(f: np.ndarray, weights: np.ndarray, s: float) -> np.ndarray:
    """Unit vector of L^{s'} norming ``f`` in L^s: ``<g, f> = |f|_s``."""
    nf = lp_norm(f, weights, s)
    if nf == 0.0:
        return np.zeros_like(f)
    a = np.abs(f)
    with np.errstate(invalid="ignore", divide="ignore"):
        sgn = np.where(a > 0, f / np.where(a > 0, a, 1.0), 0.0)
    return (a / nf) ** (s - 1.0) * sgn


@dataclass
class MixedNormResult:
    bound: float
    extremizer: np.ndarray = field(repr=False)
    history: list[float] = field(repr=False)
    last_increment: float = 0.0


def mixed_norm_lower_bound(apply: Callable[[np.ndarray], np.ndarray], p: float, target: float,
                           weights: np.ndarray, iters: int = 64,
                           adjoint: Callable[[np.ndarray], np.ndarray] | None = None,
                           x0: np.ndarray | None = None, seed: int = 0,
                           perturbation: float = 0.3) -> MixedNormResult:
    """Certified lower bound on ``|T|_{L^p -> L^target}`` by nonlinear power iteration.

    ``apply`` and ``adjoint`` act on grid functions; the adjoint is taken
    with respect to the weighted pairing ``sum(w * conj(u) * v)`` and
    defaults to ``apply`` (self-adjoint T).  The iteration alternates
    ``y = T f``, ``g = T^* dual_target(y)``, ``f = dual_{p'}(g)``; by Hoelder
    the sequence ``|T f|_target`` is nondecreasing, which is asserted.
    """
    if not (1.0 < p <= 2.0 <= target):
        raise ValueError("need 1 < p <= 2 <= target")
    adjoint = adjoint or apply
    w = np.asarray(weights, dtype=float)
    p_dual = math.inf if p == 1.0 else p / (p - 1.0)
    if x0 is None:
        rng = np.random.Generator(np.random.Philox(seed))
        x0 = np.ones(w.shape, dtype=complex) + perturbation * (
            rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape))
    f = np.asarray(x0, dtype=complex)
    nf = lp_norm(f, w, p)
    if nf == 0.0:
        raise ValueError("zero starting function")
    f = f / nf
    history: list[float] = []
    best_f = f
    for _ in range(iters):
        y = apply(f)
        r = lp_norm(y, w, target)
        if history:
            assert r >= history[-1] * (1 - 1e-10) - 1e-300, (r, history[-1])
        history.append(r)
        if r >= max(history[:-1], default=-1.0):
            best_f = f
        if r == 0.0:
            break
        g = adjoint(_dual(y, w, target))
        if not np.any(g):
            break
        f = _dual(g, w, p_dual)
    inc = history[-1] - history[-2] if len(history) > 1 else history[-1]
    return MixedNormResult(max(history), best_f, history, inc)
