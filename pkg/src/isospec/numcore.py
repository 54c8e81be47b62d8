"""Dense complex linear algebra used by every other module.

Matrices are plain 2-D numpy arrays (float64 or complex128). The heavy
lifting is delegated to LAPACK through scipy: LU with partial pivoting for
``solve``/``inverse`` and the balanced Hessenberg-QR driver (``geev``) for
``eig_general``. What this module adds is the contract around those calls:
finiteness checks, pivot-based singularity detection, canonical eigenvalue
ordering, phase-normalized eigenvectors and per-pair residuals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla


@dataclass(frozen=True)
class Tolerances:
    """Every tolerance used in the package, all relative unless noted."""

    eig_tol: float = 1e-10
    pivot_tol: float = 1e-13
    match_tol: float = 1e-8
    zero_tol: float = 1e-10
    density_tol: float = 1e-10
    transfer_tol: float = 1e-8
    identity_tol: float = 1e-9
    cluster_tol: float = 1e-9
    defect_tol: float = 1e-7


TOL = Tolerances()


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when LU elimination meets a pivot below ``pivot_tol * ||a||``."""

    def __init__(self, index: int, pivot: float, threshold: float):
        self.index = index
        self.pivot = pivot
        self.threshold = threshold
        super().__init__(
            f"matrix is numerically singular: |pivot[{index}]| = {pivot:.3e} "
            f"< {threshold:.3e}"
        )


class EigenConvergenceError(np.linalg.LinAlgError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite 2-D array and return it as float64/complex128."""
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        arr = arr.astype(np.complex128, copy=False)
    else:
        arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def norm2(a: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    a = np.asarray(a)
    if a.size == 0 or not np.any(a):
        return 0.0
    return float(sla.svdvals(a, check_finite=False)[0])


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def _lu(a: np.ndarray, pivot_tol: float):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    scale = np.linalg.norm(a, 1)
    threshold = pivot_tol * scale
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag < threshold) if scale > 0 else np.arange(a.shape[0])
    if bad.size:
        i = int(bad[0])
        raise SingularMatrixError(i, float(diag[i]), float(threshold))
    return lu, piv


def solve(a, rhs, pivot_tol: Optional[float] = None) -> np.ndarray:
    """Solve ``a x = rhs`` by partially pivoted LU.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``pivot_tol * ||a||_1``; the error carries the
        failing pivot index.
    """
    a = as_matrix(a, "a")
    _square(a, "a")
    b = np.asarray(rhs)
    vector = b.ndim == 1
    b = as_matrix(b.reshape(-1, 1) if vector else b, "rhs")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} vs rhs {b.shape}")
    lu, piv = _lu(a, TOL.pivot_tol if pivot_tol is None else pivot_tol)
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    return x[:, 0] if vector else x


def inverse(a, pivot_tol: Optional[float] = None) -> np.ndarray:
    a = as_matrix(a, "a")
    _square(a, "a")
    return solve(a, np.eye(a.shape[0], dtype=a.dtype), pivot_tol=pivot_tol)


def is_invertible(a, pivot_tol: Optional[float] = None) -> bool:
    try:
        _lu(as_matrix(a), TOL.pivot_tol if pivot_tol is None else pivot_tol)
    except SingularMatrixError:
        return False
    return True


def canonical_order(values: np.ndarray) -> np.ndarray:
    """Permutation sorting complex values by (real, imag)."""
    values = np.asarray(values)
    return np.lexsort((values.imag, values.real))


def normalize_phase(vectors: np.ndarray) -> np.ndarray:
    """Unit 2-norm columns with the largest-magnitude entry real positive."""
    v = np.array(vectors, dtype=np.complex128)
    norms = np.linalg.norm(v, axis=0)
    norms[norms == 0] = 1.0
    v /= norms
    idx = np.argmax(np.abs(v), axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    mag = np.abs(pivots)
    phase = np.where(mag > 0, pivots / np.where(mag > 0, mag, 1.0), 1.0)
    return v / phase


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    scale: float

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    def within_tolerance(self, eig_tol: Optional[float] = None) -> bool:
        tol = TOL.eig_tol if eig_tol is None else eig_tol
        return self.max_residual <= tol * max(self.scale, np.finfo(float).tiny)

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(self.values).max())


def eig_general(a) -> EigenDecomposition:
    """Eigenpairs of a general square matrix in canonical order.

    Eigenvalues are sorted lexicographically by (real, imag); each eigenvector
    has unit 2-norm and its largest-magnitude entry rotated to be real
    positive. Defective matrices still return ``n`` pairs; their vectors are
    best effort and show up as near-parallel columns, not as large residuals.
    """
    a = as_matrix(a, "a")
    _square(a, "a")
    try:
        w, v = sla.eig(a, check_finite=False)
    except np.linalg.LinAlgError as exc:  # LAPACK QR iteration cap reached
        raise EigenConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc
    order = canonical_order(w)
    w = np.asarray(w[order], dtype=np.complex128)
    v = normalize_phase(v[:, order])
    residuals = np.linalg.norm(a @ v - v * w, axis=0)
    return EigenDecomposition(values=w, vectors=v, residuals=residuals, scale=norm2(a))


def power_norm_sequence(
    a,
    n_max: int,
    *,
    conjugator: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> list[float]:
    """Return ``r_k = ||A^k||_2^(1/k)`` for ``k = 1..n_max``.

    Powers are formed from ``A/||A||`` and renormalized at every step, so the
    sequence neither overflows nor underflows; exact zeros (nilpotent
    structure) propagate exactly and make every later term 0.

    If ``conjugator = (S, S_inv)`` is given, the sequence is that of
    ``S A S_inv``, evaluated as ``S A^k S_inv`` so structural nilpotence of
    ``A`` is not destroyed by rounding in the similarity.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    a = as_matrix(a, "a")
    _square(a, "a")
    scale = norm2(a)
    out = [0.0] * n_max
    if scale == 0.0:
        return out
    b = a / scale
    p = np.eye(a.shape[0], dtype=b.dtype)
    log_norm = 0.0
    for k in range(1, n_max + 1):
        p = p @ b
        if conjugator is not None:
            s, s_inv = conjugator
            size = norm2(s @ p @ s_inv)
        else:
            size = norm2(p)
        if size == 0.0:
            break
        if conjugator is not None:
            # track log||A^k|| via the bare power, report the conjugated norm
            bare = norm2(p)
            out[k - 1] = math.exp((log_norm + math.log(size)) / k) * scale
            log_norm += math.log(bare)
            p = p / bare
        else:
            log_norm += math.log(size)
            out[k - 1] = math.exp(log_norm / k) * scale
            p = p / size
    return out


def singular_values(a) -> np.ndarray:
    return sla.svdvals(as_matrix(a), check_finite=False)


def condition_number_2(a, pivot_tol: Optional[float] = None) -> float:
    """sigma_max / sigma_min; ``inf`` once sigma_min < pivot_tol * sigma_max."""
    a = as_matrix(a, "a")
    _square(a, "a")
    s = singular_values(a)
    tol = TOL.pivot_tol if pivot_tol is None else pivot_tol
    if s[0] == 0.0 or s[-1] < tol * s[0]:
        return math.inf
    return float(s[0] / s[-1])


def random_complex(rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
    """Standard complex Gaussian samples (unit variance)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
