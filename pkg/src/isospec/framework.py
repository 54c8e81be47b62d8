"""Correct restrictions ``L_K`` and their isospectral perturbations ``B_K``.

A model is a pair (L^-1, K). From it we assemble

    L_K^-1 = L^-1 + K
    B_K    = (I + KL) L_K          B_K^-1 = (L^-1 + K)(I + KL)^-1

and, because (I + KL) L^-1 = L^-1 + K, the perturbed operator is similar to
the reference one: ``B_K = S L S^-1`` with ``S = I + KL``. Everything in this
module either builds those matrices or measures how well the identities hold
in floating point.

The discrete inner product is ``<f, g> = h g^H f`` with a single scalar
weight ``h``, so adjoints are plain conjugate transposes.

When ``L^-1`` is singular (the discrete shadow of a Volterra operator is
nilpotent, hence never invertible) the product ``K L`` cannot be formed
directly. Such models carry the bounded closure ``kl`` explicitly and must
satisfy ``kl @ l_inv == k``; only the inverse-side quantities exist then.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .numcore import (
    TOL,
    EigenDecomposition,
    SingularMatrixError,
    as_matrix,
    condition_number_2,
    eig_general,
    inverse,
    is_invertible,
    norm2,
    power_norm_sequence,
    random_complex,
    singular_values,
)

log = logging.getLogger(__name__)


class InadmissibleModelError(ValueError):
    """The density condition ker(I + K*L*) = {0} fails numerically."""


class IncorrectRestrictionError(ValueError):
    """L^-1 + K is singular although L^-1 is not: L_K is not correct."""


class NotClosableError(ValueError):
    """K L has no bounded extension: k is not of the form c @ l_inv."""


@dataclass(frozen=True)
class RestrictionModel:
    l_inv: np.ndarray
    k: np.ndarray
    weight: float = 1.0
    label: str = ""
    kl: Optional[np.ndarray] = None

    def __post_init__(self):
        l_inv = as_matrix(self.l_inv, "l_inv")
        k = as_matrix(self.k, "k")
        if l_inv.shape[0] != l_inv.shape[1]:
            raise ValueError(f"l_inv must be square, got {l_inv.shape}")
        if k.shape != l_inv.shape:
            raise ValueError(f"k has shape {k.shape}, expected {l_inv.shape}")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        object.__setattr__(self, "l_inv", l_inv)
        object.__setattr__(self, "k", k)
        if self.kl is not None:
            kl = as_matrix(self.kl, "kl")
            if kl.shape != l_inv.shape:
                raise ValueError(f"kl has shape {kl.shape}, expected {l_inv.shape}")
            object.__setattr__(self, "kl", kl)

    @property
    def n(self) -> int:
        return self.l_inv.shape[0]

    def scaled(self, t: float) -> "RestrictionModel":
        """Same L^-1 with K (and its closure) multiplied by ``t``."""
        kl = None if self.kl is None else t * self.kl
        return RestrictionModel(self.l_inv, t * self.k, self.weight, self.label, kl)


@dataclass(frozen=True)
class PerturbedPair:
    """Assembled operators of one model.

    ``bk = transform @ reference_l @ inv(transform)`` and
    ``bk_inv = transform @ l_inv @ inv(transform)`` hold in exact arithmetic.
    ``bk``, ``lk`` and ``reference_l`` are ``None`` when ``l_inv`` is singular.
    """

    bk: Optional[np.ndarray]
    bk_inv: np.ndarray
    lk: Optional[np.ndarray]
    lk_inv: np.ndarray
    kl: np.ndarray
    reference_l: Optional[np.ndarray]
    l_inv: np.ndarray
    transform: np.ndarray
    transform_inv: np.ndarray
    label: str = ""

    @property
    def invertible(self) -> bool:
        return self.bk is not None


class DensityCheck(NamedTuple):
    ok: bool
    smallest_singular_value: float
    threshold: float


class IdentityCheck(NamedTuple):
    name: str
    residual: float
    scale: float

    @property
    def passed(self) -> bool:
        return self.residual <= TOL.identity_tol * self.scale


class MatchedPair(NamedTuple):
    lambda_ref: complex
    lambda_pert: complex
    abs_diff: float
    vec_residual: float


@dataclass
class SpectralReport:
    pairs: list[MatchedPair]
    max_abs_diff: float
    riesz_condition: float = math.nan
    quasinilpotence: Optional[list[float]] = None
    passed: bool = False
    notes: dict = field(default_factory=dict)


def closure_defect(model: RestrictionModel, kl: np.ndarray) -> float:
    """Relative size of ``kl @ l_inv - k``."""
    scale = max(norm2(model.k), norm2(kl) * norm2(model.l_inv), np.finfo(float).tiny)
    return norm2(kl @ model.l_inv - model.k) / scale


def closure_kl(model: RestrictionModel) -> np.ndarray:
    """The bounded operator ``KL`` (discretely ``k @ L``).

    Uses the supplied closure when the model carries one. For singular
    ``l_inv`` without a supplied closure, ``k`` must lie in the row space of
    ``l_inv``; the minimum-norm solution of ``kl @ l_inv = k`` is returned.
    """
    if model.kl is not None:
        return model.kl
    try:
        return model.k @ inverse(model.l_inv)
    except SingularMatrixError:
        pass
    kl = np.linalg.lstsq(model.l_inv.T, model.k.T, rcond=None)[0].T
    defect = closure_defect(model, kl)
    if defect > 1e3 * TOL.pivot_tol:
        raise NotClosableError(
            f"k is not in the row space of the singular l_inv (defect {defect:.2e})"
        )
    return kl


def make_lk_inv(model: RestrictionModel) -> np.ndarray:
    return model.l_inv + model.k


def density_check(model: RestrictionModel, density_tol: Optional[float] = None) -> DensityCheck:
    """Is ``I + L*K*`` invertible?

    ``I + L*K* = (I + KL)^H`` under the scalar-weight inner product, so the
    smallest singular value of ``I + kl`` is reported.
    """
    tol = TOL.density_tol if density_tol is None else density_tol
    m = np.eye(model.n) + closure_kl(model)
    s = singular_values(m)
    threshold = tol * s[0]
    return DensityCheck(bool(s[-1] >= threshold), float(s[-1]), float(threshold))


def _try_inverse(a: np.ndarray) -> Optional[np.ndarray]:
    try:
        return inverse(a)
    except SingularMatrixError:
        return None


def make_perturbed(model: RestrictionModel) -> PerturbedPair:
    dens = density_check(model)
    if not dens.ok:
        raise InadmissibleModelError(
            f"density condition fails: sigma_min(I + L*K*) = {dens.smallest_singular_value:.3e}"
        )
    n = model.n
    kl = closure_kl(model)
    lk_inv = make_lk_inv(model)
    s = np.eye(n) + kl
    s_inv = inverse(s)
    bk_inv = lk_inv @ s_inv
    reference_l = _try_inverse(model.l_inv)
    lk = bk = None
    if reference_l is not None:
        lk = _try_inverse(lk_inv)
        if lk is None:
            raise IncorrectRestrictionError("L^-1 + K is singular: L_K is not correct")
        bk = s @ lk
    return PerturbedPair(
        bk=bk,
        bk_inv=bk_inv,
        lk=lk,
        lk_inv=lk_inv,
        kl=kl,
        reference_l=reference_l,
        l_inv=model.l_inv,
        transform=s,
        transform_inv=s_inv,
        label=model.label,
    )


def make_perturbed_adjoint(model: RestrictionModel) -> PerturbedPair:
    """Assemble ``B_K* = L_K*(I + L*K*)``.

    The eigenvector transform of the adjoint is ``(I + L*K*)^-1``, which
    equals ``I - L_K*K*``.
    """
    pair = make_perturbed(model)
    lstar_kstar = pair.kl.conj().T
    t_inv = np.eye(model.n) + lstar_kstar
    t = pair.transform_inv.conj().T
    lk_adj = None if pair.lk is None else pair.lk.conj().T
    bk_adj = None if lk_adj is None else lk_adj @ t_inv
    lk_inv_adj = pair.lk_inv.conj().T
    return PerturbedPair(
        bk=bk_adj,
        bk_inv=t @ lk_inv_adj,
        lk=lk_adj,
        lk_inv=lk_inv_adj,
        kl=lstar_kstar,
        reference_l=None if pair.reference_l is None else pair.reference_l.conj().T,
        l_inv=model.l_inv.conj().T,
        transform=t,
        transform_inv=t_inv,
        label=f"{model.label}*" if model.label else "adjoint",
    )


def _res(lhs: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.max(np.abs(lhs - rhs)))


def identity_suite(model: RestrictionModel) -> list[IdentityCheck]:
    """Evaluate the operator identities of the construction as matrix equations.

    Each entry reports the max entrywise residual together with a scale (the
    product of the 2-norms of the factors involved, at least 1) against which
    ``IdentityCheck.passed`` compares it. Identities that need ``L`` itself are
    skipped for singular ``l_inv``.
    """
    pair = make_perturbed(model)
    n = model.n
    eye = np.eye(n)
    k, kl, l_inv = model.k, pair.kl, model.l_inv
    nk, nkl, nli = norm2(k), norm2(kl), norm2(l_inv)
    out: list[IdentityCheck] = []

    def add(name, lhs, rhs, scale):
        out.append(IdentityCheck(name, _res(lhs, rhs), max(1.0, scale)))

    add("closure: KL L^-1 = K", kl @ l_inv, k, nkl * nli + nk)
    add("similarity: (I+KL) L^-1 = L_K^-1", pair.transform @ l_inv, pair.lk_inv, (1 + nkl) * nli + nk)
    kl_k = kl @ pair.transform_inv  # closure of K L_K
    nklk = norm2(kl_k)
    add("(I - KL_K)(I + KL) = I", (eye - kl_k) @ pair.transform, eye, (1 + nklk) * (1 + nkl))
    add("(I - KL_K) L_K^-1 = L^-1", (eye - kl_k) @ pair.lk_inv, l_inv, (1 + nklk) * norm2(pair.lk_inv))
    add("B_K^-1 = L_K^-1 (I - KL_K)", pair.bk_inv, pair.lk_inv @ (eye - kl_k), norm2(pair.lk_inv) * (1 + nklk))
    if pair.reference_l is None:
        return out

    L, lk, bk = pair.reference_l, pair.lk, pair.bk
    nL, nlk = norm2(L), norm2(lk)
    Ls, Ks, lks = L.conj().T, k.conj().T, lk.conj().T
    lk_inv_s = pair.lk_inv.conj().T
    l_inv_s = l_inv.conj().T
    add("(L_K*)^-1 = (L*)^-1 (I + L*K*)", lk_inv_s, l_inv_s @ (eye + Ls @ Ks), nli * (1 + nL * nk))
    add("(L*)^-1 = (L_K*)^-1 (I - L_K*K*)", l_inv_s, lk_inv_s @ (eye - lks @ Ks), norm2(pair.lk_inv) * (1 + nlk * nk))
    add("(I - L_K*K*)(I + L*K*) = I", (eye - lks @ Ks) @ (eye + Ls @ Ks), eye, (1 + nlk * nk) * (1 + nL * nk))
    add("KL = K L", kl, k @ L, nk * nL)
    add("B_K = L_K^-1 L L_K", bk, pair.lk_inv @ L @ lk, norm2(pair.lk_inv) * nL * nlk)
    add("B_K^-1 B_K = I", pair.bk_inv @ bk, eye, norm2(pair.bk_inv) * norm2(bk))
    add("B_K* = L_K*(I + L*K*)", bk.conj().T, lks @ (eye + Ls @ Ks), nlk * (1 + nL * nk))
    return out


def _nonzero(values: np.ndarray, cutoff: float) -> np.ndarray:
    return np.flatnonzero(np.abs(values) > cutoff)


def greedy_match(ref: np.ndarray, pert: np.ndarray) -> list[tuple[int, int]]:
    """Pair each reference value (in order) with the nearest unused one."""
    used = np.zeros(len(pert), dtype=bool)
    pairs = []
    for i, lam in enumerate(ref):
        if used.all():
            break
        d = np.abs(pert - lam)
        d[used] = np.inf
        j = int(np.argmin(d))  # argmin returns the lowest index on ties
        used[j] = True
        pairs.append((i, j))
    return pairs


def spectra_match(
    a,
    b,
    match_tol: Optional[float] = None,
    *,
    zero_tol: Optional[float] = None,
) -> SpectralReport:
    """Compare the nonzero spectra of ``a`` (reference) and ``b``.

    Eigenvalues with ``|lambda| <= zero_tol * ||.||_2`` are dropped, since the
    similarity of RS and SR only fixes the spectrum away from 0; for the same
    reason the two sizes may differ. ``match_tol``
    is absolute; by default it is ``TOL.match_tol * ||a||_2``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise ValueError(f"need square matrices, got {a.shape} and {b.shape}")
    ea, eb = eig_general(a), eig_general(b)
    ztol = TOL.zero_tol if zero_tol is None else zero_tol
    ia = _nonzero(ea.values, ztol * ea.scale)
    ib = _nonzero(eb.values, ztol * eb.scale)
    tol = TOL.match_tol * ea.scale if match_tol is None else match_tol
    ref, pert = ea.values[ia], eb.values[ib]
    pairs = []
    for i, j in greedy_match(ref, pert):
        diff = float(abs(ref[i] - pert[j]))
        pairs.append(MatchedPair(complex(ref[i]), complex(pert[j]), diff, float(eb.residuals[ib[j]])))
    max_diff = max((p.abs_diff for p in pairs), default=0.0)
    unmatched = (len(ref) - len(pairs), len(pert) - len(pairs))
    passed = unmatched == (0, 0) and max_diff <= tol
    return SpectralReport(
        pairs=pairs,
        max_abs_diff=max_diff,
        passed=passed,
        notes={
            "match_tol": tol,
            "unmatched_ref": unmatched[0],
            "unmatched_pert": unmatched[1],
            "zeros_ref": len(ea.values) - len(ia),
            "zeros_pert": len(eb.values) - len(ib),
        },
    )


def eigvec_transfer_check(
    pair: PerturbedPair,
    modes: int,
    transfer_tol: Optional[float] = None,
    reference: Optional[EigenDecomposition] = None,
) -> SpectralReport:
    """Map reference eigenvectors through ``I + KL`` and test them on ``B_K``.

    For each of the first ``modes`` eigenpairs (lambda, v) of ``L`` the vector
    ``u = (I + KL) v`` should satisfy ``B_K u = lambda u``. Singular models
    are tested on the inverse side (``B_K^-1`` against eigenpairs of
    ``L^-1``). ``modes`` beyond the dimension is clamped and flagged.
    """
    forward = pair.bk is not None
    op = pair.bk if forward else pair.bk_inv
    ref = reference if reference is not None else eig_general(
        pair.reference_l if forward else pair.l_inv
    )
    n = op.shape[0]
    clamped = modes > n
    modes = min(modes, n)
    scale = norm2(op)
    tol = (TOL.transfer_tol if transfer_tol is None else transfer_tol) * scale
    pairs = []
    for idx in range(modes):
        lam, v = ref.values[idx], ref.vectors[:, idx]
        u = pair.transform @ v
        nu = np.linalg.norm(u)
        bu = op @ u
        res = float(np.linalg.norm(bu - lam * u) / nu)
        rayleigh = complex(np.vdot(u, bu) / np.vdot(u, u))
        pairs.append(MatchedPair(complex(lam), rayleigh, float(abs(rayleigh - lam)), res))
    worst = max((p.vec_residual for p in pairs), default=0.0)
    return SpectralReport(
        pairs=pairs,
        max_abs_diff=max((p.abs_diff for p in pairs), default=0.0),
        passed=worst <= tol,
        notes={"clamped": clamped, "transfer_tol": tol, "side": "forward" if forward else "inverse"},
    )


def normalized_eigenbasis(a, decomposition: Optional[EigenDecomposition] = None) -> Optional[np.ndarray]:
    """Unit-column eigenvector matrix, or ``None`` for a defective spectrum.

    Inside a cluster of (numerically) equal eigenvalues the computed vectors
    are an arbitrary, sometimes badly conditioned, basis of the eigenspace; we
    replace them with an orthonormal basis of their span. If the span is
    rank deficient the eigenvalue is defective and no eigenbasis exists.
    """
    dec = decomposition if decomposition is not None else eig_general(a)
    w, v = dec.values, dec.vectors.copy()
    tol = TOL.cluster_tol * max(dec.scale, np.finfo(float).tiny)
    n = len(w)
    i = 0
    while i < n:
        j = i + 1
        while j < n and abs(w[j] - w[i]) <= tol:
            j += 1
        if j - i > 1:
            block = v[:, i:j]
            sv = singular_values(block)
            if sv[-1] < TOL.defect_tol * sv[0]:
                return None
            q, _ = np.linalg.qr(block)
            v[:, i:j] = q
        i = j
    return v


def riesz_diagnostic(pair: PerturbedPair) -> float:
    """Condition number of the normalized eigenvector matrix of ``B_K``.

    ``B_K^-1`` is used for singular models (same eigenvectors). Returns
    ``inf`` for defective spectra.
    """
    op = pair.bk if pair.bk is not None else pair.bk_inv
    basis = normalized_eigenbasis(op)
    if basis is None:
        return math.inf
    return condition_number_2(basis)


@dataclass
class QuasinilpotenceReport:
    sequence: list[float]
    spectral_radius: float
    dense_radius: float


def quasinilpotence_report(pair: PerturbedPair, n_max: int) -> QuasinilpotenceReport:
    """Power-norm sequence and spectral radius of ``B_K^-1``.

    Both are evaluated through the similarity ``B_K^-1 = S L^-1 S^-1``
    (``S = I + KL``): powers as ``S (L^-1)^k S^-1`` and the spectrum from
    ``L^-1``. A nilpotent ``L^-1`` then yields an exact 0 at the nilpotency
    index. ``dense_radius`` is what a direct dense eigensolve of ``B_K^-1``
    reports; for highly non-normal matrices it is limited by the
    pseudospectrum, not by the true spectrum.
    """
    seq = power_norm_sequence(pair.l_inv, n_max, conjugator=(pair.transform, pair.transform_inv))
    radius = eig_general(pair.l_inv).spectral_radius
    dense = eig_general(pair.bk_inv).spectral_radius
    return QuasinilpotenceReport(seq, radius, dense)


def similarity_residual(pair: PerturbedPair) -> float:
    """Relative size of ``B_K^-1 S - S L^-1``."""
    lhs = pair.bk_inv @ pair.transform
    rhs = pair.transform @ pair.l_inv
    scale = max(norm2(pair.bk_inv) * norm2(pair.transform), np.finfo(float).tiny)
    return norm2(lhs - rhs) / scale


def random_model(
    rng: np.random.Generator,
    n: int,
    rank: int = 1,
    k_scale: float = 0.3,
    max_tries: int = 100,
) -> RestrictionModel:
    """Random admissible model: well-conditioned complex L^-1, low-rank K.

    ``L^-1 = I + 0.3 G / sqrt(n)`` with ``G`` complex Gaussian keeps the
    spectrum of ``L^-1`` inside the disc |z - 1| <= ~0.6. ``K`` has the given
    rank and ``||K|| = k_scale ||L^-1||``. Draws failing the density check or
    the correctness of ``L_K`` are rejected and redrawn.
    """
    for _ in range(max_tries):
        l_inv = np.eye(n) + 0.3 * random_complex(rng, (n, n)) / math.sqrt(n)
        k = random_complex(rng, (n, rank)) @ random_complex(rng, (rank, n))
        k *= k_scale * norm2(l_inv) / norm2(k)
        model = RestrictionModel(l_inv, k, weight=1.0 / n, label=f"random n={n} rank={rank}")
        if not is_invertible(l_inv) or not is_invertible(l_inv + k):
            continue
        if density_check(model).ok:
            return model
    raise RuntimeError("could not draw an admissible random model")
