"""First-order differentiation on (0, 1): the Cauchy and anti-periodic models.

Discretization conventions
--------------------------
``left_rectangle``: nodes ``x_j = j h`` (``h = 1/n``, ``j < n``) and
``(J f)_i = h sum_{j<i} f_j``. ``J`` is strictly lower triangular, i.e.
nilpotent, which is the exact finite-dimensional picture of a Volterra
operator, and also singular.

``trapezoid``: nodes ``x_j = j/(n-1)``; ``J`` is the cumulative trapezoid
rule, second-order accurate.

Both ``L^-1`` matrices can be singular, so ``K`` is not formed from samples
of sigma directly. The builders start from the bounded closure

    (KL) f = -int_0^1 f conj(sigma')

discretized as the row ``c = -q * conj(sigma')`` (``q`` = quadrature
weights), and set ``K = 1 (c @ L^-1)``. Then ``KL @ L^-1 == K`` holds up to
rounding, and ``c @ L^-1`` reproduces ``h conj(sigma)`` to O(h) whenever the
boundary constraint on sigma holds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .framework import (
    closure_defect,
    MatchedPair,
    PerturbedPair,
    RestrictionModel,
    SpectralReport,
    make_perturbed,
    make_perturbed_adjoint,
    quasinilpotence_report,
    similarity_residual,
)
from .numcore import SingularMatrixError, eig_general, inverse, norm2

SCHEMES = ("left_rectangle", "trapezoid")
KINDS = ("cauchy", "antiperiodic")

BC_TOL = 1e-12
ADM_TOL = 1e-6
FD_CONST = 10.0


class SigmaAdmissibilityError(ValueError):
    """sigma violates the boundary constraint or the density condition."""

    def __init__(self, message: str, value: complex):
        self.value = value
        super().__init__(message)


@dataclass(frozen=True)
class Grid1D:
    n: int
    scheme: str = "left_rectangle"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.n < 4:
            raise ValueError(f"need at least 4 nodes, got n={self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n if self.scheme == "left_rectangle" else 1.0 / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights of int_0^1 on the nodes."""
        q = np.full(self.n, self.h)
        if self.scheme == "trapezoid":
            q[0] = q[-1] = self.h / 2
        return q


@dataclass(frozen=True)
class SigmaSpec:
    sigma: np.ndarray
    sigma_prime: np.ndarray
    kind: str
    at_zero: complex
    at_one: complex
    name: str = "samples"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")

    def fd_defect(self, grid: Grid1D) -> float:
        """max |D sigma - sigma'| with D the second-order difference operator."""
        d = np.gradient(self.sigma, grid.h, edge_order=2)
        return float(np.max(np.abs(d - self.sigma_prime)))

    def check(self, grid: Grid1D, fd_const: float = FD_CONST) -> None:
        """Raise :class:`SigmaAdmissibilityError` if a constraint is violated."""
        s0, s1 = self.at_zero, self.at_one
        if self.kind == "cauchy":
            if abs(s1) > BC_TOL:
                raise SigmaAdmissibilityError(f"sigma(1) = {s1} must vanish", s1)
            if abs(s0 + 1) < ADM_TOL:
                raise SigmaAdmissibilityError(
                    f"sigma(0) = {s0} is too close to -1: the domain of L_K is not dense", s0
                )
        else:
            if abs(s0 + s1) > BC_TOL:
                raise SigmaAdmissibilityError(f"sigma(0) + sigma(1) = {s0 + s1} must vanish", s0 + s1)
            if abs(s0 + 0.5) < ADM_TOL:
                raise SigmaAdmissibilityError(
                    f"sigma(0) = {s0} is too close to -1/2: the domain of L_K is not dense", s0
                )
        defect = self.fd_defect(grid)
        if defect > fd_const * grid.h:
            raise SigmaAdmissibilityError(
                f"sigma' inconsistent with sigma: max |D sigma - sigma'| = {defect:.3e} "
                f"> {fd_const} h",
                defect,
            )


def _family(name: str, params: tuple[float, ...]) -> tuple[Callable, Callable]:
    if name == "zero":
        return (lambda x: np.zeros_like(x)), (lambda x: np.zeros_like(x))
    if name == "affine":
        a, b = params
        return (lambda x: a + b * x), (lambda x: b + 0 * x)
    if name == "poly":
        c = np.asarray(params, dtype=float)
        p = np.polynomial.Polynomial(c)
        dp = p.deriv()
        return p, dp
    if name in ("sin", "cos"):
        k = params[0]
        amp = params[1] if len(params) > 1 else 1.0
        w = k * math.pi
        if name == "sin":
            return (lambda x: amp * np.sin(w * x)), (lambda x: amp * w * np.cos(w * x))
        return (lambda x: amp * np.cos(w * x)), (lambda x: -amp * w * np.sin(w * x))
    raise ValueError(f"unknown sigma family {name!r}")


_ARITY = {"zero": (0, 0), "affine": (2, 2), "poly": (1, 64), "sin": (1, 2), "cos": (1, 2)}


def parse_family(text: str) -> tuple[str, tuple[float, ...]]:
    """Parse ``"affine(1,-1)"`` into ``("affine", (1.0, -1.0))``."""
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", text)
    if not m:
        raise ValueError(f"cannot parse sigma family {text!r}")
    name, args = m.group(1), m.group(2)
    params = tuple(float(a.replace("−", "-")) for a in args.split(",")) if args and args.strip() else ()
    return name, params


def sigma_family(grid: Grid1D, family: str, params=(), kind: str = "cauchy") -> SigmaSpec:
    """Sample a built-in sigma family (with its analytic derivative) on ``grid``.

    Families: ``zero``, ``affine(a, b)`` = a + b x, ``poly(c0, c1, ...)``,
    ``sin(k[, amp])`` = amp sin(k pi x), ``cos(k[, amp])`` = amp cos(k pi x).
    """
    if "(" in family:
        family, params = parse_family(family)
    params = tuple(float(p) for p in params)
    if family not in _ARITY:
        raise ValueError(f"unknown sigma family {family!r}")
    lo, hi = _ARITY[family]
    if not lo <= len(params) <= hi:
        raise ValueError(f"sigma family {family!r} takes {lo}..{hi} parameters, got {len(params)}")
    f, df = _family(family, params)
    x = grid.nodes
    ends = np.array([0.0, 1.0])
    s0, s1 = (complex(v) for v in f(ends))
    label = f"{family}({', '.join(f'{p:g}' for p in params)})"
    return SigmaSpec(
        sigma=np.asarray(f(x), dtype=float),
        sigma_prime=np.asarray(df(x), dtype=float),
        kind=kind,
        at_zero=s0,
        at_one=s1,
        name=label,
    )


def sigma_from_samples(grid: Grid1D, samples, kind: str) -> SigmaSpec:
    """User-sampled sigma; sigma' by second-order differences.

    ``samples`` holds sigma on the grid nodes plus, for ``left_rectangle``
    (whose nodes stop at 1 - h), one extra trailing value at x = 1.
    """
    s = np.asarray(samples)
    expected = grid.n + (1 if grid.scheme == "left_rectangle" else 0)
    if s.shape != (expected,):
        raise ValueError(f"expected {expected} samples, got shape {s.shape}")
    x = np.append(grid.nodes, 1.0) if grid.scheme == "left_rectangle" else grid.nodes
    d = np.gradient(s, x, edge_order=2)
    return SigmaSpec(
        sigma=s[: grid.n],
        sigma_prime=d[: grid.n],
        kind=kind,
        at_zero=complex(s[0]),
        at_one=complex(s[-1]),
    )


def build_integration_matrix(grid: Grid1D) -> np.ndarray:
    """Quadrature matrix ``J`` with ``(J f)_i ~ int_0^{x_i} f``."""
    n, h = grid.n, grid.h
    j = np.tril(np.full((n, n), h), -1)
    if grid.scheme == "trapezoid":
        j[1:, 0] = h / 2
        j[np.arange(1, n), np.arange(1, n)] = h / 2
    return j


def _closure_row(grid: Grid1D, spec: SigmaSpec) -> np.ndarray:
    return -grid.weights * np.conj(spec.sigma_prime)


def _model(grid: Grid1D, spec: SigmaSpec, l_inv: np.ndarray, label: str) -> RestrictionModel:
    c = _closure_row(grid, spec)
    ones = np.ones(grid.n)
    return RestrictionModel(
        l_inv=l_inv,
        k=np.outer(ones, c @ l_inv),
        weight=grid.h,
        label=label,
        kl=np.outer(ones, c),
    )


def _require_kind(spec: SigmaSpec, kind: str) -> None:
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} sigma, got {spec.kind}")


def build_cauchy_model(grid: Grid1D, spec: SigmaSpec) -> RestrictionModel:
    """L: y' = f, y(0) = 0; K f = 1 int_0^1 f conj(sigma)."""
    _require_kind(spec, "cauchy")
    spec.check(grid)
    return _model(grid, spec, build_integration_matrix(grid), f"cauchy {spec.name} n={grid.n}")


def antiperiodic_inverse(grid: Grid1D) -> np.ndarray:
    """y(x) = int_0^x f - 1/2 int_0^1 f, the inverse of y' = f, y(0) + y(1) = 0."""
    return build_integration_matrix(grid) - 0.5 * np.outer(np.ones(grid.n), grid.weights)


def build_antiperiodic_model(grid: Grid1D, spec: SigmaSpec) -> RestrictionModel:
    _require_kind(spec, "antiperiodic")
    spec.check(grid)
    return _model(grid, spec, antiperiodic_inverse(grid), f"antiperiodic {spec.name} n={grid.n}")


def build_adjoint_example(grid: Grid1D, spec: SigmaSpec) -> RestrictionModel:
    """The model whose adjoint perturbation B_K* is studied.

    Nothing new is assembled here: pass the result to
    :func:`isospec.framework.make_perturbed_adjoint`, or use
    :func:`adjoint_formula_check` for the closed-form comparison.
    """
    if spec.kind == "cauchy":
        return build_cauchy_model(grid, spec)
    return build_antiperiodic_model(grid, spec)


def build_model(grid: Grid1D, spec: SigmaSpec) -> RestrictionModel:
    return build_adjoint_example(grid, spec)


def k_sampling_defect(grid: Grid1D, spec: SigmaSpec, model: RestrictionModel) -> float:
    """max |K row - h conj(sigma(x_j + h))|, h conj(sigma(x_j)) for trapezoid.

    The left-rectangle antiderivative is exact at the right end of each cell,
    so that is where sigma is compared.
    """
    row = model.k[0]
    if grid.scheme == "left_rectangle":
        shifted = np.append(spec.sigma[1:], spec.at_one)
        target = grid.h * np.conj(shifted)
    else:
        target = grid.weights * np.conj(spec.sigma)
    return float(np.max(np.abs(row - target)))


def closed_form_kl_defect(grid: Grid1D, model: RestrictionModel) -> Optional[float]:
    """Compare ``K @ L`` with the supplied closure (None if L^-1 is singular).

    This is where a boundary term would show up if ``-int f conj(sigma')``
    were not the closure of K L.
    """
    try:
        L = inverse(model.l_inv)
    except SingularMatrixError:
        return None
    direct = model.k @ L
    return float(np.max(np.abs(direct - model.kl)) / max(np.max(np.abs(model.kl)), 1e-300))


# -- Volterra certificate ---------------------------------------------------------


def _fr(z: complex) -> tuple[Fraction, Fraction]:
    z = complex(z)
    return Fraction(z.real), Fraction(z.imag)


def exact_closure_identity(model: RestrictionModel) -> bool:
    """Check ``k == 1 (c @ J)`` in exact rational arithmetic.

    Valid for rank-one models whose closure is ``1 c`` and whose ``l_inv`` is
    the left-rectangle matrix ``h * tril(ones, -1)``. Floats are dyadic
    rationals, so the comparison is exact; it succeeds when the assembled
    ``k`` carries no rounding error.
    """
    l_inv, k, kl = model.l_inv, model.k, model.kl
    n = model.n
    if kl is None or not (np.all(kl == kl[0]) and np.all(k == k[0])):
        return False
    h = l_inv[1, 0]
    if not np.array_equal(l_inv, np.tril(np.full((n, n), h), -1)):
        return False
    hf = Fraction(float(h))
    c = [_fr(v) for v in kl[0]]
    target = [_fr(v) for v in k[0]]
    suffix_re = Fraction(0)
    suffix_im = Fraction(0)
    for j in range(n - 1, -1, -1):
        # (c @ J)_j = h * sum_{i > j} c_i
        if (hf * suffix_re, hf * suffix_im) != target[j]:
            return False
        suffix_re += c[j][0]
        suffix_im += c[j][1]
    return True


def volterra_certificate(grid: Grid1D, spec: SigmaSpec, n_max: Optional[int] = None) -> SpectralReport:
    """Certify that B_K^-1 of the Cauchy model is nilpotent.

    A dense eigensolve cannot resolve the spectrum of a nilpotent matrix this
    non-normal: rounding alone moves the computed eigenvalues out to the
    pseudospectral radius (a few 1e-2 at n = 256). The certificate therefore
    rests on structure:

    * ``L^-1`` is strictly lower triangular (checked exactly), so its
      eigenvalues are exactly 0;
    * ``B_K^-1 = S L^-1 S^-1`` with ``S = I + KL`` invertible: the closure
      identity ``KL L^-1 = K`` is checked in exact rational arithmetic (falling
      back to a rounding-level bound) and the assembled ``B_K^-1`` is checked
      against the similarity in floating point;
    * the power-norm sequence is evaluated as ``||S (L^-1)^k S^-1||^(1/k)`` and
      reaches an exact 0 at the nilpotency index.
    """
    if grid.scheme != "left_rectangle":
        raise ValueError("the Volterra certificate needs the left_rectangle scheme (zero diagonal)")
    model = build_cauchy_model(grid, spec)
    pair = make_perturbed(model)
    n = grid.n
    n_max = n if n_max is None else n_max
    strictly_lower = not np.any(np.triu(model.l_inv))
    exact = exact_closure_identity(model)
    defect = closure_defect(model, pair.kl)
    sim = similarity_residual(pair)
    qn = quasinilpotence_report(pair, n_max)
    ref = eig_general(model.l_inv)
    pairs = [
        MatchedPair(complex(lam), complex(lam), 0.0, float(r))
        for lam, r in zip(ref.values, ref.residuals)
    ]
    radius = qn.spectral_radius
    seq = qn.sequence
    hits_zero = True
    if n_max >= n:
        hits_zero = seq[n - 1] == 0.0 and all(v > 0 for v in seq[: n - 1])
    passed = (
        strictly_lower
        and (exact or defect <= 1e-14)
        and sim <= 1e-12
        and radius <= 1e-10
        and hits_zero
    )
    return SpectralReport(
        pairs=pairs,
        max_abs_diff=radius,
        quasinilpotence=seq,
        passed=bool(passed),
        notes={
            "strictly_lower_triangular": strictly_lower,
            "exact_closure_identity": exact,
            "closure_defect": defect,
            "similarity_residual": sim,
            "spectral_radius": radius,
            "dense_eig_radius": qn.dense_radius,
            "hits_zero_at_n": hits_zero,
        },
    )


# -- adjoint closed form --------------------------------------------------------------


@dataclass(frozen=True)
class AdjointFormulaCheck:
    """Residuals of two closed forms for ``B_K* v = f`` with ``v = (B_K*)^-1 f``.

    ``short_form`` is ``-d/dx [v - sigma' <v, 1>]``. ``full_form`` adds the
    term ``(w(0) - w(1)) sigma' / (1 + sigma(0) - sigma(1))`` with
    ``w = v - sigma' <v, 1>``, which comes from ``L_K* != L*`` on their common
    domain. ``missing_term`` is the size of that extra term.
    """

    short_form: float
    full_form: float
    missing_term: float
    boundary_residual: float


def adjoint_formula_check(grid: Grid1D, spec: SigmaSpec, f: np.ndarray) -> AdjointFormulaCheck:
    """Compare the assembled B_K* with its closed form on smooth data.

    Only the left-rectangle grid is accepted: its quadrature weight is the
    uniform ``h``, so the conjugate transpose is the true discrete adjoint up
    to the endpoints as well. The half weights of the trapezoid rule break
    that at x = 0 and x = 1, exactly where the closed form is evaluated.
    """
    if grid.scheme != "left_rectangle":
        raise ValueError("adjoint_formula_check needs the left_rectangle scheme")
    model = build_adjoint_example(grid, spec)
    pair = make_perturbed_adjoint(model)
    f = np.asarray(f)
    v = pair.bk_inv @ f
    w = pair.transform_inv @ v  # (I + L*K*) v = v - sigma' <v, 1>
    dw = np.gradient(w, grid.h, edge_order=2)
    w0 = w[0]
    w1 = w[-1] + (w[-1] - w[-2])  # the last node is 1 - h
    s0, s1 = spec.at_zero, spec.at_one
    extra = (w0 - w1) * spec.sigma_prime / (1 + s0 - s1)
    interior = slice(2, grid.n - 2)
    short = np.max(np.abs(-dw - f)[interior])
    full = np.max(np.abs(-dw + extra - f)[interior])
    bc = abs(w1) if spec.kind == "cauchy" else abs(w0 + w1)
    return AdjointFormulaCheck(float(short), float(full), float(np.max(np.abs(extra))), float(bc))


# -- misc diagnostics -------------------------------------------------------------------


def domain_residual(grid: Grid1D, spec: SigmaSpec, u: np.ndarray) -> float:
    """|u(0) - h sum_j (D u)_j conj(sigma(x_{j+1}))| for a Cauchy-kind field.

    Vanishes (to rounding) for every ``u`` in the range of ``B_K^-1``, the
    discrete form of the boundary condition of D(B_K) = D(L_K).
    """
    if grid.scheme != "left_rectangle":
        raise ValueError("domain_residual is defined for the left_rectangle scheme")
    h = grid.h
    du = np.diff(u) / h
    sig_right = np.conj(spec.sigma[1:])
    return float(abs(u[0] - h * np.sum(du * sig_right)))


def normality_defect(a: np.ndarray) -> float:
    """||A^H A - A A^H|| / ||A||^2 (spectral norms)."""
    a = np.asarray(a)
    ah = a.conj().T
    return norm2(ah @ a - a @ ah) / norm2(a) ** 2


def antiperiodic_reference_eigenvalues(count: int) -> np.ndarray:
    """Largest-modulus eigenvalues of the continuum inverse: 1/(i(2k+1)pi)."""
    ks = np.arange(count // 2 + 1)
    vals = []
    for k in ks:
        mu = 1.0 / ((2 * k + 1) * math.pi)
        vals.extend([1j * mu, -1j * mu])
    return np.array(vals[:count])


def top_eigenvalues(a: np.ndarray, count: int) -> np.ndarray:
    vals = eig_general(a).values
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order[:count]]


def perturbed_pair(grid: Grid1D, spec: SigmaSpec) -> PerturbedPair:
    return make_perturbed(build_model(grid, spec))
