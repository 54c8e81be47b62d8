"""Dirichlet Laplacian on the unit square with a rank-one log-potential perturbation.

Grid: ``n`` interior nodes per axis, ``h = 1/(n+1)``, node ``(x_i, y_j) =
((i+1) h, (j+1) h)`` for ``i, j = 0..n-1`` stored at flat index ``i*n + j``.
Fields live on interior nodes only; the Dirichlet trace is implicitly 0.

``A_D`` is the five-point ``-Delta_h``. With ``F(z) = prod (z - z_k)^m_k``
the kernel ``g`` solves ``A_D g = ln|F|`` and

    K f = omega * h^2 sum f conj(g)          (rank one)
    KL  = K A_D = omega * h^2 conj(ln|F|)^T  (no inverse needed)

Sign bookkeeping that follows from this assembly (all checked numerically
below, none assumed):

* ``(I + KL) v = v + omega h^2 sum v ln|F| = v - omega <v, Delta g>``;
* on the domain of ``L_K`` (trace ``c * omega``), ``B_K u = -Delta u +
  omega h^2 sum (Delta u)(Delta conj g)``;
* ``det(I + KL) = 1 - h^2 sum (Delta g) conj(omega)``, so admissibility is
  the Delta-g scalar differing from 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .framework import (
    DensityCheck,
    InadmissibleModelError,
    PerturbedPair,
    RestrictionModel,
    density_check,
)
from .numcore import eig_general, inverse, norm2, singular_values

OMEGA_KINDS = ("constant", "re_power", "im_power")
KERNEL_SOURCES = ("explicit", "poisson_logF")

BOUNDARY_MARGIN = 4.0  # zeros at least this many h from the boundary
NODE_MARGIN = 0.25  # and at least this many h from every grid node


class ZeroPlacementError(ValueError):
    """A zero of F is too close to the boundary or to a grid node."""


@dataclass(frozen=True)
class RectGrid:
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def axis(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) arrays of shape (n, n); X varies along axis 0."""
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def points(self) -> np.ndarray:
        x, y = self.mesh()
        return (x + 1j * y).ravel()

    def full_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes including the boundary, shape (n+2, n+2)."""
        t = np.arange(self.n + 2) * self.h
        return np.meshgrid(t, t, indexing="ij")

    def sample(self, func: Callable) -> np.ndarray:
        x, y = self.mesh()
        return np.asarray(func(x, y)).ravel()


@dataclass(frozen=True)
class HarmonicWeight:
    kind: str
    degree: int = 1
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in OMEGA_KINDS:
            raise ValueError(f"omega kind must be one of {OMEGA_KINDS}, got {self.kind!r}")
        if self.kind != "constant" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError(f"omega degree must be an integer >= 1, got {self.degree!r}")

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return self.amplitude * np.ones_like(x)
        zp = (x + 1j * np.asarray(y, dtype=float)) ** int(self.degree)
        part = zp.real if self.kind == "re_power" else zp.imag
        return self.amplitude * part

    def values(self, grid: RectGrid) -> np.ndarray:
        return grid.sample(self)

    def full_values(self, grid: RectGrid) -> np.ndarray:
        return self(*grid.full_mesh())

    def harmonic_defect(self, grid: RectGrid) -> float:
        """Max |Delta_h omega| over strictly interior nodes."""
        w = self(*grid.mesh())
        if grid.n < 3:
            return 0.0
        lap = (w[2:, 1:-1] + w[:-2, 1:-1] + w[1:-1, 2:] + w[1:-1, :-2] - 4 * w[1:-1, 1:-1]) / grid.h**2
        return float(np.max(np.abs(lap))) if lap.size else 0.0


@dataclass(frozen=True)
class ZeroSet:
    zeros: tuple[tuple[complex, int], ...] = ()

    def __post_init__(self):
        clean = []
        for item in self.zeros:
            z, m = item
            if int(m) != m or m < 1:
                raise ValueError(f"multiplicity must be a positive integer, got {m!r}")
            z = complex(z)
            if not (0.0 < z.real < 1.0 and 0.0 < z.imag < 1.0):
                raise ZeroPlacementError(f"zero {z} is not inside the unit square")
            clean.append((z, int(m)))
        object.__setattr__(self, "zeros", tuple(clean))

    @classmethod
    def from_triples(cls, triples: Sequence[Sequence[float]]) -> "ZeroSet":
        return cls(tuple((complex(re, im), int(m)) for re, im, m in triples))

    def __len__(self) -> int:
        return len(self.zeros)

    def boundary_distance(self) -> float:
        d = [min(z.real, 1 - z.real, z.imag, 1 - z.imag) for z, _ in self.zeros]
        return min(d, default=math.inf)

    def node_distance(self, grid: RectGrid) -> float:
        best = math.inf
        h = grid.h
        for z, _ in self.zeros:
            # nearest nodes are among the four corners of the containing cell
            for fx in (math.floor, math.ceil):
                for fy in (math.floor, math.ceil):
                    i, j = fx(z.real / h), fy(z.imag / h)
                    best = min(best, abs(z - complex(i * h, j * h)))
        return best

    def margin(self, grid: RectGrid) -> float:
        return min(self.boundary_distance(), self.node_distance(grid))

    def validate(self, grid: RectGrid) -> None:
        h = grid.h
        for z, _ in self.zeros:
            d = min(z.real, 1 - z.real, z.imag, 1 - z.imag)
            if d < BOUNDARY_MARGIN * h:
                raise ZeroPlacementError(
                    f"zero {z} is {d:.3e} from the boundary, need >= {BOUNDARY_MARGIN}h = {BOUNDARY_MARGIN * h:.3e}"
                )
            near = ZeroSet(((z, 1),)).node_distance(grid)
            if near < NODE_MARGIN * h:
                raise ZeroPlacementError(
                    f"zero {z} is {near:.3e} from a grid node, need >= h/4 = {NODE_MARGIN * h:.3e}"
                )


def log_abs_F(points, zeros: ZeroSet) -> np.ndarray:
    """sum_k m_k ln|z - z_k| at arbitrary complex points."""
    pts = np.asarray(points, dtype=complex)
    out = np.zeros(pts.shape)
    for z, m in zeros.zeros:
        out += m * np.log(np.abs(pts - z))
    return out


def grad_log_abs_F(points, zeros: ZeroSet) -> tuple[np.ndarray, np.ndarray]:
    """(d/dx, d/dy) of ln|F| from F'/F = sum m_k/(z - z_k)."""
    pts = np.asarray(points, dtype=complex)
    ratio = np.zeros(pts.shape, dtype=complex)
    for z, m in zeros.zeros:
        ratio += m / (pts - z)
    return ratio.real, -ratio.imag


def eval_log_abs_F(grid: RectGrid, zeros: ZeroSet) -> np.ndarray:
    """ln|F| on the interior nodes. Refuses zeros within h/4 of a node."""
    for z, _ in zeros.zeros:
        near = ZeroSet(((z, 1),)).node_distance(grid)
        if near < NODE_MARGIN * grid.h:
            i, j = round(z.real / grid.h), round(z.imag / grid.h)
            raise ZeroPlacementError(
                f"node ({i * grid.h:.6g}, {j * grid.h:.6g}) is {near:.3e} from zero {z} (< h/4)"
            )
    return log_abs_F(grid.points(), zeros)


def _tridiag(n: int) -> np.ndarray:
    return 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def assemble_dirichlet_fd(grid: RectGrid) -> np.ndarray:
    """Dense five-point ``-Delta_h`` with Dirichlet elimination."""
    t = _tridiag(grid.n)
    eye = np.eye(grid.n)
    return (np.kron(t, eye) + np.kron(eye, t)) / grid.h**2


def dirichlet_eigenvalues(grid: RectGrid, flat: bool = True) -> np.ndarray:
    """(4/h^2)(sin^2(m pi h/2) + sin^2(k pi h/2)), indexed [m-1, k-1]."""
    s = np.sin(np.arange(1, grid.n + 1) * np.pi * grid.h / 2) ** 2
    lam = 4.0 / grid.h**2 * (s[:, None] + s[None, :])
    return lam.ravel() if flat else lam


def dirichlet_eigenvector(grid: RectGrid, m: int, k: int) -> np.ndarray:
    """Unit-norm sin(m pi x) sin(k pi y) on the interior nodes."""
    v = grid.sample(lambda x, y: np.sin(m * np.pi * x) * np.sin(k * np.pi * y))
    return v / np.linalg.norm(v)


def dirichlet_modes(grid: RectGrid, count: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``count`` smallest closed-form eigenpairs, ties broken by (m, k)."""
    lam = dirichlet_eigenvalues(grid, flat=False)
    mk = [(float(lam[m, k]), m + 1, k + 1) for m in range(grid.n) for k in range(grid.n)]
    mk.sort()
    mk = mk[:count]
    values = np.array([t[0] for t in mk])
    vectors = np.column_stack([dirichlet_eigenvector(grid, m, k) for _, m, k in mk])
    return values, vectors


def apply_dirichlet(grid: RectGrid, u: np.ndarray, boundary: Optional[np.ndarray] = None) -> np.ndarray:
    """``-Delta_h u`` on interior nodes, with optional boundary values.

    ``boundary`` is an (n+2, n+2) array whose outer ring supplies the trace;
    its interior is ignored.
    """
    n = grid.n
    full = np.zeros((n + 2, n + 2), dtype=np.result_type(u, float))
    if boundary is not None:
        full = full.astype(np.result_type(full, boundary))
        full[:, :] = boundary
    full[1:-1, 1:-1] = np.reshape(u, (n, n))
    lap = full[2:, 1:-1] + full[:-2, 1:-1] + full[1:-1, 2:] + full[1:-1, :-2] - 4 * full[1:-1, 1:-1]
    return (-lap / grid.h**2).ravel()


def poisson_solve(grid: RectGrid, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A_D u = rhs`` in the discrete sine basis (DST-I)."""
    n = grid.n
    f = np.reshape(np.asarray(rhs), (n, n))
    lam = dirichlet_eigenvalues(grid, flat=False)
    if np.iscomplexobj(f):
        return poisson_solve(grid, f.real.ravel()) + 1j * poisson_solve(grid, f.imag.ravel())
    coef = sfft.dstn(f, type=1) / lam
    return sfft.idstn(coef, type=1).ravel()


@dataclass(frozen=True)
class KernelG:
    values: np.ndarray
    laplacian_values: np.ndarray
    source: str

    def __post_init__(self):
        if self.source not in KERNEL_SOURCES:
            raise ValueError(f"kernel source must be one of {KERNEL_SOURCES}, got {self.source!r}")
        if np.shape(self.values) != np.shape(self.laplacian_values):
            raise ValueError("values and laplacian_values differ in shape")

    def scaled(self, t: float) -> "KernelG":
        return KernelG(t * self.values, t * self.laplacian_values, self.source)


def solve_poisson_logF(grid: RectGrid, zeros: ZeroSet) -> KernelG:
    """Kernel with ``A_D g = ln|F|`` (so Delta g = -ln|F|) and zero trace."""
    rhs = eval_log_abs_F(grid, zeros)
    g = poisson_solve(grid, rhs)
    return KernelG(values=g, laplacian_values=-rhs, source="poisson_logF")


def poisson_residual(grid: RectGrid, kernel: KernelG) -> float:
    """``||A_D g + Delta g||_inf`` relative to ``||Delta g||_inf``."""
    res = apply_dirichlet(grid, kernel.values) + kernel.laplacian_values
    scale = max(float(np.max(np.abs(kernel.laplacian_values), initial=0.0)), np.finfo(float).tiny)
    return float(np.max(np.abs(res), initial=0.0)) / scale


def sine_bump_kernel(grid: RectGrid, amplitude: float = 1.0) -> KernelG:
    """Explicit kernel ``a sin(pi x) sin(pi y)`` with its analytic Laplacian."""
    g = amplitude * grid.sample(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    return KernelG(values=g, laplacian_values=-2 * np.pi**2 * g, source="explicit")


def build_k_2d(grid: RectGrid, omega: HarmonicWeight | np.ndarray, kernel: KernelG) -> np.ndarray:
    w = _omega_values(grid, omega)
    g = np.asarray(kernel.values)
    if w.shape != (grid.size,) or g.shape != (grid.size,):
        raise ValueError(f"omega and g must have length {grid.size}")
    return np.outer(w, grid.h**2 * np.conj(g))


def _omega_values(grid: RectGrid, omega) -> np.ndarray:
    return omega.values(grid) if isinstance(omega, HarmonicWeight) else np.asarray(omega).ravel()


def closure_kl_2d(grid: RectGrid, omega, kernel: KernelG) -> np.ndarray:
    """``K A_D`` formed as ``omega (h^2 conj(A_D g))^T`` without any inverse."""
    w = _omega_values(grid, omega)
    return np.outer(w, grid.h**2 * np.conj(apply_dirichlet(grid, kernel.values)))


def build_laplace_model(
    grid: RectGrid,
    omega,
    kernel: KernelG,
    *,
    check: bool = True,
    a_d: Optional[np.ndarray] = None,
) -> RestrictionModel:
    """``L^-1 = A_D^-1`` with the rank-one ``K``; weight ``h^2``.

    The closure ``KL`` is supplied in closed form so ``A_D`` is never
    recovered from its inverse. Inadmissible configurations are refused.
    """
    a_d = assemble_dirichlet_fd(grid) if a_d is None else a_d
    model = RestrictionModel(
        l_inv=inverse(a_d),
        k=build_k_2d(grid, omega, kernel),
        weight=grid.h**2,
        label=f"laplace2d n={grid.n}",
        kl=closure_kl_2d(grid, omega, kernel),
    )
    if check:
        dens = density_check(model)
        if not dens.ok:
            raise InadmissibleModelError(
                f"density condition fails: sigma_min(I + L*K*) = {dens.smallest_singular_value:.3e}"
            )
    return model


def laplace_pair(grid: RectGrid, omega, kernel: KernelG) -> PerturbedPair:
    """Assemble the perturbed pair against the exact stencil ``A_D``.

    ``L_K = (A_D^-1 + K)^-1 = A_D S^-1`` with ``S = I + KL``, so
    ``B_K = S A_D S^-1`` is formed without inverting ``L^-1`` back. A zero
    kernel gives ``S = I`` and ``B_K = A_D`` bit for bit.
    """
    a_d = assemble_dirichlet_fd(grid)
    model = build_laplace_model(grid, omega, kernel, a_d=a_d)
    s = np.eye(grid.size) + model.kl
    s_inv = inverse(s)
    lk_inv = model.l_inv + model.k
    lk = a_d @ s_inv
    return PerturbedPair(
        bk=s @ lk,
        bk_inv=lk_inv @ s_inv,
        lk=lk,
        lk_inv=lk_inv,
        kl=model.kl,
        reference_l=a_d,
        l_inv=model.l_inv,
        transform=s,
        transform_inv=s_inv,
        label=model.label,
    )


class Admissibility(NamedTuple):
    admissible: bool
    s_general: complex  # h^2 sum (Delta g) conj(omega)
    s_log: complex  # h^2 sum ln|F| conj(omega), only for the log kernel
    density: DensityCheck


def admissibility_2d(grid: RectGrid, omega, kernel: KernelG) -> Admissibility:
    w = _omega_values(grid, omega)
    s_general = complex(grid.h**2 * np.sum(kernel.laplacian_values * np.conj(w)))
    s_log = -s_general if kernel.source == "poisson_logF" else complex("nan")
    model = build_laplace_model(grid, omega, kernel, check=False)
    dens = density_check(model)
    return Admissibility(dens.ok, s_general, s_log, dens)


class CriticalScaling(NamedTuple):
    t_critical: float
    t_lo: float
    t_hi: float
    steps: int
    density_at_critical: DensityCheck
    density_lo: DensityCheck
    density_hi: DensityCheck

    @property
    def step(self) -> float:
        return self.t_hi - self.t_lo


def critical_scaling_2d(
    grid: RectGrid, omega, kernel: KernelG, max_steps: int = 200
) -> CriticalScaling:
    """Bisect the kernel scale ``t`` at which ``I + KL`` turns singular.

    ``KL`` is rank one, so ``det(I + t KL) = 1 + t tr(KL)`` changes sign
    across the critical scale and the bisection brackets it by that sign.
    Iteration stops once the midpoint fails ``density_check``; both bracket
    ends still pass, so the check flips within one step of ``t_critical``.
    """
    w = _omega_values(grid, omega)
    a_d = assemble_dirichlet_fd(grid)
    row = grid.h**2 * np.conj(apply_dirichlet(grid, kernel.values))
    tr = complex(row @ w)
    if tr == 0 or abs(tr.imag) > 1e-12 * abs(tr):
        raise ValueError(f"no real critical scale: tr(KL) = {tr}")
    t_star_sign = -1.0 if tr.real > 0 else 1.0
    model = build_laplace_model(grid, omega, kernel, check=False, a_d=a_d)

    def det(t):
        return 1.0 + t * tr.real

    def check(t):
        return density_check(model.scaled(t))

    lo, hi = 0.0, t_star_sign
    while det(hi) > 0:
        lo, hi = hi, 2 * hi
    for step in range(1, max_steps + 1):
        mid = 0.5 * (lo + hi)
        dens = check(mid)
        if not dens.ok:
            return CriticalScaling(mid, min(lo, hi), max(lo, hi), step, dens, check(lo), check(hi))
        if det(mid) > 0:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("bisection did not reach a density_check failure")


def forward_action_check(
    grid: RectGrid,
    omega: HarmonicWeight,
    kernel: KernelG,
    pair: PerturbedPair,
    f: np.ndarray,
) -> dict[int, float]:
    """Relative residual of ``B_K u`` against ``-Delta u + s omega <Delta u, Delta g>``.

    ``u = L_K^-1 f`` lies in the domain of ``L_K``: its trace is ``c omega``
    with ``c = h^2 sum f conj(g)``, and ``Delta_h u`` is evaluated with that
    trace. Returns the residual for both signs ``s = +1, -1``.
    """
    u = pair.lk_inv @ f
    c = grid.h**2 * np.sum(f * np.conj(kernel.values))
    boundary = c * omega.full_values(grid)
    minus_lap_u = apply_dirichlet(grid, u, boundary)
    w = omega.values(grid)
    inner = grid.h**2 * np.sum(-minus_lap_u * np.conj(kernel.laplacian_values))
    bu = pair.bk @ u
    scale = max(np.linalg.norm(bu), np.finfo(float).tiny)
    return {s: float(np.linalg.norm(bu - (minus_lap_u + s * w * inner)) / scale) for s in (1, -1)}


def transfer_sign_check(
    grid: RectGrid,
    omega,
    kernel: KernelG,
    pair: PerturbedPair,
    modes: int = 20,
) -> dict[int, float]:
    """Worst eigen-residual of ``u = v + s omega <v, Delta g>`` for ``s = +1, -1``.

    ``v`` runs over the first ``modes`` closed-form Dirichlet eigenvectors;
    residuals are ``||B_K u - lambda u|| / (||B_K|| ||u||)``.
    """
    lam, vecs = dirichlet_modes(grid, modes)
    w = _omega_values(grid, omega)
    dg = np.conj(kernel.laplacian_values)
    bnorm = norm2(pair.bk)
    out = {}
    for s in (1, -1):
        worst = 0.0
        for idx in range(vecs.shape[1]):
            v = vecs[:, idx]
            u = v + s * w * (grid.h**2 * np.sum(v * dg))
            r = np.linalg.norm(pair.bk @ u - lam[idx] * u) / (bnorm * np.linalg.norm(u))
            worst = max(worst, float(r))
        out[s] = worst
    return out


def resolved_sign(residuals: dict[int, float]) -> int:
    return min(residuals, key=residuals.get)


def closed_form_spectrum_error(grid: RectGrid, bk: np.ndarray) -> float:
    """Max relative gap between sorted eig(bk) and the closed-form spectrum."""
    computed = eig_general(bk).values
    ref = np.sort(dirichlet_eigenvalues(grid))
    got = computed[np.argsort(computed.real, kind="stable")]
    return float(np.max(np.abs(got - ref) / ref))


def _edge_nodes(n: int):
    """Per edge: (boundary points as (i, j) in full indices, inward step)."""
    last = n + 1
    idx = np.arange(n + 2)
    return [
        (np.stack([np.zeros_like(idx), idx], 1), (1, 0)),  # x = 0
        (np.stack([np.full_like(idx, last), idx], 1), (-1, 0)),  # x = 1
        (np.stack([idx, np.zeros_like(idx)], 1), (0, 1)),  # y = 0
        (np.stack([idx, np.full_like(idx, last)], 1), (0, -1)),  # y = 1
    ]


def boundary_functional(grid: RectGrid, zeros: ZeroSet) -> np.ndarray:
    """Row ``t`` with ``t @ u = int_dOmega (du/dn) ln|F| ds`` for zero-trace ``u``.

    ``n`` is the inward normal. The normal derivative is the second-order
    one-sided difference ``(4 u_1 - u_2)/(2h)`` (trace 0), the edge integrals
    use the trapezoid rule over boundary nodes. The ``u d/dn ln|F|`` half of
    the integrand vanishes identically on zero-trace fields.
    """
    n, h = grid.n, grid.h
    row = np.zeros((n + 2, n + 2))
    if not len(zeros):
        return np.zeros(grid.size)
    weights = np.full(n + 2, h)
    weights[[0, -1]] = h / 2
    for nodes, (di, dj) in _edge_nodes(n):
        pts = nodes[:, 0] * h + 1j * nodes[:, 1] * h
        lf = log_abs_F(pts, zeros) * weights
        for (i, j), c in zip(nodes, lf):
            row[i + di, j + dj] += c * 4 / (2 * h)
            row[i + 2 * di, j + 2 * dj] -= c / (2 * h)
    return row[1:-1, 1:-1].ravel()


def build_boundary_T(grid: RectGrid, omega, zeros: ZeroSet) -> np.ndarray:
    """Matrix of ``T u = omega * int_dOmega [(du/dn) ln|F| - u d/dn ln|F|] ds``."""
    return np.outer(_omega_values(grid, omega), boundary_functional(grid, zeros))


def bilinear_interpolate(grid: RectGrid, u: np.ndarray, z: complex) -> complex:
    """Bilinear interpolation of an interior field (zero trace) at ``z``."""
    if not (0.0 <= z.real <= 1.0 and 0.0 <= z.imag <= 1.0):
        raise ValueError(f"point {z} is outside the grid")
    n, h = grid.n, grid.h
    full = np.zeros((n + 2, n + 2), dtype=np.result_type(u, float))
    full[1:-1, 1:-1] = np.reshape(u, (n, n))
    i = min(int(z.real / h), n)
    j = min(int(z.imag / h), n)
    a, b = z.real / h - i, z.imag / h - j
    return (
        (1 - a) * (1 - b) * full[i, j]
        + a * (1 - b) * full[i + 1, j]
        + (1 - a) * b * full[i, j + 1]
        + a * b * full[i + 1, j + 1]
    )


class GreensSplit(NamedTuple):
    volume: float
    point_sum: float
    boundary: float

    @property
    def discrepancy(self) -> float:
        return abs(self.volume - (self.point_sum - self.boundary))


def greens_split(grid: RectGrid, zeros: ZeroSet, u_func: Callable, lap_u_func: Callable) -> GreensSplit:
    """Both sides of ``int (Delta u) ln|F| = 2 pi sum m_k u(z_k) - T(u)``.

    ``u_func`` and ``lap_u_func`` take (x, y) arrays; ``u`` must vanish on
    the boundary. ``T(u)`` is the scalar functional without the ``omega``
    factor.
    """
    zeros.validate(grid)
    lf = eval_log_abs_F(grid, zeros)
    volume = float(grid.h**2 * np.sum(grid.sample(lap_u_func) * lf))
    u = grid.sample(u_func)
    point = float(np.real(sum(2 * np.pi * m * bilinear_interpolate(grid, u, z) for z, m in zeros.zeros)))
    boundary = float(boundary_functional(grid, zeros) @ u)
    return GreensSplit(volume, point, boundary)


def greens_split_check(grid: RectGrid, zeros: ZeroSet, u_func: Callable, lap_u_func: Callable) -> float:
    return greens_split(grid, zeros, u_func, lap_u_func).discrepancy


def sine_mode(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def sine_mode_laplacian(x, y):
    return -2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def numerical_rank(a: np.ndarray, rel_tol: float = 1e-12) -> int:
    s = singular_values(a)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def default_kernel(grid: RectGrid, zeros: ZeroSet, source: str, scale: float = 1.0) -> KernelG:
    if source == "poisson_logF":
        zeros.validate(grid)
        kernel = solve_poisson_logF(grid, zeros)
    elif source == "explicit":
        kernel = sine_bump_kernel(grid)
    else:
        raise ValueError(f"kernel_source must be one of {KERNEL_SOURCES}, got {source!r}")
    return kernel if scale == 1.0 else kernel.scaled(scale)

