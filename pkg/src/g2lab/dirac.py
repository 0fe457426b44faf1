"""Twisted Dirac operator on the cylinder [0, eps] x T^2.

The operator acts on two-component complex fields V = (u, v) in the
block form

    D V = ( i (h^{-1/2} d_t u + i dz v),  -i (h^{-1/2} d_t v + i dbar u) )

with dbar = d2 + i d3 and dz = d2 - i d3 on the flat square torus,
twisted by a flat-connection holonomy theta.  The unit diagonal factor
(i, -i) drops out of all norms.  Conventions fixed here:

* t-direction differences are summation-by-parts (centered interior,
  one-sided boundary rows, trapezoidal quadrature), which makes the
  boundary cross term vanish to round-off for H- fields;
* torus differences are centered stencils with twist phases, so the
  discrete d+ = i dz and d- = i dbar are exact mutual adjoints;
* a warp factor h > 0 on the torus (metric h dx1^2 + g_Sigma) scales the
  t-derivative by h^{-1/2} and the volume element by sqrt(h).

For constant warp the operator block-diagonalizes over torus Fourier
modes and eigenvalues are computed per mode by dense Hermitian solves
with a rigorous |symbol|^2 pruning bound; nonconstant warp falls back to
a sparse shift-invert solve on the assembled normal operator.
"""

import cmath
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import config

HMINUS = "Hminus"
HPLUS = "Hplus"


class ShapeMismatch(ValueError):
    pass


class BoundaryViolation(ValueError):
    pass


class WarpNotPositive(ValueError):
    pass


class EigensolverNoConvergence(RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class CylinderGrid:
    """Discretization of [0, eps] x T^2 with twist and optional warp."""

    eps: float
    m: int
    n: int
    twist: tuple = (0.0, 0.0)
    warp: np.ndarray = None  # (n, n) positive samples of h; None means h == 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.m < 2 or self.n < 4:
            raise ValueError("need m >= 2 and n >= 4")
        t2, t3 = self.twist
        if not (0.0 <= t2 < 1.0 and 0.0 <= t3 < 1.0):
            raise ValueError("twist components must lie in [0, 1)")
        if self.warp is not None:
            h = np.asarray(self.warp, float)
            if h.shape != (self.n, self.n):
                raise ShapeMismatch(f"warp must be ({self.n}, {self.n})")
            if h.min() <= 0:
                raise WarpNotPositive("warp must be strictly positive")
            object.__setattr__(self, "warp", h)

    @property
    def dt(self) -> float:
        return self.eps / (self.m - 1)

    @property
    def dsig(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def h(self) -> np.ndarray:
        if self.warp is None:
            return np.ones((self.n, self.n))
        return self.warp

    @property
    def const_warp(self) -> float:
        """The constant warp value, or None if the warp varies."""
        h = self.h
        return float(h.flat[0]) if np.ptp(h) == 0.0 else None

    def t_weights(self) -> np.ndarray:
        w = np.full(self.m, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True)
class SpinorField:
    """Two-component complex grid function; bc tags the constrained component."""

    u: np.ndarray  # (m, n, n)
    v: np.ndarray  # (m, n, n)
    bc: str = None  # HMINUS | HPLUS | None (unconstrained)

    def __post_init__(self):
        u = np.asarray(self.u, complex)
        v = np.asarray(self.v, complex)
        if u.shape != v.shape or u.ndim != 3:
            raise ShapeMismatch("u and v must share a (m, n, n) shape")
        if self.bc == HMINUS and (np.any(v[0] != 0) or np.any(v[-1] != 0)):
            raise BoundaryViolation("H- requires v = 0 on both boundary slices")
        if self.bc == HPLUS and (np.any(u[0] != 0) or np.any(u[-1] != 0)):
            raise BoundaryViolation("H+ requires u = 0 on both boundary slices")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self):
        return self.u.shape


@dataclass(frozen=True)
class SpectralReport:
    lambda_D: float
    lambda_dplus: float
    bound_lo: float
    bound_hi: float
    eigenvalues: tuple
    bc: str
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "lambda_D": self.lambda_D,
            "lambda_dplus": self.lambda_dplus,
            "bound_lo": self.bound_lo,
            "bound_hi": self.bound_hi,
            "eigenvalues": list(self.eigenvalues),
            "bc": self.bc,
            **self.meta,
        }


# ---------------------------------------------------------------------------
# difference operators


def sbp_d1(m: int, dt: float) -> np.ndarray:
    """First-derivative SBP(2,1) matrix on m nodes: P D + D^T P = B exactly."""
    D = np.zeros((m, m))
    D[0, 0], D[0, 1] = -1.0, 1.0
    D[-1, -2], D[-1, -1] = -1.0, 1.0
    for i in range(1, m - 1):
        D[i, i - 1], D[i, i + 1] = -0.5, 0.5
    return D / dt


def _dt_apply(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    D = sbp_d1(grid.m, grid.dt)
    return np.tensordot(D, f, axes=(1, 0))


def _twisted_diff(f: np.ndarray, axis: int, theta: float, dsig: float) -> np.ndarray:
    """Centered difference with twist phases; symbol i sin((k+theta) dsig)/dsig."""
    ph = cmath.exp(1j * theta * dsig)
    return (ph * np.roll(f, -1, axis=axis) - np.conj(ph) * np.roll(f, 1, axis=axis)) / (2.0 * dsig)


def d2(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    return _twisted_diff(f, f.ndim - 2, grid.twist[0], grid.dsig)


def d3(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    return _twisted_diff(f, f.ndim - 1, grid.twist[1], grid.dsig)


def dbar_z(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    return d2(f, grid) + 1j * d3(f, grid)


def dz(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    return d2(f, grid) - 1j * d3(f, grid)


def dplus(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    """d+ = i dz, a Dirac operator on the torus factor."""
    return 1j * dz(f, grid)


def dminus(f: np.ndarray, grid: CylinderGrid) -> np.ndarray:
    """d- = i dbar; discretely the exact adjoint of d+."""
    return 1j * dbar_z(f, grid)


# ---------------------------------------------------------------------------
# operator application and quadrature


def _mass_weights(grid: CylinderGrid) -> np.ndarray:
    """Quadrature weights of the warped volume, shape (m, n, n)."""
    wt = grid.t_weights()[:, None, None]
    return wt * (grid.dsig**2) * np.sqrt(grid.h)[None, :, :]


def inner(f: np.ndarray, g: np.ndarray, grid: CylinderGrid) -> complex:
    return complex(np.sum(np.conj(f) * g * _mass_weights(grid)))


def l2_norm_sq(V: SpinorField, grid: CylinderGrid) -> float:
    w = _mass_weights(grid)
    return float(np.sum((np.abs(V.u) ** 2 + np.abs(V.v) ** 2) * w))


def apply_dirac(V: SpinorField, grid: CylinderGrid) -> SpinorField:
    """Apply the block Dirac operator; output carries no boundary tag."""
    if V.shape != (grid.m, grid.n, grid.n):
        raise ShapeMismatch(f"field shape {V.shape} does not match grid")
    hinv = 1.0 / np.sqrt(grid.h)[None, :, :]
    out_u = 1j * (hinv * _dt_apply(V.u, grid) + 1j * dz(V.v, grid))
    out_v = -1j * (hinv * _dt_apply(V.v, grid) + 1j * dbar_z(V.u, grid))
    return SpinorField(out_u, out_v, bc=None)


def dirac_norm_sq(V: SpinorField, grid: CylinderGrid) -> float:
    return l2_norm_sq(apply_dirac(V, grid), grid)


def cr_residual(V: SpinorField, grid: CylinderGrid):
    """L2 residuals of the complexified Cauchy-Riemann system.

    r1 = || dbar u - i d_t v ||, r2 = || dz v - i d_t u ||; their squares
    sum to ||D V||^2 identically, so both vanish iff V is Dirac-harmonic.
    """
    hinv = 1.0 / np.sqrt(grid.h)[None, :, :]
    w = _mass_weights(grid)
    res1 = dbar_z(V.u, grid) - 1j * hinv * _dt_apply(V.v, grid)
    res2 = dz(V.v, grid) - 1j * hinv * _dt_apply(V.u, grid)
    r1 = float(np.sqrt(np.sum(np.abs(res1) ** 2 * w)))
    r2 = float(np.sqrt(np.sum(np.abs(res2) ** 2 * w)))
    return r1, r2


def cross_term(V: SpinorField, grid: CylinderGrid) -> float:
    """Discrete boundary cross term 2 Re <d_t V, offdiag(d+, d-) V>.

    The warp factors of the t-derivative and the volume cancel exactly,
    so the summation-by-parts argument applies verbatim: for H- fields
    the value is pure round-off; H+ fields give a nonzero control.
    """
    wt = grid.t_weights()[:, None, None] * grid.dsig**2
    term1 = np.sum(np.conj(_dt_apply(V.u, grid)) * dplus(V.v, grid) * wt)
    term2 = np.sum(np.conj(_dt_apply(V.v, grid)) * dminus(V.u, grid) * wt)
    return float(np.real(term1 + term2))


def poincare_check(v_line: np.ndarray, eps: float):
    """Effective Poincare inequality on [0, eps] with v(0) = 0.

    Returns (lhs, rhs) = (int v^2, (eps^2/2) int |v'|^2), both by
    trapezoidal quadrature with the SBP derivative.
    """
    v = np.asarray(v_line, float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("v_line must be a 1d sample array")
    if v[0] != 0.0:
        raise BoundaryViolation("profile must vanish at x = 0")
    m = v.size
    dt = eps / (m - 1)
    w = np.full(m, dt)
    w[0] = w[-1] = 0.5 * dt
    dv = sbp_d1(m, dt) @ v
    lhs = float(np.sum(w * v**2))
    rhs = float(0.5 * eps**2 * np.sum(w * dv**2))
    return lhs, rhs


def fourier_lambda_dplus(twist) -> float:
    """Continuum ground state of the twisted torus Laplacian: min |n + theta|^2."""
    t2, t3 = twist
    best = np.inf
    for n2 in range(-2, 3):
        for n3 in range(-2, 3):
            best = min(best, (n2 + t2) ** 2 + (n3 + t3) ** 2)
    return float(best)


# ---------------------------------------------------------------------------
# eigenvalue computation


def _mode_freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)  # integers -n/2..n/2-1


def _mode_symbols(grid: CylinderGrid):
    """Discrete symbols of i dz and i dbar per torus mode, plus |symbol|^2."""
    freqs = _mode_freqs(grid.n)
    a = np.sin((freqs + grid.twist[0]) * grid.dsig) / grid.dsig
    b = np.sin((freqs + grid.twist[1]) * grid.dsig) / grid.dsig
    alpha = a[:, None] * np.ones((1, grid.n))
    beta = np.ones((grid.n, 1)) * b[None, :]
    s_plus = -alpha + 1j * beta
    s_minus = -alpha - 1j * beta
    return s_plus, s_minus, np.abs(s_plus) ** 2


def _mode_eigenvalues(grid: CylinderGrid, s_plus: complex, s_minus: complex, bc: str, hscale: float):
    """All eigenvalues of the 1d quadratic-form problem for one torus mode."""
    m = grid.m
    D = sbp_d1(m, grid.dt) / np.sqrt(hscale)
    P = grid.t_weights()
    if bc == HMINUS:
        keep_u = np.arange(m)
        keep_v = np.arange(1, m - 1)
    else:
        keep_u = np.arange(1, m - 1)
        keep_v = np.arange(m)
    ndof = keep_u.size + keep_v.size
    L = np.zeros((2 * m, ndof), complex)
    # u rows: D u + s_plus v ; v rows: D v + s_minus u
    L[:m, : keep_u.size] = D[:, keep_u]
    for j, col in enumerate(keep_v):
        L[col, keep_u.size + j] += s_plus
    L[m:, keep_u.size :] = D[:, keep_v]
    for j, col in enumerate(keep_u):
        L[m + col, j] += s_minus
    W = np.concatenate([P, P])
    A = (L.conj().T * W) @ L
    B = np.diag(np.concatenate([P[keep_u], P[keep_v]]))
    vals = scipy.linalg.eigh(A, B, eigvals_only=True)
    return np.clip(vals, 0.0, None)


def _modes_by_bound(grid: CylinderGrid):
    _, _, s2 = _mode_symbols(grid)
    order = np.argsort(s2, axis=None)
    idx = np.unravel_index(order, s2.shape)
    return list(zip(idx[0], idx[1])), s2


def lowest_eigenvalue(grid: CylinderGrid, bc: str = HMINUS, n_eigs: int = 8,
                      seed: int = config.DEFAULT_SEED) -> SpectralReport:
    """Smallest generalized eigenvalues of the quadratic form ||D V||^2.

    Constant warp: exact block-diagonalization over torus modes, each
    mode solved densely, with the per-mode lower bound
    lambda_mode >= |symbol|^2 used to prune the search (the bound follows
    from the discrete cross-term identity).  Nonconstant warp: sparse
    shift-invert iteration on the assembled normal operator.
    """
    if bc not in (HMINUS, HPLUS):
        raise ValueError("bc must be Hminus or Hplus")
    hconst = grid.const_warp
    if hconst is not None:
        s_plus, s_minus, s2 = _mode_symbols(grid)
        modes, _ = _modes_by_bound(grid)
        collected = []
        for (i, j) in modes:
            bound = s2[i, j]
            if len(collected) >= n_eigs and bound > collected[n_eigs - 1]:
                break
            vals = _mode_eigenvalues(grid, s_plus[i, j], s_minus[i, j], bc, hconst)
            collected.extend(vals.tolist())
            collected.sort()
            collected = collected[: max(n_eigs, 1) * 4]
        eigs = tuple(collected[:n_eigs])
        meta = {"method": "fourier-mode"}
    else:
        eigs = tuple(_sparse_lowest(grid, bc, n_eigs, seed))
        meta = {"method": "sparse-shift-invert"}
    lam = float(eigs[0])
    lam_dplus = fourier_lambda_dplus(grid.twist)
    return SpectralReport(
        lambda_D=lam,
        lambda_dplus=lam_dplus,
        bound_lo=min(lam_dplus, 2.0 / grid.eps**2),
        bound_hi=lam_dplus,
        eigenvalues=eigs,
        bc=bc,
        meta=meta,
    )


def _torus_diff_matrix(n: int, theta: float, dsig: float) -> sp.spmatrix:
    ph = cmath.exp(1j * theta * dsig)
    rows = np.arange(n)
    data_f = np.full(n, ph / (2 * dsig))
    data_b = np.full(n, -np.conj(ph) / (2 * dsig))
    Df = sp.coo_matrix((data_f, (rows, (rows + 1) % n)), shape=(n, n))
    Db = sp.coo_matrix((data_b, (rows, (rows - 1) % n)), shape=(n, n))
    return (Df + Db).tocsr()


def _sparse_lowest(grid: CylinderGrid, bc: str, n_eigs: int, seed: int):
    m, n = grid.m, grid.n
    In = sp.identity(n, format="csr")
    Im = sp.identity(m, format="csr")
    D2 = sp.kron(_torus_diff_matrix(n, grid.twist[0], grid.dsig), In)
    D3 = sp.kron(In, _torus_diff_matrix(n, grid.twist[1], grid.dsig))
    DZ = D2 - 1j * D3
    DBAR = D2 + 1j * D3
    Dt = sp.csr_matrix(sbp_d1(m, grid.dt))
    hinv = sp.diags(np.repeat(1.0 / np.sqrt(grid.h).ravel()[None, :], m, axis=0).ravel())
    Dt3 = hinv @ sp.kron(Dt, sp.identity(n * n, format="csr"))
    L = sp.bmat([[Dt3, sp.kron(Im, 1j * DZ)], [sp.kron(Im, 1j * DBAR), Dt3]], format="csr")
    w = _mass_weights(grid).ravel()
    W = sp.diags(np.concatenate([w, w]))
    nn = m * n * n
    keep = np.ones(2 * nn, bool)
    block = slice(nn, 2 * nn) if bc == HMINUS else slice(0, nn)
    mask = np.zeros((m, n, n), bool)
    mask[0] = mask[-1] = True
    keep[block] = ~mask.ravel()
    cols = np.flatnonzero(keep)
    R = sp.coo_matrix((np.ones(cols.size), (cols, np.arange(cols.size))), shape=(2 * nn, cols.size)).tocsr()
    Lr = L @ R
    A = (Lr.conj().T @ W @ Lr).tocsc()
    B = sp.diags(np.concatenate([w, w])[cols]).tocsc()
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(cols.size)
    scale = abs(A.diagonal()).max()
    try:
        vals = spla.eigsh(A, k=n_eigs, M=B, sigma=-1e-6 * scale, which="LM",
                          v0=v0, return_eigenvectors=False, maxiter=5000)
    except spla.ArpackNoConvergence as exc:
        raise EigensolverNoConvergence(
            "shift-invert iteration did not converge",
            iterations=5000,
            residual=getattr(exc, "eigenvalues", None),
        ) from exc
    vals = np.sort(np.clip(np.real(vals), 0.0, None))
    return vals.tolist()


@dataclass(frozen=True)
class WarpSandwich:
    lambda_warped: float
    lambda_flat: float
    C: float

    @property
    def bound_lo(self) -> float:
        return self.lambda_flat / self.C

    @property
    def bound_hi(self) -> float:
        return self.C * self.lambda_flat

    @property
    def ratio_lo(self) -> float:
        """>= 1 when the lower sandwich bound holds."""
        return self.lambda_warped / self.bound_lo if self.bound_lo > 0 else np.inf

    @property
    def ratio_hi(self) -> float:
        """<= 1 when the upper sandwich bound holds."""
        return self.lambda_warped / self.bound_hi if self.bound_hi > 0 else 0.0

    @property
    def holds(self) -> bool:
        tol = 1e-9
        return (self.bound_lo * (1 - tol) <= self.lambda_warped <= self.bound_hi * (1 + tol))


def sandwich_constant(h_min: float, h_max: float) -> float:
    """Two-sided Rayleigh comparison constant for the warped metric.

    From h^{-1/2} in [h_max^{-1/2}, h_min^{-1/2}] on the t-term and
    sqrt(h) volume bounds; equals 1 for constant h == 1.
    """
    c1 = min(h_max ** -0.5, h_min ** 0.5)
    c2 = max(h_min ** -0.5, h_max ** 0.5)
    return max(c2 / np.sqrt(h_min), np.sqrt(h_max) / c1)


def warped_sandwich(grid_warped: CylinderGrid, grid_flat: CylinderGrid,
                    bc: str = HMINUS, seed: int = config.DEFAULT_SEED) -> WarpSandwich:
    """Eigenvalues for warped and flat metrics plus the comparison constant."""
    if grid_flat.const_warp != 1.0:
        raise ValueError("reference grid must carry h == 1")
    h = grid_warped.h
    C = sandwich_constant(float(h.min()), float(h.max()))
    lam_h = lowest_eigenvalue(grid_warped, bc, n_eigs=1, seed=seed).lambda_D
    lam = lowest_eigenvalue(grid_flat, bc, n_eigs=1, seed=seed).lambda_D
    return WarpSandwich(lam_h, lam, C)


def kernel_equivalence(grid: CylinderGrid, tol: float = config.KERNEL_EIG_TOL):
    """Counts of near-zero modes of d-d+ on the torus and of the D form."""
    s_plus, s_minus, s2 = _mode_symbols(grid)
    dim_dplus = int(np.count_nonzero(s2 < tol))
    hconst = grid.const_warp if grid.const_warp is not None else 1.0
    dim_d = 0
    for (i, j) in zip(*np.nonzero(s2 < tol)):
        vals = _mode_eigenvalues(grid, s_plus[i, j], s_minus[i, j], HMINUS, hconst)
        dim_d += int(np.count_nonzero(vals < tol))
    return dim_dplus, dim_d


def random_spinor(grid: CylinderGrid, bc: str = None, seed: int = config.DEFAULT_SEED,
                  band: int = None) -> SpinorField:
    """Seeded random field, optionally band-limited, honoring the bc tag."""
    rng = np.random.default_rng(seed)
    shape = (grid.m, grid.n, grid.n)
    u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if band is not None:
        freqs = np.abs(_mode_freqs(grid.n))
        mask = (freqs[:, None] <= band) & (freqs[None, :] <= band)
        u = np.fft.ifft2(np.fft.fft2(u, axes=(1, 2)) * mask[None], axes=(1, 2))
        v = np.fft.ifft2(np.fft.fft2(v, axes=(1, 2)) * mask[None], axes=(1, 2))
    if bc == HMINUS:
        v = v.copy()
        v[0] = v[-1] = 0.0
    elif bc == HPLUS:
        u = u.copy()
        u[0] = u[-1] = 0.0
    return SpinorField(u, v, bc=bc)
