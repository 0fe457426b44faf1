"""Calibration forms on R^7: the 3-form, its Hodge dual, and the obstruction tensor.

The calibration 3-form is ``Omega(u,v,w) = g(u x v, w)``.  Its Hodge dual
(orientation ``e1 ^ ... ^ e7`` positive) defines the tangent-valued
obstruction ``tau`` through ``(*Omega)(u,v,w,z) = g(tau(u,v,w), z)``:
a 3-plane is preserved by the cross product exactly when tau vanishes
on it, and then the plane is calibrated (|Omega| = 1 on orthonormal
frames, with equality only there).
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import config
from .cayley import BASIS, EPSILON, cross


class FrameDegenerate(ValueError):
    """Input vectors are too close to linearly dependent to orthonormalize."""


#: Coefficients of the calibration 3-form: Omega(u,v,w) = OMEGA3[i,j,k] u_i v_j w_k.
OMEGA3 = EPSILON


def _perm_sign(p) -> int:
    p = list(p)
    s = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def _hodge_dual_tensor() -> np.ndarray:
    """Expand * over the 35 basis 3-forms; orientation e1^...^e7 = +1."""
    out = np.zeros((7, 7, 7, 7))
    for tri in itertools.combinations(range(7), 3):
        coef = OMEGA3[tri]
        if coef == 0.0:
            continue
        comp = [i for i in range(7) if i not in tri]
        sign = _perm_sign(list(tri) + comp)
        for p in itertools.permutations(range(4)):
            q = tuple(comp[i] for i in p)
            out[q] += coef * sign * _perm_sign(p)
    return out


#: Coefficients of *Omega: star_omega(u,v,w,z) = STAR_OMEGA[i,j,k,l] u_i v_j w_k z_l.
STAR_OMEGA = _hodge_dual_tensor()
STAR_OMEGA.setflags(write=False)


def omega3(u, v, w) -> np.ndarray:
    """Omega(u,v,w) = g(u x v, w); broadcasts over leading axes."""
    return np.einsum("ijk,...i,...j,...k->...", OMEGA3, u, v, w)


def star_omega(u, v, w, z) -> np.ndarray:
    """(*Omega)(u,v,w,z), totally antisymmetric."""
    return np.einsum("ijkl,...i,...j,...k,...l->...", STAR_OMEGA, u, v, w, z)


def tau(u, v, w) -> np.ndarray:
    """The unique vector with g(tau(u,v,w), z) = (*Omega)(u,v,w,z) for all z."""
    return np.einsum("ijkl,...i,...j,...k->...l", STAR_OMEGA, u, v, w)


def orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """Gram-Schmidt in the given order, rejecting ill-conditioned inputs.

    ``vectors`` has shape (k, 7).  Raises FrameDegenerate when the
    condition number exceeds config.FRAME_CONDITION_LIMIT or the rank
    drops.
    """
    vecs = np.asarray(vectors, float)
    if vecs.ndim != 2 or vecs.shape[1] != 7:
        raise FrameDegenerate(f"expected (k, 7) vectors, got {vecs.shape}")
    sv = np.linalg.svd(vecs, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > config.FRAME_CONDITION_LIMIT:
        raise FrameDegenerate("frame condition number exceeds limit")
    out = np.zeros_like(vecs)
    for i, v in enumerate(vecs):
        w = v - out[:i].T @ (out[:i] @ v)
        w = w - out[:i].T @ (out[:i] @ w)  # second pass for orthogonality to 1e-15
        n = np.linalg.norm(w)
        if n < 1e-13:
            raise FrameDegenerate("rank deficiency during orthonormalization")
        out[i] = w / n
    return out


@dataclass(frozen=True)
class ThreeFrame:
    """Orthonormal frame of a linear 3-plane in R^7."""

    vectors: np.ndarray  # (3, 7), rows orthonormal

    def __post_init__(self):
        object.__setattr__(self, "vectors", orthonormalize(np.asarray(self.vectors, float)))

    @property
    def f1(self):
        return self.vectors[0]

    @property
    def f2(self):
        return self.vectors[1]

    @property
    def f3(self):
        return self.vectors[2]


@dataclass(frozen=True)
class FourFrame:
    """Orthonormal frame of a linear 4-plane in R^7."""

    vectors: np.ndarray  # (4, 7), rows orthonormal

    def __post_init__(self):
        object.__setattr__(self, "vectors", orthonormalize(np.asarray(self.vectors, float)))


@dataclass(frozen=True)
class PlaneReport:
    tau_norm: float
    calibration_value: float
    classification: str  # "associative" | "coassociative" | "generic"

    def as_dict(self) -> dict:
        return {
            "tau_norm": self.tau_norm,
            "calibration_value": self.calibration_value,
            "classification": self.classification,
        }


def classify_3plane(frame: ThreeFrame, tol: float = config.CLASSIFY_TOL) -> PlaneReport:
    """Classify a 3-plane as associative or generic.

    ``calibration_value`` is Omega on the canonically oriented frame
    (third vector flipped if needed so the value is nonnegative); the
    plane itself is unoriented.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f1, f2, f3 = frame.vectors
    cal = float(omega3(f1, f2, f3))
    if cal < 0.0:
        f3 = -f3
        cal = -cal
    t = tau(f1, f2, f3)
    tau_norm = float(np.linalg.norm(t))
    kind = "associative" if tau_norm <= tol else "generic"
    return PlaneReport(tau_norm, cal, kind)


def classify_4plane(frame: FourFrame, tol: float = config.CLASSIFY_TOL) -> PlaneReport:
    """Classify a 4-plane as coassociative or generic.

    ``tau_norm`` holds the calibration obstruction for 4-planes: the l2
    norm of the four restrictions Omega(f_i, f_j, f_k).  The
    ``calibration_value`` is *Omega on the canonically oriented frame.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = frame.vectors
    restrictions = [float(omega3(f[i], f[j], f[k])) for (i, j, k) in itertools.combinations(range(4), 3)]
    obstruction = float(np.linalg.norm(restrictions))
    cal = float(star_omega(f[0], f[1], f[2], f[3]))
    kind = "coassociative" if max(abs(r) for r in restrictions) <= tol else "generic"
    return PlaneReport(obstruction, abs(cal), kind)


def perturbed_frame(t4: float, t5: float, t6: float, t7: float) -> ThreeFrame:
    """The family span{e1, e2, e3 + t4 e4 + t5 e5 + t6 e6 + t7 e7}."""
    tilt = BASIS[2] + t4 * BASIS[3] + t5 * BASIS[4] + t6 * BASIS[5] + t7 * BASIS[6]
    return ThreeFrame(np.stack([BASIS[0], BASIS[1], tilt]))


def tau_normal_component(t4: float, t5: float, t6: float, t7: float) -> np.ndarray:
    """Normal component of *(tau|_A) on the perturbed plane.

    To first order in t this equals -t5 e4 + t4 e5 + t7 e6 - t6 e7 with
    e_j replaced by their projections to the normal space.
    """
    for t in (t4, t5, t6, t7):
        if abs(t) >= 1.0:
            raise ValueError("perturbation parameters must satisfy |t_i| < 1")
    frame = perturbed_frame(t4, t5, t6, t7)
    f1, f2, f3 = frame.vectors
    vec = tau(f1, f2, f3)
    for f in frame.vectors:
        vec = vec - (vec @ f) * f
    return vec


def projected_normal_gram(t4: float, t5: float, t6: float, t7: float) -> float:
    """Gram determinant of the projections of e4..e7 to the normal space."""
    frame = perturbed_frame(t4, t5, t6, t7)
    proj = []
    for j in range(3, 7):
        v = BASIS[j].copy()
        for f in frame.vectors:
            v = v - (v @ f) * f
        proj.append(v)
    proj = np.stack(proj)
    return float(np.linalg.det(proj @ proj.T))
