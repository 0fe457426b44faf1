"""The coassociative normal-bundle dictionary.

A normal vector v to a coassociative 4-plane C determines the 2-form
``eta0 = iota_v Omega`` on C, which is self-dual for the orientation of
C induced by the calibration.  Normalizing eta0 gives a Hermitian almost
complex structure J on C through ``eta(u,v) = g(Ju,v)``.

Ledger conventions fixed here:

* the frame of C is canonically oriented (last two vectors swapped when
  needed) so that iota_v Omega is self-dual;
* the ordered Lambda^2_+ basis of an oriented frame f1..f4 is
  ``w1 = f12 + f34, w2 = f13 - f24, w3 = f14 + f23`` with
  ``w_i ^ w_j = 2 delta_ij vol``, so |eta0|^2 = 2 (a1^2 + a2^2 + a3^2);
* J is built from the rescaling of eta0 with pointwise norm sqrt(2),
  which is the unique multiple squaring to -id, so any positive
  rescaling of eta0 yields the same J.
"""

from dataclasses import dataclass

import numpy as np

from . import config
from .calib import FourFrame, classify_4plane, omega3


class NotCoassociative(ValueError):
    pass


class NotNormal(ValueError):
    pass


class DegenerateForm(ValueError):
    pass


#: Index pairs of the self-dual basis w1, w2, w3: (a,b) + (c,d) with sign on the second.
_SD_PAIRS = (((0, 1), (2, 3), 1.0), ((0, 2), (1, 3), -1.0), ((0, 3), (1, 2), 1.0))


def _form_matrix(v: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """(iota_v Omega) restricted to the plane, as a 4x4 antisymmetric matrix."""
    m = np.zeros((4, 4))
    for a in range(4):
        for b in range(a + 1, 4):
            m[a, b] = float(omega3(v, frame[a], frame[b]))
            m[b, a] = -m[a, b]
    return m


def _sd_asd_coefficients(m: np.ndarray):
    sd = np.array([(m[p] + s * m[q]) / 2.0 for (p, q, s) in _SD_PAIRS])
    asd = np.array([(m[p] - s * m[q]) / 2.0 for (p, q, s) in _SD_PAIRS])
    return sd, asd


def normal_space(frame: FourFrame) -> np.ndarray:
    """Orthonormal basis (3, 7) of the orthogonal complement."""
    _, _, vt = np.linalg.svd(frame.vectors)
    return vt[4:]


def oriented_frame(C: FourFrame, tol: float = config.CLASSIFY_TOL) -> FourFrame:
    """Reorient C (swap of the last two vectors) so iota_v Omega is self-dual.

    The self-dual/anti-self-dual split swaps under orientation reversal;
    for a coassociative plane the images of all normal vectors lie on one
    side, which pins the induced orientation.
    """
    if classify_4plane(C, tol).classification != "coassociative":
        raise NotCoassociative("plane fails the coassociative test")
    normals = normal_space(C)
    sd_energy = 0.0
    asd_energy = 0.0
    for n in normals:
        sd, asd = _sd_asd_coefficients(_form_matrix(n, C.vectors))
        sd_energy += float(sd @ sd)
        asd_energy += float(asd @ asd)
    if sd_energy >= asd_energy:
        return C
    flipped = C.vectors[[0, 1, 3, 2]]
    return FourFrame(flipped)


@dataclass(frozen=True)
class SelfDualTwoForm:
    """Self-dual 2-form a1 w1 + a2 w2 + a3 w3 on an oriented 4-plane."""

    coefficients: np.ndarray  # (3,)
    frame: FourFrame

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, float).reshape(3))

    @property
    def norm(self) -> float:
        """Pointwise norm |eta0| = sqrt(2 sum a_i^2)."""
        a = self.coefficients
        return float(np.sqrt(2.0 * (a @ a)))

    def matrix(self) -> np.ndarray:
        """The 4x4 antisymmetric matrix in frame coordinates."""
        m = np.zeros((4, 4))
        for a_i, (p, q, s) in zip(self.coefficients, _SD_PAIRS):
            m[p] += a_i
            m[q] += s * a_i
        return m - m.T


def normal_to_selfdual(v: np.ndarray, C: FourFrame, tol: float = config.CLASSIFY_TOL) -> SelfDualTwoForm:
    """iota_v Omega restricted to the coassociative plane C, in the ledger basis."""
    v = np.asarray(v, float).reshape(7)
    oriented = oriented_frame(C, tol)
    tangential = oriented.vectors @ v
    if np.linalg.norm(tangential) > 1e-10 * max(1.0, np.linalg.norm(v)):
        raise NotNormal("v has a tangential component along C")
    m = _form_matrix(v, oriented.vectors)
    sd, asd = _sd_asd_coefficients(m)
    if np.linalg.norm(asd) > 1e-8 * max(1.0, np.linalg.norm(sd)):
        raise NotCoassociative("iota_v Omega is not self-dual on this plane")
    return SelfDualTwoForm(sd, oriented)


def selfdual_square_identity(form: SelfDualTwoForm):
    """Both sides of eta0 ^ eta0 = |eta0|^2 vol, computed independently.

    lhs expands the wedge of the coefficient matrix against the frame
    volume; rhs is the pointwise norm squared.
    """
    m = form.matrix()
    lhs = 2.0 * (m[0, 1] * m[2, 3] - m[0, 2] * m[1, 3] + m[0, 3] * m[1, 2])
    rhs = float(np.sum(np.triu(m, 1) ** 2))
    return lhs, rhs


@dataclass(frozen=True)
class AlmostComplexStructure:
    """J on a 4-plane, as a matrix acting on frame coordinates."""

    matrix: np.ndarray  # (4, 4)
    frame: FourFrame

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Apply J to an ambient vector tangent to the plane."""
        coords = self.frame.vectors @ np.asarray(u, float)
        return (self.matrix @ coords) @ self.frame.vectors


def almost_complex_from_form(form: SelfDualTwoForm, tol: float = 1e-12) -> AlmostComplexStructure:
    """Hermitian J with eta(u,v) = g(Ju,v), eta the sqrt(2)-normalized form.

    A self-dual 2-form of pointwise norm sqrt(2) squares to -id as an
    endomorphism, so J = sqrt(2) m^T / |eta0| exactly satisfies
    J^2 = -id; the normalization makes J independent of the scale of
    eta0.
    """
    n = form.norm
    if n <= tol:
        raise DegenerateForm("eta0 vanishes; the degenerate locus is out of scope")
    m = form.matrix()
    J = np.sqrt(2.0) / n * m.T
    return AlmostComplexStructure(J, form.frame)
