"""Quaternions, octonions and the 2-fold vector cross product on R^7.

Every sign convention downstream (calibration forms, self-dual bases,
spinor identifications) is derived from the single oriented Fano table
below, so all results are reproducible bit for bit.

Convention
----------
The seven oriented triples, each read cyclically as ``e_a x e_b = e_c``:

    (1,2,3), (3,5,4), (3,6,7), (1,4,6), (1,5,7), (2,7,4), (2,5,6)

This is one of the octonion multiplication tables (the bilinear map it
defines is norm-multiplicative), normalized so that

* ``e1 x e2 = e3``, and
* for the 3-plane spanned by ``e1, e2, e3 + sum_i t_i e_i`` the
  first-order normal obstruction comes out as
  ``-t5 e4 + t4 e5 + t7 e6 - t6 e7`` with global sign +1.

Indices are 1-based in the table and 0-based in all arrays.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

#: Oriented Fano triples; (a, b, c) means e_a x e_b = e_c (cyclically).
FANO_TRIPLES = ((1, 2, 3), (3, 5, 4), (3, 6, 7), (1, 4, 6), (1, 5, 7), (2, 7, 4), (2, 5, 6))


def _structure_tensor() -> np.ndarray:
    eps = np.zeros((7, 7, 7))
    for (a, b, c) in FANO_TRIPLES:
        for (i, j, k) in ((a, b, c), (b, c, a), (c, a, b)):
            eps[i - 1, j - 1, k - 1] = 1.0
            eps[j - 1, i - 1, k - 1] = -1.0
    return eps


#: Totally antisymmetric structure constants: (u x v)_k = EPSILON[i,j,k] u_i v_j.
EPSILON = _structure_tensor()
EPSILON.setflags(write=False)

#: Standard basis vectors e1..e7 as rows.
BASIS = np.eye(7)
BASIS.setflags(write=False)


def cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vector cross product on R^7; broadcasts over leading axes of shape (..., 7)."""
    return np.einsum("ijk,...i,...j->...k", EPSILON, np.asarray(u, float), np.asarray(v, float))


def table_as_dict() -> dict:
    """The structure-constants ledger in a JSON-friendly form."""
    return {
        "basis": "e1..e7, orthonormal, orientation e1^...^e7 positive",
        "triples": [list(t) for t in FANO_TRIPLES],
        "meaning": "(a,b,c): e_a x e_b = e_c cyclically; anticyclic products negate",
    }


def table_sha256() -> str:
    """Hash of the convention ledger, embedded in every CLI report."""
    blob = json.dumps(table_as_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Quaternion:
    """Quaternion w + xi + yj + zk with the standard table ijk = -1."""

    w: float
    x: float
    y: float
    z: float

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        a, b, c, d = self.w, self.x, self.y, self.z
        e, f, g, h = other.w, other.x, other.y, other.z
        return Quaternion(
            a * e - b * f - c * g - d * h,
            a * f + b * e + c * h - d * g,
            a * g - b * h + c * e + d * f,
            a * h + b * g - c * f + d * e,
        )

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def conj(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return float(np.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


@dataclass(frozen=True)
class Octonion:
    """Octonion re + im, im a vector in Im O = R^7."""

    re: float
    im: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "im", np.asarray(self.im, float).reshape(7))

    def __mul__(self, other: "Octonion") -> "Octonion":
        return oct_mul(self, other)

    def __add__(self, other: "Octonion") -> "Octonion":
        return Octonion(self.re + other.re, self.im + other.im)

    def __neg__(self) -> "Octonion":
        return Octonion(-self.re, -self.im)

    def conj(self) -> "Octonion":
        return Octonion(self.re, -self.im)

    def norm(self) -> float:
        return float(np.sqrt(self.re**2 + self.im @ self.im))

    @classmethod
    def unit(cls, i: int) -> "Octonion":
        """Imaginary unit e_i, i in 1..7."""
        im = np.zeros(7)
        im[i - 1] = 1.0
        return cls(0.0, im)

    @classmethod
    def one(cls) -> "Octonion":
        return cls(1.0, np.zeros(7))


def oct_mul(p: Octonion, q: Octonion) -> Octonion:
    """Octonion product built on the fixed cross-product table.

    On pure imaginaries this realizes u v = -<u,v> + u x v, so the
    adopted convention is u x v = Im(u v).
    """
    re = p.re * q.re - float(p.im @ q.im)
    im = p.re * q.im + q.re * p.im + cross(p.im, q.im)
    return Octonion(re, im)
