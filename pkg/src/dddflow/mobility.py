"""Dissipation model: gradient penalty, drag matrices, and the convex
velocity potential with its conjugate.

The velocity potential is psi(b, tau, v) = 1/2 v.Bdag(b,tau) v on the
constraint plane v.tau = 0 and +inf off it; its Legendre-Fenchel
conjugate is psi*(b, tau, f) = 1/2 f.B(b,tau) f, and v = B f is the
force-velocity relation.  B maps force density to velocity, so the drag
parameters below are mobilities.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError

__all__ = [
    "IsotropicDrag",
    "BccDrag",
    "MobilityModel",
    "DragMatrix",
    "drag_matrix",
    "psi",
    "psi_star",
    "dpsi_perp",
]


@dataclass(frozen=True)
class IsotropicDrag:
    """Single drag coefficient m: velocity = (1/m) * (normal force)."""

    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("drag coefficient m must be positive")


@dataclass(frozen=True)
class BccDrag:
    """Edge-glide / edge-climb / screw mobilities for BCC-style drag."""

    B_eg: float
    B_ec: float
    B_s: float

    def __post_init__(self):
        if min(self.B_eg, self.B_ec, self.B_s) <= 0:
            raise ValueError("all BCC mobilities must be positive")


@dataclass(frozen=True)
class MobilityModel:
    """Pair (A, psi): A = alpha*I penalizes bending rate; drag sets psi."""

    alpha: float
    drag: object
    screw_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def beta(self):
        """Quadratic growth floor of psi: psi(v) >= beta/2 |v|^2.

        For isotropic drag Bdag = m P(tau), so beta = m.  For BCC drag
        the largest mobility eigenvalue of B is at most
        2*max(B_eg, B_ec, B_s) for |b| >= 1 (each term's coefficient is
        1/sqrt(x^2+y^2) <= 2/( |b| * max ) forms), hence
        beta = 1 / (2*max(B_eg, B_ec, B_s)).
        """
        if isinstance(self.drag, IsotropicDrag):
            return self.drag.m
        d = self.drag
        return 1.0 / (2.0 * max(d.B_eg, d.B_ec, d.B_s))


class DragMatrix:
    """Symmetric PSD mobility matrix with tangent kernel, plus pseudo-inverse."""

    def __init__(self, matrix, pseudo_inverse, tangent):
        self.matrix = matrix
        self.pseudo_inverse = pseudo_inverse
        self.tangent = tangent


def _projector(tau):
    return np.eye(3) - np.outer(tau, tau)


def _check_unit(tau):
    tau = np.asarray(tau, dtype=float)
    if abs(np.linalg.norm(tau) - 1.0) > 1e-10:
        raise ValueError("tau must be a unit vector")
    return tau


def _bcc_eigensystem(drag, b, tau, screw_tol):
    """Eigenvalues/eigenvectors of the BCC drag matrix in the normal plane.

    Away from screw orientation the two eigenvectors are the projected
    Burgers direction (glide) and b x tau (climb).  Both terms of the
    closed form degenerate as b x tau -> 0; below the screw tolerance the
    matrix is replaced by its direction-averaged limit (B_s |b.tau|/|b|^2
    times the normal-plane projector), with a linear blend over
    [tol, 2 tol] to keep tau -> B continuous.
    """
    bn = np.linalg.norm(b)
    cross = np.cross(b, tau)
    cn = np.linalg.norm(cross)
    bt = float(b @ tau)
    screw_limit = drag.B_s * abs(bt) / bn**2
    if cn <= screw_tol * bn:
        P = _projector(tau)
        return None, None, screw_limit, P
    pb = _projector(tau) @ b
    u = pb / np.linalg.norm(pb)
    w = cross / cn
    c_glide = 1.0 / math.sqrt(cn**2 / drag.B_eg**2 + bt**2 / drag.B_s**2)
    c_climb = math.sqrt(drag.B_ec**2 * cn**2 + drag.B_s**2 * bt**2) / bn**2
    if cn <= 2.0 * screw_tol * bn:
        # blend toward the isotropic screw limit for continuity
        t = (cn / bn - screw_tol) / screw_tol
        c_glide = (1.0 - t) * screw_limit + t * c_glide
        c_climb = (1.0 - t) * screw_limit + t * c_climb
    return (u, c_glide), (w, c_climb), screw_limit, None


def drag_matrix(model, b, tau):
    """Mobility matrix B(b, tau) and its Moore-Penrose pseudo-inverse.

    Both annihilate the tangent; the pseudo-inverse inverts the nonzero
    eigenvalues on the normal plane.
    """
    tau = _check_unit(tau)
    b = np.asarray(b, dtype=float)
    if np.linalg.norm(b) == 0.0:
        raise ValueError("Burgers vector must be nonzero")
    if isinstance(model.drag, IsotropicDrag):
        P = _projector(tau)
        m = model.drag.m
        return DragMatrix(P / m, m * P, tau)
    glide, climb, screw_limit, P = _bcc_eigensystem(
        model.drag, b, tau, model.screw_tolerance
    )
    if glide is None:
        return DragMatrix(screw_limit * P, P / screw_limit, tau)
    (u, cg), (w, cc) = glide, climb
    B = cg * np.outer(u, u) + cc * np.outer(w, w)
    Bdag = np.outer(u, u) / cg + np.outer(w, w) / cc
    return DragMatrix(B, Bdag, tau)


def psi(model, b, tau, v):
    """Velocity potential; +inf off the constraint plane v.tau = 0."""
    tau = _check_unit(tau)
    v = np.asarray(v, dtype=float)
    if abs(v @ tau) > 1e-10 * max(np.linalg.norm(v), 1e-300):
        return math.inf
    D = drag_matrix(model, b, tau)
    return 0.5 * float(v @ D.pseudo_inverse @ v)


def psi_star(model, b, tau, f):
    """Conjugate potential 1/2 f.Bf; finite for every force."""
    tau = _check_unit(tau)
    f = np.asarray(f, dtype=float)
    D = drag_matrix(model, b, tau)
    return 0.5 * float(f @ D.matrix @ f)


def dpsi_perp(model, b, tau, v):
    """Gradient of psi in the directions perpendicular to tau."""
    tau = _check_unit(tau)
    v = np.asarray(v, dtype=float)
    if abs(v @ tau) > 1e-10 * max(np.linalg.norm(v), 1.0):
        raise ConstraintError("velocity violates v.tau = 0")
    D = drag_matrix(model, b, tau)
    return _projector(tau) @ (D.pseudo_inverse @ v)
