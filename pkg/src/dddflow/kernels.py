"""Regularized interaction kernels via spherical quadrature.

The two kernels are surface integrals over the unit sphere of per-node
tensor factors (built from the stiffness and the inverse acoustic
tensor) against a Gaussian line profile eta and its derivatives:

    K(s)      = sum_z w_z FK(z) eta(z.s)
    dK/ds_e   = sum_z w_z FK(z) z_e eta'(z.s)
    J(s)      = sum_z w_z FJ(z) eta''(z.s)

The factors FK, FJ are independent of s and cached per node; sign and
amplitude conventions are fixed against the real-space convolution
definition, implemented here as `eval_K_direct` (isotropic stiffness
only) and used as the verification oracle.

The integrand's angular bandwidth grows like |s|/eps, so the default
24 x 48 product rule is reliable for |s| up to roughly 10 eps; use
`polar_order_for` to pick an order for larger arguments (the far-field
decay scan builds its own equator-refined rules).
"""

import numpy as np
from scipy.special import erf

from .elasticity import ALTERNATING, acoustic_tensor, acoustic_inverse
from .errors import NotIsotropicError
from .calibration import N_PHI

__all__ = [
    "MollifierProfile",
    "SphericalQuadrature",
    "KernelEvaluator",
    "DecayCheckReport",
    "eta",
    "eval_K",
    "eval_K_many",
    "eval_gradK",
    "eval_d2K",
    "eval_J",
    "eval_J_many",
    "eval_K_direct",
    "decay_bound_scan",
    "polar_order_for",
]


class MollifierProfile:
    """Gaussian slip-smearing profile at length scale epsilon.

    Carries the induced line profile eta^eps(t) = (N_PHI/eps) exp(-t^2/4 eps^2)
    whose amplitude is fixed by oracle calibration (see calibration.py).
    """

    def __init__(self, epsilon, kind="gaussian"):
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        if kind != "gaussian":
            raise ValueError(f"unsupported mollifier kind: {kind!r}")
        self.epsilon = float(epsilon)
        self.kind = kind


def eta(profile, t, order=0):
    """eta^eps and its first two t-derivatives, in closed form."""
    e = profile.epsilon
    t = np.asarray(t, dtype=float)
    g = (N_PHI / e) * np.exp(-(t * t) / (4.0 * e * e))
    if order == 0:
        return g
    if order == 1:
        return -t / (2.0 * e * e) * g
    if order == 2:
        return (t * t / (4.0 * e**4) - 1.0 / (2.0 * e * e)) * g
    raise ValueError("derivative order must be 0, 1 or 2")


class SphericalQuadrature:
    """Quadrature nodes and weights on the unit sphere (weights sum to 4 pi).

    The hemisphere variant keeps the z>0 half of a symmetric product rule
    with doubled weights; it integrates even integrands exactly as the
    full rule does, and makes the evenness of the kernels in s exact in
    floating point.  All kernel integrands here are even.
    """

    def __init__(self, nodes, weights):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.weights = np.ascontiguousarray(weights, dtype=float)
        if self.nodes.shape != (len(self.weights), 3):
            raise ValueError("nodes/weights shape mismatch")

    @classmethod
    def product_rule(cls, n_polar=24, n_azimuthal=48, hemisphere=True):
        """Gauss-Legendre in cos(theta) x midpoint rule in phi."""
        if n_polar < 2 or n_azimuthal < 4:
            raise ValueError("quadrature order too small")
        if hemisphere and n_polar % 2:
            raise ValueError("hemisphere rule needs an even polar order")
        x, w = np.polynomial.legendre.leggauss(n_polar)
        phi = 2.0 * np.pi * (np.arange(n_azimuthal) + 0.5) / n_azimuthal
        wphi = 2.0 * np.pi / n_azimuthal
        if hemisphere:
            keep = x > 0
            x, w = x[keep], 2.0 * w[keep]
        st = np.sqrt(1.0 - x * x)
        nodes = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.outer(x, np.ones_like(phi)).ravel(),
            ],
            axis=1,
        )
        weights = np.outer(w * wphi, np.ones_like(phi)).ravel()
        return cls(nodes, weights)

    @classmethod
    def equator_refined(cls, axis, u_core, n_azimuthal=32, order=12):
        """Panelled rule with nodes concentrated where |z.axis| <= u_core.

        Used for far-field kernel arguments, where the integrand is a
        ridge of angular half-width ~ eps/|s| around the great circle
        normal to s.  Only even integrands are integrated exactly.
        """
        u_core = min(max(u_core, 1e-6), 1.0)
        edges = [0.0, u_core]
        while edges[-1] < 1.0:
            edges.append(min(2.0 * edges[-1], 1.0))
        gx, gw = np.polynomial.legendre.leggauss(order)
        us, ws = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            us.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * gx)
            ws.append(0.5 * (hi - lo) * gw)
        u = np.concatenate(us)
        w = 2.0 * np.concatenate(ws)  # doubled: u<0 half folded in
        phi = 2.0 * np.pi * (np.arange(n_azimuthal) + 0.5) / n_azimuthal
        wphi = 2.0 * np.pi / n_azimuthal
        st = np.sqrt(np.maximum(1.0 - u * u, 0.0))
        nodes = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.outer(u, np.ones_like(phi)).ravel(),
            ],
            axis=1,
        )
        weights = np.outer(w * wphi, np.ones_like(phi)).ravel()
        R = _rotation_to(axis)
        return cls(nodes @ R.T, weights)

    def __len__(self):
        return len(self.weights)


def _rotation_to(axis):
    """Rotation matrix sending e_z to the given unit axis."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    if abs(a[2]) > 0.9:
        other = np.array([1.0, 0.0, 0.0])
    else:
        other = np.array([0.0, 0.0, 1.0])
    e1 = np.cross(other, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.stack([e1, e2, a], axis=1)


def polar_order_for(s_max_over_eps):
    """Polar order resolving eta(z.s) up to |s| = s_max_over_eps * eps."""
    return max(24, 2 * (int(np.ceil(1.1 * s_max_over_eps)) + 10))


def _dinv_stack(C, nodes):
    D = np.einsum("abcd,nb,nd->nac", C.c, nodes, nodes, optimize=False)
    return np.linalg.inv(D)


def _k_factor_stack(C, nodes):
    """Per-node K factor, shaped (n, 9, 9) and symmetrized.

    FK(z) = 1/2 C_efgh X_aefb X_cghd with X_aefb = C_aijk z_k Dinv_ej A_fib.
    The overall sign makes K(s) = sum_z w FK eta(z.s) match the
    real-space kernel (oracle-fixed).
    """
    cc = C.c
    n = len(nodes)
    dinv = _dinv_stack(C, nodes)
    t1 = np.einsum("aijk,nk->naij", cc, nodes, optimize=False)
    t2 = np.einsum("naij,nej->naie", t1, dinv, optimize=False)
    x = np.einsum("naie,fib->naefb", t2, ALTERNATING, optimize=False)
    # Z_nabgh = C_efgh X_naefb and F = 1/2 Z_abgh X_cghd, done as 9x9 matmuls
    x_ab_ef = np.ascontiguousarray(x.transpose(0, 1, 4, 2, 3)).reshape(n, 9, 9)
    z9 = np.matmul(x_ab_ef, cc.reshape(9, 9))  # (n, 9_ab, 9_gh)
    x_gh_cd = np.ascontiguousarray(x.transpose(0, 2, 3, 1, 4)).reshape(n, 9, 9)
    f9 = 0.5 * np.matmul(z9, x_gh_cd)  # (n, 9_ab, 9_cd)
    return 0.5 * (f9 + np.transpose(f9, (0, 2, 1)))


def _j_factor_stack(C, nodes):
    """Per-node J factor: FJ(z) = -1/2 [C_kmgr - C_abgr Dinv_ai C_ijkm z_b z_j].

    The leading sign makes the slipped-surface energy computed from J
    agree with the line energy computed from K (boundary-only property).
    """
    cc = C.c
    dinv = _dinv_stack(C, nodes)
    t = np.einsum("abgr,nai,nb->nigr", cc, dinv, nodes, optimize=False)
    t2 = np.einsum("nigr,ijkm,nj->nkmgr", t, cc, nodes, optimize=False)
    f = -0.5 * (cc[None, :, :, :, :] - t2)
    f9 = f.reshape(-1, 9, 9)
    return 0.5 * (f9 + np.transpose(f9, (0, 2, 1)))


def spherical_factor_reference(C, z):
    """From-scratch loop evaluation of the K factor at one node (slow)."""
    dinv = acoustic_inverse(acoustic_tensor(C, z))
    cc = C.c
    A = ALTERNATING
    X = np.zeros((3, 3, 3, 3))
    for a in range(3):
        for e in range(3):
            for f in range(3):
                for b in range(3):
                    acc = 0.0
                    for i in range(3):
                        for j in range(3):
                            for k in range(3):
                                acc += cc[a, i, j, k] * z[k] * dinv[e, j] * A[f, i, b]
                    X[a, e, f, b] = acc
    F = np.zeros((3, 3, 3, 3))
    for a in range(3):
        for b in range(3):
            for c in range(3):
                for d in range(3):
                    acc = 0.0
                    for e in range(3):
                        for f in range(3):
                            for g in range(3):
                                for h in range(3):
                                    acc += cc[e, f, g, h] * X[a, e, f, b] * X[c, g, h, d]
                    F[a, b, c, d] = 0.5 * acc
    return F


class KernelEvaluator:
    """Immutable evaluator of the regularized kernels.

    Holds the spherical rule plus the precontracted per-node factors, so
    each evaluation is one profile sweep and one weighted contraction.
    Safe to share across workers.
    """

    def __init__(self, elasticity, profile, quadrature=None):
        if quadrature is None:
            quadrature = SphericalQuadrature.product_rule()
        self.elasticity = elasticity
        self.profile = profile
        self.quadrature = quadrature
        self.nodes = quadrature.nodes
        self.weights = quadrature.weights
        self.fk = _k_factor_stack(elasticity, self.nodes)
        self._fk81 = self.fk.reshape(-1, 81)
        self._fj_cache = None
        for arr in (self.fk, self._fk81):
            arr.setflags(write=False)

    @property
    def fj(self):
        # J is only needed by surface energies; built on first use
        if self._fj_cache is None:
            fj = _j_factor_stack(self.elasticity, self.nodes)
            fj.setflags(write=False)
            self._fj_cache = fj
        return self._fj_cache

    @property
    def _fj81(self):
        return self.fj.reshape(-1, 81)

    @property
    def epsilon(self):
        return self.profile.epsilon

    def with_quadrature(self, quadrature):
        return KernelEvaluator(self.elasticity, self.profile, quadrature)


def eval_K(ev, s):
    """K(s) as a (3,3,3,3) tensor; smooth for every s including 0."""
    t = ev.nodes @ np.asarray(s, dtype=float)
    w = ev.weights * eta(ev.profile, t, 0)
    return (w @ ev._fk81).reshape(3, 3, 3, 3)


def eval_K_many(ev, S):
    """K at a batch of points, shape (m, 3, 3, 3, 3)."""
    T = np.asarray(S, dtype=float) @ ev.nodes.T
    W = eta(ev.profile, T, 0) * ev.weights[None, :]
    return (W @ ev._fk81).reshape(-1, 3, 3, 3, 3)


def eval_gradK(ev, s):
    """dK_abcd/ds_e at s, shape (3,3,3,3,3) with the derivative index last."""
    t = ev.nodes @ np.asarray(s, dtype=float)
    w = ev.weights * eta(ev.profile, t, 1)
    g = np.einsum("nx,ne->xe", ev._fk81 * w[:, None], ev.nodes, optimize=False)
    return g.reshape(3, 3, 3, 3, 3)


def eval_gradK_many(ev, S):
    T = np.asarray(S, dtype=float) @ ev.nodes.T
    W = eta(ev.profile, T, 1) * ev.weights[None, :]
    g = np.einsum("mn,nx,ne->mxe", W, ev._fk81, ev.nodes, optimize=True)
    return g.reshape(-1, 3, 3, 3, 3, 3)


def eval_d2K(ev, s):
    """Second derivative tensor, shape (3,3,3,3,3,3), derivative indices last."""
    t = ev.nodes @ np.asarray(s, dtype=float)
    w = ev.weights * eta(ev.profile, t, 2)
    zz = np.einsum("ne,nf->nef", ev.nodes, ev.nodes, optimize=False)
    g = np.einsum("nx,nef->xef", ev._fk81 * w[:, None], zz, optimize=False)
    return g.reshape(3, 3, 3, 3, 3, 3)


def eval_J(ev, s):
    """J(s) as a (3,3,3,3) tensor."""
    t = ev.nodes @ np.asarray(s, dtype=float)
    w = ev.weights * eta(ev.profile, t, 2)
    return (w @ ev._fj81).reshape(3, 3, 3, 3)


def eval_J_many(ev, S):
    T = np.asarray(S, dtype=float) @ ev.nodes.T
    W = eta(ev.profile, T, 2) * ev.weights[None, :]
    return (W @ ev._fj81).reshape(-1, 3, 3, 3, 3)


def dirderiv_K(ev, s, directions):
    """m-th derivative of K contracted with m direction vectors.

    Returns the (3,3,3,3) tensor D^m K(s)[w_1, ..., w_m] where m is the
    number of rows of `directions` (0, 1 or 2).
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float)) if len(directions) else np.zeros((0, 3))
    m = len(dirs)
    t = ev.nodes @ np.asarray(s, dtype=float)
    w = ev.weights * eta(ev.profile, t, m)
    for d in dirs:
        w = w * (ev.nodes @ d)
    return (w @ ev._fk81).reshape(3, 3, 3, 3)


class DecayCheckReport:
    """Result of a far-field decay scan for one derivative order."""

    def __init__(self, m, j, constant, worst_location, radii, values, slope):
        self.m = m
        self.j = j
        self.constant = constant
        self.worst_location = worst_location
        self.radii = radii
        self.values = values
        self.slope = slope

    def __repr__(self):
        return (
            f"DecayCheckReport(m={self.m}, j={self.j}, C={self.constant:.3e}, "
            f"slope={self.slope:.3f})"
        )


def _scan_directions():
    """The 26 nonzero lattice directions in {-1,0,1}^3, normalized."""
    dirs = []
    for ix in (-1, 0, 1):
        for iy in (-1, 0, 1):
            for iz in (-1, 0, 1):
                if ix == iy == iz == 0:
                    continue
                v = np.array([ix, iy, iz], dtype=float)
                dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def _tangential_frame(d):
    R = _rotation_to(d)
    return R[:, 0], R[:, 1]


def decay_bound_scan(ev, m, j, n_radii=40, r_min_eps=1e-2, r_max_eps=1e3, seed=0):
    """Scan |D^m K(s)[v_1..v_j, s_hat..s_hat]| over the far field.

    Uses log-spaced radii over [r_min_eps, r_max_eps] * eps along 26
    directions, with j random tangential unit vectors per direction, and
    equator-refined quadratures so the angular ridge stays resolved at
    every radius.  Reports the supremum of the decay-bound ratio and the
    fitted log-log slope over |s| >= 10 eps.
    """
    if m not in (0, 1, 2) or not 0 <= j <= m:
        raise ValueError("need m in {0,1,2} and 0 <= j <= m")
    eps = ev.epsilon
    rng = np.random.default_rng(seed)
    radii = np.geomspace(r_min_eps * eps, r_max_eps * eps, n_radii)
    best_ratio = 0.0
    worst_loc = np.zeros(3)
    by_radius = np.zeros(len(radii))
    for d in _scan_directions():
        e1, e2 = _tangential_frame(d)
        th = rng.uniform(0.0, 2.0 * np.pi, size=max(j, 1))
        tangentials = [np.cos(a) * e1 + np.sin(a) * e2 for a in th[:j]]
        # one adapted rule per radius octave
        buckets = {}
        for ridx, r in enumerate(radii):
            key = int(np.floor(np.log2(max(r / eps, 1.0))))
            if key not in buckets:
                u_core = min(1.0, 20.0 * eps / (eps * 2.0**key))
                rule = SphericalQuadrature.equator_refined(d, u_core)
                buckets[key] = ev.with_quadrature(rule)
            evr = buckets[key]
            s = r * d
            dirs = tangentials + [d] * (m - j)
            val = np.abs(dirderiv_K(evr, s, dirs)).max()
            denom = np.sqrt(eps ** (2 * m + 2) + eps ** (2 * j) * r ** (2 * m + 2 - 2 * j))
            ratio = val * denom
            by_radius[ridx] = max(by_radius[ridx], val)
            if ratio > best_ratio:
                best_ratio = ratio
                worst_loc = s
    fit_mask = radii >= 10.0 * eps
    lr = np.log(radii[fit_mask])
    lv = np.log(np.maximum(by_radius[fit_mask], 1e-300))
    slope = float(np.polyfit(lr, lv, 1)[0])
    return DecayCheckReport(m, j, float(best_ratio), worst_loc, radii, by_radius, slope)


# ----------------------------------------------------------------------
# Real-space convolution oracle (isotropic stiffness only)
# ----------------------------------------------------------------------

_C0 = np.sqrt(2.0 / np.pi)


def _radial_functions(r, a):
    """Radial pieces of the Gaussian-mollified Kelvin solution.

    m(r) is |x| convolved with the Gaussian of per-component std a;
    p(r) = erf(r/(sqrt2 a))/r is 1/|x| convolved with the same Gaussian.
    Near r=0 the closed forms cancel catastrophically, so an even Taylor
    expansion takes over.
    """
    r = np.asarray(r, dtype=float)
    E = erf(r / (np.sqrt(2.0) * a))
    g = np.exp(-(r * r) / (2.0 * a * a))
    small = r < 1e-4 * a
    rs = np.where(small, a, r)
    p = np.where(small, _C0 * (a**4 - a**2 * r**2 / 6.0) / a**5, E / rs)
    p1 = np.where(
        small,
        _C0 * r * (-280.0 * a**4 + 84.0 * a**2 * r**2) / (840.0 * a**7),
        _C0 * g / (a * rs) - E / rs**2,
    )
    m1_over_r = np.where(
        small,
        _C0 * (280.0 * a**4 - 28.0 * a**2 * r**2) / (420.0 * a**5),
        ((1.0 - a**2 / rs**2) * E + _C0 * g * a / rs) / rs,
    )
    m2 = np.where(
        small,
        _C0 * (280.0 * a**4 - 84.0 * a**2 * r**2) / (420.0 * a**5),
        (2.0 * a**2 / rs**3) * E - 2.0 * _C0 * g * a / rs**2,
    )
    m3 = np.where(
        small,
        _C0 * r * (-504.0 * a**4 + 180.0 * a**2 * r**2) / (1260.0 * a**7),
        -(6.0 * a**2 / rs**4) * E + _C0 * g * (6.0 * a / rs**3 + 2.0 / (a * rs)),
    )
    return p, p1, m1_over_r, m2, m3


def _green_gradient_isotropic(X, lam, mu, a):
    """Gradient of the mollified isotropic Green's function, shape (n,3,3,3)."""
    r = np.linalg.norm(X, axis=1)
    r = np.maximum(r, 1e-300)
    xh = X / r[:, None]
    p, p1, m1r, m2, m3 = _radial_functions(r, a)
    kap = (lam + mu) / (lam + 2.0 * mu)
    d = np.eye(3)
    B = (m2 - m1r) / r
    A = m3 - 3.0 * B
    xxx = np.einsum("ni,nj,nk->nijk", xh, xh, xh, optimize=False)
    dsym = (
        np.einsum("ij,nk->nijk", d, xh, optimize=False)
        + np.einsum("ik,nj->nijk", d, xh, optimize=False)
        + np.einsum("jk,ni->nijk", d, xh, optimize=False)
    )
    m_ijk = A[:, None, None, None] * xxx + B[:, None, None, None] * dsym
    return (2.0 * np.einsum("ij,n,nk->nijk", d, p1, xh, optimize=False) - kap * m_ijk) / (
        8.0 * np.pi * mu
    )


def _phi_field(X, C, lam, mu, a):
    """Field Phi_abkp(y) = A_bpl C_ijkl dG_ai/dy_j, reshaped to (n, 9, 9)."""
    gd = _green_gradient_isotropic(X, lam, mu, a)
    t = np.einsum("ijkl,naij->nakl", C.c, gd, optimize=False)
    phi = np.einsum("bpl,nakl->nabkp", ALTERNATING, t, optimize=False)
    return phi.reshape(-1, 9, 9)


def _radial_panels(eps, rmax):
    edges = list(np.arange(0.0, 4.0 * eps + 1e-12, 0.5 * eps))
    r = edges[-1]
    while r < rmax:
        r = min(r * 1.6, rmax)
        edges.append(r)
    return np.array(edges)


def eval_K_direct(
    C,
    profile,
    s,
    n_polar=16,
    n_azimuthal=32,
    radial_order=8,
    checkpoints=(32.0, 64.0, 128.0, 256.0),
):
    """Brute-force real-space evaluation of K(s) for isotropic stiffness.

    Quadratures the defining convolution of two mollified-Green's-function
    gradient fields on a polar grid centered between the two field
    origins, then removes the algebraic 1/R truncation tail by Richardson
    extrapolation over nested ball radii.  This is the convention-free
    definition of the kernel and serves as the oracle for `eval_K`.
    """
    if not C.is_isotropic():
        raise NotIsotropicError("real-space oracle implemented for isotropic C only")
    lam, mu = C.lame_parameters()
    eps = profile.epsilon
    s = np.asarray(s, dtype=float)
    center = 0.5 * s
    angular = SphericalQuadrature.product_rule(n_polar, n_azimuthal, hemisphere=False)
    edges = _radial_panels(eps, checkpoints[-1] * eps)
    for cp in checkpoints:
        if not np.any(np.isclose(edges, cp * eps)):
            edges = np.sort(np.append(edges, cp * eps))
    gx, gw = np.polynomial.legendre.leggauss(radial_order)
    c99 = C.c.reshape(9, 9)
    acc = np.zeros(81)
    partials = {}
    for lo, hi in zip(edges[:-1], edges[1:]):
        rad = 0.5 * (hi + lo) + 0.5 * (hi - lo) * gx
        wrad = 0.5 * (hi - lo) * gw
        X = (center[None, None, :] + rad[:, None, None] * angular.nodes[None, :, :]).reshape(-1, 3)
        W = (wrad[:, None] * angular.weights[None, :] * (rad**2)[:, None]).ravel()
        p1 = _phi_field(X - s[None, :], C, lam, mu, eps)
        p2 = _phi_field(X, C, lam, mu, eps)
        m = np.einsum("xy,pyk->pxk", c99, p1, optimize=False)
        rkg = np.matmul(np.transpose(m, (0, 2, 1)), p2)
        acc = acc + np.tensordot(W, rkg.reshape(-1, 81), axes=1)
        for cp in checkpoints:
            if np.isclose(hi, cp * eps):
                partials[cp] = acc.copy()
    hs = np.array([1.0 / cp for cp in checkpoints])
    T = [partials[cp] for cp in checkpoints]
    for k in range(1, len(T)):
        T = [T[i + 1] + (T[i + 1] - T[i]) * hs[i + k] / (hs[i] - hs[i + k]) for i in range(len(T) - 1)]
    return T[0].reshape(3, 3, 3, 3)
