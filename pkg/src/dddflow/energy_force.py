"""Self-energy, Peach-Koehler force, and the discrete energy gradient.

The energy is the double line integral of the K kernel over all ordered
segment pairs, including the self pair (the kernel is smooth at zero and
the self term is the finite core energy).  Segment integrals use
Gauss-Legendre points with the line element absorbed into the weighted
segment vectors.  The discrete energy is smooth in the node positions,
so its gradient is assembled analytically; the per-node force density is
minus that gradient divided by the lumped node length.

Pair sums are accumulated per sphere node in fixed chunk order, so
results do not depend on the worker count.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import parallel
from .calibration import BOUND_CONSTANTS, N_PHI
from .elasticity import ALTERNATING
from .geometry import mass, mass_ratio, pushforward
from .kernels import eta

__all__ = [
    "LineQuadratureRule",
    "EnergyBreakdown",
    "ForceField",
    "BoundCheck",
    "energy_line",
    "energy_surface",
    "energy_and_gradient",
    "discrete_energy_gradient",
    "pk_force",
    "force_bound_report",
    "continuity_check",
]


class LineQuadratureRule:
    """Gauss-Legendre rule on [0, 1]; exact for degree 2*order - 1."""

    def __init__(self, order=4):
        if order < 1:
            raise ValueError("order must be >= 1")
        x, w = np.polynomial.legendre.leggauss(order)
        self.order = order
        self.points = 0.5 * (x + 1.0)
        self.weights = 0.5 * w


@dataclass
class EnergyBreakdown:
    total: float
    matrix: np.ndarray  # (L, L) loop-pair energies, self terms on the diagonal


@dataclass
class ForceField:
    density: np.ndarray  # (n, 3) force per unit length at nodes
    lumped: np.ndarray  # (n,) lumped node lengths
    G: np.ndarray  # (n, 3) auxiliary field before the tangent cross product
    tangents: np.ndarray  # (n, 3) node tangents used for the projection
    hairpin: np.ndarray  # (n,) flags for degenerate-tangent nodes


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def ratio(self):
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else np.inf
        return self.lhs / self.rhs


class _GaussCloud:
    """Flattened per-Gauss-point source data for one network."""

    def __init__(self, network, rule):
        if network.oversized_segments():
            warnings.warn(
                "segments longer than epsilon: the kernel varies on the core "
                "scale and the line quadrature may be under-resolved",
                stacklevel=3,
            )
        pts, a9, bvec, wxi, xi = [], [], [], [], []
        n0, n1, loop_of = [], [], []
        node_offset = 0
        for li, lp in enumerate(network.loops):
            nodes = lp.nodes
            n = len(nodes)
            dx = lp.segment_vectors()
            b = lp.burgers.cartesian
            for w, x in zip(rule.weights, rule.points):
                pts.append(nodes + x * dx)
                e = w * dx
                a9.append(np.einsum("a,nb->nab", b, e).reshape(n, 9))
                bvec.append(np.broadcast_to(b, (n, 3)))
                wxi.append(np.full(n, w))
                xi.append(np.full(n, x))
                n0.append(node_offset + np.arange(n))
                n1.append(node_offset + (np.arange(n) + 1) % n)
                loop_of.append(np.full(n, li))
            node_offset += n
        self.points = np.concatenate(pts)
        self.a9 = np.concatenate(a9)
        self.bvec = np.ascontiguousarray(np.concatenate(bvec))
        self.wxi = np.concatenate(wxi)
        self.xi = np.concatenate(xi)
        self.node0 = np.concatenate(n0)
        self.node1 = np.concatenate(n1)
        self.loop_of = np.concatenate(loop_of)
        self.n_nodes = node_offset
        self.n_loops = len(network.loops)


def _loop_slices(loop_of, n_loops):
    starts = np.searchsorted(loop_of, np.arange(n_loops))
    return np.append(starts, len(loop_of))


def _pair_sums(ev, cloud, want_grad, want_blocks, workers=None):
    """Accumulate energy (and optional gradient channels / loop blocks)
    over sphere nodes, chunked deterministically.

    The Gaussian profile core is evaluated once per node and reused for
    the derivative weight; this dominates the runtime of large meshes.
    """
    eps = ev.profile.epsilon
    amp = N_PHI / eps
    T = cloud.points @ ev.nodes.T  # (N, nz)
    a9 = cloud.a9
    a9t = np.ascontiguousarray(a9.T)
    nz = len(ev.weights)
    npts = len(a9)
    edges = None
    if want_blocks:
        edges = _loop_slices(cloud.loop_of, cloud.n_loops)

    def chunk(lo, hi):
        w = ev.weights[lo:hi]
        tc = np.ascontiguousarray(T[:, lo:hi].T)  # (zc, N)
        d = tc[:, :, None] - tc[:, None, :]
        h0 = d * d
        h0 *= -1.0 / (4.0 * eps * eps)
        np.exp(h0, out=h0)
        h0 *= amp
        bm = np.matmul(a9[None, :, :], ev.fk[lo:hi])  # (zc, N, 9)
        g = np.matmul(bm, a9t[None, :, :])  # (zc, N, N)
        hg = h0 * g
        energy = 0.5 * float(w @ hg.sum(axis=(1, 2)))
        blocks = 0.0
        if want_blocks:
            r1 = np.add.reduceat(hg, edges[:-1], axis=1)
            r2 = np.add.reduceat(r1, edges[:-1], axis=2)
            blocks = 0.5 * np.tensordot(w, r2, axes=1)
        gp3 = ga = 0.0
        if want_grad:
            d *= -1.0 / (2.0 * eps * eps)
            d *= h0  # now eta'
            g *= d  # now eta' * g
            u = g.sum(axis=2)  # (zc, N)
            gp3 = np.einsum("z,zi,ze->ie", w, u, ev.nodes[lo:hi], optimize=True)
            ga = np.tensordot(w, np.matmul(h0, bm), axes=1)
        return energy, gp3, ga, blocks

    # keep per-chunk temporaries cache-friendly: ~8 MB of (zc, N, N) arrays
    n2 = max(npts * npts, 1)
    chunk_z = max(2, min(16, (1 << 20) // n2 + 1))
    res = parallel.map_reduce(chunk, nz, workers=workers, chunk=chunk_z)
    return res


def energy_line(network, ev, rule, workers=None):
    """Self-energy of the network with a per-loop-pair breakdown."""
    if network.is_empty():
        raise ValueError("energy of an empty network")
    cloud = _GaussCloud(network, rule)
    _, _, _, blocks = _pair_sums(ev, cloud, want_grad=False, want_blocks=True, workers=workers)
    return EnergyBreakdown(total=float(blocks.sum()), matrix=blocks)


def energy_and_gradient(network, ev, rule, workers=None):
    """Discrete energy and its exact gradient with respect to node positions."""
    cloud = _GaussCloud(network, rule)
    energy, gp3, ga, _ = _pair_sums(ev, cloud, want_grad=True, want_blocks=False, workers=workers)
    grad = np.zeros((cloud.n_nodes, 3))
    # positional channel: Gauss point = (1-xi) x0 + xi x1
    np.add.at(grad, cloud.node0, (1.0 - cloud.xi)[:, None] * gp3)
    np.add.at(grad, cloud.node1, cloud.xi[:, None] * gp3)
    # tangent-element channel: A = b outer (wxi * (x1 - x0))
    r = np.einsum("na,nac->nc", cloud.bvec, ga.reshape(-1, 3, 3), optimize=False)
    r = cloud.wxi[:, None] * r
    np.add.at(grad, cloud.node1, r)
    np.add.at(grad, cloud.node0, -r)
    return float(energy), grad


def discrete_energy_gradient(network, ev, rule, workers=None):
    return energy_and_gradient(network, ev, rule, workers=workers)[1]


def _node_data(network):
    nodes, taus, hair, lumped, loop_of = [], [], [], [], []
    for li, lp in enumerate(network.loops):
        t, h = lp.node_tangents()
        nodes.append(lp.nodes)
        taus.append(t)
        hair.append(h)
        lumped.append(lp.lumped_lengths())
        loop_of.append(np.full(len(lp), li))
    return (
        np.concatenate(nodes),
        np.concatenate(taus),
        np.concatenate(hair),
        np.concatenate(lumped),
        np.concatenate(loop_of),
    )


def pk_force(network, ev, rule, workers=None):
    """Peach-Koehler force density at the nodes via the line formula.

    G(s) collects the kernel-gradient pair sum; the density is tau x G,
    so orthogonality to the node tangent is exact by construction.  The
    cross-product order is fixed by requiring agreement with minus the
    discrete energy gradient (the force must shrink an isolated loop).
    """
    if network.is_empty():
        raise ValueError("force on an empty network")
    cloud = _GaussCloud(network, rule)
    xn, taus, hair, lumped, loop_of = _node_data(network)
    prof = ev.profile
    Tn = xn @ ev.nodes.T
    Tg = cloud.points @ ev.nodes.T
    nz = len(ev.weights)
    loop_b = [lp.burgers.cartesian for lp in network.loops]
    starts = _loop_slices(loop_of, network.n_loops)

    def chunk(lo, hi):
        G = np.zeros((len(xn), 3))
        for k in range(lo, hi):
            w = ev.weights[k]
            z = ev.nodes[k]
            fkz = ev.fk[k].reshape(3, 3, 3, 3)  # (a, l) x (c, d)
            h1 = eta(prof, Tn[:, k][:, None] - Tg[None, :, k], 1)
            for li in range(network.n_loops):
                fb = np.einsum("alcd,a->lcd", fkz, loop_b[li], optimize=False)
                q = cloud.a9 @ fb.reshape(3, 9).T  # (Ngauss, 3)
                rows = slice(starts[li], starts[li + 1])
                u = h1[rows] @ q
                G[rows] += w * np.cross(u, z)
        return (G,)

    (G,) = parallel.map_reduce(chunk, nz, workers=workers)
    density = np.cross(taus, G)
    return ForceField(density=density, lumped=lumped, G=G, tangents=taus, hairpin=hair)


def _surface_cloud(surfaces, points):
    if points not in (1, 3):
        raise ValueError("triangle rule supports 1 or 3 points")
    pts, a9 = [], []
    for surf in surfaces:
        tri = surf.triangles
        b = surf.slip.cartesian
        bn = np.einsum("a,tm->tam", b, surf.normals).reshape(-1, 9)
        if points == 1:
            q = tri.mean(axis=1)
            w = surf.areas
            pts.append(q)
            a9.append(bn * w[:, None])
        else:
            for i, j in ((0, 1), (1, 2), (2, 0)):
                pts.append(0.5 * (tri[:, i] + tri[:, j]))
                a9.append(bn * (surf.areas / 3.0)[:, None])
    return np.concatenate(pts), np.concatenate(a9)


def energy_surface(surfaces, ev, points=3, workers=None, method="auto"):
    """Slip energy as the double surface integral of the J kernel.

    `surfaces` span the network's loops; cross terms between surfaces are
    included.  The midedge 3-point rule (default) is exact for quadratic
    integrands per triangle pair; triangles should be comparable to the
    core scale for the kernel to be resolved (see SpanningSurface
    refinement helpers).

    method: "pair" sums all quadrature-point pairs exactly; "mesh"
    evaluates the same sum per sphere node as a gridded 1-D correlation
    (quadratic deposit/gather at eps/32 spacing, linear cost in the
    point count); "auto" picks "mesh" for large clouds.
    """
    P, a9 = _surface_cloud(surfaces, points)
    if method == "auto":
        method = "mesh" if len(P) > 1200 else "pair"
    if method == "mesh":
        return _energy_mesh(ev, P, a9, workers)
    if method != "pair":
        raise ValueError(f"unknown method {method!r}")
    eps = ev.profile.epsilon
    amp = N_PHI / eps
    T = P @ ev.nodes.T
    a9t = np.ascontiguousarray(a9.T)
    nz = len(ev.weights)
    npts = len(a9)

    def chunk(lo, hi):
        w = ev.weights[lo:hi]
        tc = np.ascontiguousarray(T[:, lo:hi].T)
        d = tc[:, :, None] - tc[:, None, :]
        d *= 1.0 / (2.0 * eps * eps)
        h2 = d * d  # (t^2/(4 eps^4))
        g = np.exp(-(eps * eps) * h2)  # exp(-t^2/(4 eps^2))
        h2 -= 1.0 / (2.0 * eps * eps)
        h2 *= g
        h2 *= amp  # eta''
        bm = np.matmul(a9[None, :, :], ev.fj[lo:hi])
        gmat = np.matmul(bm, a9t[None, :, :])
        gmat *= h2
        return (0.5 * float(w @ gmat.sum(axis=(1, 2))),)

    n2 = max(npts * npts, 1)
    chunk_z = max(2, min(16, (1 << 20) // n2 + 1))
    (energy,) = parallel.map_reduce(chunk, nz, workers=workers, chunk=chunk_z)
    return float(energy)


def _quadratic_deposit(p, lo, dx, m):
    """Quadratic B-spline assignment: indices and weights, both (n, 3)."""
    x = (p - lo) / dx
    i0 = np.rint(x).astype(np.int64)
    f = x - i0
    w = np.stack([0.5 * (0.5 - f) ** 2, 0.75 - f * f, 0.5 * (0.5 + f) ** 2], axis=1)
    idx = np.stack([i0 - 1, i0, i0 + 1], axis=1)
    return np.clip(idx, 0, m - 1), w


def _energy_mesh(ev, P, a9, workers=None):
    """Pair sum per sphere node as a 1-D correlation in p = z.x:
    quadratic deposit onto a uniform grid, FFT convolution with eta'',
    gather back at the points."""
    eps = ev.profile.epsilon
    prof = ev.profile
    dx = eps / 32.0
    pad = 16.0 * eps
    half = int(np.ceil(pad / dx))
    T = P @ ev.nodes.T
    nz = len(ev.weights)

    def chunk(lo, hi):
        energy = 0.0
        for k in range(lo, hi):
            p = T[:, k]
            glo = p.min() - pad
            m = int(np.ceil((p.max() + pad - glo) / dx)) + 3
            nfft = 1 << int(np.ceil(np.log2(m + 2 * half + 3)))
            idx, w = _quadratic_deposit(p, glo, dx, m)
            flat = idx.ravel()
            rho = np.empty((9, nfft))
            for c in range(9):
                rho[c] = np.bincount(
                    flat, weights=(w * a9[:, c : c + 1]).ravel(), minlength=nfft
                )[:nfft]
            toff = np.arange(-half, half + 1) * dx
            ker = np.zeros(nfft)
            ker[: half + 1] = eta(prof, toff[half:], 2)
            ker[-half:] = eta(prof, toff[:half], 2)
            kf = np.fft.rfft(ker)
            # deconvolve the quadratic-spline assignment (applied twice)
            f = np.arange(len(kf)) / nfft
            kf /= np.sinc(f) ** 6
            conv = np.fft.irfft(np.fft.rfft(rho, axis=1) * kf[None, :], n=nfft, axis=1)
            gathered = (conv[:, idx] * w[None, :, :]).sum(axis=2)  # (9, n)
            bm = a9 @ ev.fj[k]
            energy += 0.5 * ev.weights[k] * float(
                np.einsum("cn,nc->", gathered, bm, optimize=False)
            )
        return (energy,)

    (energy,) = parallel.map_reduce(chunk, nz, workers=workers, chunk=32)
    return float(energy)


def pk_force_surface_form(loop, surface, ev):
    """Cross-check variant of the auxiliary field G via the spanning surface.

    Uses the Stokes-transformed pair sum with the second kernel
    derivative; the sign is fixed by agreement with the line formula.
    Returns G at the loop nodes.
    """
    b = loop.burgers.cartesian
    P, a9 = _surface_cloud([surface], 3)
    prof = ev.profile
    xn = loop.nodes
    Tn = xn @ ev.nodes.T
    Tg = P @ ev.nodes.T
    G = np.zeros((len(xn), 3))
    for k in range(len(ev.weights)):
        w = ev.weights[k]
        z = ev.nodes[k]
        fkz = ev.fk[k].reshape(3, 3, 3, 3)
        # P_kcf = A_def A_klm fk_alcd b_a z_m z_e
        pk = np.einsum(
            "def,klm,alcd,a,m,e->kcf", ALTERNATING, ALTERNATING, fkz, b, z, z, optimize=True
        )
        h2 = eta(prof, Tn[:, k][:, None] - Tg[None, :, k], 2)
        G += w * (h2 @ a9) @ pk.reshape(3, 9).T
    return G


def _grad_tau_inf(network, g):
    """Max segment-wise tangential derivative of a node field g."""
    worst = 0.0
    off = 0
    for lp in network.loops:
        n = len(lp)
        gl = g[off : off + n]
        dg = np.roll(gl, -1, axis=0) - gl
        h = lp.segment_lengths()
        worst = max(worst, float((np.linalg.norm(dg, axis=1) / h).max()))
        off += n
    return worst


def force_bound_report(network, field):
    """lhs/rhs rows for the force magnitude bounds, using the calibrated
    prefactors and the lower-bound mass-ratio estimator."""
    m = mass(network)
    theta = mass_ratio(network)
    eps = network.epsilon
    bmax = network.max_burgers_norm()
    logterm = np.log(1.0 + 2.0 * m / (eps * theta))
    f_inf = float(np.linalg.norm(field.density, axis=1).max())
    f_l2 = float(np.sqrt((field.lumped * (field.density**2).sum(axis=1)).sum()))
    return [
        BoundCheck(
            "pk_linf",
            f_inf,
            BOUND_CONSTANTS["pk_linf"] / eps * bmax * theta * logterm,
        ),
        BoundCheck(
            "pk_l2",
            f_l2,
            BOUND_CONSTANTS["pk_l2"] / eps * bmax * np.sqrt(m) * theta * logterm,
        ),
    ]


def continuity_check(network, g, ev, rule):
    """Deformation continuity of the force: compare node forces before and
    after displacing by g (the polyline pullback is node correspondence)."""
    g = np.asarray(g, dtype=float)
    f0 = pk_force(network, ev, rule)
    moved = pushforward(network, g)
    f1 = pk_force(moved, ev, rule)
    lhs = float(np.linalg.norm(f1.density - f0.density, axis=1).max())
    m = mass(network)
    c = BOUND_CONSTANTS["continuity"]
    g_inf = float(np.linalg.norm(g, axis=1).max())
    rhs = (1.0 + c * m) * _grad_tau_inf(network, g) + c * m * g_inf
    return BoundCheck("continuity", lhs, rhs)
