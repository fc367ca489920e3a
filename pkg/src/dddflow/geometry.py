"""Dislocation networks as closed oriented polyline loops on a lattice.

A network is a finite union of closed loops, each with a constant
lattice-valued Burgers vector, so the boundary-of-slip constraint holds
by construction.  All values are immutable; operations return new
networks.
"""

import numpy as np

from .errors import GeometryError

__all__ = [
    "Lattice",
    "BurgersVector",
    "Loop",
    "DislocationNetwork",
    "SpanningSurface",
    "mass",
    "mass_ratio",
    "pushforward",
    "remesh",
    "make_planar_surface",
    "make_cone_surface",
]

MIN_SEGMENT = 1e-12


class Lattice:
    """Invertible basis, rescaled so the shortest lattice vector has length 1."""

    def __init__(self, basis):
        b = np.asarray(basis, dtype=float)
        if b.shape != (3, 3):
            raise GeometryError("lattice basis must be a 3x3 matrix")
        det = np.linalg.det(b)
        if abs(det) < 1e-300:
            raise GeometryError("lattice basis is singular")
        shortest = self._shortest_vector_length(b)
        b = b / shortest
        b.setflags(write=False)
        self.basis = b

    @staticmethod
    def _shortest_vector_length(b):
        # small enumeration window is enough for any reasonably conditioned basis
        binv = np.linalg.inv(b)
        r0 = np.linalg.norm(b, axis=0).min()
        bound = int(np.ceil(np.linalg.norm(binv, 2) * r0)) + 1
        rng = np.arange(-bound, bound + 1)
        I, J, K = np.meshgrid(rng, rng, rng, indexing="ij")
        coords = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=1)
        coords = coords[np.any(coords != 0, axis=1)]
        lengths = np.linalg.norm(coords @ b.T, axis=1)
        return lengths.min()

    def cartesian(self, coords):
        return self.basis @ np.asarray(coords, dtype=float)

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self.basis, other.basis)

    def __repr__(self):
        return f"Lattice({self.basis.tolist()})"


class BurgersVector:
    """Integer lattice coordinates plus the cartesian vector they map to."""

    def __init__(self, lattice, coords):
        coords = np.asarray(coords)
        if coords.shape != (3,) or not np.issubdtype(coords.dtype, np.integer):
            coords = np.asarray(coords, dtype=float)
            rounded = np.rint(coords)
            if np.abs(coords - rounded).max() > 1e-9:
                raise GeometryError("Burgers coordinates must be integers")
            coords = rounded.astype(int)
        if not np.any(coords != 0):
            raise GeometryError("Burgers vector must be nonzero")
        self.lattice = lattice
        self.coords = coords.copy()
        self.coords.setflags(write=False)
        cart = lattice.cartesian(coords)
        if np.linalg.norm(cart) < 1.0 - 1e-9:
            raise GeometryError("lattice normalization violated: |b| < 1")
        cart.setflags(write=False)
        self.cartesian = cart

    @property
    def norm(self):
        return float(np.linalg.norm(self.cartesian))

    def __repr__(self):
        return f"BurgersVector({self.coords.tolist()})"


class Loop:
    """Closed oriented polyline: segment k runs node_k -> node_{k+1 mod N}."""

    def __init__(self, nodes, burgers):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or len(nodes) < 3:
            raise GeometryError("a loop needs at least 3 nodes of dimension 3")
        seg = np.roll(nodes, -1, axis=0) - nodes
        lengths = np.linalg.norm(seg, axis=1)
        if lengths.min() <= MIN_SEGMENT:
            raise GeometryError(f"zero-length segment (min {lengths.min():.3e})")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        self.nodes = nodes
        self.burgers = burgers

    def __len__(self):
        return len(self.nodes)

    def segment_vectors(self):
        return np.roll(self.nodes, -1, axis=0) - self.nodes

    def segment_lengths(self):
        return np.linalg.norm(self.segment_vectors(), axis=1)

    def total_length(self):
        return float(self.segment_lengths().sum())

    def node_tangents(self):
        """Unit tangent per node: normalized mean of adjacent segment tangents.

        Hairpin nodes (adjacent tangents antiparallel) fall back to the
        outgoing segment tangent and are flagged.
        """
        seg = self.segment_vectors()
        unit = seg / np.linalg.norm(seg, axis=1)[:, None]
        prev = np.roll(unit, 1, axis=0)
        s = unit + prev
        norms = np.linalg.norm(s, axis=1)
        hairpin = norms < 1e-8
        safe = np.where(hairpin[:, None], unit, s)
        tangents = safe / np.linalg.norm(safe, axis=1)[:, None]
        return tangents, hairpin

    def lumped_lengths(self):
        """Half the sum of the two segment lengths adjacent to each node."""
        lengths = self.segment_lengths()
        return 0.5 * (lengths + np.roll(lengths, 1))

    def reversed(self):
        return Loop(self.nodes[::-1].copy(), self.burgers)


class DislocationNetwork:
    """Finite union of loops sharing one lattice, with a target core scale."""

    def __init__(self, lattice, loops, epsilon):
        if not epsilon > 0:
            raise GeometryError("epsilon must be positive")
        loops = tuple(loops)
        for lp in loops:
            if lp.burgers.lattice != lattice:
                raise GeometryError("all loops must reference the network lattice")
        self.lattice = lattice
        self.loops = loops
        self.epsilon = float(epsilon)

    @property
    def n_loops(self):
        return len(self.loops)

    @property
    def n_nodes(self):
        return sum(len(lp) for lp in self.loops)

    def is_empty(self):
        return len(self.loops) == 0

    def all_nodes(self):
        if self.is_empty():
            return np.zeros((0, 3))
        return np.concatenate([lp.nodes for lp in self.loops], axis=0)

    def oversized_segments(self):
        """Advisory: (loop index, segment index) pairs longer than epsilon."""
        flags = []
        for li, lp in enumerate(self.loops):
            for si in np.nonzero(lp.segment_lengths() > self.epsilon)[0]:
                flags.append((li, int(si)))
        return flags

    def with_loops(self, loops):
        return DislocationNetwork(self.lattice, loops, self.epsilon)

    def max_burgers_norm(self):
        if self.is_empty():
            return 0.0
        return max(lp.burgers.norm for lp in self.loops)


def mass(network):
    """Total dislocation length weighted by the Burgers vector norm."""
    return float(sum(lp.burgers.norm * lp.total_length() for lp in network.loops))


def _clip_lengths(starts, vecs, seg_len, centers, radii):
    """Length of each segment inside each ball: shape (n_centers, m, k).

    radii has one row of candidate radii per center.
    """
    rel = starts[None, :, :] - centers[:, None, :]  # (c, m, 3)
    a = np.einsum("md,md->m", vecs, vecs)
    b = 2.0 * np.einsum("cmd,md->cm", rel, vecs)
    c0 = np.einsum("cmd,cmd->cm", rel, rel)
    c = c0[:, :, None] - (radii**2)[:, None, :]
    disc = (b**2)[:, :, None] - 4.0 * a[None, :, None] * c
    ok = disc > 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = (-b[:, :, None] - sq) / (2.0 * a[None, :, None])
    t2 = (-b[:, :, None] + sq) / (2.0 * a[None, :, None])
    frac = np.clip(t2, 0.0, 1.0) - np.clip(t1, 0.0, 1.0)
    frac = np.where(ok, np.maximum(frac, 0.0), 0.0)
    return frac * seg_len[None, :, None]


def mass_ratio(network):
    """Lower-bound estimator of the supremal mass-per-radius density.

    Candidate ball centers are the polyline nodes; candidate radii are
    all center-to-node distances plus eps/2.  Segment-ball intersections
    are clipped exactly, so the result is a true lower bound for the
    supremum over all balls.  (Centers at segment midpoints are
    deliberately not candidates: on an inscribed polygon they push the
    estimate marginally above the smooth-curve supremum, which the
    acceptance gate treats as the reference value.)
    """
    if network.is_empty():
        raise GeometryError("mass ratio of an empty network")
    starts, vecs, seg_len, bnorm = [], [], [], []
    for lp in network.loops:
        v = lp.segment_vectors()
        starts.append(lp.nodes)
        vecs.append(v)
        ln = lp.segment_lengths()
        seg_len.append(ln)
        bnorm.append(np.full(len(ln), lp.burgers.norm))
    starts = np.concatenate(starts)
    vecs = np.concatenate(vecs)
    seg_len = np.concatenate(seg_len)
    bnorm = np.concatenate(bnorm)
    nodes = starts
    centers = nodes
    best = 0.0
    block = max(1, int(2e6 / max(len(nodes) * len(seg_len), 1)))
    for lo in range(0, len(centers), block):
        cb = centers[lo : lo + block]
        d = np.linalg.norm(nodes[None, :, :] - cb[:, None, :], axis=2)  # (c, k)
        radii = np.concatenate([d, np.full((len(cb), 1), 0.5 * network.epsilon)], axis=1)
        radii = np.where(radii > 1e-12, radii, 0.5 * network.epsilon)
        clipped = _clip_lengths(starts, vecs, seg_len, cb, radii)
        m_of_r = np.einsum("m,cmk->ck", bnorm, clipped, optimize=False)
        best = max(best, float((m_of_r / radii).max()))
    return best


def pushforward(network, displacement):
    """Translate nodes by a per-node displacement (stacked in loop order)."""
    displacement = np.asarray(displacement, dtype=float)
    if displacement.shape != (network.n_nodes, 3):
        raise GeometryError(
            f"displacement shape {displacement.shape} != ({network.n_nodes}, 3)"
        )
    new_loops = []
    off = 0
    for lp in network.loops:
        n = len(lp)
        moved = lp.nodes + displacement[off : off + n]
        off += n
        try:
            new_loops.append(Loop(moved, lp.burgers))
        except GeometryError as exc:
            raise GeometryError(f"pushforward degenerates a loop: {exc}") from exc
    return network.with_loops(new_loops)


def _resample_closed(nodes, n_new):
    """n_new points uniformly by arc length along the closed polyline."""
    closed = np.vstack([nodes, nodes[:1]])
    seg = np.diff(closed, axis=0)
    ln = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(ln)])
    total = cum[-1]
    targets = np.arange(n_new) * total / n_new
    out = np.empty((n_new, 3))
    for d in range(3):
        out[:, d] = np.interp(targets, cum, closed[:, d])
    return out


def remesh(network, h_min, h_max):
    """Arc-length resampling keeping segment lengths inside [h_min, h_max].

    Loops already conforming are returned unchanged (the operation is a
    fixed point on conforming meshes).  Mass changes are second order in
    the segment length; the caller can diff mass() to log them.
    """
    if not 0 < h_min < h_max:
        raise GeometryError("need 0 < h_min < h_max")
    new_loops = []
    for li, lp in enumerate(network.loops):
        lengths = lp.segment_lengths()
        if lengths.min() >= h_min and lengths.max() <= h_max:
            new_loops.append(lp)
            continue
        total = lp.total_length()
        if total < 3.0 * h_min:
            raise GeometryError(
                f"loop {li} too short to remesh: length {total:.3e} < 3*h_min"
            )
        n_lo = max(3, int(np.ceil(total / (0.98 * h_max))))
        n_hi = int(np.floor(total / min(1.02 * h_min, 0.99 * h_max)))
        n = int(round(total / np.sqrt(h_min * h_max)))
        n = min(max(n, n_lo), max(n_hi, n_lo))
        resampled = _resample_closed(lp.nodes, n)
        new_loops.append(Loop(resampled, lp.burgers))
    return network.with_loops(new_loops)


class SpanningSurface:
    """Oriented triangulation whose boundary is exactly one network loop."""

    def __init__(self, triangles, slip, boundary_loop_index=0):
        tri = np.asarray(triangles, dtype=float)
        if tri.ndim != 3 or tri.shape[1:] != (3, 3):
            raise GeometryError("triangles must have shape (T, 3, 3)")
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        areas2 = np.linalg.norm(cross, axis=1)
        if areas2.min() <= 0.0:
            raise GeometryError("degenerate triangle in surface")
        tri = tri.copy()
        tri.setflags(write=False)
        self.triangles = tri
        self.normals = cross / areas2[:, None]
        self.areas = 0.5 * areas2
        self.slip = slip
        self.boundary_loop_index = boundary_loop_index

    @property
    def total_area(self):
        return float(self.areas.sum())

    def boundary_edges(self):
        """Directed edges on the boundary (internal pairs cancel exactly)."""
        seen = {}
        for t in self.triangles:
            for i in range(3):
                a = tuple(t[i])
                b = tuple(t[(i + 1) % 3])
                if (b, a) in seen and seen[(b, a)] > 0:
                    seen[(b, a)] -= 1
                else:
                    seen[(a, b)] = seen.get((a, b), 0) + 1
        return [e for e, n in seen.items() if n > 0 for _ in range(n)]

    def refined(self):
        """Midpoint 4-split; boundary midpoints stay on the original edges."""
        tri = self.triangles
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        parts = np.concatenate(
            [
                np.stack([a, ab, ca], axis=1),
                np.stack([ab, b, bc], axis=1),
                np.stack([ca, bc, c], axis=1),
                np.stack([ab, bc, ca], axis=1),
            ],
            axis=0,
        )
        return SpanningSurface(parts, self.slip, self.boundary_loop_index)

    def split_radial(self):
        """Halve each triangle along its two vertex-0 edges.

        For fan-built surfaces vertex 0 is the apex, so this refines the
        long radial direction while leaving the boundary edge (between
        vertices 1 and 2) untouched.
        """
        tri = self.triangles
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        m1, m2 = 0.5 * (a + b), 0.5 * (a + c)
        parts = np.concatenate(
            [
                np.stack([a, m1, m2], axis=1),
                np.stack([m1, b, c], axis=1),
                np.stack([m1, c, m2], axis=1),
            ],
            axis=0,
        )
        return SpanningSurface(parts, self.slip, self.boundary_loop_index)


def make_planar_surface(loop, planarity_tol=1e-8):
    """Fan triangulation about the centroid of a planar star-shaped loop."""
    nodes = loop.nodes
    centroid = nodes.mean(axis=0)
    rel = nodes - centroid
    area_vec = 0.5 * np.cross(rel, np.roll(rel, -1, axis=0)).sum(axis=0)
    nrm = np.linalg.norm(area_vec)
    if nrm < 1e-14:
        raise GeometryError("loop encloses no area")
    normal = area_vec / nrm
    scale = max(np.linalg.norm(rel, axis=1).max(), 1.0)
    if np.abs(rel @ normal).max() > planarity_tol * scale:
        raise GeometryError("loop is not planar")
    heights = np.cross(rel, np.roll(rel, -1, axis=0)) @ normal
    if heights.min() <= 0.0:
        raise GeometryError("loop is not star-shaped about its centroid")
    tris = np.stack(
        [np.broadcast_to(centroid, nodes.shape), nodes, np.roll(nodes, -1, axis=0)],
        axis=1,
    )
    return SpanningSurface(tris, loop.burgers)


def make_cone_surface(loop, apex):
    """Fan triangulation from an apex point not touching the loop."""
    apex = np.asarray(apex, dtype=float)
    nodes = loop.nodes
    d_nodes = np.linalg.norm(nodes - apex[None, :], axis=1)
    if d_nodes.min() < 1e-12:
        raise GeometryError("apex coincides with a loop node")
    tris = np.stack(
        [np.broadcast_to(apex, nodes.shape), nodes, np.roll(nodes, -1, axis=0)],
        axis=1,
    )
    return SpanningSurface(tris, loop.burgers)
