"""Branched surface from the flat product, with mass density probes.

The map z -> (z^3, g(z)) takes a rounded half-stadium region in the
right half-plane to a surface in R^4. Both components are holomorphic,
so the area element is 9|z|^4 + |g'(z)|^2 and the image is minimal.
The straight part of the boundary is a segment of the imaginary axis
chosen long enough to contain product zeros z1 = -i e^{n pi}; each
pairs with the interior zero z2 = e^{2 pi i/3} z1 at the same cube, so
the surface touches its own boundary there and the density jumps to
3/2 (a boundary half-sheet plus an interior sheet).

Density at a point of the image is measured the way it is defined:
mass of the part of the surface inside a small ball, over pi r^2. The
preimage of the ball is integrated by an adaptive quadtree per
component, components being seeded at the cube roots of the first
coordinate. A boundary injectivity scan certifies that the image of
the boundary curve is embedded: uniform samples are hashed by
position, nearby nonadjacent pairs are polished by local minimization,
and the segment portion is covered by the strict monotonicity of
Im z^3 = -y^3 along it (the image curve flattens at the origin, so a
sampling scan alone could never resolve that pinch).

The two-circles configuration (two stacked flat disks spanning
concentric circles) is computed in closed form as a reference: exact
circle-circle overlap areas give the ratio sequence, converging to
3/2 on the inner circle, 2 inside it, 1 between the circles.
"""

import numpy as np
from dataclasses import dataclass

from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .holomorphic import branch_product, branch_product_prime, find_zeros_numeric


def surface_image(z, alpha: float = 0.5):
    """Rows (Re z^3, Im z^3, Re g, Im g); shape (4,) for scalar input."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    cube = z ** 3
    gv = np.atleast_1d(branch_product(z, alpha))
    out = np.stack([cube.real, cube.imag, gv.real, gv.imag], axis=-1)
    return out[0] if scalar else out


def area_density(z, alpha: float = 0.5):
    """Area element 9|z|^4 + |g'|^2 of the map, extended by 0 at 0."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = 9.0 * np.abs(z) ** 4
    nz = z != 0
    if np.any(nz):
        out[nz] += np.abs(branch_product_prime(z[nz], alpha)) ** 2
    return float(out[0]) if scalar else out


def _top_profile(x, tau, fillet, straight_x):
    x = np.asarray(x, dtype=float)
    cap_r = tau + fillet
    with np.errstate(invalid="ignore"):
        fillet_y = tau + np.sqrt(np.maximum(fillet ** 2 - (x - fillet) ** 2,
                                            0.0))
        cap_y = np.sqrt(np.maximum(cap_r ** 2 - (x - straight_x) ** 2, 0.0))
    return np.where(x <= fillet, fillet_y,
                    np.where(x <= straight_x, cap_r, cap_y))


def _contains(z, tau, fillet, straight_x):
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    x_max = straight_x + tau + fillet
    top = _top_profile(x, tau, fillet, straight_x)
    return (x > 0.0) & (x < x_max) & (np.abs(y) < top)


@dataclass
class BranchedSurface:
    """Parametrized surface over a rounded half-stadium region.

    The region boundary runs up the imaginary segment [-tau i, tau i],
    around a fillet of the given radius onto horizontals at
    +-(tau + fillet), and closes with a semicircular cap of radius
    tau + fillet centered at straight_x on the real axis.
    """

    alpha: float
    tau: float
    fillet: float
    straight_x: float
    grid_h: float
    grid: np.ndarray
    grid_density: np.ndarray

    @property
    def cap_radius(self) -> float:
        return self.tau + self.fillet

    @property
    def x_max(self) -> float:
        return self.straight_x + self.cap_radius

    def contains(self, z):
        return _contains(z, self.tau, self.fillet, self.straight_x)

    def image(self, z):
        return surface_image(z, self.alpha)

    def area_element(self, z):
        return area_density(z, self.alpha)

    def _piece_lengths(self):
        f, tau, x = self.fillet, self.tau, self.straight_x
        cap = self.cap_radius
        return np.array([2.0 * tau, 0.5 * np.pi * f, x - f,
                         np.pi * cap, x - f, 0.5 * np.pi * f])

    @property
    def boundary_length(self) -> float:
        return float(self._piece_lengths().sum())

    def boundary_point(self, t):
        """Arclength parametrization, counterclockwise from -tau i."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t) % self.boundary_length
        cum = np.concatenate([[0.0], np.cumsum(self._piece_lengths())])
        idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, 5)
        s = t - cum[idx]
        f, tau, x = self.fillet, self.tau, self.straight_x
        cap = self.cap_radius
        z = np.empty(t.shape, dtype=complex)
        m = idx == 0
        z[m] = 1j * (s[m] - tau)
        m = idx == 1
        th = np.pi - s[m] / f
        z[m] = f + f * np.cos(th) + 1j * (tau + f * np.sin(th))
        m = idx == 2
        z[m] = f + s[m] + 1j * cap
        m = idx == 3
        th = 0.5 * np.pi - s[m] / cap
        z[m] = x + cap * np.cos(th) + 1j * cap * np.sin(th)
        m = idx == 4
        z[m] = x - s[m] - 1j * cap
        m = idx == 5
        th = -0.5 * np.pi - s[m] / f
        z[m] = f + f * np.cos(th) + 1j * (-tau + f * np.sin(th))
        return complex(z[0]) if scalar else z


def build_surface(alpha: float = 0.5, tau: float = 1.2, fillet: float = 0.2,
                  straight_x: float = 1.6,
                  grid_h: float = 0.02) -> BranchedSurface:
    """Construct the surface with a cell-centered sample grid.

    tau must cover the segment zeros meant to act as boundary touching
    points (the default covers moduli 1 and e^{-pi}). Grid nodes sit at
    cell centers so none land on the axis or the origin.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if not 0.0 < fillet < tau:
        raise ValueError("need 0 < fillet < tau")
    if straight_x <= fillet:
        raise ValueError("straight_x must exceed the fillet radius")
    x_max = straight_x + tau + fillet
    cap = tau + fillet
    xs = np.arange(0.5 * grid_h, x_max, grid_h)
    ys = np.arange(-cap + 0.5 * grid_h, cap, grid_h)
    gx, gy = np.meshgrid(xs, ys)
    nodes = (gx + 1j * gy).ravel()
    nodes = nodes[_contains(nodes, tau, fillet, straight_x)]
    dens = area_density(nodes, alpha)
    return BranchedSurface(alpha=alpha, tau=tau, fillet=fillet,
                           straight_x=straight_x, grid_h=grid_h,
                           grid=nodes, grid_density=dens)


# ---------------------------------------------------------------------------
# boundary curve scan


@dataclass
class DoublePointRecord:
    n: int
    image: np.ndarray
    z_boundary: complex
    z_interior: complex
    rotation_error: float
    image_error: float


@dataclass
class BoundaryScan:
    t: np.ndarray
    z: np.ndarray
    points: np.ndarray
    min_separation: float
    separation_floor: float
    near_pairs: list
    collisions: list
    segment_monotone: bool
    injectivity_ok: bool
    double_points: list


def _double_point_records(surface, n):
    ring = np.exp(n * np.pi)
    if ring > surface.tau:
        raise ValueError(f"ring modulus {ring:.3g} is off the segment")
    zeros = find_zeros_numeric(0.6 * ring, 1.7 * ring, surface.alpha)
    z_bot, z_m30, z_p30, z_top = zeros
    rot = np.exp(2j * np.pi / 3)
    recs = []
    for z1, z2, w in ((z_bot, z_p30, rot), (z_top, z_m30, np.conj(rot))):
        if abs(z1.real) > 1e-9:
            raise ValueError("segment preimage drifted off the axis")
        recs.append(DoublePointRecord(
            n=n, image=surface.image(z1),
            z_boundary=complex(z1), z_interior=complex(z2),
            rotation_error=float(abs(z2 - w * z1)),
            image_error=float(np.linalg.norm(surface.image(z1)
                                             - surface.image(z2)))))
    return recs


def _refine_pair(surface, t0, s0):
    length = surface.boundary_length

    def gap(v):
        a = surface.image(surface.boundary_point(v[0]))
        b = surface.image(surface.boundary_point(v[1]))
        return float(np.linalg.norm(a - b))

    res = minimize(gap, [t0, s0], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 500})
    ta, tb = float(res.x[0]) % length, float(res.x[1]) % length
    dt = abs(ta - tb)
    return float(res.fun), ta, tb, min(dt, length - dt)


def boundary_curve(surface, samples: int = 12000, collision_tol: float = 1e-8,
                   zero_rings=(0, -1)) -> BoundaryScan:
    """Sample the image of the boundary and certify it is embedded.

    Nonadjacent sample pairs closer than ten local spacings are
    refined by minimizing the true image distance; a refined pair
    closer than collision_tol is a reported collision. Pairs within
    0.15 of arclength are skipped: off the segment the image speed is
    bounded below, so short arcs cannot return, and segment-segment
    pairs are certified at any distance by the strict monotonicity of
    the first coordinate (that covers the flat pinch at the origin).
    Ring zeros on the segment are certified as boundary touching
    points of the surface: both preimages are located numerically and
    the rotation relation between them is checked.
    """
    if samples < 10000:
        raise ValueError("need at least 10^4 samples for the scan")
    length = surface.boundary_length
    t = (np.arange(samples) + 0.5) * (length / samples)
    z = surface.boundary_point(t)
    pts = surface.image(z)

    on_seg = z.real == 0.0
    first = pts[on_seg, 1]
    segment_monotone = bool(np.all(np.diff(first) < 0.0))

    spacing = np.linalg.norm(np.diff(pts, axis=0, append=pts[:1]), axis=1)
    flag_r = 10.0 * float(spacing.max())
    pairs = cKDTree(pts).query_pairs(flag_r, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    dt = np.abs(t[i] - t[j])
    dt = np.minimum(dt, length - dt)
    keep = (dt > 0.15) & ~(on_seg[i] & on_seg[j])
    pairs = pairs[keep]

    # one representative pair per parameter-window cluster
    best = {}
    dist = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
    for (a, b), d in zip(pairs, dist):
        key = (round(t[a] / 0.1), round(t[b] / 0.1))
        if key not in best or d < best[key][0]:
            best[key] = (d, t[a], t[b])

    near_pairs, collisions = [], []
    for d0, ta, tb in best.values():
        d, ra, rb, sep = _refine_pair(surface, ta, tb)
        if sep <= 0.15:
            continue  # slid together along the curve: not a distinct pair
        near_pairs.append((ra, rb, d))
        if d < collision_tol:
            collisions.append((ra, rb, d))

    min_sep = min((d for _, _, d in near_pairs), default=np.inf)
    doubles = []
    for n in zero_rings:
        doubles.extend(_double_point_records(surface, n))
    return BoundaryScan(t=t, z=z, points=pts,
                        min_separation=float(min_sep),
                        separation_floor=flag_r,
                        near_pairs=near_pairs, collisions=collisions,
                        segment_monotone=segment_monotone,
                        injectivity_ok=segment_monotone and not collisions,
                        double_points=doubles)


# ---------------------------------------------------------------------------
# density


@dataclass
class DensityReport:
    point: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray
    extrapolated: float
    seeds: np.ndarray


def _in_closed_region(surface, z, tol):
    x, y = z.real, z.imag
    if x < -tol or x > surface.x_max + tol:
        return False
    xc = min(max(x, 0.0), surface.x_max)
    top = float(_top_profile(xc, surface.tau, surface.fillet,
                             surface.straight_x))
    return abs(y) <= top + tol


def _preimage_seeds(surface, p1, p2, r_max, gap_tol=1e-7):
    if p1 == 0:
        roots = [0j]
    else:
        base = abs(p1) ** (1.0 / 3.0)
        th = np.angle(p1) / 3.0
        roots = [base * np.exp(1j * (th + 2.0 * np.pi * k / 3.0))
                 for k in range(3)]
    seeds, reject_gaps = [], []
    for z in roots:
        if not _in_closed_region(surface, z, 1e-9):
            continue
        gap = abs(complex(branch_product(z, surface.alpha)) - p2)
        if gap <= gap_tol:
            seeds.append(complex(z))
        else:
            reject_gaps.append(gap)
    if any(g < 2.0 * r_max for g in reject_gaps):
        raise ValueError("radius too large: a different sheet of the "
                         "surface passes within reach of the ball")
    return seeds


def _member(surface, z, p, r):
    """Inside the region and the image within r of p."""
    z = np.asarray(z, dtype=complex)
    ok = surface.contains(z)
    out = np.zeros(z.shape, dtype=bool)
    if np.any(ok):
        pts = surface_image(z[ok], surface.alpha)
        out[ok] = np.linalg.norm(pts - p, axis=1) < r
    return out


_PROBES = np.array([0.0, 1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j,
                    1 + 0j, -1 + 0j, 1j, -1j])
_MIDS = 0.5 * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])


def _image_gap_and_density(surface, z, p):
    """Distance of the image from p and the area element; the slit
    (where the product is undefined) reports an infinite gap."""
    z = np.asarray(z, dtype=complex)
    ok = (z.real > 0.0) | (z.imag != 0.0)
    gap = np.full(z.shape, np.inf)
    dens = np.zeros(z.shape)
    if np.any(ok):
        pts = surface_image(z[ok], surface.alpha)
        gap[ok] = np.linalg.norm(pts - p, axis=1)
        dens[ok] = area_density(z[ok], surface.alpha)
    return gap, dens


def _quadtree_mass(surface, center, w, p, r, depth):
    # Start from cells no larger than the preimage blob (radius about
    # r over the root of the area element), so a component strictly
    # inside the box cannot slip between the probes of a single cell.
    j0 = area_density(center, surface.alpha)
    side = max(2, int(np.ceil(w * np.sqrt(max(j0, 1e-12)) / r)))
    g = (np.arange(side) + 0.5) * 2.0 / side - 1.0
    cz = (center + w * (g[:, None] + 1j * g[None, :])).ravel()
    hw = np.full(cz.size, w / side)
    mass = 0.0
    for level in range(depth):
        probes = cz[:, None] + hw[:, None] * _PROBES[None, :]
        m = _member(surface, probes.ravel(), p, r).reshape(probes.shape)
        n_in = m.sum(axis=1)
        full = n_in == len(_PROBES)
        if np.any(full):
            zs = cz[full, None] + hw[full, None] * _MIDS[None, :]
            J = area_density(zs.ravel(), surface.alpha).reshape(zs.shape)
            mass += float((J.mean(axis=1) * (2.0 * hw[full]) ** 2).sum())
        # drop a cell only when a Lipschitz bound proves its image
        # stays clear of the ball; probes alone are not a proof
        gap, dens = _image_gap_and_density(surface, cz, p)
        reach = 1.5 * np.sqrt(np.maximum(dens, 1e-12) * 2.0) * hw
        empty = (n_in == 0) & (gap > r + reach)
        mixed = ~full & ~empty
        if not np.any(mixed):
            return mass
        cz = (cz[mixed, None] + hw[mixed, None] * _MIDS[None, :]).ravel()
        hw = np.repeat(0.5 * hw[mixed], 4)
    # leftover straddling cells: membership-weighted 4x4 subsample
    g = (np.arange(4) + 0.5) / 2.0 - 1.0
    offs = (g[:, None] + 1j * g[None, :]).ravel()
    zs = cz[:, None] + hw[:, None] * offs[None, :]
    m = _member(surface, zs.ravel(), p, r).reshape(zs.shape)
    J = np.zeros(zs.shape)
    if np.any(m):
        J[m] = area_density(zs[m], surface.alpha)
    mass += float(((J * m).mean(axis=1) * (2.0 * hw) ** 2).sum())
    return mass


def _component_mass(surface, seed, p, r, depth):
    j0 = area_density(seed, surface.alpha)
    w = 4.0 * r / np.sqrt(j0) if j0 > 1e-12 else 2.0 * r ** (1.0 / 3.0)
    s = np.linspace(-1.0, 1.0, 17)
    rim_unit = np.concatenate([s + 1j, s - 1j, 1 + 1j * s, -1 + 1j * s])
    for _ in range(8):
        if not np.any(_member(surface, seed + w * rim_unit, p, r)):
            break
        w *= 1.6
    else:
        raise ValueError("ball preimage keeps escaping its bounding box")
    return _quadtree_mass(surface, seed, w, p, r, depth)


def density_at(surface, point, radii, depth: int = 8) -> DensityReport:
    """Mass ratio mass(B_r)/(pi r^2) per radius with an r -> 0 limit.

    The limit estimate is the intercept of a linear fit in r, since
    the leading finite-radius correction at both regular and boundary
    points is first order. Radii must stay below the separation of
    other sheets over the same cube coordinate; that is enforced.
    """
    p = np.asarray(point, dtype=float).ravel()
    if p.size != 4:
        raise ValueError("point must have 4 coordinates")
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0.0):
        raise ValueError("radii must be positive")
    p1, p2 = complex(p[0], p[1]), complex(p[2], p[3])
    seeds = _preimage_seeds(surface, p1, p2, float(radii.max()))
    if not seeds:
        raise ValueError("point is not on the surface within tolerance")
    # near the branch point the image triple-wraps; unless that is the
    # point being measured, the ball must not reach it
    if not any(abs(s) < 1e-12 for s in seeds):
        if 2.0 * float(radii.max()) > float(np.linalg.norm(p)):
            raise ValueError("radius too large: the ball reaches the "
                             "image of the branch point")
    ratios = np.empty(radii.shape)
    for k, r in enumerate(radii):
        mass = sum(_component_mass(surface, s, p, float(r), depth)
                   for s in seeds)
        ratios[k] = mass / (np.pi * r * r)
    if radii.size >= 2:
        extrap = float(np.polyfit(radii, ratios, 1)[1])
    else:
        extrap = float(ratios[0])
    return DensityReport(point=p, radii=radii, ratios=ratios,
                         extrapolated=extrap, seeds=np.array(seeds))


# ---------------------------------------------------------------------------
# the two-circles reference configuration


@dataclass
class TwoCirclesReport:
    exact: float
    radii: np.ndarray
    ratios: np.ndarray
    location: str


def _disk_overlap(big_r, d, r):
    """Area of disk(0, big_r) meeting disk(center at distance d, r)."""
    if d >= big_r + r:
        return 0.0
    if d <= abs(big_r - r):
        return np.pi * min(big_r, r) ** 2
    a = np.clip((d * d + big_r * big_r - r * r) / (2.0 * d * big_r), -1, 1)
    b = np.clip((d * d + r * r - big_r * big_r) / (2.0 * d * r), -1, 1)
    k = ((-d + r + big_r) * (d + r - big_r)
         * (d - r + big_r) * (d + r + big_r))
    return (big_r * big_r * np.arccos(a) + r * r * np.arccos(b)
            - 0.5 * np.sqrt(max(k, 0.0)))


def two_circles_density(r_inner: float, r_outer: float, point=None,
                        radii=None) -> TwoCirclesReport:
    """Density of two stacked disks spanning concentric circles.

    The minimizer for the doubled boundary is the two flat disks on
    top of each other, so the mass in a ball is an exact sum of two
    circle-circle overlaps. At a point of the inner circle the inner
    disk contributes a half plane and the outer disk a full one: the
    ratio tends to 3/2 (from below: both disks are convex).
    """
    if not 0.0 < r_inner < r_outer:
        raise ValueError("need 0 < r_inner < r_outer")
    rho = abs(complex(point)) if point is not None else r_inner
    if radii is None:
        radii = r_inner * np.geomspace(0.1, 0.005, 10)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0.0):
        raise ValueError("radii must be positive")
    mass = np.array([_disk_overlap(r_inner, rho, r)
                     + _disk_overlap(r_outer, rho, r) for r in radii])
    ratios = mass / (np.pi * radii ** 2)
    tol = 1e-9 * r_inner
    if rho < r_inner - tol:
        exact, loc = 2.0, "inside inner disk"
    elif abs(rho - r_inner) <= tol:
        exact, loc = 1.5, "on inner circle"
    elif rho < r_outer - tol:
        exact, loc = 1.0, "between circles"
    elif abs(rho - r_outer) <= tol:
        exact, loc = 0.5, "on outer circle"
    else:
        exact, loc = 0.0, "outside"
    return TwoCirclesReport(exact=exact, radii=radii, ratios=ratios,
                            location=loc)


def dump_surface_csv(surface, path):
    """Write the sample grid: parameter, image coordinates, area element."""
    pts = surface.image(surface.grid)
    data = np.column_stack([surface.grid.real, surface.grid.imag,
                            pts, surface.grid_density])
    np.savetxt(path, data, delimiter=",",
               header="x,y,u1,u2,v1,v2,area_density", comments="")


def dump_curve_csv(scan: BoundaryScan, path):
    """Write the boundary scan samples: parameter, preimage, image."""
    data = np.column_stack([scan.t, scan.z.real, scan.z.imag, scan.points])
    np.savetxt(path, data, delimiter=",",
               header="t,x,y,u1,u2,v1,v2", comments="")
