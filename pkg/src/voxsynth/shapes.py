"""Star-convex shape synthesis: spherical harmonics and PCA shape models.

Two generative routes produce binary shape masks:

* a parametric route expanding the radial function of a star-convex surface
  in a real spherical harmonics basis, with randomized coefficients whose
  magnitude decays exponentially with angular order (smooth, blob-like
  shapes such as nuclei), and
* a data-driven route that ray-samples training masks into boundary point
  vectors, builds a PCA model over them, and draws new shapes from the
  span of the eigenmodes.

Basis convention
----------------
``sh_basis`` is the real, orthonormal basis: unit L2 norm over the sphere,
cosine branch for positive degrees, sine branch for negative degrees, and
no Condon-Shortley phase. Consequently ``sh_basis(0, 0, ...)`` is
``1/sqrt(4*pi)``.

Radial functions of :class:`SHShape` are evaluated as
``sqrt(4*pi) * sum_j c_j Y_j``; the rescaling makes the (0, 0) coefficient
equal to the spherical mean radius, so a pure sphere of radius ``r`` is
exactly ``c[0, 0] = r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import spatial

from .volume import Point3, VoxelVolume, shape_from_dims

__all__ = [
    "SHShape",
    "ShapeModel",
    "sh_basis",
    "sh_basis_table",
    "sh_index",
    "random_sh_shape",
    "rasterize_sh",
    "fibonacci_directions",
    "fit_shape_model",
    "sample_shape_model",
    "voxelize_boundary_points",
]

_SQRT4PI = math.sqrt(4.0 * math.pi)


def sh_index(l: int, m: int) -> int:
    """Flat coefficient index of (order l, degree m): j = l^2 + l + m."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid spherical harmonics indices (l={l}, m={m})")
    return l * l + l + m


def _legendre_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """Associated Legendre values P_l^m(x) for all 0 <= m <= l <= l_max.

    Condon-Shortley phase omitted. Returned array has shape
    ``(n_pairs, *x.shape)`` indexed by ``l * (l + 1) // 2 + m``.
    """
    x = np.asarray(x, dtype=np.float64)
    n_pairs = (l_max + 1) * (l_max + 2) // 2
    out = np.empty((n_pairs,) + x.shape, dtype=np.float64)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))

    def idx(l, m):
        return l * (l + 1) // 2 + m

    out[0] = 1.0
    for m in range(1, l_max + 1):
        # P_m^m = (2m - 1)!! (1 - x^2)^(m/2)
        out[idx(m, m)] = out[idx(m - 1, m - 1)] * (2 * m - 1) * s
    for m in range(0, l_max):
        out[idx(m + 1, m)] = x * (2 * m + 1) * out[idx(m, m)]
    for m in range(0, l_max + 1):
        for l in range(m + 2, l_max + 1):
            out[idx(l, m)] = (
                x * (2 * l - 1) * out[idx(l - 1, m)] - (l + m - 1) * out[idx(l - 2, m)]
            ) / (l - m)
    return out


def _normalization(l: int, m: int) -> float:
    return math.sqrt(
        (2 * l + 1) / (4.0 * math.pi) * math.factorial(l - m) / math.factorial(l + m)
    )


def sh_basis_table(l_max: int, theta, phi) -> np.ndarray:
    """All real orthonormal basis values up to order ``l_max``.

    Returns an array of shape ``((l_max + 1)^2, *theta.shape)`` indexed by
    :func:`sh_index`.
    """
    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    theta, phi = np.broadcast_arrays(theta, phi)
    p = _legendre_table(l_max, np.cos(theta))
    out = np.empty(((l_max + 1) ** 2,) + theta.shape, dtype=np.float64)
    sqrt2 = math.sqrt(2.0)
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            am = abs(m)
            base = _normalization(l, am) * p[l * (l + 1) // 2 + am]
            if m == 0:
                val = base
            elif m > 0:
                val = sqrt2 * base * np.cos(m * phi)
            else:
                val = sqrt2 * base * np.sin(am * phi)
            out[sh_index(l, m)] = val
    return out


def sh_basis(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic of order ``l`` and degree ``m``.

    ``theta`` is the polar angle in [0, pi], ``phi`` the azimuth in
    [0, 2*pi). Scalar or array arguments broadcast.
    """
    j = sh_index(l, m)
    table = sh_basis_table(l, np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    val = table[j]
    if np.ndim(theta) == 0 and np.ndim(phi) == 0:
        return float(val)
    return val


def fibonacci_directions(n: int) -> np.ndarray:
    """Near-uniform unit directions on the sphere (golden-angle lattice), (n, 3) as (x, y, z)."""
    if n < 1:
        raise ValueError(f"need at least one direction, got {n}")
    i = np.arange(n, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _angles_of(directions: np.ndarray):
    d = np.asarray(directions, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * math.pi)
    return theta, phi


@dataclass
class SHShape:
    """Star-convex shape given by a spherical harmonics expansion of its radius.

    ``coefficients`` is the flat array ordered by :func:`sh_index`, length
    ``(max_order + 1)^2``. ``radius_scale`` records the nominal physical
    radius (defaults to the mean-radius coefficient).
    """

    max_order: int
    coefficients: np.ndarray
    center: Point3 = Point3(0.0, 0.0, 0.0)
    radius_scale: float = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_order < 0:
            raise ValueError(f"max_order must be >= 0, got {self.max_order}")
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        expected = (self.max_order + 1) ** 2
        if self.coefficients.shape != (expected,):
            raise ValueError(
                f"expected {expected} coefficients for max_order {self.max_order}, "
                f"got shape {self.coefficients.shape}"
            )
        if self.radius_scale is None:
            self.radius_scale = float(self.coefficients[0])

    @property
    def count(self) -> int:
        return (self.max_order + 1) ** 2

    def coefficient(self, l: int, m: int) -> float:
        if l > self.max_order:
            raise ValueError(f"order {l} exceeds max_order {self.max_order}")
        return float(self.coefficients[sh_index(l, m)])

    def radius(self, theta, phi):
        """Radial function sqrt(4*pi) * sum_j c_j Y_j(theta, phi)."""
        table = sh_basis_table(self.max_order, theta, phi)
        val = _SQRT4PI * np.tensordot(self.coefficients, table, axes=(0, 0))
        if np.ndim(theta) == 0 and np.ndim(phi) == 0:
            return float(val)
        return val

    def radius_on_grid(self, n_directions: int = 1024) -> np.ndarray:
        dirs = np.concatenate(
            [fibonacci_directions(n_directions), [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]]
        )
        theta, phi = _angles_of(dirs)
        return self.radius(theta, phi)

    def max_radius(self, n_directions: int = 1024) -> float:
        return float(self.radius_on_grid(n_directions).max())


def random_sh_shape(
    r: float,
    gamma: float,
    l_max: int,
    rng: np.random.Generator,
    max_retries: int = 100,
    validation_directions: int = 512,
) -> SHShape:
    """Draw a random smooth star-convex shape of approximate radius ``r``.

    The mean-radius coefficient is fixed at ``c[0, 0] = r``; every other
    coefficient is ``r * w * exp(-gamma * l)`` with ``w`` i.i.d. standard
    normal, drawn fresh per shape. The exponential attenuation acts on the
    angular order ``l`` (the band frequency), so larger ``gamma`` gives
    smoother, more spherical shapes; both degrees of a band share the
    band's attenuation, and every degree coefficient with ``m != 0``
    vanishes in the large-``gamma`` limit.

    If the resulting radial function is not strictly positive on the
    validation grid, the weights are redrawn, up to ``max_retries`` times.
    """
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")

    n_coef = (l_max + 1) ** 2
    decay = np.empty(n_coef)
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            decay[sh_index(l, m)] = math.exp(-gamma * l)

    for attempt in range(max_retries):
        w = rng.standard_normal(n_coef)
        coef = r * w * decay
        coef[0] = r
        shape = SHShape(max_order=l_max, coefficients=coef)
        radii = shape.radius_on_grid(validation_directions)
        if radii.min() > 0.0:
            shape.metadata["resamples"] = attempt
            return shape
    raise RuntimeError(
        f"no positive radial function after {max_retries} draws "
        f"(r={r}, gamma={gamma}, l_max={l_max})"
    )


def rasterize_sh(shape: SHShape, target_dims, spacing=(1.0, 1.0, 1.0)) -> VoxelVolume:
    """Rasterize an SH shape into a binary mask.

    A voxel is foreground iff its physical distance to the shape center is
    at most the radial function evaluated at the voxel's direction; the
    radius is evaluated directly from the coefficient sum, without
    interpolation. Shapes extending past the volume are clipped and the
    result carries ``metadata["clipped"] = True``; a radius below half a
    voxel yields a single-voxel or empty mask flagged with
    ``metadata["degenerate_scale"] = True``.
    """
    nx, ny, nz = (int(d) for d in target_dims)
    sx, sy, sz = (float(s) for s in spacing)
    out = np.zeros((nz, ny, nx), dtype=np.uint8)

    rmax = shape.max_radius()
    if rmax <= 0:
        raise ValueError("shape has non-positive radial function")
    cx, cy, cz = shape.center.x, shape.center.y, shape.center.z

    x_lo, x_hi = cx - rmax / sx, cx + rmax / sx
    y_lo, y_hi = cy - rmax / sy, cy + rmax / sy
    z_lo, z_hi = cz - rmax / sz, cz + rmax / sz
    clipped = (
        x_lo < -0.5 or x_hi > nx - 0.5
        or y_lo < -0.5 or y_hi > ny - 0.5
        or z_lo < -0.5 or z_hi > nz - 0.5
    )

    ix0, ix1 = max(0, int(math.floor(x_lo))), min(nx - 1, int(math.ceil(x_hi)))
    iy0, iy1 = max(0, int(math.floor(y_lo))), min(ny - 1, int(math.ceil(y_hi)))
    iz0, iz1 = max(0, int(math.floor(z_lo))), min(nz - 1, int(math.ceil(z_hi)))

    meta = {"clipped": bool(clipped)}
    if ix0 > ix1 or iy0 > iy1 or iz0 > iz1:
        meta["degenerate_scale"] = True
        return VoxelVolume(out, spacing=spacing, intensity_range=(0.0, 1.0), metadata=meta)

    yy, xx = np.meshgrid(
        np.arange(iy0, iy1 + 1), np.arange(ix0, ix1 + 1), indexing="ij"
    )
    dx = (xx - cx) * sx
    dy = (yy - cy) * sy
    planar2 = dx * dx + dy * dy
    phi = np.mod(np.arctan2(dy, dx), 2.0 * math.pi)

    # One z-plane at a time keeps the basis table bounded by the plane
    # size; a whole-box evaluation needs (l_max + 1)^2 float64 copies of
    # the box and exhausts memory for large centered shapes.
    for iz in range(iz0, iz1 + 1):
        dz = (iz - cz) * sz
        rho = np.sqrt(planar2 + dz * dz)
        inside = np.zeros(rho.shape, dtype=bool)
        at_center = rho == 0.0
        inside |= at_center
        off = ~at_center
        if off.any():
            theta = np.arccos(np.clip(dz / rho[off], -1.0, 1.0))
            inside[off] = rho[off] <= shape.radius(theta, phi[off])
        out[iz, iy0 : iy1 + 1, ix0 : ix1 + 1] = inside.astype(np.uint8)
    if out.sum() <= 1:
        meta["degenerate_scale"] = True
    return VoxelVolume(out, spacing=spacing, intensity_range=(0.0, 1.0), metadata=meta)


@dataclass
class ShapeModel:
    """PCA model over ray-sampled boundary point vectors.

    ``mean`` and ``modes`` live in centroid-local physical coordinates,
    flattened as (x1, y1, z1, x2, y2, z2, ...) in ray order. Modes are
    orthonormal rows sorted by descending eigenvalue.
    """

    mean: np.ndarray
    modes: np.ndarray
    eigenvalues: np.ndarray
    rays: np.ndarray
    n_samples: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.modes = np.asarray(self.modes, dtype=np.float64)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        self.rays = np.asarray(self.rays, dtype=np.float64)
        n = self.rays.shape[0]
        if self.mean.shape != (3 * n,):
            raise ValueError(f"mean length {self.mean.shape} does not match {n} rays")
        if self.modes.ndim != 2 or self.modes.shape[1] != 3 * n:
            raise ValueError(f"modes shape {self.modes.shape} does not match {n} rays")
        if self.eigenvalues.shape != (self.modes.shape[0],):
            raise ValueError("one eigenvalue per mode required")
        if np.any(np.diff(self.eigenvalues) > 1e-12):
            raise ValueError("eigenvalues must be sorted in descending order")

    @property
    def n_points(self) -> int:
        return self.rays.shape[0]

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    def mean_points(self) -> np.ndarray:
        return self.mean.reshape(-1, 3)


def _march_boundary_radii(mask: VoxelVolume, centroid, rays: np.ndarray):
    """Radii of the outermost foreground-to-background crossing per ray.

    Returns (radii, n_violations) where a violation is a ray with more than
    one crossing (star-convexity breach); the outermost crossing wins.
    """
    m = mask.data.astype(bool)
    nz, ny, nx = m.shape
    sx, sy, sz = mask.spacing
    extent = math.sqrt((nx * sx) ** 2 + (ny * sy) ** 2 + (nz * sz) ** 2)
    dt = 0.5 * min(mask.spacing)
    n_steps = int(math.ceil(extent / dt)) + 2
    t = np.arange(n_steps, dtype=np.float64) * dt

    # positions: (n_rays, n_steps, 3) physical, sampled nearest-neighbor
    pos = centroid[None, None, :] + rays[:, None, :] * t[None, :, None]
    ix = np.rint(pos[..., 0] / sx).astype(np.int64)
    iy = np.rint(pos[..., 1] / sy).astype(np.int64)
    iz = np.rint(pos[..., 2] / sz).astype(np.int64)
    valid = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
    inside = np.zeros(ix.shape, dtype=bool)
    inside[valid] = m[iz[valid], iy[valid], ix[valid]]

    exits = inside[:, :-1] & ~inside[:, 1:]
    n_exits = exits.sum(axis=1)
    violations = int((n_exits > 1).sum())

    radii = np.zeros(rays.shape[0], dtype=np.float64)
    any_exit = n_exits > 0
    # outermost crossing: last True along the step axis
    last = exits.shape[1] - 1 - np.argmax(exits[:, ::-1], axis=1)
    radii[any_exit] = t[last[any_exit]] + 0.5 * dt
    return radii, violations


def fit_shape_model(shapes, n_rays: int = 642) -> ShapeModel:
    """Fit a PCA shape model to binary masks.

    Every mask is reduced to boundary points sampled along ``n_rays``
    near-uniform directions from its intensity centroid, in centroid-local
    physical coordinates. The sample covariance (normalized by ``k - 1``)
    is eigendecomposed; the ``min(3 * n_rays, k - 1)`` leading modes are
    kept. Rays crossing the surface more than once (star-convexity
    violations) keep the outermost crossing and are counted in
    ``metadata["star_convexity_violations"]``.
    """
    shapes = list(shapes)
    if len(shapes) < 2:
        raise ValueError(f"need at least two shapes, got {len(shapes)}")
    rays = fibonacci_directions(n_rays)

    vectors = []
    total_violations = 0
    for shp in shapes:
        m = shp.data.astype(bool)
        if not m.any():
            raise ValueError("cannot fit a shape model to an empty mask")
        sx, sy, sz = shp.spacing
        zz, yy, xx = np.nonzero(m)
        centroid = np.array([xx.mean() * sx, yy.mean() * sy, zz.mean() * sz])
        radii, violations = _march_boundary_radii(shp, centroid, rays)
        total_violations += violations
        vectors.append((radii[:, None] * rays).reshape(-1))

    data = np.stack(vectors)  # (k, 3n)
    k = data.shape[0]
    mean = data.mean(axis=0)
    centered = data - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    n_keep = min(3 * n_rays, k - 1)
    eigenvalues = (svals[:n_keep] ** 2) / (k - 1)
    modes = vt[:n_keep]
    return ShapeModel(
        mean=mean,
        modes=modes,
        eigenvalues=eigenvalues,
        rays=rays,
        n_samples=k,
        metadata={"star_convexity_violations": total_violations},
    )


def sample_shape_model(
    model: ShapeModel,
    b=None,
    n_modes: int = None,
    rng: np.random.Generator = None,
) -> np.ndarray:
    """New boundary points ``mean + sum_j b_j * mode_j``, shape (n, 3).

    Each coefficient must satisfy ``|b_j| <= 3 * eigenvalue_j``; violations
    raise rather than clamp. With ``b=None`` coefficients are drawn
    uniformly from that interval using ``rng``. Points are centroid-local;
    the caller chooses the placement.
    """
    if n_modes is None:
        n_modes = model.n_modes
    if not 0 <= n_modes <= model.n_modes:
        raise ValueError(f"n_modes must be in [0, {model.n_modes}], got {n_modes}")
    lam = model.eigenvalues[:n_modes]
    if b is None:
        if rng is None:
            raise ValueError("either explicit coefficients b or an rng is required")
        b = rng.uniform(-3.0 * lam, 3.0 * lam)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n_modes,):
        raise ValueError(f"expected {n_modes} coefficients, got shape {b.shape}")
    limit = 3.0 * lam
    bad = np.abs(b) > limit
    if bad.any():
        j = int(np.argmax(bad))
        raise ValueError(
            f"mode coefficient b[{j}]={b[j]:.6g} outside [-3*lambda, 3*lambda]="
            f"[{-limit[j]:.6g}, {limit[j]:.6g}]"
        )
    points = model.mean + b @ model.modes[:n_modes]
    return points.reshape(-1, 3)


def voxelize_boundary_points(
    points,
    rays,
    target_dims,
    spacing=(1.0, 1.0, 1.0),
    center=None,
    n_neighbors: int = 6,
) -> VoxelVolume:
    """Fill the star-convex surface described by per-ray boundary points.

    ``points`` are center-relative boundary positions, one per ray; the
    per-ray radius is the projection of the point onto its ray. A voxel is
    foreground iff its distance from ``center`` (physical units, default
    volume center) is at most the radius interpolated at the voxel's
    direction by inverse-chord weighting of the ``n_neighbors`` nearest
    rays. For star-convex shapes this matches filling the triangulated
    boundary surface.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rays = np.asarray(rays, dtype=np.float64)
    if points.shape != rays.shape:
        raise ValueError(f"points {points.shape} and rays {rays.shape} must align")
    if points.shape[0] < 4:
        raise ValueError("need at least 4 rays for spherical interpolation")

    radii = np.einsum("ij,ij->i", points, rays)
    if radii.min() <= 0:
        raise ValueError(f"non-positive boundary radius {radii.min():.6g} along a ray")

    nx, ny, nz = (int(d) for d in target_dims)
    sx, sy, sz = (float(s) for s in spacing)
    if center is None:
        center = Point3((nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0)

    out = np.zeros((nz, ny, nx), dtype=np.uint8)
    rmax = float(radii.max())
    cx, cy, cz = center.x, center.y, center.z
    ix0, ix1 = max(0, int(math.floor(cx - rmax / sx))), min(nx - 1, int(math.ceil(cx + rmax / sx)))
    iy0, iy1 = max(0, int(math.floor(cy - rmax / sy))), min(ny - 1, int(math.ceil(cy + rmax / sy)))
    iz0, iz1 = max(0, int(math.floor(cz - rmax / sz))), min(nz - 1, int(math.ceil(cz + rmax / sz)))
    clipped = (
        cx - rmax / sx < -0.5 or cx + rmax / sx > nx - 0.5
        or cy - rmax / sy < -0.5 or cy + rmax / sy > ny - 0.5
        or cz - rmax / sz < -0.5 or cz + rmax / sz > nz - 0.5
    )
    if ix0 > ix1 or iy0 > iy1 or iz0 > iz1:
        return VoxelVolume(out, spacing=spacing, metadata={"clipped": bool(clipped)})

    zz, yy, xx = np.meshgrid(
        np.arange(iz0, iz1 + 1), np.arange(iy0, iy1 + 1), np.arange(ix0, ix1 + 1), indexing="ij"
    )
    d = np.stack([(xx - cx) * sx, (yy - cy) * sy, (zz - cz) * sz], axis=-1).reshape(-1, 3)
    rho = np.linalg.norm(d, axis=1)

    inside = rho == 0.0
    off = ~inside
    if off.any():
        dirs = d[off] / rho[off, None]
        k = min(n_neighbors, rays.shape[0])
        chord, idx = spatial.cKDTree(rays).query(dirs, k=k)
        chord = np.atleast_2d(chord)
        idx = np.atleast_2d(idx)
        w = 1.0 / (chord + 1e-12)
        r_interp = (w * radii[idx]).sum(axis=1) / w.sum(axis=1)
        if r_interp.min() <= 0:
            raise ValueError("interpolated radius is non-positive")
        inside[off] = rho[off] <= r_interp

    out[iz0 : iz1 + 1, iy0 : iy1 + 1, ix0 : ix1 + 1] = inside.reshape(
        iz1 - iz0 + 1, iy1 - iy0 + 1, ix1 - ix0 + 1
    ).astype(np.uint8)
    return VoxelVolume(out, spacing=spacing, metadata={"clipped": bool(clipped)})
