"""Knot grids, tapered kernels, and the CAR-standardized kernel system.

The latent coefficient field is a kernel convolution of knot coefficients
``a`` with a conditionally autoregressive prior a ~ N(0, (M - theta*A)^-1)
at unit scale. Kernel rows are rescaled so the field has unit prior
variance at every observed location, which makes the threshold directly
interpretable as a prior inclusion probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp


@dataclass(frozen=True)
class SpatialDomain:
    """Observed image locations: a p x d array of coordinates."""

    locations: np.ndarray

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        object.__setattr__(self, "locations", loc)
        if loc.ndim != 2 or loc.shape[0] < 1:
            raise ValueError("locations must be a nonempty p x d array")
        if not np.all(np.isfinite(loc)):
            raise ValueError("locations must be finite")
        if len(np.unique(loc, axis=0)) != loc.shape[0]:
            raise ValueError("duplicate locations are not allowed")

    @property
    def p(self) -> int:
        return self.locations.shape[0]

    @property
    def dimension(self) -> int:
        return self.locations.shape[1]


@dataclass(frozen=True)
class KnotGrid:
    """Knots on an m_1 x ... x m_d array with rook adjacency."""

    dims: tuple
    knots: np.ndarray                  # L x d coordinates
    neighbors: tuple                   # per-knot arrays of neighbor indices
    counts: np.ndarray                 # n_l, degree of each knot
    adjacency: sp.csr_matrix = field(repr=False, default=None)

    @property
    def L(self) -> int:
        return self.knots.shape[0]

    @property
    def dimension(self) -> int:
        return self.knots.shape[1]


def build_knot_grid(domain: SpatialDomain, dims) -> KnotGrid:
    """Equally spaced knots spanning the bounding box of the locations.

    Knots are adjacent iff they differ by one step along exactly one axis
    of the array (rook adjacency); a single-knot axis collapses to the
    midpoint of its coordinate range.
    """
    dims = tuple(int(m) for m in dims)
    d = domain.dimension
    if len(dims) != d:
        raise ValueError(f"dims has length {len(dims)}, domain dimension is {d}")
    if any(m < 1 for m in dims):
        raise ValueError("all grid dims must be >= 1")

    lo = domain.locations.min(axis=0)
    hi = domain.locations.max(axis=0)
    axes = []
    for k, m in enumerate(dims):
        if m == 1:
            axes.append(np.array([(lo[k] + hi[k]) / 2.0]))
        else:
            axes.append(np.linspace(lo[k], hi[k], m))

    # knot index order: last axis varies fastest (C order over the array)
    mesh = np.meshgrid(*axes, indexing="ij")
    knots = np.column_stack([g.ravel(order="C") for g in mesh])
    L = knots.shape[0]

    strides = np.ones(d, dtype=int)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]

    neighbors = []
    for flat in range(L):
        idx = []
        rem = flat
        for k in range(d):
            idx.append(rem // strides[k])
            rem = rem % strides[k]
        nbr = []
        for k in range(d):
            if idx[k] > 0:
                nbr.append(flat - strides[k])
            if idx[k] < dims[k] - 1:
                nbr.append(flat + strides[k])
        neighbors.append(np.array(sorted(nbr), dtype=np.int64))
    counts = np.array([len(nb) for nb in neighbors], dtype=np.int64)

    rows = np.repeat(np.arange(L), counts)
    cols = np.concatenate(neighbors)
    adj = sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(L, L))
    return KnotGrid(dims=dims, knots=knots, neighbors=tuple(neighbors),
                    counts=counts, adjacency=adj)


class CarStructure:
    """CAR precision Q(theta) = M - theta*A with a cached Cholesky factor."""

    def __init__(self, grid: KnotGrid, theta: float):
        theta = float(theta)
        if not (0.0 < theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {theta}")
        if np.any(grid.counts == 0):
            bad = int(np.flatnonzero(grid.counts == 0)[0])
            raise ValueError(f"knot {bad} has no neighbors; CAR precision is singular")
        self.grid = grid
        self.theta = theta
        Q = -theta * grid.adjacency.toarray()
        Q[np.diag_indices_from(Q)] = grid.counts.astype(float)
        self.Q = Q
        # raises LinAlgError if Q is not positive definite
        self.chol = scipy.linalg.cholesky(Q, lower=True)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @property
    def L(self) -> int:
        return self.grid.L

    def quad_form(self, a: np.ndarray) -> float:
        """a' Q a without forming Q @ a through the dense matrix."""
        a = np.asarray(a, dtype=float)
        aAa = float(a @ self.grid.adjacency.dot(a))
        return float(np.sum(self.grid.counts * a * a)) - self.theta * aAa

    def logpdf(self, a: np.ndarray) -> float:
        """Log density of a ~ N(0, Q^-1) at unit scale."""
        L = self.L
        return 0.5 * self.log_det - 0.5 * self.quad_form(a) - 0.5 * L * np.log(2 * np.pi)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve((self.chol, True), b)


def car_precision(grid: KnotGrid, theta: float) -> CarStructure:
    """Build Q(theta) = M - theta*A and cache its Cholesky factor."""
    return CarStructure(grid, theta)


def car_conditional(a, l: int, car: CarStructure):
    """Unit-scale CAR full conditional of knot l: N(theta/n_l * sum of
    neighbor values, 1/n_l)."""
    grid = car.grid
    nbr = grid.neighbors[l]
    n_l = grid.counts[l]
    a = np.asarray(a, dtype=float)
    mean = car.theta / n_l * float(a[nbr].sum())
    return mean, 1.0 / n_l


def sample_car(car: CarStructure, rng: np.random.Generator) -> np.ndarray:
    """Draw a ~ N(0, Q^-1) by a triangular solve against standard normals."""
    e = rng.standard_normal(car.L)
    return scipy.linalg.solve_triangular(car.chol, e, lower=True, trans="T")


def kernel_value(h: float, sigma_h: float) -> float:
    """Tapered Gaussian kernel: exp(-h^2 / (2 sigma_h^2)) for h < 3 sigma_h,
    exactly zero beyond."""
    if sigma_h <= 0:
        raise ValueError("sigma_h must be positive")
    if h < 0:
        raise ValueError("distance must be nonnegative")
    if h >= 3.0 * sigma_h:
        return 0.0
    return float(np.exp(-(h * h) / (2.0 * sigma_h * sigma_h)))


def default_bandwidth(grid: KnotGrid) -> float:
    """Minimum inter-knot distance (the default kernel bandwidth)."""
    spacings = []
    for k, m in enumerate(grid.dims):
        if m > 1:
            vals = np.unique(grid.knots[:, k])
            spacings.append(float(np.min(np.diff(vals))))
    if not spacings:
        raise ValueError("degenerate grid (one knot on every axis) has no spacing")
    return min(spacings)


def kernel_matrix(domain: SpatialDomain, grid: KnotGrid, sigma_h: float) -> sp.csr_matrix:
    """Sparse p x L matrix of tapered kernel evaluations K(||s_j - t_l||).

    Only entries with ||s_j - t_l|| < 3 sigma_h are stored. Every location
    must fall inside the support of at least one knot.
    """
    if sigma_h <= 0:
        raise ValueError("sigma_h must be positive")
    if domain.dimension != grid.dimension:
        raise ValueError("domain and knot grid dimensions differ")
    loc = domain.locations
    cutoff2 = (3.0 * sigma_h) ** 2
    blocks = []
    step = max(1, int(2_000_000 // max(grid.L, 1)))
    for start in range(0, domain.p, step):
        chunk = loc[start:start + step]
        d2 = ((chunk[:, None, :] - grid.knots[None, :, :]) ** 2).sum(axis=2)
        mask = d2 < cutoff2
        uncovered = ~mask.any(axis=1)
        if np.any(uncovered):
            j = start + int(np.flatnonzero(uncovered)[0])
            raise ValueError(
                f"location {j} at {loc[j]} is not covered by any knot "
                f"(bandwidth {sigma_h} too small)"
            )
        vals = np.where(mask, np.exp(-d2 / (2.0 * sigma_h * sigma_h)), 0.0)
        blocks.append(sp.csr_matrix(vals))
    return sp.vstack(blocks, format="csr")


class KernelSystem:
    """Standardized kernel matrix and per-knot column caches.

    ``weights[j]`` is the square root of the j-th diagonal element of
    ``K Q^-1 K'`` so that the standardized field ``(K a) / weights`` has
    unit prior variance at every location. The sparsity pattern of K is
    independent of theta; only the weights change when theta moves.
    """

    def __init__(self, K: sp.csr_matrix, car: CarStructure, sigma_h: float = None):
        K = sp.csr_matrix(K)
        if K.shape[1] != car.L:
            raise ValueError("kernel matrix and CAR structure disagree on L")
        row_nnz = np.diff(K.indptr)
        if np.any(row_nnz == 0):
            j = int(np.flatnonzero(row_nnz == 0)[0])
            raise ValueError(f"kernel matrix has an all-zero row (location {j})")
        self.K = K
        self.sigma_h = sigma_h
        self.car = car
        self.kT_dense = K.toarray().T.copy()   # L x p, reused on every re-standardization
        csc = K.tocsc()
        self.col_index = []
        self.col_raw = []
        for l in range(car.L):
            sl = slice(csc.indptr[l], csc.indptr[l + 1])
            self.col_index.append(csc.indices[sl].astype(np.int64))
            self.col_raw.append(csc.data[sl].copy())
        self.weights = standardization_weights(self.kT_dense, car)
        self._finish()

    def _finish(self):
        self.winv = 1.0 / self.weights
        self.col_tilde = [
            raw * self.winv[idx] for idx, raw in zip(self.col_index, self.col_raw)
        ]

    @property
    def p(self) -> int:
        return self.K.shape[0]

    @property
    def L(self) -> int:
        return self.K.shape[1]

    @property
    def grid(self) -> KnotGrid:
        return self.car.grid

    @property
    def K_tilde(self) -> sp.csr_matrix:
        return sp.diags(self.winv) @ self.K

    def latent_field(self, a: np.ndarray) -> np.ndarray:
        """beta_tilde = K_tilde a."""
        return (self.K @ a) * self.winv

    def restandardize(self, car: CarStructure) -> "KernelSystem":
        """New system for a different theta, reusing the sparse pattern."""
        new = object.__new__(KernelSystem)
        new.K = self.K
        new.sigma_h = self.sigma_h
        new.car = car
        new.kT_dense = self.kT_dense
        new.col_index = self.col_index
        new.col_raw = self.col_raw
        new.weights = standardization_weights(self.kT_dense, car)
        new._finish()
        return new


def standardization_weights(kT_dense: np.ndarray, car: CarStructure) -> np.ndarray:
    """sqrt of diag(K Q^-1 K') via the cached Cholesky, never forming the
    p x p product."""
    B = scipy.linalg.solve_triangular(car.chol, kT_dense, lower=True)
    return np.sqrt(np.einsum("lj,lj->j", B, B))


def standardize_kernels(K: sp.csr_matrix, car: CarStructure,
                        sigma_h: float = None) -> KernelSystem:
    """Rescale kernel rows so the latent field has unit prior variance."""
    return KernelSystem(K, car, sigma_h=sigma_h)


def build_kernel_system(domain: SpatialDomain, grid: KnotGrid, theta: float,
                        sigma_h: float = None) -> KernelSystem:
    """Convenience: kernel matrix + CAR precision + standardization."""
    if sigma_h is None:
        sigma_h = default_bandwidth(grid)
    K = kernel_matrix(domain, grid, sigma_h)
    car = car_precision(grid, theta)
    return standardize_kernels(K, car, sigma_h=sigma_h)
