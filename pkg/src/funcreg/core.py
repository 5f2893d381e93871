"""Discretized Hilbert-space primitives.

Elements of ``L^2([t0, t1], mu)`` are stored as their values on a shared
:class:`TimeGrid`; integrals use the grid quadrature weights. Integral
operators are stored as a ``G x G`` kernel table and act by

    (K f)(tau_g) = sum_h kernel[g, h] * w_h * f(tau_h).

Eigen and singular value problems are solved on weight-transformed
coordinates ``v_g = sqrt(w_g) f(tau_g)`` so that orthonormality holds in the
weighted inner product.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from funcreg.exceptions import ConfigError, DataError, NumericalError

__all__ = [
    "TimeGrid",
    "SampledFunction",
    "KernelOperator",
    "EigenSystem",
    "inner_product",
    "tensor_product",
    "eigh",
    "svd_op",
    "truncated_spectral_inverse",
    "orthonormalize",
]

#: relative rank tolerance used by the truncated inverse
RANK_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Quadrature grid ``tau_1 < ... < tau_G`` with positive weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.size < 1:
            raise DataError("grid nodes must be a non-empty 1-D sequence")
        if weights.shape != nodes.shape:
            raise DataError("grid weights must match nodes in length")
        if np.any(np.diff(nodes) <= 0):
            raise DataError("grid nodes must be strictly increasing")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise DataError("grid weights must be finite and positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def trapezoid(cls, nodes):
        """Grid with composite trapezoid weights on the given nodes."""
        nodes = np.asarray(nodes, dtype=float)
        if nodes.size < 2:
            raise DataError("a trapezoid grid needs at least two nodes")
        gaps = np.diff(nodes)
        weights = np.zeros_like(nodes)
        weights[:-1] += gaps / 2
        weights[1:] += gaps / 2
        return cls(nodes, weights)

    @classmethod
    def uniform(cls, start=0.0, stop=1.0, size=101):
        return cls.trapezoid(np.linspace(start, stop, size))

    @classmethod
    def cells(cls, size):
        """Index grid ``0..size-1`` with equal weights ``1/size``.

        Used for flattened spatial rasters, where each cell carries the same
        share of a unit-area domain.
        """
        return cls(np.arange(size, dtype=float), np.full(size, 1.0 / size))

    @property
    def size(self):
        return self.nodes.size

    @property
    def sqrt_weights(self):
        return np.sqrt(self.weights)

    def __len__(self):
        return self.nodes.size

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None

    def __repr__(self):
        return f"TimeGrid(G={self.size}, [{self.nodes[0]:g}, {self.nodes[-1]:g}])"


def _check_same_grid(a, b):
    if a != b:
        raise DataError("operands live on different grids")


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """An element of H given by its values on ``grid``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if not np.iscomplexobj(values):
            values = values.astype(float)
        if values.shape != (self.grid.size,):
            raise DataError(
                f"function has {values.shape} values, grid has {self.grid.size} nodes"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def norm(self):
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def __add__(self, other):
        _check_same_grid(self.grid, other.grid)
        return SampledFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self.grid, other.grid)
        return SampledFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return SampledFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledFunction(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Integral operator on H represented by its kernel table."""

    grid: TimeGrid
    kernel: np.ndarray

    def __post_init__(self):
        kernel = np.asarray(self.kernel)
        if not np.iscomplexobj(kernel):
            kernel = kernel.astype(float)
        g = self.grid.size
        if kernel.shape != (g, g):
            raise DataError(f"kernel has shape {kernel.shape}, expected {(g, g)}")
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)

    @classmethod
    def identity(cls, grid):
        return cls(grid, np.diag(1.0 / grid.weights))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.size, grid.size)))

    def apply(self, f):
        _check_same_grid(self.grid, f.grid)
        return SampledFunction(self.grid, self.kernel @ (self.grid.weights * f.values))

    def __call__(self, f):
        return self.apply(f)

    def adjoint(self):
        return KernelOperator(self.grid, self.kernel.conj().T)

    def weighted_matrix(self):
        """Symmetric-coordinates matrix ``W^1/2 K W^1/2``."""
        s = self.grid.sqrt_weights
        return s[:, None] * self.kernel * s[None, :]

    def hs_norm(self):
        w = self.grid.weights
        return float(np.sqrt(np.sum(w[:, None] * w[None, :] * np.abs(self.kernel) ** 2)))

    def trace(self):
        return np.sum(np.diag(self.kernel) * self.grid.weights)

    def is_self_adjoint(self, atol=1e-8):
        m = self.weighted_matrix()
        scale = max(1.0, np.max(np.abs(m)))
        return bool(np.max(np.abs(m - m.conj().T)) <= atol * scale)

    def __add__(self, other):
        _check_same_grid(self.grid, other.grid)
        return KernelOperator(self.grid, self.kernel + other.kernel)

    def __sub__(self, other):
        _check_same_grid(self.grid, other.grid)
        return KernelOperator(self.grid, self.kernel - other.kernel)

    def __mul__(self, scalar):
        return KernelOperator(self.grid, self.kernel * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Sequence of values with associated orthonormal functions.

    ``functions`` is a ``(K, G)`` array; row ``k`` holds the k-th function.
    Values are non-increasing.
    """

    grid: TimeGrid
    values: np.ndarray
    functions: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        functions = np.atleast_2d(np.asarray(self.functions))
        if functions.shape[0] == 0:
            functions = functions.reshape(0, self.grid.size)
        if functions.shape != (values.size, self.grid.size):
            raise DataError("eigen system values and functions disagree in shape")
        values.setflags(write=False)
        functions.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "functions", functions)

    def __len__(self):
        return self.values.size

    def function(self, k):
        return SampledFunction(self.grid, self.functions[k])

    def truncate(self, m):
        return EigenSystem(self.grid, self.values[:m], self.functions[:m])

    def coefficients(self, values):
        """Inner products ``<f, phi_k>`` for a stack of function values (..., G)."""
        return (np.asarray(values) * self.grid.weights) @ self.functions.conj().T

    def synthesize(self, coeffs):
        """``sum_k coeffs[..., k] * phi_k`` as an array of values (..., G)."""
        return np.asarray(coeffs) @ self.functions

    def gram(self):
        return (self.functions * self.grid.weights) @ self.functions.conj().T

    def reconstruct(self):
        """Kernel of ``sum_k values_k phi_k (x) phi_k``."""
        return KernelOperator(
            self.grid, (self.functions.T * self.values) @ self.functions.conj()
        )


def inner_product(f, g):
    """Quadrature inner product ``sum_g w_g f(tau_g) conj(g(tau_g))``."""
    _check_same_grid(f.grid, g.grid)
    value = np.sum(f.grid.weights * f.values * np.conj(g.values))
    return value if np.iscomplexobj(value) else float(value)


def tensor_product(f, g):
    """Rank-one operator ``h -> <h, g> f``."""
    _check_same_grid(f.grid, g.grid)
    return KernelOperator(f.grid, np.outer(f.values, np.conj(g.values)))


def _fix_signs(vectors):
    # vectors: (G, K) columns; make the largest-magnitude entry of each column positive
    if vectors.shape[1] == 0:
        return vectors, np.ones(0)
    idx = np.argmax(np.abs(vectors), axis=0)
    lead = vectors[idx, np.arange(vectors.shape[1])]
    phase = np.where(np.abs(lead) > 0, lead / np.maximum(np.abs(lead), 1e-300), 1.0)
    return vectors / phase, phase


def eigh(K, atol=1e-8):
    """Eigendecomposition of a self-adjoint kernel operator.

    Eigenvalues are returned in descending order; each eigenfunction is
    scaled so that its largest-magnitude value is positive.
    """
    if not K.is_self_adjoint(atol):
        raise DataError("eigh needs a self-adjoint operator")
    m = K.weighted_matrix()
    m = (m + m.conj().T) / 2
    try:
        vals, vecs = linalg.eigh(m)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    funcs, _ = _fix_signs(vecs[:, order] / K.grid.sqrt_weights[:, None])
    return EigenSystem(K.grid, vals, funcs.T)


def svd_op(K):
    """Singular value decomposition ``K psi_k = sigma_k phi_k``.

    Returns ``(right, left, singulars)`` where ``right`` holds the
    ``psi_k`` and ``left`` the ``phi_k``; both systems carry the singular
    values as their ``values``.
    """
    m = K.weighted_matrix()
    try:
        u, s, vh = linalg.svd(m, lapack_driver="gesdd")
    except linalg.LinAlgError:
        try:
            u, s, vh = linalg.svd(m, lapack_driver="gesvd")
        except linalg.LinAlgError as exc:
            raise NumericalError(f"singular value decomposition failed: {exc}") from exc
    sw = K.grid.sqrt_weights[:, None]
    v, phase = _fix_signs(vh.conj().T / sw)
    u = u / sw / phase
    right = EigenSystem(K.grid, s, v.T)
    left = EigenSystem(K.grid, s, u.T)
    return right, left, s


def stable_rank(values, rtol=RANK_RTOL):
    values = np.asarray(values)
    if values.size == 0 or values[0] <= 0:
        return 0
    return int(np.sum(values > rtol * values[0]))


def truncated_spectral_inverse(K, m, ridge=0.0):
    """``sum_{k<=m} (lambda_k + ridge)^-1 phi_k (x) phi_k``."""
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    if m < 1:
        raise ConfigError("truncation level must be at least 1")
    eig = eigh(K)
    if m > len(eig):
        raise ConfigError(f"m={m} exceeds the grid size {len(eig)}")
    if ridge == 0:
        rank = stable_rank(eig.values)
        if m > rank:
            raise NumericalError(
                f"m={m} exceeds the numerically stable rank {rank}; pass ridge > 0"
            )
    top = eig.truncate(m)
    inv = EigenSystem(K.grid, 1.0 / (top.values + ridge), top.functions)
    return inv.reconstruct()


def orthonormalize(grid, values):
    """Gram-Schmidt (via QR) of rows of ``values`` in the quadrature inner product."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    sw = grid.sqrt_weights
    q, r = np.linalg.qr((values * sw).T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T / sw
