"""Sine-basis fields on the box (0, pi)^dim and the operators diagonal in it.

A field is stored through its sine coefficients ``u_hat`` so that

    u(x) = sum_k u_hat[k] * phi_k(x),   phi_k(x) = prod_i sin(k_i x_i),

with the unnormalised basis.  ``phi_k`` vanishes together with its Laplacian
on the boundary, so the Navier conditions hold exactly, and
``-Laplacian phi_k = mu_k phi_k`` with ``mu_k = |k|^2``.
The L2 Gram matrix of the basis is ``(pi/2)^dim`` times the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

from platesim.errors import AliasingError, DimensionMismatchError, InvalidArgumentError

__all__ = [
    "ModalField",
    "PhaseState",
    "CollocationGrid",
    "build_grid",
    "mode_eigenvalues",
    "basis_field",
    "zero_field",
    "dst_forward",
    "dst_inverse",
    "apply_neg_laplacian",
    "apply_biharmonic",
    "l2_inner",
    "norm_half",
    "norm_X0",
    "gram_factor",
]


def gram_factor(dim: int) -> float:
    return (np.pi / 2.0) ** dim


def _check_dim(dim: int) -> None:
    if dim not in (1, 2):
        raise InvalidArgumentError(f"dim must be 1 or 2, got {dim}")


def mode_eigenvalues(N: int, dim: int = 1) -> np.ndarray:
    """Dirichlet-Laplacian eigenvalues, shaped like a coefficient array."""
    _check_dim(dim)
    k = np.arange(1, N + 1, dtype=float)
    if dim == 1:
        return k**2
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    return k1**2 + k2**2


@dataclass(frozen=True, eq=False)
class ModalField:
    """Sine coefficients of a scalar field.

    ``coeffs`` has shape ``(N,)`` in 1D and ``(N, N)`` in 2D; index ``k-1``
    holds mode ``k``.
    """

    coeffs: np.ndarray
    dim: int = 1

    def __post_init__(self):
        _check_dim(self.dim)
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != self.dim:
            raise DimensionMismatchError(
                f"coefficient array has ndim={c.ndim}, expected {self.dim}"
            )
        if c.size == 0 or (self.dim == 2 and c.shape[0] != c.shape[1]):
            raise InvalidArgumentError(f"bad coefficient shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    def flat(self) -> np.ndarray:
        return self.coeffs.ravel()

    @classmethod
    def from_flat(cls, flat, N: int, dim: int = 1) -> "ModalField":
        shape = (N,) * dim
        return cls(np.asarray(flat, dtype=float).reshape(shape), dim)

    def __add__(self, other: "ModalField") -> "ModalField":
        _same_shape(self, other)
        return ModalField(self.coeffs + other.coeffs, self.dim)

    def __sub__(self, other: "ModalField") -> "ModalField":
        _same_shape(self, other)
        return ModalField(self.coeffs - other.coeffs, self.dim)

    def __mul__(self, alpha: float) -> "ModalField":
        return ModalField(alpha * self.coeffs, self.dim)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, ModalField):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.dim, self.coeffs.tobytes()))


def _same_shape(a: ModalField, b: ModalField) -> None:
    if a.dim != b.dim or a.coeffs.shape != b.coeffs.shape:
        raise DimensionMismatchError(
            f"fields differ: dim {a.dim} vs {b.dim}, shape {a.coeffs.shape} vs {b.coeffs.shape}"
        )


def zero_field(N: int, dim: int = 1) -> ModalField:
    return ModalField(np.zeros((N,) * dim), dim)


def basis_field(k, N: int, dim: int = 1) -> ModalField:
    """The unit coefficient vector e_k (``k`` an int in 1D, a pair in 2D)."""
    c = np.zeros((N,) * dim)
    idx = (k,) if dim == 1 else tuple(k)
    if len(idx) != dim or any(not 1 <= i <= N for i in idx):
        raise InvalidArgumentError(f"mode {k} outside 1..{N}")
    c[tuple(i - 1 for i in idx)] = 1.0
    return ModalField(c, dim)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """A point (u, v=u_t) of the energy space, carrying the weight lambda."""

    u: ModalField
    v: ModalField
    lam: float

    def __post_init__(self):
        _same_shape(self.u, self.v)
        if not self.lam > 0:
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam}")

    @property
    def N(self) -> int:
        return self.u.N

    @property
    def dim(self) -> int:
        return self.u.dim

    @classmethod
    def zero(cls, N: int, lam: float, dim: int = 1) -> "PhaseState":
        z = zero_field(N, dim)
        return cls(z, z, lam)

    @classmethod
    def from_flat(cls, u_flat, v_flat, N: int, lam: float, dim: int = 1) -> "PhaseState":
        return cls(ModalField.from_flat(u_flat, N, dim), ModalField.from_flat(v_flat, N, dim), lam)

    def _same_space(self, other: "PhaseState") -> None:
        if self.lam != other.lam:
            raise InvalidArgumentError(f"states carry different lambda: {self.lam} vs {other.lam}")

    def __add__(self, other: "PhaseState") -> "PhaseState":
        self._same_space(other)
        return PhaseState(self.u + other.u, self.v + other.v, self.lam)

    def __sub__(self, other: "PhaseState") -> "PhaseState":
        self._same_space(other)
        return PhaseState(self.u - other.u, self.v - other.v, self.lam)

    def __mul__(self, alpha: float) -> "PhaseState":
        return PhaseState(alpha * self.u, alpha * self.v, self.lam)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return self.lam == other.lam and self.u == other.u and self.v == other.v

    def __hash__(self):
        return hash((self.u, self.v, self.lam))


@dataclass(frozen=True)
class CollocationGrid:
    """Interior nodes x_j = j*pi/(M+1), j = 1..M, tensorised in 2D.

    The composite rule with equal weights pi/(M+1) per axis integrates
    products of sines exactly up to total frequency 2M+1.
    """

    M: int
    dim: int = 1

    def __post_init__(self):
        _check_dim(self.dim)
        if not isinstance(self.M, (int, np.integer)) or self.M < 1:
            raise InvalidArgumentError(f"grid size M must be a positive integer, got {self.M!r}")

    @cached_property
    def nodes(self) -> np.ndarray:
        """Per-axis nodes."""
        return np.arange(1, self.M + 1) * np.pi / (self.M + 1)

    @cached_property
    def points(self) -> np.ndarray:
        """All nodes as an array of shape (npts, dim), C order."""
        if self.dim == 1:
            return self.nodes[:, None]
        x1, x2 = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.dim

    @property
    def npts(self) -> int:
        return self.M**self.dim

    @cached_property
    def weights(self) -> np.ndarray:
        h = np.pi / (self.M + 1)
        return np.full(self.shape, h**self.dim)

    def sine_table(self, N: int) -> np.ndarray:
        """Per-axis table T[j, k-1] = sin(k x_j), shape (M, N)."""
        k = np.arange(1, N + 1)
        return np.sin(np.outer(self.nodes, k))

    def synthesis_matrix(self, N: int) -> np.ndarray:
        """Dense map from flat coefficients to flat grid values."""
        T = self.sine_table(N)
        return T if self.dim == 1 else np.kron(T, T)

    def analysis_matrix(self, N: int) -> np.ndarray:
        """Dense discrete projection from grid values to the first N modes."""
        scale = (2.0 / (self.M + 1)) ** self.dim
        return scale * self.synthesis_matrix(N).T

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.weights))


def build_grid(M: int, dim: int = 1) -> CollocationGrid:
    return CollocationGrid(M, dim)


def dst_forward(values, N: int, *, method: str = "direct") -> ModalField:
    """Discrete sine coefficients of grid samples, truncated to N modes.

    The grid is inferred from the shape of ``values``.  Exact for fields
    that are sine sums with modes up to M.
    """
    vals = np.asarray(values, dtype=float)
    dim = vals.ndim
    _check_dim(dim)
    M = vals.shape[0]
    if dim == 2 and vals.shape[1] != M:
        raise DimensionMismatchError(f"non-square 2D sample array {vals.shape}")
    if N > M:
        raise AliasingError(f"N={N} modes cannot be resolved on M={M} nodes")
    if N < 1:
        raise InvalidArgumentError("N must be >= 1")
    if method == "fft":
        # scipy's DST-I is unnormalised: y_k = 2 sum_n x_n sin(pi (k+1)(n+1)/(M+1))
        c = scipy.fft.dstn(vals, type=1) / (M + 1) ** dim
        c = c[(slice(0, N),) * dim]
    elif method == "direct":
        T = CollocationGrid(M).sine_table(N)
        scale = 2.0 / (M + 1)
        if dim == 1:
            c = scale * (T.T @ vals)
        else:
            c = scale**2 * (T.T @ vals @ T)
    else:
        raise InvalidArgumentError(f"unknown transform method {method!r}")
    return ModalField(c, dim)


def dst_inverse(field: ModalField, grid: CollocationGrid) -> np.ndarray:
    """Values of ``field`` on the grid nodes (shape ``grid.shape``)."""
    if field.dim != grid.dim:
        raise DimensionMismatchError(f"field dim {field.dim} vs grid dim {grid.dim}")
    T = grid.sine_table(field.N)
    if field.dim == 1:
        return T @ field.coeffs
    return T @ field.coeffs @ T.T


def apply_neg_laplacian(field: ModalField) -> ModalField:
    return ModalField(mode_eigenvalues(field.N, field.dim) * field.coeffs, field.dim)


def apply_biharmonic(field: ModalField) -> ModalField:
    return ModalField(mode_eigenvalues(field.N, field.dim) ** 2 * field.coeffs, field.dim)


def l2_inner(a: ModalField, b: ModalField) -> float:
    _same_shape(a, b)
    return gram_factor(a.dim) * float(np.sum(a.coeffs * b.coeffs))


def norm_half(u: ModalField, lam: float) -> float:
    """``[ ||Laplacian u||^2 + lam ||u||^2 ]^(1/2)``."""
    if not lam > 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    mu = mode_eigenvalues(u.N, u.dim)
    return float(np.sqrt(gram_factor(u.dim) * np.sum((mu**2 + lam) * u.coeffs**2)))


def norm_X0(x: PhaseState) -> float:
    nu = norm_half(x.u, x.lam)
    nv2 = l2_inner(x.v, x.v)
    return float(np.sqrt(nu**2 + nv2))
