"""Dense tensor-operator algebra on products of equal-dimension sites.

Site ordering is left to right and matches ``numpy.kron``: the multi-index
``(s_0, s_1, ..., s_{L-1})`` maps to the row-major flat index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TensorOperator:
    """Square complex matrix acting on ``prod(site_dims)``-dimensional space."""

    site_dims: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.site_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"invalid site dimensions {self.site_dims!r}")
        mat = np.asarray(self.matrix, dtype=np.complex128)
        side = int(np.prod(dims))
        if mat.shape != (side, side):
            raise ValueError(f"matrix shape {mat.shape} does not match site dims {dims}")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "site_dims", dims)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def identity(cls, site_dims: Sequence[int]) -> "TensorOperator":
        side = int(np.prod(site_dims))
        return cls(tuple(site_dims), np.eye(side, dtype=np.complex128))

    @classmethod
    def single(cls, mat: np.ndarray) -> "TensorOperator":
        mat = np.asarray(mat)
        return cls((mat.shape[0],), mat)

    @property
    def num_sites(self) -> int:
        return len(self.site_dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def _check_compatible(self, other: "TensorOperator") -> None:
        if self.site_dims != other.site_dims:
            raise ValueError(f"site dims differ: {self.site_dims} vs {other.site_dims}")

    def __matmul__(self, other: "TensorOperator") -> "TensorOperator":
        self._check_compatible(other)
        return TensorOperator(self.site_dims, self.matrix @ other.matrix)

    def __add__(self, other: "TensorOperator") -> "TensorOperator":
        self._check_compatible(other)
        return TensorOperator(self.site_dims, self.matrix + other.matrix)

    def __sub__(self, other: "TensorOperator") -> "TensorOperator":
        self._check_compatible(other)
        return TensorOperator(self.site_dims, self.matrix - other.matrix)

    def __neg__(self) -> "TensorOperator":
        return TensorOperator(self.site_dims, -self.matrix)

    def __mul__(self, scalar: complex) -> "TensorOperator":
        return TensorOperator(self.site_dims, complex(scalar) * self.matrix)

    __rmul__ = __mul__

    def dagger(self) -> "TensorOperator":
        return TensorOperator(self.site_dims, self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def inverse(self) -> "TensorOperator":
        return TensorOperator(self.site_dims, np.linalg.inv(self.matrix))

    def __repr__(self) -> str:
        return f"TensorOperator(site_dims={self.site_dims})"


def max_abs(a: TensorOperator | np.ndarray) -> float:
    """Max-entry norm, the residual measure used across the package."""
    mat = a.matrix if isinstance(a, TensorOperator) else np.asarray(a)
    return float(np.max(np.abs(mat))) if mat.size else 0.0


def commutator(a: TensorOperator, b: TensorOperator) -> TensorOperator:
    return a @ b - b @ a


def kron(a: TensorOperator, b: TensorOperator) -> TensorOperator:
    return TensorOperator(a.site_dims + b.site_dims, np.kron(a.matrix, b.matrix))


def kron_all(ops: Sequence[TensorOperator]) -> TensorOperator:
    out = ops[0]
    for op in ops[1:]:
        out = kron(out, op)
    return out


def _check_site(site: int, num_sites: int) -> None:
    if not 0 <= site < num_sites:
        raise IndexError(f"site {site} out of range for {num_sites} sites")


def permute_sites(a: TensorOperator, order: Sequence[int]) -> TensorOperator:
    """Relabel sites so that new site ``k`` is old site ``order[k]``."""
    order = list(order)
    nsites = a.num_sites
    if sorted(order) != list(range(nsites)):
        raise ValueError(f"{order} is not a permutation of {nsites} sites")
    tensor = a.matrix.reshape(a.site_dims + a.site_dims)
    tensor = tensor.transpose(order + [nsites + k for k in order])
    dims = tuple(a.site_dims[k] for k in order)
    side = a.dim
    return TensorOperator(dims, tensor.reshape(side, side))


def embed(
    a: TensorOperator,
    target_sites: Sequence[int],
    total_sites: int,
    site_dim: int,
) -> TensorOperator:
    """Act as ``a`` on ``target_sites`` (in that order) and as identity elsewhere.

    ``a``'s k-th site is placed on ``target_sites[k]``.
    """
    targets = list(target_sites)
    if len(set(targets)) != len(targets):
        raise ValueError(f"target sites must be distinct, got {targets}")
    for s in targets:
        _check_site(s, total_sites)
    if a.num_sites != len(targets):
        raise ValueError(f"operator acts on {a.num_sites} sites, {len(targets)} targets given")
    if any(d != site_dim for d in a.site_dims):
        raise ValueError(f"operator site dims {a.site_dims} differ from site_dim={site_dim}")
    rest = [s for s in range(total_sites) if s not in targets]
    full = kron(a, TensorOperator.identity((site_dim,) * len(rest))) if rest else a
    # full's site k currently sits at position (targets + rest)[k]
    placed = targets + rest
    inverse = [placed.index(s) for s in range(total_sites)]
    return permute_sites(full, inverse)


def partial_trace(a: TensorOperator, site: int) -> TensorOperator:
    if a.num_sites < 2:
        raise ValueError("partial trace needs at least two sites")
    _check_site(site, a.num_sites)
    nsites = a.num_sites
    tensor = a.matrix.reshape(a.site_dims + a.site_dims)
    reduced = np.trace(tensor, axis1=site, axis2=nsites + site)
    dims = a.site_dims[:site] + a.site_dims[site + 1 :]
    side = int(np.prod(dims))
    return TensorOperator(dims, reduced.reshape(side, side))


def partial_transpose(a: TensorOperator, site: int) -> TensorOperator:
    _check_site(site, a.num_sites)
    nsites = a.num_sites
    axes = list(range(2 * nsites))
    axes[site], axes[nsites + site] = axes[nsites + site], axes[site]
    tensor = a.matrix.reshape(a.site_dims + a.site_dims).transpose(axes)
    return TensorOperator(a.site_dims, tensor.reshape(a.dim, a.dim))


def eigendecompose(a: TensorOperator | np.ndarray) -> list[tuple[complex, np.ndarray]]:
    """Right eigenpairs with unit-norm eigenvectors.

    Degenerate clusters are returned as LAPACK delivers them; callers that
    need a simple spectrum check the gaps themselves.
    """
    mat = a.matrix if isinstance(a, TensorOperator) else np.asarray(a, dtype=np.complex128)
    try:
        vals, vecs = np.linalg.eig(mat)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigendecomposition did not converge: {exc}") from exc
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    return [(complex(vals[k]), vecs[:, k]) for k in range(len(vals))]


def column_space_basis(mat: np.ndarray, rank_tolerance: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (as columns) of the numerical column space."""
    u, s, _ = np.linalg.svd(np.asarray(mat, dtype=np.complex128))
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    rank = int(np.sum(s > rank_tolerance * s[0]))
    return u[:, :rank]


def column_space_projector(a: TensorOperator, rank_tolerance: float = 1e-10) -> TensorOperator:
    basis = column_space_basis(a.matrix, rank_tolerance)
    return TensorOperator(a.site_dims, basis @ basis.conj().T)


def subspace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Spectral-norm distance between orthogonal projectors onto span(a), span(b)."""
    qa = column_space_basis(a)
    qb = column_space_basis(b)
    if qa.shape[1] != qb.shape[1]:
        return 1.0
    diff = qa @ qa.conj().T - qb @ qb.conj().T
    return float(np.linalg.norm(diff, 2))
