"""q-antisymmetric fusion: projectors, fused transfer matrices, quantum determinant."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .linalg import (
    TensorOperator,
    column_space_basis,
    embed,
    kron_all,
    max_abs,
    permute_sites,
)
from .model import ModelSpec, build_r, monodromy_matrix, transfer_matrix


class FusionRankError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FusedProjector:
    order: int
    operator: TensorOperator
    rank: int
    basis: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix


def degenerate_product(spec: ModelSpec, m: int) -> TensorOperator:
    """``prod_{i<j} R_ij(-(j-i) eta)`` over m sites, factors in lexicographic (i, j) order."""
    n = spec.n
    out = TensorOperator.identity((n,) * m)
    for i, j in itertools.combinations(range(m), 2):
        out = out @ embed(build_r(spec, -(j - i) * spec.eta), [i, j], m, n)
    return out


def reverse_sites(op: TensorOperator) -> TensorOperator:
    return permute_sites(op, list(range(op.num_sites))[::-1])


def _projector_from(op: TensorOperator, m: int, n: int, rank_tolerance: float) -> FusedProjector:
    basis = column_space_basis(op.matrix, rank_tolerance)
    rank = basis.shape[1]
    expected = comb(n, m)
    if rank != expected:
        raise FusionRankError(
            f"degenerate product for m={m}, n={n} has rank {rank}, expected {expected}"
        )
    proj = TensorOperator(op.site_dims, basis @ basis.conj().T)
    return FusedProjector(m, proj, rank, basis)


def build_projector(spec: ModelSpec, m: int, reversed_order: bool = False, rank_tolerance: float = 1e-8) -> FusedProjector:
    """Orthogonal projector onto the column space of the degenerate R-product.

    ``reversed_order=True`` gives the projector on sites ``m, ..., 1`` (the
    one entering the fused transfer matrices).
    """
    if not 2 <= m <= spec.n:
        raise ValueError(f"fusion order must satisfy 2 <= m <= n, got m={m}")
    op = degenerate_product(spec, m)
    if reversed_order:
        op = reverse_sites(op)
    return _projector_from(op, m, spec.n, rank_tolerance)


def su3_printed_vectors(eta: complex) -> tuple[np.ndarray, np.ndarray]:
    """Normalized two-site vectors (columns) and the three-site vector for su(3)."""
    q = np.exp(-eta / 3)

    def ket(*idx: int) -> np.ndarray:
        v = np.zeros(3 ** len(idx), dtype=np.complex128)
        flat = 0
        for i in idx:
            flat = flat * 3 + (i - 1)
        v[flat] = 1.0
        return v

    norm_minus = 1.0 / np.sqrt(2 * np.exp(-eta / 3) * np.cosh(eta / 3))
    norm_plus = 1.0 / np.sqrt(2 * np.exp(eta / 3) * np.cosh(eta / 3))
    phi1 = norm_minus * (ket(1, 2) - q * ket(2, 1))
    phi2 = norm_plus * (ket(1, 3) - (1 / q) * ket(3, 1))
    phi3 = norm_minus * (ket(2, 3) - q * ket(3, 2))
    phi123 = (
        ket(1, 2, 3) - q * ket(1, 3, 2) - q * ket(2, 1, 3) + ket(2, 3, 1) + ket(3, 1, 2) - q * ket(3, 2, 1)
    ) / np.sqrt(6 * np.exp(-eta / 3) * np.cosh(eta / 3))
    return np.stack([phi1, phi2, phi3], axis=1), phi123


def build_su3_projector_oracle(eta: complex) -> tuple[FusedProjector, FusedProjector]:
    """Projectors assembled as ``sum |Phi><Phi|`` from the closed-form su(3) vectors.

    The bra is the plain transpose, which is what the printed normalization
    matches; for real eta this coincides with the orthogonal projector.
    """
    vecs2, vec3 = su3_printed_vectors(eta)
    p2 = vecs2 @ vecs2.T
    p3 = np.outer(vec3, vec3)
    return (
        FusedProjector(2, TensorOperator((3, 3), p2), 3, vecs2),
        FusedProjector(3, TensorOperator((3, 3, 3), p3), 1, vec3[:, None]),
    )


def quantum_determinant(spec: ModelSpec, u: complex) -> complex:
    out = 1.0 + 0j
    for th in spec.thetas:
        out *= np.sinh(u - th + spec.eta)
        for k in range(1, spec.n):
            out *= np.sinh(u - th - k * spec.eta)
    return complex(out)


class TransferFamily:
    """Evaluator for the fused transfer matrices ``t_1 .. t_n`` of one model.

    Projectors are computed once per fusion order and reused.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self._projectors: dict[int, FusedProjector] = {}

    def projector(self, m: int) -> FusedProjector:
        if m not in self._projectors:
            self._projectors[m] = build_projector(self.spec, m, reversed_order=True)
        return self._projectors[m]

    def __call__(self, m: int, u: complex) -> np.ndarray:
        return fused_transfer_matrix(self.spec, m, u, self)

    def operator(self, m: int, u: complex) -> TensorOperator:
        return TensorOperator((self.spec.n,) * self.spec.N, self(m, u))


def fused_transfer_matrix(spec: ModelSpec, m: int, u: complex, family: TransferFamily | None = None) -> np.ndarray:
    """``t_m(u) = tr_{1..m}{ P g_1..g_m P  P T_1(u) T_2(u-eta)..T_m(u-(m-1)eta) P }``.

    Evaluated in the rank-r range of the projector P, so the auxiliary
    space never has to be formed densely.
    """
    n, N = spec.n, spec.N
    if not 1 <= m <= n:
        raise ValueError(f"fusion order must satisfy 1 <= m <= n, got m={m}")
    if m == 1:
        return transfer_matrix(spec, u)
    if family is None:
        family = TransferFamily(spec)
    V = family.projector(m).basis
    r = V.shape[1]
    D = n**N
    G = spec.twist_matrix.matrix
    GG = kron_all([TensorOperator.single(G)] * m).matrix
    Gp = V.conj().T @ GG @ V

    # Y[j_1..j_m, c, x, z]: operator-valued columns of (T_1..T_m) V
    Y = np.einsum("jc,xz->jcxz", V, np.eye(D)).reshape((n,) * m + (r, D, D))
    for a in range(m - 1, -1, -1):
        T = monodromy_matrix(spec, u - a * spec.eta).reshape(n, D, n, D)
        Y = np.moveaxis(Y, a, 0)
        Y = np.einsum("ixjy,j...yz->i...xz", T, Y)
        Y = np.moveaxis(Y, 0, a)
    Y = Y.reshape(n**m, r, D, D)
    M = np.einsum("jd,jcxz->dcxz", V.conj(), Y)
    return np.einsum("cd,dcxz->xz", Gp, M)


def build_fused_transfer(spec: ModelSpec, m: int, u: complex) -> TensorOperator:
    return TensorOperator((spec.n,) * spec.N, fused_transfer_matrix(spec, m, u))


def fused_transfer_dense(spec: ModelSpec, m: int, u: complex) -> np.ndarray:
    """Reference route through full auxiliary (x) quantum matrices; small sizes only."""
    n, N = spec.n, spec.N
    total = m + N
    quantum = list(range(m, total))
    P = build_projector(spec, m, reversed_order=True).operator if m > 1 else None
    prod = TensorOperator.identity((n,) * total)
    for a in range(m):
        Ta = TensorOperator((n,) * (N + 1), monodromy_matrix(spec, u - a * spec.eta))
        prod = prod @ embed(Ta, [a] + quantum, total, n)
    G = kron_all([spec.twist_matrix] * m)
    if P is not None:
        Pe = embed(P, list(range(m)), total, n)
        G = P @ G @ P
        prod = Pe @ prod @ Pe
    full = embed(G, list(range(m)), total, n) @ prod
    mat = full.matrix.reshape(n**m, n**N, n**m, n**N)
    return np.einsum("ajak->jk", mat)


@dataclass
class LadderReport:
    n: int
    N: int
    entries: list[dict] = field(default_factory=list)

    def add(self, identity: str, point: complex, residual: float, scale: float) -> None:
        self.entries.append(
            {
                "identity": identity,
                "point": [point.real, point.imag],
                "residual": residual,
                "scale": scale,
                "relative": residual / scale if scale > 0 else residual,
            }
        )

    def max_relative(self, identity: str | None = None) -> float:
        vals = [e["relative"] for e in self.entries if identity is None or e["identity"] == identity]
        return max(vals) if vals else 0.0

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "N": self.N, "entries": self.entries}, indent=2)


def _scale(*mats: np.ndarray) -> float:
    return max(max_abs(m) for m in mats) or 1.0


def verify_fusion_ladder(spec: ModelSpec, family: TransferFamily | None = None) -> LadderReport:
    """Operator-level fusion relations at the inhomogeneities.

    Relative residuals are normalised by the largest entry of the operators
    entering each identity.
    """
    n, eta = spec.n, spec.eta
    family = family or TransferFamily(spec)
    report = LadderReport(spec.n, spec.N)
    for th in spec.thetas:
        t_th = family(1, th)
        for m in range(1, n):
            lower = family(m, th - eta)
            upper = family(m + 1, th)
            lhs = t_th @ lower
            report.add(f"fusion_m{m}", complex(th), max_abs(lhs - upper), _scale(lhs, upper))
        for m in range(2, n + 1):
            for k in range(1, m):
                val = family(m, th + k * eta)
                ref = _scale(family(m, th + k * eta + 0.37))
                report.add(f"vanishing_m{m}_k{k}", complex(th + k * eta), max_abs(val), ref)
        det = (-1) ** (n - 1) * quantum_determinant(spec, th)
        prod = t_th @ family(n - 1, th - eta)
        ident = det * np.eye(prod.shape[0])
        report.add("quantum_determinant", complex(th), max_abs(prod - ident), _scale(prod, ident))
    return report


def check_top_fusion_scalar(spec: ModelSpec, u: complex, family: TransferFamily | None = None) -> float:
    """Entry-wise deviation of ``t_n(u)`` from ``(-1)^(n-1) Det_q T(u) * id``, relative."""
    family = family or TransferFamily(spec)
    tn = family(spec.n, u)
    target = (-1) ** (spec.n - 1) * quantum_determinant(spec, u)
    return max_abs(tn - target * np.eye(tn.shape[0])) / max(abs(target), 1e-300)
