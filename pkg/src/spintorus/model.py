"""su(n) R-matrix in principal gradation, twists, monodromy and transfer matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import (
    TensorOperator,
    embed,
    max_abs,
    partial_trace,
    partial_transpose,
    permute_sites,
)

ETA_TOL = 1e-12
THETA_TOL = 1e-10


class InvalidModelError(ValueError):
    pass


def omega(n: int) -> complex:
    return complex(np.exp(2j * np.pi / n))


def build_h(n: int) -> TensorOperator:
    return TensorOperator.single(np.diag(omega(n) ** np.arange(n)))


def build_g(n: int) -> TensorOperator:
    """Cyclic shift ``|k> -> |k+1>`` with the single 1 of the first column in the last row."""
    if n < 2:
        raise InvalidModelError("n must be at least 2")
    return TensorOperator.single(np.roll(np.eye(n, dtype=np.complex128), 1, axis=0))


def build_generic_twist(diag: Sequence[complex], power: int, n: int) -> TensorOperator:
    d = np.asarray(diag, dtype=np.complex128)
    if d.shape != (n,):
        raise InvalidModelError(f"twist diagonal must have {n} entries, got {d.shape}")
    if np.any(np.abs(d) < 1e-14):
        raise InvalidModelError("twist diagonal is degenerate (zero entry)")
    if not 0 <= power <= n - 1:
        raise InvalidModelError(f"twist power must lie in [0, {n - 1}], got {power}")
    g = np.linalg.matrix_power(build_g(n).matrix, power)
    return TensorOperator.single(np.diag(d) @ g)


@dataclass(frozen=True)
class Twist:
    diag: tuple[complex, ...]
    power: int

    @classmethod
    def antiperiodic(cls, n: int) -> "Twist":
        return cls(tuple([1.0 + 0j] * n), 1)


@dataclass(frozen=True)
class ModelSpec:
    """One spin-torus instance: site dimension, chain length, eta, inhomogeneities, twist."""

    n: int
    N: int
    eta: complex
    thetas: tuple[complex, ...]
    twist: Twist = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if int(self.n) < 2:
            raise InvalidModelError(f"n must be >= 2, got {self.n}")
        if int(self.N) < 1:
            raise InvalidModelError(f"N must be >= 1, got {self.N}")
        object.__setattr__(self, "eta", complex(self.eta))
        thetas = tuple(complex(t) for t in self.thetas)
        if len(thetas) != self.N:
            raise InvalidModelError(f"expected {self.N} thetas, got {len(thetas)}")
        object.__setattr__(self, "thetas", thetas)
        if abs(np.sinh(self.eta)) < ETA_TOL:
            raise InvalidModelError(f"degenerate crossing parameter eta={self.eta}")
        for j in range(self.N):
            for k in range(j + 1, self.N):
                if abs(thetas[j] - thetas[k]) < THETA_TOL:
                    raise InvalidModelError(
                        f"inhomogeneities collide: theta[{j}] and theta[{k}] = {thetas[j]}"
                    )
        twist = self.twist if self.twist is not None else Twist.antiperiodic(self.n)
        twist = Twist(tuple(complex(x) for x in twist.diag), int(twist.power))
        build_generic_twist(twist.diag, twist.power, self.n)
        object.__setattr__(self, "twist", twist)

    @property
    def twist_matrix(self) -> TensorOperator:
        return build_generic_twist(self.twist.diag, self.twist.power, self.n)

    def with_thetas(self, thetas: Sequence[complex]) -> "ModelSpec":
        return ModelSpec(self.n, self.N, self.eta, tuple(thetas), self.twist)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "eta": [self.eta.real, self.eta.imag],
            "thetas": [[t.real, t.imag] for t in self.thetas],
            "twist": {
                "diag": [[d.real, d.imag] for d in self.twist.diag],
                "power": self.twist.power,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        def cplx(v) -> complex:
            if isinstance(v, (list, tuple)):
                if len(v) != 2:
                    raise InvalidModelError(f"complex value must be [re, im], got {v!r}")
                return complex(float(v[0]), float(v[1]))
            return complex(v)

        try:
            n = int(data["n"])
            N = int(data["N"])
            eta = cplx(data["eta"])
            thetas = tuple(cplx(t) for t in data["thetas"])
        except KeyError as exc:
            raise InvalidModelError(f"missing model field {exc.args[0]!r}") from exc
        tw = data.get("twist")
        twist = None
        if tw is not None:
            twist = Twist(tuple(cplx(d) for d in tw["diag"]), int(tw["power"]))
        return cls(n, N, eta, thetas, twist)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def exchange_weight(n: int, k: int, l: int, u: complex) -> complex:
    """Exponential weight on ``E^{kl} (x) E^{lk}``, k != l (1-based or 0-based alike)."""
    if k < l:
        return np.exp((n - 2 * (l - k)) * u / n)
    return np.exp(-(n - 2 * (k - l)) * u / n)


def r_matrix(n: int, eta: complex, u: complex) -> np.ndarray:
    mat = np.zeros((n * n, n * n), dtype=np.complex128)
    s_eta = np.sinh(eta)
    s_u = np.sinh(u)
    for k in range(n):
        mat[k * n + k, k * n + k] = np.sinh(u + eta)
        for l in range(n):
            if l != k:
                mat[k * n + l, k * n + l] = s_u
                mat[k * n + l, l * n + k] = s_eta * exchange_weight(n, k, l, u)
    return mat


def r_matrix_derivative(n: int, eta: complex, u: complex) -> np.ndarray:
    mat = np.zeros((n * n, n * n), dtype=np.complex128)
    s_eta = np.sinh(eta)
    c_u = np.cosh(u)
    for k in range(n):
        mat[k * n + k, k * n + k] = np.cosh(u + eta)
        for l in range(n):
            if l != k:
                rate = (n - 2 * (l - k)) / n if k < l else -(n - 2 * (k - l)) / n
                mat[k * n + l, k * n + l] = c_u
                mat[k * n + l, l * n + k] = s_eta * rate * np.exp(rate * u)
    return mat


def build_r(spec: ModelSpec, u: complex) -> TensorOperator:
    return TensorOperator((spec.n, spec.n), r_matrix(spec.n, spec.eta, u))


def swap(n: int) -> TensorOperator:
    mat = np.zeros((n * n, n * n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            mat[a * n + b, b * n + a] = 1.0
    return TensorOperator((n, n), mat)


def _r_on(spec: ModelSpec, u: complex, i: int, j: int, total: int) -> TensorOperator:
    return embed(build_r(spec, u), [i, j], total, spec.n)


def check_qybe(spec: ModelSpec, u1: complex, u2: complex, u3: complex) -> float:
    r12 = _r_on(spec, u1 - u2, 0, 1, 3)
    r13 = _r_on(spec, u1 - u3, 0, 2, 3)
    r23 = _r_on(spec, u2 - u3, 1, 2, 3)
    return max_abs(r12 @ r13 @ r23 - r23 @ r13 @ r12)


def check_unitarity(spec: ModelSpec, u: complex) -> float:
    eta = spec.eta
    rho1 = -np.sinh(u + eta) * np.sinh(u - eta)
    r12 = build_r(spec, u)
    r21 = permute_sites(build_r(spec, -u), [1, 0])
    return max_abs(r12 @ r21 - rho1 * TensorOperator.identity(r12.site_dims))


def check_crossing_unitarity(spec: ModelSpec, u: complex) -> float:
    n, eta = spec.n, spec.eta
    rho2 = -np.sinh(u) * np.sinh(u + n * eta)
    lhs = partial_transpose(build_r(spec, u), 0)
    rhs = partial_transpose(permute_sites(build_r(spec, -u - n * eta), [1, 0]), 0)
    return max_abs(lhs @ rhs - rho2 * TensorOperator.identity(lhs.site_dims))


def check_periodicity(spec: ModelSpec, u: complex) -> float:
    n = spec.n
    h = build_h(n).matrix
    hinv = np.linalg.inv(h)
    eye = np.eye(n)
    shifted = r_matrix(n, spec.eta, u + 1j * np.pi)
    base = r_matrix(n, spec.eta, u)
    h1 = np.kron(h, eye)
    h1inv = np.kron(hinv, eye)
    h2 = np.kron(eye, h)
    h2inv = np.kron(eye, hinv)
    res1 = max_abs(shifted + h1 @ base @ h1inv)
    res2 = max_abs(shifted + h2inv @ base @ h2)
    return max(res1, res2)


def check_gauge_invariance(spec: ModelSpec, u: complex, twist: TensorOperator | None = None) -> float:
    G = (twist if twist is not None else spec.twist_matrix).matrix
    GG = np.kron(G, G)
    r = r_matrix(spec.n, spec.eta, u)
    return max_abs(r @ GG - GG @ r)


def check_hg_relation(n: int) -> float:
    h, g = build_h(n).matrix, build_g(n).matrix
    return max_abs(h @ g - omega(n) * g @ h)


def monodromy_matrix(spec: ModelSpec, u: complex) -> np.ndarray:
    """Dense ``T_0(u)`` on aux (x) site_1 (x) ... (x) site_N, auxiliary first.

    Built right to left: ``R_{01}(u-theta_1)`` is applied first.
    """
    n, N = spec.n, spec.N
    dim = n ** (N + 1)
    total = N + 1
    out = np.eye(dim, dtype=np.complex128)
    for j in range(N):
        factor = embed(build_r(spec, u - spec.thetas[j]), [0, j + 1], total, n).matrix
        out = factor @ out
    return out


def build_monodromy(spec: ModelSpec, u: complex) -> TensorOperator:
    return TensorOperator((spec.n,) * (spec.N + 1), monodromy_matrix(spec, u))


def transfer_matrix(spec: ModelSpec, u: complex, twist: np.ndarray | None = None) -> np.ndarray:
    n, N = spec.n, spec.N
    G = spec.twist_matrix.matrix if twist is None else twist
    T = monodromy_matrix(spec, u).reshape(n, n ** N, n, n ** N)
    # tr_0 (G_0 T_0): sum_{a,b} G[a,b] T[b, :, a, :]
    return np.einsum("ab,bjak->jk", G, T)


def build_transfer(spec: ModelSpec, u: complex) -> TensorOperator:
    return TensorOperator((spec.n,) * spec.N, transfer_matrix(spec, u))


def transfer_via_partial_trace(spec: ModelSpec, u: complex) -> TensorOperator:
    """Same operator as :func:`build_transfer`, routed through generic partial trace."""
    G = embed(spec.twist_matrix, [0], spec.N + 1, spec.n)
    return partial_trace(G @ build_monodromy(spec, u), 0)


def check_yang_baxter_algebra(spec: ModelSpec, u: complex, v: complex) -> float:
    """``R_12(u-v) T_1(u) T_2(v) = T_2(v) T_1(u) R_12(u-v)`` on two aux sites + N sites."""
    n, N = spec.n, spec.N
    total = N + 2
    quantum = list(range(2, total))
    T1 = embed(build_monodromy(spec, u), [0] + quantum, total, n)
    T2 = embed(build_monodromy(spec, v), [1] + quantum, total, n)
    R12 = embed(build_r(spec, u - v), [0, 1], total, n)
    return max_abs(R12 @ T1 @ T2 - T2 @ T1 @ R12)


def homogeneous(spec: ModelSpec) -> ModelSpec:
    """Same model at theta_j = 0, bypassing the collision guard."""
    obj = object.__new__(ModelSpec)
    for name, value in (
        ("n", spec.n),
        ("N", spec.N),
        ("eta", spec.eta),
        ("thetas", tuple([0j] * spec.N)),
        ("twist", spec.twist),
    ):
        object.__setattr__(obj, name, value)
    return obj


def local_hamiltonian_density(n: int, eta: complex) -> np.ndarray:
    """``d/du [P R(u)]`` at u = 0, differentiated entry by entry."""
    return swap(n).matrix @ r_matrix_derivative(n, eta, 0.0)


def build_hamiltonian_local(spec: ModelSpec) -> TensorOperator:
    """Sum of nearest-neighbour densities with the twisted closing bond.

    The bond (N, N+1) uses site-(N+1) operators ``G E^{kl} G^{-1}`` on site 1.
    """
    n, N = spec.n, spec.N
    dens = TensorOperator((n, n), local_hamiltonian_density(n, spec.eta))
    if N == 1:
        # single site: the closing bond couples site 1 with its own twisted image
        G = spec.twist_matrix.matrix
        Ginv = np.linalg.inv(G)
        hm = dens.matrix.reshape(n, n, n, n)
        out = np.zeros((n, n), dtype=np.complex128)
        for k in range(n):
            for l in range(n):
                for p in range(n):
                    for q in range(n):
                        coef = hm[k, p, l, q]
                        if coef == 0:
                            continue
                        Ekl = np.zeros((n, n))
                        Ekl[k, l] = 1.0
                        Epq = np.zeros((n, n))
                        Epq[p, q] = 1.0
                        out += coef * Ekl @ (G @ Epq @ Ginv)
        return TensorOperator((n,), out)
    total = N
    H = TensorOperator((n,) * N, np.zeros((n**N, n**N), dtype=np.complex128))
    for j in range(N - 1):
        H = H + embed(dens, [j, j + 1], total, n)
    G1 = embed(spec.twist_matrix, [0], total, n)
    boundary = embed(dens, [N - 1, 0], total, n)
    H = H + G1 @ boundary @ G1.inverse()
    return H


def transfer_matrix_derivative(spec: ModelSpec, u: complex) -> np.ndarray:
    """Exact ``t'(u)`` by the product rule over the monodromy factors."""
    n, N = spec.n, spec.N
    total = N + 1
    facs = [embed(build_r(spec, u - th), [0, j + 1], total, n).matrix for j, th in enumerate(spec.thetas)]
    dfacs = [
        embed(TensorOperator((n, n), r_matrix_derivative(n, spec.eta, u - th)), [0, j + 1], total, n).matrix
        for j, th in enumerate(spec.thetas)
    ]
    dim = n ** total
    dT = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(N):
        prod = np.eye(dim, dtype=np.complex128)
        for j in range(N):
            prod = (dfacs[j] if j == k else facs[j]) @ prod
        dT += prod
    G = spec.twist_matrix.matrix
    return np.einsum("ab,bjak->jk", G, dT.reshape(n, n**N, n, n**N))


def build_hamiltonian_from_transfer(spec: ModelSpec) -> TensorOperator:
    hspec = homogeneous(spec)
    t0 = transfer_matrix(hspec, 0.0)
    dt0 = transfer_matrix_derivative(hspec, 0.0)
    if np.linalg.cond(t0) > 1e12:
        raise np.linalg.LinAlgError("t(0) is singular")
    return TensorOperator((spec.n,) * spec.N, np.sinh(spec.eta) * np.linalg.solve(t0, dt0))


def build_hamiltonian_finite_difference(spec: ModelSpec, step: float = 1e-6) -> TensorOperator:
    """Cross-check route: central difference of ``ln t`` at the homogeneous point."""
    hspec = homogeneous(spec)
    t0 = transfer_matrix(hspec, 0.0)
    dt0 = (transfer_matrix(hspec, step) - transfer_matrix(hspec, -step)) / (2 * step)
    return TensorOperator((spec.n,) * spec.N, np.sinh(spec.eta) * np.linalg.solve(t0, dt0))
