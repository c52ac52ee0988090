"""Eigenvalue functions of the fused transfer family and the functional-relation solver."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .fusion import TransferFamily, quantum_determinant
from .model import ModelSpec


class DegenerateSpectrumError(RuntimeError):
    pass


def laurent_exponents(n: int, N: int, m: int) -> np.ndarray:
    """Exponents of the Laurent form of the scaled eigenvalue ``e^{(2m/n - 1)u} Lambda_m``.

    For m < n they are mN-1, mN-3, ..., -(mN-1). For m = n the scalar
    Lambda_n itself is expanded, with exponents nN, nN-2, ..., -nN.
    """
    if m == n:
        return np.arange(n * N, -n * N - 1, -2, dtype=float)
    return np.arange(m * N - 1, -m * N, -2, dtype=float)


def laurent_prefactor_rate(n: int, m: int) -> float:
    """Rate r with ``Lambda_m(u) = e^{r u} * sum_k I_k e^{e_k u}``."""
    return 0.0 if m == n else 1.0 - 2.0 * m / n


def laurent_basis(n: int, N: int, m: int, u: complex) -> np.ndarray:
    return np.exp((laurent_prefactor_rate(n, m) + laurent_exponents(n, N, m)) * u)


class SpectrumTable:
    """Shared store of right/left eigenvectors of t(u0) plus a cache of t_m(u).

    One :class:`EigenRecord` per column refers back to this table.
    """

    def __init__(self, family: TransferFamily, right: np.ndarray, left: np.ndarray, u0: complex):
        self.family = family
        self.spec = family.spec
        self.right = right
        self.left = left
        self.u0 = u0
        self._norms = np.einsum("ik,ik->k", left.conj(), right)
        self._cache: dict[tuple[int, complex], np.ndarray] = {}

    def eigenvalues(self, m: int, u: complex) -> np.ndarray:
        """Bi-orthogonal Rayleigh quotients ``w^H t_m(u) v / w^H v`` for every state."""
        key = (m, complex(u))
        if key not in self._cache:
            tm = self.family(m, u)
            self._cache[key] = np.einsum("ik,ij,jk->k", self.left.conj(), tm, self.right) / self._norms
        return self._cache[key]

    def __len__(self) -> int:
        return self.right.shape[1]


@dataclass
class EigenRecord:
    index: int
    table: SpectrumTable = field(repr=False)
    laurent_coeffs: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def eigenvector(self) -> np.ndarray:
        return self.table.right[:, self.index]

    @property
    def left_eigenvector(self) -> np.ndarray:
        return self.table.left[:, self.index]

    def lambda_value(self, m: int, u: complex) -> complex:
        return complex(self.table.eigenvalues(m, u)[self.index])

    def lambda_evaluator(self) -> Callable[[int, complex], complex]:
        return self.lambda_value


def _eig_with_left(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vals, left, right = scipy.linalg.eig(mat, left=True, right=True)
    right = right / np.linalg.norm(right, axis=0, keepdims=True)
    left = left / np.linalg.norm(left, axis=0, keepdims=True)
    return vals, left, right


def min_gap(vals: np.ndarray) -> float:
    diffs = np.abs(vals[:, None] - vals[None, :])
    np.fill_diagonal(diffs, np.inf)
    return float(diffs.min()) if len(vals) > 1 else np.inf


def common_eigenbasis(
    family: TransferFamily,
    u0: complex = 0.31 + 0.17j,
    u_check: complex = -0.43 + 0.29j,
    gap_tol: float = 1e-8,
    retries: int = 5,
    check_tol: float = 1e-7,
) -> list[EigenRecord]:
    """Diagonalize t(u0) and return one record per common eigenstate.

    A degenerate t(u0) triggers retries at perturbed points; each
    eigenvector is cross-checked as an eigenvector of t(u_check).
    """
    rng = np.random.default_rng(7)
    point = complex(u0)
    for attempt in range(retries + 1):
        vals, left, right = _eig_with_left(family(1, point))
        if min_gap(vals) > gap_tol:
            break
        point = complex(u0) + 0.1 * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
    else:
        raise DegenerateSpectrumError(
            f"t(u) kept a degenerate spectrum (min gap {min_gap(vals):.2e}) after {retries} retries near u0={u0}"
        )
    table = SpectrumTable(family, right, left, point)
    t_check = family(1, u_check)
    lam = table.eigenvalues(1, u_check)
    resid = np.linalg.norm(t_check @ right - right * lam[None, :], axis=0)
    scale = max(np.abs(lam).max(), 1.0)
    if resid.max() > check_tol * scale:
        raise DegenerateSpectrumError(f"eigenvectors are not common to t(u0) and t(u_check): {resid.max():.2e}")
    return [EigenRecord(k, table) for k in range(len(vals))]


def fit_laurent(
    record: EigenRecord,
    m: int,
    spec: ModelSpec | None = None,
    offset: float = 0.0,
    exponents: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Laurent coefficients of Lambda_m from samples on a circle in e^{2u}.

    Returns ``(coefficients, held_out_relative_residual)``. Sample points
    ``u_p = offset + i pi (p + 1/4) / K`` put e^{2u} on rotated roots of
    unity; a second, interleaved set is held out.
    """
    spec = spec or record.table.spec
    n, N = spec.n, spec.N
    exps = laurent_exponents(n, N, m) if exponents is None else np.asarray(exponents, dtype=float)
    rate = laurent_prefactor_rate(n, m)
    K = len(exps)
    fit_pts = offset + 1j * np.pi * (np.arange(K) + 0.25) / K
    hold_pts = offset + 1j * np.pi * (np.arange(K) + 0.75) / K

    def design(pts):
        return np.exp(np.outer(pts, exps + rate))

    y_fit = np.array([record.lambda_value(m, u) for u in fit_pts])
    A = design(fit_pts)
    if np.linalg.cond(A) > 1e10:
        raise np.linalg.LinAlgError("ill-conditioned Laurent sample set")
    coeffs = np.linalg.lstsq(A, y_fit, rcond=None)[0]
    y_hold = np.array([record.lambda_value(m, u) for u in hold_pts])
    pred = design(hold_pts) @ coeffs
    resid = float(np.max(np.abs(pred - y_hold)) / max(np.max(np.abs(y_hold)), 1e-300))
    if exponents is None:
        record.laurent_coeffs[m] = coeffs
    return coeffs, resid


def laurent_reconstruct(coeffs: np.ndarray, n: int, N: int, m: int, u: complex) -> complex:
    return complex(laurent_basis(n, N, m, u) @ coeffs)


def quantum_determinant_laurent(spec: ModelSpec) -> np.ndarray:
    """Coefficients of Lambda_n = (-1)^{n-1} Det_q in e^{(nN - 2k)u}, by polynomial expansion.

    Each sinh(u - c) = (e^{u} e^{-c} - e^{-u} e^{c}) / 2 is a degree-1
    polynomial in z = e^{2u} after pulling out e^{-u}.
    """
    poly = np.array([1.0 + 0j])
    for th in spec.thetas:
        shifts = [th - spec.eta] + [th + k * spec.eta for k in range(1, spec.n)]
        for c in shifts:
            poly = np.convolve(poly, np.array([np.exp(-c) / 2, -np.exp(c) / 2]))
    return (-1) ** (spec.n - 1) * poly


@dataclass
class RelationReport:
    index: int
    residuals: dict[str, float] = field(default_factory=dict)

    def max_residual(self, prefix: str = "") -> float:
        vals = [v for k, v in self.residuals.items() if k.startswith(prefix)]
        return max(vals) if vals else 0.0


def _rel(a: complex, b: complex) -> float:
    s = max(abs(a), abs(b))
    return abs(a - b) / s if s > 0 else 0.0


def verify_scalar_relations(record: EigenRecord, spec: ModelSpec | None = None) -> RelationReport:
    """Relative residuals of the eigenvalue functional relations for one state."""
    spec = spec or record.table.spec
    n, N, eta = spec.n, spec.N, spec.eta
    lam = record.lambda_value
    rep = RelationReport(record.index)
    for j, th in enumerate(spec.thetas):
        for m in range(1, n):
            rep.residuals[f"fusion_m{m}_j{j}"] = _rel(lam(1, th) * lam(m, th - eta), lam(m + 1, th))
        for m in range(2, n + 1):
            for k in range(1, m):
                ref = abs(lam(m, th + k * eta + 0.3)) or 1.0
                rep.residuals[f"vanishing_m{m}_k{k}_j{j}"] = abs(lam(m, th + k * eta)) / ref
    for p, u in enumerate((0.23 + 0.41j, -0.37 + 0.12j)):
        rep.residuals[f"top_{p}"] = _rel(lam(n, u), (-1) ** (n - 1) * quantum_determinant(spec, u))
        for m in range(1, n):
            factor = np.exp(-2j * np.pi * m / n) * (-1) ** (N * m)
            rep.residuals[f"periodicity_m{m}_{p}"] = _rel(lam(m, u + 1j * np.pi), factor * lam(m, u))
    return rep


# --- functional-relation system ---------------------------------------------

class FunctionalSystem:
    """Polynomial system for the Laurent coefficients of Lambda_1..Lambda_{n-1}.

    Unknowns: the mN coefficients of each Lambda_m (m < n). Equations: the
    fusion relations at every theta_j with Lambda_n = (-1)^{n-1} Det_q, and
    the vanishing conditions Lambda_m(theta_j + k eta) = 0.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        n, N = spec.n, spec.N
        self.sizes = [m * N for m in range(1, n)]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.num_unknowns = int(self.offsets[-1])
        self.equations: list[tuple] = []
        for j, th in enumerate(spec.thetas):
            for m in range(1, n):
                self.equations.append(("fusion", m, th))
        for j, th in enumerate(spec.thetas):
            for m in range(2, n):
                for k in range(1, m):
                    self.equations.append(("vanish", m, th + k * spec.eta))
        self.num_equations = len(self.equations)
        self._top = {th: (-1) ** (n - 1) * quantum_determinant(spec, th) for th in spec.thetas}

    def block(self, x: np.ndarray, m: int) -> np.ndarray:
        return x[self.offsets[m - 1] : self.offsets[m]]

    def basis(self, m: int, u: complex) -> np.ndarray:
        return laurent_basis(self.spec.n, self.spec.N, m, u)

    def lam(self, x: np.ndarray, m: int, u: complex) -> complex:
        if m == self.spec.n:
            return (-1) ** (self.spec.n - 1) * quantum_determinant(self.spec, u)
        return complex(self.basis(m, u) @ self.block(x, m))

    def residual(self, x: np.ndarray) -> np.ndarray:
        eta = self.spec.eta
        out = np.empty(self.num_equations, dtype=complex)
        for r, (kind, m, pt) in enumerate(self.equations):
            if kind == "fusion":
                out[r] = self.lam(x, 1, pt) * self.lam(x, m, pt - eta) - self.lam(x, m + 1, pt)
            else:
                out[r] = self.lam(x, m, pt)
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        n, eta = self.spec.n, self.spec.eta
        J = np.zeros((self.num_equations, self.num_unknowns), dtype=complex)
        for r, (kind, m, pt) in enumerate(self.equations):
            if kind == "fusion":
                sl1 = slice(self.offsets[0], self.offsets[1])
                J[r, sl1] += self.basis(1, pt) * self.lam(x, m, pt - eta)
                slm = slice(self.offsets[m - 1], self.offsets[m])
                J[r, slm] += self.lam(x, 1, pt) * self.basis(m, pt - eta)
                if m + 1 < n:
                    J[r, self.offsets[m] : self.offsets[m + 1]] -= self.basis(m + 1, pt)
            else:
                J[r, self.offsets[m - 1] : self.offsets[m]] = self.basis(m, pt)
        return J

    def split(self, x: np.ndarray) -> dict[int, np.ndarray]:
        return {m: self.block(x, m).copy() for m in range(1, self.spec.n)}


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    reason: str = ""


def damped_newton(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-12,
    step_tol: float = 1e-14,
    max_halvings: int = 30,
    stall_window: int | None = None,
) -> NewtonResult:
    """Newton's method with backtracking on the residual norm.

    Converges when the max residual drops below ``tol`` or the step falls
    below ``step_tol`` relative to |x|. With ``stall_window`` set, a run
    whose residual has not halved over that many iterations is abandoned.
    """
    x = np.asarray(x0, dtype=complex).copy()
    f = fun(x)
    norm = float(np.max(np.abs(f)))
    history = [norm]
    for it in range(1, max_iter + 1):
        if stall_window and len(history) > stall_window and norm > 0.5 * history[-stall_window - 1]:
            return NewtonResult(x, norm, it, False, "stalled")
        if not np.isfinite(norm):
            return NewtonResult(x, norm, it, False, "non-finite residual")
        if norm < tol:
            return NewtonResult(x, norm, it, True, "residual")
        try:
            step = np.linalg.lstsq(jac(x), -f, rcond=None)[0]
        except np.linalg.LinAlgError:
            return NewtonResult(x, norm, it, False, "singular jacobian")
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = x + lam * step
            f_trial = fun(trial)
            n_trial = float(np.max(np.abs(f_trial)))
            if np.isfinite(n_trial) and n_trial < norm:
                break
            lam /= 2
        else:
            return NewtonResult(x, norm, it, norm < tol, "line search failed")
        x, f, norm = trial, f_trial, n_trial
        history.append(norm)
        if np.max(np.abs(lam * step)) < step_tol * max(1.0, float(np.max(np.abs(x)))):
            return NewtonResult(x, norm, it, norm < tol * 100, "step")
    return NewtonResult(x, norm, max_iter, norm < tol, "max iterations")


@dataclass
class FunctionalSolution:
    coefficients: dict[int, np.ndarray]
    residual: float
    seed_index: int

    def vector(self) -> np.ndarray:
        return np.concatenate([self.coefficients[m] for m in sorted(self.coefficients)])


@dataclass
class FunctionalSolveReport:
    solutions: list[FunctionalSolution]
    starts: int
    converged_starts: int
    failures: dict[str, int]
    seed: int
    excess: bool

    def to_dict(self) -> dict:
        return {
            "num_solutions": len(self.solutions),
            "starts": self.starts,
            "converged_starts": self.converged_starts,
            "failures": self.failures,
            "seed": self.seed,
            "exceeds_state_count": self.excess,
            "solutions": [
                {
                    "coefficients": {str(m): [[c.real, c.imag] for c in v] for m, v in s.coefficients.items()},
                    "residual": s.residual,
                }
                for s in self.solutions
            ],
        }


def _same_solution(a: np.ndarray, b: np.ndarray, rtol: float) -> bool:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return bool(np.max(np.abs(a - b)) <= rtol * scale)


def solve_functional_system(
    spec: ModelSpec,
    seeds: Sequence[np.ndarray] | None = None,
    num_starts: int | None = None,
    seed: int = 0,
    accept_tol: float = 1e-10,
    dedup_rtol: float = 1e-7,
    seed_scale: float = 2.0,
) -> FunctionalSolveReport:
    """Multi-start damped Newton on the functional-relation system.

    ``seeds`` are explicit starting vectors (e.g. diagonalization
    coefficients); otherwise ``num_starts`` random complex starts are drawn
    from a fixed-seed generator, default ``200 * n**N``.
    """
    system = FunctionalSystem(spec)
    rng = np.random.default_rng(seed)
    if seeds is None:
        count = num_starts if num_starts is not None else 200 * spec.n**spec.N
        seeds = [
            seed_scale * (rng.standard_normal(system.num_unknowns) + 1j * rng.standard_normal(system.num_unknowns))
            for _ in range(count)
        ]
    found: list[FunctionalSolution] = []
    failures: dict[str, int] = {}
    converged = 0
    for k, x0 in enumerate(seeds):
        res = damped_newton(system.residual, system.jacobian, np.asarray(x0, dtype=complex))
        final = float(np.max(np.abs(system.residual(res.x))))
        if not (np.isfinite(final) and final < accept_tol):
            failures[res.reason] = failures.get(res.reason, 0) + 1
            continue
        converged += 1
        if any(_same_solution(res.x, s.vector(), dedup_rtol) for s in found):
            continue
        found.append(FunctionalSolution(system.split(res.x), final, k))
    return FunctionalSolveReport(found, len(seeds), converged, failures, seed, len(found) > spec.n**spec.N)


def record_coefficient_vector(record: EigenRecord) -> np.ndarray:
    n = record.table.spec.n
    parts = []
    for m in range(1, n):
        if m not in record.laurent_coeffs:
            fit_laurent(record, m)
        parts.append(record.laurent_coeffs[m])
    return np.concatenate(parts)


def match_solutions(solutions: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> dict:
    """Nearest-target matching with relative distances; reports bijectivity."""
    dist = np.array(
        [[np.max(np.abs(s - t)) / max(np.max(np.abs(t)), 1e-300) for t in targets] for s in solutions]
    )
    nearest = dist.argmin(axis=1) if len(solutions) else np.array([], dtype=int)
    best = dist.min(axis=1) if len(solutions) else np.array([])
    second = np.sort(dist, axis=1)[:, 1] if len(targets) > 1 and len(solutions) else np.full(len(solutions), np.inf)
    return {
        "nearest": nearest.tolist(),
        "best": best.tolist(),
        "second": second.tolist(),
        "bijective": len(set(nearest.tolist())) == len(targets) == len(solutions),
    }


def export_records(records: Sequence[EigenRecord]) -> str:
    out = []
    for rec in records:
        rep = verify_scalar_relations(rec)
        for m, coeffs in sorted(rec.laurent_coeffs.items()):
            out.append(
                {
                    "index": rec.index,
                    "m": m,
                    "coefficients": [[c.real, c.imag] for c in coeffs],
                    "residuals": {"max_relation": rep.max_residual()},
                }
            )
    return json.dumps(out, indent=2)


def spectrum_csv_rows(records: Sequence[EigenRecord], us: Sequence[complex], ms: Sequence[int]) -> list[list]:
    rows = []
    for rec in records:
        for m in ms:
            for u in us:
                val = rec.lambda_value(m, u)
                rows.append([rec.index, m, complex(u).real, complex(u).imag, val.real, val.imag])
    return rows
