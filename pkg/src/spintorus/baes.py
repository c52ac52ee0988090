"""Bethe-ansatz equations of the inhomogeneous T-Q relations and their Newton solver."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fusion import TransferFamily
from .model import ModelSpec, omega
from .spectrum import common_eigenbasis, damped_newton
from .tq import (
    TQAnsatz,
    TQEvaluator,
    a_function,
    d_function,
    f_function,
    ni_counts,
    q_function,
    z_phase,
)

ASYMPTOTIC_RE = 25.0
ASYMPTOTIC_IM = 0.3


class RootCollisionError(ValueError):
    pass


def _check_distinct(ans: TQAnsatz, tol: float = 1e-8) -> None:
    for color, roots in enumerate(ans.roots, start=1):
        for a in range(len(roots)):
            for b in range(a + 1, len(roots)):
                if abs(roots[a] - roots[b]) < tol:
                    raise RootCollisionError(
                        f"roots {a} and {b} of color {color} collide: {roots[a]} vs {roots[b]}"
                    )


def analyticity_residual(ans: TQAnsatz, color: int, lam: complex) -> complex:
    """Two-term pole-cancellation condition of Lambda_1 at a root of ``color``."""
    n, eta = ans.n, ans.eta
    q = lambda i, u: q_function(ans, i, u)  # noqa: E731
    a, d = a_function(ans, lam), d_function(ans, lam)
    if color == 2:
        return (
            z_phase(ans, 1) * np.exp(lam) * q(1, lam - eta)
            + d * q(3, lam - eta) * f_function(ans, 1, lam) / q(1, lam)
        )
    if color % 2 == 0:
        i = color // 2
        z = z_phase(ans, i) * omega(n) ** (i - 1) * np.exp(-lam - 2 * (i - 1) * eta / n)
        return z * q(2 * i - 1, lam - eta) / q(2 * i - 3, lam) + a * q(2 * i + 1, lam - eta) * f_function(
            ans, i, lam
        ) / q(2 * i - 1, lam)
    i = (color + 1) // 2
    z = z_phase(ans, i + 1) * omega(n) ** i * np.exp(-lam - 2 * i * eta / n)
    return z * q(2 * i, lam + eta) / q(2 * i + 2, lam) + a * q(2 * i - 2, lam + eta) * f_function(
        ans, i, lam
    ) / q(2 * i, lam)


def analyticity_normalizer(ans: TQAnsatz, color: int, j: int) -> complex:
    """Factor relating the residue of Lambda_1 at root j of ``color`` to its two-term residual."""
    n, eta = ans.n, ans.eta
    lam = ans.roots[color - 1][j]
    others = [x for k, x in enumerate(ans.roots[color - 1]) if k != j]
    base = np.exp((1 - 2 / n) * lam) / np.prod([np.sinh(lam - x) for x in others])
    if color == 2:
        return base * a_function(ans, lam)
    d = d_function(ans, lam)
    if color % 2 == 0:
        return base * d * q_function(ans, color - 2, lam + eta)
    return base * d * q_function(ans, color + 2, lam - eta)


def analyticity_residuals(ans: TQAnsatz) -> list[complex]:
    """One residual per Bethe root, colors in order 1..2n-2."""
    _check_distinct(ans)
    out = []
    for color, roots in enumerate(ans.roots, start=1):
        for lam in roots:
            out.append(complex(analyticity_residual(ans, color, lam)))
    return out


def residues_of_lambda(ans: TQAnsatz) -> list[complex]:
    """Residues of the factored Lambda_1 at each root, read off the term representation."""
    terms = TQEvaluator(ans).terms(1)
    return [terms.residue_factor(lam) for roots in ans.roots for lam in roots]


def asymptotic_labels(n: int) -> list[tuple[int, int]]:
    return [(m, s) for m in range(1, n) for s in (1, -1)]


def _scaled_exponent(ans: TQAnsatz, m: int, sign: int) -> float:
    return sign * (m * ans.N + 1) + (1 - 2 * m / ans.n)


def asymptotic_residuals(ans: TQAnsatz, method: str = "exact") -> list[complex]:
    """``F_m^(+-)`` for m = 1..n-1, ordered (1,+), (1,-), (2,+), ...

    ``method="exact"`` reads the coefficient from the dominant parts of the
    factored terms; ``method="sampled"`` evaluates the rescaled Lambda_m at
    Re u = +-25 in log space.
    """
    ev = TQEvaluator(ans)
    out = []
    for m, s in asymptotic_labels(ans.n):
        exponent = _scaled_exponent(ans, m, s)
        terms = ev.terms(m)
        if method == "exact":
            out.append(terms.asymptotic_coefficient(s, exponent))
        elif method == "sampled":
            out.append(terms.scaled_evaluate(s * ASYMPTOTIC_RE + 1j * ASYMPTOTIC_IM, exponent))
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def su3_closed_forms(ans: TQAnsatz) -> dict[str, complex]:
    """The four printed su(3) asymptotic conditions in terms of Theta and the chi sums."""
    if ans.n != 3:
        raise ValueError("closed forms exist only for n = 3")
    N, eta = ans.N, ans.eta
    w = omega(3)
    E = np.exp
    th = sum(ans.thetas)
    c1, c2, c3, c4 = (sum(r) for r in ans.roots)
    p = ans.phis[0]
    f1p = ans.f_plus_1
    f1m, f2m = ans.f_minus
    return {
        "bae5": E(p) * E(-th - c1 + c2) + E(-2 * th + c1 + c2 - c3) * f1p,
        "bae6": w * E(-p) * E(-2 * eta / 3 + th - c1 + c2 + c3 - c4)
        + w**2 * E(-4 * eta / 3 + th - c3 + c4 - N * eta)
        + E(2 * th - N * eta) * (E(-c1 - c2 + c3 + N * eta) * f1m + E(c2 - c3 - c4 - N * eta) * f2m),
        "bae7": w * E(-th - c3 + c4)
        + w**2 * E(p) * E(-2 * eta / 3 - th - c1 + c2 + c3 - c4 + N * eta)
        + E(-2 * th + N * eta)
        * (w**2 * E(-2 * eta / 3 + c1 + c2 - c4) * f1p + E(p) * E(2 * eta / 3 - c1 + c3 + c4 + N * eta) * f2m),
        "bae8": E(-p) * E(-4 * eta / 3 + th - c1 + c2 - N * eta)
        + w**2 * E(-2 * eta / 3 + 2 * th - c1 - c2 + c4 - N * eta) * f1m,
    }


# constant each closed form is solved for when establishing the pairing
_SU3_SOLVE_FOR = {"bae5": "f_plus_1", "bae6": "f_minus_1", "bae7": "f_minus_2", "bae8": "f_minus_1"}


def _set_constant(ans: TQAnsatz, name: str, value: complex) -> TQAnsatz:
    if name == "f_plus_1":
        return ans.replace(f_plus_1=value)
    k = int(name.rsplit("_", 1)[1]) - 1
    fm = list(ans.f_minus)
    fm[k] = value
    return ans.replace(f_minus=tuple(fm))


def impose_su3_closed_form(ans: TQAnsatz, label: str, name: str | None = None) -> TQAnsatz:
    """Solve one closed form (affine in the chosen constant) for that constant."""
    name = name or _SU3_SOLVE_FOR[label]
    v0 = su3_closed_forms(_set_constant(ans, name, 0.0))[label]
    v1 = su3_closed_forms(_set_constant(ans, name, 1.0))[label]
    return _set_constant(ans, name, -v0 / (v1 - v0))


def impose_all_su3_closed_forms(ans: TQAnsatz) -> TQAnsatz:
    """Solve the four closed forms jointly for f1+, f1-, f2- and phi1.

    At fixed phi1 the forms bae5, bae8, bae6 fix f1+, f1-, f2- in turn;
    after that elimination bae7 is affine in e^{phi1}, so two evaluations
    locate its root exactly.
    """

    def eliminate(p: complex) -> TQAnsatz:
        out = ans.replace(phis=(np.log(p),))
        for label, name in (("bae5", "f_plus_1"), ("bae8", "f_minus_1"), ("bae6", "f_minus_2")):
            out = impose_su3_closed_form(out, label, name)
        return out

    g1 = su3_closed_forms(eliminate(1.0))["bae7"]
    g2 = su3_closed_forms(eliminate(2.0))["bae7"]
    root = 1.0 - g1 / (g2 - g1)
    return eliminate(root)


def su3_pairing(ans: TQAnsatz, tol: float = 1e-7) -> dict[str, dict]:
    """Match each printed closed form to the coefficient F_m^(+-) it annihilates.

    For every form, its constant is solved so the form vanishes; the
    sampled coefficients are recomputed and the one that drops below
    ``tol`` relative to its original size is the partner.
    """
    labels = asymptotic_labels(3)
    before = np.abs(asymptotic_residuals(ans, "sampled"))
    out = {}
    for label in ("bae5", "bae6", "bae7", "bae8"):
        imposed = impose_su3_closed_form(ans, label)
        after = np.abs(asymptotic_residuals(imposed, "sampled")) / np.maximum(before, 1e-300)
        k = int(np.argmin(after))
        out[label] = {"m": labels[k][0], "sign": labels[k][1], "relative": float(after[k]), "ok": bool(after[k] < tol)}
    return out


# --- stacked system -----------------------------------------------------------

@dataclass
class BAEResidual:
    analyticity_residuals: list[complex]
    asymptotic_residuals: list[complex]

    def stacked(self) -> np.ndarray:
        return np.array(self.analyticity_residuals + self.asymptotic_residuals, dtype=complex)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.stacked())))


def unknown_count(n: int, N: int) -> int:
    return sum(ni_counts(n, N)) + 1 + (n - 1) + (n - 2)


def pack(ans: TQAnsatz) -> np.ndarray:
    parts = [x for r in ans.roots for x in r] + [ans.f_plus_1] + list(ans.f_minus) + list(ans.phis)
    return np.array(parts, dtype=complex)


def unpack(template: TQAnsatz, x: np.ndarray) -> TQAnsatz:
    counts = [len(r) for r in template.roots]
    pos = 0
    roots = []
    for c in counts:
        roots.append(tuple(x[pos : pos + c]))
        pos += c
    n = template.n
    f1p = x[pos]
    fm = tuple(x[pos + 1 : pos + n])
    phis = tuple(x[pos + n : pos + 2 * n - 2])
    return template.replace(roots=tuple(roots), f_plus_1=f1p, f_minus=fm, phis=phis)


def bae_residual(ans: TQAnsatz) -> BAEResidual:
    res = BAEResidual(analyticity_residuals(ans), asymptotic_residuals(ans, "exact"))
    dim = len(res.analyticity_residuals) + len(res.asymptotic_residuals)
    want = unknown_count(ans.n, ans.N)
    assert dim == want, f"BAE system has {dim} equations for {want} unknowns"
    return res


class BAESystem:
    def __init__(self, spec: ModelSpec):
        self.spec = spec
        counts = ni_counts(spec.n, spec.N)
        zero = [tuple([0j] * c) for c in counts]
        self.template = TQAnsatz.for_spec(spec, zero, 0, [0] * (spec.n - 1), [0] * (spec.n - 2))
        self.size = unknown_count(spec.n, spec.N)

    def residual(self, x: np.ndarray) -> np.ndarray:
        try:
            return bae_residual(unpack(self.template, x)).stacked()
        except (RootCollisionError, ZeroDivisionError, FloatingPointError):
            return np.full(self.size, np.nan + 0j)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Central complex finite differences; every residual is holomorphic in x."""
        J = np.empty((self.size, self.size), dtype=complex)
        for k in range(self.size):
            h = 1e-6 * (1 + abs(x[k]))
            e = np.zeros(self.size, dtype=complex)
            e[k] = h
            J[:, k] = (self.residual(x + e) - self.residual(x - e)) / (2 * h)
        return J


# --- certification and solving ------------------------------------------------

CERT_POINTS = tuple(0.13 * k - 0.6 + 1j * (0.09 * k + 0.05) for k in range(10))


@dataclass
class SpectrumOracle:
    """Eigenvalues of t(u) for every diagonalized state at the certification points."""

    points: tuple[complex, ...]
    values: np.ndarray  # (num_states, num_points)

    @classmethod
    def from_spec(cls, spec: ModelSpec, points: Sequence[complex] = CERT_POINTS) -> "SpectrumOracle":
        recs = common_eigenbasis(TransferFamily(spec))
        table = recs[0].table
        vals = np.array([table.eigenvalues(1, u) for u in points]).T
        return cls(tuple(points), vals)

    def match(self, ans: TQAnsatz) -> tuple[int, float]:
        ev = TQEvaluator(ans)
        lam = np.array([ev(1, u) for u in self.points])
        if not np.all(np.isfinite(lam)):
            return -1, np.inf
        rel = np.max(np.abs(self.values - lam[None, :]) / np.abs(self.values), axis=1)
        k = int(np.argmin(rel))
        return k, float(rel[k])


@dataclass
class Certificate:
    matched_eigenstate_index: int
    max_rel_error: float
    residual_norm: float
    seed: int


@dataclass
class CertifiedSolution:
    ansatz: TQAnsatz
    certification: Certificate

    def to_dict(self) -> dict:
        data = self.ansatz.to_dict()
        data["certification"] = vars(self.certification).copy()
        return data


@dataclass
class BAESolveReport:
    solutions: list[CertifiedSolution]
    starts: int
    converged: int
    uncertified: int
    failures: dict[str, int]
    state_tally: dict[int, int]
    num_states: int
    seed: int
    elapsed: float
    diagnostics: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "num_certified": len(self.solutions),
            "starts": self.starts,
            "converged": self.converged,
            "uncertified": self.uncertified,
            "failures": self.failures,
            "state_tally": {str(k): v for k, v in self.state_tally.items()},
            "num_states": self.num_states,
            "seed": self.seed,
            "elapsed_s": self.elapsed,
            "solutions": [s.to_dict() for s in self.solutions],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def fingerprint(ans: TQAnsatz, points: Sequence[complex]) -> np.ndarray:
    ev = TQEvaluator(ans)
    return np.array([ev(m, u) for m in range(1, ans.n) for u in points])


def _equivalent(a: np.ndarray, b: np.ndarray, rtol: float = 1e-8) -> bool:
    return bool(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)) < rtol)


def solve_bae(
    spec: ModelSpec,
    seeds: Sequence[np.ndarray] | None = None,
    budget: int = 1000,
    seed: int = 0,
    residual_tol: float = 1e-10,
    cert_tol: float = 1e-6,
    stop_when_complete: bool = True,
    time_limit: float | None = None,
    root_scale: float = 1.0,
    oracle: SpectrumOracle | None = None,
    max_certified: int | None = None,
) -> BAESolveReport:
    """Multi-start damped Newton on the stacked BAE residual, with certification.

    Random starts draw roots uniformly from a box of half-width
    ``root_scale``; constants and phases likewise. The search stops when the
    budget is spent, every eigenstate has a certified solution (if
    ``stop_when_complete``), ``max_certified`` solutions are in hand, or
    ``time_limit`` seconds have passed.
    """
    t0 = time.perf_counter()
    system = BAESystem(spec)
    oracle = oracle or SpectrumOracle.from_spec(spec)
    num_states = oracle.values.shape[0]
    rng = np.random.default_rng(seed)
    fp_rng = np.random.default_rng(seed + 1)
    fp_points = tuple(fp_rng.uniform(-1, 1, 10) + 1j * fp_rng.uniform(-1, 1, 10))

    def random_start() -> np.ndarray:
        z = rng.uniform(-1, 1, system.size) + 1j * rng.uniform(-1, 1, system.size)
        return root_scale * z

    starts = list(seeds) if seeds is not None else None
    total = len(starts) if starts is not None else budget
    found: list[CertifiedSolution] = []
    prints: list[np.ndarray] = []
    failures: dict[str, int] = {}
    tally: dict[int, int] = {}
    converged = uncertified = 0
    diagnostics: list[dict] = []
    used = 0
    with np.errstate(all="ignore"):
        for k in range(total):
            if time_limit is not None and time.perf_counter() - t0 > time_limit:
                break
            used += 1
            x0 = np.asarray(starts[k], dtype=complex) if starts is not None else random_start()
            res = damped_newton(system.residual, system.jacobian, x0, max_iter=60, tol=residual_tol * 1e-2, stall_window=8)
            norm = float(np.max(np.abs(system.residual(res.x))))
            if not (np.isfinite(norm) and norm < residual_tol):
                failures[res.reason] = failures.get(res.reason, 0) + 1
                if len(diagnostics) < 50:
                    diagnostics.append({"start": k, "reason": res.reason, "residual": norm, "iterations": res.iterations})
                continue
            converged += 1
            ans = unpack(system.template, res.x)
            idx, err = oracle.match(ans)
            if not err < cert_tol:
                uncertified += 1
                continue
            fp = fingerprint(ans, fp_points)
            if any(_equivalent(fp, other) for other in prints):
                continue
            prints.append(fp)
            tally[idx] = tally.get(idx, 0) + 1
            found.append(CertifiedSolution(ans, Certificate(idx, err, norm, seed)))
            if stop_when_complete and len(tally) == num_states:
                break
            if max_certified is not None and len(found) >= max_certified:
                break
    return BAESolveReport(
        found, used, converged, uncertified, failures, tally, num_states, seed,
        time.perf_counter() - t0, diagnostics,
    )


def sensitivity_probe(ans: TQAnsatz, color: int = 1, j: int = 0, delta: float = 1e-3) -> float:
    """Stacked residual after moving one root by ``delta``."""
    roots = [list(r) for r in ans.roots]
    roots[color - 1][j] += delta
    moved = ans.replace(roots=tuple(tuple(r) for r in roots))
    return bae_residual(moved).max_abs()
