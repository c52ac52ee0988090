"""Inhomogeneous T-Q relations for the su(n) spin torus.

Every building block (a, d, Q, Z, X and their products) is kept in factored
form as a sum of :class:`Term` objects, each ``coef * e^{rate u} *
prod sinh(u - c) / prod sinh(u - c')``. Products of shifted blocks are
formed symbolically, identical numerator/denominator factors are cancelled
before any number is computed, and asymptotic coefficients are read off the
same representation.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ModelSpec, omega

CANCEL_TOL = 1e-11
POLE = complex(np.inf, 0.0)


def ni_counts(n: int, N: int) -> list[int]:
    """Root counts ``N_1 .. N_{2n-2}`` fixed by the asymptotic behaviour."""
    if n < 2 or N < 1:
        raise ValueError(f"need n >= 2 and N >= 1, got n={n}, N={N}")
    counts = [0] * (2 * n - 2)
    odd_correction = n % 2 == 0 and N % 2 == 1
    top = (n - 1) // 2 if n % 2 else n // 2
    for i in range(1, top + 1):
        twice = i * (n - i) * N + (i if odd_correction else 0)
        if twice % 2:
            raise ValueError(f"non-integral root count for n={n}, N={N}, i={i}")
        value = twice // 2
        for idx in (2 * i - 1, 2 * i, 2 * (n - i) - 1, 2 * (n - i)):
            counts[idx - 1] = value
    return counts


def sinh_adjusted_color(n: int, N: int) -> int | None:
    """Index i of the f-function carrying the extra sinh(u) factor, if any."""
    if n % 2 == 0 and N % 2 == 1 and n >= 4:
        return n // 2
    return None


@dataclass(frozen=True)
class Term:
    coef: complex
    rate: float
    num: tuple[complex, ...] = ()
    den: tuple[complex, ...] = ()

    def shifted(self, s: complex) -> "Term":
        """The same term evaluated at ``u - s``."""
        return Term(
            self.coef * np.exp(-self.rate * s),
            self.rate,
            tuple(c + s for c in self.num),
            tuple(c + s for c in self.den),
        )

    def __mul__(self, other: "Term") -> "Term":
        return Term(self.coef * other.coef, self.rate + other.rate, self.num + other.num, self.den + other.den)

    def cancelled(self, tol: float = CANCEL_TOL) -> "Term":
        num = list(self.num)
        den = []
        for c in self.den:
            for k, a in enumerate(num):
                if abs(a - c) < tol:
                    del num[k]
                    break
            else:
                den.append(c)
        return Term(self.coef, self.rate, tuple(num), tuple(den))

    @property
    def degree(self) -> int:
        return len(self.num) - len(self.den)

    def evaluate(self, u: complex) -> complex:
        if self.coef == 0:
            return 0j
        den = np.sinh(u - np.asarray(self.den, dtype=complex)) if self.den else np.ones(0)
        if np.any(den == 0):
            return POLE
        num = np.prod(np.sinh(u - np.asarray(self.num, dtype=complex))) if self.num else 1.0
        return complex(self.coef * np.exp(self.rate * u) * num / np.prod(den))

    def log_evaluate(self, u: complex) -> complex:
        """Complex log of the term value, stable for large |Re u|."""
        if self.coef == 0:
            return complex(-np.inf)
        out = np.log(complex(self.coef)) + self.rate * u
        out += np.sum(_log_sinh(u - np.asarray(self.num, dtype=complex))) if self.num else 0
        out -= np.sum(_log_sinh(u - np.asarray(self.den, dtype=complex))) if self.den else 0
        return complex(out)

    def leading(self, sign: int) -> tuple[float, complex]:
        """(exponent, coefficient) of the dominant exponential as Re u -> sign*inf."""
        total_rate = self.rate + sign * self.degree
        coef = self.coef * np.prod([sign * np.exp(-sign * c) / 2 for c in self.num])
        coef /= np.prod([sign * np.exp(-sign * c) / 2 for c in self.den]) if self.den else 1.0
        return total_rate, complex(coef)


def _log_sinh(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    pos = x.real >= 0
    y = np.where(pos, x, -x)
    val = y - np.log(2.0) + np.log1p(-np.exp(-2 * y))
    return np.where(pos, val, val + 1j * np.pi)


class TermSum:
    """A finite sum of factored terms; the algebra of T-Q building blocks."""

    def __init__(self, terms: Sequence[Term] = ()):
        self.terms = [t for t in terms if t.coef != 0]

    def __add__(self, other: "TermSum") -> "TermSum":
        return TermSum(self.terms + other.terms)

    def __mul__(self, other: "TermSum") -> "TermSum":
        return TermSum([a * b for a in self.terms for b in other.terms])

    def shifted(self, s: complex) -> "TermSum":
        return TermSum([t.shifted(s) for t in self.terms])

    def cancelled(self) -> "TermSum":
        return TermSum([t.cancelled() for t in self.terms])

    def evaluate(self, u: complex) -> complex:
        """Value at u; a surviving pole yields ``complex(inf)`` rather than raising."""
        total = 0j
        for t in self.terms:
            v = t.cancelled().evaluate(u)
            if v == POLE:
                return POLE
            total += v
        return total

    __call__ = evaluate

    def scaled_evaluate(self, u: complex, exponent: float) -> complex:
        """``e^{-exponent u}`` times the sum, computed in log space."""
        total = 0j
        for t in self.terms:
            total += np.exp(t.cancelled().log_evaluate(u) - exponent * u)
        return complex(total)

    def leading_exponent(self, sign: int) -> float:
        return max(sign * t.cancelled().leading(sign)[0] for t in self.terms) * sign

    def asymptotic_coefficient(self, sign: int, exponent: float, tol: float = 1e-9) -> complex:
        """Exact coefficient of ``e^{exponent u}`` among the dominant parts of the terms."""
        out = 0j
        for t in self.terms:
            rate, coef = t.cancelled().leading(sign)
            if abs(rate - exponent) < tol:
                out += coef
        return out

    def residue_factor(self, root: complex, tol: float = CANCEL_TOL) -> complex:
        """``lim_{u -> root} sinh(u - root) * sum``: drop one matching denominator factor."""
        total = 0j
        for t in self.terms:
            t = t.cancelled()
            hits = [k for k, c in enumerate(t.den) if abs(c - root) < tol]
            if not hits:
                continue
            den = t.den[: hits[0]] + t.den[hits[0] + 1 :]
            total += Term(t.coef, t.rate, t.num, den).evaluate(root)
        return total


@dataclass(frozen=True)
class TQAnsatz:
    """Bethe roots by color, f-constants and phases of one inhomogeneous T-Q ansatz."""

    n: int
    N: int
    eta: complex
    thetas: tuple[complex, ...]
    roots: tuple[tuple[complex, ...], ...]
    f_plus_1: complex
    f_minus: tuple[complex, ...]
    phis: tuple[complex, ...]
    check_counts: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta", complex(self.eta))
        object.__setattr__(self, "thetas", tuple(complex(t) for t in self.thetas))
        object.__setattr__(self, "roots", tuple(tuple(complex(x) for x in r) for r in self.roots))
        object.__setattr__(self, "f_plus_1", complex(self.f_plus_1))
        object.__setattr__(self, "f_minus", tuple(complex(x) for x in self.f_minus))
        object.__setattr__(self, "phis", tuple(complex(x) for x in self.phis))
        if len(self.thetas) != self.N:
            raise ValueError(f"expected {self.N} thetas, got {len(self.thetas)}")
        if len(self.roots) != 2 * self.n - 2:
            raise ValueError(f"expected {2 * self.n - 2} root colors, got {len(self.roots)}")
        if len(self.f_minus) != self.n - 1:
            raise ValueError(f"expected {self.n - 1} f_minus constants, got {len(self.f_minus)}")
        if len(self.phis) != max(self.n - 2, 0):
            raise ValueError(f"expected {self.n - 2} phases, got {len(self.phis)}")
        if self.check_counts:
            want = ni_counts(self.n, self.N)
            have = [len(r) for r in self.roots]
            if have != want:
                raise ValueError(f"root counts {have} differ from required {want}")

    @classmethod
    def for_spec(
        cls,
        spec: ModelSpec,
        roots: Sequence[Sequence[complex]],
        f_plus_1: complex,
        f_minus: Sequence[complex],
        phis: Sequence[complex],
        check_counts: bool = True,
    ) -> "TQAnsatz":
        return cls(
            spec.n, spec.N, spec.eta, spec.thetas, tuple(tuple(r) for r in roots),
            f_plus_1, tuple(f_minus), tuple(phis), check_counts,
        )

    @classmethod
    def random(cls, spec: ModelSpec, rng: np.random.Generator, scale: float = 1.0) -> "TQAnsatz":
        """Random roots (ni_counts sizes) and constants; not a BAE solution."""
        counts = ni_counts(spec.n, spec.N)

        def z(size=None):
            return scale * (rng.uniform(-1, 1, size) + 1j * rng.uniform(-1, 1, size))

        roots = [tuple(z(c)) for c in counts]
        return cls.for_spec(spec, roots, z(), tuple(z(spec.n - 1)), tuple(0.5 * z(spec.n - 2)))

    def replace(self, **changes) -> "TQAnsatz":
        data = {
            "n": self.n, "N": self.N, "eta": self.eta, "thetas": self.thetas, "roots": self.roots,
            "f_plus_1": self.f_plus_1, "f_minus": self.f_minus, "phis": self.phis,
            "check_counts": self.check_counts,
        }
        data.update(changes)
        return TQAnsatz(**data)

    def to_dict(self) -> dict:
        pair = lambda z: [z.real, z.imag]  # noqa: E731
        return {
            "n": self.n,
            "N": self.N,
            "eta": pair(self.eta),
            "thetas": [pair(t) for t in self.thetas],
            "roots": {str(i + 1): [pair(x) for x in r] for i, r in enumerate(self.roots)},
            "f_plus_1": pair(self.f_plus_1),
            "f_minus": [pair(x) for x in self.f_minus],
            "phis": [pair(x) for x in self.phis],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TQAnsatz":
        c = lambda v: complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)  # noqa: E731
        n = int(data["n"])
        roots = [tuple(c(x) for x in data["roots"][str(i + 1)]) for i in range(2 * n - 2)]
        return cls(
            n, int(data["N"]), c(data["eta"]), tuple(c(t) for t in data["thetas"]), tuple(roots),
            c(data["f_plus_1"]), tuple(c(x) for x in data["f_minus"]), tuple(c(x) for x in data["phis"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TQAnsatz":
        return cls.from_dict(json.loads(text))


# --- scalar building blocks -------------------------------------------------

def a_function(spec: ModelSpec | TQAnsatz, u: complex) -> complex:
    return complex(np.prod([np.sinh(u - th + spec.eta) for th in spec.thetas]))


def d_function(spec: ModelSpec | TQAnsatz, u: complex) -> complex:
    return complex(np.prod([np.sinh(u - th) for th in spec.thetas]))


def q_function(ansatz: TQAnsatz, i: int, u: complex) -> complex:
    """``Q^{(i)}(u)``; colors outside 1..2n-2 are identically 1."""
    if not 1 <= i <= 2 * ansatz.n - 2:
        return 1.0 + 0j
    return complex(np.prod([np.sinh(u - lam) for lam in ansatz.roots[i - 1]]))


def f_function(ansatz: TQAnsatz, i: int, u: complex) -> complex:
    return _f_terms(ansatz, i).evaluate(u)


def z_phase(ansatz: TQAnsatz, i: int) -> complex:
    """Phase factor of ``Z_i``: e^{phi_i} up to n-2, e^{-sum phi} on n-1, none on n."""
    n = ansatz.n
    if i == n:
        return 1.0 + 0j
    if i == n - 1:
        return complex(np.exp(-sum(ansatz.phis)))
    return complex(np.exp(ansatz.phis[i - 1]))


def _a_terms(ans: TQAnsatz) -> Term:
    return Term(1.0, 0.0, tuple(th - ans.eta for th in ans.thetas))


def _d_terms(ans: TQAnsatz) -> Term:
    return Term(1.0, 0.0, tuple(ans.thetas))


def _q(ans: TQAnsatz, i: int, shift: complex = 0.0) -> tuple[complex, ...]:
    """Shifts c of the factors sinh(u - c) in ``Q^{(i)}(u + shift)``."""
    if not 1 <= i <= 2 * ans.n - 2:
        return ()
    return tuple(lam - shift for lam in ans.roots[i - 1])


def _f_terms(ans: TQAnsatz, i: int) -> TermSum:
    if not 1 <= i <= ans.n - 1:
        raise IndexError(f"f-function index {i} out of range")
    if i == 1 and ans.n > 1:
        terms = [Term(ans.f_plus_1, 1.0), Term(ans.f_minus[0], -1.0)]
    else:
        terms = [Term(ans.f_minus[i - 1], -1.0)]
    if sinh_adjusted_color(ans.n, ans.N) == i:
        terms = [Term(t.coef, t.rate, (0j,)) for t in terms]
    return TermSum(terms)


def z_terms(ans: TQAnsatz, i: int) -> TermSum:
    n, eta = ans.n, ans.eta
    if not 1 <= i <= n:
        raise IndexError(f"Z index {i} out of range for n={n}")
    if i == 1:
        base = _a_terms(ans) * Term(z_phase(ans, 1), 2 - 2 / n, _q(ans, 1, -eta), _q(ans, 2))
        return TermSum([base])
    coef = z_phase(ans, i) * omega(n) ** (i - 1) * np.exp(-2 * (i - 1) * eta / n)
    num = _q(ans, 2 * i - 2, eta) + _q(ans, 2 * i - 1, -eta)
    den = _q(ans, 2 * i - 3) + _q(ans, 2 * i)
    return TermSum([_d_terms(ans) * Term(coef, -2 / n, num, den)])


def x_terms(ans: TQAnsatz, i: int) -> TermSum:
    n, eta = ans.n, ans.eta
    if not 1 <= i <= n - 1:
        raise IndexError(f"X index {i} out of range for n={n}")
    num = _q(ans, 2 * i - 2, eta) + _q(ans, 2 * i + 1, -eta)
    den = _q(ans, 2 * i - 1) + _q(ans, 2 * i)
    base = _a_terms(ans) * _d_terms(ans) * Term(1.0, 1 - 2 / n, num, den)
    return TermSum([base]) * _f_terms(ans, i)


def z_function(ans: TQAnsatz, i: int, u: complex) -> complex:
    return z_terms(ans, i).evaluate(u)


def x_function(ans: TQAnsatz, i: int, u: complex) -> complex:
    return x_terms(ans, i).evaluate(u)


def y_terms(ans: TQAnsatz, index: int) -> TermSum:
    """``Y_{2j-1} = Z_j`` and ``Y_{2j} = X_j``."""
    if index % 2:
        return z_terms(ans, (index + 1) // 2)
    return x_terms(ans, index // 2)


# --- admissible sequences ---------------------------------------------------

@dataclass(frozen=True)
class AdmissibleSequence:
    m: int
    indices: tuple[int, ...]

    def label(self) -> str:
        names = [f"Z{(i + 1) // 2}" if i % 2 else f"X{i // 2}" for i in self.indices]
        return "".join(f"{nm}^({k})" if k else nm for k, nm in enumerate(names))


def is_admissible(indices: Sequence[int]) -> bool:
    if any(b <= a for a, b in zip(indices, indices[1:])):
        return False
    for k, i in enumerate(indices):
        if i % 2 == 0:
            if k > 0 and indices[k - 1] > i - 3:
                return False
            if k + 1 < len(indices) and indices[k + 1] < i + 3:
                return False
    return True


def admissible_sequences(n: int, m: int) -> list[AdmissibleSequence]:
    """Increasing sequences in 1..2n-1 where an X-index 2j keeps its neighbours
    at distance >= 3. Built recursively; lexicographic order."""
    if not 1 <= m <= n - 1:
        raise ValueError(f"need 1 <= m <= n-1, got m={m}, n={n}")
    top = 2 * n - 1
    out: list[tuple[int, ...]] = []

    def grow(prefix: tuple[int, ...]) -> None:
        if len(prefix) == m:
            out.append(prefix)
            return
        last = prefix[-1] if prefix else 0
        for nxt in range(last + 1, top + 1):
            if prefix and last % 2 == 0 and nxt < last + 3:
                continue
            if prefix and nxt % 2 == 0 and last > nxt - 3:
                continue
            grow(prefix + (nxt,))

    grow(())
    return [AdmissibleSequence(m, s) for s in out]


def count_admissible_brute_force(n: int, m: int) -> int:
    return sum(1 for s in itertools.combinations(range(1, 2 * n), m) if is_admissible(s))


# --- eigenvalue functions ---------------------------------------------------

def lambda_terms(ans: TQAnsatz, m: int) -> TermSum:
    """Factored ``Lambda_m`` as the constrained sum of shifted Y-products."""
    ys = {i: y_terms(ans, i) for i in range(1, 2 * ans.n)}
    total = TermSum()
    for seq in admissible_sequences(ans.n, m):
        prod = TermSum([Term(1.0, 0.0)])
        for k, idx in enumerate(seq.indices):
            prod = prod * ys[idx].shifted(k * ans.eta)
        total = total + prod
    return total.cancelled()


def top_product_terms(ans: TQAnsatz) -> TermSum:
    """``Z_1 Z_2^{(1)} ... Z_n^{(n-1)}``, the formal m = n member."""
    prod = TermSum([Term(1.0, 0.0)])
    for k in range(ans.n):
        prod = prod * z_terms(ans, k + 1).shifted(k * ans.eta)
    return prod.cancelled()


class TQEvaluator:
    """Caches the factored Lambda_m of one ansatz."""

    def __init__(self, ans: TQAnsatz):
        self.ansatz = ans
        self._cache: dict[int, TermSum] = {}

    def terms(self, m: int) -> TermSum:
        if m not in self._cache:
            self._cache[m] = top_product_terms(self.ansatz) if m == self.ansatz.n else lambda_terms(self.ansatz, m)
        return self._cache[m]

    def __call__(self, m: int, u: complex) -> complex:
        return self.terms(m).evaluate(u)


def lambda_tq(ans: TQAnsatz, m: int, u: complex) -> complex:
    return TQEvaluator(ans)(m, u)


def scaled_asymptotic_exponent(n: int, N: int, m: int) -> int:
    """Exponent of the coefficients F^(+-)_m: ``mN + 1``."""
    return m * N + 1


@dataclass
class TQReport:
    n: int
    N: int
    entries: list[dict] = field(default_factory=list)

    def add(self, name: str, residual: float) -> None:
        self.entries.append({"identity": name, "relative": float(residual)})

    def max_relative(self, prefix: str = "") -> float:
        vals = [e["relative"] for e in self.entries if e["identity"].startswith(prefix)]
        return max(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {"n": self.n, "N": self.N, "entries": self.entries}


def _rel(a: complex, b: complex) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def check_tq_identities(ans: TQAnsatz, probe_points: Sequence[complex] | None = None) -> TQReport:
    """Fusion, vanishing and periodicity identities of the T-Q forms.

    They hold for any root set, so no BAE is assumed. Vanishing residuals
    are normalised by the magnitude of Lambda_m a short distance away.
    """
    ev = TQEvaluator(ans)
    n, N, eta = ans.n, ans.N, ans.eta
    report = TQReport(n, N)
    for j, th in enumerate(ans.thetas):
        lam1 = ev(1, th)
        for m in range(1, n):
            report.add(f"fusion_m{m}_j{j}", _rel(lam1 * ev(m, th - eta), ev(m + 1, th)))
        for m in range(2, n):
            for k in range(1, m):
                ref = abs(ev(m, th + k * eta + 0.3)) or 1.0
                report.add(f"vanishing_m{m}_k{k}_j{j}", abs(ev(m, th + k * eta)) / ref)
        report.add(f"z1_at_theta_j{j}", _rel(lam1, z_function(ans, 1, th)))
    points = probe_points if probe_points is not None else (0.37 + 0.21j, -0.52 + 0.44j, 0.11 - 0.63j)
    for u in points:
        report.add("top_product", _rel(ev(n, u), (-1) ** (n - 1) * _qdet(ans, u)))
        for m in range(1, n):
            factor = np.exp(-2j * np.pi * m / n) * (-1) ** (N * m)
            report.add(f"periodicity_m{m}", _rel(ev(m, u + 1j * np.pi), factor * ev(m, u)))
    return report


def _qdet(ans: TQAnsatz, u: complex) -> complex:
    out = 1.0 + 0j
    for th in ans.thetas:
        out *= np.sinh(u - th + ans.eta)
        for k in range(1, ans.n):
            out *= np.sinh(u - th - k * ans.eta)
    return out
