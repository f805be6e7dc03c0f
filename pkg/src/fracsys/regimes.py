"""Solver-free classification of the exponent space.

Every inequality is transcribed with its printed strictness and evaluated in
plain floating point, no tolerance.  Inputs exactly on a boundary fall on
whichever side the printed inequality puts them, and parameters outside every
theorem are reported as undetermined.

The predicates accept numpy arrays as well as scalars so parameter sweeps use
the same code path as single queries.  Mirror-image conditions are written
with mirrored operation order, so ``swap`` maps them onto each other
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Exponents, FracsysError

NONEXISTENCE_LABELS = ("i", "ii", "iii", "iv", "v", "vi")
EXISTENCE_LABELS = ("TC1-i", "TC1-ii", "TC1-iii")

# image of each label under the u <-> v swap
SWAP_NONEXISTENCE = {"i": "iii", "ii": "iv", "iii": "i", "iv": "ii", "v": "vi", "vi": "v"}
SWAP_EXISTENCE = {"TC1-i": "TC1-ii", "TC1-ii": "TC1-i", "TC1-iii": "TC1-iii"}

PERTURBED_CASES = (2, 4, 5, 6)


class HypothesisNotMet(FracsysError, ValueError):
    pass


class InvalidCase(FracsysError, ValueError):
    pass


def swap(e: Exponents) -> Exponents:
    """Exchange the roles of ``u`` and ``v``."""
    return Exponents(p=e.theta, q=e.r, r=e.q, theta=e.p, s=e.t, t=e.s)


def _alpha_beta(p, q, r, theta, s, t):
    alpha = p + (q * t / s) * np.minimum(1.0, (2 * t - r * s) / ((1 + theta) * t))
    beta = theta + (r * s / t) * np.minimum(1.0, (2 * s - q * t) / ((1 + p) * s))
    return alpha, beta


def _nonexistence(p, q, r, theta, s, t):
    x = q * t / s + p
    y = r * s / t + theta
    return {
        "i": (x < 1) & (r >= 2 * t / s),
        # right-hand sides as derived in the nonexistence argument (u ~ d^((2s-qt)/(1+p))
        # feeding a weight of exponent >= 2t); the printed 2s(1+p) / 2t(1+theta)
        # contradict the existence theorem whenever s != t
        "ii": (x > 1) & (r * (2 * s - q * t) >= 2 * t * (1 + p)),
        "iii": (y < 1) & (q >= 2 * s / t),
        "iv": (y > 1) & (q * (2 * t - r * s) >= 2 * s * (1 + theta)),
        "v": ((p > np.maximum(1.0, r * s / t - 1))
              & (2 * r * s / t > (1 - theta) * (1 + p))
              & (q * t * (1 + p - r * s / t) > (1 + p) * (1 + theta) * s)),
        "vi": ((theta > np.maximum(1.0, q * t / s - 1))
               & (2 * q * t / s > (1 - p) * (1 + theta))
               & (r * s * (1 + theta - q * t / s) > (1 + p) * (1 + theta) * t)),
    }


def _ineq5(p, q, r, theta):
    return (1 + p) * (1 + theta) - q * r > 0


def _existence(p, q, r, theta, s, t):
    alpha, beta = _alpha_beta(p, q, r, theta, s, t)
    ok = _ineq5(p, q, r, theta)
    r_ok = r < 2 * t / s
    q_ok = q < 2 * s / t
    return {
        "TC1-i": ok & (alpha <= 1) & r_ok,
        "TC1-ii": ok & (beta <= 1) & q_ok,
        "TC1-iii": ok & (p >= 1) & (theta >= 1) & r_ok & q_ok,
    }


def _uniqueness(p, q, r, theta, s, t):
    x = q * t / s + p
    y = r * s / t + theta
    return _ineq5(p, q, r, theta) & (((x < 1) & (r < 2 * t / s)) | ((y < 1) & (q < 2 * s / t)))


def _args(e: Exponents):
    return e.p, e.q, e.r, e.theta, e.s, e.t


def alpha_beta(e: Exponents) -> tuple[float, float]:
    alpha, beta = _alpha_beta(*_args(e))
    return float(alpha), float(beta)


def ineq5(e: Exponents) -> bool:
    return bool(_ineq5(e.p, e.q, e.r, e.theta))


def nonexistence_conditions(e: Exponents) -> tuple[str, ...]:
    """All nonexistence conditions that hold, in the order i..vi."""
    hits = _nonexistence(*_args(e))
    return tuple(k for k in NONEXISTENCE_LABELS if hits[k])


def classify_nonexistence(e: Exponents) -> str | None:
    """First nonexistence condition that holds, or ``None``."""
    hits = nonexistence_conditions(e)
    return hits[0] if hits else None


def existence_conditions(e: Exponents) -> tuple[str, ...]:
    hits = _existence(*_args(e))
    return tuple(k for k in EXISTENCE_LABELS if hits[k])


def classify_existence(e: Exponents) -> str | None:
    hits = existence_conditions(e)
    return hits[0] if hits else None


def classify_uniqueness(e: Exponents) -> bool:
    return bool(_uniqueness(*_args(e)))


def section4_case(e: Exponents) -> int:
    """Sub-case 1..6 of the existence proof under hypothesis ``TC1-i``.

    Chosen from the signs of ``rs/t + theta - 1`` and ``alpha - 1``:

    ====  ==============  =========
    case  rs/t + theta    alpha
    ====  ==============  =========
    1     > 1             < 1
    2     = 1             < 1
    3     < 1             < 1
    4     < 1             = 1
    5     > 1             = 1
    6     = 1             = 1
    ====  ==============  =========
    """
    if "TC1-i" not in existence_conditions(e):
        raise InvalidCase("sub-cases 1-6 refine hypothesis TC1-i, which does not hold")
    alpha, _ = alpha_beta(e)
    y = e.r * e.s / e.t + e.theta
    table = {(1, -1): 1, (0, -1): 2, (-1, -1): 3, (-1, 0): 4, (1, 0): 5, (0, 0): 6}
    return table[(int(np.sign(y - 1)), int(np.sign(alpha - 1)))]


@dataclass(frozen=True)
class CorollaryVerdict:
    branch: str
    exists: bool


def corollary_iff(e: Exponents) -> CorollaryVerdict:
    """Existence criterion valid when one equation is sublinear.

    Needs the coupling inequality and ``qt/s + p < 1`` (branch ``i``) or
    ``rs/t + theta < 1`` (branch ``ii``).
    """
    if not ineq5(e):
        raise HypothesisNotMet("(1+p)(1+theta) - qr > 0 fails")
    if e.q * e.t / e.s + e.p < 1:
        return CorollaryVerdict("i", bool(e.r < 2 * e.t / e.s))
    if e.r * e.s / e.t + e.theta < 1:
        return CorollaryVerdict("ii", bool(e.q < 2 * e.s / e.t))
    raise HypothesisNotMet("neither qt/s + p < 1 nor rs/t + theta < 1")


def tc1iii_exponents(e: Exponents) -> tuple[float, float]:
    """Boundary exponents ``(a, b)`` of the strongly singular regime."""
    p, q, r, theta, s, t = _args(e)
    den = (1 + p) * (1 + theta) - q * r
    a = 2 * s * t * ((1 + theta) / t - q / s) / den
    b = 2 * s * t * ((1 + p) / s - r / t) / den
    return a, b


def ab_identity_residual(e: Exponents, ab: tuple[float, float] | None = None) -> float:
    """Largest defect in ``a = (2s - bq)/(1+p)``, ``b = (2t - ra)/(1+theta)``, relative to ``max(1, |a|, |b|)``."""
    a, b = tc1iii_exponents(e) if ab is None else ab
    ra = abs(a - (2 * e.s - b * e.q) / (1 + e.p))
    rb = abs(b - (2 * e.t - e.r * a) / (1 + e.theta))
    return max(ra, rb) / max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class SystemRates:
    sigma_u: float
    sigma_v: float
    ab: tuple[float, float] | None = None
    perturbed: bool = False


def predicted_system_rates(e: Exponents, existence: str, case: int | None = None) -> SystemRates:
    """Boundary exponents of ``(u, v)`` implied by the bracket of the given case.

    For ``TC1-i`` the sub-case defaults to :func:`section4_case`; for
    ``TC1-ii`` the sub-case refers to the swapped problem.  Cases 2, 4, 5
    and 6 only have one-sided envelopes, flagged by ``perturbed``.
    """
    if existence == "TC1-iii":
        a, b = tc1iii_exponents(e)
        if ab_identity_residual(e, (a, b)) >= 1e-12:
            raise ArithmeticError("exponent identity violated for (a, b)")
        return SystemRates(a, b, (a, b))
    if existence == "TC1-ii":
        mirrored = predicted_system_rates(swap(e), "TC1-i", case)
        return SystemRates(mirrored.sigma_v, mirrored.sigma_u, None, mirrored.perturbed)
    if existence != "TC1-i":
        raise InvalidCase(f"unknown existence label {existence!r}")
    if case is None:
        case = section4_case(e)
    s, t, r, theta = e.s, e.t, e.r, e.theta
    if case in (1, 5):
        return SystemRates(s, (2 * t - r * s) / (1 + theta), None, case == 5)
    if case in (2, 3, 4, 6):
        return SystemRates(s, t, None, case in PERTURBED_CASES)
    raise InvalidCase(f"case must be 1..6, got {case}")


@dataclass(frozen=True)
class RegimeVerdict:
    exponents: Exponents
    nonexistence: str | None
    nonexistence_all: tuple[str, ...]
    existence: str | None
    existence_all: tuple[str, ...]
    case: int | None
    unique: bool
    ineq5: bool
    alpha: float
    beta: float
    predicted_u_rate: float | None
    predicted_v_rate: float | None
    ab: tuple[float, float] | None
    perturbed: bool

    @property
    def code(self) -> str:
        if self.unique:
            return "U"
        if self.existence is not None:
            return "E" + str(EXISTENCE_LABELS.index(self.existence) + 1)
        if self.nonexistence is not None:
            return "N" + str(NONEXISTENCE_LABELS.index(self.nonexistence) + 1)
        return "undetermined"

    def as_dict(self) -> dict:
        return {
            "exponents": self.exponents.as_dict(),
            "verdict": self.code,
            "nonexistence": self.nonexistence,
            "nonexistence_all": list(self.nonexistence_all),
            "existence": self.existence,
            "existence_all": list(self.existence_all),
            "case": self.case,
            "unique": self.unique,
            "ineq5": self.ineq5,
            "alpha": self.alpha,
            "beta": self.beta,
            "predicted_u_rate": self.predicted_u_rate,
            "predicted_v_rate": self.predicted_v_rate,
            "ab": None if self.ab is None else list(self.ab),
            "perturbed": self.perturbed,
        }


def existence_case(e: Exponents, existence: str) -> int | None:
    if existence == "TC1-i":
        return section4_case(e)
    if existence == "TC1-ii":
        return section4_case(swap(e))
    return None


def classify(e: Exponents) -> RegimeVerdict:
    non_all = nonexistence_conditions(e)
    ex_all = existence_conditions(e)
    ex = ex_all[0] if ex_all else None
    alpha, beta = alpha_beta(e)
    case = rates = None
    if ex is not None:
        case = existence_case(e, ex)
        rates = predicted_system_rates(e, ex, case)
    return RegimeVerdict(
        exponents=e,
        nonexistence=non_all[0] if non_all else None,
        nonexistence_all=non_all,
        existence=ex,
        existence_all=ex_all,
        case=case,
        unique=classify_uniqueness(e),
        ineq5=ineq5(e),
        alpha=alpha,
        beta=beta,
        predicted_u_rate=None if rates is None else rates.sigma_u,
        predicted_v_rate=None if rates is None else rates.sigma_v,
        ab=None if rates is None else rates.ab,
        perturbed=False if rates is None else rates.perturbed,
    )


def classify_arrays(p, q, r, theta, s, t) -> dict[str, np.ndarray]:
    """Vectorised predicates for sweeps: one boolean array per label, plus ``unique``."""
    arrays = [np.asarray(x, dtype=float) for x in (p, q, r, theta, s, t)]
    out = dict(_nonexistence(*arrays))
    out.update(_existence(*arrays))
    out["unique"] = _uniqueness(*arrays)
    return out
