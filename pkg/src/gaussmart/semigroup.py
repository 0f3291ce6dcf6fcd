"""Log-convolution semigroups of mixing laws on [0, 1].

A family ``(G_sigma)_{sigma >= 1}`` of probability laws on [0, 1] that is
closed under multiplication of independent draws is represented through the
Laplace exponent ``psi`` of the nonnegative increments ``U_sigma = -ln
R_sigma``::

    E[R_sigma ** lam] = sigma ** (-psi(lam)),
    psi(lam) = beta * lam + integral (1 - exp(-lam * x)) nu(dx),

with drift ``beta >= 0`` and jump measure ``nu``.  Three representations are
supported: a unit atom with intensity ``c`` (Poisson increments), the
``a * x**-1 * exp(-b*x)`` density (gamma increments), and a finite atom list
with optional drift.  A family is *calibrated* when ``psi(1/2) = 1``, the
condition that makes the associated mixing recursion a martingale with
exactly Gaussian marginals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import CalibrationError, DomainError, FamilyError

POISSON = "poisson"
GAMMA = "gamma"
COMPOUND = "compound"

#: |psi(1/2) - 1| must not exceed this for a family to count as calibrated.
CALIBRATION_TOL = 1e-12


@dataclass(frozen=True)
class SubordinatorFamily:
    """Parameters of one log-convolution semigroup.

    Exactly one parameter group is meaningful per ``kind``:

    - ``poisson``: jump intensity ``c`` per unit of log scale (unit atom).
    - ``gamma``: shape rate ``a`` per unit of log scale, inverse scale ``b``.
    - ``compound``: drift ``beta >= 0`` plus atoms ``(location, weight)``.

    ``degenerate`` marks the pure-drift boundary case (deterministic mixing,
    Brownian motion); constructors reject it unless the flag is set
    explicitly because it exists only as a comparison baseline.
    """

    kind: str
    c: float = 0.0
    a: float = 0.0
    b: float = 0.0
    beta: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()
    calibrated: bool = False
    degenerate: bool = False

    def __post_init__(self):
        if self.kind not in (POISSON, GAMMA, COMPOUND):
            raise FamilyError(f"unknown family kind: {self.kind!r}")
        if self.kind == POISSON and self.c <= 0:
            raise FamilyError("poisson kind needs intensity c > 0")
        if self.kind == GAMMA and (self.a <= 0 or self.b <= 0):
            raise FamilyError("gamma kind needs a > 0 and b > 0")
        if self.kind == COMPOUND:
            if self.beta < 0:
                raise FamilyError("drift beta must be >= 0")
            for x, w in self.atoms:
                if x <= 0 or w <= 0:
                    raise FamilyError("atom locations and weights must be > 0")
            if not self.atoms and not self.degenerate:
                raise FamilyError(
                    "pure-drift family is the degenerate (Brownian) case; "
                    "construct it with degenerate=True"
                )
            if self.atoms and self.degenerate:
                raise FamilyError("degenerate flag is reserved for pure drift")
        elif self.degenerate:
            raise FamilyError("degenerate flag is reserved for pure drift")


def poisson_family(c: float = 1.0) -> SubordinatorFamily:
    return SubordinatorFamily(kind=POISSON, c=c)


def gamma_family(a: float = 1.0, b: float = 1.0) -> SubordinatorFamily:
    return SubordinatorFamily(kind=GAMMA, a=a, b=b)


def compound_family(atoms, beta: float = 0.0) -> SubordinatorFamily:
    return SubordinatorFamily(
        kind=COMPOUND, beta=beta, atoms=tuple((float(x), float(w)) for x, w in atoms)
    )


def brownian_family() -> SubordinatorFamily:
    """Degenerate pure-drift baseline: deterministic mixing, delta = 1."""
    return SubordinatorFamily(
        kind=COMPOUND, beta=2.0, atoms=(), calibrated=True, degenerate=True
    )


def nu_total(family: SubordinatorFamily) -> float:
    """Total jump-measure mass; inf for the gamma kind."""
    if family.kind == POISSON:
        return family.c
    if family.kind == GAMMA:
        return math.inf
    return sum(w for _, w in family.atoms)


def psi(family: SubordinatorFamily, lam: float) -> float:
    """Laplace exponent at ``lam >= 0``; nondecreasing, concave, psi(0) = 0."""
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    if family.kind == POISSON:
        return family.c * -math.expm1(-lam)
    if family.kind == GAMMA:
        return family.a * math.log1p(lam / family.b)
    return family.beta * lam + sum(
        w * -math.expm1(-lam * x) for x, w in family.atoms
    )


def calibrate(family: SubordinatorFamily) -> SubordinatorFamily:
    """Rescale the family so that psi(1/2) = 1.

    psi is linear in (beta, nu), so a single scale factor applied to the
    intensity parameters (c, or a, or beta and every atom weight) calibrates
    any valid family.  Families already within CALIBRATION_TOL are returned
    unchanged apart from the flag, which makes the operation idempotent.
    """
    raw = psi(family, 0.5)
    if raw <= 0.0:
        raise FamilyError("cannot calibrate a family with psi(1/2) = 0")
    if abs(raw - 1.0) <= CALIBRATION_TOL:
        return family if family.calibrated else replace(family, calibrated=True)
    scale = 1.0 / raw
    if family.kind == POISSON:
        return replace(family, c=family.c * scale, calibrated=True)
    if family.kind == GAMMA:
        return replace(family, a=family.a * scale, calibrated=True)
    return replace(
        family,
        beta=family.beta * scale,
        atoms=tuple((x, w * scale) for x, w in family.atoms),
        calibrated=True,
    )


def require_calibrated(family: SubordinatorFamily) -> None:
    if not family.calibrated:
        raise CalibrationError("operation requires a calibrated family")


def delta(family: SubordinatorFamily) -> float:
    """psi(1)/2, the exponent of the conditional second moment.

    Calibration pins psi(1/2) = 1, and concavity then forces
    delta in [1/2, 1]; delta = 1 only for the degenerate pure-drift case.
    """
    require_calibrated(family)
    return psi(family, 1.0) / 2.0


def gamma_atom(family: SubordinatorFamily, sigma: float) -> float:
    """Probability that the mixing variable sticks at 1 over scale ``sigma``.

    Equals sigma ** -nu_total when the jump measure is finite and there is
    no drift; zero otherwise (drift or infinite activity); one at sigma = 1.
    """
    if sigma < 1.0:
        raise DomainError(f"sigma must be >= 1, got {sigma}")
    require_calibrated(family)
    if sigma == 1.0:
        return 1.0
    if family.beta > 0 or family.kind == GAMMA:
        return 0.0
    return sigma ** -nu_total(family)


def laplace(family: SubordinatorFamily, sigma: float, lam: float) -> float:
    """E[R_sigma ** lam] = sigma ** -psi(lam)."""
    if sigma < 1.0:
        raise DomainError(f"sigma must be >= 1, got {sigma}")
    return math.exp(-psi(family, lam) * math.log(sigma))


_FAMILY_KEYS = {
    POISSON: {"c"},
    GAMMA: {"a", "b"},
    COMPOUND: {"beta", "atoms", "degenerate"},
}


def family_from_config(spec: dict) -> SubordinatorFamily:
    """Build an uncalibrated family from the CLI config object.

    Schema: ``{"kind": "poisson"|"gamma"|"compound", ...parameters}``.
    "brownian" is accepted as shorthand for the degenerate compound family.
    Unknown keys are rejected.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise FamilyError("family spec must be an object with a 'kind' key")
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "brownian":
        if spec:
            raise FamilyError(f"unknown family keys: {sorted(spec)}")
        return brownian_family()
    if kind not in _FAMILY_KEYS:
        raise FamilyError(f"unknown family kind: {kind!r}")
    unknown = set(spec) - _FAMILY_KEYS[kind]
    if unknown:
        raise FamilyError(f"unknown family keys: {sorted(unknown)}")
    if kind == POISSON:
        return poisson_family(c=float(spec.get("c", 1.0)))
    if kind == GAMMA:
        return gamma_family(a=float(spec.get("a", 1.0)), b=float(spec.get("b", 1.0)))
    atoms = [(float(x), float(w)) for x, w in spec.get("atoms", [])]
    beta = float(spec.get("beta", 0.0))
    if spec.get("degenerate", False):
        fam = SubordinatorFamily(kind=COMPOUND, beta=beta, atoms=(), degenerate=True)
        return fam
    return compound_family(atoms, beta=beta)
