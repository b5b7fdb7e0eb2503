"""Walk parameters, derived constants and regime classification.

The memory parameter ``p`` (and the secondary parameter ``q`` of the
axis-decoupled walk) may be given either as a float or as an exact
``fractions.Fraction``.  Regime classification is the one place where
exactness matters: the critical value ``(2d+1)/(4d)`` is not always
representable in binary (d=3 gives 7/12), so a float comparison would
misclassify the critical case.  When ``p`` is a Fraction the comparison
is performed in exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

Param = Union[float, Fraction]


class Regime(str, Enum):
    DIFFUSIVE = "diffusive"
    CRITICAL = "critical"
    SUPERDIFFUSIVE = "superdiffusive"


def parse_param(text: str) -> Param:
    """Parse ``"num/den"`` as an exact Fraction, anything else as a float."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    return float(text)


def _check_unit_interval(name: str, value: Param) -> None:
    if not 0 <= value <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class WalkParams:
    """Parameters of a memory walk on the d-dimensional integer lattice.

    ``q`` is present only for the axis-decoupled auxiliary walk; ``q=None``
    means the plain memory walk.  ``initial_step`` is a signed axis index:
    +1 means the first step is +e_1 (the default convention), -2 means -e_2.
    """

    d: int
    p: Param
    q: Param | None = None
    initial_step: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        _check_unit_interval("p", self.p)
        if self.q is not None:
            _check_unit_interval("q", self.q)
        if self.initial_step == 0 or abs(self.initial_step) > self.d:
            raise ValueError(
                f"initial_step must be a signed axis index in 1..{self.d}, "
                f"got {self.initial_step}"
            )

    @property
    def p_float(self) -> float:
        return float(self.p)

    @property
    def q_float(self) -> float:
        if self.q is None:
            raise ValueError("params carry no secondary parameter q")
        return float(self.q)

    @property
    def has_q(self) -> bool:
        return self.q is not None

    def to_dict(self) -> dict:
        enc = lambda v: str(v) if isinstance(v, Fraction) else v
        out = {"d": self.d, "p": enc(self.p), "initial_step": self.initial_step}
        if self.q is not None:
            out["q"] = enc(self.q)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WalkParams":
        dec = lambda v: parse_param(v) if isinstance(v, str) else v
        return cls(
            d=int(data["d"]),
            p=dec(data["p"]),
            q=dec(data["q"]) if data.get("q") is not None else None,
            initial_step=int(data.get("initial_step", 1)),
        )


@dataclass(frozen=True)
class DerivedConstants:
    """Memory exponent, critical parameter and the resulting regime."""

    memory_exponent: Param  # (2dp - 1) / (2d - 1)
    critical_p: Param       # (2d + 1) / (4d)
    regime: Regime

    @property
    def a(self) -> float:
        return float(self.memory_exponent)


def derived_constants(params: WalkParams) -> DerivedConstants:
    """Compute the memory exponent and classify the regime.

    Exact rational arithmetic is used when ``p`` is a Fraction, so the
    critical case ``p == (2d+1)/(4d)`` is detected exactly.
    """
    d, p = params.d, params.p
    if isinstance(p, Fraction):
        exponent: Param = Fraction(2 * d * p.numerator - p.denominator,
                                   (2 * d - 1) * p.denominator)
        critical: Param = Fraction(2 * d + 1, 4 * d)
    else:
        exponent = (2 * d * p - 1) / (2 * d - 1)
        critical = (2 * d + 1) / (4 * d)
    if p < critical:
        regime = Regime.DIFFUSIVE
    elif p == critical:
        regime = Regime.CRITICAL
    else:
        regime = Regime.SUPERDIFFUSIVE
    return DerivedConstants(exponent, critical, regime)


class RegimeError(ValueError):
    """A quantity was requested outside the parameter regime where it exists."""


def require_superdiffusive(params: WalkParams) -> DerivedConstants:
    consts = derived_constants(params)
    if consts.regime is not Regime.SUPERDIFFUSIVE:
        raise RegimeError(
            f"p={params.p} (d={params.d}) is not superdiffusive: "
            f"need p > {consts.critical_p}"
        )
    return consts
