"""Parameter containers for protocols, queue policies and the network."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .errors import DomainError


class Variant(str, Enum):
    COMPOUND = "compound"
    RENO = "reno"
    ILLINOIS = "illinois"
    AFRICA = "africa"


@dataclass(frozen=True)
class CompoundParams:
    """Power-law window update constants: increase alpha*w^(k-1), decrease beta*w."""

    alpha: float = 0.125
    k: float = 0.75
    beta: float = 0.5

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        # k = 0 is admitted so that the classic AIMD protocol (alpha=1, k=0,
        # beta=1/2) is expressible as a special case of the same family.
        if not 0 <= self.k < 1:
            raise DomainError(f"k must be in [0, 1), got {self.k}")
        if not 0 < self.beta < 1:
            raise DomainError(f"beta must be in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class IllinoisParams:
    alpha_max: float = 10.0
    beta_min: float = 0.125

    def __post_init__(self):
        if not self.alpha_max > 0:
            raise DomainError(f"alpha_max must be > 0, got {self.alpha_max}")
        if not 0 < self.beta_min < 1:
            raise DomainError(f"beta_min must be in (0, 1), got {self.beta_min}")


@dataclass(frozen=True)
class ProtocolSpec:
    """A TCP variant tag plus the constants of its window update functions."""

    variant: Variant
    compound: CompoundParams | None = None
    illinois: IllinoisParams | None = None

    def __post_init__(self):
        if self.variant is Variant.COMPOUND and self.compound is None:
            object.__setattr__(self, "compound", CompoundParams())
        if self.variant is Variant.ILLINOIS and self.illinois is None:
            object.__setattr__(self, "illinois", IllinoisParams())

    @classmethod
    def compound_tcp(cls, alpha=0.125, k=0.75, beta=0.5):
        return cls(Variant.COMPOUND, compound=CompoundParams(alpha, k, beta))

    @classmethod
    def reno(cls):
        return cls(Variant.RENO)

    @classmethod
    def illinois_tcp(cls, alpha_max=10.0, beta_min=0.125):
        return cls(Variant.ILLINOIS, illinois=IllinoisParams(alpha_max, beta_min))

    @classmethod
    def africa_tcp(cls):
        return cls(Variant.AFRICA)

    def with_(self, **kw):
        """Copy with updated window-update constants (dual-window variant only;
        the other variants have no free (alpha, k, beta))."""
        if self.variant is not Variant.COMPOUND:
            raise DomainError(
                f"cannot override (alpha, k, beta) on a {self.variant.value} spec"
            )
        return replace(self, compound=replace(self.compound, **kw))


@dataclass(frozen=True)
class RedParams:
    """RED queue policy constants.

    gamma is the fluid-model averaging weight; b_min/b_max the packet-count
    thresholds; p_max the drop probability reached at b_max.
    """

    gamma: float = 1e-4
    b_min: float = 50.0
    b_max: float = 550.0
    p_max: float = 0.1

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise DomainError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 < self.b_min < self.b_max:
            raise DomainError(
                f"need 0 < b_min < b_max, got ({self.b_min}, {self.b_max})"
            )
        if not 0 < self.p_max < 1:
            raise DomainError(f"p_max must be in (0, 1), got {self.p_max}")

    @property
    def rho(self) -> float:
        """Slope of the drop probability between the two thresholds."""
        return self.p_max / (self.b_max - self.b_min)

    @property
    def eta(self) -> float:
        """Slope of the drop probability above the upper threshold."""
        return (1.0 - self.p_max) / self.b_max


@dataclass(frozen=True)
class ThresholdParams:
    """Deterministic drop-above-threshold queue policy."""

    q_th: float = 15.0

    def __post_init__(self):
        if not self.q_th >= 1:
            raise DomainError(f"q_th must be >= 1, got {self.q_th}")


@dataclass(frozen=True)
class NetworkParams:
    """Per-flow capacity (pkts/s), round-trip propagation delay (s), the
    dimensionless rate multiplier kappa, and an optional finite buffer."""

    c_per_flow: float
    rtt: float
    kappa: float = 1.0
    buffer: float | None = None

    def __post_init__(self):
        if not self.c_per_flow > 0:
            raise DomainError(f"c_per_flow must be > 0, got {self.c_per_flow}")
        if not self.rtt > 0:
            raise DomainError(f"rtt must be > 0, got {self.rtt}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be > 0, got {self.kappa}")

    @property
    def bdp(self) -> float:
        """Per-flow bandwidth-delay product, in packets."""
        return self.c_per_flow * self.rtt
