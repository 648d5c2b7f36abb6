"""Model constants and their validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace


#: Share of the founder's capital given to a spawned company.
SPAWN_FRACTION = 0.1


class ParameterError(ValueError):
    """Invalid model parameter. ``key`` names the offending field when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class EconomyParams:
    # Weight-function coefficients. The defaults are the calibrated set
    # documented in the README; they balance the three terms of H at the
    # densities reached after the initial transient.
    a1: float = 2.0
    a2: float = 0.01
    a3: float = 5.0
    c_g: float = 0.3
    c_l: float = 0.3
    p_inv: float = 0.3
    c_connect: float = 0.0
    xi: float = 300.0
    L: int = 3
    trait_size: int = 1000
    bankruptcy_threshold: float = 1.0
    investment_threshold: float = 20.0
    resource_total: int = 4000
    initial_companies: int = 1000
    iterations: int = 5000
    spawn_half_width: int = 50
    snapshot_interval: int = 100
    spawn_deducts: bool = True
    ring_competition: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("a1", "a2", "a3", "c_g", "c_l", "c_connect", "xi",
                     "bankruptcy_threshold", "investment_threshold"):
            value = getattr(self, name)
            # c_connect may be +/-inf to gate everything or nothing
            if math.isnan(value) or (name != "c_connect" and math.isinf(value)):
                raise ParameterError(f"{name} must be finite, got {value}", name)
        if not 0.0 <= self.p_inv <= 1.0:
            raise ParameterError(f"p_inv must lie in [0, 1], got {self.p_inv}", "p_inv")
        if not 0.0 <= self.c_g:
            raise ParameterError(f"c_g must be >= 0, got {self.c_g}", "c_g")
        if not 0.0 <= self.c_l < 1.0:
            raise ParameterError(f"c_l must lie in [0, 1), got {self.c_l}", "c_l")
        if self.xi <= 0:
            raise ParameterError(f"xi must be > 0, got {self.xi}", "xi")
        if self.L < 1:
            raise ParameterError(f"L must be >= 1, got {self.L}", "L")
        if self.trait_size < 2:
            raise ParameterError(f"trait_size must be >= 2, got {self.trait_size}", "trait_size")
        if self.bankruptcy_threshold <= 0:
            raise ParameterError("bankruptcy_threshold must be > 0", "bankruptcy_threshold")
        if self.investment_threshold <= 0:
            raise ParameterError("investment_threshold must be > 0", "investment_threshold")
        if self.bankruptcy_threshold >= self.investment_threshold:
            raise ParameterError(
                "bankruptcy_threshold must be below investment_threshold",
                "bankruptcy_threshold",
            )
        if SPAWN_FRACTION * self.investment_threshold < self.bankruptcy_threshold:
            # otherwise a freshly spawned company could start below the bankruptcy threshold
            raise ParameterError(
                f"investment_threshold must be at least {1 / SPAWN_FRACTION:g} x bankruptcy_threshold",
                "investment_threshold",
            )
        if self.initial_companies < 0:
            raise ParameterError("initial_companies must be >= 0", "initial_companies")
        if self.resource_total < 1:
            raise ParameterError("resource_total must be >= 1", "resource_total")
        if self.initial_companies > self.resource_total:
            raise ParameterError(
                f"initial_companies ({self.initial_companies}) exceeds "
                f"resource_total ({self.resource_total})",
                "initial_companies",
            )
        if self.iterations < 0:
            raise ParameterError("iterations must be >= 0", "iterations")
        if not 0 <= self.spawn_half_width < self.trait_size // 2:
            raise ParameterError("spawn_half_width must lie in [0, trait_size/2)", "spawn_half_width")
        if self.snapshot_interval < 1:
            raise ParameterError("snapshot_interval must be >= 1", "snapshot_interval")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EconomyParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            key = sorted(unknown)[0]
            raise ParameterError(f"unknown parameter {key!r}", key)
        return cls(**data)

    def with_(self, **changes) -> "EconomyParams":
        return replace(self, **changes)

    def digest(self, seed: int | None = None) -> str:
        """Short stable hash of the parameters (and seed, if given)."""
        payload = json.dumps({"params": self.to_dict(), "seed": seed}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]
