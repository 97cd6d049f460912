"""Model parameters for the driven spin ensemble with squeezed collective decay."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from sslab.errors import InvalidParameterError

# slack for theta round-off when callers pass e.g. np.pi / 2
_THETA_SLACK = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Tuple (N, Omega, theta, Gamma).

    Rates and frequencies are in units of ``gamma``; the default ``gamma=1``
    fixes the time unit.
    """

    n_spins: int
    omega: float = 0.0
    theta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise InvalidParameterError(f"n_spins must be a positive integer, got {self.n_spins!r}")
        object.__setattr__(self, "n_spins", int(self.n_spins))
        for name in ("omega", "theta", "gamma"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.omega < 0:
            raise InvalidParameterError(f"omega must be >= 0, got {self.omega}")
        if self.gamma <= 0:
            raise InvalidParameterError(f"gamma must be > 0, got {self.gamma}")
        if not (-_THETA_SLACK <= self.theta <= math.pi / 2 + _THETA_SLACK):
            raise InvalidParameterError(f"theta must lie in [0, pi/2], got {self.theta}")

    @property
    def j(self) -> float:
        """Total angular momentum J = N/2."""
        return self.n_spins / 2

    @property
    def dim(self) -> int:
        return self.n_spins + 1

    @property
    def gamma_minus(self) -> float:
        return self.gamma * math.cos(self.theta) ** 2

    @property
    def gamma_plus(self) -> float:
        return self.gamma * math.sin(self.theta) ** 2

    @property
    def chi(self) -> float:
        return self.gamma * math.sin(self.theta) * math.cos(self.theta)

    @property
    def gamma_theta(self) -> float:
        """Dephasing-like rate Gamma (cos theta + sin theta)^2 of the rotating-wave generator."""
        return self.gamma * (math.cos(self.theta) + math.sin(self.theta)) ** 2

    @property
    def chi_theta(self) -> float:
        """Ladder rate Gamma (cos theta - sin theta)^2 of the rotating-wave generator."""
        return self.gamma * (math.cos(self.theta) - math.sin(self.theta)) ** 2

    @property
    def is_strong_symmetry_point(self) -> bool:
        return abs(self.theta - math.pi / 4) < 1e-12

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict:
        return asdict(self)
