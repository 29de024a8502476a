"""The two linear hyperbolic systems, numerical fluxes and wall operators."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .operators import mirror_state


@dataclass(frozen=True)
class SystemSpec:
    """Linear system u_t + A1 u_x + A2 u_y = 0."""

    kind: str                # "advection" | "acoustics"
    m: int
    A1: np.ndarray
    A2: np.ndarray
    lambda_max: float
    beta: np.ndarray = None  # advection velocity (advection only)
    sound_speed: float = None

    @staticmethod
    def advection(beta):
        beta = np.asarray(beta, dtype=float)
        speed = float(np.hypot(*beta))
        if speed <= 0.0:
            raise ConfigurationError("advection velocity must be nonzero")
        return SystemSpec(
            "advection", 1,
            np.array([[beta[0]]]), np.array([[beta[1]]]),
            speed, beta=beta,
        )

    @staticmethod
    def acoustics(c):
        c = float(c)
        if c <= 0.0:
            raise ConfigurationError("sound speed must be positive")
        A1 = np.array([[0.0, c, 0.0], [c, 0.0, 0.0], [0.0, 0.0, 0.0]])
        A2 = np.array([[0.0, 0.0, c], [0.0, 0.0, 0.0], [c, 0.0, 0.0]])
        return SystemSpec("acoustics", 3, A1, A2, c, sound_speed=c)

    def A_n(self, n):
        return n[0] * self.A1 + n[1] * self.A2


@dataclass(frozen=True)
class DissipationSpec:
    """Dissipative flux S_n with S_n(u, u) = 0.

    "upwind" scales the jump by |beta . n| / 2 (advection), "rusanov" by c/2.
    """

    kind: str

    def coefficient(self, spec, n):
        if self.kind == "upwind":
            if spec.beta is None:
                raise ConfigurationError("upwind dissipation requires an advection system")
            return 0.5 * abs(float(spec.beta @ n))
        if self.kind == "rusanov":
            return 0.5 * spec.lambda_max
        raise ConfigurationError(f"unknown dissipation kind {self.kind!r}")


def flux_normal(spec, u, n):
    """Directional physical flux f_n(u) = (n1 A1 + n2 A2) u."""
    u = np.asarray(u, dtype=float)
    return u @ spec.A_n(n).T


def central_flux(spec, u_mu, u_nu, n):
    return 0.5 * (flux_normal(spec, u_mu, n) + flux_normal(spec, u_nu, n))


def dissipation(diss, spec, u_mu, u_nu, n):
    u_mu = np.asarray(u_mu, dtype=float)
    u_nu = np.asarray(u_nu, dtype=float)
    return diss.coefficient(spec, n) * (u_mu - u_nu)


def boundary_flux(spec, diss, u, n):
    """Numerical flux on a physical boundary face with outward normal n.

    Advection: upwind outflow, zero-inflow data contributes nothing.
    Acoustics: flux against the velocity-mirrored state (reflecting wall).
    """
    u = np.asarray(u, dtype=float)
    if spec.kind == "advection":
        bn = float(spec.beta @ n)
        return max(bn, 0.0) * u
    mirrored = mirror_state(u, n)
    return central_flux(spec, u, mirrored, n) + dissipation(diss, spec, u, mirrored, n)
