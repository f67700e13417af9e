"""
Inhomogeneous transverse-field Ising chain: model definitions and the
analytic Kibble-Zurek (KZM) / inhomogeneous Kibble-Zurek (IKZM) predictions.

Conventions
-----------
Units are hbar = 1 and edge coupling J = 1; energies are in J, times in hbar/J.
The Hamiltonian is

    H(t) = - sum_n J(n) sz_n sz_{n+1} - h(t) sum_n sx_n

with the coupling profile J(n) = J0 (1 - alpha_q |n|^q) and the linear ramp
h(t) = J0 (1 - t / tau_Q) over t in [-tau_Q, tau_Q].

Site i (0-based) sits at the centered coordinate n_i = i - (L - 1) / 2, so for
even L the profile maximum falls between the two central sites. Bond i joins
sites i and i + 1 and is evaluated at its midpoint n_i + 1/2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

HBAR = 1.0

# Thresholds used for the (inequality-only) validity conditions of the IKZM estimate.
SMALL_PROFILE_THRESHOLD = 0.1


class ValidityWarning(UserWarning):
    """An analytic estimate is evaluated outside its regime of validity."""


def site_coordinates(L: int) -> np.ndarray:
    """Centered coordinates n_i = i - (L-1)/2 of the L sites."""
    return np.arange(L, dtype=float) - (L - 1) / 2.0


def bond_coordinates(L: int) -> np.ndarray:
    """Centered midpoint coordinates of the L-1 nearest-neighbour bonds."""
    return site_coordinates(L)[:-1] + 0.5


def _profile(n, J0: float, q: float, alpha_q: float):
    return J0 * (1.0 - alpha_q * np.abs(n) ** q)


@dataclass(frozen=True)
class ChainSpec:
    """Chain length and coupling profile J(n) = J0 (1 - alpha_q |n|^q).

    ``alpha_q = 0`` is the homogeneous chain with all couplings equal to J0.
    """

    L: int
    q: float = 2.0
    alpha_q: float = 0.0
    J0: float = 1.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"chain length must be an integer >= 2, got {self.L}")
        if not self.q > 0:
            raise ValueError(f"profile exponent q must be positive, got {self.q}")
        if self.alpha_q < 0:
            raise ValueError(f"alpha_q must be >= 0, got {self.alpha_q}")
        if not self.J0 > 0:
            raise ValueError(f"J0 must be positive, got {self.J0}")
        for n in (site_coordinates(self.L), bond_coordinates(self.L)):
            if np.any(_profile(n, self.J0, self.q, self.alpha_q) <= 0):
                raise ValueError(
                    "coupling profile crosses zero inside the chain "
                    f"(L={self.L}, q={self.q}, alpha_q={self.alpha_q})"
                )

    @classmethod
    def from_end_ratio(cls, L: int, q: float, ratio: float, J0: float = 1.0) -> "ChainSpec":
        """Build the profile whose value at n = +-L/2 equals ``ratio * J0``."""
        return cls(L=L, q=q, alpha_q=alpha_for_end_ratio(L, q, ratio), J0=J0)

    @property
    def homogeneous(self) -> bool:
        return self.alpha_q == 0.0

    def coupling(self, n):
        """J(n) at arbitrary centered coordinate(s)."""
        return _profile(np.asarray(n, dtype=float), self.J0, self.q, self.alpha_q)


@dataclass(frozen=True)
class QuenchProtocol:
    """Linear ramp h(t) = J0 (1 - t/tau_Q) on the window [-tau_Q, tau_Q].

    ``dt`` defaults to ``min(0.01, tau_Q / 1000)``.
    """

    tau_Q: float
    dt: float | None = None

    def __post_init__(self):
        if not self.tau_Q > 0:
            raise ValueError(f"tau_Q must be positive, got {self.tau_Q}")
        if self.dt is None:
            object.__setattr__(self, "dt", default_dt(self.tau_Q))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.tau_Q:
            raise ValueError(f"dt={self.dt} exceeds tau_Q={self.tau_Q}")

    @property
    def t_start(self) -> float:
        return -self.tau_Q

    @property
    def t_end(self) -> float:
        return self.tau_Q

    def sample_times(self, count: int = 200) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, count)


def default_dt(tau_Q: float) -> float:
    return min(0.01, tau_Q / 1000.0)


@dataclass(frozen=True)
class CriticalExponents:
    """Critical exponents and microscopic scales of a continuous quantum transition.

    The Ising defaults take xi0 = 1 lattice spacing and tau0 = hbar / (2 J0).
    """

    nu: float = 1.0
    z: float = 1.0
    xi0: float = 1.0
    tau0: float = 0.5

    def __post_init__(self):
        for name in ("nu", "z", "xi0", "tau0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def ising(cls, J0: float = 1.0) -> "CriticalExponents":
        return cls(nu=1.0, z=1.0, xi0=1.0, tau0=HBAR / (2.0 * J0))


@dataclass(frozen=True)
class Prediction:
    """Bundle of analytic predictions for one (spec, protocol) pair."""

    d_kzm: float
    d_kzm_exact: float
    d_ikzm: float | None
    n_hat: float | None
    tau_Q_star: float | None
    beta_kzm: float
    beta_ikzm: float | None
    suppression_ratio: float | None = None
    flags: dict = field(default_factory=dict)


class KzmDensity(NamedTuple):
    d_kzm: float
    d_exact: float


class IkzmDensity(NamedTuple):
    d: float
    suppression_ratio: float


class GeneralExponents(NamedTuple):
    beta_kzm: float
    beta_ikzm: float
    sound_speed_exponent: float


class SublinearDensity(NamedTuple):
    n_hat_inner: float
    d: float


# --------------------------------------------------------------------------- profile


def coupling_profile(spec: ChainSpec) -> np.ndarray:
    """Coupling J(n_i) evaluated at the L site coordinates."""
    return spec.coupling(site_coordinates(spec.L))


def bond_couplings(spec: ChainSpec) -> np.ndarray:
    """The L-1 bond couplings entering the Hamiltonian (bond-midpoint evaluation)."""
    return spec.coupling(bond_coordinates(spec.L))


def alpha_for_end_ratio(L: int, q: float, ratio: float) -> float:
    """alpha_q such that J(+-L/2) = ratio * J0."""
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"end ratio must lie in (0, 1], got {ratio}")
    return (1.0 - ratio) / (L / 2.0) ** q


# --------------------------------------------------------------------------- ramp


def field_at(t, protocol: QuenchProtocol, spec: ChainSpec):
    """Transverse field of the linear ramp; t outside [-tau_Q, tau_Q] is rejected."""
    t_arr = np.asarray(t, dtype=float)
    tol = 1e-12 * protocol.tau_Q
    if np.any(t_arr < protocol.t_start - tol) or np.any(t_arr > protocol.t_end + tol):
        raise ValueError(f"t={t} outside the ramp window [-{protocol.tau_Q}, {protocol.tau_Q}]")
    h = spec.J0 * (1.0 - t_arr / protocol.tau_Q)
    return float(h) if h.ndim == 0 else h


def front_time(n, spec: ChainSpec, protocol: QuenchProtocol):
    """Time t_F(n) = tau_Q alpha_q |n|^q at which site n becomes locally critical."""
    return protocol.tau_Q * spec.alpha_q * np.abs(n) ** spec.q


def local_quench_time(n, spec: ChainSpec, protocol: QuenchProtocol):
    """tau_Q(n) = tau_Q J(n) / J0."""
    return protocol.tau_Q * spec.coupling(n) / spec.J0


def epsilon(n, t, spec: ChainSpec, protocol: QuenchProtocol):
    """Local reduced distance to criticality (h(t) - J(n)) / J(n).

    Positive in the paramagnet. It equals (t_F(n) - t) / tau_Q(n).
    """
    J = spec.coupling(n)
    if np.any(J <= 0):
        raise ValueError("epsilon requires J(n) > 0")
    return (field_at(t, protocol, spec) - J) / J


def front_velocity(n, spec: ChainSpec, protocol: QuenchProtocol):
    """Speed of the critical front at coordinate n.

    For q >= 1 this is 1 / (alpha_q q tau_Q |n|^(q-1)). For q < 1 the
    two-region formula alpha_q q tau_Q |n|^(1-q) is returned instead.
    """
    n_abs = np.abs(np.asarray(n, dtype=float))
    a, q, tau = spec.alpha_q, spec.q, protocol.tau_Q
    if a == 0:
        raise ValueError("front velocity is infinite for a homogeneous chain")
    if q < 1:
        return a * q * tau * n_abs ** (1.0 - q)
    if q > 1 and np.any(n_abs == 0):
        raise ValueError("front velocity diverges at n = 0 for q > 1")
    with np.errstate(divide="ignore"):
        return 1.0 / (a * q * tau * n_abs ** (q - 1.0))


def sound_speed(J):
    """Ising sound velocity s = 2 J / hbar."""
    return 2.0 * np.asarray(J) / HBAR


# --------------------------------------------------------------------------- KZM / IKZM


def kzm_correlation_length(J_ref: float, tau_Q: float) -> float:
    """Frozen-out correlation length xi_hat = sqrt(2 J tau_Q / hbar)."""
    return math.sqrt(2.0 * J_ref * tau_Q / HBAR)


def predict_kzm_density(J_ref: float, tau_Q: float) -> KzmDensity:
    """Homogeneous KZM estimate and the exact asymptote (smaller by 2 pi)."""
    if not tau_Q > 0:
        raise ValueError(f"tau_Q must be positive, got {tau_Q}")
    d = 1.0 / kzm_correlation_length(J_ref, tau_Q)
    return KzmDensity(d, d / (2.0 * math.pi))


def _require_superlinear(spec: ChainSpec):
    if not spec.q > 1:
        raise ValueError(f"this estimate requires q > 1, got q={spec.q}")
    if spec.alpha_q == 0:
        raise ValueError("this estimate requires an inhomogeneous chain (alpha_q > 0)")


def effective_half_size(spec: ChainSpec, protocol: QuenchProtocol, warn: bool = True) -> float:
    """Half-width n_hat of the region where the front outruns the sound velocity.

    n_hat = [hbar / (2 alpha_q q tau_Q J0)]^(1/(q-1)).
    """
    _require_superlinear(spec)
    n_hat = (HBAR / (2.0 * spec.alpha_q * spec.q * protocol.tau_Q * spec.J0)) ** (1.0 / (spec.q - 1.0))
    if warn:
        flags = ikzm_validity(spec, protocol, n_hat)
        if not flags["small_profile"]:
            warnings.warn(
                f"alpha_q n_hat^q = {spec.alpha_q * n_hat ** spec.q:.3g} is not small", ValidityWarning, stacklevel=2
            )
        if not flags["nonadiabatic"]:
            warnings.warn("2 n_hat / xi_hat <= 1: onset of adiabatic dynamics", ValidityWarning, stacklevel=2)
    return n_hat


def ikzm_validity(spec: ChainSpec, protocol: QuenchProtocol, n_hat: float | None = None) -> dict:
    """Flags for alpha_q n_hat^q << 1 (read as < 0.1) and 2 n_hat / xi_hat > 1."""
    if n_hat is None:
        n_hat = effective_half_size(spec, protocol, warn=False)
    xi_hat = kzm_correlation_length(spec.J0, protocol.tau_Q)
    return {
        "small_profile": bool(spec.alpha_q * n_hat**spec.q < SMALL_PROFILE_THRESHOLD),
        "nonadiabatic": bool(2.0 * n_hat / xi_hat > 1.0),
        "fits_in_chain": bool(2.0 * n_hat < spec.L),
    }


def suppression_ratio(spec: ChainSpec, protocol: QuenchProtocol) -> float:
    """d_IKZM / d_KZM = 2 n_hat / L."""
    return 2.0 * effective_half_size(spec, protocol, warn=False) / spec.L


def predict_ikzm_density(spec: ChainSpec, protocol: QuenchProtocol) -> IkzmDensity:
    """IKZM power law d = (2/L) (1/(alpha_q q))^(1/(q-1)) (hbar/(2 J0 tau_Q))^((q+1)/(2q-2))."""
    _require_superlinear(spec)
    q = spec.q
    d = (
        (2.0 / spec.L)
        * (1.0 / (spec.alpha_q * q)) ** (1.0 / (q - 1.0))
        * (HBAR / (2.0 * spec.J0 * protocol.tau_Q)) ** ((q + 1.0) / (2.0 * q - 2.0))
    )
    return IkzmDensity(d, suppression_ratio(spec, protocol))


def predict_crossover(spec: ChainSpec) -> float:
    """Quench time tau_Q* at which 2 n_hat equals the chain length.

    Reduces to hbar / (2 alpha J0 L) for q = 2.
    """
    _require_superlinear(spec)
    q = spec.q
    return HBAR / (2.0 * spec.alpha_q * q * spec.J0 * (spec.L / 2.0) ** (q - 1.0))


def ikzm_exponent(q: float, exponents: CriticalExponents | None = None) -> float:
    """beta_IKZM = (1 + q nu) / ((1 + z nu)(q - 1))."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    e = exponents or CriticalExponents()
    return (1.0 + q * e.nu) / ((1.0 + e.z * e.nu) * (q - 1.0))


def kzm_exponent(exponents: CriticalExponents | None = None) -> float:
    e = exponents or CriticalExponents()
    return e.nu / (1.0 + e.z * e.nu)


def predict_general_exponents(exponents: CriticalExponents, q: float) -> GeneralExponents:
    """KZM and IKZM exponents for arbitrary (nu, z), plus the tau_Q exponent of s_hat."""
    e = exponents
    return GeneralExponents(
        kzm_exponent(e),
        ikzm_exponent(q, e),
        e.nu * (e.z - 1.0) / (1.0 + e.nu * e.z),
    )


def frozen_sound_speed(exponents: CriticalExponents, tau_Q: float) -> float:
    """s_hat = (xi0/tau0) (tau0/tau_Q)^(nu (z-1)/(1 + nu z))."""
    e = exponents
    return (e.xi0 / e.tau0) * (e.tau0 / tau_Q) ** (e.nu * (e.z - 1.0) / (1.0 + e.nu * e.z))


def general_half_size(exponents: CriticalExponents, spec: ChainSpec, tau_Q: float) -> float:
    """Half-size from v_F > s_hat for general exponents.

    n_hat = (1/(alpha_q q xi0))^(1/(q-1)) (tau0/tau_Q)^((1+nu)/((1+nu z)(q-1))).
    """
    _require_superlinear(spec)
    e, q = exponents, spec.q
    return (1.0 / (spec.alpha_q * q * e.xi0)) ** (1.0 / (q - 1.0)) * (e.tau0 / tau_Q) ** (
        (1.0 + e.nu) / ((1.0 + e.nu * e.z) * (q - 1.0))
    )


def general_ikzm_density(exponents: CriticalExponents, spec: ChainSpec, tau_Q: float) -> float:
    """d_IKZM = (2/(L xi0)) (1/(alpha_q q xi0))^(1/(q-1)) (tau0/tau_Q)^beta_IKZM."""
    _require_superlinear(spec)
    e, q = exponents, spec.q
    beta = ikzm_exponent(q, e)
    return (2.0 / (spec.L * e.xi0)) * (1.0 / (spec.alpha_q * q * e.xi0)) ** (1.0 / (q - 1.0)) * (
        e.tau0 / tau_Q
    ) ** beta


# --------------------------------------------------------------------------- deviations


def predict_sublinear_density(
    spec: ChainSpec, protocol: QuenchProtocol, J_ref: float | None = None
) -> SublinearDensity:
    """Two-region defect formation for 0 < q < 1.

    Defects form outside [-n_hat, n_hat] with
    n_hat = (2 J_ref / (hbar alpha_q q tau_Q))^(1/(1-q)); the density is the KZM
    value minus the adiabatic central part. ``J_ref`` is the local coupling
    entering the sound velocity; it defaults to J0 (with a warning). The result
    is clipped at zero once the central region covers the whole chain.
    """
    q, a, tau = spec.q, spec.alpha_q, protocol.tau_Q
    if not 0 < q < 1:
        raise ValueError(f"sublinear density requires 0 < q < 1, got q={q}")
    if a == 0:
        raise ValueError("sublinear density requires alpha_q > 0")
    if J_ref is None:
        warnings.warn("J_ref not given; evaluating the local coupling at J0", ValidityWarning, stacklevel=2)
        J_ref = spec.J0
    n_hat = (2.0 * J_ref / (HBAR * a * q * tau)) ** (1.0 / (1.0 - q))
    d_kzm = predict_kzm_density(spec.J0, tau).d_kzm
    central = (
        (2.0 / spec.L)
        * (4.0 * J_ref * spec.J0 / (HBAR**2 * a * q)) ** (1.0 / (1.0 - q))
        * (HBAR / (2.0 * spec.J0 * tau)) ** ((3.0 - q) / (2.0 - 2.0 * q))
    )
    return SublinearDensity(n_hat, max(d_kzm - central, 0.0))


def forms_defects(n, spec: ChainSpec, protocol: QuenchProtocol):
    """Exact formation predicate |n|^(q-1) (1 - alpha_q |n|^q) < hbar / (2 alpha_q q tau_Q J0), q > 1."""
    _require_superlinear(spec)
    n_abs = np.abs(np.asarray(n, dtype=float))
    lhs = n_abs ** (spec.q - 1.0) * (1.0 - spec.alpha_q * n_abs**spec.q)
    return lhs < HBAR / (2.0 * spec.alpha_q * spec.q * protocol.tau_Q * spec.J0)


# --------------------------------------------------------------------------- bundle


def predict(spec: ChainSpec, protocol: QuenchProtocol) -> Prediction:
    """Evaluate every applicable analytic prediction for one quench."""
    kzm = predict_kzm_density(spec.J0, protocol.tau_Q)
    beta_kzm = kzm_exponent()
    if spec.homogeneous or spec.q <= 1:
        return Prediction(kzm.d_kzm, kzm.d_exact, None, None, None, beta_kzm, None)
    n_hat = effective_half_size(spec, protocol, warn=False)
    ikzm = predict_ikzm_density(spec, protocol)
    return Prediction(
        d_kzm=kzm.d_kzm,
        d_kzm_exact=kzm.d_exact,
        d_ikzm=ikzm.d,
        n_hat=n_hat,
        tau_Q_star=predict_crossover(spec),
        beta_kzm=beta_kzm,
        beta_ikzm=ikzm_exponent(spec.q),
        suppression_ratio=ikzm.suppression_ratio,
        flags=ikzm_validity(spec, protocol, n_hat),
    )
