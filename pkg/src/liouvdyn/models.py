"""Concrete driven models: parametric oscillator, two-level system, spin pair.

Each model supplies a finite operator basis over which the Heisenberg
dynamics closes, the factorized generator acting on that basis, driving
protocols with closed-form scaled time where available, and the inversion
from basis expectation values back to physical states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .engine import GeneratorFactorization, LiouvilleVector
from .errors import DomainExceeded, UnphysicalState

# basis block layout: (energy-like triple)(linear pair)(identity)
HO_BLOCKS = ((0, 3), (3, 5), (5, 6))
# (energy-like triple)(identity)
TLS_BLOCKS = ((0, 3), (3, 4))
TWO_SPIN_LOCAL_BLOCKS = ((0, 3), (3, 6))

_DOUBLE_ROOT_REL = 1e-14


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _ho_coupling(chi: float) -> np.ndarray:
    A = np.zeros((6, 6))
    A[0, 1] = -chi
    A[1, 0] = -chi
    A[1, 2] = 2.0
    A[2, 1] = -2.0
    A[3, 3] = 0.5 * chi
    A[3, 4] = -1.0
    A[4, 3] = 1.0
    A[4, 4] = -0.5 * chi
    return A


def ho_generator(chi: float) -> np.ndarray:
    """6x6 oscillator generator over {H, L, C, K, J, identity}.

    Block-diagonal: a 3x3 energy-like block, a 2x2 block for the linear
    observables, and a zero row for the identity.  Real spectrum for
    |chi| < 2; the blocks collapse onto a non-diagonalizable point at
    |chi| = 2.
    """
    return 1j * _ho_coupling(float(chi))


def ho_generator_grad(chi: float) -> np.ndarray:
    """d/dchi of ho_generator (constant in chi)."""
    A = np.zeros((6, 6))
    A[0, 1] = A[1, 0] = -1.0
    A[3, 3] = 0.5
    A[4, 4] = -0.5
    return 1j * A


def _tls_coupling(chi: float) -> np.ndarray:
    return np.array(
        [[0.0, -chi, 0.0], [chi, 0.0, -1.0], [0.0, 1.0, 0.0]]
    )


def tls_generator(chi: float) -> np.ndarray:
    """3x3 two-level generator over the scaled {H, L, C} triple.

    i times a real antisymmetric-plus-rotation coupling; Hermitian, so the
    spectrum {0, +/-sqrt(1+chi^2)} is real for every chi.
    """
    return 1j * _tls_coupling(float(chi))


def tls_generator_grad(chi: float) -> np.ndarray:
    A = np.zeros((3, 3))
    A[0, 1] = -1.0
    A[1, 0] = 1.0
    return 1j * A


def tls_generator_embedded(chi: float) -> np.ndarray:
    """4x4 extension with a zero identity row/column appended."""
    B = np.zeros((4, 4), dtype=complex)
    B[:3, :3] = tls_generator(chi)
    return B


def two_spin_generators(chi1: float, chi2: float):
    """Generators for the local (6x6) and cross-correlator (9x9) vectors.

    The local vector stacks both single-spin triples, so its generator is
    block-diagonal.  The cross-correlator vector holds the nine products
    A_a(1) A_b(2) ordered with the first-spin index slow (entry 3a+b), and
    its generator is the Kronecker sum of the single-spin couplings: it
    does not decompose into independent sub-blocks.
    """
    A1 = _tls_coupling(float(chi1))
    A2 = _tls_coupling(float(chi2))
    B_local = np.zeros((6, 6), dtype=complex)
    B_local[:3, :3] = 1j * A1
    B_local[3:, 3:] = 1j * A2
    eye = np.eye(3)
    B_cross = 1j * (np.kron(A1, eye) + np.kron(eye, A2))
    return B_local, B_cross


def two_spin_generator_grads(chi1: float, chi2: float):
    """Partials of (B_local, B_cross) with respect to (chi1, chi2)."""
    dA = np.zeros((3, 3))
    dA[0, 1] = -1.0
    dA[1, 0] = 1.0
    eye = np.eye(3)
    dBl_d1 = np.zeros((6, 6), dtype=complex)
    dBl_d1[:3, :3] = 1j * dA
    dBl_d2 = np.zeros((6, 6), dtype=complex)
    dBl_d2[3:, 3:] = 1j * dA
    dBc_d1 = 1j * np.kron(dA, eye)
    dBc_d2 = 1j * np.kron(eye, dA)
    return (dBl_d1, dBl_d2), (dBc_d1, dBc_d2)


# ---------------------------------------------------------------------------
# protocols
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HOProtocol:
    """Frequency ramp omega(t) = omega0 / (1 - omega0 (chi0 t + a t^2/2)).

    Built so the rate parameter chi(t) = omega_dot / omega^2 is exactly
    chi0 + a t: chi0 is the initial rate, `a` its constant acceleration.
    """

    omega0: float
    chi0: float
    a: float = 0.0

    def __post_init__(self):
        if self.omega0 <= 0.0:
            raise ValueError("omega0 must be positive")

    def _q(self, t: float) -> float:
        # inverse frequency 1/omega(t); the protocol ends where it hits 0
        return 1.0 / self.omega0 - self.chi0 * t - 0.5 * self.a * t * t

    @property
    def t_max(self) -> float:
        """Earliest positive time at which the frequency diverges."""
        if self.a == 0.0:
            if self.chi0 <= 0.0:
                return math.inf
            return 1.0 / (self.omega0 * self.chi0)
        A = -0.5 * self.a
        B = -self.chi0
        C = 1.0 / self.omega0
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            return math.inf
        r = math.sqrt(disc)
        roots = sorted(((-B - r) / (2 * A), (-B + r) / (2 * A)))
        positive = [x for x in roots if x > 0.0]
        return positive[0] if positive else math.inf

    def _require_valid(self, t: float):
        if t >= self.t_max or self._q(t) <= 0.0:
            raise DomainExceeded(
                f"t={t} is outside the protocol domain [0, {self.t_max})"
            )

    def omega(self, t: float) -> float:
        self._require_valid(t)
        return 1.0 / self._q(t)

    def mu(self, t: float) -> float:
        """Rate parameter omega_dot/omega^2, linear by construction."""
        self._require_valid(t)
        return self.chi0 + self.a * t

    def omega_dot(self, t: float) -> float:
        w = self.omega(t)
        return (self.chi0 + self.a * t) * w * w

    def omega_ddot(self, t: float) -> float:
        w = self.omega(t)
        mu = self.chi0 + self.a * t
        return self.a * w * w + 2.0 * mu * mu * w**3

    def theta(self, t: float) -> float:
        """Scaled time, the closed-form antiderivative of omega."""
        self._require_valid(t)
        if t == 0.0:
            return 0.0
        if self.a == 0.0:
            if self.chi0 == 0.0:
                return self.omega0 * t
            return -math.log1p(-self.omega0 * self.chi0 * t) / self.chi0
        A = -0.5 * self.a
        B = -self.chi0
        C = 1.0 / self.omega0
        disc = B * B - 4.0 * A * C
        scale = max(B * B, abs(4.0 * A * C))
        if abs(disc) <= _DOUBLE_ROOT_REL * scale:
            r0 = -B / (2.0 * A)
            return -1.0 / (A * (t - r0)) - 1.0 / (A * r0)
        if disc < 0.0:
            R = math.sqrt(-disc)
            return (2.0 / R) * (
                math.atan((2.0 * A * t + B) / R) - math.atan(B / R)
            )
        r = math.sqrt(disc)
        r1 = (-B - r) / (2.0 * A)
        r2 = (-B + r) / (2.0 * A)
        # A (r1 - r2) = -r
        return (-1.0 / r) * (
            math.log(abs((t - r1) / (t - r2))) - math.log(abs(r1 / r2))
        )

    @classmethod
    def solve_boundary(
        cls, omega0: float, omega_target: float, t_f: float, a: float = 0.0
    ) -> "HOProtocol":
        """Protocol hitting omega(t_f) = omega_target for the given a.

        The frequency condition is linear in chi0, so the solve is exact;
        the residual is asserted below 1e-12 relative.
        """
        if t_f <= 0.0 or omega_target <= 0.0:
            raise ValueError("need t_f > 0 and a positive target frequency")
        chi0 = (1.0 / omega0 - 1.0 / omega_target - 0.5 * a * t_f * t_f) / t_f
        protocol = cls(omega0=omega0, chi0=chi0, a=a)
        if protocol.t_max <= t_f:
            raise DomainExceeded(
                "protocol diverges before reaching the requested endpoint"
            )
        residual = abs(protocol.omega(t_f) - omega_target)
        if residual > 1e-12 * omega_target:
            raise ArithmeticError(
                f"boundary solve residual {residual:.3e} too large"
            )
        return protocol


@dataclass(frozen=True)
class TLSProtocol:
    """Level-splitting ramp at constant transverse coupling epsilon.

    Parameterized through z(t) = omega/Omega, driven so that the rate
    parameter (omega_dot epsilon)/Omega^3 is exactly chi0 + abar t.
    """

    epsilon: float
    omega0: float
    chi0: float
    abar: float = 0.0

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.omega0 < 0.0:
            raise ValueError("omega0 must be non-negative")

    @property
    def Omega0(self) -> float:
        return math.hypot(self.omega0, self.epsilon)

    @property
    def z0(self) -> float:
        return self.omega0 / self.Omega0

    def z(self, t: float) -> float:
        return self.z0 + self.epsilon * (self.chi0 * t + 0.5 * self.abar * t * t)

    @property
    def t_max(self) -> float:
        """Earliest positive time at which |z| reaches 1."""
        candidates = []
        for target in (1.0, -1.0):
            # 0.5 abar t^2 + chi0 t + (z0 - target)/epsilon = 0
            c0 = (self.z0 - target) / self.epsilon
            if self.abar == 0.0:
                if self.chi0 != 0.0:
                    candidates.append(-c0 / self.chi0)
                continue
            disc = self.chi0**2 - 2.0 * self.abar * c0
            if disc < 0.0:
                continue
            r = math.sqrt(disc)
            candidates.append((-self.chi0 - r) / self.abar)
            candidates.append((-self.chi0 + r) / self.abar)
        positive = [t for t in candidates if t > 0.0]
        return min(positive) if positive else math.inf

    def _require_valid(self, t: float):
        if t >= self.t_max or abs(self.z(t)) >= 1.0:
            raise DomainExceeded(
                f"t={t} is outside the protocol domain [0, {self.t_max})"
            )

    def Omega(self, t: float) -> float:
        self._require_valid(t)
        z = self.z(t)
        return self.epsilon / math.sqrt(1.0 - z * z)

    def omega(self, t: float) -> float:
        self._require_valid(t)
        z = self.z(t)
        return self.epsilon * z / math.sqrt(1.0 - z * z)

    def mu(self, t: float) -> float:
        self._require_valid(t)
        return self.chi0 + self.abar * t

    def omega_dot(self, t: float) -> float:
        return self.mu(t) * self.Omega(t) ** 3 / self.epsilon

    def theta(self, t: float) -> float:
        self._require_valid(t)
        if t == 0.0:
            return 0.0
        if self.abar == 0.0:
            if self.chi0 == 0.0:
                return self.Omega0 * t
            return (math.asin(self.z(t)) - math.asin(self.z0)) / self.chi0
        value, _ = scipy.integrate.quad(
            self.Omega, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200
        )
        return value

    @classmethod
    def solve_boundary(
        cls,
        Omega_initial: float,
        Omega_target: float,
        epsilon: float,
        t_f: float,
        abar: float = 0.0,
    ) -> "TLSProtocol":
        """Protocol with Omega(0), Omega(t_f) pinned at the given values."""
        if not (0.0 < epsilon < min(Omega_initial, Omega_target)):
            raise ValueError("need 0 < epsilon < both endpoint frequencies")
        if t_f <= 0.0:
            raise ValueError("need t_f > 0")
        omega0 = math.sqrt(Omega_initial**2 - epsilon**2)
        z0 = omega0 / Omega_initial
        z_f = math.sqrt(1.0 - (epsilon / Omega_target) ** 2)
        chi0 = (z_f - z0 - 0.5 * epsilon * abar * t_f * t_f) / (epsilon * t_f)
        protocol = cls(epsilon=epsilon, omega0=omega0, chi0=chi0, abar=abar)
        if protocol.t_max <= t_f:
            raise DomainExceeded(
                "protocol leaves its domain before the requested endpoint"
            )
        residual = abs(protocol.Omega(t_f) - Omega_target)
        if residual > 1e-12 * Omega_target:
            raise ArithmeticError(
                f"boundary solve residual {residual:.3e} too large"
            )
        return protocol


def ho_protocol(t: float, omega0: float, chi0: float, a: float = 0.0):
    """(omega, chi, pace) of the oscillator ramp at time t; pace == omega."""
    p = HOProtocol(omega0=omega0, chi0=chi0, a=a)
    w = p.omega(t)
    return w, p.mu(t), w


def tls_protocol(t: float, epsilon: float, chi0: float, abar: float, omega0: float):
    """(omega, Omega, chi) of the two-level ramp at time t."""
    p = TLSProtocol(epsilon=epsilon, omega0=omega0, chi0=chi0, abar=abar)
    return p.omega(t), p.Omega(t), p.mu(t)


def two_spin_alpha_protocol(t, chi, Omega, alpha0: float = 0.0) -> float:
    """Mixing angle alpha(t) = alpha0 - integral of chi * Omega.

    With omega = Omega cos(alpha) and coupling Omega sin(alpha), this choice
    makes the spin's rate parameter equal chi(t) identically.  Scalars or
    callables are accepted for chi and Omega.
    """
    if not callable(chi) and not callable(Omega):
        return alpha0 - chi * Omega * t
    chi_f = chi if callable(chi) else (lambda _t: chi)
    om_f = Omega if callable(Omega) else (lambda _t: Omega)
    value, _ = scipy.integrate.quad(
        lambda s: chi_f(s) * om_f(s), 0.0, t, epsabs=1e-13, epsrel=1e-12
    )
    return alpha0 - value


# ---------------------------------------------------------------------------
# physical states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianState:
    """First and second moments of a single oscillator mode (hbar = 1)."""

    q: float
    p: float
    sigma_qq: float
    sigma_pp: float
    sigma_qp: float

    def covariance(self) -> np.ndarray:
        return np.array(
            [[self.sigma_qq, self.sigma_qp], [self.sigma_qp, self.sigma_pp]]
        )

    def uncertainty_product(self) -> float:
        return self.sigma_qq * self.sigma_pp - self.sigma_qp**2

    def validate(self, tol: float = 1e-6) -> "GaussianState":
        if self.sigma_qq <= 0.0 or self.sigma_pp <= 0.0:
            raise UnphysicalState("covariances must be positive")
        if self.uncertainty_product() < 0.25 - tol:
            raise UnphysicalState(
                f"uncertainty product {self.uncertainty_product():.6f} "
                "below the quantum bound 1/4"
            )
        return self


@dataclass(frozen=True)
class BlochState:
    """Spin-1/2 state as a Bloch vector (r_x, r_y, r_z)."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.shape != (3,):
            raise ValueError("Bloch vector must have three components")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    def norm(self) -> float:
        return float(np.linalg.norm(self.r))

    def validate(self, tol: float = 1e-6) -> "BlochState":
        if self.norm() > 1.0 + tol:
            raise UnphysicalState(f"Bloch vector norm {self.norm():.6f} > 1")
        return self


@dataclass(frozen=True)
class TwoQubitState:
    """Two-spin state as an explicit 4x4 density matrix."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError("expected a 4x4 density matrix")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def validate(self, tol: float = 1e-6) -> "TwoQubitState":
        if np.max(np.abs(self.rho - self.rho.conj().T)) > tol:
            raise UnphysicalState("density matrix is not Hermitian")
        if abs(np.trace(self.rho).real - 1.0) > tol:
            raise UnphysicalState("density matrix trace differs from 1")
        eigs = np.linalg.eigvalsh(self.rho)
        if eigs.min() < -tol:
            raise UnphysicalState(
                f"density matrix has negative eigenvalue {eigs.min():.3e}"
            )
        return self


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HOModel:
    """Particle in a harmonic trap with time-dependent frequency.

    Basis order: frequency-scaled energy H, asymmetry L, squeeze generator
    C, then position-like K, momentum-like J, then the identity.  The
    scaling absorbs the explicit time dependence, so no identity rescaling
    is needed (all weights zero).
    """

    protocol: HOProtocol
    mass: float = 1.0
    q0: float = 0.0
    p0: float = 0.0

    basis_size = 6
    identity_index = 5
    blocks = HO_BLOCKS

    @property
    def rescaling_weights(self) -> np.ndarray:
        return np.zeros(6)

    def rescaling_base(self, t: float) -> float:
        return self.protocol.omega(t) / self.protocol.omega0

    def factorization(self) -> GeneratorFactorization:
        p = self.protocol
        return GeneratorFactorization(
            omega_of_t=p.omega,
            B_of_chi=ho_generator,
            chi_of_t=p.mu,
            theta_of_t=p.theta,
            grad_B=ho_generator_grad,
            dchi_dtheta=lambda t: p.a / p.omega(t),
            blocks=HO_BLOCKS,
            t_max=p.t_max,
        )


@dataclass(frozen=True)
class TLSModel:
    """Two-level system with ramped splitting and fixed transverse drive.

    Basis order: scaled energy H, transverse partner L, coherence C, then
    the identity.  The scaled triple carries weight 1 under identity
    rescaling (physical values grow with the instantaneous gap).
    """

    protocol: TLSProtocol
    initial_values: tuple = (4.0, 1.0, 1.0)

    basis_size = 4
    identity_index = 3
    blocks = TLS_BLOCKS

    @property
    def epsilon(self) -> float:
        return self.protocol.epsilon

    @property
    def rescaling_weights(self) -> np.ndarray:
        return np.array([1.0, 1.0, 1.0, 0.0])

    def rescaling_base(self, t: float) -> float:
        return self.protocol.Omega(t) / self.protocol.Omega0

    def factorization(self) -> GeneratorFactorization:
        p = self.protocol
        return GeneratorFactorization(
            omega_of_t=p.Omega,
            B_of_chi=tls_generator_embedded,
            chi_of_t=p.mu,
            theta_of_t=p.theta,
            grad_B=lambda chi: _embed_grad(tls_generator_grad(chi)),
            dchi_dtheta=lambda t: p.abar / p.Omega(t),
            blocks=TLS_BLOCKS,
            t_max=p.t_max,
        )

    def vector_from_bloch(self, r, t: float = 0.0) -> LiouvilleVector:
        """Physical basis vector realizing the Bloch vector r at time t."""
        r = np.asarray(r, dtype=float)
        p = self.protocol
        w, Om, eps = p.omega(t), p.Omega(t), p.epsilon
        sx, sy, sz = r / 2.0
        coeffs = np.array(
            [
                w * sz + eps * sx,
                w * sx - eps * sz,
                Om * sy,
                1.0,
            ],
            dtype=complex,
        )
        return LiouvilleVector(coeffs=coeffs, t=t, theta=p.theta(t))


def _embed_grad(g3: np.ndarray) -> np.ndarray:
    g = np.zeros((4, 4), dtype=complex)
    g[:3, :3] = g3
    return g


def _single_spin_triple(Omega: float, alpha: float):
    sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    c, s = math.cos(alpha), math.sin(alpha)
    return (
        Omega * (c * sz + s * sx),
        Omega * (c * sx - s * sz),
        Omega * sy,
    )


@dataclass(frozen=True)
class TwoSpinModel:
    """Pair of non-interacting spins sharing one Rabi frequency.

    Each spin is driven through its mixing angle alpha_i at its own rate
    chi_i.  Local observables live on a 6-vector (two stacked triples);
    cross-correlators on a 9-vector with first-spin index slow.
    """

    Omega: float
    chi1: float
    chi2: float
    alpha0: tuple = (0.0, 0.0)

    local_blocks = TWO_SPIN_LOCAL_BLOCKS

    def alpha(self, t: float, spin: int) -> float:
        chi = (self.chi1, self.chi2)[spin]
        return two_spin_alpha_protocol(t, chi, self.Omega, self.alpha0[spin])

    def generators(self):
        return two_spin_generators(self.chi1, self.chi2)

    @property
    def local_rescaling_weights(self) -> np.ndarray:
        return np.ones(6)

    @property
    def cross_rescaling_weights(self) -> np.ndarray:
        return 2.0 * np.ones(9)

    def reconstruct_two_qubit(
        self, v_local, v_cross, t: float
    ) -> TwoQubitState:
        """Density matrix from local and cross-correlator expectations.

        Expansion over the mutually orthogonal product basis built from
        each spin's instantaneous operator triple.
        """
        v_local = _real_coeffs(np.asarray(v_local), 6)
        v_cross = _real_coeffs(np.asarray(v_cross), 9)
        Om = self.Omega
        triples = [
            _single_spin_triple(Om, self.alpha(t, 0)),
            _single_spin_triple(Om, self.alpha(t, 1)),
        ]
        eye = np.eye(2, dtype=complex)
        rho = np.eye(4, dtype=complex) / 4.0
        nsq = Om * Om / 2.0  # Hilbert-Schmidt norm^2 of each triple member
        for a in range(3):
            rho += v_local[a] * np.kron(triples[0][a], eye) / (2.0 * nsq)
            rho += v_local[3 + a] * np.kron(eye, triples[1][a]) / (2.0 * nsq)
        for a in range(3):
            for b in range(3):
                rho += (
                    v_cross[3 * a + b]
                    * np.kron(triples[0][a], triples[1][b])
                    / (nsq * nsq)
                )
        return TwoQubitState(rho=rho).validate()


# ---------------------------------------------------------------------------
# initial vectors and state reconstruction
# ---------------------------------------------------------------------------


def initial_vector(model) -> LiouvilleVector:
    """Default starting vector of a model at t = 0.

    Oscillator: moments of the (optionally displaced) ground state of the
    initial trap.  Two-level system: the configured triple plus identity.
    """
    if isinstance(model, HOModel):
        w0 = model.protocol.omega0
        m = model.mass
        q0, p0 = model.q0, model.p0
        kinetic = p0 * p0 / (2.0 * m)
        potential = 0.5 * m * w0 * w0 * q0 * q0
        coeffs = np.array(
            [
                0.5 * w0 + kinetic + potential,
                kinetic - potential,
                -w0 * q0 * p0,
                math.sqrt(w0) * q0,
                -p0 / (m * math.sqrt(w0)),
                1.0,
            ],
            dtype=complex,
        )
        return LiouvilleVector(coeffs=coeffs, t=0.0, theta=0.0)
    if isinstance(model, TLSModel):
        coeffs = np.array([*model.initial_values, 1.0], dtype=complex)
        return LiouvilleVector(coeffs=coeffs, t=0.0, theta=0.0)
    raise TypeError(f"no initial vector defined for {type(model).__name__}")


def _real_coeffs(v: np.ndarray, n: int, tol: float = 1e-6) -> np.ndarray:
    if v.shape != (n,):
        raise ValueError(f"expected a length-{n} coefficient vector")
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.max(np.abs(v.imag)) > tol * scale:
        raise UnphysicalState("expectation values have non-real parts")
    return v.real.copy()


def reconstruct_state(model, v, t: float):
    """Physical state from a (rescaled, physical) basis vector at time t.

    Raises UnphysicalState when the recovered moments violate positivity
    or uncertainty constraints beyond 1e-6, which signals a propagation or
    rescaling error upstream.
    """
    coeffs = v.coeffs if isinstance(v, LiouvilleVector) else np.asarray(v)
    if isinstance(model, HOModel):
        c = _real_coeffs(np.asarray(coeffs), 6)
        w = model.protocol.omega(t)
        w0 = model.protocol.omega0
        m = model.mass
        # undo the frequency scaling of the quadratic block
        H, L, C = (w / w0) * c[:3]
        K, J = c[3], c[4]
        pp = m * (H + L)
        qq = (H - L) / (m * w * w)
        qp_sym = -2.0 * C / w
        q = K / math.sqrt(w)
        p = -m * math.sqrt(w) * J
        state = GaussianState(
            q=q,
            p=p,
            sigma_qq=qq - q * q,
            sigma_pp=pp - p * p,
            sigma_qp=0.5 * qp_sym - q * p,
        )
        return state.validate()
    if isinstance(model, TLSModel):
        c = _real_coeffs(np.asarray(coeffs), 4)
        p = model.protocol
        w, Om, eps = p.omega(t), p.Omega(t), p.epsilon
        H, L, C = c[:3]
        sz = (w * H - eps * L) / (Om * Om)
        sx = (eps * H + w * L) / (Om * Om)
        sy = C / Om
        return BlochState(r=2.0 * np.array([sx, sy, sz])).validate()
    if isinstance(model, TwoSpinModel):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (15,):
            raise ValueError(
                "two-spin reconstruction expects local(6) + cross(9) stacked"
            )
        return model.reconstruct_two_qubit(coeffs[:6], coeffs[6:], t)
    raise TypeError(f"no reconstruction defined for {type(model).__name__}")
