"""Validity diagnostics and state-overlap measures.

Two small-parameter diagnostics rate the approximate propagators: the
drive-rate parameter mu (how fast the frequency moves) and the
drive-acceleration parameter Upsilon (how fast the closure coefficients
move per unit scaled time).  The sweep harness reruns a boundary-value
protocol family over a grid of durations and scores the approximate
solutions against the exact one with state fidelities.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import (
    GeneratorFactorization,
    apply_identity_rescaling,
    propagate_adiabatic,
    propagate_exact,
    propagate_inertial,
)
from .errors import (
    DegenerateSpectrum,
    LiouvdynError,
    SingularDenominator,
    UnphysicalState,
)
from .linalg import DEGENERACY_GAP, EigenFrame, bi_eigendecompose
from .models import (
    BlochState,
    GaussianState,
    HOModel,
    HOProtocol,
    TLSModel,
    TLSProtocol,
    TwoQubitState,
    initial_vector,
    reconstruct_state,
)

_DEN_TOL = 1e-12


def adiabatic_parameter(model, t: float) -> float:
    """Instantaneous drive-rate parameter of the model's protocol.

    Oscillator: d(omega)/dt / omega^2.  Spin: the same ratio built from
    the dressed gap, (d(omega)/dt * epsilon) / Omega^3.  For the linear
    ramp protocols both reduce to chi0 + a*t.
    """
    if isinstance(model, HOModel):
        p = model.protocol
        return p.omega_dot(t) / p.omega(t) ** 2
    if isinstance(model, TLSModel):
        p = model.protocol
        return p.omega_dot(t) * p.epsilon / p.Omega(t) ** 3
    raise ValueError("drive-rate parameter is defined for HOModel and TLSModel")


def _directional_gradient(grad_B, dchi_dtheta) -> np.ndarray:
    """Contract a (possibly multi-parameter) generator gradient with the
    parameter velocity."""
    if isinstance(grad_B, np.ndarray) and grad_B.ndim == 2:
        grads = (grad_B,)
    else:
        grads = tuple(np.asarray(g) for g in grad_B)
    rates = np.atleast_1d(np.asarray(dchi_dtheta, dtype=float))
    if len(grads) != rates.size:
        raise ValueError("gradient count does not match parameter velocity size")
    out = np.zeros(grads[0].shape, dtype=complex)
    for g, r in zip(grads, rates):
        out += r * g
    return out


def inertial_parameter(
    frame: EigenFrame, grad_B, dchi_dtheta, *, occupied=None
) -> float:
    """Drive-acceleration parameter of one closed block.

    Sums |<G_k| dB/dchi |F_n> / (lambda_n - lambda_k)^2 * dchi/dtheta|
    over all ordered mode pairs n != k.  `occupied` restricts the k sum
    to the listed mode indices; the default keeps every mode.
    """
    directional = _directional_gradient(grad_B, dchi_dtheta)
    if directional.shape != (frame.dim, frame.dim):
        raise ValueError("gradient shape does not match the frame dimension")
    lam = frame.lambdas
    ks = range(frame.dim) if occupied is None else tuple(occupied)
    scale = max(np.max(np.abs(lam)), 1.0)
    total = 0.0
    for k in ks:
        gk = frame.left(k)
        for n in range(frame.dim):
            if n == k:
                continue
            gap = lam[n] - lam[k]
            if abs(gap) < DEGENERACY_GAP * scale:
                raise DegenerateSpectrum(
                    f"modes {k} and {n} are too close to evaluate the "
                    "drive-acceleration parameter"
                )
            total += abs(np.vdot(gk, directional @ frame.right(n)) / gap**2)
    return total


def inertial_parameter_at(fact: GeneratorFactorization, t: float) -> float:
    """Drive-acceleration parameter of a factorized generator at time t.

    Diagonalizes every closed block at the instantaneous parameter value
    and accumulates the block sums.  Single-element blocks cannot mix
    and contribute nothing.
    """
    if fact.grad_B is None or fact.dchi_dtheta is None:
        raise ValueError("factorization lacks grad_B or dchi_dtheta")
    chi = fact.chi_of_t(t)
    B = np.asarray(fact.B_of_chi(chi))
    grad = fact.grad_B(chi)
    rate = fact.dchi_dtheta(t)
    if isinstance(grad, np.ndarray) and grad.ndim == 2:
        grads = (grad,)
    else:
        grads = tuple(np.asarray(g) for g in grad)
    total = 0.0
    for lo, hi in fact.block_ranges(B.shape[0]):
        if hi - lo == 1:
            continue
        frame = bi_eigendecompose(B[lo:hi, lo:hi])
        sub = tuple(g[lo:hi, lo:hi] for g in grads)
        total += inertial_parameter(frame, sub, rate)
    return total


def ho_inertial_parameter_closed(t: float, protocol: HOProtocol) -> float:
    """Closed-form oscillator drive-acceleration parameter.

    Evaluates the frequency-profile expression
        mu^2 (w''/w - 2 (w'/w)^2)
        / [ (2 kappa)^2 ( (w''/w) log(w/w0) - (w'/w)^2 (2 log(w/w0) + 1) ) ]
    with kappa = sqrt(4 - mu^2), returned as a magnitude.  Points where
    the bracketed denominator vanishes (for example t -> 0 on a ramp
    that starts from rest) are flagged instead of evaluated.
    """
    w0 = protocol.omega(0.0)
    w = protocol.omega(t)
    wd = protocol.omega_dot(t)
    wdd = protocol.omega_ddot(t)
    if wd == 0.0 and wdd == 0.0:
        return 0.0
    mu = wd / (w * w)
    ksq = 4.0 - mu * mu
    if ksq <= 0.0:
        raise SingularDenominator(
            "mode splitting kappa vanishes at |mu| >= 2; the expression is undefined"
        )
    log_ratio = math.log(w / w0)
    curv = wdd / w
    rate_sq = (wd / w) ** 2
    num = mu * mu * (curv - 2.0 * rate_sq)
    bracket = curv * log_ratio - rate_sq * (2.0 * log_ratio + 1.0)
    scale = abs(curv) * max(abs(log_ratio), 1.0) + rate_sq * (
        2.0 * abs(log_ratio) + 1.0
    )
    if abs(bracket) <= _DEN_TOL * scale:
        raise SingularDenominator(
            f"denominator vanishes at t = {t:g}; point skipped"
        )
    return abs(num / (4.0 * ksq * bracket))


def _clip_rounding(x: float) -> float:
    # physical validation already bounds the violation; only rounding
    # noise can leak through here
    return x if x > 0.0 else 0.0


def _gaussian_log_fidelity(s1: GaussianState, s2: GaussianState) -> float:
    V1 = s1.covariance()
    V2 = s2.covariance()
    Vs = V1 + V2
    delta_u = np.array([s2.q - s1.q, s2.p - s1.p])
    det_sum = Vs[0, 0] * Vs[1, 1] - Vs[0, 1] * Vs[1, 0]
    if det_sum <= 0.0:
        raise UnphysicalState("sum of covariance matrices is not positive")
    excess = 4.0 * _clip_rounding(s1.uncertainty_product() - 0.25) * _clip_rounding(
        s2.uncertainty_product() - 0.25
    )
    quad = 0.5 * float(delta_u @ np.linalg.solve(Vs, delta_u))
    log_prefactor = math.log(math.sqrt(det_sum + excess) + math.sqrt(excess)) - (
        math.log(det_sum)
    )
    return log_prefactor - quad


def _bloch_one_minus(s1: BlochState, s2: BlochState) -> float:
    r1 = s1.r
    r2 = s2.r
    p1 = _clip_rounding(1.0 - float(r1 @ r1))
    p2 = _clip_rounding(1.0 - float(r2 @ r2))
    dot = float(r1 @ r2)
    diff = r1 - r2
    cross = np.cross(r1, r2)
    denom = 2.0 * ((1.0 - dot) + math.sqrt(p1 * p2))
    if denom == 0.0:
        return 0.0
    return _clip_rounding(
        (float(diff @ diff) - float(cross @ cross)) / denom
    )


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(M)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def _two_qubit_fidelity(s1: TwoQubitState, s2: TwoQubitState) -> float:
    root = _psd_sqrt(np.asarray(s1.rho))
    sv = np.linalg.svd(root @ _psd_sqrt(np.asarray(s2.rho)), compute_uv=False)
    return float(np.sum(sv)) ** 2


def one_minus_fidelity(s1, s2) -> float:
    """Fidelity deficit 1 - F, kept accurate as F -> 1.

    The direct difference 1 - F underflows once F agrees with 1 to
    machine precision; each variant therefore computes the deficit from
    a cancellation-free rearrangement.
    """
    if isinstance(s1, GaussianState) and isinstance(s2, GaussianState):
        s1.validate()
        s2.validate()
        return -math.expm1(_gaussian_log_fidelity(s1, s2))
    if isinstance(s1, BlochState) and isinstance(s2, BlochState):
        s1.validate()
        s2.validate()
        return _bloch_one_minus(s1, s2)
    if isinstance(s1, TwoQubitState) and isinstance(s2, TwoQubitState):
        s1.validate()
        s2.validate()
        return 1.0 - _two_qubit_fidelity(s1, s2)
    raise ValueError("state variants do not match or are unsupported")


def fidelity(s1, s2) -> float:
    """Squared Bures overlap of two states of the same variant.

    Gaussian pairs use the closed single-mode covariance form; qubit
    pairs use the closed Bloch form; two-qubit pairs take the nuclear
    norm of the product of the density-matrix square roots.
    """
    return 1.0 - one_minus_fidelity(s1, s2)


def log_time_grid(t_min: float, t_max: float, n: int) -> np.ndarray:
    """Logarithmically spaced protocol durations."""
    if not (0.0 < t_min < t_max) or n < 2:
        raise ValueError("need 0 < t_min < t_max and n >= 2")
    return np.geomspace(t_min, t_max, n)


@dataclass(frozen=True)
class SweepResult:
    """Columns of a duration sweep; rows align with `t_f`.

    Failed points carry the failure text in `errors` and NaN in every
    numeric column.
    """

    t_f: np.ndarray
    fidelity_inertial: np.ndarray
    fidelity_adiabatic: np.ndarray
    max_abs_mu: np.ndarray
    max_upsilon: np.ndarray
    neg_log10_one_minus_fidelity: np.ndarray
    errors: tuple

    COLUMNS = (
        "t_f",
        "fidelity_inertial",
        "fidelity_adiabatic",
        "max_abs_mu",
        "max_upsilon",
        "neg_log10_one_minus_fidelity",
    )

    def __post_init__(self):
        n = len(self.t_f)
        for name in self.COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has wrong length")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if len(self.errors) != n:
            raise ValueError("errors tuple has wrong length")
        for col in (self.fidelity_inertial, self.fidelity_adiabatic):
            ok = np.isfinite(col)
            if np.any(col[ok] < -1e-12) or np.any(col[ok] > 1.0 + 1e-9):
                raise ValueError("fidelity column leaves [0, 1]")

    def rows(self):
        for i in range(len(self.t_f)):
            yield tuple(float(getattr(self, name)[i]) for name in self.COLUMNS)

    def to_dict(self) -> dict:
        out = {name: [float(x) for x in getattr(self, name)] for name in self.COLUMNS}
        out["errors"] = list(self.errors)
        return out


def _rebuild_for_duration(model, t_f: float, omega_target: float):
    if isinstance(model, HOModel):
        p = model.protocol
        proto = HOProtocol.solve_boundary(p.omega0, omega_target, t_f, p.a)
        return HOModel(protocol=proto, mass=model.mass, q0=model.q0, p0=model.p0)
    if isinstance(model, TLSModel):
        p = model.protocol
        proto = TLSProtocol.solve_boundary(
            p.Omega0, omega_target, p.epsilon, t_f, p.abar
        )
        return TLSModel(protocol=proto, initial_values=model.initial_values)
    raise ValueError("sweeps support HOModel and TLSModel")


def max_parameters_along(model, t_f: float, samples: int = 65):
    """Largest |mu| and largest Upsilon over an even time sample of the run.

    The oscillator uses the closed-form Upsilon (skipping flagged
    singular samples); the spin model uses the generic pairwise sum.
    """
    ts = np.linspace(0.0, t_f, samples)
    mu_max = max(abs(adiabatic_parameter(model, t)) for t in ts)
    ups = []
    if isinstance(model, HOModel):
        for t in ts:
            try:
                ups.append(ho_inertial_parameter_closed(t, model.protocol))
            except SingularDenominator:
                continue
    else:
        fact = model.factorization()
        for t in ts:
            ups.append(inertial_parameter_at(fact, t))
    return mu_max, (max(ups) if ups else math.nan)


def _sweep_point(model, t_f: float, omega_target: float, samples: int, tols):
    m = _rebuild_for_duration(model, t_f, omega_target)
    fact = m.factorization()
    v0 = initial_vector(m)
    v_exact = propagate_exact(fact, v0, t_f, rtol=tols[0], atol=tols[1])
    v_inertial, _ = propagate_inertial(fact, v0, t_f, phase_tol=tols[2])
    v_adiabatic = propagate_adiabatic(fact, v0, t_f)
    exact, inertial, adiabatic = (
        reconstruct_state(m, apply_identity_rescaling(m, v, t_f), t_f)
        for v in (v_exact, v_inertial, v_adiabatic)
    )
    deficit = one_minus_fidelity(exact, inertial)
    mu_max, ups_max = max_parameters_along(m, t_f, samples)
    return (
        1.0 - deficit,
        fidelity(exact, adiabatic),
        mu_max,
        ups_max,
        -math.log10(deficit) if deficit > 0.0 else math.inf,
    )


def fidelity_sweep(
    model,
    t_f_grid,
    *,
    omega_target: float = None,
    samples: int = 65,
    threads: int = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    phase_tol: float = 1e-10,
) -> SweepResult:
    """Score the approximate propagators over a grid of protocol durations.

    Each grid point solves the boundary-value protocol reaching
    `omega_target` (default: half the starting frequency) in t_f,
    propagates the exact, inertial-frame and frozen-frame solutions,
    and scores the approximations against the exact state.  Points are
    independent; `threads` > 1 evaluates them concurrently with
    order-preserving assembly.  A failed point is recorded and the
    sweep continues.

    `rtol`/`atol` control the exact reference integration and
    `phase_tol` the inertial phase refinement; tighten them when the
    infidelity floor being measured approaches the defaults.
    """
    grid = np.asarray(t_f_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("t_f grid must be a non-empty 1-d array")
    if omega_target is None:
        p = model.protocol
        omega_target = 0.5 * (p.Omega0 if isinstance(model, TLSModel) else p.omega0)

    tols = (rtol, atol, phase_tol)

    def run(t_f):
        try:
            return _sweep_point(model, float(t_f), omega_target, samples, tols), None
        except (LiouvdynError, ArithmeticError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, grid))
    else:
        outcomes = [run(t) for t in grid]

    nan_row = (math.nan,) * 5
    values = [row if row is not None else nan_row for row, _ in outcomes]
    cols = list(zip(*values))
    return SweepResult(
        t_f=grid,
        fidelity_inertial=np.array(cols[0]),
        fidelity_adiabatic=np.array(cols[1]),
        max_abs_mu=np.array(cols[2]),
        max_upsilon=np.array(cols[3]),
        neg_log10_one_minus_fidelity=np.array(cols[4]),
        errors=tuple(err for _, err in outcomes),
    )
