import math

import numpy as np
import pytest

from liouvdyn.engine import (
    GeneratorFactorization,
    LiouvilleVector,
    propagate_inertial,
)
from liouvdyn.errors import (
    AmbiguousMatching,
    DegenerateSpectrum,
    NotConverged,
    UnsupportedDimension,
)
from liouvdyn.geometric import (
    GeneratorFamily,
    ParameterCircuit,
    _refine,
    accumulated_phase,
    geometric_phase_line,
    geometric_phase_surface,
    ho_family,
    liouville_curvature,
    tls_family,
    two_spin_local_family,
    two_spin_nonlocal_family,
)
from liouvdyn.models import (
    HOModel,
    HOProtocol,
    initial_vector,
    two_spin_generator_grads,
    two_spin_generators,
)

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# polar angle and radius of the anchor circuit; a two-state generator
# chi . sigma transported counterclockwise around this latitude circle
# picks up -pi (1 - cos theta) on its upper mode: the transport
# one-form of the upper eigenvector integrates to half the enclosed
# solid angle, independent of the radius
ANCHOR_THETA = 0.6
ANCHOR_RADIUS = 1.3
ANCHOR_PHASE = -math.pi * (1.0 - math.cos(ANCHOR_THETA))


def spin_family():
    return GeneratorFamily(
        B_of_chi=lambda chi: chi[0] * PAULI_X + chi[1] * PAULI_Y + chi[2] * PAULI_Z,
        n_params=3,
        grad_B=lambda chi: (PAULI_X, PAULI_Y, PAULI_Z),
    )


def anchor_point(s):
    a = 2.0 * math.pi * s
    return np.array(
        [
            ANCHOR_RADIUS * math.sin(ANCHOR_THETA) * math.cos(a),
            ANCHOR_RADIUS * math.sin(ANCHOR_THETA) * math.sin(a),
            ANCHOR_RADIUS * math.cos(ANCHOR_THETA),
        ]
    )


def anchor_circuit(samples=64):
    return ParameterCircuit(path=anchor_point, closed=True, samples=samples)


def unit_square_circuit():
    # 0.1-sided square centered at (0.3, 0.3); its corners and centroid
    # sit on the chi1 = chi2 line where the nine-dimensional spectrum
    # has accidental crossings between uncoupled product modes
    return ParameterCircuit.from_waypoints(
        [[0.25, 0.25], [0.35, 0.25], [0.35, 0.35], [0.25, 0.35]],
        closed=True,
    )


class TestParameterCircuit:
    def test_rejects_too_few_samples(self):
        with pytest.raises(ValueError):
            ParameterCircuit(path=lambda s: np.array([s]), closed=False, samples=3)

    def test_rejects_open_endpoints_when_closed(self):
        with pytest.raises(ValueError):
            ParameterCircuit(path=lambda s: np.array([s]), closed=True)

    def test_rejects_inconsistent_path_shape(self):
        def path(s):
            return np.array([s]) if s < 0.5 else np.array([s, s])

        with pytest.raises(ValueError):
            ParameterCircuit(path=path, closed=False)

    def test_points_shape_and_endpoints(self):
        circ = anchor_circuit()
        pts = circ.points(10)
        assert pts.shape == (11, 3)
        assert np.allclose(pts[0], pts[-1], atol=1e-12)
        assert circ.dim == 3

    def test_scalar_path_is_wrapped(self):
        circ = ParameterCircuit(
            path=lambda s: 0.2 * math.sin(2.0 * math.pi * s), closed=True, samples=8
        )
        assert circ.dim == 1
        assert circ.points(4).shape == (5, 1)

    def test_waypoints_detect_closure(self):
        closed = ParameterCircuit.from_waypoints([[0, 0], [1, 0], [0, 1], [0, 0]])
        assert closed.closed
        open_ = ParameterCircuit.from_waypoints([[0, 0], [1, 0], [0, 1]])
        assert not open_.closed

    def test_waypoints_forced_closure_appends_start(self):
        circ = ParameterCircuit.from_waypoints(
            [[0, 0], [1, 0], [0, 1]], closed=True
        )
        assert circ.closed
        assert np.allclose(circ.path(1.0), [0, 0])

    def test_waypoints_default_samples_track_segments(self):
        assert unit_square_circuit().samples == 64

    def test_waypoints_need_two_points(self):
        with pytest.raises(ValueError):
            ParameterCircuit.from_waypoints([[0.0, 0.0]])

    def test_waypoint_interpolation_is_piecewise_linear(self):
        circ = ParameterCircuit.from_waypoints([[0, 0], [2, 0], [2, 2]])
        assert np.allclose(circ.path(0.25), [1.0, 0.0])
        assert np.allclose(circ.path(0.75), [2.0, 1.0])


class TestGeneratorFamily:
    def test_kronecker_sum_rejects_multiparameter_factors(self):
        with pytest.raises(ValueError):
            GeneratorFamily.kronecker_sum((spin_family(),))

    def test_kronecker_sum_matches_direct_cross_generator(self):
        fam = two_spin_nonlocal_family()
        chi = np.array([0.31, 0.17])
        direct = two_spin_generators(chi[0], chi[1])[1]
        assert np.max(np.abs(fam.matrix(chi) - direct)) < 1e-14

    def test_kronecker_sum_gradients_match_direct(self):
        fam = two_spin_nonlocal_family()
        chi = np.array([0.31, 0.17])
        direct = two_spin_generator_grads(chi[0], chi[1])[1]
        for got, want in zip(fam.grad_B(chi), direct):
            assert np.max(np.abs(got - want)) < 1e-12


class TestRefine:
    def test_second_order_sequence_converges(self):
        calls = []

        def evaluate(n):
            calls.append(n)
            return 0.7 + 3.0 / n**2

        assert abs(_refine(evaluate, 64) - 0.7) < 1e-9
        assert len(calls) <= 5

    def test_flat_sequence_returns_immediately(self):
        calls = []

        def evaluate(n):
            calls.append(n)
            return 0.25

        assert _refine(evaluate, 64) == 0.25
        assert len(calls) == 2

    def test_ambiguous_levels_are_skipped(self):
        def evaluate(n):
            if n < 256:
                raise AmbiguousMatching("coarse")
            return 0.7 + 3.0 / n**2

        assert abs(_refine(evaluate, 64) - 0.7) < 1e-9

    def test_non_contracting_sequence_raises(self):
        def evaluate(n):
            return math.sin(float(n))

        with pytest.raises(NotConverged):
            _refine(evaluate, 64)


class TestSpinAnchor:
    def test_line_phase_matches_solid_angle(self):
        fam = spin_family()
        circ = anchor_circuit()
        assert abs(geometric_phase_line(fam, circ, 0) - ANCHOR_PHASE) < 1e-8
        assert abs(geometric_phase_line(fam, circ, 1) + ANCHOR_PHASE) < 1e-8

    def test_surface_phase_matches_line(self):
        fam = spin_family()
        circ = anchor_circuit()
        line = geometric_phase_line(fam, circ, 0)
        surf = geometric_phase_surface(fam, circ, 0)
        assert abs(surf - line) < 1e-7

    def test_phase_ignores_parameterization_origin(self):
        fam = spin_family()
        base = geometric_phase_line(fam, anchor_circuit(), 0)
        shifted = ParameterCircuit(
            path=lambda s: anchor_point((s + 0.3) % 1.0), closed=True, samples=64
        )
        assert abs(geometric_phase_line(fam, shifted, 0) - base) < 1e-8

    def test_double_traversal_doubles_phase(self):
        fam = spin_family()
        base = geometric_phase_line(fam, anchor_circuit(), 0)
        twice = ParameterCircuit(
            path=lambda s: anchor_point((2.0 * s) % 1.0), closed=True, samples=128
        )
        assert abs(geometric_phase_line(fam, twice, 0) - 2.0 * base) < 1e-8

    def test_retraced_excursion_cancels_exactly(self):
        def lobe(s):
            u = 1.0 - abs(2.0 * s - 1.0)
            return np.array([0.2 + 0.3 * u, 0.1 + 0.2 * u, 1.0])

        circ = ParameterCircuit(path=lobe, closed=True, samples=64)
        assert abs(geometric_phase_line(spin_family(), circ, 1)) < 1e-10

    def test_mode_index_validated(self):
        with pytest.raises(ValueError):
            geometric_phase_line(spin_family(), anchor_circuit(), 2)
        with pytest.raises(ValueError):
            geometric_phase_surface(spin_family(), anchor_circuit(), -1)


class TestCurvature:
    def test_axis_value_is_inverse_square(self):
        # chi . sigma on the symmetry axis: upper-mode curvature points
        # along the axis with magnitude 1 / (2 |chi|^2)
        rows = liouville_curvature(spin_family(), [0.0, 0.0, ANCHOR_RADIUS])
        expected = 1.0j / (2.0 * ANCHOR_RADIUS**2)
        assert np.allclose(rows[0], [0.0, 0.0, expected], atol=1e-12)
        assert np.allclose(rows[1], [0.0, 0.0, -expected], atol=1e-12)

    def test_finite_difference_gradients_agree(self):
        point = [0.2, -0.4, 0.9]
        analytic = liouville_curvature(spin_family(), point)
        fd = liouville_curvature(
            GeneratorFamily(B_of_chi=spin_family().B_of_chi, n_params=3), point
        )
        assert np.max(np.abs(analytic - fd)) < 1e-8

    def test_single_parameter_family_is_flat(self):
        rows = liouville_curvature(ho_family(), [0.3])
        assert np.max(np.abs(rows)) == 0.0

    def test_kronecker_sum_family_is_flat(self):
        rows = liouville_curvature(two_spin_nonlocal_family(), [0.3, 0.45])
        assert np.max(np.abs(rows)) < 1e-12

    def test_block_family_is_flat(self):
        rows = liouville_curvature(two_spin_local_family(), [0.3, 0.45])
        assert np.max(np.abs(rows)) == 0.0

    def test_rejects_more_than_three_parameters(self):
        fam = GeneratorFamily(
            B_of_chi=lambda chi: chi[0] * PAULI_X + chi[3] * PAULI_Z, n_params=4
        )
        with pytest.raises(UnsupportedDimension):
            liouville_curvature(fam, [0.1, 0.2, 0.3, 0.4])
        circ = ParameterCircuit(
            path=lambda s: np.array([math.cos(2 * math.pi * s),
                                     math.sin(2 * math.pi * s), 0.0, 1.0]),
            closed=True,
        )
        with pytest.raises(UnsupportedDimension):
            geometric_phase_surface(fam, circ, 0)


class TestModelCircuits:
    def test_one_parameter_loops_carry_no_phase(self):
        circ = ParameterCircuit(
            path=lambda s: np.array([0.3 + 0.25 * math.sin(2.0 * math.pi * s)]),
            closed=True,
            samples=64,
        )
        for fam in (ho_family(), tls_family()):
            m = fam.matrix(np.array([0.3])).shape[0]
            for k in range(m):
                assert abs(geometric_phase_line(fam, circ, k)) < 1e-10
                assert geometric_phase_surface(fam, circ, k) == 0.0

    def test_local_modes_ignore_partner_excursions(self):
        # spin-1 block modes must not react to a closed chi2-only loop
        circ = ParameterCircuit(
            path=lambda s: np.array(
                [0.4, 0.2 + 0.15 * math.sin(2.0 * math.pi * s)]
            ),
            closed=True,
            samples=64,
        )
        fam = two_spin_local_family()
        for k in range(6):
            assert abs(geometric_phase_line(fam, circ, k)) < 1e-10

    def test_square_line_and_surface_agree(self):
        fam = two_spin_nonlocal_family()
        circ = unit_square_circuit()
        for k in (0, 4, 8):
            line = geometric_phase_line(fam, circ, k)
            surf = geometric_phase_surface(fam, circ, k)
            assert abs(line - surf) < 1e-6
            assert abs(line) < 1e-8

    def test_unstructured_route_handles_accidental_crossings(self):
        # same generator without the factor structure: the square's
        # corners sit on exact nine-dimensional eigenvalue collisions,
        # so the line walk refuses; the surface form only ever samples
        # interior points off the collision set and must agree with the
        # factor-structured result
        fam = GeneratorFamily(
            B_of_chi=lambda chi: two_spin_generators(chi[0], chi[1])[1],
            n_params=2,
            grad_B=lambda chi: two_spin_generator_grads(chi[0], chi[1])[1],
        )
        circ = unit_square_circuit()
        with pytest.raises(DegenerateSpectrum):
            geometric_phase_line(fam, circ, 0)
        assert abs(geometric_phase_surface(fam, circ, 0)) < 1e-10

    def test_monodromy_is_refused(self):
        # branches +-sqrt(c) swap when the loop winds around c = 0
        fam = GeneratorFamily(
            B_of_chi=lambda c: np.array([[0.0, 1.0], [c[0] + 1.0j * c[1], 0.0]]),
            n_params=2,
        )
        circ = ParameterCircuit(
            path=lambda s: 0.5 * np.array(
                [math.cos(2.0 * math.pi * s), math.sin(2.0 * math.pi * s)]
            ),
            closed=True,
            samples=64,
        )
        with pytest.raises(DegenerateSpectrum):
            geometric_phase_line(fam, circ, 0)

    def test_surface_needs_closed_circuit(self):
        arc = ParameterCircuit(
            path=lambda s: anchor_point(0.5 * s), closed=False, samples=64
        )
        with pytest.raises(ValueError):
            geometric_phase_surface(spin_family(), arc, 0)


class TestAccumulatedPhase:
    def test_constant_parameter_phases_are_eigenvalue_times_angle(self):
        # chi frozen at 0.05: Lambda_k = lambda_k(chi) * theta(t) exactly,
        # with theta(t) = -ln(1 - omega0 chi0 t) / chi0 for this protocol
        model = HOModel(protocol=HOProtocol(20.0, 0.05, 0.0))
        fact = model.factorization()
        t_f = 0.7
        _, sol = propagate_inertial(fact, initial_vector(model), t_f)
        theta = -math.log(1.0 - 20.0 * 0.05 * t_f) / 0.05
        assert abs(fact.theta_of_t(t_f) - theta) < 1e-12 * theta
        kappa = math.sqrt(4.0 - 0.05**2)
        expected = np.array([0.0, kappa, -kappa, kappa / 2.0, -kappa / 2.0, 0.0])
        lam = accumulated_phase(sol, t=t_f)
        assert np.max(np.abs(lam - expected * theta)) < 1e-9

    def test_time_mismatch_is_rejected(self):
        model = HOModel(protocol=HOProtocol(20.0, 0.05, 0.0))
        _, sol = propagate_inertial(model.factorization(), initial_vector(model), 0.7)
        with pytest.raises(ValueError):
            accumulated_phase(sol, t=0.8)
        assert accumulated_phase(sol) is sol.Lambda

    def test_transport_part_matches_line_form_on_closed_circuit(self):
        # drive chi . sigma once around the anchor circle in unit time;
        # the engine's transport phases must land on the line-form values
        fact = GeneratorFactorization(
            omega_of_t=lambda t: 1.0,
            B_of_chi=lambda chi: chi[0] * PAULI_X + chi[1] * PAULI_Y + chi[2] * PAULI_Z,
            chi_of_t=lambda t: anchor_point(t),
            theta_of_t=lambda t: t,
        )
        v0 = LiouvilleVector(coeffs=np.array([1.0, 0.5], dtype=complex), t=0.0, theta=0.0)
        _, sol = propagate_inertial(fact, v0, 1.0, phase_tol=1e-8)
        fam = spin_family()
        circ = anchor_circuit()
        line = np.array(
            [geometric_phase_line(fam, circ, 0), geometric_phase_line(fam, circ, 1)]
        )
        assert np.max(np.abs(sol.geo_phase.real - line)) < 1e-7
        assert np.max(np.abs(sol.dyn_phase.real - np.array([1.3, -1.3]))) < 1e-9

    def test_ramped_oscillator_transport_is_subdominant(self):
        # frequency halving over unit time: transport phases stay below
        # 1e-3 of the dynamical ones on every oscillating mode
        model = HOModel(protocol=HOProtocol.solve_boundary(20.0, 10.0, 1.0, -5e-3))
        _, sol = propagate_inertial(model.factorization(), initial_vector(model), 1.0)
        dyn = np.abs(sol.dyn_phase)
        geo = np.abs(sol.geo_phase)
        oscillating = dyn > 1e-6
        assert oscillating.sum() == 4
        ratio = np.max(geo[oscillating] / dyn[oscillating])
        assert ratio < 1e-3
        assert 1e-5 < ratio < 5e-4
