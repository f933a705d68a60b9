import math

import numpy as np
import pytest

from spinroute.network import Coupling, SpinNetwork, build_diamond_chain, build_pst_chain, build_uniform_chain
from spinroute.oracle import full_hamiltonian, one_hot
from spinroute.sector import (
    DegenerateStateError,
    PulseEvent,
    Schedule,
    SectorHamiltonian,
    ValidationError,
    apply_pulse,
    average_fidelity,
    basis_state,
    evolve,
    peak_search,
    propagate,
    receiver_statistics,
    run_schedule,
    sector_hamiltonian,
    time_series_csv,
    transfer_amplitude,
)

SQ2 = math.sqrt(2)


def chain(n, **kw):
    return sector_hamiltonian(build_uniform_chain(n, **kw))


def three_chain_closed_form(t):
    h = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    return np.eye(3) - 1j / SQ2 * math.sin(SQ2 * t) * h + (math.cos(SQ2 * t) - 1) / 2 * h @ h


def sphere_average_fidelity(g, order=24):
    """Brute-force average of <psi|rho|psi> over the Bloch sphere (Gauss-Legendre in cos theta)."""
    x, wx = np.polynomial.legendre.leggauss(order)
    phis = np.linspace(0, 2 * np.pi, 2 * order, endpoint=False)
    total = 0.0
    for ct, w in zip(x, wx):
        theta = math.acos(ct)
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        for phi in phis:
            psi = np.array([c, np.exp(1j * phi) * s])
            # amplitude-damping-type channel: |1> -> g|1>, lost weight goes to |0>
            rho = np.array(
                [[c * c + s * s * (1 - abs(g) ** 2), c * s * np.exp(-1j * phi) * np.conj(g)],
                 [c * s * np.exp(1j * phi) * g, s * s * abs(g) ** 2]]
            )
            total += w * np.real(np.conj(psi) @ rho @ psi)
    return total / (2 * len(phis))


class TestHamiltonian:
    def test_two_chain(self):
        np.testing.assert_array_equal(chain(2).matrix, [[0, 1], [1, 0]])

    def test_three_chain(self):
        np.testing.assert_array_equal(chain(3).matrix, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    def test_heisenberg_three_chain_diagonal(self):
        # hand count: each bond contributes +D/2 in the vacuum and -D/2 once a spin on it flips
        np.testing.assert_allclose(np.diag(chain(3, anisotropy=1.0).matrix), [-1, -2, -1], atol=0)

    @pytest.mark.parametrize(
        "net",
        [
            build_uniform_chain(4, anisotropy=1.0, field=0.4),
            build_uniform_chain(3, anisotropy=-0.6),
            build_diamond_chain(1),
            SpinNetwork(4, (Coupling(0, 2, 0.7), Coupling(1, 3, -1.3), Coupling(0, 3, 0.2)), (0.1, -0.5, 0, 2), 0.8),
        ],
    )
    def test_matches_full_space_matrix_elements(self, net):
        h = sector_hamiltonian(net).matrix
        full = full_hamiltonian(net)
        e_vac = full[0, 0].real
        n = net.n_sites
        kets = [one_hot(n, k) for k in range(n)]
        ref = np.array([[kets[a].conj() @ full @ kets[b] for b in range(n)] for a in range(n)])
        ref -= e_vac * np.eye(n)
        np.testing.assert_allclose(h, ref, atol=1e-13)

    def test_invalid_network(self):
        with pytest.raises(ValidationError):
            sector_hamiltonian(SpinNetwork(2, (Coupling(0, 0, 1.0),)))

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError):
            SectorHamiltonian(np.array([[0, 1], [0, 0]]))

    def test_read_only(self):
        h = chain(3)
        with pytest.raises(ValueError):
            h.matrix[0, 0] = 5

    def test_eigenvectors_orthonormal(self):
        v = sector_hamiltonian(build_pst_chain(25)).eigenvectors
        assert np.max(np.abs(v.T @ v - np.eye(25))) < 1e-10


class TestPropagation:
    def test_two_chain_half_period(self):
        np.testing.assert_allclose(propagate(chain(2), math.pi / 2), [[0, -1j], [-1j, 0]], atol=1e-15)

    def test_three_chain_transfer(self):
        np.testing.assert_allclose(
            propagate(chain(3), math.pi / SQ2), [[0, 0, -1], [0, -1, 0], [-1, 0, 0]], atol=1e-15
        )

    def test_three_chain_closed_form(self, rng):
        h = chain(3)
        for t in rng.uniform(0, 50, 100):
            np.testing.assert_allclose(propagate(h, t), three_chain_closed_form(t), atol=1e-10)

    def test_two_chain_closed_form(self, rng):
        h = chain(2)
        x = np.array([[0, 1], [1, 0]])
        for t in rng.uniform(0, 50, 20):
            np.testing.assert_allclose(propagate(h, t), math.cos(t) * np.eye(2) - 1j * math.sin(t) * x, atol=1e-12)

    def test_identity_at_zero(self):
        np.testing.assert_allclose(propagate(sector_hamiltonian(build_diamond_chain(3)), 0.0), np.eye(10), atol=1e-14)

    def test_evolve_examples(self):
        np.testing.assert_allclose(evolve(basis_state(2, 0), chain(2), math.pi / 2), [0, -1j], atol=1e-15)
        np.testing.assert_allclose(evolve(basis_state(3, 0), chain(3), math.pi / SQ2), [0, 0, -1], atol=1e-15)
        np.testing.assert_allclose(evolve(basis_state(3, 0), chain(3), 2 * math.pi / SQ2), [1, 0, 0], atol=1e-14)

    def test_evolve_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evolve(basis_state(3, 0), chain(2), 1.0)

    def test_propagator_cache_is_bounded(self):
        h = chain(4)
        for t in range(200):
            propagate(h, t * 0.1)
        assert len(h._propagators) <= 64


class TestPulses:
    def test_flip_on_listed_site(self):
        psi = np.array([0, 1, 1, 0]) / SQ2
        np.testing.assert_array_equal(apply_pulse(psi, [2]), np.array([0, 1, -1, 0]) / SQ2)

    def test_empty_subset(self, rng):
        psi = rng.normal(size=5) + 1j * rng.normal(size=5)
        np.testing.assert_array_equal(apply_pulse(psi, []), psi)

    def test_involution(self, rng):
        psi = rng.normal(size=6) + 1j * rng.normal(size=6)
        np.testing.assert_array_equal(apply_pulse(apply_pulse(psi, [1, 4]), [1, 4]), psi)

    def test_plane_name(self):
        net = build_diamond_chain(2)
        psi = np.ones(7)
        np.testing.assert_array_equal(apply_pulse(psi, "lower-leg", net), [1, 1, -1, 1, 1, -1, 1])

    def test_generator_input(self):
        np.testing.assert_array_equal(apply_pulse(np.ones(3), (k for k in [0, 2])), [-1, 1, -1])

    def test_unknown_plane(self):
        with pytest.raises(KeyError):
            apply_pulse(np.ones(3), "missing", build_uniform_chain(3))

    def test_plane_without_network(self):
        with pytest.raises(KeyError):
            apply_pulse(np.ones(3), "all")


class TestSchedules:
    def test_empty(self):
        psi = basis_state(4, 1)
        np.testing.assert_array_equal(run_schedule(build_uniform_chain(4), psi, Schedule()), psi)

    def test_duration(self):
        s = Schedule((PulseEvent(0.5, [1]), PulseEvent(0.25, "all")), 1.0)
        assert s.duration == 1.75
        assert s.pulse_times() == [0.5, 0.75]

    def test_negative_wait(self):
        with pytest.raises(ValueError):
            PulseEvent(-1.0, [0])
        with pytest.raises(ValueError):
            Schedule((), math.inf)

    def test_diamond_single_cell(self):
        net = build_diamond_chain(1, coupling=1 / SQ2)
        s = Schedule((PulseEvent(math.pi / 2, "lower-leg"),), math.pi / 2)
        psi = run_schedule(net, basis_state(4, 0), s)
        assert abs(psi[3]) > 1 - 1e-12

    def test_pst_four_chain_no_pulses(self):
        psi = run_schedule(build_pst_chain(4), basis_state(4, 0), Schedule((), math.pi))
        assert abs(psi[3]) == pytest.approx(1, abs=1e-12)


class TestAmplitudes:
    def test_two_chain(self):
        assert transfer_amplitude(chain(2), 0, 1, math.pi / 2) == pytest.approx(-1j, abs=1e-15)

    def test_return_at_zero(self):
        assert transfer_amplitude(sector_hamiltonian(build_diamond_chain(2)), 3, 3, 0.0) == pytest.approx(1, abs=1e-14)

    def test_three_chain_end_to_end(self):
        assert transfer_amplitude(chain(3), 0, 2, math.pi / SQ2) == pytest.approx(-1, abs=1e-15)

    def test_array_times_match_scalars(self, rng):
        h = chain(7, anisotropy=0.5)
        ts = rng.uniform(0, 30, (4, 5))
        arr = transfer_amplitude(h, 1, 5, ts)
        assert arr.shape == (4, 5)
        for idx in np.ndindex(ts.shape):
            assert arr[idx] == pytest.approx(propagate(h, ts[idx])[5, 1], abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            transfer_amplitude(chain(3), 0, 3, 1.0)


class TestReceiver:
    @pytest.mark.parametrize("theta,phi", [(0.3, 1.2), (math.pi, 0), (2.0, -0.5)])
    def test_perfect_channel(self, theta, phi):
        p, (a0, a1) = receiver_statistics(1, theta, phi)
        assert p == pytest.approx(1, abs=1e-15)
        assert a0 == pytest.approx(math.cos(theta / 2))
        assert a1 == pytest.approx(np.exp(1j * phi) * math.sin(theta / 2))

    def test_lost_excitation(self):
        p, (a0, a1) = receiver_statistics(0, math.pi / 2, 0.7)
        assert p == pytest.approx(0.5)
        assert (a0, a1) == (pytest.approx(1), 0)

    def test_phase_is_carried(self):
        p, (a0, a1) = receiver_statistics(-1j, math.pi, 0)
        assert p == pytest.approx(1)
        assert a1 == pytest.approx(-1j)

    def test_degenerate(self):
        with pytest.raises(DegenerateStateError):
            receiver_statistics(0, math.pi, 0)


class TestFidelity:
    def test_identity(self):
        assert average_fidelity(1) == (1.0, 1.0)

    def test_no_transfer(self):
        assert average_fidelity(0) == (0.5, 0.5)

    def test_phase_minus_i(self):
        f = average_fidelity(-1j)
        assert f.plain == pytest.approx(2 / 3, abs=1e-15)
        assert f.corrected == pytest.approx(1, abs=1e-15)

    @pytest.mark.parametrize("g", [1, -1j, 0.5 * np.exp(0.7j), 0.9 * np.exp(-2.5j), 0.2, -0.8, 0])
    def test_against_sphere_quadrature(self, g):
        assert average_fidelity(g).plain == pytest.approx(sphere_average_fidelity(g), abs=1e-12)

    def test_corrected_is_quadrature_of_real_amplitude(self):
        g = 0.63 * np.exp(1.1j)
        assert average_fidelity(g).corrected == pytest.approx(sphere_average_fidelity(abs(g)), abs=1e-12)


class TestPeakSearch:
    def test_pst_four_chain(self):
        t, g = peak_search(sector_hamiltonian(build_pst_chain(4)), 0, 3, (0, 2 * math.pi), 1000)
        assert t == pytest.approx(math.pi, abs=1e-6)
        assert abs(g) == pytest.approx(1, abs=1e-12)

    def test_two_chain(self):
        t, g = peak_search(chain(2), 0, 1, (0, math.pi), 1000)
        assert t == pytest.approx(math.pi / 2, abs=1e-8)
        assert abs(g) == pytest.approx(1, abs=1e-15)

    def test_refinement_beats_grid(self):
        h = chain(9)
        t, g = peak_search(h, 0, 8, (0, 40), 50)
        ts = np.linspace(0, 40, 50)
        assert abs(g) >= np.max(np.abs(transfer_amplitude(h, 0, 8, ts)))

    def test_first_maximum_wins(self):
        # revivals of the 2-chain: |g| = 1 at pi/2 and 3pi/2
        t, _ = peak_search(chain(2), 0, 1, (0, 2 * math.pi), 4001)
        assert t == pytest.approx(math.pi / 2, abs=1e-8)

    def test_empty_window(self):
        with pytest.raises(ValueError):
            peak_search(chain(2), 0, 1, (1, 1))
        with pytest.raises(ValueError):
            peak_search(chain(2), 0, 1, (0, 1), grid=1)


class TestCsv:
    def test_header_and_precision(self):
        text = time_series_csv(chain(2), 0, 1, [0.0, math.pi / 2])
        lines = text.splitlines()
        assert lines[0] == "t,re_g,im_g,abs_g,fidelity,fidelity_corrected"
        row = [float(x) for x in lines[2].split(",")]
        assert row[0] == math.pi / 2  # 17 significant digits round-trip exactly
        assert row[2] == pytest.approx(-1)
        assert row[5] == pytest.approx(1)
