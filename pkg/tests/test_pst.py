import math

import numpy as np
import pytest

from spinroute.network import SpinNetwork, build_diamond_chain, build_pst_chain, build_uniform_chain
from spinroute.oracle import sector_equivalence
from spinroute.pst import (
    TopologyError,
    diamond_decompose,
    diamond_schedule,
    diamond_transfer_times,
    jx_correspondence_check,
    jx_matrix,
    verify_pst,
)
from spinroute.sector import basis_state, run_schedule, sector_hamiltonian

SQ2 = math.sqrt(2)


class TestVerify:
    def test_two_chain_bare(self):
        rep = verify_pst(build_pst_chain(2, math.pi / 2), math.pi / 2)
        assert rep.magnitude == pytest.approx(1, abs=1e-15)
        assert rep.phase == pytest.approx(-1j, abs=1e-15)
        assert rep.mirror_ok and rep.eigenphase_ok

    def test_six_chain(self):
        chain = build_pst_chain(6)
        rep = verify_pst(chain, math.pi)
        assert rep.magnitude >= 1 - 1e-9 and rep.mirror_ok
        assert sector_equivalence(chain, 0, 5, math.pi) < 1e-10

    def test_uniform_chain_fails(self):
        rep = verify_pst(build_uniform_chain(4), math.pi)
        assert rep.magnitude < 1 - 1e-3
        assert not rep.eigenphase_ok and not rep.mirror_ok

    @pytest.mark.parametrize("n", range(2, 16))
    def test_arrival_phase(self, n):
        rep = verify_pst(build_pst_chain(n), math.pi)
        assert rep.phase == pytest.approx((-1j) ** (n - 1), abs=1e-8)

    @pytest.mark.parametrize("n", [3, 8])
    def test_wrong_time(self, n):
        rep = verify_pst(build_pst_chain(n), 2.0)
        assert rep.magnitude < 0.99 and not rep.eigenphase_ok

    def test_custom_transfer_time(self):
        rep = verify_pst(build_pst_chain(9, transfer_time=3.7), 3.7)
        assert rep.magnitude >= 1 - 1e-12

    def test_needs_path(self):
        with pytest.raises(TopologyError):
            verify_pst(build_diamond_chain(1), 1.0)

    def test_document(self):
        doc = verify_pst(build_pst_chain(3), math.pi).to_document()
        assert doc["phase"] == [pytest.approx(-1), pytest.approx(0, abs=1e-12)]


class TestJx:
    def test_spin_half(self):
        np.testing.assert_allclose(jx_matrix(2), [[0, 0.5], [0.5, 0]])

    def test_spin_one_by_hand(self):
        r = 1 / SQ2
        np.testing.assert_allclose(jx_matrix(3), [[0, r, 0], [r, 0, r], [0, r, 0]], atol=1e-15)

    def test_spin_three_halves_by_hand(self):
        a = math.sqrt(3) / 2
        np.testing.assert_allclose(
            jx_matrix(4), [[0, a, 0, 0], [a, 0, 1, 0], [0, 1, 0, a], [0, 0, a, 0]], atol=1e-15
        )

    @pytest.mark.parametrize("n", [2, 3, 5, 12, 30])
    def test_chain_is_jx(self, n):
        assert jx_correspondence_check(n) < 1e-12

    def test_bare_chain_is_twice_jx(self):
        assert jx_correspondence_check(7, math.pi / 2) < 1e-12

    def test_jx_spectrum(self):
        w = np.linalg.eigvalsh(jx_matrix(6))
        np.testing.assert_allclose(w, np.arange(-2.5, 3), atol=1e-12)


class TestDiamond:
    @pytest.mark.parametrize("cells", range(1, 11))
    def test_decomposition(self, cells):
        d = diamond_decompose(build_diamond_chain(cells))
        assert d.offblock_residual < 1e-10
        assert d.block_error < 1e-10
        assert d.basis_error < 1e-10
        sizes = [len(m) for m, _ in d.blocks]
        assert sizes == [2] + [3] * (cells - 1) + [2]

    def test_block_matrices(self):
        d = diamond_decompose(build_diamond_chain(2))
        np.testing.assert_allclose(d.blocks[0][1], [[0, SQ2], [SQ2, 0]], atol=1e-12)
        np.testing.assert_allclose(d.blocks[1][1], [[0, SQ2, 0], [SQ2, 0, SQ2], [0, SQ2, 0]], atol=1e-12)

    def test_decoupling_identities(self):
        # the first vertex misses the antisymmetric leg state, the next vertex the symmetric one
        h = sector_hamiltonian(build_diamond_chain(1)).matrix
        minus = np.array([0, 1, -1, 0]) / SQ2
        plus = np.array([0, 1, 1, 0]) / SQ2
        assert abs(h[0] @ minus) < 1e-15
        assert abs(h[3] @ plus) < 1e-15

    def test_all_positive_legs_rejected(self):
        net = build_diamond_chain(1)
        fixed = SpinNetwork(4, tuple(c if c.strength > 0 else type(c)(c.a, c.b, 1.0) for c in net.couplings),
                            planes=net.planes)
        with pytest.raises(TopologyError):
            diamond_decompose(fixed)

    def test_times(self):
        t2, t3 = diamond_transfer_times(1 / SQ2)
        assert t2 == pytest.approx(math.pi / 2) and t3 == pytest.approx(math.pi / SQ2)

    def test_schedule_shape(self):
        s = diamond_schedule(3, 1 / SQ2)
        t2, t3 = math.pi / 2, math.pi / SQ2
        assert s.pulse_times() == pytest.approx([t2, t2 + t3, t2 + 2 * t3])
        assert all(e.sites == "lower-leg" for e in s.events)
        assert s.trailing == pytest.approx(t2)

    @pytest.mark.parametrize("cells", range(1, 11))
    @pytest.mark.parametrize("coupling", [1.0, 1 / SQ2])
    def test_schedule_delivers(self, cells, coupling):
        net = build_diamond_chain(cells, coupling)
        psi = run_schedule(net, basis_state(net.n_sites, 0), diamond_schedule(cells, coupling))
        assert abs(psi[-1]) >= 1 - 1e-9
        assert np.max(np.abs(psi[:-1])) < 1e-9

    def test_without_pulses_it_fails(self):
        net = build_diamond_chain(3)
        s = diamond_schedule(3)
        psi = run_schedule(net, basis_state(10, 0), type(s)((), s.duration))
        assert abs(psi[-1]) < 0.9

    def test_document(self):
        doc = diamond_decompose(build_diamond_chain(2)).to_document()
        assert [len(b["members"]) for b in doc["blocks"]] == [2, 3, 2]
