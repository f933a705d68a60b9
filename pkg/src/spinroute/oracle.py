"""Brute-force checks in the full 2^N Hilbert space.

Everything here is built from explicit 2x2 Pauli matrices placed with
(sparse) Kronecker products and evolved with a truncated-Taylor action of the
matrix exponential rather than an eigendecomposition.  It shares no code with
the sector engine, so agreement between the two is meaningful.  Site k is tensor factor k (leftmost is site 0);
|0> = (1, 0) is spin up, |1> = (0, 1) is the flipped spin.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .network import SpinNetwork
from .sector import Schedule, sector_hamiltonian, run_schedule, basis_state

MAX_SITES = 14

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


class SizeCapError(ValueError):
    pass


def _check_cap(n: int):
    if n > MAX_SITES:
        raise SizeCapError(f"full-space oracle is capped at {MAX_SITES} sites, got {n}")


def _place(ops: dict[int, np.ndarray], n: int) -> sp.csr_matrix:
    out = sp.identity(1, dtype=complex, format="csr")
    for k in range(n):
        out = sp.kron(out, sp.csr_matrix(ops.get(k, I2)), format="csr")
    return out


def _sparse_hamiltonian(net: SpinNetwork) -> sp.csr_matrix:
    n = net.n_sites
    _check_cap(n)
    dim = 2**n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for c in net.couplings:
        xy = _place({c.a: X, c.b: X}, n) + _place({c.a: Y, c.b: Y}, n)
        h = h + 0.5 * c.strength * xy
        if net.anisotropy:
            h = h + 0.5 * net.anisotropy * c.strength * _place({c.a: Z, c.b: Z}, n)
    for k, b in enumerate(net.fields):
        if b:
            h = h + b * _place({k: Z}, n)
    return h


def full_hamiltonian(net: SpinNetwork) -> np.ndarray:
    return _sparse_hamiltonian(net).toarray()


def total_z(n: int) -> np.ndarray:
    _check_cap(n)
    return sum(_place({k: Z}, n) for k in range(n)).toarray()


def check_symmetry(net: SpinNetwork) -> float:
    """max |[H, Z_tot]| over matrix elements."""
    h = _sparse_hamiltonian(net)
    z = sum(_place({k: Z}, net.n_sites) for k in range(net.n_sites))
    comm = (h @ z - z @ h).tocoo()
    return float(np.max(np.abs(comm.data), initial=0.0))


def one_hot(n: int, k: int) -> np.ndarray:
    """Full-space ket with only site k flipped."""
    _check_cap(n)
    up, down = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    out = np.ones(1, dtype=complex)
    for j in range(n):
        out = np.kron(out, down if j == k else up)
    return out


def vacuum(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def z_product(n: int, sites: Iterable[int]) -> np.ndarray:
    """Diagonal of the product of Z over ``sites``."""
    ops = {k: Z for k in sites}
    return np.real(_place(ops, n).diagonal())


class FullEvolver:
    """exp(-i (H - E_vac) t) applied to full-space vectors.

    The vacuum energy is subtracted so phases line up with the sector engine,
    which measures every energy relative to the all-up state.
    """

    def __init__(self, net: SpinNetwork):
        self.net = net
        h = _sparse_hamiltonian(net)
        e_vac = h[0, 0].real
        self.h = (h - e_vac * sp.identity(h.shape[0], dtype=complex, format="csr")).tocsr()

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if t == 0:
            return psi.copy()
        return expm_multiply(-1j * t * self.h, psi)

    def run_schedule(self, psi: np.ndarray, schedule: Schedule) -> np.ndarray:
        n = self.net.n_sites
        for event in schedule.events:
            psi = self.evolve(psi, event.wait)
            psi = z_product(n, self.net.resolve_sites(event.sites)) * psi
        return self.evolve(psi, schedule.trailing)


def sector_equivalence(
    net: SpinNetwork,
    a: int,
    b: int,
    t: float,
    schedule: Schedule | None = None,
) -> float:
    """|full-space <b|U(t)|a> - sector <b|U(t)|a>|.

    When ``schedule`` is given, ``t`` is ignored and both engines run the
    pulsed evolution instead.
    """
    n = net.n_sites
    _check_cap(n)
    full = FullEvolver(net)
    ket_a, ket_b = one_hot(n, a), one_hot(n, b)
    if schedule is None:
        schedule = Schedule((), t)
    amp_full = ket_b.conj() @ full.run_schedule(ket_a, schedule)
    amp_sector = run_schedule(net, basis_state(n, a), schedule, sector_hamiltonian(net))[b]
    return float(abs(amp_full - amp_sector))


def vacuum_drift(net: SpinNetwork, t: float) -> float:
    """Distance of the evolved vacuum from the ray of the vacuum (0 when stationary)."""
    full = FullEvolver(net)
    psi = full.evolve(vacuum(net.n_sites), t)
    return float(np.linalg.norm(psi - psi[0] * vacuum(net.n_sites)))
