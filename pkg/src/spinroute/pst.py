"""Perfect state transfer on engineered chains and on the pulsed diamond chain."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .network import SpinNetwork
from .sector import PulseEvent, Schedule, sector_hamiltonian

SQRT2 = math.sqrt(2.0)


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class PstReport:
    t0: float
    magnitude: float
    phase: complex
    mirror_ok: bool
    eigenphase_ok: bool
    mirror_min: float
    eigenphase_spread: float

    def to_document(self) -> dict:
        doc = asdict(self)
        doc["phase"] = [self.phase.real, self.phase.imag]
        return doc


def verify_pst(chain: SpinNetwork, t_candidate: float) -> PstReport:
    """Check end-to-end transfer, the mirror property and eigenphase alternation at one time."""
    if not chain.is_path():
        raise TopologyError("verify_pst needs a path graph 0-1-...-(n-1)")
    h = sector_hamiltonian(chain)
    n = h.n
    u = h.propagator(t_candidate)
    g = complex(u[n - 1, 0])
    mirror = np.abs(u[np.arange(n)[::-1], np.arange(n)])
    mirror_min = float(mirror.min())

    # e^{-i lambda_n t} (-1)^n must be one constant phase over the sorted spectrum
    w = h.eigenvalues
    alternating = np.exp(-1j * w * t_candidate) * (-1.0) ** np.arange(n)
    spread = float(np.max(np.abs(alternating - alternating[0])))

    mag = abs(g)
    return PstReport(
        t0=float(t_candidate),
        magnitude=mag,
        phase=g / mag if mag > 0 else complex(0.0),
        mirror_ok=mirror_min >= 1 - 1e-9,
        eigenphase_ok=spread < 1e-8,
        mirror_min=mirror_min,
        eigenphase_spread=spread,
    )


def jx_matrix(n: int) -> np.ndarray:
    """J_x for spin j = (n-1)/2 in the basis m = j, j-1, ..., -j, from ladder coefficients."""
    j = (n - 1) / 2
    m = j - np.arange(n)
    jx = np.zeros((n, n))
    for row in range(1, n):
        # <m+1| J_+ |m> with m = m[row]
        c = math.sqrt(j * (j + 1) - m[row] * (m[row] + 1))
        jx[row - 1, row] = jx[row, row - 1] = c / 2
    return jx


def jx_correspondence_check(n: int, transfer_time: float = math.pi) -> float:
    """Max elementwise gap between the engineered chain's hopping matrix and (pi/T) J_x."""
    from .network import build_pst_chain

    h = sector_hamiltonian(build_pst_chain(n, transfer_time)).matrix
    return float(np.max(np.abs(h - (math.pi / transfer_time) * jx_matrix(n))))


# ------------------------------------------------------------- diamond chain


@dataclass
class BlockDecomposition:
    basis: np.ndarray
    blocks: list[tuple[tuple[int, ...], np.ndarray]]
    offblock_residual: float
    block_error: float
    basis_error: float

    def to_document(self) -> dict:
        return {
            "blocks": [
                {"members": list(members), "matrix": block.tolist()} for members, block in self.blocks
            ],
            "offblock_residual": self.offblock_residual,
            "block_error": self.block_error,
            "basis_error": self.basis_error,
        }


def _diamond_cells(chain: SpinNetwork) -> list[tuple[int, int, int, int]]:
    """Recover (vertex, upper, lower, next vertex) for each diamond."""
    upper = chain.planes.get("upper-leg")
    lower = chain.planes.get("lower-leg")
    if not upper or not lower or len(upper) != len(lower):
        raise TopologyError("diamond chain needs matching 'upper-leg' and 'lower-leg' planes")
    cells = []
    for u, l in zip(upper, lower):
        shared = sorted(set(chain.neighbors(u)) & set(chain.neighbors(l)))
        if len(shared) != 2 or len(chain.neighbors(u)) != 2 or len(chain.neighbors(l)) != 2:
            raise TopologyError(f"legs {u},{l} do not form a diamond")
        cells.append((shared[0], u, l, shared[1]))
    for (_, _, _, w), (v, _, _, _) in zip(cells, cells[1:]):
        if w != v:
            raise TopologyError("diamonds are not joined vertex to vertex")
    return cells


def diamond_decompose(chain: SpinNetwork) -> BlockDecomposition:
    """Rotate each leg pair into the combinations seen by its two vertices.

    For a leg pair (u, l) between vertices a and b the vector coupled to a is
    ``(J_au u + J_al l)/norm`` and the one coupled to b is
    ``(J_bu u + J_bl l)/norm``.  The sign pattern of the diamond makes them
    orthogonal, which splits the chain into a 2-chain at the head, 3-chains in
    the middle and a 2-chain at the tail, all with coupling sqrt(2) J.
    """
    cells = _diamond_cells(chain)
    n = chain.n_sites
    h = sector_hamiltonian(chain).matrix
    basis = []
    members: list[list[int]] = [[]]

    def add(vec) -> int:
        basis.append(vec)
        return len(basis) - 1

    def unit(k):
        e = np.zeros(n)
        e[k] = 1.0
        return e

    members[0].append(add(unit(cells[0][0])))
    expected_couplings = []
    for a, u, l, b in cells:
        to_a = chain.strength(a, u) * unit(u) + chain.strength(a, l) * unit(l)
        to_b = chain.strength(b, u) * unit(u) + chain.strength(b, l) * unit(l)
        ka, kb = np.linalg.norm(to_a), np.linalg.norm(to_b)
        if abs(to_a @ to_b) > 1e-12 * ka * kb:
            raise TopologyError(f"leg pair {u},{l} has no orthogonal split (missing negative leg)")
        members[-1].append(add(to_a / ka))
        expected_couplings.append(ka)
        members.append([add(to_b / kb), add(unit(b))])
        expected_couplings.append(kb)
    basis = np.array(basis).T

    h_rot = basis.T @ h @ basis
    basis_error = float(np.max(np.abs(basis.T @ basis - np.eye(n))))

    in_block = np.zeros((n, n), dtype=bool)
    blocks = []
    for idx in members:
        sel = np.ix_(idx, idx)
        in_block[sel] = True
        blocks.append((tuple(idx), h_rot[sel]))
    offblock = float(np.max(np.abs(np.where(in_block, 0.0, h_rot)), initial=0.0))

    # expected: uniform chains of 2, 3, ..., 3, 2 with coupling sqrt(2) J
    expected = np.zeros((n, n))
    k = 0
    for idx in members:
        for p, q in zip(idx, idx[1:]):
            expected[p, q] = expected[q, p] = expected_couplings[k]
            k += 1
    block_error = float(np.max(np.abs(np.where(in_block, h_rot - expected, 0.0))))
    return BlockDecomposition(basis, blocks, offblock, block_error, basis_error)


def diamond_transfer_times(coupling: float = 1.0) -> tuple[float, float]:
    """(2-chain, 3-chain) transfer times for diamonds of bond strength ``coupling``."""
    c = SQRT2 * abs(coupling)
    return math.pi / (2 * c), math.pi / (SQRT2 * c)


def diamond_schedule(cells: int, coupling: float = 1.0) -> Schedule:
    """Lower-leg pulses taking an excitation from the first vertex to the last.

    The head 2-chain needs t2, each interior 3-chain t3 and the tail 2-chain t2
    again, so pulses fire at t2, t2 + t3, ..., t2 + (cells-1) t3 and the
    excitation lands on the final vertex a further t2 later.
    """
    if cells < 1:
        raise ValueError("cells must be >= 1")
    t2, t3 = diamond_transfer_times(coupling)
    events = [PulseEvent(t2, "lower-leg")] + [PulseEvent(t3, "lower-leg") for _ in range(cells - 1)]
    return Schedule(tuple(events), t2)
