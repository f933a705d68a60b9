"""Exact dynamics in the single-excitation sector.

Total Z commutes with every network Hamiltonian here, so one flipped spin on
top of the all-up vacuum stays a single flipped spin.  On the basis |k>
(site k flipped) the Hamiltonian is the hopping matrix: off-diagonals are the
coupling strengths, the diagonal carries the ZZ and field energy *relative to
the vacuum*.  Subtracting the vacuum energy keeps the relative phase between
the vacuum branch and the excitation branch, which is what a receiver sees.

Propagation goes through a cached dense eigendecomposition, so evaluating the
propagator at many times costs one ``eigh`` plus a phase multiply per time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .network import SpinNetwork, validate


class ValidationError(ValueError):
    pass


class DegenerateStateError(ValueError):
    pass


class SectorHamiltonian:
    """Hermitian hopping matrix with a lazily computed eigendecomposition."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
        if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) >= 1e-12:
            raise ValueError("matrix is not Hermitian")
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self._eig = None
        self._propagators: dict[float, np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def _decompose(self):
        if self._eig is None:
            w, v = np.linalg.eigh(self.matrix)
            w.setflags(write=False)
            v.setflags(write=False)
            self._eig = (w, v)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._decompose()[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._decompose()[1]

    def propagator(self, t: float) -> np.ndarray:
        # waits repeat in schedules (t0, t1), so keep a small cache
        t = float(t)
        u = self._propagators.get(t)
        if u is None:
            w, v = self._decompose()
            if t == 0.0:
                u = np.eye(self.n, dtype=complex)  # exact, not V V^dagger
            else:
                u = (v * np.exp(-1j * w * t)) @ v.conj().T
            u.setflags(write=False)
            if len(self._propagators) < 64:
                self._propagators[t] = u
        return u


def sector_hamiltonian(net: SpinNetwork) -> SectorHamiltonian:
    problems = validate(net)
    if problems:
        raise ValidationError("; ".join(problems))
    n = net.n_sites
    m = np.zeros((n, n))
    diag = -2.0 * np.asarray(net.fields, dtype=float)
    for c in net.couplings:
        m[c.a, c.b] = m[c.b, c.a] = c.strength
        # a flipped spin turns +J D/2 into -J D/2 on each bond touching it
        diag[c.a] -= net.anisotropy * c.strength
        diag[c.b] -= net.anisotropy * c.strength
    m[np.diag_indices(n)] = diag
    return SectorHamiltonian(m)


def basis_state(n: int, k: int) -> np.ndarray:
    psi = np.zeros(n, dtype=complex)
    psi[k] = 1.0
    return psi


def propagate(h: SectorHamiltonian, t: float) -> np.ndarray:
    return h.propagator(t)


def evolve(psi: np.ndarray, h: SectorHamiltonian, t: float) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (h.n,):
        raise ValueError(f"state has shape {psi.shape}, Hamiltonian has dimension {h.n}")
    return h.propagator(t) @ psi


def apply_pulse(
    psi: np.ndarray, sites: str | Iterable[int | str], net: SpinNetwork | None = None
) -> np.ndarray:
    """Instantaneous product of Z on ``sites``: negates the amplitude on each listed site.

    ``sites`` may name planes of ``net`` instead of listing site ids.
    """
    if not isinstance(sites, str):
        sites = tuple(sites)
    if isinstance(sites, str) or any(isinstance(s, str) for s in sites):
        if net is None:
            raise KeyError(f"planes {sites!r} need a network to resolve")
        sites = net.resolve_sites(sites)
    out = np.array(psi, dtype=complex)
    idx = np.fromiter(sites, dtype=int)
    if idx.size:
        out[idx] = -out[idx]
    return out


@dataclass(frozen=True)
class PulseEvent:
    wait: float
    sites: str | tuple[int | str, ...]

    def __post_init__(self):
        if not math.isfinite(self.wait) or self.wait < 0:
            raise ValueError(f"wait must be finite and non-negative, got {self.wait}")
        if not isinstance(self.sites, str):
            object.__setattr__(self, "sites", tuple(self.sites))


@dataclass(frozen=True)
class Schedule:
    events: tuple[PulseEvent, ...] = ()
    trailing: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not math.isfinite(self.trailing) or self.trailing < 0:
            raise ValueError(f"trailing wait must be finite and non-negative, got {self.trailing}")

    @property
    def duration(self) -> float:
        return math.fsum([e.wait for e in self.events] + [self.trailing])

    def pulse_times(self) -> list[float]:
        times, t = [], 0.0
        for e in self.events:
            t += e.wait
            times.append(t)
        return times


def run_schedule(
    net: SpinNetwork,
    psi0: np.ndarray,
    schedule: Schedule,
    h: SectorHamiltonian | None = None,
) -> np.ndarray:
    if h is None:
        h = sector_hamiltonian(net)
    psi = np.asarray(psi0, dtype=complex)
    for event in schedule.events:
        psi = evolve(psi, h, event.wait)
        psi = apply_pulse(psi, event.sites, net)
    return evolve(psi, h, schedule.trailing)


def transfer_amplitude(h: SectorHamiltonian, a: int, b: int, t):
    """<b| exp(-i H t) |a>.  ``t`` may be a scalar or an array of times."""
    n = h.n
    for s in (a, b):
        if not 0 <= s < n:
            raise IndexError(f"site {s} out of range 0..{n - 1}")
    w, v = h.eigenvalues, h.eigenvectors
    weights = v[b, :] * v[a, :].conj()
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim == 0:
        return complex(np.sum(weights * np.exp(-1j * w * float(t_arr))))
    flat = t_arr.reshape(-1)
    out = np.empty(flat.size, dtype=complex)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, flat.size, chunk):
        ts = flat[start:start + chunk]
        out[start:start + chunk] = np.exp(-1j * np.outer(ts, w)) @ weights
    return out.reshape(t_arr.shape)


def receiver_statistics(g: complex, theta: float, phi: float) -> tuple[float, tuple[complex, complex]]:
    """Probability that the receiver qubit is in a pure branch, and that branch.

    The input qubit is cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>.
    """
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    p = c * c + s * s * abs(g) ** 2
    if p < 1e-20:
        raise DegenerateStateError("received state has zero weight (theta = pi and g = 0)")
    norm = math.sqrt(p)
    return p, (complex(c / norm), complex(np.exp(1j * phi) * s * g / norm))


class Fidelity(NamedTuple):
    plain: float
    corrected: float


def average_fidelity(g: complex) -> Fidelity:
    """Sphere-averaged fidelity of the amplitude-damping channel with amplitude g.

    ``plain`` keeps the arrival phase; ``corrected`` assumes the known phase is
    undone by a local Z rotation at the receiver.
    """
    mag = abs(g)
    plain = mag * math.cos(np.angle(g)) / 3 + mag * mag / 6 + 0.5
    corrected = mag / 3 + mag * mag / 6 + 0.5
    return Fidelity(plain, corrected)


def peak_search(
    h: SectorHamiltonian,
    a: int,
    b: int,
    window: tuple[float, float],
    grid: int = 1000,
    tie: float = 1e-12,
) -> tuple[float, complex]:
    """Time in ``window`` maximizing |<b|U(t)|a>|: grid scan, then bounded refinement.

    Every local grid maximum that could still reach the global maximum (by a
    Lipschitz bound on |g| between grid points) is refined.  Peaks within
    ``tie`` of the best are treated as equal and the earliest one is returned.
    """
    lo, hi = map(float, window)
    if not hi > lo:
        raise ValueError(f"empty window ({lo}, {hi})")
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    ts = np.linspace(lo, hi, grid)
    mags = np.abs(transfer_amplitude(h, a, b, ts))
    w, v = h.eigenvalues, h.eigenvectors
    slope = float(np.sum(np.abs(w * v[b, :] * v[a, :])))
    slack = slope * (ts[1] - ts[0])

    padded = np.concatenate(([-np.inf], mags, [-np.inf]))
    is_peak = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:])
    candidates = np.nonzero(is_peak & (mags >= mags.max() - slack))[0]

    def neg_mag(t):
        return -abs(transfer_amplitude(h, a, b, t))

    best_t, best_mag = None, -1.0
    for i in candidates:
        left, right = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]
        res = minimize_scalar(neg_mag, bounds=(left, right), method="bounded", options={"xatol": 1e-10})
        t_i, m_i = (float(res.x), -float(res.fun)) if -res.fun >= mags[i] else (float(ts[i]), float(mags[i]))
        if m_i > best_mag + tie:
            best_t, best_mag = t_i, m_i
    return best_t, transfer_amplitude(h, a, b, best_t)


def time_series_csv(h: SectorHamiltonian, a: int, b: int, times: Sequence[float]) -> str:
    """Rows ``t,re_g,im_g,abs_g,fidelity,fidelity_corrected`` at 17 significant digits."""
    times = np.asarray(times, dtype=float)
    gs = transfer_amplitude(h, a, b, times)
    lines = ["t,re_g,im_g,abs_g,fidelity,fidelity_corrected"]
    for t, g in zip(times, gs):
        f = average_fidelity(g)
        vals = (t, g.real, g.imag, abs(g), f.plain, f.corrected)
        lines.append(",".join(format(float(x), ".17g") for x in vals))
    return "\n".join(lines) + "\n"
