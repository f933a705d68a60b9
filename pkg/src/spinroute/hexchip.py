"""Layered honeycomb chips of Hadamard switches.

Geometry
--------
Each layer is a honeycomb drawn as a brick wall: vertex (q, r) with
0 <= q < cols, 0 <= r < rows.  Sublattice A has q + r even, B odd.  Every
vertex links to its left and right neighbours, A vertices also link up and B
vertices down.  Port labels are

    A: e1 = (+1, 0), e2 = (-1, 0), e3 = (0, +1)
    B: e1 = (-1, 0), e2 = (+1, 0), e3 = (0, -1)

so a link always joins port i of one end to port i of the other.  Port e0 is
the read-write head, or, at an interlayer junction, the site shared with the
partner vertex directly above.

Switch
------
Each vertex owns four control qubits v0..v3 (v0 in the data layer, vk in
control plane k).  Control a couples to port b with strength
``coupling * HADAMARD[a, b]``.  Rotating the controls into
``xi^b = 1/2 sum_a HADAMARD[a, b] v_a`` leaves port b coupled to xi^b alone,
with strength ``2 * coupling``; the default coupling 1/2 makes every
effective 2-chain and 3-chain uniform with unit coupling.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .network import Coupling, SpinNetwork
from .sector import PulseEvent, Schedule, SectorHamiltonian, basis_state, run_schedule, sector_hamiltonian

HADAMARD = np.array(
    [
        [1, 1, 1, 1],
        [1, 1, -1, -1],
        [1, -1, 1, -1],
        [1, -1, -1, 1],
    ]
)

T0 = math.pi / 2  # head <-> xi^0 through the unit 2-chain
T1 = math.pi / math.sqrt(2)  # xi^i -> link -> xi^j through the unit 3-chain

PORT_OFFSETS = {
    "A": {1: (1, 0), 2: (-1, 0), 3: (0, 1)},
    "B": {1: (-1, 0), 2: (1, 0), 3: (0, -1)},
}
CONTROL_PLANES = ("plane1", "plane2", "plane3")


class ChipError(ValueError):
    pass


class UnroutableError(ChipError):
    def __init__(self, message: str, cut: Sequence["Vertex"] = ()):
        super().__init__(message)
        self.cut = tuple(cut)


class MalformedRouteError(ChipError):
    pass


@dataclass(frozen=True, order=True)
class Vertex:
    layer: int
    q: int
    r: int

    @property
    def sublattice(self) -> str:
        return "A" if (self.q + self.r) % 2 == 0 else "B"

    def to_list(self) -> list[int]:
        return [self.layer, self.q, self.r]

    def __str__(self):
        return f"L{self.layer}({self.q},{self.r})"


@dataclass(frozen=True)
class SwitchCell:
    vertex: Vertex
    control_sites: tuple[int, int, int, int]
    head_site: int | None
    link_sites: dict[int, int]
    defective: bool = False
    junction: Vertex | None = None

    @property
    def has_head(self) -> bool:
        return self.head_site is not None and self.junction is None

    def ports(self) -> dict[int, int]:
        """Port label -> site, including e0 when present."""
        out = dict(self.link_sites)
        if self.head_site is not None:
            out[0] = self.head_site
        return dict(sorted(out.items()))


@dataclass
class HexChip:
    layers: int
    rows: int
    cols: int
    cells: dict[Vertex, SwitchCell]
    links: dict[tuple[Vertex, int], tuple[Vertex, int]]
    interlayer: dict[Vertex, Vertex]
    defects: frozenset[Vertex]
    network: SpinNetwork
    hadamard: np.ndarray = field(default_factory=lambda: HADAMARD.copy())
    coupling: float = 0.5

    @cached_property
    def hamiltonian(self) -> SectorHamiltonian:
        return sector_hamiltonian(self.network)

    def vertices(self) -> list[Vertex]:
        return sorted(self.cells)

    def head_vertices(self) -> list[Vertex]:
        return [v for v in self.vertices() if self.cells[v].has_head and v not in self.defects]

    def neighbors(self, v: Vertex) -> list[tuple[Vertex, int, int]]:
        """(partner, outgoing port, arrival port) for working partners, ordered by partner."""
        out = []
        for d in (1, 2, 3):
            partner = self.links.get((v, d))
            if partner is not None and partner[0] not in self.defects:
                out.append((partner[0], d, partner[1]))
        w = self.interlayer.get(v)
        if w is not None and w not in self.defects:
            out.append((w, 0, 0))
        return sorted(out)

    def to_document(self) -> dict:
        junctions = sorted(v for v, w in self.interlayer.items() if v < w)
        return {
            "layers": self.layers,
            "rows": self.rows,
            "cols": self.cols,
            "interlayer": [v.to_list() for v in junctions],
            "defects": [v.to_list() for v in sorted(self.defects)],
        }


def _in_range(v: Vertex, layers: int, rows: int, cols: int) -> bool:
    return 0 <= v.layer < layers and 0 <= v.q < cols and 0 <= v.r < rows


def build_chip(
    layers: int,
    rows: int,
    cols: int,
    interlayer: Iterable[Sequence[int]] = (),
    defects: Iterable[Sequence[int]] = (),
    *,
    hadamard: np.ndarray | None = None,
    coupling: float = 0.5,
    defect_model: str = "open",
) -> HexChip:
    """Build the chip and its spin network.

    ``interlayer`` lists (layer, q, r): the vertex there is joined to the one
    at (layer + 1, q, r) through a shared e0 site.  ``defects`` lists broken
    switches.  With ``defect_model="open"`` a broken switch has no couplings;
    with ``"flipped"`` one entry of its sign pattern is wrong.
    """
    if min(layers, rows, cols) < 1:
        raise ChipError(f"chip dimensions must be >= 1, got {layers}x{rows}x{cols}")
    if defect_model not in ("open", "flipped"):
        raise ChipError(f"unknown defect model {defect_model!r}")
    signs = HADAMARD if hadamard is None else np.asarray(hadamard)
    if signs.shape != (4, 4):
        raise ChipError("switch sign pattern must be 4x4")

    partner: dict[Vertex, Vertex] = {}
    for entry in interlayer:
        low = Vertex(*map(int, entry))
        high = Vertex(low.layer + 1, low.q, low.r)
        for v in (low, high):
            if not _in_range(v, layers, rows, cols):
                raise ChipError(f"interlayer junction at {low} leaves the chip ({v} out of range)")
            if v in partner:
                raise ChipError(f"vertex {v} is used by two interlayer junctions")
        partner[low], partner[high] = high, low

    broken = set()
    for entry in defects:
        v = Vertex(*map(int, entry))
        if not _in_range(v, layers, rows, cols):
            raise ChipError(f"defect {v} out of range")
        broken.add(v)

    vertices = sorted(
        Vertex(l, q, r) for l in range(layers) for r in range(rows) for q in range(cols)
    )
    labels: dict[int, str] = {}
    next_site = 0

    def new_site(tag: str) -> int:
        nonlocal next_site
        labels[next_site] = tag
        next_site += 1
        return next_site - 1

    controls, heads = {}, {}
    for v in vertices:
        controls[v] = tuple(new_site(f"{v}:v{a}") for a in range(4))
        if v not in partner:
            heads[v] = new_site(f"{v}:head")

    links: dict[tuple[Vertex, int], tuple[Vertex, int]] = {}
    link_site: dict[tuple[Vertex, int], int] = {}
    for v in vertices:
        for d, (dq, dr) in PORT_OFFSETS[v.sublattice].items():
            w = Vertex(v.layer, v.q + dq, v.r + dr)
            if not _in_range(w, layers, rows, cols) or (v, d) in links:
                continue
            site = new_site(f"{v}-{w}:link")
            links[(v, d)], links[(w, d)] = (w, d), (v, d)
            link_site[(v, d)] = link_site[(w, d)] = site
    for v in vertices:
        w = partner.get(v)
        if w is not None and v < w:
            heads[v] = heads[w] = new_site(f"{v}-{w}:interlayer")

    cells = {}
    couplings = []
    for v in vertices:
        ports = {d: link_site[(v, d)] for d in (1, 2, 3) if (v, d) in link_site}
        cell = SwitchCell(v, controls[v], heads.get(v), ports, v in broken, partner.get(v))
        cells[v] = cell
        if cell.defective and defect_model == "open":
            continue
        pattern = signs.copy()
        if cell.defective:
            pattern[1, 1] = -pattern[1, 1]
        for beta, port in cell.ports().items():
            for alpha in range(4):
                couplings.append(Coupling(controls[v][alpha], port, coupling * float(pattern[alpha, beta])))

    planes = {"plane0": tuple(controls[v][0] for v in vertices)}
    for k, name in enumerate(CONTROL_PLANES, start=1):
        planes[name] = tuple(controls[v][k] for v in vertices)
    planes["heads"] = tuple(sorted(s for v, s in heads.items() if v not in partner))

    net = SpinNetwork(
        n_sites=next_site,
        couplings=tuple(couplings),
        planes=planes,
        labels=labels,
    )
    return HexChip(layers, rows, cols, cells, links, partner, frozenset(broken), net, signs.copy(), coupling)


def chip_from_document(doc: dict, **kwargs) -> HexChip:
    try:
        return build_chip(
            int(doc["layers"]),
            int(doc["rows"]),
            int(doc["cols"]),
            [tuple(x) for x in doc.get("interlayer", [])],
            [tuple(x) for x in doc.get("defects", [])],
            **kwargs,
        )
    except (KeyError, TypeError) as exc:
        raise ChipError(f"malformed chip document: {exc}") from None


def build_switch_cell(hadamard: np.ndarray | None = None, coupling: float = 0.5) -> SpinNetwork:
    """One isolated switch with all four ports: sites 0-3 controls, 4-7 ports e0..e3."""
    signs = HADAMARD if hadamard is None else np.asarray(hadamard)
    couplings = [
        Coupling(alpha, 4 + beta, coupling * float(signs[alpha, beta]))
        for beta in range(4)
        for alpha in range(4)
    ]
    planes = {f"plane{k}": (k,) for k in range(4)}
    return SpinNetwork(8, tuple(couplings), planes=planes)


# ---------------------------------------------------------------- xi basis


def xi_local(hadamard: np.ndarray | None = None) -> np.ndarray:
    """Columns are xi^0..xi^3 in the local control basis v0..v3."""
    signs = HADAMARD if hadamard is None else np.asarray(hadamard)
    return signs / 2.0


def xi_basis(cell: SwitchCell, n_sites: int, hadamard: np.ndarray | None = None) -> np.ndarray:
    """Rows are the four xi states of ``cell`` as vectors on the whole chip."""
    local = xi_local(hadamard)
    out = np.zeros((4, n_sites))
    for beta in range(4):
        out[beta, list(cell.control_sites)] = local[:, beta]
    return out


def chip_rotation(chip: HexChip) -> np.ndarray:
    """Orthogonal change of basis: each working switch's controls replaced by its xi states."""
    n = chip.network.n_sites
    q = np.eye(n)
    local = xi_local(chip.hadamard)
    for v, cell in chip.cells.items():
        if v in chip.defects:
            continue
        idx = np.array(cell.control_sites)
        q[np.ix_(idx, idx)] = local
    return q


def expected_xi_hamiltonian(chip: HexChip) -> np.ndarray:
    """Uniform 2-chains (head, xi^0), 3-chains (xi^i, link, xi^j) and (xi^0, interlayer, xi^0)."""
    n = chip.network.n_sites
    e = np.zeros((n, n))
    eff = 2.0 * chip.coupling
    for v, cell in chip.cells.items():
        if v in chip.defects:
            continue
        for beta, port in cell.ports().items():
            xi = cell.control_sites[beta]
            e[xi, port] = e[port, xi] = eff
    return e


def block_structure_check(chip: HexChip) -> float:
    """Max deviation of the xi-basis Hamiltonian from the ideal direct sum of short chains."""
    q = chip_rotation(chip)
    h_xi = q.T @ chip.hamiltonian.matrix @ q
    return float(np.max(np.abs(h_xi - expected_xi_hamiltonian(chip))))


def effective_blocks(chip: HexChip, tol: float = 1e-10) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Connected components of the xi-basis Hamiltonian with their matrices (singletons dropped)."""
    q = chip_rotation(chip)
    h_xi = q.T @ chip.hamiltonian.matrix @ q
    n = h_xi.shape[0]
    adj = np.abs(h_xi) > tol
    seen = np.zeros(n, dtype=bool)
    blocks = []
    for start in range(n):
        if seen[start]:
            continue
        comp, stack = [], [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.nonzero(adj[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        if len(comp) > 1:
            comp = tuple(_chain_order(sorted(comp), adj))
            blocks.append((comp, h_xi[np.ix_(comp, comp)]))
    return blocks


def _chain_order(comp: list[int], adj: np.ndarray) -> list[int]:
    # order a path-shaped component end to end; other shapes keep sorted order
    deg = {i: sum(adj[i, j] for j in comp if j != i) for i in comp}
    ends = [i for i in comp if deg[i] == 1]
    if len(ends) != 2 or any(d > 2 for d in deg.values()):
        return comp
    order, prev = [min(ends)], None
    while len(order) < len(comp):
        cur = order[-1]
        nxt = [j for j in comp if j != cur and j != prev and adj[cur, j]]
        prev = cur
        order.append(nxt[0])
    return order


# ------------------------------------------------------------- control pulses


def control_pulse(from_state: int, to_state: int, hadamard: np.ndarray | None = None) -> tuple[int, int]:
    """The pair of control planes whose joint Z maps xi^from to xi^to with coefficient +1."""
    if from_state == to_state:
        raise ValueError("control_pulse needs two different xi states")
    for s in (from_state, to_state):
        if s not in (0, 1, 2, 3):
            raise ValueError(f"xi index must be in 0..3, got {s}")
    signs = HADAMARD if hadamard is None else np.asarray(hadamard)
    found = []
    for pair in combinations((1, 2, 3), 2):
        flip = np.ones(4, dtype=int)
        flip[list(pair)] = -1
        if np.array_equal(flip * signs[:, from_state], signs[:, to_state]):
            found.append(pair)
    if len(found) != 1:
        raise ValueError(f"no unique plane pair maps xi^{from_state} to xi^{to_state}")
    return found[0]


def pulse_planes(from_state: int, to_state: int, hadamard: np.ndarray | None = None) -> tuple[str, str]:
    i, j = control_pulse(from_state, to_state, hadamard)
    return (f"plane{i}", f"plane{j}")


# ------------------------------------------------------------------ routing


@dataclass(frozen=True)
class Hop:
    vertex: Vertex
    direction: int  # 1..3 for links, 0 for an interlayer jump
    to: Vertex
    arrival: int

    def to_document(self) -> dict:
        return {
            "from": self.vertex.to_list(),
            "direction": "interlayer" if self.direction == 0 else self.direction,
            "to": self.to.to_list(),
            "arrival": "interlayer" if self.arrival == 0 else self.arrival,
        }


@dataclass(frozen=True)
class Route:
    entry: Vertex
    hops: tuple[Hop, ...]
    exit: Vertex

    @property
    def expected_duration(self) -> float:
        return 2 * T0 + len(self.hops) * T1

    @property
    def expected_phase(self) -> complex:
        # -i per 2-chain transfer (twice), -1 per 3-chain; pulses contribute +1
        return complex(-1.0 if len(self.hops) % 2 == 0 else 1.0)

    def vertices(self) -> list[Vertex]:
        return [self.entry] + [h.to for h in self.hops]

    def to_document(self) -> dict:
        phase = self.expected_phase
        return {
            "entry": self.entry.to_list(),
            "exit": self.exit.to_list(),
            "hops": [h.to_document() for h in self.hops],
            "expected_duration": self.expected_duration,
            "expected_phase": [phase.real, phase.imag],
        }


def route_from_document(doc: dict) -> Route:
    """Inverse of ``Route.to_document`` (expected_* fields are ignored)."""

    def port(x):
        return 0 if x == "interlayer" else int(x)

    try:
        hops = tuple(
            Hop(Vertex(*h["from"]), port(h["direction"]), Vertex(*h["to"]), port(h["arrival"]))
            for h in doc["hops"]
        )
        return Route(Vertex(*doc["entry"]), hops, Vertex(*doc["exit"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRouteError(f"malformed route document: {exc}") from None


def plan_route(chip: HexChip, head_in: Vertex, head_out: Vertex) -> Route:
    """Breadth-first shortest path over working switches, interlayer jumps included."""
    for v in (head_in, head_out):
        if v not in chip.cells:
            raise ChipError(f"{v} is not a vertex of the chip")
        if not chip.cells[v].has_head:
            raise ChipError(f"{v} has no read-write head")
        if v in chip.defects:
            raise UnroutableError(f"switch at {v} is defective", cut=[v])

    parent: dict[Vertex, tuple[Vertex, int, int] | None] = {head_in: None}
    queue = deque([head_in])
    while queue and head_out not in parent:
        v = queue.popleft()
        for w, d, arrival in chip.neighbors(v):
            if w not in parent:
                parent[w] = (v, d, arrival)
                queue.append(w)

    if head_out not in parent:
        cut = sorted(
            {partner for v in parent for (partner, _), _ in _all_partners(chip, v) if partner in chip.defects}
        )
        names = ", ".join(map(str, cut)) or "none (disconnected geometry)"
        raise UnroutableError(
            f"no working path from {head_in} to {head_out}; "
            f"{len(parent)} switches reachable; blocking defects: {names}",
            cut=cut,
        )

    hops = []
    v = head_out
    while parent[v] is not None:
        u, d, arrival = parent[v]
        hops.append(Hop(u, d, v, arrival))
        v = u
    return Route(head_in, tuple(reversed(hops)), head_out)


def _all_partners(chip: HexChip, v: Vertex):
    for d in (1, 2, 3):
        p = chip.links.get((v, d))
        if p is not None:
            yield p, d
    w = chip.interlayer.get(v)
    if w is not None:
        yield (w, 0), 0


def check_route(chip: HexChip, route: Route) -> None:
    """Raise MalformedRouteError unless consecutive hops are real working links."""
    at = route.entry
    for hop in route.hops:
        if hop.vertex != at:
            raise MalformedRouteError(f"hop starts at {hop.vertex}, expected {at}")
        if hop.to in chip.defects or hop.vertex in chip.defects:
            raise MalformedRouteError(f"hop {hop.vertex} -> {hop.to} touches a defective switch")
        if (hop.to, hop.direction, hop.arrival) not in chip.neighbors(hop.vertex):
            raise MalformedRouteError(f"{hop.vertex} -> {hop.to} is not a link with ports {hop.direction}/{hop.arrival}")
        at = hop.to
    if at != route.exit:
        raise MalformedRouteError(f"route ends at {at}, expected {route.exit}")


def compile_route(route: Route, hadamard: np.ndarray | None = None) -> Schedule:
    """Global pulse schedule: upload, one turn pulse per vertex, download.

    Waits are t0 before the first pulse, t1 between pulses and t0 after the
    last one, so the total is 2 t0 + N t1.
    """
    states = [0]  # xi state the particle sits in when each pulse fires
    wanted = []
    for hop in route.hops:
        wanted.append(hop.direction)
        states.append(hop.arrival)
    wanted.append(0)
    if not route.hops:
        return Schedule((), 2 * T0)
    events = []
    for k, (have, want) in enumerate(zip(states, wanted)):
        if have == want:
            raise MalformedRouteError(f"hop {k} leaves through the port it arrived on")
        events.append(PulseEvent(T0 if k == 0 else T1, pulse_planes(have, want, hadamard)))
    return Schedule(tuple(events), T0)


def schedule_document(schedule: Schedule) -> dict:
    events = []
    for t, e in zip(schedule.pulse_times(), schedule.events):
        sites = [e.sites] if isinstance(e.sites, str) else list(e.sites)
        events.append({"time": t, "wait": e.wait, "planes": sites})
    return {"events": events, "trailing": schedule.trailing, "duration": schedule.duration}


@dataclass(frozen=True)
class RouteResult:
    magnitude: float
    arrival_phase: complex
    correction: str
    correction_angle: float
    duration: float
    leakage: float

    def to_document(self) -> dict:
        return {
            "magnitude": self.magnitude,
            "arrival_phase": [self.arrival_phase.real, self.arrival_phase.imag],
            "correction": self.correction,
            "correction_angle": self.correction_angle,
            "duration": self.duration,
            "leakage": self.leakage,
        }


def phase_correction(phase: complex) -> tuple[str, float]:
    """Name and angle of diag(1, e^{i angle}) that maps ``phase`` to +1."""
    angle = -float(np.angle(phase))
    named = {0.0: "I", math.pi: "Z", -math.pi: "Z", math.pi / 2: "S", -math.pi / 2: "Sdg"}
    for value, name in named.items():
        if abs(angle - value) < 1e-9:
            return name, angle
    return f"P({angle:.17g})", angle


def simulate_route(chip: HexChip, route: Route) -> RouteResult:
    check_route(chip, route)
    schedule = compile_route(route, chip.hadamard)
    net = chip.network
    start = chip.cells[route.entry].head_site
    end = chip.cells[route.exit].head_site
    psi = run_schedule(net, basis_state(net.n_sites, start), schedule, chip.hamiltonian)
    amp = complex(psi[end])
    mag = abs(amp)
    phase = amp / mag if mag > 0 else complex(0.0)
    name, angle = phase_correction(phase)
    leakage = float(math.sqrt(max(0.0, np.vdot(psi, psi).real - mag * mag)))
    return RouteResult(mag, phase, name, angle, schedule.duration, leakage)
