"""Spin networks: weighted signed graphs of qubit sites.

A network carries XY couplings (optionally with a ZZ part scaled by the
anisotropy), per-site longitudinal fields, named site subsets ("planes") used
as pulse targets, and free-form site labels.  Sites are numbered 0..n-1.

The local term of a coupling (a, b, J) is ``J/2 (X_a X_b + Y_a Y_b + D Z_a Z_b)``
and the field term is ``B_i Z_i``.  With D = 1 the bond is the isotropic
Heisenberg exchange; with D = 0 it is the pure XY hopping bond.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

DOCUMENT_VERSION = 1


class InvalidSizeError(ValueError):
    pass


class NetworkParseError(ValueError):
    """Malformed network document. ``location`` points at the offending entry."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass(frozen=True)
class Coupling:
    a: int
    b: int
    strength: float

    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


@dataclass(frozen=True)
class SpinNetwork:
    n_sites: int
    couplings: tuple[Coupling, ...]
    fields: tuple[float, ...] = ()
    anisotropy: float = 0.0
    planes: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    labels: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.fields:
            object.__setattr__(self, "fields", (0.0,) * self.n_sites)
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "fields", tuple(float(x) for x in self.fields))
        object.__setattr__(self, "planes", {k: tuple(v) for k, v in self.planes.items()})
        object.__setattr__(self, "labels", dict(self.labels))

    def strength(self, a: int, b: int) -> float:
        key = (a, b) if a <= b else (b, a)
        for c in self.couplings:
            if c.key() == key:
                return c.strength
        return 0.0

    def neighbors(self, site: int) -> list[int]:
        out = []
        for c in self.couplings:
            if c.a == site:
                out.append(c.b)
            elif c.b == site:
                out.append(c.a)
        return sorted(out)

    def resolve_sites(self, sites: str | Iterable[int | str]) -> tuple[int, ...]:
        """Turn a plane name, or an iterable of site ids and plane names, into site ids."""
        if isinstance(sites, str):
            sites = (sites,)
        out: list[int] = []
        for s in sites:
            if isinstance(s, str):
                try:
                    out.extend(self.planes[s])
                except KeyError:
                    raise KeyError(f"unknown plane {s!r}") from None
            else:
                out.append(int(s))
        return tuple(out)

    def is_path(self) -> bool:
        """True when the couplings form the path 0-1-...-(n-1)."""
        if len(self.couplings) != self.n_sites - 1:
            return False
        keys = {c.key() for c in self.couplings}
        return keys == {(k, k + 1) for k in range(self.n_sites - 1)}

    def path_strengths(self) -> list[float]:
        return [self.strength(k, k + 1) for k in range(self.n_sites - 1)]


def validate(net: SpinNetwork) -> list[str]:
    """Return a list of invariant violations; empty means the network is valid."""
    problems = []
    n = net.n_sites
    if n < 1:
        problems.append(f"n_sites must be positive, got {n}")
    if len(net.fields) != n:
        problems.append(f"fields has length {len(net.fields)}, expected {n}")
    if not math.isfinite(net.anisotropy):
        problems.append("anisotropy is not finite")
    for i, b in enumerate(net.fields):
        if not math.isfinite(b):
            problems.append(f"field at site {i} is not finite")
    seen = set()
    for c in net.couplings:
        if c.a == c.b:
            problems.append(f"self-loop at {c.a}")
        for s in (c.a, c.b):
            if not 0 <= s < n:
                problems.append(f"coupling ({c.a},{c.b}) endpoint {s} out of range")
        if not math.isfinite(c.strength):
            problems.append(f"coupling ({c.a},{c.b}) strength is not finite")
        if c.key() in seen:
            problems.append(f"duplicate coupling ({c.key()[0]},{c.key()[1]})")
        seen.add(c.key())
    for name, sites in net.planes.items():
        for s in sites:
            if not 0 <= s < n:
                problems.append(f"plane {name!r} contains site {s} out of range")
    for s in net.labels:
        if not 0 <= s < n:
            problems.append(f"label on site {s} out of range")
    return problems


# ---------------------------------------------------------------- builders


def _check_size(n: int, minimum: int, what: str):
    if n < minimum:
        raise InvalidSizeError(f"{what} must be >= {minimum}, got {n}")


def build_uniform_chain(n: int, anisotropy: float = 0.0, field: float = 0.0) -> SpinNetwork:
    _check_size(n, 2, "chain length")
    couplings = [Coupling(k, k + 1, 1.0) for k in range(n - 1)]
    return SpinNetwork(
        n_sites=n,
        couplings=tuple(couplings),
        fields=(float(field),) * n,
        anisotropy=float(anisotropy),
        planes={"all": tuple(range(n))},
    )


def build_pst_chain(n: int, transfer_time: float = math.pi) -> SpinNetwork:
    """Mirror-symmetric engineered chain with perfect end-to-end transfer.

    Bond k (1-based) has strength ``(pi / (2 T)) * sqrt(k (n - k))`` so that the
    single-excitation Hamiltonian equals ``(pi / T) J_x`` for spin j = (n-1)/2
    and the excitation reaches the far end at time T.  The default T = pi makes
    the hopping matrix exactly J_x; ``transfer_time=pi/2`` gives the bare
    ``sqrt(k (n - k))`` couplings.
    """
    _check_size(n, 2, "chain length")
    if not transfer_time > 0:
        raise ValueError("transfer_time must be positive")
    scale = math.pi / (2.0 * transfer_time)
    couplings = [Coupling(k - 1, k, scale * math.sqrt(k * (n - k))) for k in range(1, n)]
    return SpinNetwork(
        n_sites=n,
        couplings=tuple(couplings),
        planes={"all": tuple(range(n))},
    )


def build_diamond_chain(cells: int, coupling: float = 1.0) -> SpinNetwork:
    """Quasi-1D chain of diamonds with one negative leg per diamond.

    Per cell: vertex v, upper leg u, lower leg l, next vertex w, with bonds
    (v,u,+), (v,l,+), (u,w,+), (l,w,-).  0-based sites: vertices 0,3,6,...,
    upper legs 1,4,7,..., lower legs 2,5,8,...  The chain ends on a vertex.
    """
    _check_size(cells, 1, "cells")
    c = float(coupling)
    couplings = []
    labels = {}
    for cell in range(cells):
        v, u, l, w = 3 * cell, 3 * cell + 1, 3 * cell + 2, 3 * cell + 3
        couplings += [Coupling(v, u, c), Coupling(v, l, c), Coupling(u, w, c), Coupling(l, w, -c)]
        labels[v] = "vertex"
        labels[u] = "upper"
        labels[l] = "lower"
    n = 3 * cells + 1
    labels[n - 1] = "vertex"
    return SpinNetwork(
        n_sites=n,
        couplings=tuple(couplings),
        planes={
            "all": tuple(range(n)),
            "upper-leg": tuple(3 * k + 1 for k in range(cells)),
            "lower-leg": tuple(3 * k + 2 for k in range(cells)),
        },
        labels=labels,
    )


# ---------------------------------------------------------- serialization


def to_document(net: SpinNetwork) -> dict[str, Any]:
    return {
        "version": DOCUMENT_VERSION,
        "n_sites": net.n_sites,
        "anisotropy": net.anisotropy,
        "fields": list(net.fields),
        "couplings": [[c.a, c.b, c.strength] for c in net.couplings],
        "planes": {name: list(sites) for name, sites in sorted(net.planes.items())},
        "labels": {str(s): tag for s, tag in sorted(net.labels.items())},
    }


def serialize(net: SpinNetwork) -> str:
    # repr-precision floats: json round-trips binary64 exactly
    return json.dumps(to_document(net), indent=1)


def _number(value, location: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetworkParseError(location, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise NetworkParseError(location, "number is not finite")
    return float(value)


def _site(value, n: int, location: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise NetworkParseError(location, f"expected an integer site, got {value!r}")
    if not 0 <= value < n:
        raise NetworkParseError(location, f"site {value} out of range 0..{n - 1}")
    return value


def from_document(doc: Mapping[str, Any]) -> SpinNetwork:
    if not isinstance(doc, Mapping):
        raise NetworkParseError("$", "document must be an object")
    if doc.get("version") != DOCUMENT_VERSION:
        raise NetworkParseError("$.version", f"unsupported version {doc.get('version')!r}")
    n = doc.get("n_sites")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise NetworkParseError("$.n_sites", f"expected a positive integer, got {n!r}")
    anisotropy = _number(doc.get("anisotropy", 0.0), "$.anisotropy")

    raw_fields = doc.get("fields", [0.0] * n)
    if not isinstance(raw_fields, list) or len(raw_fields) != n:
        raise NetworkParseError("$.fields", f"expected a list of {n} numbers")
    fields_ = tuple(_number(x, f"$.fields[{i}]") for i, x in enumerate(raw_fields))

    raw_couplings = doc.get("couplings", [])
    if not isinstance(raw_couplings, list):
        raise NetworkParseError("$.couplings", "expected a list")
    couplings = []
    seen = set()
    for i, entry in enumerate(raw_couplings):
        loc = f"$.couplings[{i}]"
        if not isinstance(entry, list) or len(entry) != 3:
            raise NetworkParseError(loc, "expected [a, b, strength]")
        a = _site(entry[0], n, loc + "[0]")
        b = _site(entry[1], n, loc + "[1]")
        if a == b:
            raise NetworkParseError(loc, f"self-loop at {a}")
        c = Coupling(a, b, _number(entry[2], loc + "[2]"))
        if c.key() in seen:
            raise NetworkParseError(loc, f"duplicate coupling {c.key()}")
        seen.add(c.key())
        couplings.append(c)

    raw_planes = doc.get("planes", {})
    if not isinstance(raw_planes, Mapping):
        raise NetworkParseError("$.planes", "expected an object")
    planes = {}
    for name, sites in raw_planes.items():
        if not isinstance(sites, list):
            raise NetworkParseError(f"$.planes.{name}", "expected a list of sites")
        planes[name] = tuple(_site(s, n, f"$.planes.{name}[{j}]") for j, s in enumerate(sites))

    raw_labels = doc.get("labels", {})
    if not isinstance(raw_labels, Mapping):
        raise NetworkParseError("$.labels", "expected an object")
    labels = {}
    for key, tag in raw_labels.items():
        try:
            s = int(key)
        except (TypeError, ValueError):
            raise NetworkParseError(f"$.labels.{key}", "label key is not a site index") from None
        labels[_site(s, n, f"$.labels.{key}")] = str(tag)

    return SpinNetwork(n, tuple(couplings), fields_, anisotropy, planes, labels)


def deserialize(text: str) -> SpinNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return from_document(doc)
