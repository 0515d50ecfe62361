"""Finite-state energy landscapes with symmetric single-move proposals.

State encodings are stable integers:

* Ising: bit ``v`` of the state is 1 iff spin ``v`` is +1.
* Potts: base-``q`` digits, little-endian in the vertex index; digit ``k``
  stands for colour ``k + 1``.
* Tabular: the row index from the model file.

For enumerable models the integer encoding doubles as the row index of
every dense matrix built in :mod:`landscape_mh.analysis`.
"""

from __future__ import annotations

import abc
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "DEFAULT_CAP",
    "ModelError",
    "UnionFind",
    "Model",
    "IsingModel",
    "PottsModel",
    "TabularModel",
    "enumerate_states",
    "load_tabular",
    "write_tabular",
    "reference_chain",
    "REFERENCE_CHAINS",
]

DEFAULT_CAP = 8192


class ModelError(ValueError):
    """Malformed model definition (file syntax, asymmetric rates, ...)."""


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, k):
        parent = self.parent
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


class Model(abc.ABC):
    """Energy function plus symmetric proposal rates on a finite state space."""

    name: str = "model"

    @property
    @abc.abstractmethod
    def state_count(self) -> int | None:
        """Number of states, or ``None`` when not meant to be enumerated."""

    @abc.abstractmethod
    def energy(self, s: int) -> float: ...

    @abc.abstractmethod
    def neighbors(self, s: int) -> list[tuple[int, float]]: ...

    def ground(self) -> tuple[int, float]:
        raise NotImplementedError(f"{self.name}: no known ground state")

    @property
    def proposal_gap(self) -> float | None:
        """Spectral gap of the bare proposal generator when known in closed form."""
        return None

    @property
    def exact_proposal_gap(self) -> float | None:
        """True spectral gap of the proposal generator (may differ from ``proposal_gap``)."""
        return self.proposal_gap

    def describe(self) -> dict:
        return {"name": self.name}

    # -- dense helpers -----------------------------------------------------

    def energies(self, cap=DEFAULT_CAP) -> np.ndarray:
        return np.array([self.energy(s) for s in enumerate_states(self, cap)], dtype=float)

    def neighbor_table(self, cap=DEFAULT_CAP):
        """Padded ``(index, rate)`` arrays of shape ``(S, D)``; pads have rate 0."""
        rows = [self.neighbors(s) for s in enumerate_states(self, cap)]
        width = max((len(r) for r in rows), default=0)
        idx = np.zeros((len(rows), max(width, 1)), dtype=np.int64)
        rate = np.zeros((len(rows), max(width, 1)), dtype=float)
        for s, row in enumerate(rows):
            idx[s, :] = s
            for k, (t, r) in enumerate(row):
                idx[s, k] = t
                rate[s, k] = r
        return idx, rate

    def check_proposal(self, cap=DEFAULT_CAP):
        """Verify rate symmetry and connectivity of the proposal graph."""
        n = self.state_count
        idx, rate = self.neighbor_table(cap)
        directed = {}
        uf = UnionFind(n)
        for s in range(n):
            for t, r in zip(idx[s].tolist(), rate[s].tolist()):
                if r <= 0:
                    continue
                if t == s:
                    raise ModelError(f"{self.name}: self-loop at state {s}")
                directed[s, t] = directed.get((s, t), 0.0) + r
                uf.union(s, t)
        for (s, t), r in directed.items():
            if directed.get((t, s)) != r:
                raise ModelError(f"{self.name}: asymmetric rate pair ({s}, {t})")
        components = len({uf.find(s) for s in range(n)})
        if components > 1:
            raise ModelError(f"{self.name}: proposal graph is disconnected ({components} components)")


def enumerate_states(model, cap=DEFAULT_CAP):
    """Yield every state of ``model`` in encoding order."""
    n = model.state_count
    if n is None:
        raise ModelError(f"{model.name}: state space is not enumerable")
    if n > cap:
        raise ModelError(f"{model.name}: {n} states exceeds the enumeration cap {cap}")
    return iter(range(n))


# ---------------------------------------------------------------------------
# Ising
# ---------------------------------------------------------------------------


class IsingModel(Model):
    """Ferromagnetic Ising model with single-spin-flip proposals at rate 1/|V|.

    ``H(s) = -(J/2) sum_{edges} s_v s_w - (h/2) sum_v s_v``, each undirected
    edge counted once.  The all-plus configuration is the ground state.
    """

    def __init__(self, graph, size, J=1.0, h=1.0):
        if graph not in ("hypercube", "complete"):
            raise ModelError(f"unknown Ising graph {graph!r}")
        # h = 0 is allowed for symmetry checks; all-plus then ties with all-minus
        if not (J > 0 and h >= 0):
            raise ModelError("Ising couplings need J > 0 and h >= 0")
        self.graph = graph
        self.size = int(size)
        self.J = float(J)
        self.h = float(h)
        if graph == "hypercube":
            if self.size < 1:
                raise ModelError("hypercube dimension must be >= 1")
            self.n_vertices = 1 << self.size
            self.edges = [
                (v, v ^ (1 << k))
                for v in range(self.n_vertices)
                for k in range(self.size)
                if v < v ^ (1 << k)
            ]
        else:
            if self.size < 2:
                raise ModelError("complete graph needs at least 2 vertices")
            self.n_vertices = self.size
            self.edges = [(v, w) for v in range(self.size) for w in range(v + 1, self.size)]
        self.name = f"ising-{graph}({self.size})"
        self._rate = 1.0 / self.n_vertices

    @classmethod
    def hypercube(cls, dim, J=1.0, h=1.0):
        return cls("hypercube", dim, J, h)

    @classmethod
    def complete(cls, n, J=1.0, h=1.0):
        return cls("complete", n, J, h)

    @property
    def state_count(self):
        # 2^|V| overflows any dense analysis long before int limits matter
        return 1 << self.n_vertices if self.n_vertices <= 62 else None

    def spins(self, s):
        return [1 if (s >> v) & 1 else -1 for v in range(self.n_vertices)]

    def energy(self, s):
        spin = self.spins(s)
        pair = sum(spin[v] * spin[w] for v, w in self.edges)
        return -0.5 * self.J * pair - 0.5 * self.h * sum(spin)

    def neighbors(self, s):
        return [(s ^ (1 << v), self._rate) for v in range(self.n_vertices)]

    def ground(self):
        s = (1 << self.n_vertices) - 1
        return s, self.energy(s)

    @property
    def proposal_gap(self):
        return 2.0 / self.n_vertices

    def describe(self):
        return {"name": self.name, "graph": self.graph, "size": self.size, "J": self.J, "h": self.h,
                "vertices": self.n_vertices, "edges": len(self.edges)}

    def energies(self, cap=DEFAULT_CAP):
        n = self.state_count
        if n is None or n > cap:
            raise ModelError(f"{self.name}: {n} states exceeds the enumeration cap {cap}")
        states = np.arange(n, dtype=np.int64)
        spin = 2 * ((states[:, None] >> np.arange(self.n_vertices)) & 1) - 1
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        pair = (spin[:, e[:, 0]] * spin[:, e[:, 1]]).sum(axis=1)
        return -0.5 * self.J * pair - 0.5 * self.h * spin.sum(axis=1)

    def neighbor_table(self, cap=DEFAULT_CAP):
        n = self.state_count
        if n is None or n > cap:
            raise ModelError(f"{self.name}: {n} states exceeds the enumeration cap {cap}")
        states = np.arange(n, dtype=np.int64)
        idx = states[:, None] ^ (np.int64(1) << np.arange(self.n_vertices, dtype=np.int64))
        return idx, np.full(idx.shape, self._rate)


# ---------------------------------------------------------------------------
# Potts
# ---------------------------------------------------------------------------


class PottsModel(Model):
    """q-state ferromagnetic Potts model on the n x n torus.

    ``H(s) = -J * #{edges with equal colours}``; proposals recolour one site
    to a different colour at rate ``1/(q |V|)`` each.  Picking the current
    colour is a self-loop and does not appear in the generator.
    """

    def __init__(self, n, q, J=1.0):
        if n < 3:
            raise ModelError("torus side must be >= 3 (n = 2 creates double edges)")
        if q < 2:
            raise ModelError("Potts model needs q >= 2 colours")
        if not J >= 0:
            raise ModelError("Potts coupling must be non-negative")
        self.n = int(n)
        self.q = int(q)
        self.J = float(J)
        self.n_vertices = self.n * self.n
        self.name = f"potts-torus(n={self.n},q={self.q})"
        edges = []
        for r in range(self.n):
            for col in range(self.n):
                v = r * self.n + col
                edges.append((v, r * self.n + (col + 1) % self.n))
                edges.append((v, ((r + 1) % self.n) * self.n + col))
        self.edges = edges
        self._rate = Fraction(1, self.q * self.n_vertices)
        self._pow = [self.q**v for v in range(self.n_vertices)]

    @property
    def state_count(self):
        count = self.q**self.n_vertices
        return count if count < (1 << 63) else None

    def colours(self, s):
        out = []
        for _ in range(self.n_vertices):
            s, d = divmod(s, self.q)
            out.append(d)
        return out

    def encode(self, colours):
        return sum(int(c) * p for c, p in zip(colours, self._pow))

    def energy(self, s):
        col = self.colours(s)
        return -self.J * sum(1 for v, w in self.edges if col[v] == col[w])

    def neighbors(self, s):
        col = self.colours(s)
        rate = float(self._rate)
        out = []
        for v, c in enumerate(col):
            for k in range(self.q):
                if k != c:
                    out.append((s + (k - c) * self._pow[v], rate))
        return out

    def ground(self):
        return 0, self.energy(0)

    @property
    def proposal_gap(self):
        # constant of the closed-form spin-model gap bound; the proposal
        # generator's own gap is exact_proposal_gap and is smaller
        return self.q / ((self.q - 1) * self.n_vertices)

    @property
    def exact_proposal_gap(self):
        # independent sites, each a complete graph on q colours at rate 1/(q|V|)
        return 1.0 / self.n_vertices

    def describe(self):
        return {"name": self.name, "n": self.n, "q": self.q, "J": self.J,
                "vertices": self.n_vertices, "edges": len(self.edges)}

    def _digits(self, cap):
        n = self.state_count
        if n is None or n > cap:
            raise ModelError(f"{self.name}: {n} states exceeds the enumeration cap {cap}")
        states = np.arange(n, dtype=np.int64)
        pow_ = np.array(self._pow, dtype=np.int64)
        return states, (states[:, None] // pow_) % self.q, pow_

    def energies(self, cap=DEFAULT_CAP):
        _, digits, _ = self._digits(cap)
        e = np.array(self.edges, dtype=np.int64)
        same = (digits[:, e[:, 0]] == digits[:, e[:, 1]]).sum(axis=1)
        return -self.J * same.astype(float)

    def neighbor_table(self, cap=DEFAULT_CAP):
        states, digits, pow_ = self._digits(cap)
        cols = []
        for v in range(self.n_vertices):
            for shift in range(1, self.q):
                new = (digits[:, v] + shift) % self.q
                cols.append(states + (new - digits[:, v]) * pow_[v])
        idx = np.stack(cols, axis=1)
        return idx, np.full(idx.shape, float(self._rate))


# ---------------------------------------------------------------------------
# Tabular
# ---------------------------------------------------------------------------


class TabularModel(Model):
    """Explicit energies and symmetric edge rates, usually read from a file."""

    def __init__(self, energies, edges, name="tabular", ground_state=None):
        self.energy_list = [float(e) for e in energies]
        n = len(self.energy_list)
        if n == 0:
            raise ModelError("tabular model needs at least one state")
        self.name = name
        self._nbrs: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        self.edge_list: list[tuple[int, int, float]] = []
        seen = {}
        for i, j, r in edges:
            i, j, r = int(i), int(j), float(r)
            if not (0 <= i < n and 0 <= j < n):
                raise ModelError(f"edge ({i}, {j}) references a missing state")
            if i == j:
                raise ModelError(f"self-loop edge at state {i}")
            if not r > 0:
                raise ModelError(f"edge ({i}, {j}) needs a positive rate, got {r}")
            key = (min(i, j), max(i, j))
            if key in seen:
                if seen[key] != r:
                    raise ModelError(f"asymmetric rate pair {key}: {seen[key]} vs {r}")
                continue
            seen[key] = r
            self.edge_list.append((key[0], key[1], r))
            self._nbrs[i].append((j, r))
            self._nbrs[j].append((i, r))
        self._ground = ground_state
        uf = UnionFind(n)
        for i, j, _ in self.edge_list:
            uf.union(i, j)
        components = len({uf.find(s) for s in range(n)})
        if components > 1:
            raise ModelError(f"{name}: proposal graph is disconnected ({components} components)")

    @property
    def state_count(self):
        return len(self.energy_list)

    def energy(self, s):
        return self.energy_list[s]

    def neighbors(self, s):
        return list(self._nbrs[s])

    def ground(self):
        if self._ground is not None:
            return self._ground, self.energy_list[self._ground]
        s = int(np.argmin(self.energy_list))
        return s, self.energy_list[s]

    def energies(self, cap=DEFAULT_CAP):
        if self.state_count > cap:
            raise ModelError(f"{self.name}: {self.state_count} states exceeds the enumeration cap {cap}")
        return np.array(self.energy_list, dtype=float)

    def describe(self):
        return {"name": self.name, "states": self.state_count, "edges": len(self.edge_list)}


def load_tabular(path):
    """Read a tabular model file.

    Format (UTF-8, ``#`` starts a comment, blank lines ignored)::

        states N
        state <idx> <energy>      # exactly N lines, idx = 0..N-1
        edge <i> <j> <rate>       # undirected; rate applies both ways

    A pair listed twice must carry the same rate.
    """
    path = Path(path)
    n = None
    energies: dict[int, float] = {}
    edges = []
    name = path.stem
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key = parts[0].lower()
            try:
                if key == "states":
                    if n is not None or len(parts) != 2:
                        raise ValueError("expected a single 'states N' header")
                    n = int(parts[1])
                    if n < 1:
                        raise ValueError("state count must be positive")
                elif key == "state":
                    if n is None:
                        raise ValueError("'state' line before 'states' header")
                    if len(parts) != 3:
                        raise ValueError("expected 'state <idx> <energy>'")
                    idx, e = int(parts[1]), float(parts[2])
                    if not 0 <= idx < n:
                        raise ValueError(f"state index {idx} out of range")
                    if idx in energies:
                        raise ValueError(f"state {idx} defined twice")
                    if not math.isfinite(e):
                        raise ValueError("energy must be finite")
                    energies[idx] = e
                elif key == "edge":
                    if n is None:
                        raise ValueError("'edge' line before 'states' header")
                    if len(parts) != 4:
                        raise ValueError("expected 'edge <i> <j> <rate>'")
                    edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
                else:
                    raise ValueError(f"unknown keyword {parts[0]!r}")
            except ValueError as exc:
                raise ModelError(f"{path}:{lineno}: {exc}") from None
    if n is None:
        raise ModelError(f"{path}: missing 'states N' header")
    missing = sorted(set(range(n)) - set(energies))
    if missing:
        raise ModelError(f"{path}: no energy for states {missing[:5]}")
    return TabularModel([energies[i] for i in range(n)], edges, name=name)


def write_tabular(model, path):
    """Write a :class:`TabularModel` in the format read by :func:`load_tabular`."""
    lines = [f"# {model.name}", f"states {model.state_count}"]
    lines += [f"state {i} {e!r}" for i, e in enumerate(model.energy_list)]
    lines += [f"edge {i} {j} {r!r}" for i, j, r in model.edge_list]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# reference chains used across tests, CLI and benchmarks
# ---------------------------------------------------------------------------


def _path_chain(energies, name, rate=1.0):
    edges = [(i, i + 1, rate) for i in range(len(energies) - 1)]
    return TabularModel(energies, edges, name=name)


def reference_chain(name):
    """Small fixed landscapes.

    ``two-state``   energies (0, 1), one edge at rate 1.
    ``three-state`` path with energies (0, 2, 1).
    ``double-well`` path with energies (0, 4, 8, 4, 0.5): a deep well, a
                    shallow well and a barrier of height 8 between them.
    """
    if name not in REFERENCE_CHAINS:
        raise ModelError(f"unknown reference chain {name!r}")
    return _path_chain(REFERENCE_CHAINS[name], name)


REFERENCE_CHAINS = {
    "two-state": (0.0, 1.0),
    "three-state": (0.0, 2.0, 1.0),
    "double-well": (0.0, 4.0, 8.0, 4.0, 0.5),
}
