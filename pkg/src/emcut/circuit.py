"""Circuit representation, cluster-unitary generator and wire cutting."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .linalg import CNOT, H_GATE, S_GATE, X, is_unitary
from .rng import make_rng


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    unitary: np.ndarray = field(repr=False)
    qubits: tuple
    layer: int

    @property
    def gate_class(self):
        return "one-qubit" if len(self.qubits) == 1 else "two-qubit"


@dataclass
class Circuit:
    """Gate list on ``num_qubits`` wires, all measured in Z at the end."""

    num_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, gate):
        u = np.asarray(gate.unitary)
        k = len(gate.qubits)
        if k not in (1, 2) or u.shape != (2**k, 2**k):
            raise CircuitError(f"gate on {gate.qubits} has shape {u.shape}")
        if not is_unitary(u):
            raise CircuitError(f"gate on {gate.qubits} is not unitary")
        if any(q < 0 or q >= self.num_qubits for q in gate.qubits):
            raise CircuitError(f"gate qubits {gate.qubits} out of range")
        if len(set(gate.qubits)) != k:
            raise CircuitError("two-qubit gate must act on distinct qubits")

    def append(self, unitary, qubits, layer=None):
        if layer is None:
            layer = self.depth
        gate = Gate(np.asarray(unitary, dtype=complex), tuple(int(q) for q in qubits), int(layer))
        self._check(gate)
        self.gates.append(gate)
        return self

    @property
    def depth(self):
        return 1 + max((g.layer for g in self.gates), default=-1)

    def ordered_gates(self):
        return sorted(self.gates, key=lambda g: g.layer)

    def unitary(self):
        """Full ``2**n`` unitary (big-endian qubit order)."""
        n = self.num_qubits
        u = np.eye(2**n, dtype=complex)
        for g in self.ordered_gates():
            u = apply_gate_to_matrix(u, g.unitary, g.qubits, n)
        return u


def apply_gate_to_matrix(m, gate, qubits, n):
    """Left-multiply ``m`` (shape ``(2**n, ...)``) by ``gate`` on ``qubits``."""
    k = len(qubits)
    rest = m.shape[1:]
    t = m.reshape((2,) * n + rest)
    g = gate.reshape((2,) * (2 * k))
    t = np.tensordot(g, t, axes=(list(range(k, 2 * k)), list(qubits)))
    t = np.moveaxis(t, list(range(k)), list(qubits))
    return t.reshape(m.shape)


def haar_unitary(d, rng):
    """Haar-random ``d x d`` unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def gen_cluster_unitary(n, layers=3, seed=0):
    """Brickwork circuit of Haar-random two-qubit gates.

    Odd layers (1-based) couple pairs ``(0,1), (2,3), ...``; even layers
    couple ``(1,2), (3,4), ...``.
    """
    if n < 2 or n % 2:
        raise CircuitError(f"cluster circuits need an even number of qubits >= 2, got {n}")
    if layers < 1:
        raise CircuitError("layers must be >= 1")
    rng = make_rng(seed, "cluster", n, layers)
    circ = Circuit(n)
    for layer in range(layers):
        start = 0 if layer % 2 == 0 else 1
        for q in range(start, n - 1, 2):
            circ.append(haar_unitary(4, rng), (q, q + 1), layer)
    return circ


def ghz_circuit(n=4):
    circ = Circuit(n)
    circ.append(H_GATE, (0,), 0)
    for q in range(n - 1):
        circ.append(CNOT, (q, q + 1), q + 1)
    return circ


@dataclass(frozen=True)
class CutPoint:
    """Cut on ``qubit`` before gate layer ``position``."""

    qubit: int
    position: int


@dataclass(frozen=True)
class CutSpec:
    points: tuple

    def __init__(self, points):
        pts = tuple(p if isinstance(p, CutPoint) else CutPoint(*p) for p in points)
        if len(set(pts)) != len(pts):
            raise CircuitError("cut points must be distinct")
        object.__setattr__(self, "points", tuple(sorted(pts, key=lambda p: (p.qubit, p.position))))


def default_cluster_cuts(n, layers=3):
    """Two cuts on the middle wire around the central even-layer gate.

    Every fragment is then a one-input/one-output channel fragment with
    ``n // 2`` conditioning qubits.
    """
    c = n // 2
    if layers != 3 or n < 4 or c % 2:
        raise CircuitError(
            "the default cut pattern needs 3 layers and n // 2 even (n = 4, 8, 12, ...)"
        )
    return CutSpec([CutPoint(c, 1), CutPoint(c, 2)])


@dataclass(frozen=True)
class Segment:
    """Piece of an original wire between cuts (or circuit boundaries)."""

    qubit: int
    start: int  # first layer (inclusive)
    stop: int  # last layer (exclusive)
    cut_in: int | None  # cut-edge id feeding this segment, if any
    cut_out: int | None  # cut-edge id leaving this segment, if any


@dataclass
class Fragment:
    """Sub-circuit produced by wire cutting.

    Local qubit ``j`` of ``circuit`` is ``segments[j]``.  ``cut_inputs`` and
    ``cut_outputs`` hold local qubit indices in cut-edge order, and
    ``conditioning`` maps local qubits to the original measured qubits.
    """

    index: int
    circuit: Circuit
    segments: list
    cut_inputs: list
    cut_outputs: list
    input_edges: list
    output_edges: list
    conditioning: list
    conditioning_qubits: list

    @property
    def k_in(self):
        return len(self.cut_inputs)

    @property
    def k_out(self):
        return len(self.cut_outputs)

    @property
    def k(self):
        return self.k_in + self.k_out

    @property
    def m(self):
        return len(self.conditioning)

    @property
    def kind(self):
        if self.k_in == 0 and self.k_out == 0:
            return "closed"
        if self.k_in == 0:
            return "state"
        if self.k_out == 0:
            return "povm"
        return "channel"

    @property
    def num_settings(self):
        return 4**self.k_in * 3**self.k_out


@dataclass(frozen=True)
class CutEdge:
    id: int
    qubit: int
    position: int
    upstream: int  # fragment index
    upstream_slot: int  # position in upstream.cut_outputs
    downstream: int
    downstream_slot: int


def apply_cut(circuit, cuts, max_qubits=None):
    """Split ``circuit`` into fragments at the given cut points.

    Returns ``(fragments, edges)``.  Raises :class:`CircuitError` when the
    cuts leave the circuit connected or a fragment exceeds ``max_qubits``.
    """
    if not cuts.points:
        raise CircuitError("empty cut specification does not separate the circuit")
    n, depth = circuit.num_qubits, circuit.depth
    by_qubit = {q: sorted(p.position for p in cuts.points if p.qubit == q) for q in range(n)}
    for p in cuts.points:
        if not 0 <= p.qubit < n:
            raise CircuitError(f"cut qubit {p.qubit} out of range")
        if not 0 < p.position < depth:
            raise CircuitError(f"cut position {p.position} must lie strictly inside depth {depth}")

    edge_ids = {}
    for p in cuts.points:
        edge_ids[(p.qubit, p.position)] = len(edge_ids)

    segments = []
    for q in range(n):
        bounds = [0] + by_qubit[q] + [depth]
        for a, b in zip(bounds[:-1], bounds[1:]):
            segments.append(
                Segment(
                    q,
                    a,
                    b,
                    edge_ids.get((q, a)),
                    edge_ids.get((q, b)),
                )
            )

    def seg_of(q, layer):
        for i, s in enumerate(segments):
            if s.qubit == q and s.start <= layer < s.stop:
                return i
        raise AssertionError

    # union-find over segments joined by gates
    parent = list(range(len(segments)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    gate_segs = []
    for g in circuit.gates:
        segs = [seg_of(q, g.layer) for q in g.qubits]
        gate_segs.append(segs)
        for s in segs[1:]:
            parent[find(s)] = find(segs[0])

    roots = []
    for i in range(len(segments)):
        r = find(i)
        if r not in roots:
            roots.append(r)
    if len(roots) < 2:
        raise CircuitError("cuts do not disconnect the circuit")

    # order fragments by their first segment (qubit-major), stable
    frag_of_seg = [roots.index(find(i)) for i in range(len(segments))]
    fragments = []
    for fi in range(len(roots)):
        seg_idx = [i for i in range(len(segments)) if frag_of_seg[i] == fi]
        local = {si: j for j, si in enumerate(seg_idx)}
        sub = Circuit(len(seg_idx))
        for g, segs in zip(circuit.gates, gate_segs):
            if frag_of_seg[segs[0]] == fi:
                sub.append(g.unitary, [local[s] for s in segs], g.layer)
        segs = [segments[i] for i in seg_idx]
        ins = sorted((s.cut_in, j) for j, s in enumerate(segs) if s.cut_in is not None)
        outs = sorted((s.cut_out, j) for j, s in enumerate(segs) if s.cut_out is not None)
        cond = [(s.qubit, j) for j, s in enumerate(segs) if s.cut_out is None]
        cond.sort()
        fragments.append(
            Fragment(
                index=fi,
                circuit=sub,
                segments=segs,
                cut_inputs=[j for _, j in ins],
                cut_outputs=[j for _, j in outs],
                input_edges=[e for e, _ in ins],
                output_edges=[e for e, _ in outs],
                conditioning=[j for _, j in cond],
                conditioning_qubits=[q for q, _ in cond],
            )
        )
        if max_qubits is not None and sub.num_qubits > max_qubits:
            raise CircuitError(
                f"fragment {fi} uses {sub.num_qubits} qubits, above the limit {max_qubits}"
            )

    edges = []
    for p in cuts.points:
        eid = edge_ids[(p.qubit, p.position)]
        up = next(f for f in fragments if eid in f.output_edges)
        down = next(f for f in fragments if eid in f.input_edges)
        edges.append(
            CutEdge(
                eid,
                p.qubit,
                p.position,
                up.index,
                up.output_edges.index(eid),
                down.index,
                down.input_edges.index(eid),
            )
        )
    edges.sort(key=lambda e: e.id)
    return fragments, edges


# preparation unitaries acting on |0>: |0>, |1>, |+>, |+i>
PREP_UNITARIES = [None, X, H_GATE, S_GATE @ H_GATE]
# basis-change unitaries before a Z measurement: X, Y, Z bases
MEAS_UNITARIES = [H_GATE, H_GATE @ S_GATE.conj().T, None]
PREP_LABELS = ["0", "1", "+", "+i"]
BASIS_LABELS = ["X", "Y", "Z"]


def setting_indices(k_in, k_out):
    """All (prep tuple, basis tuple) settings in row-major order."""
    preps = list(itertools.product(range(4), repeat=k_in))
    bases = list(itertools.product(range(3), repeat=k_out))
    return preps, bases


def fragment_circuit_instance(frag, prep_indices, meas_basis_indices):
    """Runnable circuit for one tomography setting of ``frag``.

    Cut inputs are prepared in the indexed state, cut outputs are rotated
    into the indexed Pauli basis, and every local qubit is Z-measured.
    """
    prep_indices = tuple(prep_indices)
    meas_basis_indices = tuple(meas_basis_indices)
    if len(prep_indices) != frag.k_in or len(meas_basis_indices) != frag.k_out:
        raise CircuitError("one preparation per cut input and one basis per cut output required")
    if any(not 0 <= i < 4 for i in prep_indices):
        raise CircuitError(f"preparation index out of range 0-3: {prep_indices}")
    if any(not 0 <= b < 3 for b in meas_basis_indices):
        raise CircuitError(f"measurement basis index out of range 0-2: {meas_basis_indices}")

    body = frag.circuit
    offset = 1  # layer 0 holds preparations
    circ = Circuit(body.num_qubits)
    for q, i in zip(frag.cut_inputs, prep_indices):
        if PREP_UNITARIES[i] is not None:
            circ.append(PREP_UNITARIES[i], (q,), 0)
    for g in body.gates:
        circ.append(g.unitary, g.qubits, g.layer + offset)
    last = body.depth + offset
    for q, b in zip(frag.cut_outputs, meas_basis_indices):
        if MEAS_UNITARIES[b] is not None:
            circ.append(MEAS_UNITARIES[b], (q,), last)
    return circ
