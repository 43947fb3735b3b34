"""Reassembling fragment tensors into outcome distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .mitigation import DominantEigenvalueTruncation
from .noise import apply_readout
from .tomography import make_fitter
from .validation import check_fitted, check_probability_vector


class KnitError(ValueError):
    pass


@dataclass
class OutcomeDistribution:
    probabilities: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def num_qubits(self):
        return int(np.log2(len(self.probabilities)))

    def expectation_z(self, qubits):
        n = self.num_qubits
        idx = np.arange(2**n)
        parity = np.zeros(2**n, dtype=int)
        for q in qubits:
            parity ^= (idx >> (n - 1 - q)) & 1
        return float(np.sum(self.probabilities * (1 - 2 * parity)))


@dataclass
class CutGraph:
    """Fragments and cut edges of a cut circuit.

    ``order`` lists edge ids in the order they are contracted.
    """

    fragments: list
    edges: list
    num_qubits: int
    order: list = None

    def __post_init__(self):
        if self.order is None:
            self.order = [e.id for e in self.edges]
        outs = {e for f in self.fragments for e in f.output_edges}
        ins = {e for f in self.fragments for e in f.input_edges}
        ids = {e.id for e in self.edges}
        if outs != ids or ins != ids:
            raise KnitError(f"dangling cut edges: {sorted((outs ^ ids) | (ins ^ ids))}")
        if sorted(self.order) != sorted(ids):
            raise KnitError("contraction order must consume every cut edge exactly once")
        qubits = sorted(q for f in self.fragments for q in f.conditioning_qubits)
        if qubits != list(range(self.num_qubits)):
            raise KnitError("fragments' conditioning qubits must partition the circuit qubits")

    @classmethod
    def from_cut(cls, fragments, edges):
        n = sum(f.m for f in fragments)
        return cls(list(fragments), list(edges), n)


def _operands(graph, stacks):
    """einsum operands: each fragment stack with axes (s, in/out kets, in/out bras)."""
    args = []
    edge_axis = {}
    nxt = 0
    for e in graph.order:
        edge_axis[e] = (nxt, nxt + 1)
        nxt += 2
    s_axes = []
    for f, stack in zip(graph.fragments, stacks):
        k = f.k_in + f.k_out
        wires = list(f.input_edges) + list(f.output_edges)
        kets = [edge_axis[e][0] for e in wires]
        bras = [edge_axis[e][1] for e in wires]
        s_ax = nxt
        nxt += 1
        s_axes.append(s_ax)
        arr = np.asarray(stack).reshape((stack.shape[0],) + (2,) * (2 * k))
        args += [arr, [s_ax] + kets + bras]
    return args, s_axes


def _stack(tensors, frag):
    arr = np.array([t.matrix for t in tensors])
    if arr.shape[0] != 2**frag.m:
        raise KnitError(
            f"fragment {frag.index} supplies {arr.shape[0]} conditional tensors, expected {2**frag.m}"
        )
    return arr


def _joint(graph, stacks):
    args, s_axes = _operands(graph, stacks)
    raw = np.einsum(*args, s_axes, optimize=True)
    return np.real(raw)


def _to_global(joint, graph):
    """Reorder a fragment-major joint array into the big-endian global index."""
    qubits = [q for f in graph.fragments for q in f.conditioning_qubits]
    t = joint.reshape((2,) * len(qubits))
    perm = [qubits.index(q) for q in range(graph.num_qubits)]
    return t.transpose(perm).reshape(-1)


def _fragment_bits(frag, s, n):
    idx = 0
    for q in frag.conditioning_qubits:
        idx = (idx << 1) | ((s >> (n - 1 - q)) & 1)
    return idx


def contract(fragment_tensors, graph, s):
    """Raw (unnormalized, possibly negative) value of outcome ``s``.

    ``fragment_tensors[i]`` is the list of conditional tensors of fragment
    ``i``; ``s`` is an integer over the ``n`` circuit qubits, qubit 0 most
    significant.
    """
    n = graph.num_qubits
    stacks = []
    for f in graph.fragments:
        t = fragment_tensors[f.index][_fragment_bits(f, s, n)]
        stacks.append(t.matrix[None])
    return float(_joint(graph, stacks).reshape(-1)[0])


def raw_distribution(fragment_tensors, graph):
    stacks = [_stack(fragment_tensors[f.index], f) for f in graph.fragments]
    return _to_global(_joint(graph, stacks), graph)


def full_distribution(fragment_tensors, graph, metadata=None):
    """All ``2**n`` outcome probabilities, clamped at zero and renormalized."""
    raw = raw_distribution(fragment_tensors, graph)
    mass = float(raw.sum())
    if mass <= 0:
        raise KnitError(f"reconstructed mass {mass:.3e} is not positive")
    probs = np.clip(raw, 0.0, None)
    probs /= probs.sum()
    meta = dict(metadata or {})
    meta["pre_norm_mass"] = mass
    return OutcomeDistribution(probs, meta)


def pauli_expectation(fragment_tensors, graph, observable, return_count=False):
    """Expectation of a Z-type Pauli string by marginal contraction.

    Conditional tensors are summed over every conditioning bit outside the
    observable's support, so only ``2**d`` outcome combinations are
    contracted for a weight-``d`` observable.  The value is normalized by
    the total reconstructed mass.
    """
    n = graph.num_qubits
    if len(observable) != n:
        raise KnitError(f"observable length {len(observable)} != {n} qubits")
    if set(observable) - {"I", "Z"}:
        raise KnitError("only diagonal (I/Z) observables are supported")
    support = [q for q, c in enumerate(observable) if c == "Z"]
    stacks = []
    for f in graph.fragments:
        arr = _stack(fragment_tensors[f.index], f)
        dims = arr.shape[1:]
        t = arr.reshape((2,) * f.m + dims)
        drop = tuple(i for i, q in enumerate(f.conditioning_qubits) if q not in support)
        t = t.sum(axis=drop) if drop else t
        stacks.append(t.reshape((-1,) + dims))
    joint = _joint(graph, stacks).reshape(-1)
    count = joint.size
    # joint is fragment-major over the supported qubits of each fragment
    kept = [q for f in graph.fragments for q in f.conditioning_qubits if q in support]
    signs = np.ones(1)
    for _ in kept:
        signs = np.kron(signs, [1.0, -1.0])
    value = float(np.dot(signs, joint) / joint.sum())
    return (value, count) if return_count else value


def trace_distance(p, q):
    p = p.probabilities if isinstance(p, OutcomeDistribution) else p
    q = q.probabilities if isinstance(q, OutcomeDistribution) else q
    p = check_probability_vector(p)
    q = check_probability_vector(q)
    if p.shape != q.shape:
        raise KnitError(f"distribution lengths differ: {p.size} vs {q.size}")
    return 0.5 * float(np.abs(p - q).sum())


def mitigate_readout_uncut(counts, assignments):
    """Invert tensor-product readout noise on an empirical distribution."""
    counts = np.asarray(counts, dtype=float)
    inverses = []
    for a in assignments:
        a = np.asarray(a, dtype=float)
        if abs(np.linalg.det(a)) < 1e-12:
            raise KnitError("assignment matrix is singular")
        inverses.append(np.linalg.inv(a))
    quasi = apply_readout(counts / counts.sum(), inverses)
    probs = np.clip(quasi, 0.0, None)
    return OutcomeDistribution(probs / probs.sum(), {"mitigation": "assignment-inverse"})


class CutReconstruction(BaseEstimator):
    """Fit every fragment and knit the original circuit's distribution.

    Parameters
    ----------
    fitter : {"LIN", "CLS", "MEMCLS"}
    devt : bool
        Truncate each conditional tensor to its dominant eigenvector.
    p_meas : float
        Readout error probability used by the MEMCLS fitter.
    """

    def __init__(self, fitter="CLS", devt=False, p_meas=0.0):
        self.fitter = fitter
        self.devt = devt
        self.p_meas = p_meas

    def fit(self, datasets, graph):
        """``datasets[i]`` is the :class:`ConditionalDataset` of fragment ``i``."""
        self.graph_ = graph
        self.fits_ = []
        tensors = {}
        for f in graph.fragments:
            est = make_fitter(self.fitter, self.p_meas).fit(datasets[f.index])
            self.fits_.append(est.result_)
            t = est.result_.tensors
            if self.devt:
                t = DominantEigenvalueTruncation().fit_transform(t)
            tensors[f.index] = t
        self.tensors_ = tensors
        return self

    def predict(self):
        check_fitted(self, ("tensors_",))
        meta = {"fitter": self.fitter, "devt": bool(self.devt)}
        return full_distribution(self.tensors_, self.graph_, meta)

    def expectation(self, observable):
        check_fitted(self, ("tensors_",))
        return pauli_expectation(self.tensors_, self.graph_, observable)
