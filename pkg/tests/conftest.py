import numpy as np
import pytest

from emcut.circuit import CutSpec, apply_cut, default_cluster_cuts, gen_cluster_unitary, ghz_circuit
from emcut.knit import CutGraph
from emcut.noise import simulate_statevector


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_state(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cluster4():
    circ = gen_cluster_unitary(4, 3, seed=0)
    frags, edges = apply_cut(circ, default_cluster_cuts(4))
    return circ, frags, CutGraph.from_cut(frags, edges)


@pytest.fixture(scope="session")
def ghz4():
    circ = ghz_circuit(4)
    frags, edges = apply_cut(circ, CutSpec([(1, 2), (2, 3)]))
    return circ, frags, CutGraph.from_cut(frags, edges)


def ideal_probs(circ):
    return np.abs(simulate_statevector(circ)) ** 2


def true_conditional_tensors(frag):
    """Exact noiseless ``T(s)`` of a fragment built directly from its unitary."""
    from emcut.linalg import ChoiTensor

    nq = frag.circuit.num_qubits
    u = frag.circuit.unitary()
    cols = []
    for i in range(2**frag.k_in):
        bits = [(i >> (frag.k_in - 1 - w)) & 1 for w in range(frag.k_in)]
        idx = 0
        for q, bit in zip(frag.cut_inputs, bits):
            idx |= bit << (nq - 1 - q)
        psi = u[:, idx].reshape((2,) * nq).transpose(frag.cut_outputs + frag.conditioning)
        cols.append(psi.reshape(2**frag.k_out, 2**frag.m))
    vecs = np.stack(cols)  # (i, o, s)
    out = []
    for s in range(2**frag.m):
        v = vecs[:, :, s].reshape(-1)
        out.append(ChoiTensor(np.outer(v, v.conj()), frag.k_in, frag.k_out))
    return out


def random_conditional_channel(rng, m=1, k_in=1, k_out=1):
    """Blocks ``T(s)`` of a random isometry from ``k_in`` qubits to ``k_out + m`` qubits."""
    from emcut.circuit import haar_unitary
    from emcut.linalg import ChoiTensor

    d_in, d_out, ns = 2**k_in, 2**k_out, 2**m
    v = haar_unitary(d_out * ns, rng)[:, :d_in].reshape(d_out, ns, d_in)
    out = []
    for s in range(ns):
        vec = v[:, s, :].T.reshape(-1)  # index (i, o)
        out.append(ChoiTensor(np.outer(vec, vec.conj()), k_in, k_out))
    return out


def dataset_from_tensors(tensors, shots=None, rng=None, readout=0.0):
    """Exact (or sampled) ConditionalDataset generated from known blocks."""
    from emcut.noise import apply_readout, make_assignment
    from emcut.tomography import ConditionalDataset, TomoBasis

    k_in, k_out = tensors[0].k_in, tensors[0].k_out
    ns = len(tensors)
    m = int(np.log2(ns))
    smat = TomoBasis(k_in, k_out).matrix()
    probs = np.real(np.stack([smat @ t.matrix.reshape(-1, order="F") for t in tensors], axis=-1))
    shape = (4**k_in, 3**k_out, 2**k_out, ns)
    probs = np.clip(probs.reshape(shape), 0, None)
    if readout:
        a = make_assignment(readout)
        flat = probs.reshape(shape[0] * shape[1], -1)
        flat = np.array([apply_readout(row, [a] * (k_out + m)) for row in flat])
        probs = flat.reshape(shape)
    if shots is None:
        return ConditionalDataset(k_in, k_out, m, probs, None)
    counts = np.zeros(shape)
    for a in range(shape[0]):
        for b in range(shape[1]):
            p = probs[a, b].reshape(-1)
            counts[a, b] = rng.multinomial(shots, p / p.sum()).reshape(shape[2:])
    return ConditionalDataset(k_in, k_out, m, counts, shots)


def choi_distance(a, b):
    """Trace distance between two Choi matrices normalized by the input dimension."""
    diff = np.asarray(a) - np.asarray(b)
    return 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum()
