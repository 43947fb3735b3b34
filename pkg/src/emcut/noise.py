"""Noise channels, twirled approximations and noisy simulation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .circuit import apply_gate_to_matrix
from .linalg import (
    CNOT,
    PAULIS,
    ChoiTensor,
    choi_to_kraus,
    kraus_to_choi,
    kron_all,
    matrix_log_unitary,
)
from .rng import make_rng


class NoiseError(ValueError):
    pass


def pauli_labels(n):
    return ["".join(t) for t in itertools.product("IXYZ", repeat=n)]


def pauli_matrix(label):
    return kron_all([PAULIS[c] for c in label])


@dataclass(frozen=True)
class PauliChannelParams:
    """Probabilities of each n-qubit Pauli error; ``"I"*n`` carries the rest."""

    probs: dict

    @property
    def num_qubits(self):
        return len(next(iter(self.probs)))

    def __getitem__(self, label):
        return self.probs.get(label, 0.0)

    def to_channel(self):
        kraus = [
            np.sqrt(p) * pauli_matrix(lbl) for lbl, p in self.probs.items() if p > 0
        ]
        return kraus_to_choi(kraus)

    @property
    def bias(self):
        """Single-qubit bias ``b`` with ``p_z = p_x (1 + b)``."""
        if self.num_qubits != 1:
            raise NoiseError("bias is defined for single-qubit Pauli channels")
        return self["Z"] / self["X"] - 1.0


def _tensor_channel(kraus, num_qubits):
    ops = [kron_all(c) for c in itertools.product(kraus, repeat=num_qubits)]
    return kraus_to_choi(ops)


def depolarizing(p, num_qubits=2):
    if not 0 <= p <= 1:
        raise NoiseError(f"depolarizing probability must lie in [0, 1], got {p}")
    d = 2**num_qubits
    labels = pauli_labels(num_qubits)
    # (1-p) rho + p I/d == sum_P q_P P rho P with q_P = p/d^2 for P != I
    probs = {lbl: p / d**2 for lbl in labels}
    probs[labels[0]] = 1 - p + p / d**2
    return PauliChannelParams(probs).to_channel()


def biased_pauli_params(p, b):
    """Single-qubit biased Pauli channel with X, Y rate ``p`` and Z rate ``p (1 + b)``."""
    if p < 0 or (3 + b) * p > 1 + 1e-15 or p * (1 + b) < 0:
        raise NoiseError(f"invalid biased Pauli parameters p={p}, b={b}")
    return PauliChannelParams({"I": 1 - (3 + b) * p, "X": p, "Y": p, "Z": p * (1 + b)})


def biased_pauli(p, b, num_qubits=2):
    one = biased_pauli_params(p, b)
    return _tensor_channel([np.sqrt(one[c]) * PAULIS[c] for c in "IXYZ"], num_qubits)


def amplitude_damping_kraus(gamma):
    if not 0 <= gamma <= 1:
        raise NoiseError(f"damping parameter must lie in [0, 1], got {gamma}")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return [k0, k1]


def amplitude_damping(gamma, num_qubits=2):
    return _tensor_channel(amplitude_damping_kraus(gamma), num_qubits)


def cnot_generator():
    """Generator ``log(U_CNOT) / (-i)``, so that ``U_CNOT = exp(-i H)``."""
    return -matrix_log_unitary(CNOT)


def coherent_cnot(dtheta):
    return kraus_to_choi([expm(-1j * dtheta * cnot_generator())])


def make_channel(kind, **params):
    """Construct a CPTP channel by name.

    ``kind`` is one of ``depolarizing`` (``p``), ``biased-pauli`` (``p``,
    ``b``), ``amplitude-damping`` (``gamma``) or ``coherent-cnot``
    (``dtheta``).  ``num_qubits`` (default 2) applies to the first three;
    Pauli and damping noise are tensor products of one-qubit channels.
    """
    n = params.pop("num_qubits", 2)
    if kind == "depolarizing":
        return depolarizing(params["p"], n)
    if kind == "biased-pauli":
        return biased_pauli(params["p"], params["b"], n)
    if kind == "amplitude-damping":
        return amplitude_damping(params["gamma"], n)
    if kind == "coherent-cnot":
        if n != 2:
            raise NoiseError("coherent CNOT error is a two-qubit channel")
        return coherent_cnot(params["dtheta"])
    raise NoiseError(f"unknown channel kind {kind!r}")


def make_assignment(p_meas):
    if not 0 <= p_meas <= 0.5:
        raise NoiseError(f"readout error probability must lie in [0, 0.5], got {p_meas}")
    return np.array([[1 - p_meas, p_meas], [p_meas, 1 - p_meas]])


def _commutes(p, q):
    anti = sum(a != "I" and b != "I" and a != b for a, b in zip(p, q))
    return 1.0 if anti % 2 == 0 else -1.0


def pauli_transfer_diagonal(channel):
    n = channel.k_in
    d = 2**n
    labels = pauli_labels(n)
    return labels, np.array(
        [np.real(np.trace(pauli_matrix(l) @ channel.apply(pauli_matrix(l)))) / d for l in labels]
    )


def pauli_twirl(channel, atol=1e-6):
    """Pauli-twirled approximation of a channel on up to two qubits."""
    if channel.k_in != channel.k_out or channel.k_in > 2:
        raise NoiseError("Pauli twirl supports 1- and 2-qubit channels")
    labels, f = pauli_transfer_diagonal(channel)
    d2 = len(labels)
    walsh = np.array([[_commutes(p, q) for q in labels] for p in labels])
    probs = walsh @ f / d2
    if probs.min() < -atol:
        raise NoiseError(f"twirled channel has negative Pauli probability {probs.min():.3e}")
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return PauliChannelParams(dict(zip(labels, probs)))


def process_fidelity(channel):
    d = channel.dim_in
    vec_id = np.eye(d).reshape(-1)
    return float(np.real(vec_id @ channel.matrix @ vec_id)) / d**2


def average_gate_fidelity(channel):
    d = channel.dim_in
    return (d * process_fidelity(channel) + 1) / (d + 1)


def clifford_twirl(channel):
    """Depolarizing probability with the same average gate fidelity."""
    d = channel.dim_in
    return (1 - process_fidelity(channel)) / (1 - 1 / d**2)


@dataclass
class NoiseSpec:
    """Per-gate-class noise channels plus symmetric per-qubit readout error."""

    two_qubit: ChoiTensor | None = None
    one_qubit: ChoiTensor | None = None
    p_meas: float = 0.0
    multiplicity: int = 1
    description: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for ch in (self.two_qubit, self.one_qubit):
            if ch is not None and not ch.is_cptp():
                raise NoiseError("noise channels must be CPTP")
        self.assignment = make_assignment(self.p_meas)
        if self.multiplicity < 1:
            raise NoiseError("noise multiplicity must be >= 1")

    @cached_property
    def two_qubit_kraus(self):
        return None if self.two_qubit is None else choi_to_kraus(self.two_qubit)

    @cached_property
    def one_qubit_kraus(self):
        return None if self.one_qubit is None else choi_to_kraus(self.one_qubit)

    @property
    def is_noiseless(self):
        return self.two_qubit is None and self.one_qubit is None and self.p_meas == 0

    def readout(self, n):
        return [self.assignment] * n


NOISELESS = NoiseSpec()


def _conjugate(rho, op, qubits, n):
    rho = apply_gate_to_matrix(rho, op, qubits, n)
    return apply_gate_to_matrix(rho.conj().T, op, qubits, n).conj().T


def simulate_density_matrix(circuit, noise=NOISELESS, max_qubits=12):
    """Noisy density matrix after running ``circuit`` from ``|0...0>``.

    Each gate is followed by its gate-class channel (applied
    ``noise.multiplicity`` times for two-qubit gates).
    """
    n = circuit.num_qubits
    if n > max_qubits:
        raise NoiseError(f"{n} qubits exceeds the simulator limit of {max_qubits}")
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    for g in circuit.ordered_gates():
        rho = _conjugate(rho, g.unitary, g.qubits, n)
        if len(g.qubits) == 2:
            kraus, reps = noise.two_qubit_kraus, noise.multiplicity
        else:
            kraus, reps = noise.one_qubit_kraus, 1
        if kraus is None:
            continue
        for _ in range(reps):
            rho = sum(_conjugate(rho, k, g.qubits, n) for k in kraus)
    return 0.5 * (rho + rho.conj().T)


def simulate_statevector(circuit):
    n = circuit.num_qubits
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    for g in circuit.ordered_gates():
        psi = apply_gate_to_matrix(psi, g.unitary, g.qubits, n)
    return psi


def apply_readout(probs, assignments):
    """Mix a big-endian probability vector by per-qubit assignment matrices."""
    probs = np.asarray(probs, dtype=float)
    n = len(assignments)
    t = probs.reshape((2,) * n)
    for q, a in enumerate(assignments):
        if a is None:
            continue
        t = np.moveaxis(np.tensordot(a, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def outcome_distribution(dm, readout=None):
    probs = np.clip(np.real(np.diag(dm)), 0.0, None)
    if readout is not None:
        probs = apply_readout(probs, readout)
    return probs / probs.sum()


def sample_counts(probs, shots, seed, *ids):
    """Multinomial counts over outcomes, deterministic for ``(seed, ids)``."""
    if shots < 1:
        raise NoiseError("shots must be >= 1")
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    rng = make_rng(seed, "shots", *ids)
    return rng.multinomial(int(shots), p / p.sum())


def counts_to_dict(counts, n):
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c}
