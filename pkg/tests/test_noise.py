import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emcut.circuit import Circuit, gen_cluster_unitary
from emcut.linalg import CNOT, H_GATE, X, max_entangled
from emcut.noise import (
    NOISELESS,
    NoiseError,
    NoiseSpec,
    amplitude_damping_kraus,
    apply_readout,
    average_gate_fidelity,
    biased_pauli_params,
    clifford_twirl,
    depolarizing,
    make_assignment,
    make_channel,
    outcome_distribution,
    pauli_transfer_diagonal,
    pauli_twirl,
    sample_counts,
    simulate_density_matrix,
    simulate_statevector,
)

CPTP_KINDS = [
    ("depolarizing", {"p": 0.02}),
    ("biased-pauli", {"p": 0.01, "b": 0.5}),
    ("amplitude-damping", {"gamma": 0.01}),
    ("coherent-cnot", {"dtheta": np.pi / 32}),
]


@pytest.mark.parametrize("kind, params", CPTP_KINDS)
def test_channels_are_cptp(kind, params):
    ch = make_channel(kind, **params)
    assert ch.min_eigenvalue() >= -1e-8
    assert ch.is_trace_preserving(atol=1e-8)


@pytest.mark.parametrize("n", [1, 2])
def test_depolarizing_zero_is_identity(n):
    d = 2**n
    omega = max_entangled(d)
    np.testing.assert_allclose(
        depolarizing(0.0, n).matrix, d * np.outer(omega, omega.conj()), atol=1e-14
    )


def test_biased_pauli_rates():
    params = biased_pauli_params(0.01, 0.5)
    assert params["X"] == pytest.approx(0.01)
    assert params["Y"] == pytest.approx(0.01)
    assert params["Z"] == pytest.approx(0.015)
    assert params["I"] == pytest.approx(0.965)
    twirled = pauli_twirl(make_channel("biased-pauli", p=0.01, b=0.5, num_qubits=1))
    assert twirled["Z"] == pytest.approx(0.015, abs=1e-12)


def test_amplitude_damping_kraus_entry():
    _, k1 = amplitude_damping_kraus(0.01)
    assert k1[0, 1] == pytest.approx(0.1)


def test_coherent_channel_rank_one():
    ch = make_channel("coherent-cnot", dtheta=np.pi / 32)
    assert np.sum(np.linalg.eigvalsh(ch.matrix) > 1e-10) == 1


def test_coherent_channel_full_angle_is_cnot():
    # exp(-i * pi * H) with H = log(U) / (-i) gives back U up to a phase
    ch = make_channel("coherent-cnot", dtheta=1.0)
    vec = CNOT.reshape(-1, order="F")
    assert np.real(vec.conj() @ ch.matrix @ vec) == pytest.approx(16.0)


@pytest.mark.parametrize(
    "kind, params",
    [("depolarizing", {"p": 1.5}), ("amplitude-damping", {"gamma": -0.1}), ("biased-pauli", {"p": 0.3, "b": 1.0})],
)
def test_channel_parameter_rejection(kind, params):
    with pytest.raises(NoiseError):
        make_channel(kind, **params)


@pytest.mark.parametrize(
    "p, expected",
    [(0.05, [[0.95, 0.05], [0.05, 0.95]]), (0.0, np.eye(2)), (0.01, [[0.99, 0.01], [0.01, 0.99]])],
)
def test_assignment(p, expected):
    np.testing.assert_allclose(make_assignment(p), expected)


@pytest.mark.parametrize("p", [-0.1, 0.6])
def test_assignment_rejects(p):
    with pytest.raises(NoiseError):
        make_assignment(p)


def test_pta_amplitude_damping():
    tw = pauli_twirl(make_channel("amplitude-damping", gamma=0.01, num_qubits=1))
    assert tw["X"] == pytest.approx(0.0025, rel=1e-10)
    assert tw["Y"] == pytest.approx(0.0025, rel=1e-10)
    assert tw["Z"] == pytest.approx((1 - np.sqrt(0.99)) ** 2 / 4, rel=1e-8)
    assert round(tw["Z"], 6) == 6e-6


def test_pta_identity():
    tw = pauli_twirl(depolarizing(0.0, 2))
    assert tw["II"] == pytest.approx(1.0)
    assert sum(v for k, v in tw.probs.items() if k != "II") == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("p", [0.0, 0.03, 0.2])
def test_pta_one_qubit_depolarizing(p):
    tw = pauli_twirl(depolarizing(p, 1))
    for lbl in "XYZ":
        assert tw[lbl] == pytest.approx(p / 4, abs=1e-12)


@pytest.mark.parametrize("kind, params", CPTP_KINDS)
def test_pta_preserves_transfer_diagonal(kind, params):
    ch = make_channel(kind, **params)
    _, before = pauli_transfer_diagonal(ch)
    _, after = pauli_transfer_diagonal(pauli_twirl(ch).to_channel())
    np.testing.assert_allclose(after, before, atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 0.01, 0.1])
def test_cta_fixed_point(p):
    assert clifford_twirl(depolarizing(p, 2)) == pytest.approx(p, abs=1e-12)


def _fidelity_over_design(ch):
    # the six Pauli eigenstates form a 2-design, so their mean fidelity is exact
    states = [
        np.array(v, dtype=complex) / np.linalg.norm(v)
        for v in ([1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j])
    ]
    return np.mean([np.real(s.conj() @ ch.apply(np.outer(s, s.conj())) @ s) for s in states])


@pytest.mark.parametrize("kind, params", [("amplitude-damping", {"gamma": 0.01}), ("depolarizing", {"p": 0.07})])
def test_cta_matches_average_fidelity(kind, params):
    ch = make_channel(kind, num_qubits=1, **params)
    f_avg = _fidelity_over_design(ch)
    assert average_gate_fidelity(ch) == pytest.approx(f_avg, abs=1e-12)
    cta = depolarizing(clifford_twirl(ch), 1)
    assert average_gate_fidelity(cta) == pytest.approx(f_avg, abs=1e-12)


def test_empty_circuit():
    rho = simulate_density_matrix(Circuit(2))
    np.testing.assert_allclose(rho, np.diag([1, 0, 0, 0]))


def test_bell_circuit():
    circ = Circuit(2)
    circ.append(H_GATE, (0,), 0)
    circ.append(CNOT, (0, 1), 1)
    np.testing.assert_allclose(np.diag(simulate_density_matrix(circ)).real, [0.5, 0, 0, 0.5], atol=1e-14)


@pytest.mark.parametrize("p", [0.01, 0.1])
def test_x_gate_depolarizing(p):
    circ = Circuit(1)
    circ.append(X, (0,), 0)
    noise = NoiseSpec(one_qubit=depolarizing(p, 1))
    np.testing.assert_allclose(np.diag(simulate_density_matrix(circ, noise)).real, [p / 2, 1 - p / 2])


def test_noise_multiplicity():
    circ = Circuit(2)
    circ.append(CNOT, (0, 1), 0)
    once = simulate_density_matrix(circ, NoiseSpec(two_qubit=depolarizing(0.1)))
    twice = simulate_density_matrix(circ, NoiseSpec(two_qubit=depolarizing(0.1), multiplicity=2))
    assert once[0, 0].real == pytest.approx(1 - 0.1 * 3 / 4)
    assert twice[0, 0].real == pytest.approx(1 - (1 - 0.9**2) * 3 / 4)


def test_noiseless_matches_statevector():
    circ = gen_cluster_unitary(4, 3, seed=3)
    psi = simulate_statevector(circ)
    np.testing.assert_allclose(simulate_density_matrix(circ, NOISELESS), np.outer(psi, psi.conj()), atol=1e-12)


def test_simulator_size_limit():
    with pytest.raises(NoiseError):
        simulate_density_matrix(Circuit(3), max_qubits=2)


def test_readout_on_zero_state():
    np.testing.assert_allclose(
        outcome_distribution(np.diag([1.0, 0.0]), [make_assignment(0.05)]), [0.95, 0.05]
    )
    np.testing.assert_allclose(outcome_distribution(np.diag([0.3, 0.7])), [0.3, 0.7])


def test_readout_qubit_order():
    # only qubit 0 (most significant) is noisy
    out = apply_readout([1.0, 0, 0, 0], [make_assignment(0.1), None])
    np.testing.assert_allclose(out, [0.9, 0, 0.1, 0])


def test_sample_counts_deterministic():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    a = sample_counts(p, 10000, 42, "x", 1)
    b = sample_counts(p, 10000, 42, "x", 1)
    c = sample_counts(p, 10000, 42, "x", 2)
    np.testing.assert_array_equal(a, b)
    assert a.sum() == 10000
    assert not np.array_equal(a, c)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.25), st.floats(-1, 1))
def test_biased_pauli_cptp_property(p, b):
    if (3 + b) * p > 1:
        return
    ch = make_channel("biased-pauli", p=p, b=b)
    assert ch.is_cptp()
    tw = pauli_twirl(ch)
    assert tw["IZ"] == pytest.approx(biased_pauli_params(p, b)["I"] * p * (1 + b), abs=1e-10)
