"""Dense linear algebra and channel-representation conventions.

Conventions used throughout the package:

* vectorization is column stacking, ``|A>> = A.flatten(order="F")``, so that
  ``<<A|B>> = Tr[A^dag B]``;
* the Choi matrix of a map ``E`` is ``sum_ij |i><j| (x) E(|i><j|)`` with the
  input factor first.  It is unnormalized: a trace-preserving channel on
  ``n`` qubits has ``Tr[choi] = 2**n`` and ``E(rho) = Tr_in[(rho^T (x) I) choi]``;
* multi-qubit registers are big-endian: qubit 0 is the most significant
  bit of a basis index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

HERMITIAN_ATOL = 1e-10
PSD_ATOL = 1e-8
UNITARY_ATOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.diag([1, 1j]).astype(complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class LinAlgError(ValueError):
    """Raised when a matrix violates a representation precondition."""


def vectorize(a):
    return np.asarray(a).flatten(order="F")


def devectorize(v, shape=None):
    v = np.asarray(v)
    if shape is None:
        d = int(round(np.sqrt(v.size)))
        shape = (d, d)
    return v.reshape(shape, order="F")


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_defect(m):
    m = np.asarray(m)
    return float(np.max(np.abs(m - dagger(m)))) if m.size else 0.0


def check_hermitian(m, atol=HERMITIAN_ATOL):
    defect = hermitian_defect(m)
    if defect > atol:
        raise LinAlgError(f"matrix is not Hermitian: max |A - A^dag| = {defect:.3e}")


def is_unitary(u, atol=UNITARY_ATOL):
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0))


def eig_hermitian(m, atol=HERMITIAN_ATOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns.  Raises :class:`LinAlgError` if ``m`` is not
    Hermitian within ``atol``.
    """
    m = np.asarray(m, dtype=complex)
    check_hermitian(m, atol)
    # symmetrize so eigh sees the exact Hermitian part
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def matrix_log_unitary(u):
    """Principal Hermitian generator ``H`` with ``u = exp(iH)``.

    Each unitary eigenvalue ``e^{i theta}`` is mapped to ``theta`` in
    ``(-pi, pi]``.
    """
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u):
        raise LinAlgError("matrix_log_unitary requires a unitary matrix")
    # Schur form of a normal matrix is diagonal, which keeps degenerate
    # eigenspaces orthonormal (np.linalg.eig does not).
    t, q = la.schur(u, output="complex")
    theta = np.angle(np.diag(t))
    theta = np.where(theta <= -np.pi + 1e-12, np.pi, theta)
    h = q @ np.diag(theta) @ q.conj().T
    return 0.5 * (h + h.conj().T)


def partial_trace(m, dims, keep):
    """Partial trace of ``m`` over all subsystems not listed in ``keep``."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    t = np.asarray(m).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = list(letters[:n])
    bra = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            bra[i] = ket[i]
    out = [ket[i] for i in keep] + [bra[i] for i in keep]
    res = np.einsum("".join(ket + bra) + "->" + "".join(out), t)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(d, d)


@dataclass(frozen=True)
class ChoiTensor:
    """Unnormalized Choi, density or POVM matrix on ``k_in + k_out`` qubits.

    ``k_in == 0`` describes a (possibly unnormalized) state and
    ``k_out == 0`` a POVM element (stored as its Choi form, i.e. the
    transpose of the effect operator).
    """

    matrix: np.ndarray = field(repr=False)
    k_in: int
    k_out: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = 2 ** (self.k_in + self.k_out)
        if m.shape != (d, d):
            raise LinAlgError(
                f"Choi matrix shape {m.shape} does not match "
                f"{self.k_in} input and {self.k_out} output qubits"
            )
        if not np.all(np.isfinite(m)):
            raise LinAlgError("Choi matrix has non-finite entries")
        check_hermitian(m)
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def kind(self):
        if self.k_in == 0:
            return "state"
        if self.k_out == 0:
            return "povm"
        return "channel"

    @property
    def dim_in(self):
        return 2**self.k_in

    @property
    def dim_out(self):
        return 2**self.k_out

    @property
    def trace(self):
        return float(np.real(np.trace(self.matrix)))

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self, atol=PSD_ATOL):
        return self.min_eigenvalue() >= -atol

    def partial_trace_out(self):
        return partial_trace(self.matrix, [self.dim_in, self.dim_out], [0])

    def is_trace_preserving(self, atol=PSD_ATOL):
        return bool(
            np.allclose(self.partial_trace_out(), np.eye(self.dim_in), atol=atol, rtol=0)
        )

    def is_cptp(self, atol=PSD_ATOL):
        return self.is_psd(atol) and self.is_trace_preserving(atol)

    def apply(self, rho):
        """Evaluate the map on an input operator, ``Tr_in[(rho^T (x) I) choi]``."""
        rho = np.asarray(rho, dtype=complex)
        t = self.matrix.reshape(self.dim_in, self.dim_out, self.dim_in, self.dim_out)
        return np.einsum("ij,iajb->ab", rho, t)


def kraus_to_choi(kraus):
    """Choi matrix ``sum_k |K_k>><<K_k|`` of a Kraus set."""
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    d_out, d_in = kraus[0].shape
    k_in, k_out = int(np.log2(d_in)), int(np.log2(d_out))
    total = sum(k.conj().T @ k for k in kraus)
    excess = np.linalg.eigvalsh(total)[-1] - 1.0
    if excess > PSD_ATOL:
        raise LinAlgError(f"Kraus set is trace-increasing by {excess:.3e}")
    vecs = np.stack([vectorize(k) for k in kraus], axis=1)
    return ChoiTensor(vecs @ vecs.conj().T, k_in, k_out)


def choi_to_kraus(choi, atol=PSD_ATOL):
    """Canonical Kraus operators of a CP map, largest ``<<K|K>>`` first."""
    evals, evecs = eig_hermitian(choi.matrix)
    if evals[0] < -atol:
        raise LinAlgError(f"Choi matrix has negative eigenvalue {evals[0]:.3e}")
    kraus = []
    for lam, v in zip(evals[::-1], evecs[:, ::-1].T):
        if lam <= atol * 1e-2:
            break
        kraus.append(np.sqrt(lam) * devectorize(v, (choi.dim_out, choi.dim_in)))
    if not kraus:
        kraus.append(np.zeros((choi.dim_out, choi.dim_in), dtype=complex))
    return kraus


def unitary_choi(u):
    return kraus_to_choi([u])


def apply_kraus(kraus, rho):
    return sum(k @ rho @ k.conj().T for k in kraus)


def max_entangled(d):
    """Normalized ``|Omega> = sum_i |ii> / sqrt(d)``."""
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
