"""Conditional fragment tomography: bases, datasets and fitters.

A fragment with ``k_in`` cut inputs, ``k_out`` cut outputs and ``m``
conditioning qubits is described by ``2**m`` conditional tensors ``T(s)``
on ``k_in + k_out`` qubits.  For preparation ``rho_a``, measurement basis
``b`` and cut outcome ``o`` the joint probability of ``(o, s)`` is
``Tr[(rho_a^T (x) M_{b,o}) T(s)]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .circuit import fragment_circuit_instance, setting_indices
from .linalg import ChoiTensor, LinAlgError, kron_all, vectorize
from .noise import NOISELESS, make_assignment, outcome_distribution, sample_counts, simulate_density_matrix
from .rng import make_rng
from .validation import check_dataset, check_fitted


class TomographyError(ValueError):
    pass


_KET = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def _proj(label):
    v = _KET[label]
    return np.outer(v, v.conj())


PREP_STATES = [_proj(l) for l in ("0", "1", "+", "+i")]
# MEAS_PROJECTORS[basis][outcome] for bases X, Y, Z
MEAS_PROJECTORS = [
    [_proj("+"), _proj("-")],
    [_proj("+i"), _proj("-i")],
    [_proj("0"), _proj("1")],
]


def noisy_projectors(assignment):
    """POVM elements of each Pauli basis seen through a readout assignment matrix."""
    a = np.asarray(assignment)
    return [
        [a[o, 0] * pair[0] + a[o, 1] * pair[1] for o in range(2)] for pair in MEAS_PROJECTORS
    ]


@dataclass(frozen=True)
class TomoBasis:
    """Product preparation / Pauli measurement basis for ``k_in`` and ``k_out`` cut wires.

    Rows are ordered ``(prep, basis, outcome)`` with each index
    row-major over the wires.
    """

    k_in: int
    k_out: int
    assignment: np.ndarray | None = None

    @property
    def dim(self):
        return 2 ** (self.k_in + self.k_out)

    @property
    def shape(self):
        return (4**self.k_in, 3**self.k_out, 2**self.k_out)

    def elements(self):
        projs = MEAS_PROJECTORS if self.assignment is None else noisy_projectors(self.assignment)
        preps, bases = setting_indices(self.k_in, self.k_out)
        out = []
        for a in preps:
            rho_t = kron_all([PREP_STATES[i] for i in a]).T
            for b in bases:
                for o in itertools.product(range(2), repeat=self.k_out):
                    m = kron_all([projs[bi][oi] for bi, oi in zip(b, o)])
                    out.append(np.kron(rho_t, m))
        return out

    def matrix(self):
        """Rows ``<<B_j|``, so ``matrix() @ vectorize(T)`` gives model probabilities."""
        return np.array([vectorize(b).conj() for b in self.elements()])


def dual_basis(elements, cond_limit=1e12, allow_singular=False):
    """Dual frame ``|D_j>> = F^{-1} |B_j>>`` with ``F = sum_i |B_i>><<B_i|``.

    Raises :class:`TomographyError` for a tomographically incomplete set
    unless ``allow_singular``, in which case the pseudo-inverse is used and
    the duals reconstruct only the frame range.
    """
    vecs = np.array([vectorize(b) for b in elements]).T
    frame = vecs @ vecs.conj().T
    sv = np.linalg.svd(frame, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if cond >= cond_limit:
        if not allow_singular:
            raise TomographyError(
                f"tomographically incomplete basis: frame rank {rank} of {frame.shape[0]}"
            )
        finv = np.linalg.pinv(frame, rcond=1e-12, hermitian=True)
    else:
        finv = np.linalg.inv(frame)
    d = int(round(np.sqrt(vecs.shape[0])))
    return [(finv @ vecs[:, j]).reshape(d, d, order="F") for j in range(vecs.shape[1])]


@dataclass
class ConditionalDataset:
    """Tomography counts for one fragment.

    ``counts[a, b, o, s]`` holds the number of shots (or, with
    ``shots=None``, the exact probability) of cut outcome ``o`` and
    conditioning outcome ``s`` for preparation setting ``a`` and
    measurement setting ``b``.  ``mask[a, b]`` marks settings that were run.
    """

    k_in: int
    k_out: int
    m: int
    counts: np.ndarray
    shots: int | None
    mask: np.ndarray = None
    fragment_index: int = 0
    conditioning_qubits: list = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        shape = (4**self.k_in, 3**self.k_out, 2**self.k_out, 2**self.m)
        if self.counts.shape != shape:
            raise TomographyError(f"counts shape {self.counts.shape} != expected {shape}")
        if np.any(self.counts < 0):
            raise TomographyError("counts must be non-negative")
        if self.mask is None:
            self.mask = np.ones(shape[:2], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def exact(self):
        return self.shots is None

    @property
    def num_settings(self):
        return self.mask.size

    def frequencies(self):
        if self.exact:
            return self.counts.copy()
        return self.counts / self.shots

    def conditional_weights(self):
        """Empirical probability of each conditioning outcome over run settings."""
        per_s = self.counts[self.mask].sum(axis=(0, 1))
        total = per_s.sum()
        return per_s / total if total > 0 else per_s


def _reorder_outcomes(probs, frag):
    nq = frag.circuit.num_qubits
    t = probs.reshape((2,) * nq).transpose(frag.cut_outputs + frag.conditioning)
    return t.reshape(2**frag.k_out, 2**frag.m)


def collect_fragment_data(frag, noise=NOISELESS, shots=10000, seed=0, max_k=2, trial=0):
    """Simulate every tomography setting of ``frag`` and sample counts.

    ``shots=None`` stores exact outcome probabilities instead of counts.
    """
    if frag.k > max_k:
        raise TomographyError(f"fragment has {frag.k} cut wires, above the limit {max_k}")
    preps, bases = setting_indices(frag.k_in, frag.k_out)
    counts = np.zeros((len(preps), len(bases), 2**frag.k_out, 2**frag.m))
    readout = noise.readout(frag.circuit.num_qubits) if noise.p_meas > 0 else None
    for ia, a in enumerate(preps):
        for ib, b in enumerate(bases):
            circ = fragment_circuit_instance(frag, a, b)
            probs = outcome_distribution(simulate_density_matrix(circ, noise), readout)
            if shots is not None:
                probs = sample_counts(probs, shots, seed, "fragment", frag.index, trial, ia, ib)
            counts[ia, ib] = _reorder_outcomes(probs, frag)
    return ConditionalDataset(
        frag.k_in,
        frag.k_out,
        frag.m,
        counts,
        shots,
        fragment_index=frag.index,
        conditioning_qubits=list(frag.conditioning_qubits),
    )


def subsample(data, f, seed=0, trial=0):
    """Keep ``ceil(f * #settings)`` settings chosen uniformly without replacement."""
    if not 0 < f <= 1:
        raise TomographyError(f"fraction must lie in (0, 1], got {f}")
    n = data.num_settings
    keep = math.ceil(round(f * n, 9))
    rng = make_rng(seed, "subsample", data.fragment_index, trial)
    chosen = np.sort(rng.choice(n, size=keep, replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    mask = mask.reshape(data.mask.shape) & data.mask
    counts = data.counts.copy()
    counts[~mask] = 0
    return replace(data, counts=counts, mask=mask)


def rescale_eigenvalues(evals):
    """Clamp negative eigenvalues, spreading their mass over the rest (trace kept)."""
    lam = np.sort(np.asarray(evals, dtype=float))[::-1]
    out = lam.copy()
    acc = 0.0
    i = len(lam)
    while i > 0:
        if lam[i - 1] + acc / i < 0:
            acc += lam[i - 1]
            out[i - 1] = 0.0
            i -= 1
        else:
            out[:i] = lam[:i] + acc / i
            break
    return out


def rescale_psd(matrix):
    evals, evecs = np.linalg.eigh(0.5 * (matrix + matrix.conj().T))
    if evals.sum() <= 0:
        return np.zeros_like(matrix)
    new = rescale_eigenvalues(evals)[::-1]  # back to ascending order
    return (evecs * new) @ evecs.conj().T


@dataclass
class FitResult:
    tensors: list  # ChoiTensor per conditioning outcome s
    fitter: str
    diagnostics: dict = field(default_factory=dict)
    k_in: int = 0
    k_out: int = 0


def _rows(data):
    """Flattened (included rows, row mask) over (a, b, o)."""
    row_mask = np.repeat(data.mask[:, :, None], 2**data.k_out, axis=2).reshape(-1)
    return row_mask


class LinearInversion(BaseEstimator):
    """Dual-basis linear inversion with positivity rescaling.

    Parameters
    ----------
    noisy_basis : bool
        Use readout-deformed cut-qubit POVMs when building the duals.
    p_meas : float
        Readout error probability of the noisy basis.
    rescale : bool
        Apply the eigenvalue rescaling and trace normalization.  With
        ``False`` the raw dual-basis estimate is returned.
    """

    def __init__(self, noisy_basis=False, p_meas=0.0, rescale=True):
        self.noisy_basis = noisy_basis
        self.p_meas = p_meas
        self.rescale = rescale

    def fit(self, data):
        check_dataset(data)
        assignment = make_assignment(self.p_meas) if self.noisy_basis else None
        basis = TomoBasis(data.k_in, data.k_out, assignment)
        rows = _rows(data)
        elements = [e for e, keep in zip(basis.elements(), rows) if keep]
        partial = not rows.all()
        duals = np.array(dual_basis(elements, allow_singular=partial))
        freqs = data.frequencies().reshape(-1, 2**data.m)[rows]
        raw = np.tensordot(freqs.T, duals, axes=1)
        raw = 0.5 * (raw + np.conj(np.swapaxes(raw, 1, 2)))
        min_eigs = [float(v) for v in np.linalg.eigvalsh(raw)[:, 0]]
        if self.rescale:
            # rescaling keeps each block's trace; the blocks are then jointly
            # normalized so that sum_s Tr[T(s)] = 2**k_in
            fitted = np.array([rescale_psd(t) for t in raw])
            total = np.real(np.einsum("sii->", fitted))
            if total > 0:
                fitted *= 2**data.k_in / total
        else:
            fitted = raw
        tensors = [ChoiTensor(t, data.k_in, data.k_out) for t in fitted]
        self.result_ = FitResult(
            tensors,
            "LIN",
            {"min_eigenvalue_before": min_eigs, "low_confidence": partial},
            data.k_in,
            data.k_out,
        )
        return self

    @property
    def tensors_(self):
        check_fitted(self)
        return self.result_.tensors


def _binomial_weights(freqs, shots):
    if shots is None:
        return np.ones_like(freqs)
    sigma = np.sqrt(np.clip(freqs * (1 - freqs), 0, None) / shots)
    return 1.0 / np.maximum(sigma, 1.0 / shots)


class _JointProblem:
    """Least-squares model ``p[s] = sum_s' C[s, s'] S vec(T[s'])`` with PSD blocks."""

    def __init__(self, smat, mixing, data_p, weights, k_in, k_out, constraint):
        self.s = smat  # (R, D^2)
        self.c = mixing  # (Ns, Ns)
        self.p = data_p  # (Ns, R)
        self.w2 = weights**2  # (Ns, R)
        self.d_in, self.d_out = 2**k_in, 2**k_out
        self.dim = self.d_in * self.d_out
        self.ns = mixing.shape[0]
        self.constraint = constraint
        smax = np.linalg.norm(smat, 2)
        self.lipschitz = (np.linalg.norm(mixing, 2) * smax) ** 2 * self.w2.max()

    def _vec(self, x):
        # (Ns, D, D) -> column-stacked (Ns, D^2)
        return np.swapaxes(x, 1, 2).reshape(self.ns, -1)

    def _mat(self, v):
        return np.swapaxes(v.reshape(self.ns, self.dim, self.dim), 1, 2)

    def residual(self, x):
        pred = np.real(self.c @ (self._vec(x) @ self.s.T))
        return pred - self.p

    def objective(self, x):
        r = self.residual(x)
        return 0.5 * float(np.sum(self.w2 * r * r))

    def gradient(self, x):
        r = self.w2 * self.residual(x)
        g = self._mat((self.c.T @ r) @ self.s.conj())
        return 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))

    def project_psd(self, x):
        evals, evecs = np.linalg.eigh(x)
        evals = np.clip(evals, 0.0, None)
        return (evecs * evals[:, None, :]) @ np.conj(np.swapaxes(evecs, 1, 2))

    def affine_residual(self, x):
        if self.constraint == "tp":
            t = x.reshape(self.ns, self.d_in, self.d_out, self.d_in, self.d_out)
            return np.einsum("siaja->ij", t) - np.eye(self.d_in)
        if self.constraint == "trace":
            return np.atleast_2d(np.real(np.einsum("sii->", x)) - self.d_in)
        return np.zeros((1, 1))

    def project_affine(self, x):
        res = self.affine_residual(x)
        if self.constraint == "tp":
            corr = np.kron(res, np.eye(self.d_out)) / (self.ns * self.d_out)
            return x - corr[None]
        if self.constraint == "trace":
            return x - (res[0, 0] / (self.ns * self.dim)) * np.eye(self.dim)[None]
        return x

    def project(self, z, tol=1e-13, max_iter=2000):
        """Dykstra projection onto the PSD cone intersected with the affine set."""
        if self.constraint is None:
            return self.project_psd(z)
        x = self.project_psd(z)
        if np.abs(self.affine_residual(x)).max() <= tol:
            return x
        x = z
        p = np.zeros_like(z)
        q = np.zeros_like(z)
        for _ in range(max_iter):
            y = self.project_affine(x + p)
            p = x + p - y
            x_new = self.project_psd(y + q)
            q = y + q - x_new
            step = np.abs(x_new - x).max()
            x = x_new
            if step <= tol and np.abs(self.affine_residual(x)).max() <= 10 * tol:
                break
        return x

    def initial_point(self):
        if self.constraint is None:
            return np.zeros((self.ns, self.dim, self.dim), dtype=complex)
        eye = np.eye(self.dim, dtype=complex)
        return np.repeat((self.d_in / (self.ns * self.dim)) * eye[None], self.ns, axis=0)

    def solve(self, tol=1e-9, max_iter=5000, f_floor=1e-12):
        step = 1.0 / self.lipschitz
        x = self.project(self.initial_point())
        f = self.objective(x)
        floor = f_floor * max(float(np.sum(self.w2 * self.p**2)), 1e-300)
        y, x_prev, t = x, x, 1.0
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            x_new = self.project(y - step * self.gradient(y))
            f_new = self.objective(x_new)
            if f_new > f:
                # adaptive restart: drop momentum, take a plain projected step
                t = 1.0
                x_new = self.project(x - step * self.gradient(x))
                f_new = self.objective(x_new)
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            y = x_new + ((t - 1) / t_new) * (x_new - x)
            x_prev, x, t = x, x_new, t_new
            delta = abs(f - f_new)
            f = f_new
            if delta <= tol * max(f, floor):
                converged = True
                break
        x = self.project(x, tol=1e-14, max_iter=20000)
        return x, {
            "iterations": it,
            "converged": converged,
            "objective": self.objective(x),
            "affine_residual": float(np.abs(self.affine_residual(x)).max()),
        }


class ConstrainedLeastSquares(BaseEstimator):
    """Least-squares fit of all conditional tensors over the PSD cone.

    Parameters
    ----------
    constraint : {"tp", "trace", None}
        ``"tp"`` imposes ``sum_s Tr_out[T(s)] = I``; ``"trace"`` only fixes
        ``sum_s Tr[T(s)] = 2**k_in``.
    weights : {None, "binomial"}
        Residual weighting; ``None`` is unweighted.
    tol, max_iter : solver stopping rule on the relative objective change.
    """

    fitter_name = "CLS"

    def __init__(self, constraint="tp", weights=None, tol=1e-9, max_iter=5000):
        self.constraint = constraint
        self.weights = weights
        self.tol = tol
        self.max_iter = max_iter

    def _assignment(self):
        return None

    def fit(self, data):
        check_dataset(data)
        if self.constraint not in ("tp", "trace", None):
            raise TomographyError(f"unknown constraint {self.constraint!r}")
        a = self._assignment()
        basis = TomoBasis(data.k_in, data.k_out, a)
        rows = _rows(data)
        smat = basis.matrix()[rows]
        p = data.frequencies().reshape(-1, 2**data.m)[rows].T
        ns = 2**data.m
        mixing = np.eye(ns) if a is None else kron_all([a] * data.m).real
        w = _binomial_weights(p, data.shots) if self.weights == "binomial" else np.ones_like(p)
        prob = _JointProblem(smat, mixing, p, w, data.k_in, data.k_out, self.constraint)
        x, diag = prob.solve(self.tol, self.max_iter)
        diag["min_eigenvalue"] = float(np.linalg.eigvalsh(x).min())
        tensors = [ChoiTensor(x[s], data.k_in, data.k_out) for s in range(ns)]
        self.result_ = FitResult(tensors, self.fitter_name, diag, data.k_in, data.k_out)
        return self

    @property
    def tensors_(self):
        check_fitted(self)
        return self.result_.tensors


class MEMConstrainedLeastSquares(ConstrainedLeastSquares):
    """Readout-error-mitigated joint fit.

    Cut-qubit POVMs are replaced by their readout-deformed versions and the
    conditioning outcomes are mixed by ``P(s|s')`` from the assignment
    matrix, so every ``T(s')`` is fitted simultaneously.
    """

    fitter_name = "MEMCLS"

    def __init__(self, p_meas=0.0, assignment=None, constraint="tp", weights=None, tol=1e-9, max_iter=5000):
        self.p_meas = p_meas
        self.assignment = assignment
        super().__init__(constraint, weights, tol, max_iter)

    def _assignment(self):
        a = make_assignment(self.p_meas) if self.assignment is None else np.asarray(self.assignment, float)
        if abs(np.linalg.det(a)) < 1e-12:
            raise TomographyError("assignment matrix is singular")
        return a


def fit_lin(data, noisy_basis=False, p_meas=0.0, rescale=True):
    return LinearInversion(noisy_basis, p_meas, rescale).fit(data).result_


def fit_cls(data, constraint="tp", weights=None, **kw):
    return ConstrainedLeastSquares(constraint, weights, **kw).fit(data).result_


def fit_memcls(data, p_meas=0.0, assignment=None, constraint="tp", **kw):
    return MEMConstrainedLeastSquares(p_meas, assignment, constraint, **kw).fit(data).result_


FITTERS = {
    "LIN": LinearInversion,
    "CLS": ConstrainedLeastSquares,
    "MEMCLS": MEMConstrainedLeastSquares,
}


def make_fitter(name, p_meas=0.0):
    if name == "LIN":
        return LinearInversion()
    if name == "CLS":
        return ConstrainedLeastSquares()
    if name == "MEMCLS":
        return MEMConstrainedLeastSquares(p_meas=p_meas)
    raise TomographyError(f"unknown fitter {name!r}")
