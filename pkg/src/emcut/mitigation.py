"""Dominant eigenvalue truncation and related closed-form diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .linalg import PAULIS, PSD_ATOL, ChoiTensor, LinAlgError, devectorize, eig_hermitian


class MitigationError(ValueError):
    pass


@dataclass(frozen=True)
class DevtReport:
    input: ChoiTensor
    truncated: ChoiTensor
    dominant_eigenvalue: float
    discarded_weight: float
    tp_deviation: float
    degenerate: bool


def _phase_normalize(v, atol=1e-12):
    nz = np.flatnonzero(np.abs(v) > atol)
    if nz.size == 0:
        return v
    ph = v[nz[0]] / abs(v[nz[0]])
    return v / ph


def _dominant_vector(evals, evecs, gap=1e-10):
    top = evals[-1]
    cands = [
        _phase_normalize(evecs[:, i]) for i in range(len(evals)) if top - evals[i] < gap
    ]
    if len(cands) == 1:
        return cands[0], False
    key = lambda v: tuple(np.round(np.column_stack([v.real, v.imag]).ravel(), 12))
    return max(cands, key=key), True


def devt(t, trace=None):
    """Replace ``t`` by its dominant eigenvector, keeping the trace.

    The output is ``trace * |v0><v0|`` for the unit top eigenvector ``v0``;
    ``trace`` defaults to ``Tr[t]`` (``2**k_in`` for a trace-preserving
    channel).  A degenerate top eigenvalue is resolved by taking the
    lexicographically largest phase-normalized candidate.
    """
    evals, evecs = eig_hermitian(t.matrix)
    if evals[0] < -PSD_ATOL:
        raise LinAlgError(f"DEVT needs a PSD tensor, min eigenvalue {evals[0]:.3e}")
    v0, degenerate = _dominant_vector(evals, evecs)
    lam0 = float(evals[-1])
    total = float(np.sum(evals))
    target = total if trace is None else float(trace)
    out = ChoiTensor(target * np.outer(v0, v0.conj()), t.k_in, t.k_out)
    k0 = np.sqrt(max(lam0, 0.0)) * devectorize(v0, (t.dim_out, t.dim_in))
    kk = k0.conj().T @ k0
    tp_dev = float(np.linalg.norm(kk - np.trace(kk).real / t.dim_in * np.eye(t.dim_in)))
    return DevtReport(
        input=t,
        truncated=out,
        dominant_eigenvalue=lam0,
        discarded_weight=1.0 - lam0 / total if total > 0 else 0.0,
        tp_deviation=tp_dev,
        degenerate=degenerate,
    )


class DominantEigenvalueTruncation(TransformerMixin, BaseEstimator):
    """Apply :func:`devt` to every conditional tensor of a fit.

    ``transform`` accepts a list of :class:`ChoiTensor` (one per
    conditioning outcome) and returns the truncated list.  Zero tensors,
    which carry no probability, pass through unchanged.
    """

    def fit(self, tensors=None, y=None):
        return self

    def transform(self, tensors):
        self.reports_ = []
        out = []
        for t in tensors:
            if t.trace <= 0:
                out.append(t)
                continue
            rep = devt(t)
            self.reports_.append(rep)
            out.append(rep.truncated)
        return out


def coherent_mismatch(rho, psi):
    """``1 - |<psi_1|psi>|^2`` for the dominant eigenvector ``psi_1`` of ``rho``.

    The squared overlap makes the quantity independent of the global phase
    of either vector.
    """
    psi = np.asarray(psi, dtype=complex)
    evals, evecs = eig_hermitian(np.asarray(rho, dtype=complex))
    return float(1.0 - abs(np.vdot(evecs[:, -1], psi)) ** 2)


def mismatch_bound(p, mu1):
    """Leading-order mismatch bound ``delta**2 / 4`` and ``delta``."""
    delta = (1.0 / (1.0 - p) - 1.0) * mu1
    return delta**2 / 4, delta


def depol_mismatch_bound(n, m, p):
    """Mismatch bound ``delta**2 / 4`` with ``delta = (1 - p)**(-n m) - 1``."""
    if not 0 <= p < 1:
        raise MitigationError(f"layer error probability must lie in [0, 1), got {p}")
    if n < 1 or m < 1:
        raise MitigationError("n and m must be >= 1")
    delta = (1.0 - p) ** (-n * m) - 1.0
    return delta**2 / 4


def _check_amplitudes(alpha, beta):
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1) > 1e-12:
        raise MitigationError(f"|alpha|^2 + |beta|^2 = {norm} != 1")


def biased_pauli_difference(p, b, alpha, beta):
    """``rho - E(rho)`` for the pure state ``alpha|0> + beta|1>`` and the biased Pauli channel."""
    _check_amplitudes(alpha, beta)
    psi = np.array([alpha, beta], dtype=complex)
    rho = np.outer(psi, psi.conj())
    rates = {"I": 1 - (3 + b) * p, "X": p, "Y": p, "Z": p * (1 + b)}
    noisy = sum(w * PAULIS[l] @ rho @ PAULIS[l] for l, w in rates.items())
    return rho - noisy


def biased_dominant_eigenvalue(p, b, alpha, beta):
    """Dominant eigenvalue of ``rho - E(rho)`` in closed form.

    For X/Y rate ``p`` and Z rate ``p (1 + b)`` the difference matrix is
    traceless with eigenvalues ``+-2 p sqrt(1 + (4 b + b**2) |alpha|^2 |beta|^2)``.
    """
    _check_amplitudes(alpha, beta)
    if p < 0 or (3 + b) * p > 1 or p * (1 + b) < 0:
        raise MitigationError(f"invalid Pauli parameters p={p}, b={b}")
    ab = abs(alpha) ** 2 * abs(beta) ** 2
    return 2 * p * np.sqrt(1 + (4 * b + b * b) * ab)


def pta_bias_threshold(b):
    """Smallest X/Y error rate for which a negative additive Z bias ``b`` helps.

    With Z rate ``p + b`` the dominant eigenvalue of ``rho - E(rho)`` is
    ``2 sqrt(p**2 + (4 p b + b**2) |alpha|^2 |beta|^2)``, which drops below
    its unbiased value only when ``p > -b / 4``.
    """
    if b >= 0:
        raise MitigationError("threshold is only defined for negative bias")
    return -b / 4
