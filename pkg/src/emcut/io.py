"""Serialization of circuits, cut specs and tomography datasets.

Circuits and cuts are stored as JSON documents::

    {"num_qubits": 4,
     "gates": [{"qubits": [0, 1], "layer": 0,
                "unitary": [[[re, im], ...], ...]}, ...]}

    {"cuts": [[2, 1], [2, 2]]}     # (qubit, position) pairs

A :class:`ConditionalDataset` is written as plain text.  The first line
is ``# emcut-dataset 1``, the second a JSON header, and every further
line is one record::

    <prep tuple> <basis tuple> <cut outcome> <conditioning outcome> <count>

Tuples are comma separated (``0,3``; ``-`` for an empty tuple).  Excluded
settings appear as ``skip <prep tuple> <basis tuple>`` lines; zero counts
are omitted.
"""

from __future__ import annotations

import json

import numpy as np

from .circuit import Circuit, CutPoint, CutSpec, Gate, setting_indices
from .tomography import ConditionalDataset, TomographyError

DATASET_MAGIC = "# emcut-dataset 1"


def _matrix_to_json(u):
    u = np.asarray(u, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in u]


def _matrix_from_json(rows):
    arr = np.asarray(rows, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def circuit_to_dict(circuit):
    return {
        "num_qubits": circuit.num_qubits,
        "gates": [
            {"qubits": list(g.qubits), "layer": g.layer, "unitary": _matrix_to_json(g.unitary)}
            for g in circuit.ordered_gates()
        ],
    }


def circuit_from_dict(d):
    gates = [Gate(_matrix_from_json(g["unitary"]), tuple(g["qubits"]), int(g["layer"])) for g in d["gates"]]
    return Circuit(int(d["num_qubits"]), gates)


def cuts_to_dict(cuts):
    return {"cuts": [[p.qubit, p.position] for p in cuts.points]}


def cuts_from_dict(d):
    return CutSpec([CutPoint(int(q), int(pos)) for q, pos in d["cuts"]])


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _tup(t):
    return ",".join(map(str, t)) if t else "-"


def _untup(s):
    return () if s == "-" else tuple(int(x) for x in s.split(","))


def _fmt_count(x, exact):
    return repr(float(x)) if exact else str(int(round(x)))


def dataset_lines(data):
    """Yield the text lines of ``data`` (without newlines)."""
    preps, bases = setting_indices(data.k_in, data.k_out)
    header = {
        "k_in": data.k_in,
        "k_out": data.k_out,
        "m": data.m,
        "shots": data.shots,
        "fragment_index": data.fragment_index,
        "conditioning_qubits": list(data.conditioning_qubits),
    }
    yield DATASET_MAGIC
    yield json.dumps(header, sort_keys=True)
    for ia, a in enumerate(preps):
        for ib, b in enumerate(bases):
            if not data.mask[ia, ib]:
                yield f"skip {_tup(a)} {_tup(b)}"
                continue
            block = data.counts[ia, ib]
            for o, s in zip(*np.nonzero(block)):
                yield f"{_tup(a)} {_tup(b)} {o} {s} {_fmt_count(block[o, s], data.exact)}"


def write_dataset(data, path):
    with open(path, "w") as fh:
        for line in dataset_lines(data):
            fh.write(line + "\n")


def parse_dataset(lines):
    lines = iter(lines)
    first = next(lines, "").strip()
    if first != DATASET_MAGIC:
        raise TomographyError(f"not a dataset file (first line {first!r})")
    header = json.loads(next(lines))
    k_in, k_out, m = header["k_in"], header["k_out"], header["m"]
    preps, bases = setting_indices(k_in, k_out)
    pidx = {p: i for i, p in enumerate(preps)}
    bidx = {b: i for i, b in enumerate(bases)}
    counts = np.zeros((len(preps), len(bases), 2**k_out, 2**m))
    mask = np.ones((len(preps), len(bases)), dtype=bool)
    for lineno, line in enumerate(lines, start=3):
        parts = line.split()
        if not parts:
            continue
        try:
            if parts[0] == "skip":
                mask[pidx[_untup(parts[1])], bidx[_untup(parts[2])]] = False
                continue
            a, b, o, s, c = parts
            counts[pidx[_untup(a)], bidx[_untup(b)], int(o), int(s)] = float(c)
        except (KeyError, ValueError, IndexError) as exc:
            raise TomographyError(f"line {lineno}: malformed record {line.strip()!r}") from exc
    return ConditionalDataset(
        k_in,
        k_out,
        m,
        counts,
        header["shots"],
        mask=mask,
        fragment_index=header.get("fragment_index", 0),
        conditioning_qubits=header.get("conditioning_qubits", []),
    )


def read_dataset(path):
    with open(path) as fh:
        return parse_dataset(fh)


def tensors_to_dict(tensors):
    """Conditional tensors of one fragment as JSON-ready data."""
    return {
        "k_in": tensors[0].k_in,
        "k_out": tensors[0].k_out,
        "tensors": [_matrix_to_json(t.matrix) for t in tensors],
    }


def tensors_from_dict(d):
    from .linalg import ChoiTensor

    return [ChoiTensor(_matrix_from_json(t), d["k_in"], d["k_out"]) for t in d["tensors"]]
