"""Experiment grid: noisy cut reconstructions against uncut baselines."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import CutSpec, apply_cut, default_cluster_cuts, gen_cluster_unitary
from .knit import CutGraph, CutReconstruction, mitigate_readout_uncut, trace_distance
from .noise import (
    NoiseSpec,
    clifford_twirl,
    make_channel,
    outcome_distribution,
    pauli_twirl,
    sample_counts,
    simulate_density_matrix,
    simulate_statevector,
)
from .tomography import collect_fragment_data, subsample

log = logging.getLogger(__name__)

CSV_FIELDS = [
    "n",
    "fragments",
    "noise_kind",
    "noise_params",
    "fitter",
    "devt",
    "fraction",
    "trial",
    "trace_distance",
    "pre_norm_mass",
    "status",
]


def build_channel(desc, num_qubits):
    """Channel from a config entry such as ``{"kind": "depolarizing", "p": 0.01}``.

    An optional ``"twirl": "pauli" | "clifford"`` replaces the channel by
    its twirled approximation.
    """
    if desc is None:
        return None
    desc = dict(desc)
    kind = desc.pop("kind")
    twirl = desc.pop("twirl", None)
    desc.setdefault("num_qubits", num_qubits)
    channel = make_channel(kind, **desc)
    if twirl == "pauli":
        channel = pauli_twirl(channel).to_channel()
    elif twirl == "clifford":
        channel = make_channel("depolarizing", p=clifford_twirl(channel), num_qubits=num_qubits)
    elif twirl is not None:
        raise ValueError(f"unknown twirl {twirl!r}")
    return channel


def build_noise(desc):
    desc = desc or {}
    return NoiseSpec(
        two_qubit=build_channel(desc.get("two_qubit"), 2),
        one_qubit=build_channel(desc.get("one_qubit"), 1),
        p_meas=float(desc.get("p_meas", 0.0)),
        multiplicity=int(desc.get("multiplicity", 1)),
        description=desc,
    )


def noise_label(desc):
    desc = desc or {}
    two = desc.get("two_qubit") or {}
    kind = two.get("kind", "none")
    if two.get("twirl"):
        kind = f"{kind}+{two['twirl']}-twirl"
    if desc.get("p_meas") and kind == "none":
        kind = "readout"
    params = {k: v for k, v in two.items() if k not in ("kind", "twirl")}
    if desc.get("one_qubit"):
        params["p1"] = desc["one_qubit"].get("p")
    params["p_meas"] = desc.get("p_meas", 0.0)
    return kind, json.dumps(params, sort_keys=True, separators=(",", ":"))


@dataclass
class ExperimentConfig:
    sizes: list = field(default_factory=lambda: [4])
    layers: int = 3
    circuit_seed: int = 0
    cuts: object = "default"
    noise: list = field(default_factory=lambda: [{}])
    shots: int | None = 10000
    fitters: list = field(default_factory=lambda: ["LIN", "CLS", "MEMCLS"])
    devt: list = field(default_factory=lambda: [False, True])
    fractions: list = field(default_factory=lambda: [1.0])
    trials: int = 1
    seed: int = 0
    uncut: bool = True
    output: str = "results.csv"
    workers: int = 1

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        circ = d.pop("circuit", None)
        if circ is not None:
            n = circ.get("n", 4)
            d["sizes"] = n if isinstance(n, list) else [n]
            d["layers"] = circ.get("layers", 3)
            d["circuit_seed"] = circ.get("seed", 0)
        if isinstance(d.get("noise"), dict):
            d["noise"] = [d["noise"]]
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self):
        for f in self.fitters:
            if f not in ("LIN", "CLS", "MEMCLS"):
                raise ValueError(f"unknown fitter {f!r}")
        for fr in self.fractions:
            if not 0 < fr <= 1:
                raise ValueError(f"fraction {fr} outside (0, 1]")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def jobs(self):
        return [
            (n, ni, trial)
            for n in self.sizes
            for ni in range(len(self.noise))
            for trial in range(self.trials)
        ]


def _cut_spec(cfg, n):
    if cfg.cuts == "default":
        return default_cluster_cuts(n, cfg.layers)
    return CutSpec([tuple(p) for p in cfg.cuts])


def _fmt(x):
    return "" if x is None else repr(float(x))


def run_job(cfg, job, timings=False):
    """All rows for one (size, noise, trial) grid point."""
    n, ni, trial = job
    noise_desc = cfg.noise[ni]
    kind, params = noise_label(noise_desc)
    noise = build_noise(noise_desc)
    circuit = gen_cluster_unitary(n, cfg.layers, cfg.circuit_seed)
    ideal = np.abs(simulate_statevector(circuit)) ** 2
    frags, edges = apply_cut(circuit, _cut_spec(cfg, n))
    graph = CutGraph.from_cut(frags, edges)
    data_seed = (cfg.seed, n, ni, trial)
    base = {"n": n, "fragments": len(frags), "noise_kind": kind, "noise_params": params, "trial": trial}
    rows = []

    def row(fitter, devt, fraction, td, mass, status, t0):
        r = dict(base, fitter=fitter, devt=int(devt), fraction=_fmt(fraction))
        r.update(trace_distance=_fmt(td), pre_norm_mass=_fmt(mass), status=status)
        if timings:
            r["wall_time_ms"] = f"{1000 * (time.perf_counter() - t0):.1f}"
        rows.append(r)

    full = {
        f.index: collect_fragment_data(f, noise, cfg.shots, seed=hash_seed(data_seed), trial=trial)
        for f in frags
    }
    for fraction in cfg.fractions:
        data = (
            full
            if fraction == 1
            else {i: subsample(d, fraction, seed=hash_seed(data_seed), trial=trial) for i, d in full.items()}
        )
        for fitter in cfg.fitters:
            for devt in cfg.devt:
                t0 = time.perf_counter()
                try:
                    rec = CutReconstruction(fitter, devt, noise.p_meas).fit(data, graph)
                    dist = rec.predict()
                    td = trace_distance(dist, ideal)
                    row(fitter, devt, fraction, td, dist.metadata["pre_norm_mass"], "ok", t0)
                except Exception as exc:  # recorded, the sweep continues
                    log.warning("job %s %s devt=%s failed: %s", job, fitter, devt, exc)
                    log.debug(traceback.format_exc())
                    row(fitter, devt, fraction, None, None, f"failed: {type(exc).__name__}", t0)

    if cfg.uncut:
        t0 = time.perf_counter()
        readout = noise.readout(n) if noise.p_meas > 0 else None
        probs = outcome_distribution(simulate_density_matrix(circuit, noise), readout)
        if cfg.shots is None:
            counts = probs
        else:
            counts = sample_counts(probs, cfg.shots, hash_seed(data_seed), "uncut")
        raw = counts / counts.sum()
        row("uncut", False, None, trace_distance(raw, ideal), 1.0, "ok", t0)
        t0 = time.perf_counter()
        mit = mitigate_readout_uncut(counts, noise.readout(n))
        row("uncut-mitigated", False, None, trace_distance(mit, ideal), 1.0, "ok", t0)
    return rows


def hash_seed(parts):
    """Fold a tuple of integers into one 63-bit seed."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def run_experiment(cfg, workers=None, timings=False):
    """Run every grid point; rows are ordered by job index."""
    workers = int(os.environ.get("EMCUT_WORKERS", workers or cfg.workers or 1))
    jobs = cfg.jobs()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, [cfg] * len(jobs), jobs, [timings] * len(jobs)))
    else:
        results = [run_job(cfg, job, timings) for job in jobs]
    return [r for rows in results for r in rows]


def rows_to_csv(rows, timings=False):
    fields = CSV_FIELDS + (["wall_time_ms"] if timings else [])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def summarize(rows):
    """Mean and standard deviation of trace distance per configuration."""
    groups = {}
    for r in rows:
        if r.get("status", "ok") != "ok" or r["trace_distance"] == "":
            continue
        key = (r["n"], r["noise_kind"], r["noise_params"], r["fitter"], r["devt"], r["fraction"])
        groups.setdefault(key, []).append(float(r["trace_distance"]))
    out = []
    for key, vals in sorted(groups.items(), key=lambda kv: tuple(str(k) for k in kv[0])):
        n, kind, params, fitter, devt, fraction = key
        out.append(
            {
                "n": n,
                "noise_kind": kind,
                "noise_params": params,
                "fitter": fitter,
                "devt": devt,
                "fraction": fraction,
                "trials": len(vals),
                "mean_trace_distance": repr(float(np.mean(vals))),
                "std_trace_distance": repr(float(np.std(vals))),
            }
        )
    return out


def mean_trace_distance(rows, fitter, devt=False, fraction=None, **match):
    vals = [
        float(r["trace_distance"])
        for r in rows
        if r["fitter"] == fitter
        and int(r["devt"]) == int(devt)
        and (fraction is None or r["fraction"] == _fmt(fraction))
        and all(r[k] == v for k, v in match.items())
        and r["status"] == "ok"
    ]
    if not vals:
        raise KeyError(f"no rows for {fitter} devt={devt} fraction={fraction} {match}")
    return float(np.mean(vals))
