"""Command-line entry point: ``emcut <subcommand> ...``.

``EMCUT_OUTPUT_DIR`` sets the directory relative output paths are written
to and ``EMCUT_WORKERS`` the sweep worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .circuit import CutSpec, apply_cut, default_cluster_cuts, gen_cluster_unitary
from .experiment import ExperimentConfig, build_noise, rows_to_csv, run_experiment, summarize
from .knit import CutGraph, CutReconstruction, trace_distance
from .mitigation import DominantEigenvalueTruncation
from .noise import simulate_statevector
from .tomography import collect_fragment_data, make_fitter

log = logging.getLogger("emcut")


def _out(path):
    p = Path(path)
    base = os.environ.get("EMCUT_OUTPUT_DIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _parse_cuts(text, n, layers):
    if text == "default":
        return default_cluster_cuts(n, layers)
    pts = []
    for item in text.split(","):
        q, pos = item.split(":")
        pts.append((int(q), int(pos)))
    return CutSpec(pts)


def _load_noise(arg):
    if arg is None:
        return build_noise({})
    if os.path.exists(arg):
        return build_noise(io.load_json(arg))
    return build_noise(json.loads(arg))


def _load_cut(args):
    circuit = io.circuit_from_dict(io.load_json(args.circuit))
    cuts = io.cuts_from_dict(io.load_json(args.cuts))
    return circuit, apply_cut(circuit, cuts)


def cmd_generate(args):
    circuit = gen_cluster_unitary(args.n, args.layers, args.seed)
    cuts = _parse_cuts(args.cuts, args.n, args.layers)
    apply_cut(circuit, cuts)  # reject cuts that do not split the circuit
    out = _out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.dump_json(io.circuit_to_dict(circuit), out / "circuit.json")
    io.dump_json(io.cuts_to_dict(cuts), out / "cuts.json")
    print(out)


def cmd_collect(args):
    _, (frags, _) = _load_cut(args)
    noise = _load_noise(args.noise)
    out = _out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shots = None if args.exact else args.shots
    for f in frags:
        data = collect_fragment_data(f, noise, shots, seed=args.seed)
        path = out / f"fragment_{f.index}.dat"
        io.write_dataset(data, path)
        print(path)


def cmd_fit(args):
    data = io.read_dataset(args.dataset)
    est = make_fitter(args.fitter, args.p_meas).fit(data)
    tensors = est.tensors_
    if args.devt:
        tensors = DominantEigenvalueTruncation().fit_transform(tensors)
    out = _out(args.out)
    io.dump_json(io.tensors_to_dict(tensors), out)
    print(json.dumps(est.result_.diagnostics, default=str, sort_keys=True))


def cmd_reconstruct(args):
    circuit, (frags, edges) = _load_cut(args)
    graph = CutGraph.from_cut(frags, edges)
    datasets = {f.index: io.read_dataset(Path(args.data) / f"fragment_{f.index}.dat") for f in frags}
    rec = CutReconstruction(args.fitter, args.devt, args.p_meas).fit(datasets, graph)
    dist = rec.predict()
    ideal = np.abs(simulate_statevector(circuit)) ** 2
    if args.out:
        with open(_out(args.out), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["outcome", "probability"])
            n = circuit.num_qubits
            for s, p in enumerate(dist.probabilities):
                w.writerow([format(s, f"0{n}b"), repr(float(p))])
    print(f"trace_distance {trace_distance(dist, ideal):.6g}")
    print(f"pre_norm_mass {dist.metadata['pre_norm_mass']:.6g}")


def cmd_sweep(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    rows = run_experiment(cfg, workers=args.workers, timings=args.timings)
    text = rows_to_csv(rows, timings=args.timings)
    path = _out(args.output or cfg.output)
    path.write_text(text)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} rows ({failed} failed) -> {path}")


def cmd_report(args):
    rows = []
    for path in args.csv:
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    summary = summarize(rows)
    if not summary:
        print("no successful rows", file=sys.stderr)
        return 1
    w = csv.DictWriter(sys.stdout, fieldnames=list(summary[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(summary)


def build_parser():
    p = argparse.ArgumentParser(prog="emcut", description="Noisy tomographic circuit cutting.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a cluster circuit and its cut spec")
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--layers", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--cuts", default="default", help='"default" or "q:pos,q:pos"')
    g.add_argument("--out", default="circuit")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("collect", help="simulate fragment tomography datasets")
    c.add_argument("--circuit", required=True)
    c.add_argument("--cuts", required=True)
    c.add_argument("--noise", help="noise JSON file or inline JSON")
    c.add_argument("--shots", type=int, default=10000)
    c.add_argument("--exact", action="store_true", help="store exact probabilities")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="data")
    c.set_defaults(func=cmd_collect)

    f = sub.add_parser("fit", help="fit one fragment dataset")
    f.add_argument("dataset")
    f.add_argument("--fitter", default="CLS", choices=["LIN", "CLS", "MEMCLS"])
    f.add_argument("--p-meas", type=float, default=0.0)
    f.add_argument("--devt", action="store_true")
    f.add_argument("--out", default="tensors.json")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("reconstruct", help="fit all fragments and knit the distribution")
    r.add_argument("--circuit", required=True)
    r.add_argument("--cuts", required=True)
    r.add_argument("--data", required=True, help="directory of fragment_<i>.dat files")
    r.add_argument("--fitter", default="CLS", choices=["LIN", "CLS", "MEMCLS"])
    r.add_argument("--p-meas", type=float, default=0.0)
    r.add_argument("--devt", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("sweep", help="run an experiment grid from a JSON config")
    s.add_argument("config")
    s.add_argument("--output")
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--timings", action="store_true", help="add a wall_time_ms column")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="summarize sweep CSVs")
    rp.add_argument("csv", nargs="+")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
