"""Command-line entry point: dplinalg {gen,span,affine,equations,lp,pinhull,learn,bench,verify}."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .errors import DplinalgError
from .exact import Inside, convex_membership, span_basis
from .experiments import POLICIES, rerun_trial, run_experiment
from .instances import TASKS, InstanceFile, gen_instance
from .noise import NoiseMode, PrivacyParams
from .spans import lift_points

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _shared(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--policy", choices=POLICIES, default="test")
    p.add_argument("--noise", default=None, help="override noise: paper, zeroed or scaled(f)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", default=None, help="output file (default stdout)")


def _knob(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError("knobs look like key=value")
    k, v = text.split("=", 1)
    for conv in (int, float):
        try:
            return k, conv(v)
        except ValueError:
            pass
    return k, v


def build_parser():
    ap = _Parser(prog="dplinalg", description="Differentially private linear algebra toolkit.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("task", choices=TASKS)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--knob", type=_knob, action="append", default=[], metavar="KEY=VALUE")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task on an instance file, JSON report")
        p.add_argument("instance")
        _shared(p)
    b = sub.add_parser("bench", help="run an instance file, CSV with one row per trial")
    b.add_argument("instance")
    _shared(b)
    v = sub.add_parser("verify", help="check an instance certificate and optionally replay a report")
    v.add_argument("instance")
    v.add_argument("--report", default=None, help="JSON report to replay from its stored seeds")
    v.add_argument("--out", default=None)
    return ap


def _emit(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _params(a) -> PrivacyParams:
    return PrivacyParams(a.eps, a.delta, a.beta)


def _run(a, task=None):
    inst = InstanceFile.load(a.instance)
    if task and inst.task != task:
        raise ValueError(f"instance holds task {inst.task!r}, not {task!r}")
    if a.trials < 0:
        raise ValueError("--trials must be nonnegative")
    noise = NoiseMode.parse(a.noise) if a.noise else None
    return run_experiment(inst, a.policy, _params(a), a.trials, a.seed, noise)


BENCH_FIELDS = ["trial", "seed", "ok", "invariant_ok", "seconds", "error", "eps_hat", "delta_hat", "charges"]


def bench_csv(report) -> str:
    mkeys = sorted({k for t in report.trials for k, v in t.metrics.items() if not isinstance(v, (list, dict))})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_FIELDS + mkeys)
    for t in report.trials:
        w.writerow([t.trial, t.seed, int(t.ok), int(t.invariant_ok), f"{t.seconds:.6f}", t.error or "",
                    t.ledger["eps_hat"], t.ledger["delta_hat"], t.ledger["charges"]]
                   + [t.metrics.get(k, "") for k in mkeys])
    return buf.getvalue()


def check_certificate(inst: InstanceFile) -> list:
    """Problems with an instance's planted certificate (empty list when sound)."""
    F, d, p, m = inst.field, inst.d, inst.payload, inst.meta
    bad = []

    def dims(rows, k, what):
        if any(len(r) != k for r in rows):
            bad.append(f"{what}: inconsistent dimension")
    if inst.task == "span":
        dims(p["vectors_q"], d, "vectors")
        W = span_basis(m["witness_basis_q"], F, d)
        off = sum(1 for v in p["vectors_q"] if not W.contains(v))
        if off != m.get("outliers", 0):
            bad.append(f"{off} vectors off the planted subspace, expected {m.get('outliers', 0)}")
    elif inst.task in ("affine", "learn"):
        dims(p["points_q"], d, "points")
        W = span_basis(lift_points(m["witness_generators_q"], F), F, d + 1)
        on = [W.contains(tuple(x) + (F.one,)) for x in p["points_q"]]
        if inst.task == "affine":
            if on.count(False) != m.get("outliers", 0):
                bad.append("outlier count does not match the planted affine subspace")
        elif any(o != bool(y) for o, y in zip(on, p["labels"])):
            bad.append("labels are not realized by the planted affine subspace")
    elif inst.task == "equations":
        dims(p["A_q"], d, "rows")
        x0 = m["witness_solution_q"][0]
        sat = sum(1 for a, b in zip(p["A_q"], p["b_qs"])
                  if F.norm(sum((ai * xi for ai, xi in zip(a, x0)), F.zero) - F(b)) == 0)
        if len(p["A_q"]) - sat != m.get("outliers", 0):
            bad.append("witness solution misses a different number of rows than recorded")
    elif inst.task == "lp" and p["form"] == "homogeneous":
        A = np.array(p["rows"], dtype=float).reshape(-1, d)
        z = np.array(m["witness_z"])
        if len(A) and float((A @ z).min()) < m["margin"] - 1e-12:
            bad.append("a row falls below the planted margin")
    elif inst.task == "lp":
        U = m["U"]
        if any(abs(v) > U for r in p["A"] for v in r) or any(abs(v) > U for v in p["b"]):
            bad.append("entries exceed U")
        x0 = m["witness_x_q"][0]
        if any(v < 0 for v in x0) or any(sum(ai * xi for ai, xi in zip(a, x0)) > bi
                                          for a, bi in zip(p["A"], p["b"])):
            bad.append("witness point is infeasible")
    elif inst.task == "pinhull":
        X = m["X"]
        pts = p["points_q"]
        if any(abs(v) > 1 or (v * X).denominator != 1 for q in pts for v in q):
            bad.append("a point is off the grid")
        if not isinstance(convex_membership(m["witness_member_q"][0], pts), Inside):
            bad.append("witness member is outside the hull")
    return bad


def _verify(a) -> int:
    inst = InstanceFile.load(a.instance)
    lines, code = [], EXIT_OK
    bad = check_certificate(inst)
    lines.append(f"certificate: {'ok' if not bad else 'FAILED'}")
    lines += [f"  {b}" for b in bad]
    if bad:
        code = EXIT_VIOLATION
    if a.report:
        with open(a.report) as fh:
            rep = json.load(fh)
        pr = rep["params"]
        params = PrivacyParams(pr["epsilon"], pr["delta"], pr["beta"])
        noise = NoiseMode.parse(rep["policy"]["noise"])
        mism = 0
        for t in rep["trials"]:
            again = rerun_trial(inst, rep["policy"]["name"], params, t["seed"], t["trial"], noise)
            if json.loads(json.dumps(again.metrics)) != t["metrics"] or again.ok != t["ok"]:
                mism += 1
                lines.append(f"  trial {t['trial']} (seed {t['seed']}) did not reproduce")
        lines.append(f"replay: {len(rep['trials']) - mism}/{len(rep['trials'])} trials reproduced")
        if mism:
            code = EXIT_VIOLATION
    _emit("\n".join(lines) + "\n", a.out)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if a.cmd == "gen":
            inst = gen_instance(a.task, a.d, a.n, a.seed, **dict(a.knob))
            _emit(inst.to_text(), a.out)
            return EXIT_OK
        if a.cmd == "verify":
            return _verify(a)
        rep = _run(a, None if a.cmd == "bench" else a.cmd)
    except (DplinalgError, ValueError, OSError, KeyError) as e:
        print(f"dplinalg: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if a.cmd == "bench":
        _emit(bench_csv(rep), a.out)
    else:
        _emit(json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n", a.out)
    return EXIT_VIOLATION if rep.invariant_failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
