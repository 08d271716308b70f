"""Seeded experiment runner: run a task on an instance many times and check every output exactly."""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional

import numpy as np

from .errors import DeltaTooLarge, DplinalgError, SolverFailed
from .exact import Inside, convex_membership, span_basis
from .instances import InstanceFile
from .lp import LPInstance, j2_bound, solve_dp_lp
from .noise import NoiseMode, PrivacyLedger, PrivacyParams, RngStream, derive_seed
from .partition import stable_partition
from .perceptron import ThresholdPolicy, count_violations, private_lp_homogeneous
from .pinhull import GridSpec, PinHullPolicy, pinhull
from .spans import (LinearSystem, learn_subspace, lift_points, private_affine_span,
                    private_linear_span, sanitize_linear_system)

POLICIES = ("paper", "test", "zeroed")


def outside_bound(d: int, params: PrivacyParams) -> float:
    """Allowed number of inputs left outside a released span."""
    return 200 * (d * d / params.epsilon) * math.log(max(d, 2) / params.delta)


def ledger_summary(ledger: PrivacyLedger) -> dict:
    eps_b, delta_b = ledger.basic()
    try:
        eps_hat, delta_hat = ledger.headline()
    except DeltaTooLarge:
        eps_hat, delta_hat = None, None
    return {"charges": len(ledger), "eps_basic": eps_b, "delta_basic": delta_b,
            "eps_hat": eps_hat, "delta_hat": delta_hat, "by_mechanism": ledger.counts()}


@dataclass
class TrialRecord:
    trial: int
    seed: int
    ok: bool                    # utility verdict
    invariant_ok: bool          # probability-1 guarantees held
    metrics: Dict[str, Any]
    ledger: Dict[str, Any]
    error: Optional[str] = None
    seconds: float = 0.0


@dataclass
class ExperimentReport:
    task: str
    policy: Dict[str, Any]
    params: Dict[str, float]
    seed: int
    trials: List[TrialRecord] = field(default_factory=list)

    @property
    def success_rate(self) -> Optional[float]:
        if not self.trials:
            return None
        return sum(t.ok for t in self.trials) / len(self.trials)

    @property
    def invariant_failures(self) -> int:
        return sum(not t.invariant_ok for t in self.trials)

    def headline(self) -> dict:
        """Worst per-trial composed (eps_hat, delta_hat)."""
        eh = [t.ledger.get("eps_hat") for t in self.trials if t.ledger.get("eps_hat") is not None]
        dh = [t.ledger.get("delta_hat") for t in self.trials if t.ledger.get("delta_hat") is not None]
        return {"eps_hat": max(eh) if eh else None, "delta_hat": max(dh) if dh else None}

    def quantiles(self, qs=(0.0, 0.25, 0.5, 0.75, 0.9, 1.0)) -> dict:
        out = {}
        keys = sorted({k for t in self.trials for k, v in t.metrics.items()
                       if isinstance(v, (int, float)) and not isinstance(v, bool)})
        for k in keys:
            vals = [t.metrics[k] for t in self.trials if isinstance(t.metrics.get(k), (int, float))]
            if vals:
                out[k] = {str(q): float(np.quantile(vals, q)) for q in qs}
        return out

    def to_dict(self) -> dict:
        return {"task": self.task, "policy": self.policy, "params": self.params, "seed": self.seed,
                "n_trials": len(self.trials), "success_rate": self.success_rate,
                "invariant_failures": self.invariant_failures, "headline": self.headline(),
                "quantiles": self.quantiles(), "trials": [asdict(t) for t in self.trials]}


def noise_for(policy: str, noise: Optional[NoiseMode] = None) -> NoiseMode:
    if noise is not None:
        return noise
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    return NoiseMode.zeroed() if policy == "zeroed" else NoiseMode.paper()


class _Runner:
    """Per-instance state shared by all trials (partitions, policies)."""

    def __init__(self, inst: InstanceFile, policy: str, params: PrivacyParams, noise: NoiseMode):
        self.inst, self.policy, self.params, self.noise = inst, policy, params, noise
        self.F, self.d = inst.field, inst.d
        self._part = None
        self._bases: Dict[Any, Any] = {}
        self.snapshot: Dict[str, Any] = {"name": policy, "noise": str(noise)}
        getattr(self, f"_setup_{inst.task}")()

    # -- set-up per task --
    def _setup_span(self):
        self.vecs = list(self.inst.payload["vectors_q"])
        self.snapshot["outside_bound"] = outside_bound(self.d, self.params)

    def _setup_affine(self):
        self.pts = list(self.inst.payload["points_q"])
        self.snapshot["outside_bound"] = outside_bound(self.d + 1, self.params)

    def _setup_equations(self):
        p = self.inst.payload
        self.system = LinearSystem(list(zip(p["A_q"], [self.F(b) for b in p["b_qs"]])), self.d, self.F)
        self.snapshot["outside_bound"] = outside_bound(self.d + 1, self.params)

    def _setup_learn(self):
        p = self.inst.payload
        self.sample = list(zip(p["points_q"], p["labels"]))
        self.snapshot["max_error"] = 0.02

    def _setup_lp(self):
        p, d = self.inst.payload, self.d
        self.form = p["form"]
        if self.form == "homogeneous":
            self.A = np.array(p["rows"], dtype=float).reshape(-1, d)
            rho = max(float(self.inst.meta.get("margin", 0.0)), 1 / (500 * d))
            maker = ThresholdPolicy.paper_default if self.policy == "paper" else ThresholdPolicy.test_scale
            self.lp_policy = maker(d, self.params, rho0=rho)
            self.snapshot.update(self.lp_policy.snapshot())
        else:
            self.lp = LPInstance.from_ints(p["A"], p["b"], U=int(self.inst.meta["U"]), d=d)
            if self.policy == "paper":
                self.lp_policy = lambda q, pr, lr: ThresholdPolicy.paper_default(q, pr, log_rho0=lr)
            else:
                self.lp_policy = lambda q, pr, lr: ThresholdPolicy.test_scale(q, pr, log_rho0=lr)
            probe = self.lp_policy(d + 1, self.params, -1.0)
            self.snapshot.update({"lp": probe.snapshot(), "U": self.lp.U,
                                  "j2_bound": j2_bound(d, self.params)})

    def _setup_pinhull(self):
        X = int(self.inst.meta["X"])
        maker = PinHullPolicy.paper_default if self.policy == "paper" else PinHullPolicy.test_scale
        self.ph_policy = maker(self.d, X, self.params)
        self.grid = GridSpec(X, self.ph_policy.Y, self.d)
        self.pts = list(self.inst.payload["points_q"])
        pol = self.ph_policy
        lp = pol.lp_policy if isinstance(pol.lp_policy, ThresholdPolicy) else pol.lp_policy(self.d, self.params, -1.0)
        self.snapshot.update({"T": pol.T, "Gamma": pol.Gamma, "gamma": pol.gamma, "log2_Y": math.log2(pol.Y),
                              "max_affine_calls": pol.max_affine_calls, "min_points": pol.min_points,
                              "lp_probe": lp.snapshot()})

    # -- one trial --
    def partition(self, seq, ambient):
        if self._part is None:
            self._part = stable_partition([v for v in seq if any(a != 0 for a in v)], self.F, ambient)
        return self._part

    def basis(self, key, rows, ambient):
        """Span of the (fixed) input rows, computed once per runner."""
        if key not in self._bases:
            self._bases[key] = span_basis(rows, self.F, ambient)
        return self._bases[key]

    def count_outside(self, key, rows, B) -> int:
        """Input rows outside span B; memoized since trials often release the same B."""
        if (key, B) not in self._bases:
            if ("mult", key) not in self._bases:
                self._bases[("mult", key)] = Counter(tuple(v) for v in rows)
            mult = self._bases[("mult", key)]
            self._bases[(key, B)] = sum(c for v, c in mult.items() if not B.contains(v))
        return self._bases[(key, B)]

    def run(self, rng: RngStream, ledger: PrivacyLedger):
        return getattr(self, f"_run_{self.inst.task}")(rng, ledger)

    def _run_span(self, rng, ledger):
        F, d = self.F, self.d
        res = private_linear_span(self.vecs, self.params, rng, F, d, self.partition(self.vecs, d), ledger)
        inp = self.basis("input", self.vecs, d)
        contained = all(inp.contains(v) for v in res.vectors)
        out = res.basis or span_basis([], F, d)
        outside = self.count_outside("input", self.vecs, out)
        m = {"k": res.k, "out_dim": len(res.vectors), "outside": outside, "contained": contained}
        return outside <= self.snapshot["outside_bound"], contained, m

    def _run_affine(self, rng, ledger):
        F, d = self.F, self.d
        lifted = lift_points(self.pts, F)
        gens = private_affine_span(self.pts, self.params, rng, F, d, self.partition(lifted, d + 1), ledger)
        # affine spans compare through their lifts: x in aff(S) iff (x, 1) in span(S x {1})
        inp = self.basis("lifted", lifted, d + 1)
        contained = all(inp.contains(v) for v in lift_points(gens, F))
        outside = self.count_outside("lifted", lifted, span_basis(lift_points(gens, F), F, d + 1))
        m = {"out_size": len(gens), "outside": outside, "contained": contained}
        return outside <= self.snapshot["outside_bound"], contained, m

    def _run_equations(self, rng, ledger):
        F, d = self.F, self.d
        lifted = self.system.lifted()
        out = sanitize_linear_system(self.system, self.params, rng, self.partition(lifted, d + 1), ledger)
        inp = self.basis("lifted", lifted, d + 1)
        outs = span_basis(out.lifted(), F, d + 1)
        # sol(I) is contained in sol(O) when every output row is implied by the input rows
        contained = all(inp.contains(v) for v in out.lifted())
        outside = self.count_outside("lifted", lifted, outs)
        m = {"out_rows": len(out.rows), "outside": outside, "contained": contained}
        wit = self.inst.meta.get("witness_solution_q")
        if wit and not self.inst.meta.get("outliers"):
            m["witness_satisfies_output"] = all(out.satisfied_by(wit[0]))
            contained = contained and m["witness_satisfies_output"]
        return outside <= self.snapshot["outside_bound"], contained, m

    def _run_learn(self, rng, ledger):
        F, d = self.F, self.d
        pos = [x for x, y in self.sample if y == 1]
        lifted = lift_points(pos, F)
        part = self.partition(lifted, d + 1)
        h = learn_subspace(self.sample, self.params, rng, F, d, part, ledger)
        inp = self.basis("lifted", lifted, d + 1)
        contained = all(inp.contains(v) for v in lift_points(h.generators, F))
        labels = Counter((tuple(x), y) for x, y in self.sample)
        err = sum(c for (x, y), c in labels.items() if h(x) != y) / max(len(self.sample), 1)
        m = {"error": err, "out_size": len(h.generators), "contained": contained}
        return err <= self.snapshot["max_error"], contained, m

    def _run_lp(self, rng, ledger):
        if self.form == "homogeneous":
            pol = self.lp_policy
            try:
                o = private_lp_homogeneous(self.A, None, pol, self.params, rng, ledger)
                err = None
            except SolverFailed as e:
                o, err = e.outcome, str(e)
            viol = count_violations(self.A, o.x_star, pol.Delta / 24) if np.linalg.norm(o.x_star) > 0 else len(self.A)
            m = {"violations": viol, "halted": bool(o.halted), "rescales": o.rescales,
                 "improve_iters": o.improve_iters, "perceptron_iters": o.perceptron_iters, "deleted": o.deleted}
            if err:
                m["solver_failed"] = err
            return viol <= 2 * pol.zeta, True, m
        res = solve_dp_lp(self.lp, self.params, self.lp_policy, rng, ledger)
        nonneg = all(v >= 0 for v in res.x_star)
        bound = self.lp_policy(self.d + 1, self.params, -1.0).Gamma
        m = {"violations": res.violated, "nonnegative": nonneg, "iterations": res.telemetry["iterations"],
             "flags": list(res.telemetry["flags"]), "x_star": [str(v) for v in res.x_star]}
        return res.violated <= bound, nonneg, m

    def _run_pinhull(self, rng, ledger):
        res = pinhull(self.pts, self.grid, self.params, self.ph_policy, rng, ledger)
        verdict = isinstance(convex_membership(res.point, self.pts), Inside)
        tel = res.telemetry
        m = {"member": verdict, "point": [str(Fraction(v)) for v in res.point], "rounds": tel["rounds"],
             "affine_calls": tel["affine_calls"], "lp_failures": tel["lp_failures"], "exit": tel.get("exit"),
             "enclosure_misses": tel["enclosure_misses"]}
        return verdict, True, m


def run_experiment(instance: InstanceFile, policy: str, params: PrivacyParams, trials: int, seed: int,
                   noise: NoiseMode = None) -> ExperimentReport:
    """Run ``instance.task`` ``trials`` times with seeds derived from ``seed``.

    Task errors are recorded on the trial (ok and invariant_ok stay as the
    failure implies) and never abort the batch.
    """
    noise = noise_for(policy, noise)
    runner = _Runner(instance, policy, params, noise)
    report = ExperimentReport(instance.task, runner.snapshot,
                              {"epsilon": params.epsilon, "delta": params.delta, "beta": params.beta}, seed)
    for t in range(trials):
        s = derive_seed(seed, t)
        report.trials.append(run_trial(runner, t, s))
    return report


def run_trial(runner: _Runner, t: int, s: int) -> TrialRecord:
    ledger = PrivacyLedger()
    t0 = time.perf_counter()
    try:
        ok, inv, m = runner.run(RngStream(s, runner.noise), ledger)
        err = None
    except DplinalgError as e:
        ok, inv, m, err = False, True, {}, f"{type(e).__name__}: {e}"
    return TrialRecord(t, s, bool(ok), bool(inv), m, ledger_summary(ledger), err,
                       time.perf_counter() - t0)


def rerun_trial(instance: InstanceFile, policy: str, params: PrivacyParams, seed: int,
                trial: int, noise: NoiseMode = None) -> TrialRecord:
    """Reproduce a single trial from its stored seed."""
    runner = _Runner(instance, policy, params, noise_for(policy, noise))
    return run_trial(runner, trial, seed)
