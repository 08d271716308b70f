"""The fifteen acceptance criteria, each at its stated scale and tolerance.

Every test records one PASS/FAIL line (printed live with -s and collected in
the terminal summary) before asserting.
"""
import itertools
import math
import time
from fractions import Fraction as Q

import mpmath
import numpy as np
import pytest

from dplinalg.exact import QQ, Field, Inside, canonical_basis, convex_membership, feasible_point
from dplinalg.experiments import run_experiment
from dplinalg.instances import gen_instance
from dplinalg.lp import perturbation_eta
from dplinalg.noise import NoiseMode, PrivacyLedger, PrivacyParams, RngStream, compose_advanced, sample_laplace
from dplinalg.partition import basis_count, stable_partition
from dplinalg.perceptron import (ThresholdPolicy, count_violations, perceptron_phase,
                                 private_lp_homogeneous, rescale_rows)
from dplinalg.pinhull import (Ellipsoid, GridSpec, PinHullPolicy, aff2lin, center_shift_tolerance,
                              half_ellipsoid_update, inflate_and_round, pinhull)
from dplinalg.spans import (LinearSystem, lift_points, private_affine_span, private_linear_span,
                            sanitize_linear_system)

from oracles import rank_gfp, rank_q

GF2 = Field.prime(2)


# -- 1, 2: exhaustive stability over GF(2)^3 -----------------------------------------

def _gf2_family():
    vecs = [v for v in itertools.product(range(2), repeat=3) if any(v)]
    for n in range(6):
        yield from itertools.product(vecs, repeat=n)


def _counts(seq, memo):
    if seq not in memo:
        memo[seq] = basis_count(stable_partition(list(seq), GF2, 3)).counts
    return memo[seq]


def test_criterion_01_sensitivity(acceptance):
    memo = {}
    worst_inf = worst_l1 = 0
    cases = 0
    for seq in _gf2_family():
        c = _counts(seq, memo)
        for j in range(len(seq)):
            c2 = _counts(seq[:j] + seq[j + 1:], memo)
            diff = [abs(c.get(k, 0) - c2.get(k, 0)) for k in set(c) | set(c2)]
            worst_inf = max(worst_inf, max(diff, default=0))
            worst_l1 = max(worst_l1, sum(diff))
            cases += 1
    ok = worst_inf <= 1 and worst_l1 <= 2
    acceptance(1, ok, f"{cases} (sequence, deletion) pairs; max l_inf {worst_inf}, max l1 {worst_l1}")
    assert ok


def test_criterion_02_chain(acceptance):
    worst = 0
    bad = 0
    seqs = 0
    for seq in _gf2_family():
        seqs += 1
        spans = set(stable_partition(list(seq), GF2, 3).spans)
        chain = sorted(spans, key=lambda B: B.dim)
        for a, b in zip(chain, chain[1:]):
            if a.dim == b.dim or not all(b.contains(r) for r in a.rows):
                bad += 1
                break
        worst = max(worst, len(spans))
    ok = bad == 0 and worst <= 3
    acceptance(2, ok, f"{seqs} sequences; {bad} non-chains; longest chain {worst}")
    assert ok


# -- 3: canonical basis uniqueness ----------------------------------------------------

def test_criterion_03_canonical_uniqueness(acceptance):
    rng = np.random.default_rng(3)
    mismatches = 0
    trials = 0
    for F in (QQ, Field.prime(5)):
        def oracle_rank(rows, d):
            if F.p is None:
                return rank_q(rows)
            return rank_gfp(rows, F.p, d)

        def random_rows(k, d, lo):
            while True:
                rows = [F.vec(rng.integers(-lo, lo + 1, size=d).tolist()) for _ in range(k)]
                if oracle_rank(rows, d) == k:
                    return rows
        for _ in range(250):
            d = int(rng.integers(1, 7))
            k = int(rng.integers(1, d + 1))
            B = random_rows(k, d, 4)
            outs = []
            for _ in range(2):
                M = random_rows(k, k, 3)
                rows = [tuple(F.norm(sum((m[i] * B[i][j] for i in range(k)), F.zero)) for j in range(d))
                        for m in M]
                outs.append(canonical_basis(rows, F, d))
            a, b = outs
            mismatches += a != b or a.rows != b.rows or a.pivots != b.pivots
            trials += 1
    ok = mismatches == 0
    acceptance(3, ok, f"{trials} subspaces over Q and GF(5), d <= 6; {mismatches} mismatches")
    assert ok


# -- 4: containment with probability one ----------------------------------------------

def _contained(inp, out):
    """span(out) is inside span(inp), checked with an independent rank oracle."""
    inp = sorted(set(inp))
    return not out or rank_q(inp + list(out)) == rank_q(inp)


def test_criterion_04_containment(acceptance):
    fails = {"span": 0, "affine": 0, "equations": 0}
    nonempty = {"span": 0, "affine": 0, "equations": 0}
    for s in range(200):
        r = np.random.default_rng(s)
        d = int(r.integers(1, 4))
        n = int(r.integers(150, 600))
        eps = float(r.choice([0.5, 1.0, 4.0]))
        params = PrivacyParams(eps, 0.1)
        out_n = int(r.integers(0, 20))
        rng = RngStream(10_000 + s)
        # Algorithm 2
        k = int(r.integers(1, d + 1))
        inst = gen_instance("span", d, n, s, dim=k, outliers=out_n if k < d else 0)
        V = inst.payload["vectors_q"]
        res = private_linear_span(V, params, rng, QQ, d)
        nonempty["span"] += bool(res.vectors)
        fails["span"] += not _contained(V, res.vectors)
        # Algorithm 3: compare lifted spans
        inst = gen_instance("affine", d, n, s, dim=int(r.integers(0, d)), outliers=out_n)
        pts = inst.payload["points_q"]
        gens = private_affine_span(pts, params, rng, QQ, d)
        nonempty["affine"] += bool(gens)
        fails["affine"] += not _contained(lift_points(pts, QQ), lift_points(gens, QQ))
        # Algorithm 4: every output equation is implied by the inputs, so sol(I) is inside sol(O)
        inst = gen_instance("equations", d, n, s, rank=int(r.integers(1, d + 1)), outliers=out_n % 2 * out_n)
        p = inst.payload
        sys_ = LinearSystem(list(zip(p["A_q"], p["b_qs"])), d, QQ)
        out = sanitize_linear_system(sys_, params, rng)
        nonempty["equations"] += bool(out.rows)
        ok = _contained(sys_.lifted(), out.lifted())
        if not inst.meta["outliers"]:
            ok = ok and all(out.satisfied_by(inst.meta["witness_solution_q"][0]))
        fails["equations"] += not ok
    ok = sum(fails.values()) == 0
    acceptance(4, ok, f"200 runs per algorithm; failures {fails}; nonempty outputs {nonempty}")
    assert ok


# -- 5: utility at desk scale ---------------------------------------------------------

def test_criterion_05_utility(acceptance):
    d, params = 3, PrivacyParams(1.0, 0.1)
    bound = 200 * (d * d / params.epsilon) * math.log(d / params.delta)
    insts = {"span": gen_instance("span", 3, 10**4, 51, dim=2, outliers=100),
             "affine": gen_instance("affine", 3, 10**4, 52, dim=1, outliers=100),
             "equations": gen_instance("equations", 3, 10**4, 53, rank=2, outliers=100)}
    t0 = time.time()
    rates = {}
    for task, inst in insts.items():
        rep = run_experiment(inst, "paper", params, 200, 500)
        rates[task] = sum(t.metrics.get("outside", math.inf) <= bound for t in rep.trials) / 200
    secs = time.time() - t0
    ok = all(v >= 0.95 for v in rates.values()) and secs < 300
    acceptance(5, ok, f"bound {bound:.0f}; success rates {rates}; {secs:.0f}s")
    assert ok


# -- 6: perceptron convergence with zeroed noise --------------------------------------

def _margin_rows(n, d, margin, rng):
    z = rng.normal(size=d)
    z /= np.linalg.norm(z)
    out = np.zeros((0, d))
    while len(out) < n:
        a = rng.normal(size=(4 * n, d))
        a /= np.linalg.norm(a, axis=1)[:, None]
        out = np.concatenate([out, a[a @ z >= margin]])
    return out[:n], z


def test_criterion_06_perceptron_cap(acceptance):
    details, ok = [], True
    params = PrivacyParams(10.0, 0.5)       # NoisyAVG's count offset (2/eps) ln(2/delta) is below 1
    for d in (2, 5, 10):
        for seed in range(3):
            rng = np.random.default_rng(600 + 10 * d + seed)
            A, z = _margin_rows(20 * d, d, 1 / (500 * d), rng)
            assert (A @ z >= 1 / (500 * d)).all()
            cap = 9_000_000 * d * d
            pol = ThresholdPolicy.test_scale(d, params, zeta=0.0, perceptron_cap=cap)
            x, halted, it = perceptron_phase(A, np.ones(len(A), dtype=np.int64), pol, params,
                                             RngStream(seed, NoiseMode.zeroed()), PrivacyLedger())
            viol = count_violations(A, x, pol.Delta / 24) if np.linalg.norm(x) > 0 else len(A)
            ok = ok and halted and it <= cap and viol == 0
            details.append(f"d={d}:{it}")
    acceptance(6, ok, "iterations " + " ".join(details))
    assert ok


# -- 7: private perceptron utility ----------------------------------------------------

def test_criterion_07_private_perceptron(acceptance):
    params = PrivacyParams(1.0, 1e-6, 0.1)
    A, _ = _margin_rows(10**5, 2, 0.1, np.random.default_rng(7))
    pol = ThresholdPolicy.test_scale(2, params, rho0=0.1)
    good = 0
    for s in range(50):
        try:
            out = private_lp_homogeneous(A, 0.1, pol, params, RngStream(700 + s))
            x = out.x_star
        except Exception as e:          # SolverFailed counts as a miss
            x = getattr(getattr(e, "outcome", None), "x_star", None)
            if x is None:
                continue
        good += np.linalg.norm(x) > 0 and count_violations(A, x, pol.Delta / 24) <= 2 * pol.zeta
    ok = good / 50 >= 0.9
    acceptance(7, ok, f"{good}/50 runs within 2*zeta = {2 * pol.zeta:.0f} violations")
    assert ok


# -- 8: rescaling identities ----------------------------------------------------------

def test_criterion_08_rescaling(acceptance):
    rng = np.random.default_rng(8)
    worst_norm, worst_ip = 0.0, 0.0
    for _ in range(10**4):
        d = int(rng.integers(1, 11))
        a, v = rng.normal(size=d), rng.normal(size=d)
        B = np.eye(d)
        ar = a.copy()
        for _ in range(int(rng.integers(1, 6))):
            y = rng.normal(size=d)
            y /= np.linalg.norm(y)
            new = rescale_rows(ar, y)[0]
            worst_norm = max(worst_norm, np.linalg.norm(ar) - np.linalg.norm(new))
            ar = new
            B = B @ (np.eye(d) + np.outer(y, y))
        worst_ip = max(worst_ip, abs(a @ (B @ v) - ar @ v))
    ok = worst_norm <= 0 and worst_ip <= 1e-9
    acceptance(8, ok, f"max norm decrease {worst_norm:.2e}; max inner-product gap {worst_ip:.2e}")
    assert ok


# -- 9: perturbation equivalence, exhaustive ------------------------------------------

def _eta_den(d, U):
    return perturbation_eta(d, U).denominator


def _vertex_feasible_2d(a, c):
    """Exact feasibility of {a_k . y <= c_k} in R^2 (pointed), vectorized over instances.

    a: (n, L, 2) int64, c: (n, L) int64.  Checks every pairwise vertex.
    """
    n, L, _ = a.shape
    feas = np.zeros(n, dtype=bool)
    for i, j in itertools.combinations(range(L), 2):
        det = a[:, i, 0] * a[:, j, 1] - a[:, i, 1] * a[:, j, 0]
        nx = c[:, i] * a[:, j, 1] - c[:, j] * a[:, i, 1]
        ny = a[:, i, 0] * c[:, j] - a[:, j, 0] * c[:, i]
        good = det != 0
        sgn = np.sign(det)
        for k in range(L):
            lhs = (a[:, k, 0] * nx + a[:, k, 1] * ny) * sgn
            good &= lhs <= c[:, k] * det * sgn
        feas |= good
    return feas


def _vertex_feasible_1d(a, c):
    """Exact feasibility of {a_k y <= c_k, y >= 0} over R, vectorized: try y = 0 and y = c_i / a_i."""
    n, L = a.shape
    feas = (c >= 0).all(axis=1)
    for i in range(L):
        ai, ci = a[:, i], c[:, i]
        s = np.sign(ai)
        good = (ai != 0) & (ci * s >= 0)
        for k in range(L):
            good &= a[:, k] * ci * s <= c[:, k] * ai * s
        feas |= good
    return feas


def _exact_pair(rows, d):
    """(feasible P, feasible P^eta) by exact rational simplex."""
    U = max([abs(v) for r in rows for v in r] + [1])
    eta = perturbation_eta(d, U)
    A = [tuple(Q(v) for v in r[:d]) for r in rows]
    b = [Q(r[d]) for r in rows]
    return (feasible_point(A, b, d) is not None,
            feasible_point(A, [x + eta for x in b], d) is not None)


def test_criterion_09_perturbation_equivalence(acceptance):
    t0 = time.time()
    counter = 0
    checked = 0
    # (a) exact rational simplex on the subfamilies it can afford
    exact = {}
    rows1 = list(itertools.product(range(-3, 4), repeat=2))
    rows2 = list(itertools.product(range(-3, 4), repeat=3))
    fams = [(1, rows1, 2), (2, [r for r in rows2 if max(map(abs, r)) <= 1], 3), (2, rows2, 2)]
    for d, rows, mmax in fams:
        for m in range(mmax + 1):
            for combo in itertools.combinations_with_replacement(range(len(rows)), m):
                inst = tuple(sorted(rows[i] for i in combo))
                if (d, inst) in exact:
                    continue
                fp, fe = _exact_pair(inst, d)
                exact[(d, inst)] = (fp, fe)
                counter += fp != fe
                checked += 1
    n_exact = checked
    # (b) exact integer vertex enumeration: d = 1 with m <= 4 and d = 2 with m <= 3
    mism = xchk = 0
    R1 = np.array(rows1, dtype=np.int64)
    combos = np.array(list(itertools.combinations_with_replacement(range(len(rows1)), 4)), dtype=np.int64)
    sub = R1[combos]                                     # (n, 4, 2)
    U = np.maximum(np.abs(sub).reshape(len(sub), -1).max(axis=1), 1)
    D = np.array([0] + [_eta_den(1, u) for u in (1, 2, 3)], dtype=np.int64)[U]
    fp = _vertex_feasible_1d(sub[:, :, 0], sub[:, :, 1])
    fe = _vertex_feasible_1d(sub[:, :, 0], sub[:, :, 1] * D[:, None] + 1)
    counter += int((fp != fe).sum())
    checked += len(sub)
    for k in range(0, len(sub), 997):           # cross-check a sample against the exact solver
        inst = tuple(sorted(map(tuple, sub[k].tolist())))
        mism += _exact_pair(inst, 1) != (bool(fp[k]), bool(fe[k]))
        xchk += 1
    R2 = np.array(rows2, dtype=np.int64)
    Dtab = np.array([0] + [_eta_den(2, u) for u in (1, 2, 3)], dtype=np.int64)
    nonneg_a = np.array([[-1, 0], [0, -1]], dtype=np.int64)
    key_index = {(2, inst): v for (dd, inst), v in exact.items() if dd == 2}
    n2 = len(rows2)
    for i in range(n2):
        jk = np.array([(j, k) for j in range(i, n2) for k in range(j, n2)], dtype=np.int64)
        tri = np.stack([np.full(len(jk), i), jk[:, 0], jk[:, 1]], axis=1)
        sub = R2[tri]                                    # (n, 3, 3)
        U = np.maximum(np.abs(sub).reshape(len(sub), -1).max(axis=1), 1)
        D = Dtab[U]
        a = np.concatenate([sub[:, :, :2], np.broadcast_to(nonneg_a, (len(sub), 2, 2))], axis=1)
        cP = np.concatenate([sub[:, :, 2], np.zeros((len(sub), 2), dtype=np.int64)], axis=1)
        cE = np.concatenate([sub[:, :, 2] * D[:, None] + 1, np.zeros((len(sub), 2), dtype=np.int64)], axis=1)
        fp = _vertex_feasible_2d(a, cP)
        fe = _vertex_feasible_2d(a, cE)
        counter += int((fp != fe).sum())
        checked += len(sub)
        for t in range(len(sub)):                       # agree with the exact solver wherever both ran
            inst = tuple(sorted(set(map(tuple, sub[t].tolist()))))
            full = tuple(sorted(map(tuple, sub[t].tolist())))
            for cand in (full, inst):
                if (2, cand) in key_index:
                    mism += key_index[(2, cand)] != (bool(fp[t]), bool(fe[t]))
                    xchk += 1
                    break
    secs = time.time() - t0
    ok = counter == 0 and mism == 0 and xchk > 0 and secs < 600
    acceptance(9, ok, f"{checked} instances ({n_exact} by exact simplex); {counter} disagreements; "
                      f"{mism} mismatches in {xchk} cross-checks; {secs:.0f}s")
    assert ok


# -- 10: ellipsoid laws ---------------------------------------------------------------

def test_criterion_10_ellipsoids(acceptance):
    rng = np.random.default_rng(10)
    worst_cut, worst_net = -math.inf, -math.inf
    misses = shift_misses = 0
    for _ in range(1000):
        q = int(rng.integers(1, 7))
        E = Ellipsoid(rng.uniform(-1, 1, size=q), np.linalg.qr(rng.normal(size=(q, q)))[0].T,
                      rng.uniform(0.3, 2.0, size=q))
        g = rng.normal(size=q)
        E2 = half_ellipsoid_update(E, g)
        worst_cut = max(worst_cut, math.exp(E2.log_volume() - E.log_volume()) - math.exp(-1 / (2 * q)))
        pts = E.sample(2 * 10**4, rng)
        pts = pts[(pts - E.center) @ g >= 0][:10**4]
        misses += int((~E2.contains(pts, 1e-9)).sum())
        gamma = 1 / (4 * q * q)
        tol = center_shift_tolerance(E2, gamma, q)
        Y = 2 ** max(1, math.ceil(math.log2(1 / (2 * tol))))
        E3 = inflate_and_round(E2, gamma, Y)
        worst_net = max(worst_net, (E3.log_volume() - E.log_volume()) + 1 / (4 * q))
        shift_misses += int((~E3.contains(E2.sample(2000, rng), 1e-9)).sum())
        shift_misses += int((~E3.contains(pts, 1e-9)).sum())
    ok = worst_cut <= 1e-9 and worst_net <= 0 and misses == 0 and shift_misses == 0
    acceptance(10, ok, f"1000 cuts; max cut-ratio excess {worst_cut:.2e}; max net log-excess {worst_net:.2e}; "
                       f"{misses} cut misses; {shift_misses} shift misses")
    assert ok


# -- 11: Aff2Lin ----------------------------------------------------------------------

def test_criterion_11_aff2lin(acceptance):
    rng = np.random.default_rng(11)
    id_fail = hull_fail = 0
    combos = 0
    while combos < 1000:
        q = int(rng.integers(1, 5))
        k = int(rng.integers(1, q + 2))
        us = [tuple(Q(int(v), 4) for v in rng.integers(-4, 5, size=q)) for _ in range(k)]
        try:
            ch = aff2lin(us)
        except Exception:
            continue
        # S: points of the affine span of us
        S = []
        for _ in range(8):
            w = [Q(int(v), 3) for v in rng.integers(-3, 4, size=k)]
            w[-1] = 1 - sum(w[:-1])
            S.append(tuple(sum((wi * u[j] for wi, u in zip(w, us)), Q(0)) for j in range(q)))
        proj = [ch.project(s) for s in S]
        for _ in range(20):
            v = tuple(Q(int(a), int(b)) for a, b in zip(rng.integers(-9, 10, size=k - 1), rng.integers(1, 6, size=k - 1)))
            id_fail += ch.project(ch.go_up(v)) != v
            lam = [Q(int(x)) for x in rng.integers(0, 5, size=len(S))]
            if sum(lam) == 0:
                lam[0] = Q(1)
            lam = [x / sum(lam) for x in lam]
            pv = tuple(sum((l * p[j] for l, p in zip(lam, proj)), Q(0)) for j in range(k - 1))
            hull_fail += not isinstance(convex_membership(ch.go_up(pv), S), Inside)
            combos += 1
    ok = id_fail == 0 and hull_fail == 0
    acceptance(11, ok, f"{combos} convex combinations; {id_fail} identity failures; {hull_fail} hull failures")
    assert ok


# -- 12: PinHull end to end ------------------------------------------------------------

def test_criterion_12_pinhull(acceptance):
    params = PrivacyParams(1.0, 1e-3, 0.1)
    pol = PinHullPolicy.test_scale(2, 8, params, noise=NoiseMode.scaled(0.1))
    grid = GridSpec(8, pol.Y, 2)
    t0 = time.time()
    hits = 0
    for s in range(100):
        S = gen_instance("pinhull", 2, 2000, 1200 + s, X=8).payload["points_q"]
        try:
            res = pinhull(S, grid, params, pol, RngStream(s))
            hits += isinstance(convex_membership(res.point, S), Inside)
        except Exception:
            pass
    secs = time.time() - t0
    ok = hits >= 95 and secs < 600
    acceptance(12, ok, f"{hits}/100 returned points inside the hull; {secs:.0f}s")
    assert ok


# -- 13: learner --------------------------------------------------------------------

def test_criterion_13_learner(acceptance):
    inst = gen_instance("learn", 3, 10**4, 13, dim=2, negatives=1000)
    rep = run_experiment(inst, "paper", PrivacyParams(1.0, 0.1), 100, 1300)
    errs = [t.metrics.get("error", 1.0) for t in rep.trials]
    rate = sum(e <= 0.02 for e in errs) / 100
    ok = rate >= 0.9
    acceptance(13, ok, f"error <= 0.02 in {rate:.2f} of 100 runs; median error {np.median(errs):.4f}")
    assert ok


# -- 14: composition arithmetic ------------------------------------------------------

def test_criterion_14_composition(acceptance):
    mpmath.mp.dps = 50
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 10**4))
        eps = float(10 ** rng.uniform(-3, 0))
        delta = float(10 ** rng.uniform(-12, -5)) / k
        got, gd = compose_advanced(k, eps, delta)
        K, E, D = mpmath.mpf(k), mpmath.mpf(eps), mpmath.mpf(delta)
        want = mpmath.sqrt(2 * K * mpmath.log(1 / (K * D))) * E + 2 * K * E * E
        worst = max(worst, float(abs((mpmath.mpf(got) - want) / want)))
        assert gd == pytest.approx(2 * k * delta, rel=1e-15)
    ok = worst <= 1e-12
    acceptance(14, ok, f"20 triples; max relative error {worst:.2e}")
    assert ok


# -- 15: Laplace tail --------------------------------------------------------------------

def test_criterion_15_laplace_tail(acceptance):
    x = sample_laplace(1.0, RngStream(15), size=10**6)
    emp = {D: float(np.mean(np.abs(x) > D)) for D in (1, 2, 3)}
    ok = all(emp[D] <= math.exp(-D) + 0.005 for D in emp)
    acceptance(15, ok, "empirical tails " + ", ".join(f"{D}: {p:.4f} (limit {math.exp(-D) + 0.005:.4f})"
                                                       for D, p in emp.items()))
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
