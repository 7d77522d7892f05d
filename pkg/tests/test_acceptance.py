"""Acceptance criteria 1-10, each reported as one PASS/FAIL line."""

import time

import numpy as np

from conftest import (
    ACCEPTANCE_LINES,
    HET_MU2,
    bisection_oracle,
    chain_flows,
    complete_flows,
    fd_grad,
    random_instance,
    random_metzler,
    random_reducible,
)
from sitplan import _ode
from sitplan.control import ControlConfig, grad_h, h
from sitplan.duration import allee_cost_regression, integrate_controlled, sweep_allee, uncontrolled_rhs
from sitplan.metzler import build_connectivity, group_inverse, is_irreducible, perron_vectors
from sitplan.optimize import OPTIMAL_ACTIVE, TRAP_REMAINING, enumerate_strategies, optimize
from sitplan.scenario import load_preset
from sitplan.sterile import (
    STRICTLY_POSITIVE,
    ReleaseBounds,
    SterileParams,
    classify_positivity,
    numeric_positivity,
    sterile_equilibrium,
)
from sitplan.wild import homogeneous_model, persistence_equilibrium


class Criterion:
    """Collects named checks and records one summary line for the criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures: list[str] = []
        self.count = 0
        self.start = time.perf_counter()

    def check(self, ok, label):
        self.count += 1
        if not ok:
            self.failures.append(label)

    def close(self):
        elapsed = time.perf_counter() - self.start
        verdict = "PASS" if not self.failures else "FAIL"
        line = f"criterion {self.number}: {verdict} {self.title} ({self.count - len(self.failures)}/{self.count} checks, {elapsed:.1f} s)"
        if self.failures:
            line += " failed: " + "; ".join(self.failures)
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not self.failures, line


def full_split(model, subset, **kw):
    res = optimize(model, ControlConfig.simple(model.n, subset, **kw))
    assert res.status == OPTIMAL_ACTIVE
    return res.ceiled()


def check_row(crit, model, subset, expected, tol, tag):
    got = full_split(model, subset)
    want = np.zeros(model.n)
    want[list(subset)] = expected
    lab = f"{tag} C={tuple(i + 1 for i in subset)} got {tuple(int(v) for v in got[list(subset)])} want {tuple(expected)}"
    crit.check(np.all(np.abs(got - want) <= tol), lab)


ALL_SUBSETS = [(0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2)]


def test_criterion_1_complete_d002():
    crit = Criterion(1, "3-patch complete graph, D=0.02")
    m = homogeneous_model(3, complete_flows(3, 0.02))
    expected = {1: (1005,), 2: (488, 488), 3: (243, 243, 243)}
    t0 = time.perf_counter()
    for subset in ALL_SUBSETS:
        check_row(crit, m, subset, expected[len(subset)], 1, "D=0.02")
    elapsed = time.perf_counter() - t0
    crit.check(elapsed < 10, f"runtime {elapsed:.1f} s >= 10 s")
    crit.close()


def test_criterion_2_complete_d001():
    crit = Criterion(2, "3-patch complete graph, D=0.01")
    m = homogeneous_model(3, complete_flows(3, 0.01))
    expected = {1: (1297,), 2: (635, 635), 3: (243, 243, 243)}
    for subset in ALL_SUBSETS:
        check_row(crit, m, subset, expected[len(subset)], 1, "D=0.01")
    totals = {1: 1297, 2: 1270, 3: 729}
    for subset in ALL_SUBSETS:
        got = full_split(m, subset).sum()
        crit.check(abs(got - totals[len(subset)]) <= len(subset), f"D=0.01 total {got} for {subset}")
    crit.close()


def test_criterion_3_heterogeneous_complete():
    crit = Criterion(3, "complete graph with mu2 of patch 2 halved")
    for rate, single, triple, tag in ((0.02, 1005, (56, 858, 56), "D=0.02"),
                                      (0.01, 1297, (148, 674, 148), "D=0.01")):
        m = homogeneous_model(3, complete_flows(3, rate), mu2=HET_MU2)
        reports = enumerate_strategies(m, ControlConfig.simple(3, [0]), 1)
        best = reports[0]
        crit.check(best.subset == (1,), f"{tag} best single subset {best.subset}")
        crit.check(abs(best.ceiled()[1] - single) <= 1, f"{tag} best single {best.ceiled()[1]}")
        check_row(crit, m, (0, 1, 2), triple, 1, tag)
    crit.close()


def test_criterion_4_chain():
    crit = Criterion(4, "3-patch chain, equal and halved mu2 in patch 2")
    homog = {
        0.02: {(0,): (2181,), (1,): (1005,), (2,): (2181,), (0, 1): (11, 992), (0, 2): (488, 488),
               (1, 2): (992, 11), (0, 1, 2): (243, 243, 243)},
        0.01: {(0,): (4385,), (1,): (1297,), (2,): (4385,), (0, 1): (5, 1289), (0, 2): (635, 635),
               (1, 2): (1289, 5), (0, 1, 2): (243, 243, 243)},
    }
    het = {
        0.02: {(0,): (2183,), (1,): (1005,), (2,): (2183,), (0, 1): (10, 993), (0, 2): (976, 976),
               (1, 2): (993, 10), (0, 1, 2): (56, 858, 56)},
        0.01: {(0,): (4385,), (1,): (1297,), (2,): (4385,), (0, 1): (5, 1289), (0, 2): (1269, 1269),
               (1, 2): (1289, 5), (0, 1, 2): (148, 674, 148)},
    }
    for table, mu2 in ((homog, 0.001), (het, HET_MU2)):
        for rate, rows in table.items():
            m = homogeneous_model(3, chain_flows(3, rate), mu2=mu2)
            tag = f"{'het' if table is het else 'hom'} D={rate}"
            for subset, expected in rows.items():
                # Entries near the boundary of the feasible set are ceiling-sensitive.
                tol = 2 if min(expected) <= 11 else 1
                check_row(crit, m, subset, expected, tol, tag)
    crit.close()


def test_criterion_5_mass_trapping():
    crit = Criterion(5, "mass trapping on non-release patches")
    m = homogeneous_model(3, complete_flows(3, 0.02))
    cfg = ControlConfig.simple(3, [0])
    for rho_s, single, pair in ((0.05, 2327, (926, 926)), (0.025, 1615, (685, 685))):
        for k, expected in ((1, (single,)), (2, pair)):
            reports = enumerate_strategies(m, cfg, k, trapping_rule=TRAP_REMAINING, trap_rho=0.05,
                                           trap_rho_s=rho_s)
            crit.check(len(reports) == 3, f"rho_s={rho_s} k={k}: {len(reports)} feasible subsets")
            for r in reports:
                got = r.ceiled()[list(r.subset)]
                crit.check(np.all(np.abs(got - expected) <= 2),
                           f"rho_s={rho_s} C={r.subset} got {tuple(got)} want {expected}")
    crit.close()


def close_rel(got, want, rel=2e-3):
    got, want = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    return bool(np.all(np.abs(got - want) <= rel * np.maximum(want, 1.0)))


def test_criterion_6_seven_patch_chain():
    crit = Criterion(6, "7-patch chain enumeration")
    m = homogeneous_model(7, chain_flows(7, 0.02))
    cfg = ControlConfig.simple(7, [0])
    t0 = time.perf_counter()
    best = {k: enumerate_strategies(m, cfg, k) for k in (1, 2, 3)}
    elapsed = time.perf_counter() - t0
    crit.check(elapsed < 300, f"full enumeration k<=3 took {elapsed:.0f} s")

    b1 = best[1][0]
    crit.check(b1.subset == (3,) and close_rel(b1.ceiled()[3], 8408), f"k=1 best {b1.subset} {b1.total:.1f}")
    trapped = enumerate_strategies(m, cfg, 1, trapping_rule=TRAP_REMAINING, trap_rho=0.05)[0]
    crit.check(trapped.subset == (3,) and close_rel(trapped.ceiled()[3], 70891),
               f"k=1 trapped best {trapped.subset} {trapped.total:.1f}")

    top2 = [r for r in best[2] if r.tied_with_best]
    crit.check({r.subset for r in top2} == {(0, 4), (2, 6)}, f"k=2 tied best {[r.subset for r in top2]}")
    for r in top2:
        got = r.ceiled()[list(r.subset)]
        want = (763, 2937) if r.subset == (0, 4) else (2937, 763)
        crit.check(close_rel(got, want), f"k=2 {r.subset} got {tuple(got)}")

    b3 = best[3][0]
    crit.check(b3.subset == (1, 3, 5) and close_rel(b3.ceiled()[[1, 3, 5]], (996, 257, 996)),
               f"k=3 best {b3.subset} {tuple(b3.ceiled()[list(b3.subset)])}")

    allowed = (0, 1, 5, 6)
    f1 = enumerate_strategies(m, cfg, 1, allowed=allowed)[0]
    crit.check(close_rel(f1.ceiled().sum(), 65676), f"forbidden k=1 {f1.subset} {f1.total:.1f}")
    f2 = enumerate_strategies(m, cfg, 2, allowed=allowed)[0]
    crit.check(f2.subset == (1, 5) and close_rel(f2.ceiled()[[1, 5]], (1857, 1857)),
               f"forbidden k=2 {f2.subset} {tuple(f2.ceiled()[list(f2.subset)])}")
    crit.close()


def test_criterion_7_persistence_equilibria():
    crit = Criterion(7, "persistence equilibria")
    x = persistence_equilibrium(homogeneous_model(3, complete_flows(3, 0.02)))
    crit.check(np.all(np.abs(x - 6587.62) <= 0.01), f"homogeneous {x}")
    for rate, want in ((0.02, (6607.38, 13135.48, 6607.38)), (0.01, (6597.56, 13155.30, 6597.56))):
        x = persistence_equilibrium(homogeneous_model(3, complete_flows(3, rate), mu2=HET_MU2))
        crit.check(np.all(np.abs(x - want) <= 0.05), f"heterogeneous D={rate} {x}")
    crit.close()


def test_criterion_8_allee_regression():
    crit = Criterion(8, "release cost linear in the Allee parameter")
    m = homogeneous_model(3, complete_flows(3, 0.02))
    grid = np.linspace(0, 100, 11)
    for subset, slope, intercept in (([0], -0.168, 1004.53), ([0, 1, 2], -0.12, 727.92)):
        reg = allee_cost_regression(m, ControlConfig.simple(3, subset), grid)
        crit.check(abs(reg.slope - slope) <= 0.01, f"C={subset} slope {reg.slope:.4f}")
        crit.check(abs(reg.intercept - intercept) <= 2, f"C={subset} intercept {reg.intercept:.2f}")
    crit.close()


DURATION_PRESETS = ("duration3", "duration7", "grid4x5")


def duration_sweep(name):
    sc = load_preset(name)
    m, cfg = sc.build_model(), sc.build_config()
    lam0 = optimize(m, cfg).lambda_star.lam
    return m, cfg, lam0, sweep_allee(m, cfg, lam0, sc.experiment.p_list, sc.experiment.a_grid)


def test_criterion_9_duration_properties():
    crit = Criterion(9, "release duration properties")
    for name in DURATION_PRESETS:
        m, cfg, lam0, rows = duration_sweep(name)
        found = all(r.tau_exact is not None and r.tau_estimate is not None for r in rows)
        crit.check(found, f"{name}: entry time not found")
        if not found:
            continue
        tau = {(r.a_value, r.p): r for r in rows}
        a_vals = sorted({r.a_value for r in rows})
        p_vals = sorted({r.p for r in rows})
        for p in p_vals:
            seq = [tau[(a, p)].tau_exact for a in a_vals]
            crit.check(all(x > y for x, y in zip(seq, seq[1:])), f"{name} (a) p={p} not decreasing in a: {seq}")
        for a in a_vals:
            seq = [tau[(a, p)].tau_exact for p in p_vals]
            crit.check(all(x >= y for x, y in zip(seq, seq[1:])), f"{name} (a) a={a} increasing in p: {seq}")
            over = [100 * (tau[(a, p)].tau_estimate - tau[(a, p)].tau_exact) / tau[(a, p)].tau_exact
                    for p in p_vals]
            crit.check(all(x < y for x, y in zip(over, over[1:])),
                       f"{name} (c) a={a} overestimate % not increasing in p: {np.round(over, 2)}")
        for r in rows:
            crit.check(r.tau_estimate >= r.tau_exact, f"{name} (b) estimate below exact at a={r.a_value} p={r.p}")
            if name == "duration3":
                ratio = r.tau_estimate / r.tau_exact
                crit.check(ratio <= 2, f"{name} (b) ratio {ratio:.3f} at a={r.a_value} p={r.p}")
            # Restart without control from the state reached at the exact entry time.
            ma = m.with_allee(r.a_value)
            traj = integrate_controlled(ma, cfg, r.p * lam0, persistence_equilibrium(ma), np.zeros(m.n),
                                        r.tau_exact)
            sol = _ode.integrate(uncontrolled_rhs(ma), (0.0, 5000.0), traj.at(r.tau_exact))
            crit.check(np.max(sol.y[:, -1]) < 1e-3, f"{name} (d) restart at a={r.a_value} p={r.p} did not die out")
    crit.close()


def test_criterion_10_property_suites():
    crit = Criterion(10, "randomised property suites")
    rng = np.random.default_rng(20260101)
    limit = 120.0

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        A = random_metzler(rng, n)
        Q = perron_vectors(A).modulus * np.eye(n) - A
        X = group_inverse(Q)
        worst = max(worst, np.max(np.abs(Q @ X @ Q - Q)), np.max(np.abs(X @ Q @ X - X)),
                    np.max(np.abs(Q @ X - X @ Q)))
    crit.check(worst <= 1e-8, f"group inverse residual {worst:.2e}")
    crit.check(time.perf_counter() - t0 < limit, "group inverse suite too slow")

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        m, cfg, lam = random_instance(rng)
        fd = fd_grad(m, cfg, lam)
        worst = max(worst, np.max(np.abs(grad_h(m, cfg, lam) - fd)) / max(np.max(np.abs(fd)), 1e-12))
    crit.check(worst <= 1e-4, f"gradient vs finite differences relative error {worst:.2e}")
    crit.check(time.perf_counter() - t0 < limit, "gradient suite too slow")

    t0 = time.perf_counter()
    bad = 0
    for _ in range(100):
        m, cfg, lam = random_instance(rng)
        more = lam + np.where(lam > 0, rng.uniform(0, 3000, lam.size), 0)
        other = np.where(lam > 0, rng.uniform(0, 3000, lam.size), 0)
        hl = h(m, cfg, lam)
        bad += h(m, cfg, more) > hl + 1e-12
        bad += h(m, cfg, 0.5 * (lam + other)) > 0.5 * (hl + h(m, cfg, other)) + 1e-9
    crit.check(bad == 0, f"h monotonicity/convexity violations {bad}")
    crit.check(time.perf_counter() - t0 < limit, "h suite too slow")

    t0 = time.perf_counter()
    done = mismatches = 0
    while done < 100:
        n = int(rng.integers(2, 9))
        F = random_reducible(rng, n)
        D = build_connectivity(F)
        if is_irreducible(D):
            continue
        p = SterileParams(rng.uniform(0.015, 0.04, n), 0.0, D)
        cs = [i for i in range(n) if rng.uniform() < 0.3]
        lam = np.zeros(n)
        lam[cs] = rng.uniform(1, 100, len(cs))
        labels = classify_positivity(p, ReleaseBounds.on_subset(n, cs), lam).vertex_labels()
        numeric = numeric_positivity(sterile_equilibrium(p, lam))
        mismatches += [lab == STRICTLY_POSITIVE for lab in labels] != numeric.tolist()
        done += 1
    crit.check(mismatches == 0, f"SCC positivity mismatches {mismatches}")
    crit.check(time.perf_counter() - t0 < limit, "SCC suite too slow")

    t0 = time.perf_counter()
    worst = 0.0
    for k in range(12):
        n = 1 + k % 2
        F = rng.uniform(0.005, 0.05, (n, n))
        m = homogeneous_model(n, F, a=rng.uniform(0, 100, n) * (k % 3 > 0), mu2=rng.uniform(5e-4, 2e-3, n))
        cfg = ControlConfig.simple(n, [0], rho=rng.uniform(0, 0.03, n) * (k % 4 == 0))
        got = optimize(m, cfg).lambda_star.lam[0]
        oracle = bisection_oracle(m, cfg, 0)
        worst = max(worst, abs(got - oracle) / oracle)
    crit.check(worst <= 1e-6, f"scalar optimizer vs bisection relative error {worst:.2e}")
    crit.check(time.perf_counter() - t0 < limit, "scalar suite too slow")

    t0 = time.perf_counter()
    bad = 0
    times = np.linspace(0, 400, 81)
    for _ in range(50):
        m, cfg, lam = random_instance(rng)
        x0 = rng.uniform(0, 8000, m.n)
        y0 = x0 + rng.uniform(0, 3000, m.n) * (rng.uniform(size=m.n) < 0.7)
        xs0 = rng.uniform(0, 5e4, m.n)
        # Merging trajectories differ by less than the default rtol, so integrate tighter.
        lo = integrate_controlled(m, cfg, lam, x0, xs0, times[-1], output_times=times, rtol=1e-12).states
        hi = integrate_controlled(m, cfg, lam, y0, xs0, times[-1], output_times=times, rtol=1e-12).states
        bad += np.any(lo > hi + 1e-8 * max(1.0, hi.max()))
    crit.check(bad == 0, f"comparison principle violated on {bad} pairs")
    crit.check(time.perf_counter() - t0 < limit, "comparison suite too slow")
    crit.close()
