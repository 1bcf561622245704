"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from ppflip.block_dynamics import (
    DEFAULT_ELL,
    DEFAULT_GAMMA,
    DEFAULT_RHO,
    DEFAULT_S,
    block_generator_exact,
    contraction_estimate,
    gap_trend_report,
    particle_family,
    polymer_family,
    unit_pairs,
)
from ppflip.core_model import BoundaryPair, maximal_config, minimal_config
from ppflip.coupling import CoupledBundle, cftp_samples, empirical_distribution, evolve_coupled, tv_distance
from ppflip.equilibrium import count_by_volume, count_states, exact_measure, tail_excess_volume, \
    volume_tail_bound
from ppflip.glauber import (
    DynamicsParams,
    build_exact_chain,
    distribution_at,
    final_states,
    mixing_time_gap_bound,
    spectral_gap_exact,
    tv_mixing_exact,
)
from ppflip.mixing_lab import (
    build_halo,
    check_envelope_containment,
    check_halo_confinement,
    hitting_scaling_experiment,
    random_ceiling,
)
from ppflip.seeding import replica_rng

from oracles import cube_stacks

LOG2_HALF = math.log(2) / 2
RESULTS: list[str] = []


def report(name: str, ok: bool, detail: str, t0: float) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - t0:.1f}s)"
    RESULTS.append(line)
    print(line)
    return ok


# --- exact checks ------------------------------------------------------------


def exact_counting():
    t0 = time.perf_counter()
    counts = [count_states(BoundaryPair.full(n, h), k) for k, n, h in [(1, 2, 0), (1, 4, 0), (2, 4, 0)]]
    table = list(count_by_volume(6).counts)
    oracle = [cube_stacks(v) for v in range(7)]
    ok = counts == [2, 6, 20] and table == oracle == [1, 1, 3, 6, 13, 24, 48]
    ok &= time.perf_counter() - t0 < 1.0
    return report("exact counting", ok, f"states {counts}, N(v) {table}", t0)


def _small_instances(max_states=1000):
    for n in range(2, 9):
        for k in (1, 2, 3):
            for h in range(n % 2, n + 1, 2):
                b = BoundaryPair.full(n, h)
                if count_states(b, k) <= max_states:
                    yield b, k


def reversibility():
    t0 = time.perf_counter()
    worst, n_inst = 0.0, 0
    for b, k in _small_instances():
        n_inst += 1
        worst = max(worst, build_exact_chain(b, k, 0.8).detailed_balance_residual())
        for ell in (0, 1):
            worst = max(worst, block_generator_exact("particle", b, k, 0.8, ell).detailed_balance_residual())
        for s in range(min(k, 2)):
            worst = max(worst, block_generator_exact("polymer", b, k, 0.8, s).detailed_balance_residual())
    ok = worst <= 1e-12 and time.perf_counter() - t0 < 60
    return report("reversibility", ok, f"max residual {worst:.2e} over {n_inst} instances", t0)


def two_state_closed_forms():
    t0 = time.perf_counter()
    ch = build_exact_chain(BoundaryPair.full(2), 1, LOG2_HALF)
    gap, tmix = spectral_gap_exact(ch), tv_mixing_exact(ch)
    ok = gap == 1.0 and abs(tmix - (1 + math.log(4 / 3))) <= 1e-6
    return report("two-state closed forms", ok, f"gap {gap!r}, t_mix {tmix:.8f}", t0)


def gap_mixing_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fails, checked = 0, 0
    while checked < 20:
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, 4))
        h = int(rng.choice(np.arange(n % 2, n + 1, 2)))
        b = BoundaryPair.full(n, int(rng.choice([-1, 1])) * h)
        if count_states(b, k) > 200:
            continue
        ch = build_exact_chain(b, k, float(rng.uniform(0.2, 2.0)))
        checked += 1
        fails += not tv_mixing_exact(ch) <= mixing_time_gap_bound(ch)
    return report("t_mix <= gap^-1 (1 - log min mu)", fails == 0, f"{checked - fails}/{checked} instances", t0)


# --- simulation and coupling -------------------------------------------------


def simulation_law():
    t0 = time.perf_counter()
    tvs = []
    for n, k, alpha in [(4, 1, 1.0), (4, 2, 1.0), (6, 1, 0.5)]:
        b = BoundaryPair.full(n)
        ch = build_exact_chain(b, k, alpha)
        assert ch.size <= 50
        init = minimal_config(b, k)
        S = final_states(DynamicsParams(alpha, b, k, seed=11, horizon=5.0), init, 100_000)
        emp = np.bincount(ch.measure.indices_of(S), minlength=ch.size) / len(S)
        tvs.append(0.5 * float(np.abs(emp - distribution_at(ch, ch.measure.index_of(init), 5.0)).sum()))
    ok = max(tvs) <= 0.01 and time.perf_counter() - t0 < 300
    return report("simulation law", ok, "TV " + ", ".join(f"{x:.4f}" for x in tvs), t0)


def monotone_coupling():
    t0 = time.perf_counter()
    b = BoundaryPair.full(8)
    bundle = CoupledBundle([(maximal_config(b, 3), b), (minimal_config(b, 3), b)], 1.0, seed=0)
    out = evolve_coupled(bundle, math.inf, max_events=10**6)
    ok = out.events == 10**6 and out.violations == 0
    return report("monotone coupling", ok, f"{out.violations} violations in {out.events} events", t0)


def cftp_exactness():
    t0 = time.perf_counter()
    tvs = []
    for n, k, alpha in [(4, 1, 1.0), (4, 2, 0.5)]:
        b = BoundaryPair.full(n)
        m = exact_measure(b, k, alpha)
        S = cftp_samples(DynamicsParams(alpha, b, k, seed=5), 100_000)
        tvs.append(tv_distance(empirical_distribution(S, m), m.probs))
    ok = max(tvs) <= 0.01 and time.perf_counter() - t0 < 300
    return report("CFTP exactness", ok, "TV " + ", ".join(f"{x:.4f}" for x in tvs), t0)


# --- gaps and block dynamics -------------------------------------------------


def _uniform(gaps) -> bool:
    g = np.asarray(gaps)
    return bool((g.max() - g.min()) / g.max() < 0.5 and g.min() >= g[0] / 2)


def gap_uniformity(alpha):
    t0 = time.perf_counter()
    by_n = [spectral_gap_exact(build_exact_chain(BoundaryPair.full(n), 1, alpha)) for n in (4, 6, 8)]
    by_k = [spectral_gap_exact(build_exact_chain(BoundaryPair.full(4), k, alpha)) for k in (1, 2, 3)]
    ok = _uniform(by_n) and _uniform(by_k) and time.perf_counter() - t0 < 600
    fmt = lambda g: "/".join(f"{x:.3f}" for x in g)  # noqa: E731
    return report(f"gap uniformity alpha={alpha}", ok, f"n-scan {fmt(by_n)}, k-scan {fmt(by_k)}", t0)


def block_gap_scans():
    t0 = time.perf_counter()
    part = gap_trend_report("particle", [(4, 2), (6, 2), (8, 2), (10, 1), (12, 1)], [0, 1, 2], 1.0)
    poly = gap_trend_report("polymer", [(4, 2), (4, 3), (4, 4)], [0, 1], 1.0)
    found = all(v is not None for v in part.first_above_one.values()) and \
        all(v is not None for v in poly.first_above_one.values())
    ok = found and part.nondecreasing() and poly.nondecreasing() and time.perf_counter() - t0 < 600
    return report("block gaps reach 1", ok, f"first ell {dict(part.first_above_one)}, "
                  f"first s {dict(poly.first_above_one)}", t0)


def contraction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = -math.inf
    checked = 0
    for kind, k in [("particle", 1), ("particle", 2), ("polymer", 1), ("polymer", 2)]:
        m = exact_measure(BoundaryPair.full(8), k, 1.0)
        if kind == "particle":
            fam, decay = particle_family(m, DEFAULT_ELL), DEFAULT_GAMMA
        else:
            fam, decay = polymer_family(m, DEFAULT_S), DEFAULT_RHO
        pairs = unit_pairs(fam)
        if len(pairs) > 50:
            pairs = [pairs[i] for i in rng.choice(len(pairs), 50, replace=False)]
        for p in pairs:
            est = contraction_estimate(fam, decay, p, 100_000, seed=checked)
            worst = max(worst, est.ci_high)
            checked += 1
    ok = worst < 0 and time.perf_counter() - t0 < 600
    return report("contraction", ok, f"largest upper 95% bound {worst:.4f} over {checked} unit pairs", t0)


# --- equilibrium tails -------------------------------------------------------


def equilibrium_tails():
    t0 = time.perf_counter()
    below = True
    for n, k, alpha in [(4, 1, 0.5), (6, 2, 0.5), (8, 2, 1.0), (6, 3, 0.7), (10, 1, 0.3)]:
        for i, p in tail_excess_volume(exact_measure(BoundaryPair.full(n), k, alpha)):
            below &= p <= volume_tail_bound(alpha, i) + 1e-12
    b = BoundaryPair.full(8)
    m = exact_measure(b, 2, 1.0)
    exact = np.array([p for _, p in tail_excess_volume(m)])
    V = m.volumes[m.indices_of(cftp_samples(DynamicsParams(1.0, b, 2, seed=3), 100_000))]
    i = np.arange(1, 7)
    emp = np.array([(V >= v).mean() for v in i])
    s_exact = np.polyfit(i, np.log(exact[i]), 1)[0]
    s_emp = np.polyfit(i, np.log(emp), 1)[0]
    rel = abs(s_emp / s_exact - 1)
    ok = below and rel <= 0.2
    return report("equilibrium tails", ok, f"bound holds: {below}; slope {s_emp:.3f} vs exact {s_exact:.3f}", t0)


# --- square-case experiments -------------------------------------------------


def hitting_scaling():
    t0 = time.perf_counter()
    tab = hitting_scaling_experiment([4, 8, 16, 32], 1.0, 200, seed=0)
    r = tab.ratios_m3()
    ok = tab.exponent_a <= 1.6 and bool(np.all(np.diff(r) < 0)) and time.perf_counter() - t0 < 1800
    q = "/".join(f"{row.quantile:.1f}" for row in tab.rows)
    return report("hitting-time scaling", ok, f"quantiles {q}, exponent a {tab.exponent_a:.3f}", t0)


def envelope_containment():
    t0 = time.perf_counter()
    freq = [check_envelope_containment(16, 1.0, C, 200, seed=0).violation_frequency for C in (0.08, 0.16, 0.32)]
    ok = bool(np.all(np.diff(freq) <= 0)) and freq[-1] <= 0.05 and time.perf_counter() - t0 < 1800
    return report("envelope containment", ok, "violation frequency " + ", ".join(f"{f:.3f}" for f in freq), t0)


def halo_confinement():
    t0 = time.perf_counter()
    M, largest = 16, 0.04
    freqs, bound_ok = [], True
    for c in range(5):
        xi = random_ceiling(M, replica_rng(0, 10**6 + c))
        h = build_halo(xi, M)
        bound_ok &= h.excess_volume() <= h.volume_bound()
        freqs.append(check_halo_confinement(xi, M, 1.0, largest, 20, seed=c).frequency)
    rng = np.random.default_rng(1)
    for _ in range(200):
        h = build_halo(random_ceiling(M, rng), M)
        bound_ok &= h.excess_volume() <= h.volume_bound()
    ok = bound_ok and min(freqs) >= 0.9
    return report("halo confinement", ok, f"frequency {', '.join(f'{f:.2f}' for f in freqs)} at C={largest}; "
                  f"volume bound holds: {bound_ok}", t0)


CRITERIA = {
    "exact_counting": exact_counting,
    "reversibility": reversibility,
    "two_state": two_state_closed_forms,
    "mixing_bound": gap_mixing_bound,
    "simulation_law": simulation_law,
    "monotone_coupling": monotone_coupling,
    "cftp": cftp_exactness,
    "gap_uniformity_alpha_1": lambda: gap_uniformity(1.0),
    "gap_uniformity_alpha_half": lambda: gap_uniformity(0.5),
    "block_gaps": block_gap_scans,
    "contraction": contraction,
    "tails": equilibrium_tails,
    "scaling": hitting_scaling,
    "envelope": envelope_containment,
    "halo": halo_confinement,
}


@pytest.mark.slow
@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name):
    assert CRITERIA[name]()


if __name__ == "__main__":
    for fn in CRITERIA.values():
        fn()
