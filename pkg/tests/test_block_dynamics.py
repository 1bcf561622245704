import numpy as np
import pytest

from ppflip.block_dynamics import (
    block_family,
    block_gap,
    block_generator_exact,
    comparison_chain_check,
    contraction_estimate,
    contraction_exact,
    crude_family,
    gap_trend_report,
    matching_probability,
    particle_block_law,
    particle_family,
    particle_window,
    polymer_family,
    polymer_window,
    resample_particle_block,
    resample_polymer_block,
    unit_pairs,
)
from ppflip.core_model import BoundaryPair, PolymerConfig, maximal_config, path_from_particles, to_particles
from ppflip.coupling import DistanceSpec, distance
from ppflip.equilibrium import exact_measure
from ppflip.glauber import build_exact_chain, spectral_gap_exact


def _tv(p, q):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum()


# --- windows and exact resampling ---------------------------------------------


def test_singleton_window_is_forced():
    c = PolymerConfig([path_from_particles([0, 1, 2], 6)])
    w = particle_window(c, 2, 0)
    assert (w.left, w.right) == ((0,), (2,))
    rng = np.random.default_rng(0)
    assert resample_particle_block(c, w, 1.0, rng) == c


def test_particle_window_sentinels():
    c = PolymerConfig([path_from_particles([1, 3, 4], 6)] * 2)
    w = particle_window(c, 1, 1)
    assert w.left == (-1, -1) and w.right == (4, 4)


def test_particle_block_collapses_at_large_bias():
    b = BoundaryPair.full(8)
    c = maximal_config(b, 2)
    # label 1 frozen at its ground position, labels 2..4 pushed to the far end
    start = PolymerConfig(np.stack([path_from_particles([0, 5, 6, 7], 8)] * 2))
    w = particle_window(start, 3, 1)
    rng = np.random.default_rng(1)
    hits = sum(resample_particle_block(start, w, 20.0, rng, b) == c for _ in range(500))
    assert hits / 500 >= 0.99


def test_particle_block_marginal_matches_conditional():
    b = BoundaryPair.full(6)
    m = exact_measure(b, 2, 1.0)
    c = m.states[m.size // 2]
    w = particle_window(c, 2, 0)
    outs, p = particle_block_law(c, w, b, 1.0)
    # conditional law from the full enumeration: states that agree outside label 2
    P = np.stack([to_particles(s).positions for s in m.states])
    ref = to_particles(c).positions
    keep = np.all(np.delete(P, 1, axis=2) == np.delete(ref, 1, axis=1)[None], axis=(1, 2))
    q = m.probs[keep] / m.probs[keep].sum()
    ref_law = {s.key(): x for s, x in zip(np.array(m.states, dtype=object)[keep], q)}
    assert {o.key(): x for o, x in zip(outs, p)} == pytest.approx(ref_law, rel=1e-12)
    rng = np.random.default_rng(2)
    keys = [o.key() for o in outs]
    draws = [resample_particle_block(c, w, 1.0, rng, b).key() for _ in range(100_000)]
    emp = np.array([draws.count(k) for k in keys]) / len(draws)
    assert _tv(emp, p) <= 0.01


def test_polymer_block_examples():
    b = BoundaryPair.full(4)
    m = exact_measure(b, 2, 1.0)
    c = m.states[0]
    rng = np.random.default_rng(3)
    w = polymer_window(c, 1, 2, b)
    draws = [resample_polymer_block(c, w, 1.0, rng) for _ in range(100_000)]
    emp = np.bincount([m.index_of(d) for d in draws], minlength=m.size) / len(draws)
    assert _tv(emp, m.probs) <= 0.01
    flat = BoundaryPair(np.array([0, 1, 0, 1, 0]), np.array([0, 1, 0, 1, 0]))
    squeezed = PolymerConfig([[0, 1, 0, 1, 0]] * 2)
    out = resample_polymer_block(squeezed, polymer_window(squeezed, 1, 0, flat), 1.0, rng)
    assert out == squeezed


def test_polymer_slab_marginal_matches_conditional():
    b = BoundaryPair.full(4)
    m = exact_measure(b, 2, 1.0)
    c = m.states[5]
    w = polymer_window(c, 2, 0, b)
    rng = np.random.default_rng(4)
    top = c.heights[0]
    same = np.all(m.heights[:, 0] == top[None], axis=1)
    ref = m.probs[same] / m.probs[same].sum()
    idx = np.flatnonzero(same)
    draws = [m.index_of(resample_polymer_block(c, w, 1.0, rng)) for _ in range(100_000)]
    emp = np.bincount(draws, minlength=m.size)[idx] / len(draws)
    assert _tv(emp, ref) <= 0.01


# --- exact generators ----------------------------------------------------------


@pytest.mark.parametrize("kind,param,n,k", [("particle", 1, 6, 2), ("particle", 0, 8, 1), ("polymer", 0, 4, 3),
                                            ("polymer", 1, 6, 3)])
def test_block_generators_reversible(kind, param, n, k):
    ch = block_generator_exact(kind, BoundaryPair.full(n), k, 0.8, param)
    assert ch.detailed_balance_residual() <= 1e-12
    assert np.abs(ch.generator.sum(axis=1)).max() < 1e-12


def test_full_window_gaps_count_blocks():
    b = BoundaryPair.full(6)
    # every block resamples the whole system: the generator is B (P - I)
    assert block_gap("particle", b, 2, 1.0, 3) == pytest.approx(3.0, abs=1e-9)
    assert block_gap("polymer", b, 2, 1.0, 2) == pytest.approx(2.0, abs=1e-9)
    assert block_gap("polymer", BoundaryPair.full(4), 3, 1.0, 3) == pytest.approx(3.0, abs=1e-9)


def test_particle_gap_nondecreasing_in_window():
    rep = gap_trend_report("particle", [(6, 2)], [0, 1, 2, 3], 1.0)
    assert rep.nondecreasing()
    assert rep.first_above_one[(6, 2)] == 1


def test_single_flip_gap_bounded_for_one_polymer():
    gaps = [spectral_gap_exact(build_exact_chain(BoundaryPair.full(n), 1, 1.0)) for n in (2, 4, 6, 8)]
    assert min(gaps) >= 0.35
    assert np.all(np.diff(gaps) < 0)


def test_gaps_stabilise_at_fixed_window():
    rep = gap_trend_report("particle", [(n, 2) for n in (4, 6, 8)] + [(n, 1) for n in (10, 12)], [1], 1.0)
    g = np.array([r.gap for r in rep.rows])
    assert g.max() / g.min() - 1 < 0.2
    rep = gap_trend_report("polymer", [(4, k) for k in (2, 3, 4)], [1], 1.0)
    g = np.array([r.gap for r in rep.rows])
    assert g.max() / g.min() - 1 < 0.2


def test_crude_chain():
    b = BoundaryPair.full(6)
    m = exact_measure(b, 2, 1.0)
    fam = crude_family(m, (1, 4), reference=5)
    ch = fam.chain()
    assert ch.detailed_balance_residual() <= 1e-12
    assert 0 < spectral_gap_exact(ch) <= len(fam.masks)
    with pytest.raises(ValueError):
        contraction_estimate(fam, 0.5, (0, 1), 10)


# --- contraction -------------------------------------------------------------


def test_coalesced_pair_has_zero_drift():
    m = exact_measure(BoundaryPair.full(6), 2, 1.0)
    assert contraction_exact(particle_family(m, 1), 0.5, (3, 3)) == 0.0


def test_particle_contraction_matches_exact_and_is_negative():
    m = exact_measure(BoundaryPair.full(8), 1, 1.0)
    fam = particle_family(m, 2)
    pairs = unit_pairs(fam)
    w = DistanceSpec("particle_weighted", 0.5)
    a, b = pairs[len(pairs) // 2]
    est = contraction_estimate(fam, 0.5, (a, b), 100_000, seed=1)
    assert est.distance == pytest.approx(distance(w, m.states[a], m.states[b]))
    assert est.ci_high < 0
    ex = contraction_exact(fam, 0.5, (a, b))
    assert est.ci_low - 1e-9 <= ex <= est.ci_high + 1e-9 or abs(est.mean - ex) < 0.02
    worst = max(contraction_exact(fam, 0.5, p) / fam_d for p in pairs
                for fam_d in [distance(w, m.states[p[0]], m.states[p[1]])])
    assert worst < 0


def test_polymer_contraction_scan_finds_negative_drift():
    m = exact_measure(BoundaryPair.full(4), 4, 1.0)
    fam = polymer_family(m, 1)
    pairs = unit_pairs(fam)
    best = None
    for rho in (0.0, 0.5, 1.0, 2.0):
        worst = max(contraction_exact(fam, rho, p) / _height_dist(fam, rho, p) for p in pairs)
        best = worst if best is None else min(best, worst)
        if rho == 0.5:
            a, b = max(pairs, key=lambda p: contraction_exact(fam, rho, p) / _height_dist(fam, rho, p))
            est = contraction_estimate(fam, rho, (a, b), 100_000, seed=2)
            assert est.ci_high < 0
    assert best < 0


def _height_dist(fam, rho, p):
    m = fam.measure
    return distance(DistanceSpec("height_weighted", rho), m.states[p[0]], m.states[p[1]])


def test_contraction_requires_unit_pair():
    m = exact_measure(BoundaryPair.full(4), 1, 1.0)
    fam = particle_family(m, 1)
    top, bot = 0, m.size - 1
    with pytest.raises(ValueError):
        contraction_estimate(fam, 0.5, (top, bot), 10)


# --- comparison chain and matching --------------------------------------------


@pytest.mark.parametrize("n,k", [(6, 2), (6, 3), (4, 3)])
def test_comparison_chain_inequalities(n, k):
    rep = comparison_chain_check(BoundaryPair.full(n), k, 1.0, s=1, ell=1, n_functions=10, seed=0)
    assert rep.holds(1e-9)
    assert rep.local_constant > 0


def test_comparison_slab_step_needs_gap_above_one():
    # with single-polymer slabs the slab chain has gap < 1 and the first step fails
    assert block_gap("polymer", BoundaryPair.full(6), 3, 1.0, 0) < 1
    rep = comparison_chain_check(BoundaryPair.full(6), 3, 1.0, s=0, ell=1, n_functions=10, seed=0)
    assert rep.step_slab.min() < 0


def test_matching_probability_bounded_away_from_zero():
    eps = []
    for n in (6, 8, 10):
        m = exact_measure(BoundaryPair.full(n), 2, 1.0)
        fam = particle_family(m, 0)
        P = fam.coords
        N = P.shape[2]
        # a pair that agrees on label 1 and differs at label 2 only
        i = N + 1
        pair = next((a, b) for a, b in unit_pairs(fam)
                    if np.array_equal(P[a, :, 0], P[b, :, 0]) and not np.array_equal(P[a, :, 1], P[b, :, 1]))
        eps.append(matching_probability(m, i, N - 1, pair))
    assert min(eps) > 0.05


def test_block_family_dispatch():
    m = exact_measure(BoundaryPair.full(4), 2, 1.0)
    assert block_family("particle", m, 1).kind == "particle"
    assert block_family("polymer", m, 0).n_blocks == 2
    with pytest.raises(ValueError):
        block_family("nope", m, 1)
