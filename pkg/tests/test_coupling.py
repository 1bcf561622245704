import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ppflip.core_model import (
    BoundaryPair,
    DimensionError,
    PolymerConfig,
    dominates,
    maximal_config,
    minimal_config,
    path_from_particles,
    vee,
    wedge,
)
from ppflip.coupling import (
    CftpCapExceeded,
    CoupledBundle,
    DistanceSpec,
    cftp_sample,
    cftp_samples,
    distance,
    empirical_distribution,
    evolve_coupled,
    gap_lower_bound_coupling,
    hitting_time_max,
    hitting_times_max,
    monotone_update_exhaustive,
    path_metric_check,
    survival_curve,
    tv_distance,
)
from ppflip.equilibrium import enumerate_states, exact_measure
from ppflip.glauber import DynamicsParams, build_exact_chain, p_high, simulate, spectral_gap_exact


# --- grand coupling ----------------------------------------------------------


def test_bundle_of_one_reproduces_simulate():
    b = BoundaryPair.full(6)
    init = minimal_config(b, 2)
    for seed in range(5):
        out = evolve_coupled(CoupledBundle([(init, b)], 1.0, seed=seed), 7.0)
        assert out.members[0][0] == simulate(DynamicsParams(1.0, b, 2, seed=seed, horizon=7.0), init).final


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_members_follow_their_solo_paths(seed):
    # shared clocks and uniforms: each member is pathwise its own solo run,
    # so every marginal law is exactly the single-flip dynamics
    b = BoundaryPair.full(6)
    lo = BoundaryPair(b.xi, np.array([0, -1, 0, -1, 0, -1, 0]))
    m = [(maximal_config(b, 2), b), (minimal_config(b, 2), b), (minimal_config(lo, 2), lo)]
    out = evolve_coupled(CoupledBundle(m, 0.8, seed=seed), 3.0)
    for (c, bb), (f, _) in zip(m, out.members):
        assert simulate(DynamicsParams(0.8, bb, 2, seed=seed, horizon=3.0), c).final == f


def test_order_preserved_on_square_instance():
    b = BoundaryPair.full(4)
    bundle = CoupledBundle([(maximal_config(b, 2), b), (minimal_config(b, 2), b)], 1.0, seed=1)
    out = evolve_coupled(bundle, math.inf, max_events=10_000)
    assert out.events == 10_000 and out.violations == 0
    assert dominates(out.members[0][0], out.members[1][0])


def test_lower_ceiling_member_stays_below():
    b = BoundaryPair.full(6)
    low = BoundaryPair(vee(6), vee(6))
    bundle = CoupledBundle([(minimal_config(b, 2), b), (minimal_config(low, 2), low)], 1.0, seed=3)
    assert len(bundle.ordered_pairs()) == 1
    out = evolve_coupled(bundle, math.inf, max_events=10_000)
    assert out.violations == 0 and dominates(out.members[0][0], out.members[1][0])


def test_bundle_rejects_mismatched_members():
    with pytest.raises(DimensionError):
        CoupledBundle([(minimal_config(BoundaryPair.full(4), 2), BoundaryPair.full(4)),
                       (minimal_config(BoundaryPair.full(6), 2), BoundaryPair.full(6))], 1.0)
    with pytest.raises(ValueError):
        CoupledBundle([], 1.0)


def test_update_map_is_monotone_exhaustively():
    b = BoundaryPair.full(4)
    hi = BoundaryPair(wedge(4), np.array([0, -1, 0, -1, 0]))
    assert monotone_update_exhaustive(b, b, 2) == 0
    assert monotone_update_exhaustive(hi, b, 2) == 0
    assert monotone_update_exhaustive(BoundaryPair.full(6), BoundaryPair.full(6), 1) == 0


# --- distances ---------------------------------------------------------------


def test_distance_examples():
    a = PolymerConfig([path_from_particles([0, 2, 4], 6)])
    c = PolymerConfig([path_from_particles([0, 3, 4], 6)])
    g = 0.5
    assert distance(DistanceSpec("particle_weighted", g), a, a) == 0
    assert distance(DistanceSpec("particle_weighted", g), a, c) == pytest.approx(math.exp(-2 * g))
    assert distance(DistanceSpec("particle_count"), a, c) == 1
    x = PolymerConfig([[0, 1, 0, 1, 0], [0, -1, 0, -1, 0]])
    y = PolymerConfig([[0, 1, 2, 1, 0], [0, -1, 0, -1, 0]])
    assert distance(DistanceSpec("height_weighted", 0.7), x, y) == pytest.approx(math.exp(-0.7))
    assert distance(DistanceSpec("height_l1"), x, y) == 1


@given(st.sampled_from(["particle_weighted", "height_weighted"]), st.floats(0, 2), st.data())
@settings(max_examples=40, deadline=None)
def test_distance_is_a_symmetric_positive_function(kind, decay, data):
    space = enumerate_states(BoundaryPair.full(6), 2)
    a = space[data.draw(st.integers(0, len(space) - 1))]
    b = space[data.draw(st.integers(0, len(space) - 1))]
    spec = DistanceSpec(kind, decay)
    d = distance(spec, a, b)
    assert d == pytest.approx(distance(spec, b, a))
    assert (d == 0) == (a == b)


def test_path_metric_examples():
    b = BoundaryPair.full(4)
    top, bot = maximal_config(b, 1), minimal_config(b, 1)
    assert path_metric_check(DistanceSpec("particle_weighted", 0.5), top, bot, b)
    adj = PolymerConfig([[0, 1, 0, 1, 0]])
    assert path_metric_check(DistanceSpec("particle_weighted", 0.5), top, adj, b)
    space = enumerate_states(b, 2)
    spec = DistanceSpec("height_weighted", 0.7)
    for x, y in itertools.combinations(space, 2):
        assert path_metric_check(spec, x, y, b)


# --- coalescence gap estimate ------------------------------------------------


def test_gap_estimate_two_state():
    p = DynamicsParams(1.0, BoundaryPair.full(2), 1, seed=0)
    est = gap_lower_bound_coupling(p, horizon=2.0, replicas=4000)
    assert est.ci_low <= 1.0 <= est.ci_high
    assert est.rate == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ValueError):
        gap_lower_bound_coupling(p, 2.0, 0)


@pytest.mark.parametrize("n,k,alpha", [(4, 1, 1.0), (4, 2, 1.0), (6, 1, 0.5)])
def test_gap_estimate_below_exact_gap(n, k, alpha):
    b = BoundaryPair.full(n)
    gap = spectral_gap_exact(build_exact_chain(b, k, alpha))
    est = gap_lower_bound_coupling(DynamicsParams(alpha, b, k, seed=1), horizon=6 / gap, replicas=20_000)
    assert not est.censored
    assert est.ci_low <= gap * 1.0001


# --- CFTP --------------------------------------------------------------------


def test_cftp_deterministic_and_concentrated():
    b = BoundaryPair.full(4)
    p = DynamicsParams(20.0, b, 2, seed=9)
    S = cftp_samples(p, 1000)
    top = np.tile(b.xi, (2, 1))
    assert np.mean(np.all((S == top[None]).reshape(len(S), -1), axis=1)) >= 0.999
    q = DynamicsParams(1.0, b, 2, seed=5)
    assert cftp_sample(q) == cftp_sample(q)


def test_cftp_cap():
    with pytest.raises(CftpCapExceeded):
        cftp_samples(DynamicsParams(0.2, BoundaryPair.full(12), 4, seed=0), 1, max_events=8)


@pytest.mark.parametrize("n,k,alpha", [(4, 1, 1.0), (4, 2, 0.5), (6, 1, 0.5)])
def test_cftp_chi_square(n, k, alpha):
    b = BoundaryPair.full(n)
    m = exact_measure(b, k, alpha)
    S = cftp_samples(DynamicsParams(alpha, b, k, seed=21), 50_000)
    obs = np.bincount(m.indices_of(S), minlength=m.size)
    exp = m.probs * len(S)
    # pool states with small expected counts
    small = exp < 5
    if small.any():
        obs = np.append(obs[~small], obs[small].sum())
        exp = np.append(exp[~small], exp[small].sum())
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_cftp_tv_small_instance():
    b = BoundaryPair.full(4)
    m = exact_measure(b, 1, 1.0)
    S = cftp_samples(DynamicsParams(1.0, b, 1, seed=2), 100_000)
    assert tv_distance(empirical_distribution(S, m), m.probs) <= 0.01


# --- hitting times -----------------------------------------------------------


def test_hitting_time_examples():
    b = BoundaryPair.full(2)
    assert hitting_time_max(DynamicsParams(1.0, b, 1, horizon=10.0), maximal_config(b, 1)).time == 0.0
    T = hitting_times_max(DynamicsParams(1.0, b, 1, seed=3, horizon=1e3), 10_000)
    assert np.all(np.isfinite(T))
    # one site at rate 1 that goes up with probability p_high: exponential with that rate
    assert T.mean() == pytest.approx(1 / p_high(1.0), rel=0.05)
    r = hitting_time_max(DynamicsParams(1.0, BoundaryPair.full(8), 4, horizon=0.01))
    assert r.censored and math.isinf(r.time)


def test_hitting_replicas_reproducible_in_isolation():
    p = DynamicsParams(1.0, BoundaryPair.full(6), 3, seed=8, horizon=1e4)
    T = hitting_times_max(p, 5)
    assert hitting_times_max(p, 3).tolist() == T[:3].tolist()


def test_survival_tail_is_log_linear():
    M = 4
    T = hitting_times_max(DynamicsParams(1.0, BoundaryPair.full(2 * M), M, seed=1, horizon=1e4), 2000)
    grid = np.array([0.4, 0.5, 0.6, 0.7]) * M**3
    S = survival_curve(T, grid)
    assert np.all(S > 0) and np.all(np.diff(S) < 0)
    slope, icpt = np.polyfit(grid, np.log(S), 1)
    r = np.corrcoef(grid, np.log(S))[0, 1]
    assert slope < 0 and r**2 > 0.95
