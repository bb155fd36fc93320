import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from hostmix import build_network, builtin_glv, pair_network, ten_host_network
from hostmix.errors import (
    ConfigInvalid,
    GammaOnBoundary,
    MissingEdgeMap,
    NegativeProbability,
    TensorTooLarge,
)
from hostmix.lfa import (
    BOUNDARY_WIDTH,
    BasinProbabilityTensor,
    BasinTransitionMap,
    PairState,
    apply_total_operator,
    boundary_set,
    evolve_lfa_full,
    evolve_lfa_pair,
    full_tensor_marginals,
    gamma_in_boundary,
    marginals,
    network_boundary_sets,
    network_transition_maps,
    tensor_from_independent_singles,
    transition_map,
    write_basin_probability_csv,
)

# (a, b) -> (a', b') for every pair of starting basins at gamma = 0.25
GAMMA_QUARTER_MAP = {
    (1, 1): (1, 1), (1, 2): (1, 2), (1, 3): (1, 1), (1, 4): (1, 2),
    (2, 1): (2, 1), (2, 2): (2, 2), (2, 3): (2, 1), (2, 4): (2, 2),
    (3, 1): (1, 1), (3, 2): (1, 2), (3, 3): (3, 3), (3, 4): (3, 4),
    (4, 1): (2, 1), (4, 2): (2, 2), (4, 3): (4, 3), (4, 4): (4, 4),
}


@pytest.fixture(scope="module")
def quarter_map(illustrative, attractors):
    return transition_map(0.25, illustrative, illustrative, attractors, attractors)


@pytest.fixture(scope="module")
def boundary(illustrative, attractors):
    return boundary_set(illustrative, illustrative, attractors, attractors)


def delta(m, index):
    out = np.zeros(m)
    out[index - 1] = 1.0
    return out


def test_quarter_map(quarter_map):
    assert {(a, b): quarter_map[a, b] for a in range(1, 5) for b in range(1, 5)} == GAMMA_QUARTER_MAP
    assert quarter_map[1, 4] == (1, 2)


def test_small_gamma_keeps_basins(illustrative, attractors):
    m = transition_map(0.05, illustrative, illustrative, attractors, attractors)
    assert m[1, 4] == (1, 4)
    assert m.is_identity()


def test_diagonal_fixity(quarter_map, illustrative, attractors):
    for g in (0.05, 0.25, 0.45):
        m = transition_map(g, illustrative, illustrative, attractors, attractors)
        assert all(m[a, a] == (a, a) for a in range(1, 5))


def test_boundary_set(boundary):
    assert len(boundary) == 2
    for (lo, hi), target in zip(boundary, (0.1, 0.4)):
        assert lo <= target <= hi
        assert hi - lo <= BOUNDARY_WIDTH
    assert gamma_in_boundary(0.1, boundary) and gamma_in_boundary(0.4, boundary)
    assert not gamma_in_boundary(0.25, boundary)


def test_boundary_set_single_attractor():
    dyn = builtin_glv([1.0], [[-1.0]], 2.0, attractors=[[1.0]])
    assert boundary_set(dyn, dyn, dyn.attractors, dyn.attractors) == []


def test_network_boundary_sets(illustrative, attractors, boundary):
    net = build_network(3, [(0, 1, 1.0), (1, 2, 1.0)])
    dyn = [illustrative] * 3
    sets = network_boundary_sets(net, dyn, [attractors] * 3)
    assert sets[(0, 2)] == []
    assert sets[(0, 1)] == sets[(1, 2)] == boundary


def test_transition_map_on_boundary(illustrative, attractors, boundary):
    with pytest.raises(GammaOnBoundary) as info:
        transition_map(0.1, illustrative, illustrative, attractors, attractors)
    assert info.value.gamma == 0.1
    with pytest.raises(GammaOnBoundary):
        transition_map(0.4, illustrative, illustrative, attractors, attractors, boundary=boundary)


def test_map_round_trip(quarter_map):
    again = BasinTransitionMap.from_dict(json.loads(quarter_map.to_json()))
    assert again == quarter_map
    assert BasinTransitionMap.identity((0, 1), 4, 4).is_identity()
    with pytest.raises(ConfigInvalid):
        BasinTransitionMap((0, 1), [[0, 5]], [[0, 0]])


def test_network_maps_share_work(illustrative, attractors, quarter_map):
    net = ten_host_network()
    maps = network_transition_maps(net, [illustrative] * 10, [attractors] * 10, 0.25)
    assert len(maps) == 25
    assert all(m.entries() == quarter_map.entries() for m in maps.values())
    assert maps[(2, 9)].edge == (2, 9)


def test_total_operator(quarter_map):
    rates = {(0, 1): 1.0}
    maps = {(0, 1): quarter_map}
    psi = np.zeros((4, 4))
    psi[0, 3] = 1.0
    out = apply_total_operator(psi, maps, rates)
    expected = np.zeros((4, 4))
    expected[0, 1] = 1.0
    assert np.array_equal(out, expected)
    identity = {(0, 1): BasinTransitionMap.identity((0, 1), 4, 4)}
    rng = np.random.default_rng(1)
    psi = rng.dirichlet(np.ones(16)).reshape(4, 4)
    assert np.allclose(apply_total_operator(psi, identity, rates), psi, atol=1e-16)
    with pytest.raises(MissingEdgeMap):
        apply_total_operator(psi, {}, rates)


def test_tensor_helpers():
    uniform = tensor_from_independent_singles([np.full(4, 0.25)] * 2)
    assert np.allclose(uniform.values, 1 / 16)
    d = tensor_from_independent_singles([delta(4, 1), delta(4, 4)])
    assert d.values[0, 3] == 1.0 and d.values.sum() == 1.0
    m = marginals(d)
    assert np.array_equal(m[0], delta(4, 1)) and np.array_equal(m[1], delta(4, 4))
    rng = np.random.default_rng(4)
    singles = [rng.dirichlet(np.ones(3)) for _ in range(3)]
    back = marginals(tensor_from_independent_singles(singles))
    assert all(np.allclose(a, b, atol=1e-15) for a, b in zip(back, singles))
    assert all(np.allclose(s, 0.25) for s in marginals(uniform))
    with pytest.raises(NegativeProbability):
        BasinProbabilityTensor([[1.1, -0.1]])
    with pytest.raises(ConfigInvalid):
        BasinProbabilityTensor([[0.5, 0.6]])


def test_full_closed_form(quarter_map):
    grid = np.linspace(0, 5, 501)
    psi0 = tensor_from_independent_singles([delta(4, 1), delta(4, 4)])
    traj = evolve_lfa_full(psi0, {(0, 1): quarter_map}, {(0, 1): 1.0}, grid)
    assert np.max(np.abs(traj[:, 0, 3] - np.exp(-grid))) < 1e-8
    assert np.max(np.abs(traj[:, 0, 1] - (1 - np.exp(-grid)))) < 1e-8
    half = evolve_lfa_full(psi0, {(0, 1): quarter_map}, {(0, 1): 1.0}, [0.0, math.log(2)])
    assert abs(half[-1, 0, 3] - 0.5) < 1e-8 and abs(half[-1, 0, 1] - 0.5) < 1e-8


def test_full_matches_matrix_exponential(quarter_map):
    """Dense generator over all 16 joint states as the oracle."""
    q = np.zeros((16, 16))
    for (a, b), (a2, b2) in GAMMA_QUARTER_MAP.items():
        q[(a2 - 1) * 4 + (b2 - 1), (a - 1) * 4 + (b - 1)] += 1.0
    q -= np.eye(16)
    rng = np.random.default_rng(12)
    p0 = rng.dirichlet(np.ones(16))
    grid = np.linspace(0, 3, 7)
    traj = evolve_lfa_full(p0.reshape(4, 4), {(0, 1): quarter_map}, {(0, 1): 1.0}, grid)
    for k, t in enumerate(grid):
        assert np.max(np.abs(traj[k].reshape(-1) - expm(q * t) @ p0)) < 1e-8


def test_full_identity_maps_constant():
    rng = np.random.default_rng(2)
    psi = rng.dirichlet(np.ones(27)).reshape(3, 3, 3)
    rates = {(0, 1): 0.5, (1, 2): 0.5}
    maps = {e: BasinTransitionMap.identity(e, 3, 3) for e in rates}
    traj = evolve_lfa_full(psi, maps, rates, np.linspace(0, 4, 5))
    assert np.max(np.abs(traj - psi[None])) < 1e-14


def test_full_tensor_cap(quarter_map):
    psi = tensor_from_independent_singles([np.full(4, 0.25)] * 2)
    with pytest.raises(TensorTooLarge):
        evolve_lfa_full(psi, {(0, 1): quarter_map}, {(0, 1): 1.0}, [0, 1], cap=8)


def test_pair_exact_on_two_hosts(quarter_map):
    grid = np.linspace(0, 5, 101)
    maps = {(0, 1): quarter_map}
    rates = {(0, 1): 1.0}
    for singles in ([delta(4, 1), delta(4, 4)], list(np.random.default_rng(3).dirichlet(np.ones(4), size=2))):
        full = full_tensor_marginals(evolve_lfa_full(tensor_from_independent_singles(singles), maps, rates, grid))
        for stacked in (True, False):
            pair = evolve_lfa_pair(PairState.independent(singles, [(0, 1)]), maps, rates, grid, stacked=stacked)
            for h in range(2):
                assert np.max(np.abs(pair.singles[h] - full[h])) < 1e-6


def test_pair_stacked_and_loop_agree(illustrative, attractors):
    net = build_network(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (0, 3, 0.5)])
    rates = {(i, j): r / 4.5 for i, j, r in net.edges}
    maps = network_transition_maps(net, [illustrative] * 4, [attractors] * 4, 0.25)
    singles = np.random.default_rng(6).dirichlet(np.ones(4), size=4)
    init = PairState.independent(singles, list(rates))
    grid = np.linspace(0, 2, 11)
    a = evolve_lfa_pair(init, maps, rates, grid, stacked=True)
    b = evolve_lfa_pair(init, maps, rates, grid, stacked=False)
    for h in range(4):
        assert np.max(np.abs(a.singles[h] - b.singles[h])) < 1e-10
    # probability mass is preserved in every block
    for h in range(4):
        assert np.allclose(a.singles[h].sum(axis=1), 1.0, atol=1e-12)
    for e in rates:
        assert np.allclose(a.pairs[e].sum(axis=(1, 2)), 1.0, atol=1e-12)
        assert np.all(a.pairs[e] >= 0)
    assert a.state(10).marginal_gap() < 1e-6


def test_pair_identity_maps_constant():
    rates = {(0, 1): 0.5, (1, 2): 0.5}
    maps = {e: BasinTransitionMap.identity(e, 3, 3) for e in rates}
    singles = np.random.default_rng(9).dirichlet(np.ones(3), size=3)
    traj = evolve_lfa_pair(PairState.independent(singles, list(rates)), maps, rates, np.linspace(0, 3, 4))
    for h in range(3):
        assert np.max(np.abs(traj.singles[h] - singles[h][None])) < 1e-14


def test_pair_state_validation():
    with pytest.raises(ConfigInvalid):
        PairState([np.array([0.5, 0.6])], {})
    good = PairState.independent([np.array([0.5, 0.5])] * 2, [(0, 1)])
    with pytest.raises(ConfigInvalid):
        evolve_lfa_pair(PairState(good.singles, {}), {(0, 1): BasinTransitionMap.identity((0, 1), 2, 2)},
                        {(0, 1): 1.0}, [0, 1])


def test_basin_probability_csv(tmp_path):
    t = np.array([0.0, 0.5])
    singles = [np.array([[1.0, 0.0], [0.75, 0.25]])]
    write_basin_probability_csv(tmp_path / "p.csv", t, singles)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t_star,host,basin,probability"
    assert lines[1:] == ["0,0,1,1", "0,0,2,0", "0.5,0,1,0.75", "0.5,0,2,0.25"]


def test_pair_network_maps_are_deterministic(illustrative, attractors):
    a = network_transition_maps(pair_network(), [illustrative] * 2, [attractors] * 2, 0.3)
    b = network_transition_maps(pair_network(), [illustrative] * 2, [attractors] * 2, 0.3)
    assert a[(0, 1)].entries() == b[(0, 1)].entries()
