import numpy as np
import pytest

from hostmix import LocalDynamics, build_network, builtin_glv, flow
from hostmix.dynamics import flow_samples
from hostmix.errors import ConfigError, DimensionMismatch, EmptyInput
from hostmix.hfa import (
    HfcsaSystem,
    HflsaSystem,
    broadcast_hosts,
    evolve_hfcsa,
    evolve_hflsa,
    mean_abundance,
)

from conftest import TEN_HOST_INITIAL
from oracles import illustrative_field, rk4

# Fixed-step RK4 at step 1e-5 for two coupled hosts, lambda gamma = 8, T = 1.
HFLSA_ENDPOINT = np.array([[2.0005301812809146, 2.0000001094853435],
                           [2.0005301853655917, 2.000000109485372]])


def coupled_field(coupling):
    def rhs(y):
        return illustrative_field(y) + coupling * (y[::-1] - y)
    return rhs


def test_hflsa_edgeless_is_local_flow(illustrative):
    times = np.linspace(0, 2, 5)
    init = np.array([[4.5, 4.5], [9.5, 9.5]])
    traj = evolve_hflsa(HflsaSystem(build_network(2, []), illustrative, 0.3, init), times)
    for h in range(2):
        assert np.max(np.abs(traj[:, h] - flow_samples(illustrative, init[h], times))) < 1e-7


def test_hflsa_identical_hosts_follow_local_flow(illustrative):
    times = np.linspace(0, 1, 3)
    init = np.array([[7.5, 10.5], [7.5, 10.5]])
    traj = evolve_hflsa(HflsaSystem(build_network(2, [(0, 1, 50.0)]), illustrative, 0.2, init), times)
    assert np.array_equal(traj[:, 0], traj[:, 1])
    assert np.max(np.abs(traj[:, 0] - flow_samples(illustrative, init[0], times))) < 1e-7


def test_hflsa_fixed_step_oracle(illustrative):
    init = np.array([[2.0, 2.0], [12.0, 12.0]])
    sys = HflsaSystem(build_network(2, [(0, 1, 80.0)]), illustrative, 0.1, init)
    traj = evolve_hflsa(sys, [0.0, 1.0])
    assert np.max(np.abs(traj[-1] - HFLSA_ENDPOINT)) < 1e-6
    # an independent coarser RK4 agrees with the committed endpoint
    reference = rk4(coupled_field(8.0), init, 1.0, 1e-4)
    assert np.max(np.abs(reference - HFLSA_ENDPOINT)) < 1e-8


def test_coupling_matrix():
    sys = HflsaSystem(build_network(3, [(0, 1, 2.0), (1, 2, 1.0)]), builtin_glv([1.0], [[-1.0]], 2.0), 0.25,
                      np.array([[0.1], [0.5], [1.0]]))
    c = sys.coupling_matrix()
    assert np.allclose(c, [[-0.5, 0.5, 0.0], [0.5, -0.75, 0.25], [0.0, 0.25, -0.25]])
    assert np.allclose(c.sum(axis=1), 0.0)
    with pytest.raises(ConfigError):
        HflsaSystem(build_network(2, [(0, 1, 1.0)]), builtin_glv([1.0], [[-1.0]], 2.0), 0.8,
                    np.array([[0.1], [0.5]]))
    with pytest.raises(DimensionMismatch):
        HflsaSystem(build_network(2, [(0, 1, 1.0)]), builtin_glv([1.0], [[-1.0]], 2.0), 0.1, np.array([[0.1]]))


def test_hfcsa_single_host_is_local_flow(illustrative):
    times = np.linspace(0, 3, 7)
    traj = evolve_hfcsa(HfcsaSystem([illustrative], [9.5, 9.5]), times)
    assert np.max(np.abs(traj - flow_samples(illustrative, [9.5, 9.5], times))) < 1e-7


def test_hfcsa_opposite_fields_cancel():
    g = builtin_glv([1.0], [[-1.0]], 2.0)
    minus_g = LocalDynamics(dimension=1, field=lambda x: -g(x), domain_bound=2.0)
    traj = evolve_hfcsa(HfcsaSystem([g, minus_g], [0.3]), np.linspace(0, 5, 6))
    assert np.all(traj == 0.3)


def test_hfcsa_converges_from_mean(illustrative):
    mean = mean_abundance(TEN_HOST_INITIAL)
    assert mean.tolist() == [7.0, 7.0]
    traj = evolve_hfcsa(HfcsaSystem.from_states(illustrative, TEN_HOST_INITIAL), [0.0, 50.0])
    assert np.max(np.abs(traj[-1] - [2.0, 2.0])) < 1e-6
    assert np.max(np.abs(traj[-1] - flow(illustrative, [7.0, 7.0], 50.0))) < 1e-9


def test_mean_abundance():
    assert mean_abundance([[2, 2], [12, 12]]).tolist() == [7.0, 7.0]
    assert mean_abundance([[3.5, 1.0]]).tolist() == [3.5, 1.0]
    with pytest.raises(EmptyInput):
        mean_abundance([])
    with pytest.raises(DimensionMismatch):
        mean_abundance([[1.0, 2.0], [1.0]])


def test_broadcast_hosts():
    out = broadcast_hosts(np.arange(6.0).reshape(3, 2), 4)
    assert out.shape == (3, 4, 2)
    assert np.array_equal(out[:, 2], np.arange(6.0).reshape(3, 2))
