import numpy as np
import pytest

from astgin import nncore as nn
from astgin.gcn import GcnConfig, gcn_forward, gcn_layer, init_gcn
from astgin.graph import normalize_adjacency


def random_graph(rng, n):
    A = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
    return normalize_adjacency(np.triu(A, 1) + np.triu(A, 1).T)


def stack(rng, cfg):
    store = nn.ParameterStore()
    init_gcn(store, cfg, rng)
    return store


def test_zero_input(rng):
    out = gcn_layer(random_graph(rng, 4), np.zeros((4, 3)), rng.random((3, 5)), "sigmoid")
    assert np.allclose(out.data, 0.5)


def test_unit_basis_column(rng):
    A = random_graph(rng, 4)
    for k in range(4):
        H = np.eye(4)[:, [k]]
        assert np.allclose(gcn_layer(A, H, np.eye(1), "identity").data[:, 0], A[:, k], atol=0)


def test_identity_adjacency_is_dense_layer(rng):
    H, W = rng.random((3, 4)), rng.standard_normal((4, 2))
    assert np.allclose(gcn_layer(np.eye(3), H, W, "relu").data, np.maximum(H @ W, 0), atol=1e-15)


def test_one_layer_stack_equals_layer(rng):
    cfg = GcnConfig(4, [3], ["tanh"])
    store = stack(rng, cfg)
    A, E = random_graph(rng, 5), rng.random((5, 4))
    assert np.array_equal(gcn_forward(A, E, cfg, store).data, gcn_layer(A, E, store["gcn.0.W"], "tanh").data)


def test_identity_adjacency_stack_is_mlp(rng):
    cfg = GcnConfig(3, [6, 4, 2], ["relu", "relu", "identity"])
    store = stack(rng, cfg)
    E = rng.random((2, 5, 3))
    W = [store[f"gcn.{i}.W"].data for i in range(3)]
    expected = np.maximum(np.maximum(E @ W[0], 0) @ W[1], 0) @ W[2]
    assert np.allclose(gcn_forward(np.eye(5), E, cfg, store).data, expected, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 7))
    cfg = GcnConfig(3, [8, 8, 4], bias=bool(seed % 2))
    store = stack(rng, cfg)
    A, E = random_graph(rng, n), rng.random((2, n, 3))
    P = np.eye(n)[rng.permutation(n)]
    out = gcn_forward(A, E, cfg, store).data
    permuted = gcn_forward(P @ A @ P.T, P @ E, cfg, store).data
    assert np.max(np.abs(permuted - P @ out)) < 1e-10


def test_weight_sharing_across_steps(rng):
    cfg = GcnConfig(3, [4], ["relu"])
    store = stack(rng, cfg)
    E = np.repeat(rng.random((1, 4, 3)), 3, axis=0)
    out = gcn_forward(random_graph(rng, 4), E, cfg, store).data
    assert np.array_equal(out[0], out[2])


def test_layer_gradients(rng):
    A, proj = random_graph(rng, 4), rng.standard_normal((4, 2))
    fn = lambda H, W: nn.sum_(nn.mul(gcn_layer(A, H, W, "tanh"), proj))
    assert nn.grad_check(fn, [rng.random((4, 3)), rng.standard_normal((3, 2))]) < 1e-4


def test_missing_parameter(rng):
    cfg = GcnConfig(3, [4, 4], ["relu", "identity"])
    with pytest.raises(KeyError, match="GCN layer 1"):
        gcn_forward(np.eye(2), np.ones((2, 3)), cfg, {"gcn.0.W": nn.Tensor(np.ones((3, 4)))})


def test_config_validation():
    with pytest.raises(ValueError):
        GcnConfig(3, [])
    with pytest.raises(ValueError):
        GcnConfig(3, [4], ["relu", "relu"])
    with pytest.raises(ValueError):
        GcnConfig(3, [4], ["swish"])
    assert GcnConfig(3).out_dim == 64 and GcnConfig(3).layers == 3


def test_shape_errors(rng):
    with pytest.raises(ValueError):
        gcn_layer(np.eye(3), np.ones((4, 2)), np.ones((2, 2)))
