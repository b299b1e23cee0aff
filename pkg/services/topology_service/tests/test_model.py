import numpy as np
import pytest

from topoloss.errors import InvalidInputError, NetworkStateError
from topoloss.model import (
    Activation,
    AffinityMatrices,
    DenseNetwork,
    NetworkConfig,
    compute_P,
    compute_Q,
    resolve_perplexity,
    supervision_loss_and_grad,
)


def identity_network(activation=Activation.LINEAR):
    network = DenseNetwork((2, 2, 2, 2, 2), seed=0, activation=activation)
    for i in range(4):
        network.weights[i] = np.eye(2)
        network.biases[i] = np.zeros(2)
    return network


def test_layer_shapes_compose():
    network = DenseNetwork.from_config(NetworkConfig(hidden=(5, 4, 3), out_dim=2), d_in=3, seed=1)
    assert [w.shape for w in network.weights] == [(3, 5), (5, 4), (4, 3), (3, 2)]
    assert network.n_parameters == sum(w.size + b.size for w, b in zip(network.weights, network.biases))


def test_initialization_is_seeded_and_bounded():
    first = DenseNetwork((3, 8, 8, 8, 2), seed=5)
    second = DenseNetwork((3, 8, 8, 8, 2), seed=5)
    np.testing.assert_array_equal(first.get_parameters(), second.get_parameters())
    assert np.max(np.abs(first.get_parameters())) <= 0.1


def test_wrong_layer_count():
    with pytest.raises(InvalidInputError):
        DenseNetwork((3, 8, 2), seed=0)


def test_zero_parameters_give_zero_output(small_network):
    network = small_network()
    network.set_parameters(np.zeros(network.n_parameters))
    assert np.all(network.forward(np.ones((4, 3))) == 0.0)


def test_linear_network_is_affine():
    network = identity_network()
    network.biases[0] = np.array([1.0, 0.0])
    X = np.array([[1.0, 2.0], [-3.0, 0.5]])
    np.testing.assert_allclose(network.forward(X), X + np.array([1.0, 0.0]))


def test_forward_rejects_wrong_dimension(small_network):
    with pytest.raises(InvalidInputError):
        small_network(d_in=3).forward(np.ones((4, 2)))


def test_parameters_round_trip(small_network):
    network = small_network()
    flat = np.random.default_rng(0).normal(size=network.n_parameters)
    network.set_parameters(flat)
    np.testing.assert_array_equal(network.get_parameters(), flat)
    restored = DenseNetwork.from_checkpoint(network.to_checkpoint())
    np.testing.assert_array_equal(restored.get_parameters(), flat)
    assert restored.layer_sizes == network.layer_sizes


def test_checkpoint_missing_field(small_network):
    checkpoint = small_network().to_checkpoint()
    del checkpoint["parameters"]
    with pytest.raises(InvalidInputError):
        DenseNetwork.from_checkpoint(checkpoint)


def test_backward_requires_forward(small_network):
    network = small_network()
    with pytest.raises(NetworkStateError):
        network.backward(np.zeros((4, 2)))
    network.forward(np.ones((4, 3)))
    network.set_parameters(network.get_parameters())
    with pytest.raises(NetworkStateError):
        network.backward(np.zeros((4, 2)))


def test_backward_rejects_shape_mismatch(small_network):
    network = small_network()
    network.forward(np.ones((4, 3)))
    with pytest.raises(NetworkStateError):
        network.backward(np.zeros((5, 2)))


def test_zero_upstream_gives_zero_gradient(small_network):
    network = small_network()
    network.forward(np.ones((4, 3)))
    assert np.all(network.backward(np.zeros((4, 2))) == 0.0)


def test_linear_network_last_layer_gradient():
    network = identity_network()
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    dY = np.array([[0.5, -1.0], [2.0, 1.0]])
    network.forward(X)
    gradient = network.backward(dY)
    last_weights = gradient[18:22].reshape(2, 2)
    np.testing.assert_allclose(last_weights, X.T @ dY)
    np.testing.assert_allclose(gradient[22:24], dY.sum(axis=0))
    # identity layers pass the same upstream to every weight block
    np.testing.assert_allclose(gradient[0:4].reshape(2, 2), X.T @ dY)


@pytest.mark.parametrize("activation", [Activation.TANH, Activation.LINEAR])
def test_backward_matches_finite_differences(activation):
    rng = np.random.default_rng(2)
    network = DenseNetwork((3, 5, 4, 3, 2), seed=2, activation=activation, init_scale=0.8)
    X = rng.normal(size=(6, 3))
    dY = rng.normal(size=(6, 2))
    W = network.get_parameters()
    network.forward(X)
    analytic = network.backward(dY)

    def objective(parameters):
        network.set_parameters(parameters)
        return float(np.sum(dY * network.forward(X)))

    h = 1e-6
    for index in range(W.size):
        shifted = W.copy()
        shifted[index] += h
        up = objective(shifted)
        shifted[index] -= 2 * h
        down = objective(shifted)
        assert (up - down) / (2 * h) == pytest.approx(analytic[index], rel=1e-5, abs=1e-8)


def conditional_perplexity(row):
    positive = row[row > 0]
    return float(np.exp(-np.sum(positive * np.log(positive))))


def test_P_is_normalized_and_symmetric(rng):
    affinities = compute_P(rng.normal(size=(20, 3)), perplexity=5.0)
    P = affinities.P
    assert abs(P.sum() - 1.0) <= 1e-9
    assert np.all(np.diag(P) == 0.0)
    assert np.max(np.abs(P - P.T)) <= 1e-12
    assert np.all(P >= 0.0)


def test_rows_reach_target_perplexity(rng):
    affinities = compute_P(rng.normal(size=(20, 3)), perplexity=5.0)
    for row in affinities.conditional:
        assert conditional_perplexity(row) == pytest.approx(5.0, abs=1e-5)


def test_P_separates_far_clusters(rng):
    X = np.vstack([rng.normal(size=(10, 2)) * 0.1, rng.normal(size=(10, 2)) * 0.1 + 20.0])
    P = compute_P(X, perplexity=4.0).P
    within = P[:10, :10].sum() + P[10:, 10:].sum()
    across = P[:10, 10:].sum() + P[10:, :10].sum()
    assert within > 10 * across


def test_P_is_uniform_on_equilateral_triangle():
    X = np.eye(3)
    P = compute_P(X, perplexity=1.5).P
    off_diagonal = P[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off_diagonal, 1.0 / 6.0, atol=1e-9)


def test_duplicate_points_clamp_sigma():
    affinities = compute_P(np.zeros((5, 2)), perplexity=2.0)
    assert np.all(np.isfinite(affinities.P))
    assert abs(affinities.P.sum() - 1.0) <= 1e-9
    assert np.all(affinities.sigmas >= 1e-12)


@pytest.mark.parametrize("n, perplexity", [(2, 1.5), (5, 5.0), (5, 1.0)])
def test_P_rejects_bad_arguments(n, perplexity):
    with pytest.raises(InvalidInputError):
        compute_P(np.arange(2 * n, dtype=float).reshape(n, 2), perplexity=perplexity)


def test_resolve_perplexity_clamps():
    assert resolve_perplexity(30.0, 300) == 30.0
    assert resolve_perplexity(30.0, 15) == 5.0
    with pytest.raises(InvalidInputError):
        resolve_perplexity(30.0, 3)


def test_Q_two_points():
    Q = compute_Q(np.array([[0.0, 0.0], [3.0, 1.0]])).Q
    np.testing.assert_allclose(Q, [[0.0, 0.5], [0.5, 0.0]])


def test_Q_equilateral():
    Y = np.eye(3)
    Q = compute_Q(Y).Q
    np.testing.assert_allclose(Q[~np.eye(3, dtype=bool)], 1.0 / 6.0, atol=1e-12)


def test_Q_matches_definition_after_scaling(rng):
    Y = rng.normal(size=(5, 2)) * 3.0
    kernel = np.array([[1.0 / (1.0 + np.sum((a - b) ** 2)) if i != j else 0.0 for j, b in enumerate(Y)] for i, a in enumerate(Y)])
    np.testing.assert_allclose(compute_Q(Y).Q, kernel / kernel.sum(), rtol=1e-12)


def test_Q_needs_two_points():
    with pytest.raises(InvalidInputError):
        compute_Q(np.zeros((1, 2)))


def test_kl_vanishes_when_Q_equals_P(rng):
    Y = rng.normal(size=(6, 2))
    loss, grad = supervision_loss_and_grad(compute_Q(Y).Q, Y)
    assert abs(loss) <= 1e-12
    np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_kl_is_nonnegative(rng):
    for _ in range(10):
        P = compute_P(rng.normal(size=(8, 3)), perplexity=3.0)
        loss, _ = supervision_loss_and_grad(P, rng.normal(size=(8, 2)))
        assert loss >= 0.0


@pytest.mark.parametrize("seed", range(5))
def test_kl_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    P = compute_P(rng.normal(size=(5, 3)), perplexity=2.0)
    Y = rng.normal(size=(5, 2))
    _, analytic = supervision_loss_and_grad(P, Y)
    h = 1e-6
    for index in np.ndindex(Y.shape):
        shifted = Y.copy()
        shifted[index] += h
        up, _ = supervision_loss_and_grad(P, shifted)
        shifted[index] -= 2 * h
        down, _ = supervision_loss_and_grad(P, shifted)
        assert (up - down) / (2 * h) == pytest.approx(analytic[index], rel=1e-5, abs=1e-8)


def test_supervision_rejects_mismatched_P():
    with pytest.raises(InvalidInputError):
        supervision_loss_and_grad(AffinityMatrices(), np.zeros((3, 2)))
    with pytest.raises(InvalidInputError):
        supervision_loss_and_grad(np.ones((4, 4)), np.zeros((3, 2)))
