import numpy as np
import pytest

from topoloss.complex_core import PointCloud, attributed_values, build_rips
from topoloss.datasets import generate_nested_circles
from topoloss.diagram_metrics import brute_force_match
from topoloss.errors import InvalidInputError, StaleConfigurationError
from topoloss.model import DenseNetwork, compute_P, supervision_loss_and_grad
from topoloss.persistence import compute_persistence_dim0
from topoloss.topo_loss import (
    GroundTruthDiagram,
    LossBreakdown,
    LossWeights,
    eval_loss,
    grad_loss,
    make_ground_truth,
    prior_ground_truth,
    snapshot_configuration,
)


def snapshot(points, truth, t=0):
    filtration = build_rips(PointCloud(points), max_dim=truth.hom_dim + 1)
    return snapshot_configuration(t, filtration, compute_persistence_dim0(filtration), truth)


def frozen_loss(config, points, truth, weights, supervision=0.0):
    return eval_loss(config, attributed_values(config.filtration, points), supervision, truth, weights)


def test_explicit_ground_truth():
    truth = make_ground_truth([(0.0, 0.9)])
    assert truth.size == 1
    assert truth.points == ((0.0, 0.9),)


def test_ground_truth_from_collinear_cloud(collinear_cloud):
    truth = make_ground_truth(collinear_cloud, hom_dim=0, size=1)
    assert truth.points == ((0.0, 2.0),)


def test_ground_truth_size_exceeds_diagram(collinear_cloud):
    with pytest.raises(InvalidInputError):
        make_ground_truth(collinear_cloud, hom_dim=0, size=3)


def test_ground_truth_from_nested_circles():
    cloud, _ = generate_nested_circles(n_per_circle=30, noise=0.0)
    truth = make_ground_truth(cloud, hom_dim=0, size=1)
    birth, death = truth.points[0]
    assert birth == 0.0
    assert death == pytest.approx(np.sqrt(1.25), abs=1e-9)


@pytest.mark.parametrize("points", [[(1.0, 1.0)], [(2.0, 1.0)], [(0.0, np.inf)]])
def test_ground_truth_rejects_diagonal_and_infinite(points):
    with pytest.raises(InvalidInputError):
        GroundTruthDiagram(tuple(points))


def test_prior_ground_truth():
    truth = prior_ground_truth(3, 0.0, 1.5)
    assert truth.size == 3
    assert set(truth.points) == {(0.0, 1.5)}


def test_loss_weights_validate():
    with pytest.raises(ValueError):
        LossWeights(lambda_topo=-1.0)
    with pytest.raises(ValueError):
        LossWeights(k=0)


def test_breakdown_assembles_total():
    weights = LossWeights(lambda_topo=0.5, lambda_reg=0.25, k=2)
    breakdown = LossBreakdown.assemble(1.0, 2.0, 4.0, weights)
    assert breakdown.g == 3.0
    assert breakdown.as_dict()["G"] == 3.0


def test_eval_example_single_point():
    truth = GroundTruthDiagram(((0.0, 1.0),))
    points = np.array([[0.0], [0.5]])
    config = snapshot(points, truth)
    weights = LossWeights(lambda_topo=1.0, lambda_reg=0.0)
    breakdown = eval_loss(config, config.values, 0.0, truth, weights)
    assert breakdown.g == pytest.approx(0.25, abs=1e-15)
    assert breakdown.l_reg == pytest.approx(0.25)


def test_unchanged_values_reproduce_snapshot_loss(rng):
    points = rng.normal(size=(8, 2))
    truth = make_ground_truth(PointCloud(points), size=2)
    config = snapshot(points, truth)
    weights = LossWeights(lambda_topo=0.3, lambda_reg=0.7, k=3)
    at_snapshot = eval_loss(config, config.values, 1.5, truth, weights)
    again = frozen_loss(config, points, truth, weights, supervision=1.5)
    assert again == at_snapshot
    assert at_snapshot.l_topo == 0.0


def test_frozen_loss_tracks_moved_points():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [3.0, 2.0]])
    truth = GroundTruthDiagram(((0.0, 2.2),))
    config = snapshot(points, truth)
    moved = points * 1.1
    breakdown = frozen_loss(config, moved, truth, LossWeights(lambda_topo=1.0, lambda_reg=1.0))
    death_id = int(config.matched_death_ids[0])
    expected_topo = (2.2 - attributed_values(config.filtration, moved)[death_id]) ** 2
    assert breakdown.l_topo == pytest.approx(expected_topo, rel=1e-12)
    assert breakdown.l_topo >= 0.0 and breakdown.l_reg >= 0.0


def test_diagonal_matched_truth_keeps_fixed_cost():
    truth = GroundTruthDiagram(((0.0, 1.0), (0.0, 0.8)))
    config = snapshot(np.array([[0.0], [0.9]]), truth)
    assert config.diagonal_sources.tolist() == [1]
    weights = LossWeights(lambda_topo=1.0)
    breakdown = eval_loss(config, config.values, 0.0, truth, weights)
    assert breakdown.l_topo == pytest.approx(0.33, abs=1e-12)
    shifted = frozen_loss(config, np.array([[0.0], [0.95]]), truth, weights)
    assert shifted.l_topo == pytest.approx((1.0 - 0.95) ** 2 + 0.32, abs=1e-12)


def test_snapshot_matching_is_optimal(rng):
    points = rng.normal(size=(7, 2))
    truth = GroundTruthDiagram(((0.0, 0.6), (0.0, 0.4), (0.1, 0.3)))
    config = snapshot(points, truth)
    oracle = brute_force_match(truth, config.diagram, dim=0)
    assert config.matching.cost == pytest.approx(oracle.cost, abs=1e-12)
    assert set(config.matching.targets()) <= set(config.diagram.finite_indices(dim=0).tolist())


def test_stale_values_are_rejected():
    truth = GroundTruthDiagram(((0.0, 1.0),))
    config = snapshot(np.array([[0.0], [0.5], [2.0]]), truth)
    with pytest.raises(StaleConfigurationError):
        eval_loss(config, config.values[:3], 0.0, truth, LossWeights())
    moved = np.array([[0.0], [0.6], [2.0]])
    with pytest.raises(StaleConfigurationError):
        grad_loss(config, moved, np.zeros((3, 1)), lambda g: g, truth, LossWeights(lambda_topo=1.0))


def test_zero_weights_pass_supervision_through(rng):
    points = rng.normal(size=(5, 2))
    truth = make_ground_truth(PointCloud(points))
    config = snapshot(points, truth)
    supervision = rng.normal(size=points.shape)
    gradient = grad_loss(config, points, supervision, lambda g: g, truth, LossWeights())
    np.testing.assert_array_equal(gradient, supervision)


def numeric_gradient(loss, x, h=1e-5):
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        shifted = x.copy()
        shifted[index] += h
        up = loss(shifted)
        shifted[index] -= 2 * h
        down = loss(shifted)
        grad[index] = (up - down) / (2 * h)
    return grad


@pytest.mark.parametrize("seed", range(20))
def test_regularizer_gradient_on_three_points(seed):
    points = np.random.default_rng(seed).normal(size=(3, 2))
    truth = GroundTruthDiagram(((0.0, 1.0),))
    config = snapshot(points, truth)
    weights = LossWeights(lambda_topo=0.0, lambda_reg=1.0, k=2)
    analytic = grad_loss(config, points, np.zeros_like(points), lambda g: g, truth, weights)
    numeric = numeric_gradient(lambda x: frozen_loss(config, x, truth, weights).g, points)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_topology_gradient_through_points(seed):
    rng = np.random.default_rng(100 + seed)
    points = rng.normal(size=(8, 2))
    truth = GroundTruthDiagram(((0.0, 2.0), (0.0, 1.5)))
    config = snapshot(points, truth)
    weights = LossWeights(lambda_topo=0.7, lambda_reg=0.2, k=3)
    analytic = grad_loss(config, points, np.zeros_like(points), lambda g: g, truth, weights)
    numeric = numeric_gradient(lambda x: frozen_loss(config, x, truth, weights).g, points)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


@pytest.mark.parametrize("seed", range(10))
def test_full_loss_gradient_through_network(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10, 3))
    network = DenseNetwork((3, 6, 6, 6, 2), seed=seed, init_scale=0.5)
    affinities = compute_P(X, perplexity=3.0)
    truth = make_ground_truth(PointCloud(X))
    weights = LossWeights(lambda_topo=0.5, lambda_reg=0.1, k=2)

    W = network.get_parameters()
    Y = network.forward(X)
    _, supervision_grad = supervision_loss_and_grad(affinities, Y)
    config = snapshot(Y, truth)
    analytic = grad_loss(config, Y, supervision_grad, network.backward, truth, weights)

    def loss(parameters):
        network.set_parameters(parameters)
        Y_shifted = network.forward(X)
        supervision, _ = supervision_loss_and_grad(affinities, Y_shifted)
        return frozen_loss(config, Y_shifted, truth, weights, supervision).g

    indices = rng.choice(W.size, size=20, replace=False)
    h = 1e-5
    for index in indices:
        shifted = W.copy()
        shifted[index] += h
        up = loss(shifted)
        shifted[index] -= 2 * h
        down = loss(shifted)
        assert (up - down) / (2 * h) == pytest.approx(analytic[index], rel=1e-4, abs=1e-7)


def pairing_key(config):
    return (
        tuple(config.matched_sources),
        tuple(config.matched_birth_ids),
        tuple(config.matched_death_ids),
        tuple(config.diagonal_sources),
        tuple(sorted(zip(config.reg_birth_ids, config.reg_death_ids))),
    )


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_recomputed_loss(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.normal(size=(10, 3))
    network = DenseNetwork((3, 6, 6, 6, 2), seed=seed, init_scale=0.5)
    affinities = compute_P(X, perplexity=3.0)
    truth = make_ground_truth(PointCloud(X))
    weights = LossWeights(lambda_topo=0.5, lambda_reg=0.1, k=2)

    W = network.get_parameters()
    Y = network.forward(X)
    _, supervision_grad = supervision_loss_and_grad(affinities, Y)
    config = snapshot(Y, truth)
    analytic = grad_loss(config, Y, supervision_grad, network.backward, truth, weights)

    def recomputed(parameters):
        network.set_parameters(parameters)
        Y_shifted = network.forward(X)
        supervision, _ = supervision_loss_and_grad(affinities, Y_shifted)
        fresh = snapshot(Y_shifted, truth)
        return pairing_key(fresh), eval_loss(fresh, fresh.values, supervision, truth, weights).g

    h = 1e-5
    accepted = 0
    for index in rng.choice(W.size, size=20, replace=False):
        shifted = W.copy()
        shifted[index] += h
        key_up, up = recomputed(shifted)
        shifted[index] -= 2 * h
        key_down, down = recomputed(shifted)
        if key_up != pairing_key(config) or key_down != pairing_key(config):
            continue
        accepted += 1
        assert (up - down) / (2 * h) == pytest.approx(analytic[index], rel=1e-4, abs=1e-7)
    assert accepted >= 15
