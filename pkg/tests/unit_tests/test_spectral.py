import logging

import numpy as np
import pytest

from interacting_urns.errors import (
    InconsistentClassification,
    NotApplicable,
    PositiveEntry,
    SingularK,
)
from interacting_urns.graph_core import (
    BipartitenessReport,
    bipartiteness,
    build_graph,
    communication_classes,
    hierarchy_decomposition,
    validate_matrix,
)
from interacting_urns.spectral import (
    Attitude,
    LimitKind,
    affine_prediction,
    closed_class_limit,
    drift_system,
    forced_limit,
    gershgorin_report,
    hierarchical_limit,
    invertibility,
    predict_limits,
)
from tests.util import util

logger = logging.getLogger(__name__)

COMPETITIVE = Attitude.COMPETITIVE
COOPERATIVE = Attitude.COOPERATIVE


def only_class(weights):
    (cls,) = communication_classes(build_graph(validate_matrix(weights)))
    return cls


def test_two_cycle_drift():
    drift = drift_system(util.cycle_matrix(2), COMPETITIVE)
    np.testing.assert_array_equal(drift.K, [[-1, -1], [-1, -1]])
    np.testing.assert_array_equal(drift.c, [1, 1])
    assert not drift.diagnostics.invertible
    assert drift.diagnostics.bipartite_singular
    assert drift.equilibrium is None


def test_three_cycle_drift_is_invertible():
    drift = drift_system(util.cycle_matrix(3), COMPETITIVE)
    np.testing.assert_array_equal(drift.K, -np.eye(3) - util.cycle_matrix(3))
    assert np.isclose(np.linalg.det(drift.K), -2.0)
    assert drift.diagnostics.invertible
    assert not drift.diagnostics.bipartite_singular
    np.testing.assert_allclose(drift.equilibrium, [0.5, 0.5, 0.5])


def test_substochastic_drift():
    block = [[0.3, 0.3], [0.2, 0.5]]
    drift = drift_system(block, COMPETITIVE, forcing=[1.0, 0.0])
    np.testing.assert_allclose(drift.K, [[-0.7, -0.3], [-0.2, -0.5]])
    np.testing.assert_allclose(drift.c, [0.7, 0.2])
    assert drift.diagnostics.strictly_dominant_rows == (0, 1)
    assert drift.diagnostics.invertible
    assert drift.diagnostics.invertibility_certificate


def test_cooperative_drift():
    block = util.cooperative_triangle()
    drift = drift_system(block, COOPERATIVE)
    np.testing.assert_allclose(drift.K, block - np.eye(3))
    np.testing.assert_array_equal(drift.c, np.zeros(3))
    assert drift.diagnostics.diagonally_dominant
    assert drift.diagnostics.table_variant_invertible is None


def test_competitive_reports_table_variant():
    # lower singleton of the two-class example: 2 * 0.5 + 1 - 0.5 = 1.5
    drift = drift_system(
        [[0.5]], COMPETITIVE, row_sums=[1.0], class_key=(1, 0)
    )
    assert drift.diagnostics.table_variant_invertible is True
    assert not drift.diagnostics.sign_discrepancy


def test_closed_classes_skip_table_variant(caplog):
    with caplog.at_level(logging.WARNING):
        for n in (2, 3, 4):
            drift = drift_system(util.cycle_matrix(n), COMPETITIVE)
            assert drift.diagnostics.table_variant_invertible is None
            assert not drift.diagnostics.sign_discrepancy
    assert "2diag(A)+I-A" not in caplog.text


def test_stochastic_rows_tie_in_gershgorin():
    drift = drift_system(util.cycle_matrix(3), COMPETITIVE)
    report = gershgorin_report(drift.K)
    assert report.diagonally_dominant
    assert report.strictly_dominant_rows == ()
    assert report.stability_certificate
    assert not report.invertibility_certificate


def test_gershgorin_strict_rows():
    report = gershgorin_report([[-0.7, -0.3], [-0.2, -0.5]])
    assert report.strictly_dominant_rows == (0, 1)
    assert report.invertibility_certificate


def test_gershgorin_ties_without_certificate():
    report = gershgorin_report([[-1, -1], [-1, -1]])
    assert report.diagonally_dominant
    assert report.strictly_dominant_rows == ()
    assert not report.invertibility_certificate


def test_gershgorin_rejects_positive_entries():
    with pytest.raises(PositiveEntry) as e:
        gershgorin_report([[-1.0, 0.5], [0.0, -1.0]])
    assert (e.value.i, e.value.j) == (0, 1)


@pytest.mark.parametrize("n, expected", [(2, False), (3, True), (5, True)])
def test_invertibility_of_cycles(n, expected):
    weights = util.cycle_matrix(n)
    drift = drift_system(weights, COMPETITIVE)
    report = BipartitenessReport(n % 2 == 0, None, n)
    assert invertibility(drift.K, report) is expected


def test_invertibility_flags_disagreement():
    drift = drift_system(util.cycle_matrix(3), COMPETITIVE)
    lying = BipartitenessReport(True, ((0,), (1, 2)), 2)
    with pytest.raises(InconsistentClassification):
        invertibility(drift.K, lying)


def test_closed_class_limits():
    triangle = only_class(util.cycle_matrix(3))
    prediction = closed_class_limit(triangle, COMPETITIVE, bipartiteness(triangle))
    assert prediction.kind is LimitKind.DETERMINISTIC_HALF
    np.testing.assert_array_equal(prediction.value, [0.5, 0.5, 0.5])

    pair = only_class(util.cycle_matrix(2))
    prediction = closed_class_limit(pair, COMPETITIVE, bipartiteness(pair))
    assert prediction.kind is LimitKind.RANDOM_ANTI_SYNCHRONIZED
    assert prediction.partition == ((0,), (1,))
    with pytest.raises(NotApplicable):
        prediction.evaluate({})

    cooperative = only_class(util.cooperative_triangle())
    prediction = closed_class_limit(
        cooperative, COOPERATIVE, bipartiteness(cooperative)
    )
    assert prediction.kind is LimitKind.RANDOM_SYNCHRONIZED


def test_pure_polya_singleton_is_random_synchronized():
    singleton = only_class([[1.0]])
    for attitude in Attitude:
        prediction = closed_class_limit(singleton, attitude, bipartiteness(singleton))
        assert prediction.kind is LimitKind.RANDOM_SYNCHRONIZED


@pytest.mark.parametrize(
    "K, c, expected",
    [
        ([[-0.5]], [0.5], [1.0]),
        ([[-0.7, -0.3], [-0.2, -0.5]], [0.7, 0.2], [1.0, 0.0]),
    ],
)
def test_forced_limit(K, c, expected):
    x = forced_limit(K, c)
    np.testing.assert_allclose(x, expected, atol=1e-12)
    assert np.abs(np.asarray(K) @ x + c).max() < 1e-9


def test_forced_limit_symmetric_half():
    block = [[0.25, 0.25], [0.25, 0.25]]
    drift = drift_system(block, COMPETITIVE, forcing=[0.5, 0.5])
    np.testing.assert_allclose(forced_limit(drift.K, drift.c), [0.5, 0.5])


def test_forced_limit_singular():
    with pytest.raises(SingularK):
        forced_limit([[-1, -1], [-1, -1]], [1, 1])


def test_forced_limit_out_of_range_warns(caplog):
    with caplog.at_level(logging.WARNING):
        forced_limit([[-1.0]], [2.0])
    assert "leaves [0, 1]" in caplog.text


def test_hierarchical_limit_ignores_level0_realisation():
    decomposition = hierarchy_decomposition(
        validate_matrix(util.two_cycle_feeds_singleton())
    )
    attitudes = {(0, 0): COMPETITIVE, (1, 0): COMPETITIVE}
    for z in (0.0, 0.3, 0.9):
        values = hierarchical_limit(
            decomposition, attitudes, {(0, 0): np.array([z, 1 - z])}
        )
        np.testing.assert_allclose(values[(1, 0)], [0.5])


def test_cooperative_follower_of_half_sources():
    weights = np.zeros((4, 4))
    weights[0, 1] = weights[1, 2] = weights[2, 0] = 1.0
    weights[3] = [0.2, 0.2, 0.2, 0.4]
    decomposition = hierarchy_decomposition(validate_matrix(weights))
    attitudes = {(0, 0): COMPETITIVE, (1, 0): COOPERATIVE}
    values = hierarchical_limit(
        decomposition, attitudes, {(0, 0): np.full(3, 0.5)}
    )
    np.testing.assert_allclose(values[(1, 0)], [0.5])


def test_stubborn_source_is_copied():
    weights = [[1.0, 0.0], [1.0, 0.0]]
    decomposition = hierarchy_decomposition(validate_matrix(weights))
    attitudes = {(0, 0): COOPERATIVE, (1, 0): COOPERATIVE}
    values = hierarchical_limit(decomposition, attitudes, {(0, 0): [1.0]})
    np.testing.assert_allclose(values[(1, 0)], [1.0])


def test_affine_prediction_carries_signed_coupling():
    decomposition = hierarchy_decomposition(
        validate_matrix(util.two_cycle_feeds_singleton())
    )
    prediction = affine_prediction(decomposition, (1, 0), COMPETITIVE)
    assert prediction.kind is LimitKind.AFFINE_OF_LOWER_LEVELS
    ((source, coupling),) = prediction.dependencies
    assert source == (0, 0)
    np.testing.assert_array_equal(coupling, [[-0.25, -0.25]])
    np.testing.assert_allclose(prediction.k_inverse_applied, [[2.0]])
    np.testing.assert_allclose(prediction.constant, [1.0])


def test_hierarchical_limit_order_invariant():
    weights = util.two_cycle_feeds_singleton()
    permutation = [2, 0, 1]
    permuted = weights[np.ix_(permutation, permutation)]
    original = hierarchy_decomposition(validate_matrix(weights))
    relabelled = hierarchy_decomposition(validate_matrix(permuted))
    attitudes = {(0, 0): COMPETITIVE, (1, 0): COMPETITIVE}

    z = 0.2
    first = hierarchical_limit(original, attitudes, {(0, 0): [z, 1 - z]})
    # agents 0, 1 of the original are 1, 2 after relabelling
    second = hierarchical_limit(relabelled, attitudes, {(0, 0): [z, 1 - z]})
    np.testing.assert_allclose(first[(1, 0)], second[(1, 0)])
    assert relabelled.class_at((1, 0)).members == (0,)


def test_predict_limits_forced_and_stubborn():
    weights = [[0.3, 0.3, 0.0], [0.2, 0.5, 0.0], [0.0, 0.0, 1.0]]
    decomposition = hierarchy_decomposition(validate_matrix(weights))
    attitudes = {key: COMPETITIVE for key, _ in decomposition.classes()}
    predictions = predict_limits(
        decomposition,
        attitudes,
        forcing_limits=[1.0, 0.0, 0.0],
        stubborn={2: 0.25},
    )
    forced, stubborn = predictions[(0, 0)], predictions[(0, 1)]
    assert forced.kind is LimitKind.FORCED
    np.testing.assert_allclose(forced.value, [1.0, 0.0], atol=1e-12)
    assert stubborn.kind is LimitKind.STUBBORN
    np.testing.assert_array_equal(stubborn.value, [0.25])


def test_half_is_a_fixed_point_of_stochastic_classes():
    rng = np.random.default_rng(3)
    for seed in rng.integers(0, 2**32, 20):
        weights = util.random_irreducible_class(5, False, int(seed), True)
        drift = drift_system(weights, COMPETITIVE)
        assert np.abs(drift.residual(np.full(5, 0.5))).max() < 1e-12
