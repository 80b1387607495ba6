# ** Base Modules
import numpy as np
import pytest

# ** App Modules
from app.exceptions.custom_exceptions import ConfigError, DimensionError, GeometryError
from app.exceptions.dataset_exceptions import AnnotationConsistencyError
from app.schemas.model_config import ModelConfig, OptimizerConfig
from app.services.asn.atl import atl_forward
from app.services.asn.gradcheck import toy_config
from app.services.asn.losses import GroundTruth, scd_loss
from app.services.asn.model import arp_forward, build_model
from app.services.tensor import ops
from app.services.tensor.optim import SGD
from app.services.tensor.tensor import Tensor, no_grad


def images(config, extent, batch=1, seed=0):
    rng = np.random.default_rng(seed)
    shape = (batch, config.input_channels, extent, extent)
    return rng.uniform(size=shape), rng.uniform(size=shape)


def labels(num_classes, extent, batch=1, seed=0):
    rng = np.random.default_rng(seed)
    changed = rng.random((batch, extent, extent)) < 0.3
    label1 = np.where(changed, rng.integers(1, num_classes + 1, size=changed.shape), 0)
    label2 = np.where(changed, rng.integers(1, num_classes + 1, size=changed.shape), 0)
    return GroundTruth.from_labels(label1, label2)


def test_head_shapes_follow_the_input():
    config = toy_config(num_classes=4, input_channels=3)
    model = build_model(config)
    image1, image2 = images(config, 64, batch=2)
    with no_grad():
        outputs = model(image1, image2)
    assert outputs.m1_raw.shape == (2, 5, 64, 64)
    assert outputs.m2_raw.shape == (2, 5, 64, 64)
    assert outputs.c_raw.shape == (2, 2, 64, 64)


def test_default_configuration_builds_every_branch():
    config = ModelConfig(num_classes=6)
    model = build_model(config)
    image1, image2 = images(config, config.stride_product)
    with no_grad():
        outputs = model(image1, image2)
    weights = outputs.weights
    assert weights.v1.shape == (1, 15)
    assert weights.w1.shape == (1, 3) and weights.wc.shape == (1, 3)
    assert len(outputs.pair_maps_spatial) == 27
    assert len(outputs.pair_maps_repr) == 9
    assert outputs.m1_raw.shape == (1, 7, 16, 16)


def test_branch_weights_lie_on_the_simplex(tiny_config):
    model = build_model(tiny_config)
    with no_grad():
        outputs = model(*images(tiny_config, 16, batch=3))
    for vector in outputs.weights.vectors().values():
        assert np.all(vector >= 0)
        np.testing.assert_allclose(vector.sum(axis=1), 1.0, atol=1e-12)


def test_identical_inputs_zero_the_diagonal_pairs(tiny_config):
    model = build_model(tiny_config)
    image, _ = images(tiny_config, 16)
    with no_grad():
        outputs = model(image, image.copy())
    for (j1, j2, _), pair in outputs.pair_maps_spatial.items():
        if j1 == j2:
            np.testing.assert_array_equal(pair.data, 0.0)
    for (k1, k2), pair in outputs.pair_maps_repr.items():
        if k1 == k2:
            np.testing.assert_array_equal(pair.data, 0.0)
    np.testing.assert_array_equal(outputs.m1_raw.data, outputs.m2_raw.data)


def test_swapping_dates_negates_transposed_spatial_pairs(tiny_config):
    model = build_model(tiny_config)
    image1, image2 = images(tiny_config, 16)
    with no_grad():
        forward = model(image1, image2)
        swapped = model(image2, image1)
    for (j1, j2, k), pair in swapped.pair_maps_spatial.items():
        np.testing.assert_allclose(pair.data, -forward.pair_maps_spatial[(j2, j1, k)].data, atol=1e-12)
    np.testing.assert_allclose(swapped.m1_raw.data, forward.m2_raw.data, atol=1e-12)
    np.testing.assert_allclose(swapped.m2_raw.data, forward.m1_raw.data, atol=1e-12)


def test_swapping_date_pyramids_negates_transposed_representation_pairs(tiny_config):
    model = build_model(tiny_config)
    image1, image2 = images(tiny_config, 16)
    with no_grad():
        outputs = model(image1, image2)
        stages1, stages2 = model.encoder(Tensor(image1)), model.encoder(Tensor(image2))
        stages_c = model.change_encoder(ops.concat([Tensor(image1), Tensor(image2)], axis=1), stages1, stages2)
        args = (model, stages_c[-1], stages_c[0])
        forward = arp_forward(*args, outputs.spatial1, outputs.spatial2, outputs.weights)
        swapped = arp_forward(*args, outputs.spatial2, outputs.spatial1, outputs.weights)
    for (k1, k2), pair in swapped.items():
        np.testing.assert_allclose(pair.data, -forward[(k2, k1)].data, atol=1e-12)
        np.testing.assert_allclose(forward[(k1, k2)].data, outputs.pair_maps_repr[(k1, k2)].data, atol=1e-12)


@pytest.mark.parametrize("overrides, spatial, representation", [
    ({}, 18, 4),
    ({"asymmetric_pairs": False}, 6, 2),
    ({"use_arp": False}, 18, 0),
    ({"use_arp": False, "use_asp": False}, 0, 0),
])
def test_ablation_switches_change_the_pair_counts(overrides, spatial, representation):
    config = toy_config(**overrides)
    model = build_model(config)
    with no_grad():
        outputs = model(*images(config, 8))
    assert len(outputs.pair_maps_spatial) == spatial
    assert len(outputs.pair_maps_repr) == representation
    assert outputs.c_raw.shape == (1, 2, 8, 8)
    assert (outputs.weights is None) == (not config.use_asp)


def test_representation_pyramid_needs_the_spatial_pyramid():
    with pytest.raises(ConfigError):
        toy_config(use_asp=False, use_arp=True)


def test_same_seed_builds_the_same_network(tiny_config):
    first, second = build_model(tiny_config), build_model(tiny_config)
    inputs = images(tiny_config, 16)
    with no_grad():
        a, b = first(*inputs), second(*inputs)
    np.testing.assert_array_equal(a.c_raw.data, b.c_raw.data)
    np.testing.assert_array_equal(a.m1_raw.data, b.m1_raw.data)


def test_input_geometry_is_checked(tiny_config):
    model = build_model(tiny_config)
    with pytest.raises(GeometryError):
        model(*images(tiny_config, 18))
    image1, _ = images(tiny_config, 16)
    with pytest.raises(DimensionError):
        model(image1, image1[:, :2])


def test_loss_weights_combine_linearly(tiny_config):
    model = build_model(tiny_config)
    gt = labels(tiny_config.num_classes, 16)
    with no_grad():
        outputs = model(*images(tiny_config, 16))
        only_change = scd_loss(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, gt, 0.0, 0.0)
        weighted = scd_loss(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, gt, 2.0, 3.0)
    assert only_change.total.item() == pytest.approx(only_change.change)
    expected = 2.0 * weighted.semantic1 + 3.0 * weighted.semantic2 + weighted.change
    assert weighted.total.item() == pytest.approx(expected, rel=1e-12)


def test_ground_truth_rejects_one_sided_change():
    with pytest.raises(AnnotationConsistencyError):
        GroundTruth.from_labels(np.array([[[1, 0]]]), np.array([[[0, 0]]]))


def test_atl_with_zero_gamma_is_identity(tiny_config):
    model = build_model(tiny_config)
    for head in (model.psi1, model.psi2):
        head.second.weight.data = np.random.default_rng(0).normal(size=head.second.weight.shape)
    with no_grad():
        outputs = model(*images(tiny_config, 16))
        refined = atl_forward(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, 0.0, model.psi1, model.psi2)
        corrected = atl_forward(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, 0.5, model.psi1, model.psi2)
    np.testing.assert_array_equal(refined.m1_raw.data, outputs.m1_raw.data)
    np.testing.assert_array_equal(refined.c_raw.data, outputs.c_raw.data)
    np.testing.assert_allclose(refined.c_prob.data, ops.softmax(outputs.c_raw, axis=1).data)
    assert not np.allclose(corrected.m1_raw.data, outputs.m1_raw.data)


def test_fresh_atl_heads_start_as_identity(tiny_config):
    model = build_model(tiny_config)
    with no_grad():
        outputs = model(*images(tiny_config, 16))
        refined = atl_forward(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, 0.5, model.psi1, model.psi2)
    np.testing.assert_allclose(refined.m2_raw.data, outputs.m2_raw.data)
    np.testing.assert_allclose(refined.c_raw.data, outputs.c_raw.data)


def test_atl_step_only_moves_the_heads(tiny_config):
    model = build_model(tiny_config)
    for head in (model.psi1, model.psi2):
        head.second.weight.data = np.random.default_rng(1).normal(scale=0.1, size=head.second.weight.shape)
    model.freeze_for_atl()
    before = model.state_dict()
    optimizer = SGD(model.parameters(), OptimizerConfig(total_steps=1))
    optimizer.zero_grad()
    outputs = model(*images(tiny_config, 16))
    refined = atl_forward(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, 0.5, model.psi1, model.psi2)
    scd_loss(refined.m1_raw, refined.m2_raw, refined.c_raw, labels(3, 16), 1.0, 1.0).total.backward()
    optimizer.step(0)
    after = model.state_dict()
    moved = {name for name in before if not np.array_equal(before[name], after[name])}
    assert moved
    assert all(name.startswith(("psi1.", "psi2.")) for name in moved)
    assert {id(param) for param in model.atl_parameters()} == \
        {id(param) for param in model.parameters() if param.requires_grad}
