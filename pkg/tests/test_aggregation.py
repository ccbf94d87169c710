import json

import numpy as np
import pytest

from ndvr.aggregation import Level, build_llf, build_ulf, mac_pool
from ndvr.errors import DegenerateInputError, DimensionError, ValidationError

from conftest import FIXTURES

# AlexNet conv1..conv5 and GoogLeNet inception output channel counts
ALEXNET_CONV_DIMS = (96, 256, 384, 384, 256)
GOOGLENET_CONV_DIMS = (256, 480, 512, 512, 512, 528, 832, 832, 1024)


def brute_mac(tensor):
    h, w, c = tensor.shape
    out = np.full(c, -np.inf)
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                if tensor[i, j, ch] > out[ch]:
                    out[ch] = tensor[i, j, ch]
    return out


def test_mac_1x1_identity():
    tensor = np.array([[[3.0, -1.0, 0.5]]])
    assert np.array_equal(mac_pool(tensor), np.array([3.0, -1.0, 0.5]))


def test_mac_2x2_single_channel():
    tensor = np.array([1.0, 5.0, -2.0, 0.0]).reshape(2, 2, 1)
    assert np.array_equal(mac_pool(tensor), np.array([5.0]))


def test_mac_against_brute_force(rng):
    tensor = rng.standard_normal((7, 7, 16))
    assert np.array_equal(mac_pool(tensor), brute_mac(tensor))


def test_mac_permutation_invariant(rng):
    tensor = rng.standard_normal((4, 5, 3))
    flat = tensor.reshape(-1, 3)
    shuffled = flat[rng.permutation(flat.shape[0])].reshape(4, 5, 3)
    assert np.array_equal(mac_pool(tensor), mac_pool(shuffled))


def test_mac_monotone(rng):
    tensor = rng.standard_normal((3, 3, 4))
    before = mac_pool(tensor)
    bumped = tensor.copy()
    bumped[1, 2, 2] += 5.0
    after = mac_pool(bumped)
    assert np.all(after >= before)


def test_mac_rejects_bad_input():
    with pytest.raises(DimensionError):
        mac_pool(np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        mac_pool(np.zeros((0, 2, 2)))
    with pytest.raises(ValidationError):
        mac_pool(np.full((1, 1, 1), np.nan))


def test_mac_conformance_fixture():
    payload = json.loads((FIXTURES / "mac_conformance.json").read_text())
    for case in payload["cases"]:
        tensor = np.array(case["tensor"]).reshape(case["shape"])
        pooled = mac_pool(tensor)
        assert np.allclose(pooled, case["pooled"], atol=payload["tolerance"])


def test_llf_hand_case():
    desc = build_llf([np.array([2.0, 0.0]), np.array([0.0, 2.0, 2.0])])
    centered = np.array([0.8, -1.2, -1.2, 0.8, 0.8])
    assert np.allclose(desc.vector, centered / np.sqrt(4.8), atol=1e-12)
    assert desc.level is Level.LLF


@pytest.mark.parametrize(
    "dims,total",
    [(ALEXNET_CONV_DIMS, 1376), (GOOGLENET_CONV_DIMS, 5488)],
)
def test_llf_dimension_matches_architectures(rng, dims, total):
    assert sum(dims) == total
    desc = build_llf([rng.standard_normal(d) for d in dims])
    assert desc.vector.shape == (total,)


def test_llf_centered_before_normalization(rng):
    for _ in range(10):
        layers = [rng.standard_normal(int(rng.integers(2, 20))) for _ in range(3)]
        desc = build_llf(layers)
        n = desc.vector.shape[0]
        # the centered pre-image sums to ~0, and scaling preserves that
        assert abs(desc.vector.sum()) <= 1e-6 * n
        assert abs(np.linalg.norm(desc.vector) - 1.0) <= 1e-6


def test_llf_constant_concat_degenerate():
    with pytest.raises(DegenerateInputError):
        build_llf([np.full(3, 2.5), np.full(2, 2.5)])


def test_llf_needs_layers():
    with pytest.raises(DimensionError):
        build_llf([])


def test_ulf_hand_case():
    desc = build_ulf(np.array([3.0, 4.0]))
    assert np.allclose(desc.vector, [0.6, 0.8], atol=1e-12)
    assert desc.level is Level.ULF


@pytest.mark.parametrize("dim", [4096, 1024])
def test_ulf_architecture_dims(rng, dim):
    desc = build_ulf(rng.standard_normal(dim))
    assert desc.vector.shape == (dim,)
    assert abs(np.linalg.norm(desc.vector) - 1.0) <= 1e-6


def test_ulf_zero_vector_degenerate():
    with pytest.raises(DegenerateInputError):
        build_ulf(np.zeros(5))


def test_ulf_rejects_non_finite():
    with pytest.raises(ValidationError):
        build_ulf(np.array([1.0, np.inf]))


def test_descriptor_norm_validated():
    from ndvr.aggregation import FrameDescriptor

    with pytest.raises(ValidationError):
        FrameDescriptor(Level.ULF, np.array([1.0, 1.0]))
