import numpy as np
import pytest

from ndvr.aggregation import Level
from ndvr.errors import (
    DimensionError,
    EmptySignatureError,
    ParameterError,
    SingularMatrixError,
    ValidationError,
)
from ndvr.fsuml import (
    MetricMatrix,
    SsoParams,
    VideoSignature,
    coordinate_distance_matrix,
    frame_distance,
    metric_distance,
    pairwise_frame_distances,
    ranking_frame_distances,
    similarity_matrix,
    sso_smooth,
    video_distance,
    video_ranking_distance,
)


def oracle_sso(w):
    """Step-by-step dense reference: D^-1, product, diagonal normalization."""
    w = np.asarray(w, dtype=np.float64)
    d = np.diag(w.sum(axis=1))
    p = np.linalg.inv(d) @ w
    w1 = w @ p
    delta = np.diag(np.diagonal(w1))
    return np.linalg.inv(delta) @ w1


def test_coordinate_distance_diagonal_zero(rng):
    q = rng.standard_normal(16)
    assert np.all(np.diagonal(coordinate_distance_matrix(q, q)) == 0.0)


def test_coordinate_distance_hand_case():
    out = coordinate_distance_matrix([1.0, 2.0], [0.0, 4.0])
    assert np.array_equal(out, np.array([[1.0, 3.0], [2.0, 2.0]]))


def test_coordinate_distance_non_negative(rng):
    q, g = rng.standard_normal(10), rng.standard_normal(10)
    assert np.all(coordinate_distance_matrix(q, g) >= 0)


def test_coordinate_distance_dim_mismatch():
    with pytest.raises(DimensionError):
        coordinate_distance_matrix(np.ones(3), np.ones(4))


def test_similarity_all_zero_distances():
    w = similarity_matrix(np.zeros((4, 4)), SsoParams(sigma=1.0))
    assert np.array_equal(w, np.ones((4, 4)))


def test_similarity_analytic_point():
    params = SsoParams(k=2.0, sigma=3.0)
    dist = np.full((2, 2), np.sqrt(2.0 * 9.0))
    w = similarity_matrix(dist, params)
    assert np.allclose(w, np.exp(-1.0), atol=1e-15)


def test_similarity_range(rng):
    dist = np.abs(rng.standard_normal((8, 8)))
    w = similarity_matrix(dist, SsoParams())
    assert np.all(w > 0) and np.all(w <= 1)


def test_similarity_rejects_bad_input():
    with pytest.raises(ValidationError):
        similarity_matrix(np.full((2, 2), np.nan), SsoParams())
    with pytest.raises(ValidationError):
        similarity_matrix(np.array([[-1.0, 0.0], [0.0, 0.0]]), SsoParams())


def test_sso_identity_fixed_point():
    m = sso_smooth(np.eye(4), SsoParams())
    assert np.array_equal(m.m_star, np.eye(4))


def test_sso_all_ones():
    m = sso_smooth(np.ones((3, 3)), SsoParams())
    assert np.array_equal(m.m_star, np.ones((3, 3)))


def test_sso_matches_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(2, 12))
        w = rng.uniform(0.05, 1.0, size=(n, n))
        m = sso_smooth(w, SsoParams())
        assert np.allclose(m.m_star, oracle_sso(w), rtol=1e-12, atol=1e-12)
        assert np.all(np.diagonal(m.m_star) == 1.0)


def test_sso_smoothing_kernel_row_stochastic(rng):
    w = rng.uniform(0.1, 1.0, size=(9, 9))
    rows = (w / w.sum(axis=1, keepdims=True)).sum(axis=1)
    assert np.max(np.abs(rows - 1.0)) < 1e-12


def test_sso_zero_row_rejected():
    with pytest.raises(SingularMatrixError):
        sso_smooth(np.array([[0.0, 0.0], [1.0, 1.0]]), SsoParams())


def test_metric_zero_for_equal_vectors(rng):
    q = rng.standard_normal(6)
    m = sso_smooth(np.ones((6, 6)), SsoParams())
    assert metric_distance(q, q, m) == 0.0


def test_metric_identity_is_squared_euclidean(rng):
    q, g = rng.standard_normal(8), rng.standard_normal(8)
    m = MetricMatrix(np.eye(8))
    assert abs(metric_distance(q, g, m) - np.sum((q - g) ** 2)) < 1e-10


def test_metric_hand_case():
    m = MetricMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert metric_distance([1.0, 0.0], [0.0, 1.0], m) == 1.0


def test_metric_floors_negative_form():
    m = MetricMatrix(np.array([[1.0, 3.0], [3.0, 1.0]]))
    # raw form is 1 - 3 - 3 + 1 = -4; rank keys must stay non-negative
    assert metric_distance([1.0, 0.0], [0.0, 1.0], m) == 0.0


def test_metric_dimension_mismatch():
    m = MetricMatrix(np.eye(3))
    with pytest.raises(DimensionError):
        metric_distance(np.ones(2), np.ones(2), m)


def test_metric_matrix_validation():
    with pytest.raises(ValidationError):
        MetricMatrix(np.array([[0.5, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        MetricMatrix(np.full((2, 2), np.nan))
    with pytest.raises(DimensionError):
        MetricMatrix(np.ones((2, 3)))


def test_constant_similarity_degenerates_to_projection():
    # equal coordinate distances: q = (0,0,0), g = (2,2,2)
    q = np.zeros(3)
    g = np.full(3, 2.0)
    params = SsoParams(sigma=1.7)
    dist = coordinate_distance_matrix(q, g)
    w = similarity_matrix(dist, params)
    m = sso_smooth(w, params)
    assert np.allclose(m.m_star, np.ones((3, 3)), atol=1e-15)
    assert abs(metric_distance(q, g, m) - 36.0) < 1e-12  # (sum of deltas)^2


def test_frame_distance_zero_and_deterministic(rng):
    q = rng.standard_normal(12)
    assert frame_distance(q, q) == 0.0
    g = rng.standard_normal(12)
    assert frame_distance(q, g) == frame_distance(q, g)


def test_frame_distance_matches_composed_oracle(rng):
    params = SsoParams(k=1.5, sigma=0.9)
    for _ in range(20):
        q, g = rng.standard_normal(10), rng.standard_normal(10)
        dist = np.abs(q[:, None] - g[None, :])
        w = np.exp(-(dist**2) / (params.k * params.sigma**2))
        m_star = oracle_sso(w)
        delta = q - g
        expected = max(0.0, float(delta @ m_star @ delta))
        assert abs(frame_distance(q, g, params) - expected) < 1e-12


@pytest.mark.parametrize("sigma", ["rms", "median", 0.75])
def test_pairwise_equals_per_pair_loop(rng, sigma):
    params = SsoParams(sigma=sigma)
    q_stack = rng.standard_normal((3, 9))
    g_stack = rng.standard_normal((5, 9))
    block = pairwise_frame_distances(q_stack, g_stack, params)
    for i in range(3):
        for j in range(5):
            assert abs(block[i, j] - frame_distance(q_stack[i], g_stack[j], params)) < 1e-9


def test_ranking_distance_properties(rng):
    params = SsoParams()
    q_stack = rng.standard_normal((4, 8))
    block = ranking_frame_distances(q_stack, q_stack, params)
    assert np.all(block >= 0)
    assert np.all(np.diagonal(block) == 0.0)
    off = block[~np.eye(4, dtype=bool)]
    assert np.all(off > 0)


def test_ranking_distance_matches_magnitude_oracle(rng):
    params = SsoParams(k=2.0, sigma=1.1)
    for _ in range(10):
        q, g = rng.standard_normal(7), rng.standard_normal(7)
        dist = np.abs(q[:, None] - g[None, :])
        w = np.exp(-(dist**2) / (params.k * params.sigma**2))
        m_star = oracle_sso(w)
        mag = np.abs(q - g)
        expected = float(mag @ m_star @ mag)
        got = ranking_frame_distances(q[None, :], g[None, :], params)[0, 0]
        assert abs(got - expected) < 1e-9


def make_signature(vid, ulf, llf=None):
    levels = {Level.ULF: np.asarray(ulf)}
    levels[Level.LLF] = np.asarray(llf if llf is not None else ulf)
    return VideoSignature(video_id=vid, levels=levels)


def test_video_distance_same_signature_zero(rng):
    sig = make_signature("a", rng.standard_normal((3, 6)))
    assert video_distance(sig, sig, Level.ULF) == 0.0


def test_video_distance_single_keyframe_equals_frame_distance(rng):
    q = rng.standard_normal(6)
    g = rng.standard_normal(6)
    a = make_signature("a", q[None, :])
    b = make_signature("b", g[None, :])
    params = SsoParams()
    assert abs(video_distance(a, b, Level.ULF, params) - frame_distance(q, g, params)) < 1e-9


def test_video_distance_is_mean_of_min(monkeypatch, rng):
    import ndvr.fsuml as fsuml_mod

    monkeypatch.setattr(
        fsuml_mod,
        "pairwise_frame_distances",
        lambda q, g, params: np.array([[1.0, 4.0], [3.0, 2.0]]),
    )
    a = make_signature("a", rng.standard_normal((2, 4)))
    b = make_signature("b", rng.standard_normal((2, 4)))
    assert fsuml_mod.video_distance(a, b, Level.ULF) == 1.5


def test_video_ranking_distance_consistent(rng):
    a = make_signature("a", rng.standard_normal((2, 6)))
    b = make_signature("b", rng.standard_normal((3, 6)))
    block = ranking_frame_distances(a.at(Level.ULF), b.at(Level.ULF))
    assert abs(video_ranking_distance(a, b, Level.ULF) - block.min(axis=1).mean()) < 1e-12


def test_empty_signature_rejected(rng):
    sig = make_signature("a", rng.standard_normal((2, 4)))
    empty = VideoSignature("b", {Level.ULF: np.zeros((0, 4))})
    with pytest.raises(EmptySignatureError):
        video_distance(sig, empty, Level.ULF)
    missing_level = VideoSignature("c", {Level.ULF: np.ones((1, 4))})
    with pytest.raises(EmptySignatureError):
        missing_level.at(Level.LLF)


def test_sso_params_validation():
    with pytest.raises(ParameterError):
        SsoParams(k=0.0)
    with pytest.raises(ParameterError):
        SsoParams(sigma=-1.0)
    with pytest.raises(ParameterError):
        SsoParams(sigma="bogus")
    with pytest.raises(ParameterError):
        SsoParams(t=2)
