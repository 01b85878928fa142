import numpy as np
import pytest

from mvcons.analysis import EmbeddingSet, read_embeddings_csv
from mvcons.errors import ConfigurationError, DimensionError
from mvcons.tsne import (
    EXAGGERATION_ITERS, check_perplexity, clamp_perplexity, conditional_probabilities, joint_probabilities,
    kl_divergence, kl_gradient_check, student_t_affinities, tsne, write_tsne_csv,
)
from scipy.spatial.distance import pdist, squareform


def assert_joint_distribution(M):
    assert np.allclose(M, M.T)
    assert np.all(np.diag(M) == 0)
    assert np.all(M[~np.eye(len(M), dtype=bool)] > 0)
    assert M.sum() == pytest.approx(1.0, abs=1e-12)


def test_bisection_hits_target_perplexity(rng):
    X = rng.normal(size=(30, 6))
    cond, betas = conditional_probabilities(squareform(pdist(X, "sqeuclidean")), 5.0)
    assert np.allclose(cond.sum(axis=1), 1.0)
    assert np.all(np.diag(cond) == 0) and np.all(betas > 0)
    for row in cond:
        p = row[row > 0]
        assert np.exp(-np.sum(p * np.log(p))) == pytest.approx(5.0, rel=1e-4)


def test_affinity_invariants(rng):
    X = rng.normal(size=(15, 4))
    assert_joint_distribution(joint_probabilities(X, 4.0))
    assert_joint_distribution(student_t_affinities(rng.normal(size=(15, 2))))


def test_kl_of_identical_distributions_is_zero(rng):
    P = joint_probabilities(rng.normal(size=(10, 3)), 3.0)
    assert kl_divergence(P, P) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence(P, student_t_affinities(rng.normal(size=(10, 2)))) > 0


def test_kl_gradient_matches_finite_differences():
    assert kl_gradient_check(seed=0) < 1e-4


def test_optimisation_lowers_kl(rng):
    X = np.concatenate([rng.normal(size=(25, 8)), rng.normal(5.0, 1.0, size=(25, 8))])
    result = tsne(X, perplexity=10.0, iterations=300, seed=0)
    assert result.embedding.shape == (50, 2)
    assert np.all(np.isfinite(result.embedding))
    assert result.kl_final < result.kl_initial
    assert result.iterations == 300


def test_square_corners_at_minimum_perplexity():
    corners = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    assert_joint_distribution(joint_probabilities(corners, 1.0))
    result = tsne(corners, perplexity=1.0, iterations=EXAGGERATION_ITERS + 150, seed=1)
    assert np.all(np.isfinite(result.embedding))
    assert result.kl_final < result.kl_initial


def test_zero_iterations_return_the_initialisation(rng):
    result = tsne(rng.normal(size=(8, 3)), perplexity=2.0, iterations=0, seed=5)
    assert result.kl_final == result.kl_initial
    assert np.abs(result.embedding).max() < 1e-2


@pytest.mark.parametrize("perplexity, n", [(0.5, 10), (3.5, 10), (1.0, 3)])
def test_perplexity_range(perplexity, n):
    with pytest.raises(ConfigurationError):
        check_perplexity(perplexity, n)


def test_clamp_and_argument_errors(rng):
    assert clamp_perplexity(30.0, 10) == 3.0
    assert clamp_perplexity(2.0, 10) == 2.0
    with pytest.raises(ConfigurationError):
        tsne(rng.normal(size=(10, 2)), perplexity=2.0, iterations=-1)
    with pytest.raises(DimensionError):
        tsne(np.zeros(10), perplexity=2.0)


def test_same_seed_same_embedding(rng):
    X = rng.normal(size=(12, 5))
    first = tsne(X, perplexity=3.0, iterations=50, seed=9)
    second = tsne(X, perplexity=3.0, iterations=50, seed=9)
    np.testing.assert_array_equal(first.embedding, second.embedding)
    assert not np.array_equal(first.embedding, tsne(X, perplexity=3.0, iterations=50, seed=10).embedding)


def test_iteration_callback_sees_valid_states(rng):
    states = []
    tsne(rng.normal(size=(12, 4)), perplexity=3.0, iterations=5, seed=0, on_iteration=states.append)
    assert [s.iteration for s in states] == [1, 2, 3, 4, 5]
    for state in states:
        assert_joint_distribution(state.Q)
        assert np.allclose(state.Y.mean(axis=0), 0.0)
        assert state.kl == pytest.approx(kl_divergence(state.P, state.Q))


def test_csv_output(tmp_path, rng):
    emb = EmbeddingSet(rng.normal(size=(6, 3)), [0, 0, 0, 1, 1, 1], ["target"] * 6, [f"t{i}" for i in range(6)])
    result = tsne(emb, perplexity=1.5, iterations=10, seed=0)
    path = write_tsne_csv(emb, result, tmp_path / "tsne.csv")
    assert path.read_text().splitlines()[0] == "id,label,domain,y0,y1,kl_final"
    back = read_embeddings_csv(path)
    assert back.vectors.shape == (6, 2)
    np.testing.assert_array_equal(back.labels, emb.labels)
