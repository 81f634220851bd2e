import numpy as np
import pytest

from gadmm_lab.errors import InvalidArgumentError, SingularSystemError
from gadmm_lab.problem import (ProblemInstance, centralized_solution, load_csv_shards, local_gradient, local_loss,
                               make_synthetic, prox_quadratic)


def identity_problem(y, mu=0.0, kind="least-squares"):
    return ProblemInstance(((np.eye(len(y)), np.array(y, dtype=float)),), loss_kind=kind, mu=mu)


def test_local_loss_exact_fit_is_zero():
    assert local_loss(identity_problem([1, 2]), 0, [1, 2]) == 0.0


def test_local_loss_half_norm():
    assert local_loss(identity_problem([0, 0]), 0, [1, 0]) == 0.5


def test_local_loss_matches_scalar_loop(rng):
    A, y = rng.standard_normal((4, 3)), rng.standard_normal(4)
    p = ProblemInstance(((A, y),))
    expected = 0.0
    for v in y:
        expected += 0.5 * v * v
    assert local_loss(p, 0, np.zeros(3)) == pytest.approx(expected, rel=1e-14)


def test_local_loss_rejects_bad_dimension():
    with pytest.raises(InvalidArgumentError):
        local_loss(identity_problem([1, 2]), 0, [1, 2, 3])
    with pytest.raises(InvalidArgumentError):
        local_gradient(identity_problem([1, 2]), 1, [1, 2])


def test_gradient_trivial_cases():
    p = identity_problem([1, 2])
    np.testing.assert_array_equal(local_gradient(p, 0, [1, 2]), [0, 0])
    np.testing.assert_array_equal(local_gradient(identity_problem([0, 0]), 0, [3, -1]), [3, -1])


@pytest.mark.parametrize("kind,mu", [("least-squares", 0.0), ("ridge", 0.7), ("logistic", 0.1)])
def test_gradient_matches_finite_differences(kind, mu):
    p = make_synthetic(3, 5, samples_per_worker=8, loss_kind=kind, mu=mu, seed=11)
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(100):
        theta = rng.standard_normal(5)
        n = int(rng.integers(3))
        g = local_gradient(p, n, theta)
        fd = np.array([(local_loss(p, n, theta + h * e) - local_loss(p, n, theta - h * e)) / (2 * h)
                       for e in np.eye(5)])
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(g)))


def test_partition_consistency(rng):
    A, y = rng.standard_normal((30, 4)), rng.standard_normal(30)
    pooled = ProblemInstance(((A, y),))
    cuts = [0, 7, 8, 19, 30]
    split = ProblemInstance(tuple((A[a:b], y[a:b]) for a, b in zip(cuts, cuts[1:])))
    for _ in range(20):
        theta = rng.standard_normal(4)
        assert split.objective(theta) == pytest.approx(pooled.objective(theta), rel=1e-12)


def test_centralized_single_worker():
    np.testing.assert_allclose(centralized_solution(identity_problem([5, -3])), [5, -3], atol=1e-14)


def test_ridge_shrinks_monotonically(small_problem):
    norms = []
    for mu in (0.1, 1.0, 10.0, 100.0, 1e4):
        p = ProblemInstance(small_problem.shards, loss_kind="ridge", mu=mu)
        norms.append(np.linalg.norm(centralized_solution(p)))
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-2


@pytest.mark.parametrize("kind", ["least-squares", "logistic"])
def test_centralized_gradient_vanishes(kind):
    p = make_synthetic(3, 4, samples_per_worker=15, loss_kind=kind, mu=0.05 if kind == "logistic" else 0.0, seed=4)
    assert np.max(np.abs(p.gradient(centralized_solution(p)))) < 1e-8


def test_centralized_invariant_to_shard_permutation(small_problem):
    perm = ProblemInstance(tuple(reversed(small_problem.shards)))
    np.testing.assert_allclose(centralized_solution(perm), centralized_solution(small_problem), atol=1e-9)


def test_centralized_rank_deficient_raises():
    A = np.ones((3, 2))
    with pytest.raises(SingularSystemError):
        centralized_solution(ProblemInstance(((A, np.ones(3)),)))


def test_prox_pure_proximity():
    p = ProblemInstance(((np.zeros((1, 2)), np.zeros(1)),))
    np.testing.assert_allclose(prox_quadratic(p, 0, [[1, 1]], [[0, 0]], 1.0), [1, 1])
    for rho in (0.1, 3.0):
        np.testing.assert_allclose(prox_quadratic(p, 0, [[0, 0], [2, 2]], [[0, 0], [0, 0]], rho), [1, 1])


def test_prox_stationarity_residual(small_problem, rng):
    d, rho = small_problem.dim, 1.7
    models = rng.standard_normal((2, d))
    duals = rng.standard_normal((2, d))
    signs = [1, -1]
    t = prox_quadratic(small_problem, 2, models, duals, rho, signs)
    residual = (local_gradient(small_problem, 2, t) + duals[0] - duals[1]
                + rho * (2 * t - models.sum(axis=0)))
    assert np.max(np.abs(residual)) < 1e-9


def test_prox_rejects_nonpositive_rho(small_problem):
    with pytest.raises(InvalidArgumentError):
        prox_quadratic(small_problem, 0, [], [], 0.0)


def test_logistic_labels_mapped():
    A = np.eye(2)
    p = ProblemInstance(((A, np.array([0.0, 1.0])),), loss_kind="logistic")
    np.testing.assert_array_equal(p.shards[0][1], [-1.0, 1.0])


def test_instances_are_immutable(small_problem):
    with pytest.raises(ValueError):
        small_problem.shards[0][0][0, 0] = 1.0


def test_load_csv_file_per_worker(tmp_path):
    paths = []
    for n in range(2):
        path = tmp_path / f"w{n}.csv"
        path.write_text("1,2,3\n4,5,6\n")
        paths.append(path)
    p = load_csv_shards(paths)
    assert p.num_workers == 2 and p.dim == 2
    np.testing.assert_array_equal(p.shards[1][1], [3, 6])


def test_load_csv_worker_column(tmp_path):
    path = tmp_path / "all.csv"
    path.write_text("0,1,2,3\n1,4,5,6\n0,7,8,9\n")
    p = load_csv_shards(path, worker_column=True)
    assert p.num_workers == 2
    np.testing.assert_array_equal(p.shards[0][0], [[1, 2], [7, 8]])


def test_load_csv_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,x\n")
    with pytest.raises(InvalidArgumentError):
        load_csv_shards(bad)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2\n1,2,3\n")
    with pytest.raises(InvalidArgumentError):
        load_csv_shards(ragged)


def test_fingerprint_tracks_data(small_problem):
    same = make_synthetic(6, 4, samples_per_worker=12, condition=10.0, heterogeneity=0.3, seed=3)
    other = make_synthetic(6, 4, samples_per_worker=12, condition=10.0, heterogeneity=0.3, seed=4)
    assert same.fingerprint == small_problem.fingerprint != other.fingerprint
