import numpy as np
import pytest
from pytest import approx

from popbias.errors import ValidationError
from popbias.models import SlimRecommender, slim_objective

from conftest import make_dataset, random_dataset

TOY = make_dataset([
    [1, 2, 1],
    [2, 1, 0],
    [0, 1, 2],
    [1, 0, 1],
])


def column_objective(A, j, w, l1, l2):
    r = A[:, j] - A @ w
    return 0.5 * np.sum(r**2) + 0.5 * l2 * np.sum(w**2) + l1 * np.sum(np.abs(w))


def lattice_search(A, j, l1, l2, step=0.01, upper=1.0):
    """Oracle: exhaustive search of the column objective on a weight lattice."""
    others = [i for i in range(A.shape[1]) if i != j]
    grid = np.arange(0.0, upper + step / 2, step)
    best_w, best_obj = None, np.inf
    for w0 in grid:
        for w1 in grid:
            w = np.zeros(A.shape[1])
            w[others[0]], w[others[1]] = w0, w1
            obj = column_objective(A, j, w, l1, l2)
            if obj < best_obj:
                best_obj, best_w = obj, w.copy()
    return best_w


class TestFit:
    def test_huge_l1_zeroes_everything(self):
        model = SlimRecommender(l1_penalty=1e6, l2_penalty=0.0).fit(TOY)
        assert model.weights_.nnz == 0

    def test_identical_columns_single_coordinate_closed_form(self):
        ds = make_dataset([[1, 1], [2, 2], [1, 1]])
        l1, l2 = 0.01, 0.01
        model = SlimRecommender(l1_penalty=l1, l2_penalty=l2,
                                tolerance=1e-14, max_iters=500).fit(ds)
        d = float(np.sum(np.array([1.0, 2.0, 1.0]) ** 2))
        expected = max(0.0, d - l1) / (d + l2)
        assert model.weights_.toarray()[0, 1] == approx(expected, abs=1e-10)
        assert model.weights_.toarray()[1, 0] == approx(expected, abs=1e-10)

    def test_matches_lattice_search_oracle(self):
        l1, l2 = 0.05, 0.05
        model = SlimRecommender(l1_penalty=l1, l2_penalty=l2,
                                tolerance=1e-12, max_iters=1000).fit(TOY)
        W = model.weights_.toarray()
        A = TOY.counts.toarray().astype(float)
        for j in range(3):
            best = lattice_search(A, j, l1, l2)
            assert np.abs(best - W[:, j]).max() <= 0.02

    def test_diag_always_zero_and_nonneg_weights_positive(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            ds = random_dataset(rng, num_users=8, num_artists=9)
            model = SlimRecommender(l1_penalty=0.02, l2_penalty=0.1).fit(ds)
            W = model.weights_.toarray()
            assert np.all(np.diag(W) == 0.0)
            assert model.weights_.nnz == 0 or model.weights_.data.min() > 0

    def test_signed_variant_allows_negative_weights(self):
        rng = np.random.default_rng(1)
        found_negative = False
        for trial in range(10):
            ds = random_dataset(rng, num_users=10, num_artists=8)
            model = SlimRecommender(l1_penalty=0.0, l2_penalty=0.05,
                                    non_negative=False).fit(ds)
            if model.weights_.nnz and model.weights_.data.min() < 0:
                found_negative = True
                break
        assert found_negative

    def test_column_order_and_threads_do_not_change_solution(self):
        rng = np.random.default_rng(2)
        ds = random_dataset(rng, num_users=10, num_artists=12)
        kwargs = dict(l1_penalty=0.05, l2_penalty=0.1, tolerance=1e-10, max_iters=500)
        serial = SlimRecommender(**kwargs).fit(ds)
        threaded = SlimRecommender(**kwargs).fit(ds, threads=3)
        assert (serial.weights_ != threaded.weights_).nnz == 0
        assert serial.weights_.data.tobytes() == threaded.weights_.data.tobytes()

    def test_hyperparam_validation(self):
        with pytest.raises(ValidationError):
            SlimRecommender(l1_penalty=-1)
        with pytest.raises(ValidationError):
            SlimRecommender(tolerance=0)


class TestObjective:
    def test_zero_weights_gives_half_squared_norm(self):
        A = TOY.counts.toarray().astype(float)
        zeros = np.zeros((3, 3))
        assert slim_objective(TOY, zeros, 1.0, 1.0) == approx(0.5 * np.sum(A**2))

    def test_perfect_reconstruction_no_penalty_is_zero(self):
        # two identical artist columns reconstruct each other exactly
        ds = make_dataset([[1, 1], [2, 2], [1, 1]])
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert slim_objective(ds, W, 0.0, 0.0) == approx(0.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            slim_objective(TOY, np.zeros((2, 2)), 0.1, 0.1)

    def test_non_increasing_after_every_coordinate_update(self):
        snapshots = []

        def trace(column, w):
            snapshots.append((column, w))

        l1, l2 = 0.05, 0.1
        SlimRecommender(l1_penalty=l1, l2_penalty=l2,
                        tolerance=1e-10, max_iters=200).fit(TOY, trace=trace)
        A = TOY.counts.toarray().astype(float)
        per_column: dict[int, list[float]] = {}
        for column, w in snapshots:
            per_column.setdefault(column, []).append(column_objective(A, column, w, l1, l2))
        assert per_column
        for col, objs in per_column.items():
            for prev, cur in zip(objs, objs[1:]):
                assert cur <= prev + 1e-12 * max(1.0, abs(prev)), col


class TestKkt:
    def check_kkt(self, ds, model, tol=1e-6):
        A = ds.counts.toarray().astype(float)
        W = model.weights_.toarray()
        l1, l2 = model.l1_penalty, model.l2_penalty
        for j in range(ds.num_artists):
            r = A[:, j] - A @ W[:, j]
            for i in range(ds.num_artists):
                if i == j or np.sum(A[:, i] ** 2) == 0:
                    continue
                g = -A[:, i] @ r + l2 * W[i, j]
                if W[i, j] > 0:
                    assert abs(g + l1) <= tol, (i, j, g)
                elif W[i, j] < 0:
                    assert abs(g - l1) <= tol, (i, j, g)
                elif model.non_negative:
                    assert g + l1 >= -tol, (i, j, g)
                else:
                    assert abs(g) <= l1 + tol, (i, j, g)

    def test_kkt_on_random_instances_nonneg(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            ds = random_dataset(rng, num_users=15, num_artists=10)
            model = SlimRecommender(l1_penalty=0.1, l2_penalty=0.2,
                                    tolerance=1e-12, max_iters=2000).fit(ds)
            self.check_kkt(ds, model)

    def test_kkt_on_random_instances_signed(self):
        rng = np.random.default_rng(8)
        for trial in range(5):
            ds = random_dataset(rng, num_users=15, num_artists=10)
            model = SlimRecommender(l1_penalty=0.1, l2_penalty=0.2, non_negative=False,
                                    tolerance=1e-12, max_iters=2000).fit(ds)
            self.check_kkt(ds, model)


class TestScoring:
    def test_zero_weights_zero_scores(self):
        model = SlimRecommender(l1_penalty=1e6).fit(TOY)
        assert np.array_equal(model.score_user(0), np.zeros(3))

    def test_single_link_weight_propagates_count(self):
        # user 1 listens only to artist 0 (count 2): score(a2) = 2 * w(a0 -> a2)
        ds = make_dataset([[1, 0, 1], [2, 0, 0], [1, 1, 1]])
        model = SlimRecommender(l1_penalty=0.01, l2_penalty=0.01).fit(ds)
        W = model.weights_.toarray()
        scores = model.score_user(1)
        assert scores[2] == approx(2.0 * W[0, 2])

    def test_scores_equal_manual_sparse_products(self):
        model = SlimRecommender(l1_penalty=0.05, l2_penalty=0.05).fit(TOY)
        A = TOY.counts.toarray().astype(float)
        W = model.weights_.toarray()
        for u in range(TOY.num_users):
            assert model.score_user(u) == approx(A[u] @ W, abs=1e-12)

    def test_binarize_flag_fits_on_occurrences(self):
        counts = np.array([[5, 5], [9, 9], [2, 2]])
        ds = make_dataset(counts)
        l1, l2 = 0.01, 0.01
        model = SlimRecommender(l1_penalty=l1, l2_penalty=l2, binarize=True,
                                tolerance=1e-14, max_iters=500).fit(ds)
        d = 3.0  # binarized column norm
        expected = (d - l1) / (d + l2)
        assert model.weights_.toarray()[0, 1] == approx(expected, abs=1e-10)
        # scoring also uses the binarized rows
        assert model.score_user(0)[1] == approx(expected, abs=1e-10)
