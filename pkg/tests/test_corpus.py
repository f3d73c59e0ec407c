import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popbias.corpus import (
    COVERAGE_FRACTIONS,
    InteractionDataset,
    SyntheticConfig,
    assign_mainstream_groups,
    compute_popularity,
    generate_synthetic,
    ingest_interactions,
    long_tail_stats,
    read_group_file,
    split_mask,
    user_mainstreaminess,
    write_interactions,
)
from popbias.errors import ParseError, ValidationError

from conftest import make_dataset, random_dataset


def write_lines(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


class TestIngest:
    def test_three_line_file(self, tmp_path):
        f = tmp_path / "x.tsv"
        write_lines(f, ["u1\ta1\t5", "u1\ta2\t1", "u2\ta1\t2"])
        ds = ingest_interactions(f)
        assert ds.num_users == 2
        assert ds.num_artists == 2
        assert ds.num_pairs == 3
        assert ds.counts[0, 0] == 5

    def test_duplicate_pairs_are_summed(self, tmp_path):
        f = tmp_path / "x.tsv"
        write_lines(f, ["u1\ta1\t5", "u1\ta2\t1", "u2\ta1\t2", "u1\ta1\t3"])
        ds = ingest_interactions(f)
        assert ds.counts[ds.users.index("u1"), ds.artists.index("a1")] == 8

    def test_header_comments_and_blanks_skipped(self, tmp_path):
        f = tmp_path / "x.tsv"
        write_lines(f, ["user_id\tartist_id\tcount", "# comment", "", "u1\ta1\t5"])
        ds = ingest_interactions(f)
        assert ds.num_pairs == 1

    def test_malformed_line_reports_line_number(self, tmp_path):
        f = tmp_path / "x.tsv"
        write_lines(f, ["u1\ta1\t5", "u2\ta1"])
        with pytest.raises(ParseError, match="line 2"):
            ingest_interactions(f)

    def test_non_integer_count_after_first_line(self, tmp_path):
        f = tmp_path / "x.tsv"
        write_lines(f, ["u1\ta1\t5", "u2\ta1\tbogus"])
        with pytest.raises(ParseError, match="line 2"):
            ingest_interactions(f)

    def test_count_below_one_rejected(self, tmp_path):
        f = tmp_path / "x.tsv"
        write_lines(f, ["u1\ta1\t5", "u2\ta1\t0"])
        with pytest.raises(ValidationError, match="line 2"):
            ingest_interactions(f)

    def test_group_file_unknown_user_rejected(self, tmp_path):
        f = tmp_path / "x.tsv"
        g = tmp_path / "g.tsv"
        write_lines(f, ["u1\ta1\t5", "u2\ta1\t2"])
        write_lines(g, ["u1\tlow", "u2\thigh", "u9\tmedium"])
        with pytest.raises(ValidationError, match="unknown user"):
            ingest_interactions(f, g)

    def test_group_file_missing_user_rejected(self, tmp_path):
        f = tmp_path / "x.tsv"
        g = tmp_path / "g.tsv"
        write_lines(f, ["u1\ta1\t5", "u2\ta1\t2"])
        write_lines(g, ["u1\tlow"])
        with pytest.raises(ValidationError, match="missing label"):
            ingest_interactions(f, g)

    def test_group_file_bad_label(self, tmp_path):
        g = tmp_path / "g.tsv"
        write_lines(g, ["u1\tlow", "u2\tsideways"])
        with pytest.raises(ParseError, match="line 2"):
            read_group_file(g)

    def test_groups_loaded(self, tmp_path):
        f = tmp_path / "x.tsv"
        g = tmp_path / "g.tsv"
        write_lines(f, ["u1\ta1\t5", "u2\ta1\t2"])
        write_lines(g, ["u1\tlow", "u2\thigh"])
        ds = ingest_interactions(f, g)
        assert ds.group_labels == ["low", "high"]


class TestDatasetInvariants:
    def test_zero_counts_never_stored(self):
        ds = make_dataset([[1, 0], [2, 3]])
        assert ds.num_pairs == 3
        assert ds.counts.data.min() >= 1

    def test_empty_profile_rejected(self):
        with pytest.raises(ValidationError, match="empty profile"):
            make_dataset([[1, 2], [0, 0]])

    def test_duplicate_users_rejected(self):
        with pytest.raises(ValidationError, match="duplicate user"):
            InteractionDataset(["u", "u"], ["a"], np.array([[1], [2]]))

    def test_negative_count_rejected(self):
        with pytest.raises(ValidationError):
            make_dataset([[1, -2]])


interaction_records = st.lists(
    st.tuples(
        st.integers(0, 5),  # user
        st.integers(0, 8),  # artist
        st.integers(1, 9),  # count
    ),
    min_size=1,
    max_size=40,
).map(lambda recs: [(f"u{u}", f"a{a:02d}", c) for u, a, c in recs])


@given(interaction_records, st.booleans())
@settings(max_examples=60, deadline=None)
def test_round_trip_write_then_ingest(tmp_path_factory, records, with_groups):
    ds = InteractionDataset.from_records(records)
    if with_groups:
        labels = ["low", "medium", "high"]
        ds = InteractionDataset(
            ds.users, ds.artists, ds.counts,
            [labels[i % 3] for i in range(ds.num_users)],
        )
    out = tmp_path_factory.mktemp("roundtrip")
    f = out / "data.tsv"
    g = out / "groups.tsv" if with_groups else None
    write_interactions(ds, f, g)
    again = ingest_interactions(f, g)
    assert again == ds


class TestPopularity:
    def test_everyone_listens(self):
        ds = make_dataset([[3, 1], [2, 0]])
        pop = compute_popularity(ds)
        assert pop.phi[0] == 1.0

    def test_quarter(self):
        ds = make_dataset([[1, 1], [1, 0], [1, 0], [1, 0]])
        pop = compute_popularity(ds)
        assert pop.phi[1] == 0.25

    def test_train_scope_requires_split(self):
        ds = make_dataset([[1, 1], [1, 1]])
        with pytest.raises(ValidationError):
            compute_popularity(ds, scope="train-only")

    def test_train_vs_all_bounded_by_masked_listeners(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            ds = random_dataset(rng)
            split = split_mask(ds, 0.3, seed=trial)
            pop_all = compute_popularity(ds)
            pop_train = compute_popularity(ds, scope="train-only", split=split)
            masked_listeners = np.zeros(ds.num_artists)
            for hidden in split.masked:
                masked_listeners[hidden] += 1
            gap_vec = np.abs(pop_train.phi - pop_all.phi)
            assert np.all(gap_vec <= masked_listeners / ds.num_users + 1e-15)
            assert np.all(pop_train.phi <= pop_all.phi + 1e-15)


class TestMainstreamGroups:
    def test_three_users(self):
        # nested profiles: the narrower the profile, the more mainstream it is
        ds = make_dataset([
            [1, 1, 1],
            [1, 1, 0],
            [1, 0, 0],
        ])
        pop = compute_popularity(ds)
        scores = user_mainstreaminess(ds, pop)
        assert scores[0] < scores[1] < scores[2]
        assert assign_mainstream_groups(ds, pop) == ["low", "medium", "high"]

    def test_six_users_two_per_group(self):
        counts = np.zeros((6, 6), dtype=int)
        for u in range(6):
            counts[u, : u + 1] = 1  # nested profiles -> strictly increasing score
        ds = make_dataset(counts)
        labels = assign_mainstream_groups(ds, compute_popularity(ds))
        assert labels.count("low") == labels.count("medium") == labels.count("high") == 2

    def test_boundary_ties_break_by_user_index(self):
        # users 0 and 1 tie; ascending index puts user 0 in the lower tercile
        ds = make_dataset([
            [1, 1, 0],
            [1, 1, 0],
            [1, 0, 0],
        ])
        pop = compute_popularity(ds)
        scores = user_mainstreaminess(ds, pop)
        assert scores[0] == scores[1] < scores[2]
        labels = assign_mainstream_groups(ds, pop)
        assert labels == ["low", "medium", "high"]


class TestSplitMask:
    def test_fraction_of_ten(self):
        ds = make_dataset([np.ones(10, dtype=int)])
        split = split_mask(ds, 0.2, seed=0)
        assert len(split.masked[0]) == 2
        assert split.train.profile(0).size == 8

    def test_single_artist_user_never_masked(self):
        ds = make_dataset([[4]])
        split = split_mask(ds, 0.2, seed=0)
        assert len(split.masked[0]) == 0
        assert split.train.profile(0).size == 1

    def test_two_artist_user_masks_one(self):
        ds = make_dataset([[1, 1]])
        split = split_mask(ds, 0.2, seed=0)
        assert len(split.masked[0]) == 1

    def test_never_masks_everything(self):
        ds = make_dataset([[1, 1]])
        split = split_mask(ds, 0.99, seed=0)
        assert split.train.profile(0).size == 1

    def test_same_seed_identical(self):
        rng = np.random.default_rng(11)
        ds = random_dataset(rng, num_users=8, num_artists=12)
        a = split_mask(ds, 0.25, seed=42)
        b = split_mask(ds, 0.25, seed=42)
        for ma, mb in zip(a.masked, b.masked):
            assert np.array_equal(ma, mb)
        assert a.train == b.train

    def test_bad_fraction(self):
        ds = make_dataset([[1, 1]])
        for frac in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValidationError):
                split_mask(ds, frac, seed=0)

    @given(st.integers(0, 2**16), st.floats(0.05, 0.95))
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, seed, fraction):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng)
        split = split_mask(ds, fraction, seed=seed)
        for u in range(ds.num_users):
            original = set(ds.profile(u).tolist())
            kept = set(split.train.profile(u).tolist())
            hidden = set(split.masked[u].tolist())
            assert kept | hidden == original
            assert kept & hidden == set()
            if len(original) >= 2:
                assert 1 <= len(hidden) <= len(original) - 1
            # train counts unchanged for kept artists
            for a in kept:
                assert split.train.counts[u, a] == ds.counts[u, a]


class TestTailStats:
    def test_uniform_dataset_diagonal(self):
        # 10 users x 20 artists, everyone listens to everything
        ds = make_dataset(np.ones((10, 20), dtype=int))
        stats = long_tail_stats(ds)
        for frac in COVERAGE_FRACTIONS[1:]:  # multiples of 0.05
            assert stats.coverage_at(frac) == pytest.approx(frac, abs=1e-12)

    def test_curve_monotone_and_ends_at_one(self):
        rng = np.random.default_rng(3)
        ds = random_dataset(rng, num_users=10, num_artists=25)
        stats = long_tail_stats(ds)
        fracs = [f for f, _ in stats.coverage_curve]
        covs = [c for _, c in stats.coverage_curve]
        assert fracs == sorted(fracs)
        assert covs == sorted(covs)
        assert stats.coverage_curve[-1] == (1.0, pytest.approx(1.0))

    def test_trainable_artists(self):
        ds = make_dataset([[1, 1, 0], [1, 0, 1]])
        split = split_mask(ds, 0.5, seed=1)
        stats = long_tail_stats(ds, split)
        expected = int((split.train.counts.getnnz(axis=0) > 0).sum())
        assert stats.trainable_artists == expected

    def test_export(self, tmp_path):
        ds = make_dataset(np.ones((4, 20), dtype=int))
        out = tmp_path / "coverage.tsv"
        long_tail_stats(ds).write_coverage(out)
        rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(rows) == len(COVERAGE_FRACTIONS)
        first = rows[0].split("\t")
        assert float(first[0]) == 0.01


class TestSynthetic:
    def test_coverage_exceeds_uniform(self):
        config = SyntheticConfig(num_users=501, num_artists=2000, zipf_exponent=1.0,
                                 profile_size_range=(5, 30))
        ds = generate_synthetic(config, seed=0)
        stats = long_tail_stats(ds)
        assert stats.coverage_at(0.05) > 0.05

    def test_three_users_one_per_group(self):
        config = SyntheticConfig(num_users=3, num_artists=30, profile_size_range=(2, 5))
        ds = generate_synthetic(config, seed=1)
        assert ds.group_labels == ["low", "medium", "high"]

    def test_determinism_byte_identical(self, tmp_path):
        config = SyntheticConfig(num_users=30, num_artists=50, profile_size_range=(2, 8))
        a = generate_synthetic(config, seed=9)
        b = generate_synthetic(config, seed=9)
        assert a == b
        fa, fb = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_interactions(a, fa)
        write_interactions(b, fb)
        assert fa.read_bytes() == fb.read_bytes()

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            generate_synthetic(SyntheticConfig(num_users=4, num_artists=10), seed=0)
        with pytest.raises(ValidationError):
            generate_synthetic(
                SyntheticConfig(num_users=3, num_artists=10, zipf_exponent=0.0), seed=0
            )
        with pytest.raises(ValidationError):
            generate_synthetic(
                SyntheticConfig(num_users=3, num_artists=10, profile_size_range=(5, 20)),
                seed=0,
            )

    def test_steeper_exponent_dominates_coverage(self):
        # first-order dominance checked at the 5% point, averaged over seeds
        def mean_coverage(exponent):
            config = SyntheticConfig(num_users=60, num_artists=200,
                                     zipf_exponent=exponent, profile_size_range=(5, 15))
            vals = []
            for seed in range(10):
                ds = generate_synthetic(config, seed=seed)
                vals.append(long_tail_stats(ds).coverage_at(0.05))
            return float(np.mean(vals))

        assert mean_coverage(0.6) < mean_coverage(1.2) < mean_coverage(2.0)
