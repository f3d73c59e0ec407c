"""Interaction data: loading, popularity, user grouping, splitting, and synthesis.

The central object is :class:`InteractionDataset`, a sparse user-by-artist
play-count matrix with stable identifier maps.  Everything downstream (models,
metrics, the experiment harness) works on artist/user *indices* into that
matrix; external identifiers only matter at the file boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, ValidationError

GROUP_LABELS = ("low", "medium", "high")

# Fractions at which coverage curves are sampled: 1% plus every 5% step.
COVERAGE_FRACTIONS = (0.01,) + tuple(round(0.05 * i, 2) for i in range(1, 21))


class InteractionDataset:
    """User-by-artist play counts with identifier maps and optional user groups.

    ``counts`` is CSR with int64 data.  Invariants enforced at construction:
    stored entries are >= 1 (zeros are dropped, never stored), every user row
    has at least one entry, and identifier lists contain no duplicates.
    """

    def __init__(self, users, artists, counts, group_labels=None):
        self.users = list(users)
        self.artists = list(artists)
        counts = sp.csr_matrix(counts, dtype=np.int64, copy=True)
        counts.eliminate_zeros()
        counts.sort_indices()
        self.counts = counts
        self.group_labels = list(group_labels) if group_labels is not None else None
        self._validate()

    def _validate(self):
        nu, na = self.counts.shape
        if nu != len(self.users) or na != len(self.artists):
            raise ValidationError(
                f"matrix shape {self.counts.shape} does not match "
                f"{len(self.users)} users x {len(self.artists)} artists"
            )
        if len(set(self.users)) != len(self.users):
            raise ValidationError("duplicate user identifiers")
        if len(set(self.artists)) != len(self.artists):
            raise ValidationError("duplicate artist identifiers")
        if self.counts.nnz and self.counts.data.min() < 1:
            raise ValidationError("play counts must be >= 1")
        row_sizes = np.diff(self.counts.indptr)
        if len(self.users) and row_sizes.min() < 1:
            empty = int(np.argmin(row_sizes))
            raise ValidationError(f"user {self.users[empty]!r} has an empty profile")
        if self.group_labels is not None:
            if len(self.group_labels) != len(self.users):
                raise ValidationError("group labels do not cover every user")
            bad = set(self.group_labels) - set(GROUP_LABELS)
            if bad:
                raise ValidationError(f"unknown group labels: {sorted(bad)}")

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_artists(self) -> int:
        return len(self.artists)

    @property
    def num_pairs(self) -> int:
        return int(self.counts.nnz)

    def profile(self, user: int) -> np.ndarray:
        """Artist indices the user has listened to, ascending."""
        lo, hi = self.counts.indptr[user], self.counts.indptr[user + 1]
        return self.counts.indices[lo:hi]

    def profile_counts(self, user: int) -> np.ndarray:
        lo, hi = self.counts.indptr[user], self.counts.indptr[user + 1]
        return self.counts.data[lo:hi]

    def __eq__(self, other):
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        return (
            self.users == other.users
            and self.artists == other.artists
            and self.group_labels == other.group_labels
            and self.counts.shape == other.counts.shape
            and (self.counts != other.counts).nnz == 0
        )

    def __repr__(self):
        return (
            f"InteractionDataset(users={self.num_users}, artists={self.num_artists}, "
            f"pairs={self.num_pairs}, groups={'yes' if self.group_labels else 'no'})"
        )

    @classmethod
    def from_records(cls, records, groups: Mapping[str, str] | None = None):
        """Build a dataset from (user_id, artist_id, count) records.

        Duplicate (user, artist) records are summed.  Identifier maps are
        sorted lexicographically so that datasets built from the same set of
        records compare equal regardless of record order.
        """
        by_pair: dict[tuple[str, str], int] = {}
        for user_id, artist_id, count in records:
            count = int(count)
            if count < 1:
                raise ValidationError(
                    f"count {count} < 1 for user {user_id!r}, artist {artist_id!r}"
                )
            key = (str(user_id), str(artist_id))
            by_pair[key] = by_pair.get(key, 0) + count
        if not by_pair:
            raise ValidationError("no interaction records")
        users = sorted({u for u, _ in by_pair})
        artists = sorted({a for _, a in by_pair})
        uidx = {u: i for i, u in enumerate(users)}
        aidx = {a: i for i, a in enumerate(artists)}
        rows = np.fromiter((uidx[u] for u, _ in by_pair), dtype=np.int64, count=len(by_pair))
        cols = np.fromiter((aidx[a] for _, a in by_pair), dtype=np.int64, count=len(by_pair))
        vals = np.fromiter(by_pair.values(), dtype=np.int64, count=len(by_pair))
        counts = sp.coo_matrix((vals, (rows, cols)), shape=(len(users), len(artists)))
        labels = None
        if groups is not None:
            unknown = set(groups) - set(users)
            if unknown:
                raise ValidationError(
                    f"group file references unknown user(s): {sorted(unknown)[:5]}"
                )
            missing = set(users) - set(groups)
            if missing:
                raise ValidationError(
                    f"group file missing label for user(s): {sorted(missing)[:5]}"
                )
            labels = [groups[u] for u in users]
        return cls(users, artists, counts.tocsr(), labels)


@dataclass
class PopularityTable:
    """Per-artist popularity: the fraction of users reached by each artist."""

    phi: np.ndarray
    listeners: np.ndarray
    num_users: int

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.listeners = np.asarray(self.listeners, dtype=np.int64)
        if self.phi.shape != self.listeners.shape:
            raise ValidationError("phi and listeners must have the same length")


@dataclass
class SplitDataset:
    """A train/holdout partition of each user's profile.

    ``masked[u]`` holds the artist indices hidden from user ``u``'s row; the
    train dataset keeps everything else.  For every user the masked set and
    the train profile are disjoint and their union is the original profile.
    """

    train: InteractionDataset
    masked: list[np.ndarray]
    seed: int
    holdout_fraction: float


@dataclass
class TailStats:
    """Summary of how concentrated interactions are among popular artists."""

    num_users: int
    num_artists: int
    num_pairs: int
    coverage_curve: list[tuple[float, float]]
    trainable_artists: int | None = None

    def coverage_at(self, fraction: float) -> float:
        for f, c in self.coverage_curve:
            if abs(f - fraction) < 1e-9:
                return c
        raise ValidationError(f"coverage curve not sampled at fraction {fraction}")

    def write_coverage(self, path):
        """Export (fraction_of_artists, fraction_of_interactions) pairs as TSV."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# fraction_of_artists\tfraction_of_interactions\n")
            for f, c in self.coverage_curve:
                fh.write(f"{f:.6f}\t{c:.6f}\n")


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic long-tail interaction generator.

    ``mainstream_mix`` gives the per-group sampling bias (low, medium, high):
    a user's artist-sampling weight is base_popularity ** bias, so larger
    values concentrate profiles on popular artists.
    """

    num_users: int
    num_artists: int
    zipf_exponent: float = 1.0
    profile_size_range: tuple[int, int] = (10, 40)
    mainstream_mix: tuple[float, float, float] = (0.3, 1.0, 2.2)
    count_geometric_p: float = 0.5

    def validate(self):
        if self.num_users < 1 or self.num_artists < 1:
            raise ValidationError("num_users and num_artists must be >= 1")
        if self.num_users % 3 != 0:
            raise ValidationError("num_users must be divisible by 3 (three groups)")
        if not self.zipf_exponent > 0:
            raise ValidationError("zipf_exponent must be > 0")
        lo, hi = self.profile_size_range
        if not (1 <= lo <= hi <= self.num_artists):
            raise ValidationError(
                f"profile_size_range {self.profile_size_range} must satisfy "
                f"1 <= lo <= hi <= num_artists"
            )
        if len(self.mainstream_mix) != 3 or any(b < 0 for b in self.mainstream_mix):
            raise ValidationError("mainstream_mix must be three non-negative biases")
        if not 0 < self.count_geometric_p <= 1:
            raise ValidationError("count_geometric_p must be in (0, 1]")


def _user_rng(seed: int, user: int) -> np.random.Generator:
    # Per-user stream keyed by (seed, user) so results never depend on the
    # order users are processed in.
    return np.random.default_rng([seed, user])


def _open_checked(path):
    try:
        return open(path, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def ingest_interactions(path, group_path=None) -> InteractionDataset:
    """Load a tab-separated ``user\\tartist\\tcount`` file.

    Lines starting with ``#`` and blank lines are skipped; a single header
    line is tolerated.  Duplicate (user, artist) records are summed.  When
    ``group_path`` is given it must assign one of low/medium/high to every
    user in the interactions file.
    """
    records = []
    first_data_line = True
    with _open_checked(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields, "
                    f"got {len(fields)}"
                )
            user_id, artist_id, count_str = fields
            try:
                count = int(count_str)
            except ValueError:
                if first_data_line:
                    first_data_line = False
                    continue  # header row
                raise ParseError(
                    f"{path}: line {lineno}: count {count_str!r} is not an integer"
                ) from None
            first_data_line = False
            if count < 1:
                raise ValidationError(f"{path}: line {lineno}: count {count} < 1")
            records.append((user_id, artist_id, count))
    groups = read_group_file(group_path) if group_path is not None else None
    return InteractionDataset.from_records(records, groups)


def read_group_file(path) -> dict[str, str]:
    """Load ``user\\tlabel`` lines mapping users to low/medium/high."""
    groups: dict[str, str] = {}
    first_data_line = True
    with _open_checked(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(
                    f"{path}: line {lineno}: expected 2 tab-separated fields, "
                    f"got {len(fields)}"
                )
            user_id, label = fields
            if label not in GROUP_LABELS:
                if first_data_line:
                    first_data_line = False
                    continue  # header row
                raise ParseError(
                    f"{path}: line {lineno}: unknown group label {label!r}"
                )
            first_data_line = False
            if user_id in groups:
                raise ValidationError(f"{path}: line {lineno}: duplicate user {user_id!r}")
            groups[user_id] = label
    return groups


def write_interactions(dataset: InteractionDataset, path, group_path=None):
    """Write a dataset back to the tab-separated interchange format.

    Rows come out in (user index, artist index) order; re-ingesting the file
    reproduces the dataset whenever its identifier maps are sorted (always
    true for ingested and generated datasets).
    """
    with open(path, "w", encoding="utf-8") as fh:
        indptr = dataset.counts.indptr
        indices = dataset.counts.indices
        data = dataset.counts.data
        for u, user_id in enumerate(dataset.users):
            for k in range(indptr[u], indptr[u + 1]):
                fh.write(f"{user_id}\t{dataset.artists[indices[k]]}\t{data[k]}\n")
    if group_path is not None:
        if dataset.group_labels is None:
            raise ValidationError("dataset has no group labels to write")
        with open(group_path, "w", encoding="utf-8") as fh:
            for user_id, label in zip(dataset.users, dataset.group_labels):
                fh.write(f"{user_id}\t{label}\n")


def compute_popularity(
    dataset: InteractionDataset,
    scope: str = "all-data",
    split: SplitDataset | None = None,
) -> PopularityTable:
    """Per-artist phi: the fraction of users with at least one play.

    ``scope="all-data"`` counts listeners in ``dataset``; ``scope="train-only"``
    counts them in ``split.train`` (the split must be supplied).  Artists with
    no listeners in scope get phi = 0.
    """
    if dataset.num_users == 0:
        raise ValidationError("cannot compute popularity of an empty dataset")
    if scope == "all-data":
        counts = dataset.counts
    elif scope == "train-only":
        if split is None:
            raise ValidationError("train-only popularity requires a split")
        counts = split.train.counts
    else:
        raise ValidationError(f"unknown popularity scope {scope!r}")
    listeners = counts.getnnz(axis=0).astype(np.int64)
    phi = listeners / dataset.num_users
    return PopularityTable(phi=phi, listeners=listeners, num_users=dataset.num_users)


def user_mainstreaminess(dataset: InteractionDataset, pop: PopularityTable) -> np.ndarray:
    """Mean phi over each user's profile."""
    if len(pop.phi) != dataset.num_artists:
        raise ValidationError("popularity table does not cover all artists")
    binary = dataset.counts.copy()
    binary.data = np.ones_like(binary.data)
    sums = binary @ pop.phi
    sizes = np.diff(dataset.counts.indptr)
    return sums / sizes


def assign_mainstream_groups(
    dataset: InteractionDataset, pop: PopularityTable
) -> list[str]:
    """Split users into equal-size (+/- 1) low/medium/high mainstream terciles.

    Users are ordered by mainstreaminess score ascending; ties at tercile
    boundaries break by ascending user index.
    """
    scores = user_mainstreaminess(dataset, pop)
    n = dataset.num_users
    order = np.lexsort((np.arange(n), scores))
    cut1, cut2 = n // 3, (2 * n) // 3
    labels = np.empty(n, dtype=object)
    labels[order[:cut1]] = "low"
    labels[order[cut1:cut2]] = "medium"
    labels[order[cut2:]] = "high"
    return list(labels)


def _holdout_size(profile_size: int, fraction: float) -> int:
    if profile_size < 2:
        return 0
    m = math.floor(fraction * profile_size + 0.5)  # round half up
    return min(profile_size - 1, max(1, m))


def split_mask(
    dataset: InteractionDataset, holdout_fraction: float, seed: int
) -> SplitDataset:
    """Hide a per-user random fraction of profile artists for evaluation.

    Each user independently masks round(holdout_fraction * profile size)
    artists (at least 1 when the profile has >= 2 artists, never the whole
    profile); single-artist users keep their artist in train.  Deterministic
    given ``seed``; each user draws from its own RNG stream.
    """
    if not 0 < holdout_fraction < 1:
        raise ValidationError(
            f"holdout_fraction must be in (0, 1), got {holdout_fraction}"
        )
    if seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    counts = dataset.counts
    indptr, indices, data = counts.indptr, counts.indices, counts.data
    keep = np.ones(len(data), dtype=bool)
    masked: list[np.ndarray] = []
    for u in range(dataset.num_users):
        lo, hi = indptr[u], indptr[u + 1]
        size = hi - lo
        m = _holdout_size(size, holdout_fraction)
        if m == 0:
            masked.append(np.empty(0, dtype=indices.dtype))
            continue
        rng = _user_rng(seed, u)
        positions = rng.choice(size, size=m, replace=False)
        keep[lo + positions] = False
        masked.append(np.sort(indices[lo + positions]))
    kept_cum = np.concatenate(([0], np.cumsum(keep.astype(np.int64))))
    new_indptr = kept_cum[indptr]
    train_counts = sp.csr_matrix(
        (data[keep], indices[keep], new_indptr), shape=counts.shape
    )
    train = InteractionDataset(
        dataset.users, dataset.artists, train_counts, dataset.group_labels
    )
    return SplitDataset(
        train=train, masked=masked, seed=seed, holdout_fraction=holdout_fraction
    )


def long_tail_stats(
    dataset: InteractionDataset, split: SplitDataset | None = None
) -> TailStats:
    """Coverage curve: fraction of interactions owned by the top artists.

    The curve is sampled at 1% and every 5% step of the artist catalogue,
    artists ranked by listener count descending (ties by ascending index).
    """
    listeners = dataset.counts.getnnz(axis=0).astype(np.int64)
    order = np.lexsort((np.arange(dataset.num_artists), -listeners))
    cum = np.cumsum(listeners[order])
    total = dataset.num_pairs
    curve = []
    for frac in COVERAGE_FRACTIONS:
        k = max(1, math.ceil(frac * dataset.num_artists))
        k = min(k, dataset.num_artists)
        curve.append((frac, float(cum[k - 1] / total)))
    trainable = None
    if split is not None:
        trainable = int((split.train.counts.getnnz(axis=0) > 0).sum())
    return TailStats(
        num_users=dataset.num_users,
        num_artists=dataset.num_artists,
        num_pairs=total,
        coverage_curve=curve,
        trainable_artists=trainable,
    )


def generate_synthetic(config: SyntheticConfig, seed: int) -> InteractionDataset:
    """Generate a long-tail interaction dataset.

    Artist base popularity follows a Zipf law with the configured exponent;
    users are split into three equal groups whose sampling weights are the
    base popularity raised to the group's bias, so "high" users concentrate
    on the head of the distribution.  Play counts are geometric (>= 1).
    Byte-identical output for identical (config, seed).
    """
    config.validate()
    if seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    nu, na = config.num_users, config.num_artists
    base = 1.0 / np.arange(1, na + 1, dtype=np.float64) ** config.zipf_exponent
    lo, hi = config.profile_size_range
    uw = len(str(nu - 1))
    aw = len(str(na - 1))
    users = [f"u{idx:0{uw}d}" for idx in range(nu)]
    artists = [f"a{idx:0{aw}d}" for idx in range(na)]
    group_of = [GROUP_LABELS[u * 3 // nu] for u in range(nu)]
    weights = {}
    for gi, label in enumerate(GROUP_LABELS):
        w = base ** config.mainstream_mix[gi]
        weights[label] = w / w.sum()
    rows, cols, vals = [], [], []
    for u in range(nu):
        rng = _user_rng(seed, u)
        k = int(rng.integers(lo, hi, endpoint=True))
        profile = np.sort(rng.choice(na, size=k, replace=False, p=weights[group_of[u]]))
        plays = rng.geometric(config.count_geometric_p, size=k)
        rows.append(np.full(k, u, dtype=np.int64))
        cols.append(profile.astype(np.int64))
        vals.append(plays.astype(np.int64))
    counts = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nu, na),
    ).tocsr()
    return InteractionDataset(users, artists, counts, group_of)
