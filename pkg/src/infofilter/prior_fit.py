"""Empirical prior from historical ratings.

Each historical user's ratings are regressed on the feature vectors of the
items they rated (no intercept); the prior is the sample mean and unbiased
sample covariance of the fitted coefficient vectors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import PSD_EPS, GaussianBelief, l1_normalize, psd_repair
from .errors import DomainError, IngestionError

FALLBACK_RIDGE = 1e-6


@dataclass(frozen=True)
class RatingsDataset:
    items: dict            # item id -> normalized feature vector
    ratings: list          # (user id, item id, rating)

    @property
    def k(self):
        return len(next(iter(self.items.values())))

    def users(self):
        return sorted({u for u, _, _ in self.ratings})


@dataclass(frozen=True)
class FittedUsers:
    thetas: dict           # user id -> fitted preference vector
    counts: dict           # user id -> number of ratings
    flagged: frozenset = field(default_factory=frozenset)  # rank-deficient fits

    def matrix(self):
        """Fitted vectors stacked in sorted user-id order."""
        return np.array([self.thetas[u] for u in sorted(self.thetas)])


def _parse_float(text, where, problems):
    try:
        return float(text)
    except ValueError:
        problems.append(f"{where}: not a number: {text!r}")
        return None


def load_items(path):
    """Items CSV ``item_id,f1,...,fk``; rows are L1-normalized on load."""
    problems = []
    items = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "item_id" or len(header) < 2:
            raise IngestionError(f"{path}: header must be item_id,f1,...,fk")
        k = len(header) - 1
        for line, row in enumerate(reader, start=2):
            where = f"{path}:{line}"
            if len(row) != k + 1:
                problems.append(f"{where}: expected {k + 1} fields, got {len(row)}")
                continue
            values = [_parse_float(v, where, problems) for v in row[1:]]
            if any(v is None for v in values):
                continue
            vec = np.array(values)
            if np.any(vec < 0):
                problems.append(f"{where}: item {row[0]!r} has negative features")
                continue
            if not vec.sum() > 0:
                problems.append(f"{where}: item {row[0]!r} has an all-zero feature vector")
                continue
            if row[0] in items:
                problems.append(f"{where}: duplicate item id {row[0]!r}")
                continue
            items[row[0]] = l1_normalize(vec, label=row[0])
    if problems:
        raise IngestionError(f"{path}: {len(problems)} bad item rows", problems)
    if not items:
        raise IngestionError(f"{path}: no items")
    return items


def load_ratings(items_path, ratings_path):
    """Items CSV plus ratings CSV ``user_id,item_id,rating``."""
    items = load_items(items_path)
    problems = []
    ratings = []
    with open(ratings_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "item_id", "rating"]:
            raise IngestionError(f"{ratings_path}: header must be user_id,item_id,rating")
        for line, row in enumerate(reader, start=2):
            where = f"{ratings_path}:{line}"
            if len(row) != 3:
                problems.append(f"{where}: expected 3 fields, got {len(row)}")
                continue
            user, item, text = row
            value = _parse_float(text, where, problems)
            if value is None:
                continue
            if item not in items:
                problems.append(f"{where}: unknown item id {item!r}")
                continue
            ratings.append((user, item, value))
    if problems:
        raise IngestionError(f"{ratings_path}: {len(problems)} bad rating rows", problems)
    return RatingsDataset(items, ratings)


def fit_user_preferences(data, ridge=0.0, fallback_ridge=FALLBACK_RIDGE):
    """Least-squares preference vector per user.

    With ``ridge == 0`` a user whose design matrix is rank-deficient is fitted
    with ``fallback_ridge`` instead and listed in ``flagged``.
    """
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    by_user = {}
    for user, item, rating in data.ratings:
        by_user.setdefault(user, []).append((data.items[item], rating))
    k = data.k
    thetas, counts, flagged = {}, {}, set()
    for user in sorted(by_user):
        rows = by_user[user]
        X = np.array([x for x, _ in rows])
        y = np.array([r for _, r in rows])
        lam = ridge
        if lam == 0 and np.linalg.matrix_rank(X) < k:
            lam = fallback_ridge
            flagged.add(user)
        theta = np.linalg.solve(X.T @ X + lam * np.eye(k), X.T @ y)
        thetas[user] = theta
        counts[user] = len(rows)
    return FittedUsers(thetas, counts, frozenset(flagged))


def build_prior(users, repair_eps=PSD_EPS):
    """Normal prior with the sample mean and (n − 1)-divisor sample covariance."""
    thetas = users.matrix() if isinstance(users, FittedUsers) else np.asarray(users, float)
    if thetas.ndim != 2 or thetas.shape[0] < 2:
        raise DomainError("need at least 2 users to estimate a covariance")
    mean = thetas.mean(axis=0)
    cov = np.atleast_2d(np.cov(thetas, rowvar=False, ddof=1))
    return GaussianBelief(mean, psd_repair(cov, repair_eps))
