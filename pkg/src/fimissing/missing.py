"""Incompletely observed datasets and simulated missingness mechanisms.

Missing entries are stored as NaN. Every record must keep at least one
observed coordinate.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import BadMechanism, EmptyInput, OutOfSupport

MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True)
class IncompleteRecord:
    values: np.ndarray
    observed_mask: np.ndarray


def split_record(record):
    """Partition a record's coordinates by its mask.

    Returns
    -------
    obs_coords, mis_coords : ndarray of int
        In increasing coordinate order.
    obs_values : ndarray
    """
    mask = np.asarray(record.observed_mask, dtype=bool)
    obs = np.flatnonzero(mask)
    return obs, np.flatnonzero(~mask), np.asarray(record.values, dtype=float)[obs]


def combine_record(record, mis_values):
    """Fill the missing coordinates of ``record`` with ``mis_values``."""
    obs, mis, obs_values = split_record(record)
    out = np.empty(len(record.observed_mask))
    out[obs] = obs_values
    out[mis] = mis_values
    return out


class IncompleteDataset:
    """``n`` records of dimension ``d`` with per-coordinate observation masks.

    Parameters
    ----------
    values : array_like, shape (n, d)
        Entries at unobserved coordinates are ignored and replaced by NaN.
    observed : array_like of bool, optional
        Defaults to ``isfinite(values)``.
    names : list of str, optional
        Coordinate names.
    """

    def __init__(self, values, observed=None, names=None):
        values = np.array(values, dtype=float, ndmin=2)
        if values.shape[0] == 0:
            raise EmptyInput("dataset has no records")
        if observed is None:
            observed = np.isfinite(values)
        observed = np.array(observed, dtype=bool)
        if observed.shape != values.shape:
            raise ValueError("mask shape does not match values")
        if not np.all(np.isfinite(values[observed])):
            raise ValueError("observed entries must be finite")
        empty = np.flatnonzero(~observed.any(axis=1))
        if empty.size:
            raise ValueError(f"record {empty[0]} has no observed coordinate")
        values[~observed] = np.nan
        values.setflags(write=False)
        observed.setflags(write=False)
        self.values = values
        self.observed = observed
        self.names = list(names) if names is not None else [f"x{j + 1}" for j in range(values.shape[1])]
        if len(self.names) != values.shape[1]:
            raise ValueError("names must match the number of columns")

    @classmethod
    def from_complete(cls, X, names=None):
        return cls(X, np.ones(np.shape(X), dtype=bool), names)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def __len__(self):
        return self.n

    @property
    def complete_mask(self):
        return self.observed.all(axis=1)

    @property
    def complete_fraction(self):
        return float(self.complete_mask.mean())

    @property
    def missing_rate(self):
        """Fraction of records with at least one missing coordinate."""
        return 1.0 - self.complete_fraction

    def complete_rows(self):
        return np.array(self.values[self.complete_mask])

    def record(self, i):
        return IncompleteRecord(self.values[i], self.observed[i])

    def check_support(self, model):
        obs = self.values[self.observed]
        if model.support == "nonneg_orthant" and np.any(obs < 0):
            raise OutOfSupport("observed values outside the nonnegative orthant")

    def subset(self, rows):
        return IncompleteDataset(self.values[rows], self.observed[rows], self.names)


# -- mechanisms ------------------------------------------------------------
class MissingMechanism:
    """Base class; ``observe_prob`` gives per-coordinate observation probabilities."""

    def coords_used(self):
        return ()

    def validate(self, d):
        for c in self.coords_used():
            if not 0 <= c < d:
                raise BadMechanism(f"coordinate {c} out of range for dimension {d}")

    def observe_prob(self, X, rng=None):
        raise NotImplementedError


class MCAR(MissingMechanism):
    """Each coordinate in ``coords`` is missing independently with probability ``p``."""

    def __init__(self, p, coords):
        if not 0 <= p < 1:
            raise BadMechanism("p must lie in [0, 1)")
        self.p = float(p)
        self.coords = tuple(int(c) for c in np.atleast_1d(coords))

    def coords_used(self):
        return self.coords

    def validate(self, d):
        super().validate(d)
        if len(set(self.coords)) >= d:
            raise BadMechanism("MCAR over every coordinate can remove whole records")

    def observe_prob(self, X, rng=None):
        P = np.ones_like(X, dtype=float)
        P[:, list(self.coords)] = 1.0 - self.p
        return P


class LogisticMAR(MissingMechanism):
    """``Pr(target observed | x) = expit((w . x_drivers - offset) / scale)``.

    The target coordinate never enters the probability.
    """

    def __init__(self, target, drivers, weights=None, offset=0.0, scale=1.0):
        self.target = int(target)
        self.drivers = tuple(int(c) for c in np.atleast_1d(drivers))
        self.weights = np.ones(len(self.drivers)) if weights is None else np.atleast_1d(
            np.asarray(weights, dtype=float))
        if self.target in self.drivers:
            raise BadMechanism("a MAR mechanism cannot read its target coordinate")
        if len(self.weights) != len(self.drivers):
            raise BadMechanism("one weight per driver coordinate is required")
        if not scale > 0:
            raise BadMechanism("scale must be positive")
        self.offset = float(offset)
        self.scale = float(scale)

    def coords_used(self):
        return (self.target,) + self.drivers

    def observe_prob(self, X, rng=None):
        P = np.ones_like(X, dtype=float)
        eta = (X[:, list(self.drivers)] @ self.weights - self.offset) / self.scale
        P[:, self.target] = expit(eta)
        return P


class LogisticMNAR(MissingMechanism):
    """``Pr(target observed | x) = expit((weight * x_target - offset) / scale)``."""

    def __init__(self, target, weight=1.0, offset=0.0, scale=1.0):
        if not scale > 0:
            raise BadMechanism("scale must be positive")
        self.target = int(target)
        self.weight = float(weight)
        self.offset = float(offset)
        self.scale = float(scale)

    def coords_used(self):
        return (self.target,)

    def observe_prob(self, X, rng=None):
        P = np.ones_like(X, dtype=float)
        P[:, self.target] = expit((self.weight * X[:, self.target] - self.offset) / self.scale)
        return P


class GGMRandomLogistic(MissingMechanism):
    """Each target ``k`` is missing with probability ``1 / (base + exp(c_k . x))``.

    ``c_k`` is zero on the targets and standard normal elsewhere; when
    ``coefs`` is not given it is drawn from the generator passed to
    :meth:`observe_prob` (so a fresh draw per replication).
    """

    def __init__(self, targets, base=3.0, coefs=None):
        self.targets = tuple(int(t) for t in targets)
        if not base >= 1:
            raise BadMechanism("base must be at least 1 so probabilities stay below 1")
        self.base = float(base)
        self.coefs = None if coefs is None else np.asarray(coefs, dtype=float)

    def coords_used(self):
        return self.targets

    def draw_coefs(self, d, rng):
        C = rng.standard_normal((len(self.targets), d))
        C[:, list(self.targets)] = 0.0
        return C

    def observe_prob(self, X, rng=None):
        C = self.coefs
        if C is None:
            if rng is None:
                raise BadMechanism("random coefficients need a generator")
            C = self.draw_coefs(X.shape[1], rng)
        if np.any(C[:, list(self.targets)] != 0):
            raise BadMechanism("coefficients on target coordinates must be zero")
        P = np.ones_like(X, dtype=float)
        P[:, list(self.targets)] = 1.0 - 1.0 / (self.base + np.exp(X @ C.T))
        return P


def apply_missingness(complete_data, mech, rng_seed, names=None):
    """Mask ``complete_data`` according to ``mech``; deterministic given the seed."""
    X = np.array(complete_data, dtype=float, ndmin=2)
    mech.validate(X.shape[1])
    rng = np.random.default_rng(rng_seed)
    P = mech.observe_prob(X, rng)
    observed = rng.random(X.shape) < P
    return IncompleteDataset(X, observed, names)


# -- CSV ---------------------------------------------------------------------
def read_csv(path):
    """Read a dataset with a header row; empty cells and ``NA`` mean missing."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ValueError(f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
            try:
                rows.append([np.nan if cell.strip() in MISSING_TOKENS else float(cell)
                             for cell in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise EmptyInput(f"{path}: no records")
    values = np.array(rows)
    return IncompleteDataset(values, ~np.isnan(values), [n.strip() for n in names])


def write_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.names)
        for vals, obs in zip(dataset.values, dataset.observed):
            writer.writerow([repr(float(v)) if o else "" for v, o in zip(vals, obs)])
