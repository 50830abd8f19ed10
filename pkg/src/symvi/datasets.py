"""Observation tables consumed by the Bayesian-model targets.

Fixtures are JSON objects of the form
``{"name": str, "columns": {name: [numbers]}, "provenance": str}``.
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import expit

__all__ = [
    "DatasetFixture",
    "MissingColumn",
    "WrongLength",
    "load_fixture",
    "load_builtin",
    "save_fixture",
    "synthetic_logistic",
    "synthetic_binomial_glm",
    "LOGISTIC_TRUE_BETA",
]

# Coefficients used to simulate the logistic-regression data sets.
LOGISTIC_TRUE_BETA = (0.5, -0.8, 1.2)


class MissingColumn(KeyError):
    pass


class WrongLength(ValueError):
    pass


@dataclass(frozen=True)
class DatasetFixture:
    name: str
    columns: dict = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        cols = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise WrongLength(f"columns of {self.name!r} have unequal lengths {sorted(lengths)}")
        for v in cols.values():
            v.setflags(write=False)
        object.__setattr__(self, "columns", cols)

    @property
    def n_rows(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def require(self, *names, length=None):
        for name in names:
            if name not in self.columns:
                raise MissingColumn(f"dataset {self.name!r} lacks column {name!r}")
        if length is not None and self.n_rows != length:
            raise WrongLength(f"dataset {self.name!r} has {self.n_rows} rows, expected {length}")

    def __getitem__(self, name):
        self.require(name)
        return self.columns[name]

    def to_dict(self):
        return {
            "name": self.name,
            "columns": {k: v.tolist() for k, v in self.columns.items()},
            "provenance": self.provenance,
        }


def load_fixture(path):
    with open(path) as fh:
        raw = json.load(fh)
    return DatasetFixture(raw["name"], raw["columns"], raw.get("provenance", ""))


def save_fixture(fixture, path):
    Path(path).write_text(json.dumps(fixture.to_dict(), indent=2) + "\n")


def load_builtin(name):
    """Load one of the JSON fixtures shipped in ``symvi/data``."""
    ref = resources.files("symvi") / "data" / f"{name}.json"
    with resources.as_file(ref) as path:
        return load_fixture(path)


def synthetic_logistic(n, seed=20240521, beta=LOGISTIC_TRUE_BETA):
    """Simulate ``n`` rows with ``x1, x2 ~ N(0, 1)`` and ``y ~ Bernoulli(logit^-1(b0 + b1 x1 + b2 x2))``.

    Each size draws from its own stream seeded by ``(seed, n)``, so data sets
    of different sizes are independent rather than nested.
    """
    rng = np.random.default_rng([seed, n])
    x = rng.standard_normal((n, 2))
    eta = beta[0] + x @ np.asarray(beta[1:])
    y = (rng.random(n) < expit(eta)).astype(float)
    return DatasetFixture(
        f"logistic_n{n}",
        {"y": y, "x1": x[:, 0], "x2": x[:, 1]},
        f"synthetic: x ~ N(0, I), beta* = {tuple(beta)}, seed = [{seed}, {n}]",
    )


def synthetic_binomial_glm(n_years=40, seed=1964, coef=(0.9, -0.4, -0.25)):
    """Brood-success style binomial data on a standardized year covariate."""
    rng = np.random.default_rng(seed)
    years = np.arange(n_years, dtype=float)
    ye = (years - years.mean()) / years.std()
    trials = rng.poisson(30.0, n_years).astype(float)
    p = expit(coef[0] + coef[1] * ye + coef[2] * ye**2)
    successes = rng.binomial(trials.astype(int), p).astype(float)
    return DatasetFixture(
        "binomial_glm",
        {"N": trials, "C": successes, "ye": ye},
        f"synthetic: N ~ Poisson(30), C ~ Binomial(N, logit^-1(a + b1 ye + b2 ye^2)), "
        f"(a, b1, b2) = {coef}, seed = {seed}",
    )
