"""Experiment definition files (YAML) and their translation into objects.

Unknown keys are rejected everywhere. Relative paths are resolved against the
directory containing the config file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import GaussianBelief, ItemDistribution, ProblemInstance, l1_normalize
from .dp import SolverSettings
from .errors import ConfigurationError
from .policies import PolicyConfig, PolicyKind
from .prior_fit import build_prior, fit_user_preferences, load_items, load_ratings
from .simulator import ALPHA_GRID, BoundConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FitFromData(_Strict):
    items: str
    ratings: str
    ridge: float = Field(0.0, ge=0)
    evaluate_on_fitted_users: bool = False


class PriorBlock(_Strict):
    mean: float | list[float] | None = None
    covariance: list[list[float]] | None = None
    variance: float | None = Field(None, ge=0)
    fit_from_data: FitFromData | None = None

    @model_validator(mode="after")
    def _one_source(self):
        inline = self.mean is not None or self.covariance is not None or self.variance is not None
        if inline and self.fit_from_data is not None:
            raise ValueError("give either an inline prior (mean/covariance) or fit_from_data, not both")
        if not inline and self.fit_from_data is None:
            raise ValueError("a prior source is required: inline mean/covariance or fit_from_data")
        if inline:
            if self.mean is None:
                raise ValueError("inline prior needs a mean")
            if (self.covariance is None) == (self.variance is None):
                raise ValueError("inline prior needs exactly one of covariance or variance")
        return self


class CatalogEntry(_Strict):
    vector: list[float]
    probability: float = Field(ge=0)


class BasisBlock(_Strict):
    default_weight: float = Field(1.0, ge=0)
    weights: dict[int, float] = Field(default_factory=dict)


class ItemsBlock(_Strict):
    catalog: list[CatalogEntry] | None = None
    basis: BasisBlock | None = None
    csv: str | None = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [n for n in ("catalog", "basis", "csv") if getattr(self, n) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one item source (catalog, basis, csv) is required, got {given or 'none'}")
        return self


class InstanceBlock(_Strict):
    k: int | None = Field(None, ge=1)
    cost: float | None = None
    costs: list[float] | None = None
    discount: float | None = Field(None, gt=0, lt=1)
    arrival_rate: float | None = Field(None, gt=0)
    lifetime_rate: float | None = Field(None, gt=0)
    noise_scale: float = Field(gt=0)
    horizon: int = Field(100, ge=1)
    prior: PriorBlock
    items: ItemsBlock

    @model_validator(mode="after")
    def _checks(self):
        if (self.cost is None) == (self.costs is None):
            raise ValueError("give exactly one of cost or costs")
        if self.costs is not None and not self.costs:
            raise ValueError("costs must be nonempty")
        rates = self.arrival_rate is not None or self.lifetime_rate is not None
        if rates and self.discount is not None:
            raise ValueError("give either discount or (arrival_rate, lifetime_rate), not both")
        if rates and (self.arrival_rate is None or self.lifetime_rate is None):
            raise ValueError("both arrival_rate and lifetime_rate are required")
        if not rates and self.discount is None:
            raise ValueError("discount (or arrival_rate and lifetime_rate) is required")
        return self

    @property
    def gamma(self):
        if self.discount is not None:
            return self.discount
        return self.arrival_rate / (self.arrival_rate + self.lifetime_rate)

    @property
    def cost_list(self):
        return list(self.costs) if self.costs is not None else [self.cost]


class PolicyBlock(_Strict):
    kind: PolicyKind
    alpha: float | None = Field(None, ge=0)


class GridBlock(_Strict):
    n_mu: int = Field(201, ge=3)
    n_beta: int = Field(64, ge=2)
    n_quad: int = Field(21, ge=1)
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(10_000, ge=1)
    width_sd: float = Field(6.0, gt=0)
    horizon_eps: float = Field(1e-3, gt=0, lt=1)
    focus_sd: float = Field(0.1, ge=0)
    expectation: Literal["exact", "quadrature"] = "exact"


class ExecutionBlock(_Strict):
    episodes: int = Field(2000, ge=2)
    tune_episodes: int | None = Field(None, ge=2)
    bound_samples: int = Field(1000, ge=1)
    hindsight_samples: int = Field(100_000, ge=1)
    alpha_grid: list[float] | None = None
    seed: int | None = Field(None, ge=0, lt=2**64)
    output: str | None = None
    workers: int = Field(1, ge=1)
    bins: int = Field(20, ge=1)
    grid: GridBlock = Field(default_factory=GridBlock)


class ExperimentConfig(_Strict):
    experiment: str = "experiment"
    instance: InstanceBlock
    policies: list[PolicyBlock] = Field(default_factory=list)
    execution: ExecutionBlock = Field(default_factory=ExecutionBlock)

    # filled in by parse_config
    base_dir: str = "."
    source_text: str = ""

    @property
    def seed(self):
        return self.execution.seed

    @property
    def solver_settings(self):
        return SolverSettings(**self.execution.grid.model_dump())

    @property
    def bound_config(self):
        ex = self.execution
        return BoundConfig(ex.bound_samples, ex.hindsight_samples, self.solver_settings,
                           ex.bins)

    @property
    def alpha_grid(self):
        ex = self.execution
        return tuple(ex.alpha_grid) if ex.alpha_grid else ALPHA_GRID

    def policy_configs(self, default_alpha=None):
        return [PolicyConfig(p.kind, p.alpha if p.alpha is not None else default_alpha,
                             self.solver_settings, self.execution.bins)
                for p in self.policies]

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _format_errors(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(path, seed=None, output=None):
    """Load and validate an experiment file.

    ``seed`` and ``output`` override the file's execution block. A seed is
    mandatory from one source or the other.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    for reserved in ("base_dir", "source_text"):
        if reserved in raw:
            raise ConfigurationError(f"{reserved}: extra inputs are not permitted")
    execution = dict(raw.get("execution") or {})
    if seed is not None:
        execution["seed"] = seed
    if output is not None:
        execution["output"] = str(output)
    raw = {**raw, "execution": execution,
           "base_dir": str(path.resolve().parent), "source_text": text}
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"{path}: {_format_errors(exc)}") from exc
    if cfg.execution.seed is None:
        raise ConfigurationError(f"{path}: execution.seed: a master seed is required")
    return cfg


# ----------------------------------------------------------------------------
# building objects


def build_items(cfg, k=None):
    block = cfg.instance.items
    if block.catalog is not None:
        vectors = [l1_normalize(e.vector, label=i) for i, e in enumerate(block.catalog)]
        probs = [e.probability for e in block.catalog]
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigurationError("instance.items.catalog: probabilities must sum to 1")
        return ItemDistribution.catalog(vectors, probs)
    if block.basis is not None:
        if k is None:
            raise ConfigurationError("instance.k is required for basis items")
        weights = np.full(k, block.basis.default_weight)
        for idx, w in block.basis.weights.items():
            if not 1 <= idx <= k:
                raise ConfigurationError(f"instance.items.basis.weights: index {idx} outside 1..{k}")
            weights[idx - 1] = w
        if not weights.sum() > 0:
            raise ConfigurationError("instance.items.basis: weights sum to zero")
        return ItemDistribution.from_weights(np.eye(k), weights)
    items = load_items(cfg.resolve(block.csv))
    return ItemDistribution.empirical_from([items[i] for i in sorted(items)])


def fit_prior(cfg):
    """(prior, fitted users) from the fit_from_data block."""
    fit = cfg.instance.prior.fit_from_data
    if fit is None:
        raise ConfigurationError("instance.prior.fit_from_data is required")
    data = load_ratings(cfg.resolve(fit.items), cfg.resolve(fit.ratings))
    users = fit_user_preferences(data, fit.ridge)
    return build_prior(users), users


def build_instance(cfg):
    """(instance at the first cost, cost list, evaluation θ list or None)."""
    inst = cfg.instance
    thetas = None
    if inst.prior.fit_from_data is not None:
        prior, users = fit_prior(cfg)
        if inst.prior.fit_from_data.evaluate_on_fitted_users:
            thetas = users.matrix()
    else:
        k = inst.k
        if isinstance(inst.prior.mean, list):
            k = k or len(inst.prior.mean)
        elif inst.prior.covariance is not None:
            k = k or len(inst.prior.covariance)
        if k is None:
            raise ConfigurationError("instance.k is required with a scalar prior mean")
        mean = np.broadcast_to(np.asarray(inst.prior.mean, dtype=float), (k,))
        if inst.prior.covariance is not None:
            cov = np.asarray(inst.prior.covariance, dtype=float)
        else:
            cov = inst.prior.variance * np.eye(k)
        if cov.shape != (k, k) or mean.shape != (k,):
            raise ConfigurationError(f"instance.prior: shapes do not match k={k}")
        prior = GaussianBelief(mean, cov)
    if inst.k is not None and inst.k != prior.k:
        raise ConfigurationError(f"instance.k={inst.k} but prior has dimension {prior.k}")
    items = build_items(cfg, prior.k)
    costs = inst.cost_list
    instance = ProblemInstance(costs[0], inst.gamma, inst.noise_scale, prior, items,
                               inst.horizon, name=cfg.experiment)
    return instance, costs, thetas
