"""Strict JSON run configuration.

Unknown keys are rejected with a close-match suggestion; validation errors
name the offending field as a dotted path such as ``experiment.N``.
"""
from __future__ import annotations

import difflib
import json
import os
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .simulate import LatentSpec, NoiseSpec, PolicySpec

__all__ = [
    "LatentBlock",
    "NoiseBlock",
    "PolicyBlock",
    "ExperimentBlock",
    "EstimatorBlock",
    "ReplicationBlock",
    "OutputBlock",
    "RunConfig",
    "BoundConfig",
    "load_config",
    "parse_config",
    "load_bound_config",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LatentBlock(_Strict):
    kind: Literal["discrete", "continuous"] = "discrete"
    d: int = Field(2, ge=1)
    M: int = Field(5, ge=1)
    c_u: Optional[float] = Field(None, gt=0)
    c_v: Optional[float] = Field(None, gt=0)
    shared_across_actions: bool = True
    support: Union[Literal["ring", "random"], List[List[float]]] = "ring"
    radius: float = Field(1.0, gt=0)
    time_dist: Literal["uniform-cube", "symmetric-cube", "sphere"] = "symmetric-cube"

    def spec(self) -> LatentSpec:
        sup = self.support if isinstance(self.support, str) else tuple(map(tuple, self.support))
        return LatentSpec(self.kind, self.d, self.M, self.c_u, self.c_v,
                          self.shared_across_actions, sup, self.radius, self.time_dist)


class NoiseBlock(_Strict):
    sigma: float = Field(1.0, ge=0)
    c_eps: Optional[float] = Field(None, ge=0)
    distribution: Literal["truncated-normal", "uniform", "rademacher-scaled"] = "truncated-normal"

    def spec(self) -> NoiseSpec:
        return NoiseSpec(self.sigma, self.c_eps, self.distribution)


class PolicyBlock(_Strict):
    kind: Literal["constant", "epsilon-greedy-unit", "epsilon-greedy-pooled",
                  "thompson-pooled"] = "constant"
    p: float = Field(0.5, ge=0, le=1)
    p_action: int = Field(0, ge=0)
    probs: Optional[List[float]] = None
    beta: float = Field(0.25, ge=0)
    floor: float = Field(0.0, ge=0, le=1)
    prior_mean: float = 0.0
    prior_var: float = Field(1.0, gt=0)
    obs_var: float = Field(1.0, gt=0)

    def spec(self) -> PolicySpec:
        return PolicySpec(self.kind, self.p, self.p_action,
                          None if self.probs is None else tuple(self.probs),
                          self.beta, self.floor, self.prior_mean, self.prior_var, self.obs_var)


class ExperimentBlock(_Strict):
    N: int = Field(100, ge=1)
    T: int = Field(64, ge=1)
    actions: int = Field(2, ge=1)
    mean_fn: str = "bilinear"
    latent: LatentBlock = LatentBlock()
    noise: NoiseBlock = NoiseBlock()
    policy: PolicyBlock = PolicyBlock()

    @model_validator(mode="after")
    def _check(self):
        if self.policy.p_action >= self.actions:
            raise ValueError("policy.p_action must be a valid action index")
        if self.policy.probs is not None and len(self.policy.probs) != self.actions:
            raise ValueError("policy.probs must have one entry per action")
        return self


class EstimatorBlock(_Strict):
    action: int = Field(0, ge=0)
    eta_source: Literal["fixed", "tuned", "schedule"] = "tuned"
    eta: Optional[float] = Field(None, ge=0)
    schedule: Literal["discrete", "continuous-unit", "continuous-ate"] = "discrete"
    grid_k: int = Field(20, ge=1)
    cap: Optional[int] = Field(None, ge=1)
    K: Optional[int] = Field(None, ge=2)
    alpha: float = Field(0.05, gt=0, lt=1)
    ate_target: Literal["sample", "population"] = "sample"
    pi_samples: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.eta_source == "fixed" and self.eta is None:
            raise ValueError("eta is required when eta_source is 'fixed'")
        return self


class ReplicationBlock(_Strict):
    reps: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)


class OutputBlock(_Strict):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    summary_path: Optional[str] = None


class RunConfig(_Strict):
    experiment: ExperimentBlock = ExperimentBlock()
    estimator: EstimatorBlock = EstimatorBlock()
    replication: ReplicationBlock = ReplicationBlock()
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _check(self):
        if self.estimator.action >= self.experiment.actions:
            raise ValueError("estimator.action must be a valid action index")
        return self

    def normalized(self) -> dict:
        return self.model_dump(mode="json")


class BoundConfig(_Strict):
    """Inputs to the error-bound diagnostic."""

    c_u: float = Field(gt=0)
    c_v: float = Field(gt=0)
    c_eps: float = Field(ge=0)
    lambda_a: float = Field(gt=0)
    sigma_sq: float = Field(ge=0)
    delta: float = Field(gt=0, lt=1)
    pmin: List[float] = [1.0]
    big_c: float = Field(1.0, ge=0)
    N: int = Field(ge=2)
    T: int = Field(ge=1)
    t: Optional[int] = Field(None, ge=0)
    eta: Optional[float] = None
    schedule: Optional[Literal["discrete", "continuous-unit", "continuous-ate"]] = None
    beta: float = Field(0.0, ge=0)
    phi: Union[float, dict] = 1.0


def _suggest(model, loc) -> str:
    """Look up the sub-model at ``loc[:-1]`` and suggest a close field name for ``loc[-1]``."""
    cur = model
    for part in loc[:-1]:
        fld = getattr(cur, "model_fields", {}).get(part)
        if fld is None:
            return ""
        ann = fld.annotation
        cur = ann if isinstance(ann, type) and issubclass(ann, BaseModel) else None
        if cur is None:
            return ""
    names = list(getattr(cur, "model_fields", {}))
    hit = difflib.get_close_matches(str(loc[-1]), names, n=1)
    return f" (did you mean {hit[0]!r}?)" if hit else ""


def _format(err: ValidationError, model) -> str:
    lines = []
    for e in err.errors():
        loc = tuple(e["loc"])
        path = ".".join(str(x) for x in loc) or "<root>"
        msg = e["msg"]
        if e["type"] == "extra_forbidden":
            msg = "unknown key" + _suggest(model, loc)
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def _env_overrides(raw: dict) -> dict:
    raw = json.loads(json.dumps(raw))
    rep = raw.setdefault("replication", {})
    if not isinstance(rep, dict):
        return raw
    for env, key in (("SEQCF_SEED", "seed"), ("SEQCF_THREADS", "threads")):
        val = os.environ.get(env)
        if val not in (None, ""):
            try:
                rep[key] = int(val)
            except ValueError:
                raise ConfigError(f"{env} must be an integer, got {val!r}") from None
    return raw


def parse_config(raw: dict, env: bool = True) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if env:
        raw = _env_overrides(raw)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_format(e, RunConfig)) from None


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None


def load_config(path, env: bool = True) -> RunConfig:
    return parse_config(_read_json(path), env=env)


def load_bound_config(path) -> BoundConfig:
    raw = _read_json(path)
    try:
        return BoundConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_format(e, BoundConfig)) from None
