"""Quality-conditioned Gaussian calibration of detector logits.

For each class ``j`` the logit given normalized quality ``q`` is modelled as
``N(mu_j(q), sigma_j^2(q))`` with ``mu_j(q) = a_j q + b_j`` and
``log sigma_j^2(q) = alpha_j q + beta_j``. The corrected logit of an instance
is the log-likelihood ratio of the two class models at its (logit, quality)
point, and a query set is classified by the sign of the summed corrected
logits.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import InputError, NumericalError
from .types import Dataset, FusedScore, Label, QuerySet

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
LOG_VARIANCE_FLOOR = math.log(VARIANCE_FLOOR)
MODEL_SCHEMA = "quadcal.calibration-model"
MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ClassCoefficients:
    a: float
    b: float
    alpha: float
    beta: float
    a2: Optional[float] = None

    def __post_init__(self):
        vals = [self.a, self.b, self.alpha, self.beta] + ([] if self.a2 is None else [self.a2])
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"non-finite coefficients: {vals}")
        # variance at the two ends of q in [0, 1] bounds it everywhere in between
        if max(self.beta, self.alpha + self.beta) > 700:
            raise InputError("implied variance overflows on q in [0, 1]")

    @property
    def theta(self) -> np.ndarray:
        t = [self.a, self.b, self.alpha, self.beta]
        if self.a2 is not None:
            t.append(self.a2)
        return np.array(t, dtype=float)

    @classmethod
    def from_theta(cls, theta) -> "ClassCoefficients":
        theta = [float(x) for x in theta]
        return cls(*theta[:4], a2=theta[4] if len(theta) > 4 else None)

    def to_dict(self) -> dict[str, float]:
        d = {"a": self.a, "b": self.b, "alpha": self.alpha, "beta": self.beta}
        if self.a2 is not None:
            d["a2"] = self.a2
        return d


@dataclass(frozen=True)
class CalibrationModel:
    real: ClassCoefficients
    fake: ClassCoefficients
    q_min: float
    q_max: float
    model_order: int = 1
    fit_meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.q_min) and math.isfinite(self.q_max)) or self.q_min >= self.q_max:
            raise InputError(f"need finite q_min < q_max, got {self.q_min}, {self.q_max}")
        if self.model_order not in (1, 2):
            raise InputError(f"model_order must be 1 or 2, got {self.model_order}")
        for c in (self.real, self.fake):
            if (c.a2 is not None) != (self.model_order == 2):
                raise InputError("quadratic coefficient must be present iff model_order == 2")

    def coefficients(self, label: Label) -> ClassCoefficients:
        return self.fake if label == Label.FAKE else self.real

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": MODEL_SCHEMA,
            "schema_version": MODEL_SCHEMA_VERSION,
            "model_order": self.model_order,
            "q_min": self.q_min,
            "q_max": self.q_max,
            "real": self.real.to_dict(),
            "fake": self.fake.to_dict(),
            "fit_meta": self.fit_meta,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CalibrationModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise InputError(f"not a calibration model document (schema={d.get('schema')!r})")
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise InputError(f"unsupported model schema_version {d.get('schema_version')!r}")
        try:
            return cls(
                real=ClassCoefficients(**d["real"]),
                fake=ClassCoefficients(**d["fake"]),
                q_min=float(d["q_min"]),
                q_max=float(d["q_max"]),
                model_order=int(d["model_order"]),
                fit_meta=dict(d.get("fit_meta", {})),
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed calibration model: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CalibrationModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc


@dataclass(frozen=True)
class FitConfig:
    model_order: int = 1
    init_eps: float = 1e-12
    maxiter: int = 1000
    gtol: float = 1e-10
    ftol: float = 1e-15


def normalize_quality(q, model: CalibrationModel):
    """Min-max normalize raw quality with the model's dev-set range, clamped to [0, 1].

    Accepts a scalar or an array; non-finite input raises :class:`InputError`.
    """
    arr = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError("quality must be finite")
    out = np.clip((arr - model.q_min) / (model.q_max - model.q_min), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def class_stats(q_norm: float, c: ClassCoefficients) -> tuple[float, float]:
    """Mean and standard deviation of one class's logit at normalized quality ``q_norm``."""
    if not math.isfinite(q_norm):
        raise InputError("q_norm must be finite")
    mu = c.a * q_norm + c.b
    if c.a2 is not None:
        mu += c.a2 * q_norm * q_norm
    s = max(c.alpha * q_norm + c.beta, LOG_VARIANCE_FLOOR)
    return mu, math.exp(0.5 * s)


def corrected_logit(l: float, q_norm: float, model: CalibrationModel) -> float:
    mu0, sd0 = class_stats(q_norm, model.real)
    mu1, sd1 = class_stats(q_norm, model.fake)
    return (l - mu0) ** 2 / (2 * sd0**2) - (l - mu1) ** 2 / (2 * sd1**2) + math.log(sd0 / sd1)


def corrected_logits(logits, qualities, model: CalibrationModel) -> np.ndarray:
    """Vectorized corrected logits for raw (unnormalized) qualities."""
    qn = np.atleast_1d(normalize_quality(qualities, model))
    return kernels.corrected_logits(
        np.atleast_1d(np.asarray(logits, dtype=float)), qn,
        model.real.theta, model.fake.theta, LOG_VARIANCE_FLOOR,
    )


def fuse_corrected(qs: QuerySet, model: CalibrationModel) -> FusedScore:
    if len(qs.instances) == 0:
        raise InputError(f"query set {qs.source_id!r} has no instances")
    per = corrected_logits(qs.logits, qs.qualities, model)
    # fsum is correctly rounded, so the score does not depend on instance order
    return FusedScore.from_score(math.fsum(per), per.tolist())


def class_nll(theta, l, q_norm) -> float:
    """Per-class negative log-likelihood, constant terms dropped."""
    return kernels.nll_and_grad(l, q_norm, theta, LOG_VARIANCE_FLOOR)[0]


def class_nll_grad(theta, l, q_norm) -> np.ndarray:
    return kernels.nll_and_grad(l, q_norm, theta, LOG_VARIANCE_FLOOR)[1]


def _design(q, order):
    cols = [q, np.ones_like(q)]
    if order == 2:
        cols.append(q * q)
    return np.column_stack(cols)


def initial_theta(l, q_norm, order: int = 1, eps: float = 1e-12) -> np.ndarray:
    """Closed-form warm start: OLS for the mean, then OLS of log squared residuals."""
    X = _design(q_norm, order)
    mean_coef, *_ = np.linalg.lstsq(X, l, rcond=None)
    resid = l - X @ mean_coef
    var_coef, *_ = np.linalg.lstsq(_design(q_norm, 1), np.log(resid**2 + eps), rcond=None)
    theta = [mean_coef[0], mean_coef[1], var_coef[0], var_coef[1]]
    if order == 2:
        theta.append(mean_coef[2])
    return np.array(theta, dtype=float)


def fit_class(l, q_norm, config: FitConfig = FitConfig()) -> tuple[np.ndarray, dict[str, Any]]:
    """Maximum-likelihood coefficients for one class.

    Returns the parameter vector and a small dict of optimizer diagnostics.
    """
    l = np.ascontiguousarray(l, dtype=float)
    q_norm = np.ascontiguousarray(q_norm, dtype=float)
    n = len(l)
    theta0 = initial_theta(l, q_norm, config.model_order, config.init_eps)
    nll0 = class_nll(theta0, l, q_norm)

    def objective(theta):
        v, g = kernels.nll_and_grad(l, q_norm, theta, LOG_VARIANCE_FLOOR)
        return v / n, g / n

    res = minimize(
        objective, theta0, jac=True, method="L-BFGS-B",
        options={"maxiter": config.maxiter, "gtol": config.gtol, "ftol": config.ftol},
    )
    theta = np.asarray(res.x, dtype=float)
    nll = class_nll(theta, l, q_norm)
    if not (np.all(np.isfinite(theta)) and math.isfinite(nll)):
        raise NumericalError(f"likelihood optimization diverged: theta={theta}, nll={nll}")
    if nll > nll0:
        theta, nll = theta0, nll0
    return theta, {
        "n": n,
        "nll_init": nll0,
        "nll": nll,
        "iterations": int(res.nit),
        "converged": bool(res.success),
    }


def _class_arrays(dev: Dataset):
    by_class: dict[Label, tuple[list, list]] = {Label.REAL: ([], []), Label.FAKE: ([], [])}
    for qs in dev.sets:
        for rec in qs.instances:
            label = rec.label if rec.label is not None else qs.label
            if label is None:
                raise InputError(f"fitting needs labels; ({rec.source_id}, {rec.instance_id}) has none")
            by_class[label][0].append(rec.logit)
            by_class[label][1].append(rec.quality)
    return {k: (np.array(v[0], dtype=float), np.array(v[1], dtype=float)) for k, v in by_class.items()}


def fit(dev: Dataset, config: FitConfig = FitConfig()) -> CalibrationModel:
    """Estimate both class models by maximum likelihood on a labeled development set."""
    if config.model_order not in (1, 2):
        raise InputError(f"model_order must be 1 or 2, got {config.model_order}")
    arrays = _class_arrays(dev)
    for label, (l, q) in arrays.items():
        if len(l) == 0:
            raise InputError(f"development set has no {label.name.lower()} instances")
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(q))):
            raise InputError("development set contains non-finite logits or qualities")
        if len(np.unique(q)) < 2:
            raise InputError(f"{label.name.lower()} class needs at least 2 distinct quality values")
    all_q = np.concatenate([arrays[Label.REAL][1], arrays[Label.FAKE][1]])
    q_min, q_max = float(all_q.min()), float(all_q.max())
    if q_min == q_max:
        raise InputError("degenerate quality range on development set")

    coefs, meta = {}, {}
    for label, (l, q) in arrays.items():
        qn = np.clip((q - q_min) / (q_max - q_min), 0.0, 1.0)
        theta, diag = fit_class(l, qn, config)
        coefs[label] = ClassCoefficients.from_theta(theta)
        meta[label.name.lower()] = diag
        log.debug("fitted %s: theta=%s nll=%.6g iters=%d", label.name, theta, diag["nll"], diag["iterations"])

    meta["n_sources"] = len(dev.sets)
    meta["backend"] = kernels.BACKEND
    return CalibrationModel(
        real=coefs[Label.REAL], fake=coefs[Label.FAKE],
        q_min=q_min, q_max=q_max, model_order=config.model_order, fit_meta=meta,
    )


def loo_fit(ds: Dataset, holdout_source: str, config: FitConfig = FitConfig()) -> CalibrationModel:
    """Fit on every query set except ``holdout_source``."""
    if holdout_source not in set(ds.source_ids):
        raise InputError(f"holdout source {holdout_source!r} not in dataset")
    rest = ds.exclude([holdout_source])
    if len(rest.sets) == 0:
        raise InputError("nothing left to fit after holding out the only source")
    return fit(rest, config)
