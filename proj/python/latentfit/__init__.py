"""Approximate Bayesian inference for latent Gaussian models.

``fit`` takes a model spec (text in the ``[model]/[data]/[component]`` format)
and a column mapping (dict of sequences or a pandas DataFrame).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import _core
from ._core import LatentfitError, SpecError, canonical_spec, expected_poisson_loglik

__all__ = [
    "FitResult",
    "LatentfitError",
    "SpecError",
    "augment_cox",
    "canonical_spec",
    "expected_poisson_loglik",
    "fit",
    "simulate",
]

SUMMARY_COLUMNS = ("mean", "sd", "q025", "q50", "q975")


def _columns(data: Any) -> dict[str, list[float]]:
    if hasattr(data, "to_dict") and hasattr(data, "columns"):
        data = {str(c): data[c] for c in data.columns}
    return {str(k): np.asarray(v, dtype=float).tolist() for k, v in dict(data).items()}


@dataclass
class FitResult:
    labels: list[str]
    latent: np.ndarray
    """Rows follow ``labels``; columns are ``SUMMARY_COLUMNS``."""
    linpred: np.ndarray
    hyper: list[dict[str, Any]]
    report: dict[str, Any] = field(default_factory=dict)

    def summary(self, label: str) -> dict[str, float]:
        row = self.latent[self.labels.index(label)]
        return dict(zip(SUMMARY_COLUMNS, map(float, row)))

    @property
    def converged(self) -> bool:
        return bool(self.report["all_converged"])


def fit(
    spec: str,
    data: Mapping[str, Sequence[float]] | Any,
    *,
    strategy: str = "vb",
    int_strategy: str = "grid",
    mode: str = "modern",
    threads: int = 1,
    fixed_theta: Sequence[float] | None = None,
    vb_nodes: Sequence[int] | None = None,
) -> FitResult:
    raw = _core.fit(
        spec,
        _columns(data),
        strategy=strategy,
        int_strategy=int_strategy,
        mode=mode,
        threads=threads,
        fixed_theta=None if fixed_theta is None else np.asarray(fixed_theta, dtype=float),
        vb_nodes=None if vb_nodes is None else [int(i) for i in vb_nodes],
    )
    return FitResult(
        labels=list(raw["labels"]),
        latent=np.asarray(raw["latent"]),
        linpred=np.asarray(raw["linpred"]),
        hyper=list(raw["hyper"]),
        report=dict(raw["report"]),
    )


def simulate(kind: str, n: int, *, items: int = 20, beta: float = 0.1, seed: int = 1):
    """Returns (columns, spec text); the spec is empty for ``cox``, see ``augment_cox``."""
    columns, spec = _core.simulate(kind, n, items=items, beta=beta, seed=seed)
    return {k: np.asarray(v) for k, v in columns.items()}, spec


def augment_cox(time, event, covariates: Mapping[str, Sequence[float]], bins: int, baseline: str = "rw1"):
    """Poisson rows for a piecewise-exponential model plus the matching spec text."""
    columns, spec = _core.augment_cox(
        np.asarray(time, dtype=float).tolist(),
        np.asarray(event, dtype=float).tolist(),
        _columns(covariates),
        bins,
        baseline,
    )
    return {k: np.asarray(v) for k, v in columns.items()}, spec
