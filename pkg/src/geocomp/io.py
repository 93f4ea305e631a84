"""File formats: dataset CSV ingestion and the JSON fit-file.

CSV is RFC-4180 with a header, UTF-8, '.' decimal; numeric output carries
17 significant digits so files round-trip losslessly. The fit-file stores
everything needed to predict without re-estimation, plus uncertainty on
both the variance and standard deviation scales, diagnostics, and the exact
option set used.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict

import numpy as np
import pandas as pd
from jsonschema import validate as _validate_schema

from .data import GeoDataset
from .mle import FitOptions, FitResult, ModelParams, lambda_names
from .spatial import CorrelationFamily, CovarianceParams, SpatialLocations

__all__ = [
    "read_dataset",
    "write_dataset",
    "save_fitfile",
    "load_fitfile",
    "fitfile_payload",
    "fmt",
    "FITFILE_SCHEMA",
    "FITFILE_FORMAT",
]

FITFILE_FORMAT = "geocomp-fit/1"

CLOSURE_WARN_TOL = 1e-6


def fmt(v: float) -> str:
    """Full-precision decimal rendering (17 significant digits)."""
    return f"{float(v):.17g}"


def read_dataset(
    path,
    parts: list[str] | None = None,
    denominator: str | int | None = None,
) -> GeoDataset:
    """Load a dataset CSV: x, y coordinates then composition columns.

    All non-coordinate columns are treated as composition parts unless
    ``parts`` names a subset (remaining columns are carried along as
    covariate columns but ignored by the intercept-only CLI fits). Rows are
    re-normalized to unit sum; a warning reports how many rows deviated by
    more than 1e-6.
    """
    frame = pd.read_csv(path)
    for col in ("x", "y"):
        if col not in frame.columns:
            raise ValueError(f"dataset is missing required coordinate column {col!r}")
    part_cols = [c for c in frame.columns if c not in ("x", "y")] if parts is None else list(parts)
    if not part_cols or len(part_cols) < 2:
        raise ValueError("dataset needs at least two composition columns")
    missing = [c for c in part_cols if c not in frame.columns]
    if missing:
        raise ValueError(f"dataset is missing composition column(s) {missing}")
    if frame[["x", "y", *part_cols]].isna().any().any():
        raise ValueError("dataset contains missing values")

    raw = frame[part_cols].to_numpy(dtype=float)
    bad = np.argwhere(~(raw > 0.0))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"composition column {part_cols[j]!r} has a nonpositive value in row {i}")
    drift = np.abs(raw.sum(axis=1) - 1.0)
    if np.any(drift > CLOSURE_WARN_TOL):
        warnings.warn(
            f"{int((drift > CLOSURE_WARN_TOL).sum())} row(s) deviate from unit sum by more than "
            f"{CLOSURE_WARN_TOL:g}; re-normalizing",
            UserWarning,
        )
    closed = raw / raw.sum(axis=1, keepdims=True)
    closed = closed / closed.sum(axis=1, keepdims=True)

    denom_idx: int | None
    if denominator is None:
        denom_idx = None
    elif isinstance(denominator, str):
        if denominator not in part_cols:
            raise ValueError(f"denominator part {denominator!r} is not a composition column")
        denom_idx = part_cols.index(denominator)
    else:
        denom_idx = int(denominator)

    return GeoDataset(
        SpatialLocations(frame[["x", "y"]].to_numpy(dtype=float)),
        closed,
        part_names=tuple(part_cols),
        denominator=denom_idx,
    )


def write_dataset(path, dataset: GeoDataset) -> None:
    """Write a dataset CSV with full-precision values."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", *dataset.part_names])
        for xy, row in zip(dataset.locations.coords, dataset.parts):
            writer.writerow([fmt(xy[0]), fmt(xy[1]), *(fmt(v) for v in row)])


_NUM = {"type": "number"}
_NUM_ARRAY = {"type": "array", "items": _NUM}

FITFILE_SCHEMA = {
    "type": "object",
    "required": ["format", "model", "estimates", "diagnostics", "options"],
    "properties": {
        "format": {"const": FITFILE_FORMAT},
        "model": {
            "type": "object",
            "required": ["family", "smoothness", "parts", "denominator", "stacking"],
            "properties": {
                "family": {"enum": ["exponential", "spherical", "matern"]},
                "smoothness": _NUM,
                "parts": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "denominator": {"type": "string"},
                "stacking": {"const": "component-major"},
                "beta_information": {"type": "string"},
            },
        },
        "estimates": {
            "type": "object",
            "required": ["beta", "sigma2", "tau2", "phi", "rho", "loglik"],
            "properties": {
                "beta": _NUM_ARRAY,
                "beta_names": {"type": "array", "items": {"type": "string"}},
                "beta_se": _NUM_ARRAY,
                "sigma2": _NUM_ARRAY,
                "tau2": _NUM_ARRAY,
                "phi": _NUM,
                "rho": _NUM_ARRAY,
                "lambda_se": _NUM_ARRAY,
                "loglik": _NUM,
                "sd_scale": {"type": "object"},
                "wald_ci": {"type": "object"},
                "ci_level": _NUM,
            },
        },
        "diagnostics": {
            "type": "object",
            "required": ["converged", "iterations", "gradient_norm"],
            "properties": {
                "converged": {"type": "boolean"},
                "iterations": {"type": "integer"},
                "gradient_norm": _NUM,
                "se_unreliable": {"type": "boolean"},
                "notes": {"type": "array", "items": {"type": "string"}},
            },
        },
        "options": {"type": "object"},
    },
}


def fitfile_payload(fitted: FitResult) -> dict:
    """JSON-ready dictionary for a fit (lossless float round-trip)."""
    cov = fitted.params.cov
    sd_rows = fitted.sd_scale_rows()
    payload = {
        "format": FITFILE_FORMAT,
        "model": {
            "family": fitted.family.family,
            "smoothness": fitted.family.smoothness,
            "parts": list(fitted.part_names),
            "denominator": fitted.part_names[fitted.denominator],
            "stacking": "component-major",
            "beta_information": fitted.beta_information,
        },
        "estimates": {
            "beta": [float(b) for b in fitted.params.beta],
            "beta_names": list(fitted.beta_names),
            "beta_se": [float(s) for s in fitted.beta_se],
            "beta_cov": fitted.beta_cov.tolist(),
            "sigma2": cov.sigma2.tolist(),
            "tau2": cov.tau2.tolist(),
            "phi": float(cov.phi),
            "rho": cov.rho.tolist(),
            "lambda_se": [float(s) for s in fitted.lambda_se],
            "sd_scale": {name: {"estimate": est, "se": se} for name, est, se in sd_rows},
            "wald_ci": {name: list(ci) for name, ci in fitted.wald_ci().items()},
            "ci_level": fitted.ci_level,
            "loglik": float(fitted.loglik),
        },
        "diagnostics": {
            "converged": fitted.converged,
            "iterations": fitted.iterations,
            "gradient_norm": float(fitted.gradient_norm),
            "se_unreliable": fitted.se_unreliable,
            "notes": list(fitted.notes),
            "obs_info": None if fitted.obs_info is None else np.asarray(fitted.obs_info).tolist(),
        },
        "options": asdict(fitted.options),
    }
    return payload


def save_fitfile(path, fitted: FitResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fitfile_payload(fitted), fh, indent=2, allow_nan=True)
        fh.write("\n")


def load_fitfile(path) -> FitResult:
    """Reconstruct a FitResult from a fit-file (validates the schema)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    _validate_schema(doc, FITFILE_SCHEMA)
    model = doc["model"]
    est = doc["estimates"]
    diag = doc["diagnostics"]
    parts = tuple(model["parts"])
    cov = CovarianceParams(
        sigma2=np.array(est["sigma2"], dtype=float),
        tau2=np.array(est["tau2"], dtype=float),
        phi=float(est["phi"]),
        rho=np.array(est["rho"], dtype=float),
    )
    fam = CorrelationFamily(model["family"], model["smoothness"])
    obs_info = diag.get("obs_info")
    return FitResult(
        params=ModelParams(beta=np.array(est["beta"], dtype=float), cov=cov),
        family=fam,
        denominator=parts.index(model["denominator"]),
        part_names=parts,
        loglik=float(est["loglik"]),
        beta_names=tuple(est.get("beta_names", ())),
        beta_se=np.array(est.get("beta_se", []), dtype=float),
        beta_cov=np.array(est.get("beta_cov", []), dtype=float),
        lambda_se=np.array(est.get("lambda_se", [np.nan] * len(lambda_names(cov.n_components))), dtype=float),
        obs_info=None if obs_info is None else np.array(obs_info, dtype=float),
        converged=bool(diag["converged"]),
        iterations=int(diag["iterations"]),
        gradient_norm=float(diag["gradient_norm"]),
        se_unreliable=bool(diag.get("se_unreliable", False)),
        notes=tuple(diag.get("notes", ())),
        ci_level=float(est.get("ci_level", 0.95)),
        options=FitOptions(**doc["options"]),
    )
